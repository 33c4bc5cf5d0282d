#include "raresight/kernels.hpp"

#include <algorithm>
#include <vector>

#include <omp.h>

#include "kernel_rows.hpp"

namespace raresight::kernels {

namespace {

int g_max_threads = 0;

Eigen::Index block_count(Eigen::Index n) { return (n + kBlockRows - 1) / kBlockRows; }

// Parallel only when there is more than one block and we are not already
// inside a parallel job loop.
bool go_parallel(Eigen::Index n) { return n > kBlockRows && !omp_in_parallel(); }

} // namespace

int max_threads() { return g_max_threads > 0 ? g_max_threads : omp_get_max_threads(); }

void set_max_threads(int n)
{
    g_max_threads = n;
    if (n > 0) omp_set_num_threads(n);
}

namespace omp {

void linear_predictor(const MatRef& X, double intercept, const VecRef& beta, VecOut eta)
{
    const Eigen::Index nb = block_count(X.rows());
#pragma omp parallel for schedule(static) num_threads(max_threads()) if (go_parallel(X.rows()))
    for (Eigen::Index b = 0; b < nb; ++b) {
        const Eigen::Index lo = b * kBlockRows;
        const Eigen::Index len = std::min(kBlockRows, X.rows() - lo);
        eta.segment(lo, len).noalias() = X.middleRows(lo, len) * beta;
        eta.segment(lo, len).array() += intercept;
    }
}

void working(const VecRef& y, const VecRef& eta, LinkKind link, Working& out)
{
    const Eigen::Index n = y.size();
    out.mu.resize(n);
    out.weight.resize(n);
    out.residual.resize(n);
#pragma omp parallel for schedule(static) num_threads(max_threads()) if (go_parallel(n))
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = detail::row_working(y[i], eta[i], link);
        out.mu[i] = r.mu;
        out.weight[i] = r.weight;
        out.residual[i] = r.residual;
    }
}

double log_likelihood(const VecRef& y, const VecRef& eta, LinkKind link)
{
    const Eigen::Index nb = block_count(y.size());
    std::vector<double> partial(static_cast<std::size_t>(nb), 0.0);
#pragma omp parallel for schedule(static) num_threads(max_threads()) if (go_parallel(y.size()))
    for (Eigen::Index b = 0; b < nb; ++b) {
        const Eigen::Index lo = b * kBlockRows;
        const Eigen::Index hi = std::min(lo + kBlockRows, y.size());
        double s = 0.0;
        for (Eigen::Index i = lo; i < hi; ++i) s += detail::row_loglik(y[i], eta[i], link);
        partial[static_cast<std::size_t>(b)] = s;
    }
    double total = 0.0;
    for (double s : partial) total += s;
    return total;
}

Eigen::VectorXd crossprod(const MatRef& X, const VecRef& v)
{
    const Eigen::Index nb = block_count(X.rows());
    std::vector<Eigen::VectorXd> partial(static_cast<std::size_t>(nb));
#pragma omp parallel for schedule(static) num_threads(max_threads()) if (go_parallel(X.rows()))
    for (Eigen::Index b = 0; b < nb; ++b) {
        const Eigen::Index lo = b * kBlockRows;
        const Eigen::Index len = std::min(kBlockRows, X.rows() - lo);
        partial[static_cast<std::size_t>(b)] = X.middleRows(lo, len).transpose() * v.segment(lo, len);
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(X.cols());
    for (const auto& s : partial) out += s;
    return out;
}

Eigen::MatrixXd weighted_gram(const MatRef& X, const VecRef& w)
{
    const Eigen::Index nb = block_count(X.rows());
    const Eigen::Index p = X.cols();
    std::vector<Eigen::MatrixXd> partial(static_cast<std::size_t>(nb));
#pragma omp parallel for schedule(static) num_threads(max_threads()) if (go_parallel(X.rows()))
    for (Eigen::Index b = 0; b < nb; ++b) {
        const Eigen::Index lo = b * kBlockRows;
        const Eigen::Index len = std::min(kBlockRows, X.rows() - lo);
        const auto Xb = X.middleRows(lo, len);
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(p, p);
        G.selfadjointView<Eigen::Lower>().rankUpdate(
            Xb.transpose() * w.segment(lo, len).cwiseSqrt().asDiagonal());
        partial[static_cast<std::size_t>(b)] = std::move(G);
    }
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p, p);
    for (const auto& G : partial) out += G;
    out.triangularView<Eigen::StrictlyUpper>() = out.transpose();
    return out;
}

} // namespace omp

} // namespace raresight::kernels
