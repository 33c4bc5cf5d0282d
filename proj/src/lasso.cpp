#include "raresight/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "raresight/csv.hpp"
#include "raresight/error.hpp"
#include "raresight/kernels.hpp"

namespace raresight {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd StandardizedDesign::destandardize() const
{
    MatrixXd X = Xs;
    for (Index j = 0; j < p(); ++j) X.col(j) = (Xs.col(j).array() * sds[j] + means[j]).matrix();
    return X;
}

VectorXd StandardizedDesign::to_original(const Eigen::Ref<const VectorXd>& beta_std) const
{
    VectorXd out(beta_std.size());
    out[0] = beta_std[0];
    for (Index j = 0; j < p(); ++j) {
        out[j + 1] = beta_std[j + 1] / sds[j];
        out[0] -= out[j + 1] * means[j];
    }
    return out;
}

StandardizedDesign standardize(const Eigen::Ref<const MatrixXd>& X, ConstantPolicy policy,
                               const std::vector<std::string>& names)
{
    StandardizedDesign d;
    const Index n = X.rows();
    d.Xs.resize(n, X.cols());
    d.means.resize(X.cols());
    d.sds.resize(X.cols());
    d.frozen.assign(static_cast<std::size_t>(X.cols()), 0);
    for (Index j = 0; j < X.cols(); ++j) {
        const double mean = X.col(j).mean();
        const double var = (X.col(j).array() - mean).square().mean();
        const double sd = std::sqrt(var);
        d.means[j] = mean;
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
            if (policy == ConstantPolicy::reject) {
                const std::string name = j < static_cast<Index>(names.size()) ? names[j] : std::to_string(j);
                throw ConstantColumn("constant column '" + name + "'");
            }
            d.sds[j] = 1.0;
            d.frozen[static_cast<std::size_t>(j)] = 1;
            d.Xs.col(j).setZero();
            continue;
        }
        d.sds[j] = sd;
        d.Xs.col(j) = ((X.col(j).array() - mean) / sd).matrix();
    }
    return d;
}

namespace {

VectorXd null_residual(const Eigen::Ref<const VectorXd>& y, LinkKind link)
{
    const double ybar = y.mean();
    if (ybar == 0.0 || ybar == 1.0) throw DegenerateOutcome("outcome is constant");
    const VectorXd eta = VectorXd::Constant(y.size(), link_fun(ybar, link));
    kernels::Working w;
    kernels::omp::working(y, eta, link, w);
    return w.residual;
}

double penalized_objective(const StandardizedDesign& d, const Eigen::Ref<const VectorXd>& y, LinkKind link,
                           const VectorXd& beta, double lambda, VectorXd& eta)
{
    kernels::omp::linear_predictor(d.Xs, beta[0], beta.tail(d.p()), eta);
    const double n = static_cast<double>(d.n());
    return -kernels::omp::log_likelihood(y, eta, link) / n + lambda * beta.tail(d.p()).cwiseAbs().sum();
}

// Coordinate descent on the weighted least-squares surrogate
//   (1/2n) sum w_i (z_i - b0 - x_i' b)^2 + lambda |b|_1,
// where `resid` holds z - eta and is updated in place.
int solve_quadratic(const StandardizedDesign& d, const VectorXd& w, VectorXd& resid, VectorXd& beta,
                    double lambda, double tol, int max_sweeps)
{
    const Index p = d.p();
    const double n = static_cast<double>(d.n());
    const double wsum = w.sum();
    VectorXd xwx(p);
    for (Index j = 0; j < p; ++j) xwx[j] = w.dot(d.Xs.col(j).cwiseAbs2()) / n;

    std::vector<Index> active;
    for (Index j = 0; j < p; ++j)
        if (beta[j + 1] != 0.0) active.push_back(j);

    auto update = [&](Index j) {
        if (d.frozen[static_cast<std::size_t>(j)] || xwx[j] <= 0.0) return 0.0;
        const double old = beta[j + 1];
        const double grad = d.Xs.col(j).dot(w.cwiseProduct(resid)) / n;
        const double next = soft_threshold(grad + xwx[j] * old, lambda) / xwx[j];
        const double delta = next - old;
        if (delta != 0.0) {
            beta[j + 1] = next;
            resid -= delta * d.Xs.col(j);
        }
        return std::abs(delta);
    };
    auto update_intercept = [&]() {
        const double delta = w.dot(resid) / wsum;
        beta[0] += delta;
        resid.array() -= delta;
        return std::abs(delta);
    };

    int sweeps = 0;
    while (sweeps < max_sweeps) {
        // Converge on the current active set.
        double change;
        do {
            change = update_intercept();
            for (Index j : active) change = std::max(change, update(j));
            ++sweeps;
        } while (change >= tol && sweeps < max_sweeps);

        // Full sweep: admit any coordinate that moves off zero.
        change = update_intercept();
        bool grew = false;
        for (Index j = 0; j < p; ++j) {
            const bool was_zero = beta[j + 1] == 0.0;
            change = std::max(change, update(j));
            if (was_zero && beta[j + 1] != 0.0) {
                active.push_back(j);
                grew = true;
            }
        }
        ++sweeps;
        std::sort(active.begin(), active.end());
        active.erase(std::unique(active.begin(), active.end()), active.end());
        if (!grew && change < tol) break;
    }
    return sweeps;
}

} // namespace

double lambda_max(const StandardizedDesign& design, const Eigen::Ref<const VectorXd>& y, LinkKind link)
{
    const VectorXd r = null_residual(y, link);
    const VectorXd g = kernels::omp::crossprod(design.Xs, r) / static_cast<double>(design.n());
    double best = 0.0;
    for (Index j = 0; j < design.p(); ++j)
        if (!design.frozen[static_cast<std::size_t>(j)]) best = std::max(best, std::abs(g[j]));
    return best;
}

std::vector<double> lambda_grid(double lmax, int count, double min_ratio)
{
    if (count < 1) throw InvalidArgument("lambda grid needs at least one value");
    if (!(lmax > 0.0)) throw InvalidArgument("lambda_max must be positive");
    std::vector<double> grid(static_cast<std::size_t>(count));
    if (count == 1) {
        grid[0] = lmax;
        return grid;
    }
    const double step = std::log(min_ratio) / (count - 1);
    for (int k = 0; k < count; ++k) grid[static_cast<std::size_t>(k)] = lmax * std::exp(step * k);
    grid[0] = lmax;
    return grid;
}

LassoPath fit_path(const StandardizedDesign& d, const Eigen::Ref<const VectorXd>& y, LinkKind link,
                   const PathOptions& options)
{
    const Index n = d.n();
    const Index p = d.p();
    if (y.size() != n) throw InvalidArgument("fit_path: X and y row counts differ");
    const double ybar = y.mean();
    if (ybar == 0.0 || ybar == 1.0) throw DegenerateOutcome("outcome is constant");

    LassoPath path;
    path.link = link;
    if (!options.lambdas.empty()) {
        path.lambdas = options.lambdas;
        for (std::size_t k = 0; k < path.lambdas.size(); ++k) {
            if (path.lambdas[k] < 0.0) throw InvalidArgument("negative lambda");
            if (k && path.lambdas[k] > path.lambdas[k - 1]) throw InvalidArgument("lambda grid must be non-increasing");
        }
    } else {
        const double ratio = options.lambda_min_ratio.value_or(n > p ? 1e-4 : 1e-2);
        path.lambdas = lambda_grid(lambda_max(d, y, link), options.n_lambda, ratio);
    }

    const auto L = static_cast<Index>(path.lambdas.size());
    path.coefs.resize(L, p + 1);
    path.std_coefs.resize(L, p + 1);
    path.active_sets.resize(static_cast<std::size_t>(L));
    path.converged.assign(static_cast<std::size_t>(L), 0);
    path.objective_traces.resize(static_cast<std::size_t>(L));

    VectorXd null_beta = VectorXd::Zero(p + 1);
    null_beta[0] = link_fun(ybar, link);
    VectorXd beta = null_beta;
    VectorXd eta(n), resid(n), wts(n);
    kernels::Working work;
    const double lmax = lambda_max(d, y, link);

    for (Index k = 0; k < L; ++k) {
        const double lambda = path.lambdas[static_cast<std::size_t>(k)];
        auto& trace = path.objective_traces[static_cast<std::size_t>(k)];
        // At or above lambda_max the null model satisfies KKT exactly; skip CD
        // so round-off cannot leave a 1-ulp coefficient behind.
        if (lambda >= lmax) beta = null_beta;
        double obj = penalized_objective(d, y, link, beta, lambda, eta);
        trace.push_back(obj);
        bool converged = lambda >= lmax;
        for (int outer = 0; outer < options.max_outer && !converged; ++outer) {
            kernels::omp::working(y, eta, link, work);
            for (Index i = 0; i < n; ++i) {
                wts[i] = work.weight[i];
                resid[i] = work.weight[i] > 0.0 ? work.residual[i] / work.weight[i] : 0.0;
            }
            VectorXd candidate = beta;
            solve_quadratic(d, wts, resid, candidate, lambda, options.tol, options.max_sweeps);

            double obj_new = penalized_objective(d, y, link, candidate, lambda, eta);
            const double slack = 1e-13 * (1.0 + std::abs(obj));
            for (int h = 0; h < 30 && obj_new > obj + slack; ++h) {
                candidate = 0.5 * (candidate + beta);
                obj_new = penalized_objective(d, y, link, candidate, lambda, eta);
            }
            if (obj_new > obj + slack) {
                candidate = beta;
                obj_new = penalized_objective(d, y, link, candidate, lambda, eta);
            }
            const double change = (candidate - beta).cwiseAbs().maxCoeff();
            beta = candidate;
            obj = obj_new;
            trace.push_back(obj);
            converged = change < options.tol;
        }
        path.converged[static_cast<std::size_t>(k)] = converged;
        path.std_coefs.row(k) = beta.transpose();
        path.coefs.row(k) = d.to_original(beta).transpose();
        auto& active = path.active_sets[static_cast<std::size_t>(k)];
        for (Index j = 0; j < p; ++j)
            if (beta[j + 1] != 0.0) active.push_back(static_cast<int>(j));
    }
    return path;
}

KktReport check_kkt(const StandardizedDesign& d, const Eigen::Ref<const VectorXd>& y, const LassoPath& path,
                    double tol)
{
    KktReport report;
    VectorXd eta(d.n());
    kernels::Working w;
    for (std::size_t k = 0; k < path.size(); ++k) {
        const VectorXd beta = path.std_coefs.row(static_cast<Index>(k)).transpose();
        const double lambda = path.lambdas[k];
        kernels::omp::linear_predictor(d.Xs, beta[0], beta.tail(d.p()), eta);
        kernels::omp::working(y, eta, path.link, w);
        const VectorXd g = kernels::omp::crossprod(d.Xs, w.residual) / static_cast<double>(d.n());
        double worst = 0.0;
        for (Index j = 0; j < d.p(); ++j) {
            if (d.frozen[static_cast<std::size_t>(j)]) continue;
            const double b = beta[j + 1];
            const double v = b != 0.0 ? std::abs(g[j] - std::copysign(lambda, b)) : std::max(0.0, std::abs(g[j]) - lambda);
            worst = std::max(worst, v);
        }
        report.max_violation = std::max(report.max_violation, worst);
        if (worst > tol) report.failing.push_back(k);
    }
    return report;
}

void write_path(const std::filesystem::path& file, const LassoPath& lasso, const std::vector<std::string>& terms)
{
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error("cannot write " + file.string());
    csv::write_row(out, {"lambda", "term", "coefficient"});
    for (std::size_t k = 0; k < lasso.size(); ++k) {
        for (Index j = 0; j < lasso.coefs.cols(); ++j) {
            const std::string term = j == 0 ? "(Intercept)"
                                     : static_cast<std::size_t>(j - 1) < terms.size() ? terms[static_cast<std::size_t>(j - 1)]
                                                                                      : "x" + std::to_string(j);
            csv::write_row(out, {csv::format_double(lasso.lambdas[k]), term,
                                 csv::format_double(lasso.coefs(static_cast<Index>(k), j))});
        }
    }
}

} // namespace raresight
