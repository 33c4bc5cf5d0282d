#include "raresight/kernels.hpp"

#include "kernel_rows.hpp"

namespace raresight::kernels::serial {

void linear_predictor(const MatRef& X, double intercept, const VecRef& beta, VecOut eta)
{
    const Eigen::Index n = X.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = intercept;
        for (Eigen::Index j = 0; j < X.cols(); ++j) s += X(i, j) * beta[j];
        eta[i] = s;
    }
}

void working(const VecRef& y, const VecRef& eta, LinkKind link, Working& out)
{
    const Eigen::Index n = y.size();
    out.mu.resize(n);
    out.weight.resize(n);
    out.residual.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = detail::row_working(y[i], eta[i], link);
        out.mu[i] = r.mu;
        out.weight[i] = r.weight;
        out.residual[i] = r.residual;
    }
}

double log_likelihood(const VecRef& y, const VecRef& eta, LinkKind link)
{
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) s += detail::row_loglik(y[i], eta[i], link);
    return s;
}

Eigen::VectorXd crossprod(const MatRef& X, const VecRef& v)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        for (Eigen::Index i = 0; i < X.rows(); ++i) out[j] += X(i, j) * v[i];
    return out;
}

Eigen::MatrixXd weighted_gram(const MatRef& X, const VecRef& w)
{
    const Eigen::Index p = X.cols();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index k = 0; k <= j; ++k) {
            double s = 0.0;
            for (Eigen::Index i = 0; i < X.rows(); ++i) s += X(i, j) * w[i] * X(i, k);
            G(j, k) = s;
            G(k, j) = s;
        }
    }
    return G;
}

} // namespace raresight::kernels::serial
