#include "raresight/glm.hpp"

#include <cmath>

#include "raresight/csv.hpp"
#include "raresight/error.hpp"
#include "raresight/kernels.hpp"

namespace raresight {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(LinkKind link)
{
    return link == LinkKind::logit ? "logit" : "cloglog";
}

std::optional<LinkKind> parse_link(std::string_view name)
{
    if (name == "logit") return LinkKind::logit;
    if (name == "cloglog") return LinkKind::cloglog;
    return std::nullopt;
}

double log_likelihood(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const VectorXd>& eta, LinkKind link)
{
    if (y.size() != eta.size()) throw InvalidArgument("log_likelihood: length mismatch");
    return kernels::omp::log_likelihood(y, eta, link);
}

double binomial_deviance(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const VectorXd>& eta, LinkKind link)
{
    return -2.0 * log_likelihood(y, eta, link);
}

VectorXd score(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
               const Eigen::Ref<const VectorXd>& beta, LinkKind link)
{
    VectorXd eta = X * beta;
    kernels::Working w;
    kernels::omp::working(y, eta, link, w);
    return kernels::omp::crossprod(X, w.residual);
}

namespace {

void check_binary(const Eigen::Ref<const VectorXd>& y)
{
    for (Index i = 0; i < y.size(); ++i)
        if (y[i] != 0.0 && y[i] != 1.0) throw InvalidArgument("outcome must be 0/1");
}

void check_rank(const Eigen::Ref<const MatrixXd>& X)
{
    MatrixXd scaled = X;
    for (Index j = 0; j < X.cols(); ++j) {
        const double norm = X.col(j).norm();
        if (norm > 0.0) scaled.col(j) /= norm;
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(scaled);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols())
        throw RankDeficient("design has rank " + std::to_string(qr.rank()) + " < " + std::to_string(X.cols()) +
                            " columns");
}

[[noreturn]] void fail(const Eigen::Ref<const MatrixXd>& X, const VectorXd& beta, std::vector<double> trace,
                       const IrlsOptions& options, const std::string& why)
{
    std::vector<double> last(beta.data(), beta.data() + beta.size());
    for (Index j = 1; j < X.cols(); ++j) {
        const double mean = X.col(j).mean();
        const double sd = std::sqrt((X.col(j).array() - mean).square().mean());
        if (std::abs(beta[j]) * sd > options.separation_bound)
            throw SeparationSuspected(why + "; coefficient " + std::to_string(j) +
                                          " diverging, separation suspected",
                                      std::move(last), std::move(trace));
    }
    throw NonConvergence(why, std::move(last), std::move(trace));
}

} // namespace

GlmFit irls_fit(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y, LinkKind link,
                const IrlsOptions& options)
{
    const Index n = X.rows();
    const Index p = X.cols();
    if (y.size() != n) throw InvalidArgument("irls_fit: X and y row counts differ");
    if (p < 1) throw InvalidArgument("irls_fit: design needs an intercept column");
    check_binary(y);
    const double ybar = y.mean();
    if (ybar == 0.0 || ybar == 1.0) throw DegenerateOutcome("outcome is constant; the MLE does not exist");
    check_rank(X);

    GlmFit fit;
    fit.link = link;
    fit.beta = VectorXd::Zero(p);
    fit.beta[0] = link_fun(ybar, link);

    VectorXd eta(n);
    kernels::Working w;
    kernels::omp::linear_predictor(X, 0.0, fit.beta, eta);
    double ll = kernels::omp::log_likelihood(y, eta, link);
    fit.loglik_trace.push_back(ll);
    MatrixXd info;

    for (int iter = 1; iter <= options.max_iter; ++iter) {
        kernels::omp::working(y, eta, link, w);
        const VectorXd u = kernels::omp::crossprod(X, w.residual);
        info = kernels::omp::weighted_gram(X, w.weight);
        Eigen::LDLT<MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
            fail(X, fit.beta, fit.loglik_trace, options, "information matrix not positive definite");
        VectorXd step = ldlt.solve(u);

        VectorXd beta_new = fit.beta + step;
        kernels::omp::linear_predictor(X, 0.0, beta_new, eta);
        double ll_new = kernels::omp::log_likelihood(y, eta, link);
        const double slack = 1e-12 * (1.0 + std::abs(ll));
        int halvings = 0;
        while (!(ll_new >= ll - slack) && halvings < options.max_halvings) {
            step *= 0.5;
            beta_new = fit.beta + step;
            kernels::omp::linear_predictor(X, 0.0, beta_new, eta);
            ll_new = kernels::omp::log_likelihood(y, eta, link);
            ++halvings;
        }
        if (!(ll_new >= ll - slack)) {
            // No ascent along the scoring direction: we are at the optimum up
            // to round-off, or the problem is degenerate.
            if (step.cwiseAbs().maxCoeff() < options.tol) {
                kernels::omp::linear_predictor(X, 0.0, fit.beta, eta);
                ll_new = ll;
                beta_new = fit.beta;
            } else {
                fail(X, fit.beta, fit.loglik_trace, options, "step-halving failed to increase the likelihood");
            }
        }
        fit.beta = beta_new;
        ll = ll_new;
        fit.loglik_trace.push_back(ll);
        fit.iters = iter;
        if (step.cwiseAbs().maxCoeff() < options.tol) {
            fit.converged = true;
            break;
        }
    }
    if (!fit.converged)
        fail(X, fit.beta, fit.loglik_trace, options,
             "IRLS did not converge in " + std::to_string(options.max_iter) + " iterations");

    kernels::omp::working(y, eta, link, w);
    info = kernels::omp::weighted_gram(X, w.weight);
    Eigen::LDLT<MatrixXd> ldlt(info);
    fit.vcov = ldlt.solve(MatrixXd::Identity(p, p));
    fit.vcov = 0.5 * (fit.vcov + fit.vcov.transpose());
    fit.loglik = ll;
    fit.deviance = -2.0 * ll;
    fit.aic = aic(fit);
    fit.terms.assign(static_cast<std::size_t>(p), std::string{});
    fit.terms[0] = kInterceptName;
    for (Index j = 1; j < p; ++j) fit.terms[static_cast<std::size_t>(j)] = "x" + std::to_string(j);
    return fit;
}

GlmFit irls_fit(const AnalysisMatrix& design, LinkKind link, const IrlsOptions& options)
{
    GlmFit fit = irls_fit(design.with_intercept(), design.y, link, options);
    for (std::size_t j = 0; j < design.terms.size(); ++j) fit.terms[j + 1] = design.terms[j].name;
    return fit;
}

} // namespace raresight
