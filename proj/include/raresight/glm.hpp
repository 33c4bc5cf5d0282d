#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "raresight/design.hpp"
#include "raresight/link.hpp"

namespace raresight {

inline constexpr const char* kInterceptName = "(Intercept)";

struct IrlsOptions
{
    int max_iter = 100;
    /// Convergence threshold on max |delta beta|.
    double tol = 1e-8;
    int max_halvings = 30;
    /// |beta_j| * sd(x_j) above this at a failed fit is reported as separation.
    double separation_bound = 15.0;
};

/// Maximum-likelihood binary GLM. `beta` has the intercept first; `vcov` is
/// the inverse expected information at the optimum.
struct GlmFit
{
    LinkKind link = LinkKind::logit;
    std::vector<std::string> terms;
    Eigen::VectorXd beta;
    Eigen::MatrixXd vcov;
    double loglik = 0.0;
    double deviance = 0.0;
    double aic = 0.0;
    bool converged = false;
    int iters = 0;
    std::vector<double> loglik_trace;

    Eigen::Index n_params() const { return beta.size(); }
    Eigen::VectorXd se() const { return vcov.diagonal().cwiseSqrt(); }
};

double log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& y,
                      const Eigen::Ref<const Eigen::VectorXd>& eta, LinkKind link);

/// Binomial deviance -2 loglik (the saturated binary model has loglik 0).
double binomial_deviance(const Eigen::Ref<const Eigen::VectorXd>& y,
                         const Eigen::Ref<const Eigen::VectorXd>& eta, LinkKind link);

/// Gradient of the log-likelihood in beta; X carries the intercept column.
Eigen::VectorXd score(const Eigen::Ref<const Eigen::MatrixXd>& X,
                      const Eigen::Ref<const Eigen::VectorXd>& y,
                      const Eigen::Ref<const Eigen::VectorXd>& beta, LinkKind link);

/// Fisher scoring with step-halving. X must carry a leading column of ones.
GlmFit irls_fit(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                LinkKind link, const IrlsOptions& options = {});

/// Fits `[1 | design.X]` and labels the coefficients with the design terms.
GlmFit irls_fit(const AnalysisMatrix& design, LinkKind link, const IrlsOptions& options = {});

inline double deviance(const GlmFit& fit) { return -2.0 * fit.loglik; }
inline double aic(const GlmFit& fit) { return -2.0 * fit.loglik + 2.0 * static_cast<double>(fit.n_params()); }

} // namespace raresight
