#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "raresight/design.hpp"
#include "raresight/glm.hpp"

namespace raresight {

inline constexpr double kZ90 = 1.6448536269514722;
inline constexpr double kZ95 = 1.959963984540054;

/// Fits the retained terms on every imputed design. Each design must carry
/// all retained terms. An empty retained set gives intercept-only fits.
std::vector<GlmFit> refit_selected(const std::vector<AnalysisMatrix>& designs,
                                   const std::vector<std::string>& retained, LinkKind link,
                                   const IrlsOptions& options = {},
                                   std::vector<std::string>* warnings = nullptr);

struct PoolOptions
{
    /// Use Barnard-Rubin small-sample degrees of freedom and Student-t
    /// intervals instead of the normal approximation.
    bool barnard_rubin = false;
};

/// Rubin's rules. T = W + (1 + 1/M) B, B with divisor M - 1.
struct PooledFit
{
    std::vector<std::string> terms;
    LinkKind link = LinkKind::logit;
    int M = 0;
    Eigen::VectorXd qbar;
    Eigen::VectorXd W;
    Eigen::VectorXd B;
    Eigen::VectorXd T;
    Eigen::VectorXd se;
    Eigen::VectorXd z;
    /// Degrees of freedom per term (infinite under the normal approximation).
    Eigen::VectorXd df;
};

/// Pools per-imputation estimates (rows = imputations) with their
/// within-imputation variances. `complete_df` is only used with Barnard-Rubin.
PooledFit rubin_pool(const Eigen::Ref<const Eigen::MatrixXd>& estimates,
                     const Eigen::Ref<const Eigen::MatrixXd>& variances, std::vector<std::string> terms,
                     const PoolOptions& options = {}, double complete_df = std::numeric_limits<double>::infinity());

/// Pools GLM fits; every fit must have the same terms in the same order.
PooledFit rubin_pool(const std::vector<GlmFit>& fits, const PoolOptions& options = {},
                     double complete_df = std::numeric_limits<double>::infinity());

enum class AmeKind { slope, discrete };

/// Per-imputation marginal effects with their delta-method covariance.
struct MarginalEffects
{
    std::vector<std::string> terms;
    std::vector<AmeKind> kinds;
    Eigen::VectorXd ame;
    Eigen::MatrixXd vcov;
};

/// AMEs of every non-intercept term of `fit` over the rows of `design`, whose
/// columns must match the fit terms. Binary terms (from the design's column
/// kinds) use the 1-vs-0 contrast, the rest the average derivative.
MarginalEffects marginal_effects(const GlmFit& fit, const AnalysisMatrix& design);

struct AmeRow
{
    std::string term;
    AmeKind kind = AmeKind::slope;
    double ame = 0.0;
    double se = 0.0;
    double ci90_lo = 0.0, ci90_hi = 0.0;
    double ci95_lo = 0.0, ci95_hi = 0.0;
};

struct AmeTable
{
    LinkKind link = LinkKind::logit;
    int M = 0;
    std::vector<AmeRow> rows;
};

/// Per-imputation AMEs pooled with Rubin's rules; intervals are ame +- z se.
AmeTable average_marginal_effects(const std::vector<GlmFit>& fits, const std::vector<AnalysisMatrix>& designs,
                                  const std::vector<std::string>& terms, const PoolOptions& options = {});

} // namespace raresight
