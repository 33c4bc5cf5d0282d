#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "raresight/design.hpp"
#include "raresight/glm.hpp"
#include "raresight/lasso.hpp"

namespace raresight {

/// Fold labels 0..k-1 per row.
struct FoldAssignment
{
    int k = 0;
    std::vector<int> fold_of;
    std::uint64_t seed = 0;
    /// Set when a stratum (events or non-events) is empty.
    bool degenerate_stratum = false;

    std::vector<int> sizes() const;
    std::vector<int> event_counts(const Eigen::Ref<const Eigen::VectorXd>& y) const;
};

/// Shuffles events and non-events separately and deals each stratum
/// round-robin; non-events continue dealing where the events stopped so
/// total fold sizes stay balanced too.
FoldAssignment make_stratified_folds(const Eigen::Ref<const Eigen::VectorXd>& y, int k, std::uint64_t seed);

struct CvOptions
{
    int k = 3;
    int n_lambda = 100;
    std::optional<double> lambda_min_ratio;
    double tol = 1e-7;
    int max_redeals = 10;
};

struct CvResult
{
    std::vector<double> lambdas;
    /// Held-out deviance per observation, averaged over folds.
    std::vector<double> mean_dev;
    std::vector<double> se_dev;
    double chosen_lambda = 0.0;
    std::size_t chosen_index = 0;
    FoldAssignment folds;
    /// Full-data path over the shared grid.
    LassoPath path;
    /// Terms (design column indices) with a nonzero coefficient at the chosen lambda.
    std::vector<int> active;
    /// Largest KKT violation over every fold path and the full-data path.
    double kkt_max_violation = 0.0;
};

/// Event-stratified k-fold CV over a shared lambda grid; picks the
/// minimum-deviance lambda (smallest lambda on ties).
CvResult cv_choose_lambda(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                          LinkKind link, std::uint64_t seed, const CvOptions& options = {});

/// Cross-validation over a given fold assignment (`options.k` is ignored).
CvResult cv_evaluate(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                     LinkKind link, const FoldAssignment& folds, const CvOptions& options = {});

enum class SelectorKind { lasso, stepwise };
std::string_view to_string(SelectorKind s);
std::optional<SelectorKind> parse_selector(std::string_view name);

using TermCounts = std::vector<std::pair<std::string, int>>;

struct SelectionResult
{
    SelectorKind method = SelectorKind::lasso;
    LinkKind link = LinkKind::logit;
    int M = 0;
    int threshold = 0;
    std::vector<std::vector<std::string>> per_imputation_active;
    TermCounts counts;
    std::vector<std::string> retained;
    std::vector<double> chosen_lambdas;
    double kkt_max_violation = 0.0;
    std::vector<std::string> warnings;
};

/// Terms whose count reaches `threshold`, in input order.
std::vector<std::string> consensus_select(const TermCounts& counts, int M, int threshold = 3);

/// Runs cv_choose_lambda on every imputed design (fold seed `seed + m`),
/// counts selections and applies the consensus rule.
SelectionResult lasso_select(const std::vector<AnalysisMatrix>& designs, LinkKind link, std::uint64_t seed,
                             int threshold = 3, const CvOptions& options = {});

struct StepwiseResult
{
    std::vector<std::string> selected;
    /// AIC of the intercept-only model followed by the AIC after each addition.
    std::vector<double> aic_trace;
    std::vector<std::string> warnings;
};

/// Forward selection from the intercept-only model, adding the candidate with
/// the lowest AIC while it improves on the current model. Ties go to the
/// earliest candidate. A candidate collinear with the current model has the
/// same likelihood and one extra parameter, so it is scored at current AIC + 2.
StepwiseResult stepwise_aic(const AnalysisMatrix& design, LinkKind link,
                            const std::vector<std::string>& candidates = {}, const IrlsOptions& irls = {});

SelectionResult stepwise_select(const std::vector<AnalysisMatrix>& designs, LinkKind link, int threshold = 3,
                                const IrlsOptions& irls = {});

} // namespace raresight
