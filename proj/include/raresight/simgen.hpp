#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "raresight/link.hpp"
#include "raresight/panel.hpp"

namespace raresight {

/// Synthetic country-year panel with a known sparse effect vector.
///
/// Covariates are drawn per country-year from N(0, R) with
/// R_jk = correlation^|j-k|. The outcome in year t is Bernoulli with
/// eta = intercept + x(t-1)' beta, so the default one-year lag recovers the
/// truth exactly. The existence column equals the drawn outcome, which the
/// onset coder maps back (first years and back-to-back events become missing).
/// Missingness hits every covariate except the first, with a row probability
/// missing_rate * (1 + tanh(x1)) that depends only on the always-observed x1.
struct SimScenario
{
    int n_countries = 100;
    int years_per_country = 40;
    int first_year = 1951;
    /// One entry per covariate; zeros are noise columns.
    std::vector<double> true_beta = std::vector<double>(10, 0.0);
    LinkKind link = LinkKind::logit;
    double event_rate_target = 0.03;
    double missing_rate = 0.0;
    double correlation = 0.3;
    std::uint64_t seed = 1;
};

struct SimTruth
{
    std::vector<std::string> terms;
    std::vector<double> beta;
    double intercept = 0.0;
    LinkKind link = LinkKind::logit;
    /// Drawn outcome per panel row (before onset coding).
    std::vector<int> y;
    double event_rate = 0.0;
    std::string always_observed;

    std::vector<std::string> true_terms() const;
};

std::pair<PanelDataset, SimTruth> generate(const SimScenario& scenario);

/// Intercept making the population event rate equal `target` for
/// covariates N(0, R) and effects `beta`.
double calibrate_intercept(const std::vector<double>& beta, double correlation, LinkKind link, double target,
                           std::uint64_t seed);

void write_truth(const std::filesystem::path& path, const SimScenario& scenario, const SimTruth& truth);

/// Exhaustive MLE oracle for tiny problems: X (with intercept column) has at
/// most 3 columns. Grid search over [-10, 10]^d followed by pattern-search
/// refinement down to a step of 1e-3.
Eigen::VectorXd brute_force_mle(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                                LinkKind link);

} // namespace raresight
