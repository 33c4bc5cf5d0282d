#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "raresight/panel.hpp"
#include "raresight/rng.hpp"

namespace raresight {

struct MvnParams
{
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

struct EmOptions
{
    int max_iter = 1000;
    /// Convergence threshold on the largest absolute change of any mean or
    /// covariance entry, measured on the internally standardized scale.
    double tol = 1e-4;
};

struct EmIteration
{
    int iter = 0;
    double delta = 0.0;
    /// Observed-data log-likelihood at the parameters entering this iteration
    /// (standardized scale).
    double loglik = 0.0;
};

struct EmResult
{
    MvnParams params;
    std::vector<EmIteration> trace;
};

/// EM for a multivariate normal with values missing at random. `data` holds
/// NaN in missing cells. Throws NonConvergence after `max_iter` iterations and
/// InvalidArgument when a column has fewer than two observed values.
EmResult em_mvn(const Eigen::MatrixXd& data, const EmOptions& options = {});

/// Conditional-normal completion of `data`, drawing every missing cell from
/// N(mu_m + S_mo S_oo^-1 (x_o - mu_o), S_mm - S_mo S_oo^-1 S_om). With
/// `rng == nullptr` the conditional means are filled in instead.
Eigen::MatrixXd conditional_fill(const Eigen::MatrixXd& data, const MvnParams& params,
                                 Rng* rng);

/// One completed matrix per bootstrap replicate: resample rows, fit EM on the
/// resample, draw the original rows' missing cells. Observed cells are copied.
struct MatrixImputation
{
    std::vector<Eigen::MatrixXd> completed;
    std::vector<std::uint64_t> seeds;
    std::vector<std::vector<EmIteration>> traces;
};

MatrixImputation bootstrap_impute(const Eigen::MatrixXd& data, int M, std::uint64_t seed,
                                  const EmOptions& options = {});

struct ImputationSet
{
    std::vector<PanelDataset> datasets;
    std::vector<std::uint64_t> seeds;
    std::vector<std::vector<EmIteration>> traces;

    std::size_t size() const { return datasets.size(); }
};

/// Panel-level imputation. The imputation model holds every covariate plus
/// the onset outcome and the year; only covariate cells are written back.
ImputationSet bootstrap_impute(const PanelDataset& data, const OnsetSeries& onset, int M,
                               std::uint64_t seed, const EmOptions& options = {});

/// Writes `imputed_m<k>.csv` (k = 1..M) and `em_log.jsonl` into `dir`.
void write_imputations(const std::filesystem::path& dir, const ImputationSet& set,
                       const OnsetSeries& onset);

} // namespace raresight
