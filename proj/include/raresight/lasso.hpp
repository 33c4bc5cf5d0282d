#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "raresight/link.hpp"

namespace raresight {

/// Covariates centered and scaled to population variance 1. Columns that
/// were constant (allowed only under ConstantPolicy::freeze) are zeroed and
/// flagged in `frozen`; their coefficients stay at 0.
struct StandardizedDesign
{
    Eigen::MatrixXd Xs;
    Eigen::VectorXd means;
    Eigen::VectorXd sds;
    std::vector<std::uint8_t> frozen;

    Eigen::Index n() const { return Xs.rows(); }
    Eigen::Index p() const { return Xs.cols(); }
    Eigen::MatrixXd destandardize() const;

    /// Coefficients (intercept first) from the standardized to the original scale.
    Eigen::VectorXd to_original(const Eigen::Ref<const Eigen::VectorXd>& beta_std) const;
};

enum class ConstantPolicy { reject, freeze };

StandardizedDesign standardize(const Eigen::Ref<const Eigen::MatrixXd>& X,
                               ConstantPolicy policy = ConstantPolicy::reject,
                               const std::vector<std::string>& names = {});

inline double soft_threshold(double z, double gamma)
{
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

/// Smallest lambda at which the intercept-only model satisfies every KKT
/// condition: max_j |x_j' r0| / n, r0 the intercept-only score residual
/// (y - ybar under the logit link).
double lambda_max(const StandardizedDesign& design, const Eigen::Ref<const Eigen::VectorXd>& y, LinkKind link);

/// Log-spaced grid from `lmax` down to `lmax * min_ratio`.
std::vector<double> lambda_grid(double lmax, int count, double min_ratio);

struct PathOptions
{
    /// Explicit grid (non-increasing, >= 0). When empty a log grid is built.
    std::vector<double> lambdas;
    int n_lambda = 100;
    /// Defaults to 1e-4 when n > p, else 1e-2.
    std::optional<double> lambda_min_ratio;
    double tol = 1e-7;
    int max_outer = 100;
    int max_sweeps = 100000;
};

struct LassoPath
{
    LinkKind link = LinkKind::logit;
    std::vector<double> lambdas;
    /// L x (p+1), original scale, intercept first.
    Eigen::MatrixXd coefs;
    /// L x (p+1), standardized scale, intercept first.
    Eigen::MatrixXd std_coefs;
    std::vector<std::vector<int>> active_sets;
    std::vector<std::uint8_t> converged;
    /// Penalized objective -loglik/n + lambda |beta|_1 after each outer step.
    std::vector<std::vector<double>> objective_traces;

    std::size_t size() const { return lambdas.size(); }
};

LassoPath fit_path(const StandardizedDesign& design, const Eigen::Ref<const Eigen::VectorXd>& y, LinkKind link,
                   const PathOptions& options = {});

struct KktReport
{
    double max_violation = 0.0;
    /// Path entries that fail at the given tolerance.
    std::vector<std::size_t> failing;
    bool ok() const { return failing.empty(); }
};

/// Checks |x_j' r / n| == lambda on active and <= lambda on inactive
/// coordinates at every path entry, on the standardized scale.
KktReport check_kkt(const StandardizedDesign& design, const Eigen::Ref<const Eigen::VectorXd>& y,
                    const LassoPath& path, double tol = 1e-5);

/// Writes (lambda, term, coefficient) rows.
void write_path(const std::filesystem::path& path, const LassoPath& lasso, const std::vector<std::string>& terms);

} // namespace raresight
