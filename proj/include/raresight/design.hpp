#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "raresight/panel.hpp"

namespace raresight {

struct TermInfo
{
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
};

/// An estimation-ready design: rows with an observed outcome, covariates
/// without an intercept column.
struct AnalysisMatrix
{
    Eigen::VectorXd y;
    Eigen::MatrixXd X;
    std::vector<TermInfo> terms;
    std::vector<std::size_t> panel_rows;

    Eigen::Index n() const { return X.rows(); }
    Eigen::Index p() const { return X.cols(); }
    int term_index(const std::string& name) const;
    std::vector<std::string> term_names() const;

    /// Column subset in the given order.
    AnalysisMatrix select(const std::vector<std::string>& names) const;
    /// Row subset.
    AnalysisMatrix rows(const std::vector<Eigen::Index>& idx) const;
    /// [1 | X]
    Eigen::MatrixXd with_intercept() const;
};

enum class MissingPolicy { error, drop_rows };

/// Builds the design from a panel and its onset coding. With `terms` empty
/// every covariate is used.
AnalysisMatrix build_design(const PanelDataset& data, const OnsetSeries& onset,
                            const std::vector<std::string>& terms = {},
                            MissingPolicy policy = MissingPolicy::error);

} // namespace raresight
