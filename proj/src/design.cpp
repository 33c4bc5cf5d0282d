#include "raresight/design.hpp"

#include "raresight/error.hpp"

namespace raresight {

int AnalysisMatrix::term_index(const std::string& name) const
{
    for (std::size_t j = 0; j < terms.size(); ++j)
        if (terms[j].name == name) return static_cast<int>(j);
    return -1;
}

std::vector<std::string> AnalysisMatrix::term_names() const
{
    std::vector<std::string> out;
    for (const auto& t : terms) out.push_back(t.name);
    return out;
}

AnalysisMatrix AnalysisMatrix::select(const std::vector<std::string>& names) const
{
    AnalysisMatrix out;
    out.y = y;
    out.panel_rows = panel_rows;
    out.X.resize(n(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
        const int j = term_index(names[k]);
        if (j < 0) throw InvalidArgument("term '" + names[k] + "' not in design");
        out.X.col(static_cast<Eigen::Index>(k)) = X.col(j);
        out.terms.push_back(terms[j]);
    }
    return out;
}

AnalysisMatrix AnalysisMatrix::rows(const std::vector<Eigen::Index>& idx) const
{
    AnalysisMatrix out;
    out.terms = terms;
    out.y = y(idx);
    out.X = X(idx, Eigen::all);
    for (auto i : idx) out.panel_rows.push_back(panel_rows[static_cast<std::size_t>(i)]);
    return out;
}

Eigen::MatrixXd AnalysisMatrix::with_intercept() const
{
    Eigen::MatrixXd Z(n(), p() + 1);
    Z.col(0).setOnes();
    Z.rightCols(p()) = X;
    return Z;
}

AnalysisMatrix build_design(const PanelDataset& data, const OnsetSeries& onset,
                            const std::vector<std::string>& terms, MissingPolicy policy)
{
    if (onset.y.size() != data.rows()) throw InvalidArgument("onset series does not match panel rows");
    std::vector<const Column*> cols;
    if (terms.empty()) {
        for (const auto& c : data.covariates) cols.push_back(&c);
    } else {
        for (const auto& t : terms) cols.push_back(&data.column(t));
    }

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        if (!onset.y[i]) continue;
        bool complete = true;
        for (const Column* c : cols) {
            if (!c->observed[i]) {
                if (policy == MissingPolicy::error)
                    throw InvalidArgument("column '" + c->name + "' missing at estimation row (" +
                                          data.country[i] + "," + std::to_string(data.year[i]) + ")");
                complete = false;
                break;
            }
        }
        if (complete) keep.push_back(i);
    }

    AnalysisMatrix m;
    const auto n = static_cast<Eigen::Index>(keep.size());
    m.y.resize(n);
    m.X.resize(n, static_cast<Eigen::Index>(cols.size()));
    m.panel_rows = keep;
    for (const Column* c : cols) m.terms.push_back({c->name, c->kind});
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto i = keep[static_cast<std::size_t>(r)];
        m.y[r] = *onset.y[i];
        for (std::size_t k = 0; k < cols.size(); ++k) m.X(r, static_cast<Eigen::Index>(k)) = cols[k]->values[i];
    }
    return m;
}

} // namespace raresight
