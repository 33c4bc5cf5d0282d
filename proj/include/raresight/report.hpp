#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "raresight/inference.hpp"
#include "raresight/selection.hpp"

namespace raresight {

/// One (selector, link) column of the report.
struct ModelResult
{
    SelectorKind selector = SelectorKind::lasso;
    LinkKind link = LinkKind::logit;
    SelectionResult selection;
    PooledFit pooled;
    AmeTable ame;
    bool fitted = false;

    /// e.g. "lasso_logit"
    std::string tag() const;
};

enum class TableStyle { text, csv };

/// Coefficient table: one column per model, estimate over "(se)", an em-dash
/// for terms a model did not retain. Row order is the intercept followed by
/// `term_order` restricted to terms retained somewhere.
std::string render_table(const std::vector<PooledFit>& pooled, const std::vector<std::string>& headers,
                         const std::vector<std::string>& term_order, TableStyle style);

void write_selection_csv(const std::filesystem::path& path, const std::vector<std::string>& terms,
                         const std::vector<ModelResult>& models);
void write_pooled_csv(const std::filesystem::path& path, const std::vector<ModelResult>& models);
void write_ame_csv(const std::filesystem::path& path, const std::vector<ModelResult>& models);
/// Long-format plotting data; terms a model did not retain appear as zero rows.
void write_fig1_csv(const std::filesystem::path& path, const std::vector<std::string>& terms,
                    const std::vector<ModelResult>& models);

} // namespace raresight
