#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace raresight {

enum class ColumnKind { continuous, binary };

std::string_view to_string(ColumnKind kind);

/// One covariate column with its missingness mask. `values[i]` is only
/// meaningful where `observed[i] != 0`.
struct Column
{
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    std::vector<double> values;
    std::vector<std::uint8_t> observed;

    std::size_t missing_count() const;
};

/// Long-format country-year panel. Rows are kept sorted by (country, year);
/// every (country, year) pair is unique.
struct PanelDataset
{
    std::string dv_name = "dv_exists";
    std::vector<std::string> country;
    std::vector<int> year;
    std::vector<std::optional<double>> existence;
    std::vector<Column> covariates;

    std::size_t rows() const { return year.size(); }

    const Column& column(const std::string& name) const;
    Column& column(const std::string& name);
    bool has_column(const std::string& name) const;
    std::vector<std::string> covariate_names() const;

    /// [begin, end) row ranges, one per country, in row order.
    std::vector<std::pair<std::size_t, std::size_t>> country_runs() const;
};

/// First-occurrence outcome aligned with the panel rows.
struct OnsetSeries
{
    std::vector<std::optional<int>> y;

    std::size_t events() const;
    std::size_t observed() const;
};

struct PanelSchema
{
    std::string country = "country";
    std::string year = "year";
    std::string dv = "dv_exists";
    /// Kind overrides; columns not listed are inferred.
    std::map<std::string, ColumnKind> kinds;
    /// Columns dropped at load time (e.g. an alternate outcome).
    std::vector<std::string> exclude;
};

PanelDataset load_panel(const std::filesystem::path& path, const PanelSchema& schema = {});
PanelDataset parse_panel(std::istream& in, const PanelSchema& schema = {});

/// Codes onsets: y = 1 exactly on an observed 0 -> 1 transition between
/// consecutive years, y missing for every later year of the same spell and
/// for any 1 reached across a year gap or at panel entry.
OnsetSeries code_onset(const PanelDataset& data);

/// Replaces every covariate value at (i, t) by its value at (i, t - horizon);
/// missing when that country-year is absent.
PanelDataset lag_covariates(const PanelDataset& data, int horizon = 1);

/// Adds `<name>_fd` = x(t) - x(t-1) for continuous columns.
PanelDataset first_difference(const PanelDataset& data, const std::vector<std::string>& columns);

/// Adds `<name>_ys`, years since the most recent observed 1 within the current
/// run of consecutive years; 0 in realization years.
PanelDataset years_since(const PanelDataset& data, const std::vector<std::string>& columns);

/// Writes the panel (and optionally the coded onset as column `onset`).
void write_panel(const std::filesystem::path& path, const PanelDataset& data,
                 const OnsetSeries* onset = nullptr);

} // namespace raresight
