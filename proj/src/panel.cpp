#include "raresight/panel.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "raresight/csv.hpp"
#include "raresight/error.hpp"

namespace raresight {

std::string_view to_string(ColumnKind kind)
{
    return kind == ColumnKind::binary ? "binary" : "continuous";
}

std::size_t Column::missing_count() const
{
    return static_cast<std::size_t>(std::count(observed.begin(), observed.end(), std::uint8_t{0}));
}

const Column& PanelDataset::column(const std::string& name) const
{
    for (const auto& c : covariates)
        if (c.name == name) return c;
    throw InvalidArgument("unknown column '" + name + "'");
}

Column& PanelDataset::column(const std::string& name)
{
    return const_cast<Column&>(std::as_const(*this).column(name));
}

bool PanelDataset::has_column(const std::string& name) const
{
    return std::any_of(covariates.begin(), covariates.end(),
                       [&](const Column& c) { return c.name == name; });
}

std::vector<std::string> PanelDataset::covariate_names() const
{
    std::vector<std::string> out;
    out.reserve(covariates.size());
    for (const auto& c : covariates) out.push_back(c.name);
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> PanelDataset::country_runs() const
{
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= rows(); ++i) {
        if (i == rows() || country[i] != country[begin]) {
            runs.emplace_back(begin, i);
            begin = i;
        }
    }
    return runs;
}

std::size_t OnsetSeries::events() const
{
    return static_cast<std::size_t>(
        std::count_if(y.begin(), y.end(), [](const auto& v) { return v && *v == 1; }));
}

std::size_t OnsetSeries::observed() const
{
    return static_cast<std::size_t>(
        std::count_if(y.begin(), y.end(), [](const auto& v) { return v.has_value(); }));
}

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

bool is_missing_cell(std::string_view s)
{
    s = trim(s);
    return s.empty() || s == "NA";
}

std::optional<double> parse_double(std::string_view s)
{
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<int> parse_int(std::string_view s)
{
    s = trim(s);
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// Sorts rows by (country, year), rejecting duplicate keys.
void sort_rows(PanelDataset& d)
{
    std::vector<std::size_t> order(d.rows());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(d.country[a], d.year[a]) < std::tie(d.country[b], d.year[b]);
    });
    for (std::size_t k = 1; k < order.size(); ++k) {
        const auto a = order[k - 1], b = order[k];
        if (d.country[a] == d.country[b] && d.year[a] == d.year[b])
            throw DuplicateKey("duplicate (country, year) key (" + d.country[a] + "," +
                               std::to_string(d.year[a]) + ")");
    }
    auto permute = [&](auto& v) {
        std::remove_reference_t<decltype(v)> out;
        out.reserve(v.size());
        for (auto i : order) out.push_back(v[i]);
        v = std::move(out);
    };
    permute(d.country);
    permute(d.year);
    permute(d.existence);
    for (auto& c : d.covariates) {
        permute(c.values);
        permute(c.observed);
    }
}

// Row index of (same country, year - offset) for every row, or -1.
std::vector<long> predecessor(const PanelDataset& d, int offset)
{
    std::vector<long> out(d.rows(), -1);
    for (auto [begin, end] : d.country_runs()) {
        std::unordered_map<int, std::size_t> by_year;
        for (std::size_t i = begin; i < end; ++i) by_year.emplace(d.year[i], i);
        for (std::size_t i = begin; i < end; ++i) {
            auto it = by_year.find(d.year[i] - offset);
            if (it != by_year.end()) out[i] = static_cast<long>(it->second);
        }
    }
    return out;
}

} // namespace

PanelDataset parse_panel(std::istream& in, const PanelSchema& schema)
{
    const csv::Table table = csv::parse(in);
    const int ci = table.column(schema.country);
    const int yi = table.column(schema.year);
    const int di = table.column(schema.dv);
    if (ci < 0) throw ParseError("missing country column '" + schema.country + "'");
    if (yi < 0) throw ParseError("missing year column '" + schema.year + "'");
    if (di < 0) throw ParseError("missing outcome column '" + schema.dv + "'");

    const std::set<std::string> excluded(schema.exclude.begin(), schema.exclude.end());
    PanelDataset d;
    d.dv_name = schema.dv;
    std::vector<int> cov_index;
    for (int j = 0; j < static_cast<int>(table.header.size()); ++j) {
        if (j == ci || j == yi || j == di || excluded.count(table.header[j])) continue;
        cov_index.push_back(j);
        Column col;
        col.name = table.header[j];
        d.covariates.push_back(std::move(col));
    }

    const std::size_t n = table.rows.size();
    d.country.reserve(n);
    d.year.reserve(n);
    d.existence.reserve(n);
    for (auto& c : d.covariates) {
        c.values.assign(n, 0.0);
        c.observed.assign(n, 0);
    }
    for (std::size_t r = 0; r < n; ++r) {
        const auto& row = table.rows[r];
        d.country.emplace_back(trim(row[ci]));
        auto yr = parse_int(row[yi]);
        if (!yr) throw ParseError("unparseable year '" + row[yi] + "' in data row " + std::to_string(r + 1));
        d.year.push_back(*yr);
        if (is_missing_cell(row[di])) {
            d.existence.emplace_back();
        } else {
            auto v = parse_double(row[di]);
            if (!v) throw ParseError("non-numeric outcome cell '" + row[di] + "' in data row " + std::to_string(r + 1));
            d.existence.emplace_back(*v);
        }
        for (std::size_t k = 0; k < cov_index.size(); ++k) {
            const auto& cell = row[cov_index[k]];
            if (is_missing_cell(cell)) continue;
            auto v = parse_double(cell);
            if (!v)
                throw ParseError("non-numeric cell '" + cell + "' in column '" + d.covariates[k].name +
                                 "', data row " + std::to_string(r + 1));
            d.covariates[k].values[r] = *v;
            d.covariates[k].observed[r] = 1;
        }
    }

    for (auto& c : d.covariates) {
        if (auto it = schema.kinds.find(c.name); it != schema.kinds.end()) {
            c.kind = it->second;
            continue;
        }
        std::set<double> distinct;
        for (std::size_t i = 0; i < n && distinct.size() <= 2; ++i)
            if (c.observed[i]) distinct.insert(c.values[i]);
        // Two-valued columns other than 0/1 (e.g. 1.5/2.5) stay continuous so that
        // the discrete AME contrast and the years-since clock keep their meaning.
        const bool zero_one = std::all_of(distinct.begin(), distinct.end(), [](double v) { return v == 0.0 || v == 1.0; });
        c.kind = (!distinct.empty() && distinct.size() <= 2 && zero_one) ? ColumnKind::binary : ColumnKind::continuous;
    }

    sort_rows(d);
    return d;
}

PanelDataset load_panel(const std::filesystem::path& path, const PanelSchema& schema)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    return parse_panel(in, schema);
}

OnsetSeries code_onset(const PanelDataset& data)
{
    OnsetSeries out;
    out.y.resize(data.rows());
    for (std::size_t i = 0; i < data.rows(); ++i) {
        const auto& e = data.existence[i];
        if (e && *e != 0.0 && *e != 1.0)
            throw InvalidArgument("existence value " + csv::format_double(*e) + " outside {0,1} at (" +
                                  data.country[i] + "," + std::to_string(data.year[i]) + ")");
    }
    const auto prev = predecessor(data, 1);
    for (std::size_t i = 0; i < data.rows(); ++i) {
        const auto& e = data.existence[i];
        if (!e) continue;
        if (*e == 0.0) {
            out.y[i] = 0;
            continue;
        }
        const long p = prev[i];
        if (p >= 0 && data.existence[p] && *data.existence[p] == 0.0) out.y[i] = 1;
    }
    return out;
}

PanelDataset lag_covariates(const PanelDataset& data, int horizon)
{
    if (horizon < 1) throw InvalidArgument("lag horizon must be >= 1");
    PanelDataset out = data;
    const auto src = predecessor(data, horizon);
    for (std::size_t k = 0; k < data.covariates.size(); ++k) {
        const Column& in = data.covariates[k];
        Column& col = out.covariates[k];
        for (std::size_t i = 0; i < data.rows(); ++i) {
            const long s = src[i];
            if (s >= 0 && in.observed[s]) {
                col.values[i] = in.values[s];
                col.observed[i] = 1;
            } else {
                col.values[i] = 0.0;
                col.observed[i] = 0;
            }
        }
    }
    return out;
}

PanelDataset first_difference(const PanelDataset& data, const std::vector<std::string>& columns)
{
    PanelDataset out = data;
    const auto prev = predecessor(data, 1);
    for (const auto& name : columns) {
        const Column& in = data.column(name);
        if (in.kind == ColumnKind::binary)
            throw InvalidArgument("first difference requested for binary column '" + name + "'");
        Column fd;
        fd.name = name + "_fd";
        fd.kind = ColumnKind::continuous;
        fd.values.assign(data.rows(), 0.0);
        fd.observed.assign(data.rows(), 0);
        for (std::size_t i = 0; i < data.rows(); ++i) {
            const long p = prev[i];
            if (p >= 0 && in.observed[i] && in.observed[p]) {
                fd.values[i] = in.values[i] - in.values[p];
                fd.observed[i] = 1;
            }
        }
        out.covariates.push_back(std::move(fd));
    }
    return out;
}

PanelDataset years_since(const PanelDataset& data, const std::vector<std::string>& columns)
{
    PanelDataset out = data;
    const auto runs = data.country_runs();
    for (const auto& name : columns) {
        const Column& in = data.column(name);
        if (in.kind != ColumnKind::binary)
            throw InvalidArgument("years-since requested for continuous column '" + name + "'");
        Column ys;
        ys.name = name + "_ys";
        ys.kind = ColumnKind::continuous;
        ys.values.assign(data.rows(), 0.0);
        ys.observed.assign(data.rows(), 0);
        for (auto [begin, end] : runs) {
            std::optional<int> last;
            for (std::size_t i = begin; i < end; ++i) {
                if (i > begin && data.year[i] != data.year[i - 1] + 1) last.reset();
                if (in.observed[i] && in.values[i] == 1.0) last = data.year[i];
                if (last) {
                    ys.values[i] = data.year[i] - *last;
                    ys.observed[i] = 1;
                }
            }
        }
        out.covariates.push_back(std::move(ys));
    }
    return out;
}

void write_panel(const std::filesystem::path& path, const PanelDataset& data, const OnsetSeries* onset)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    std::vector<std::string> header{"country", "year", data.dv_name};
    if (onset) header.emplace_back("onset");
    for (const auto& c : data.covariates) header.push_back(c.name);
    csv::write_row(out, header);
    std::vector<std::string> fields;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        fields.clear();
        fields.push_back(data.country[i]);
        fields.push_back(std::to_string(data.year[i]));
        fields.push_back(data.existence[i] ? csv::format_double(*data.existence[i]) : "NA");
        if (onset) fields.push_back(onset->y[i] ? std::to_string(*onset->y[i]) : "NA");
        for (const auto& c : data.covariates)
            fields.push_back(c.observed[i] ? csv::format_double(c.values[i]) : "NA");
        csv::write_row(out, fields);
    }
}

} // namespace raresight
