#include "raresight/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "raresight/csv.hpp"
#include "raresight/error.hpp"

namespace raresight {

namespace {

constexpr const char* kDash = "—";

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string(), "report");
    return out;
}

int find_term(const PooledFit& p, const std::string& term)
{
    for (std::size_t j = 0; j < p.terms.size(); ++j)
        if (p.terms[j] == term) return static_cast<int>(j);
    return -1;
}

// Display width in code points, so the em-dash pads like one column.
std::size_t width(const std::string& s)
{
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

std::string pad_left(const std::string& s, std::size_t w)
{
    const std::size_t cur = width(s);
    return cur >= w ? s : std::string(w - cur, ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t w)
{
    const std::size_t cur = width(s);
    return cur >= w ? s : s + std::string(w - cur, ' ');
}

} // namespace

std::string ModelResult::tag() const
{
    return std::string(to_string(selector)) + "_" + std::string(to_string(link));
}

std::string render_table(const std::vector<PooledFit>& pooled, const std::vector<std::string>& headers,
                         const std::vector<std::string>& term_order, TableStyle style)
{
    if (pooled.empty()) throw InvalidArgument("render_table: no models");
    if (headers.size() != pooled.size()) throw InvalidArgument("render_table: one header per model");

    std::vector<std::string> rows{kInterceptName};
    for (const auto& t : term_order) {
        const bool used = std::any_of(pooled.begin(), pooled.end(), [&](const PooledFit& p) { return find_term(p, t) >= 0; });
        if (used) rows.push_back(t);
    }
    // Terms present in a fit but absent from term_order go last, in fit order.
    for (const auto& p : pooled)
        for (const auto& t : p.terms)
            if (std::find(rows.begin(), rows.end(), t) == rows.end()) rows.push_back(t);

    // cells[r][2*m] estimate, cells[r][2*m+1] se
    std::vector<std::vector<std::string>> est(rows.size()), se(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (const auto& p : pooled) {
            const int j = find_term(p, rows[r]);
            if (j < 0) {
                est[r].push_back(kDash);
                se[r].push_back("");
            } else {
                est[r].push_back(fmt::format("{:.4f}", p.qbar[j]));
                se[r].push_back(fmt::format("({:.4f})", p.se[j]));
            }
        }
    }

    std::ostringstream out;
    if (style == TableStyle::csv) {
        std::vector<std::string> header{"term", "statistic"};
        header.insert(header.end(), headers.begin(), headers.end());
        csv::write_row(out, header);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            std::vector<std::string> a{rows[r], "estimate"}, b{rows[r], "se"};
            a.insert(a.end(), est[r].begin(), est[r].end());
            b.insert(b.end(), se[r].begin(), se[r].end());
            csv::write_row(out, a);
            csv::write_row(out, b);
        }
        return out.str();
    }

    std::size_t first = std::string("Variable").size();
    for (const auto& r : rows) first = std::max(first, width(r));
    std::vector<std::size_t> colw(pooled.size());
    for (std::size_t m = 0; m < pooled.size(); ++m) {
        colw[m] = width(headers[m]);
        for (std::size_t r = 0; r < rows.size(); ++r)
            colw[m] = std::max({colw[m], width(est[r][m]), width(se[r][m])});
    }
    std::string line = pad_right("Variable", first);
    for (std::size_t m = 0; m < pooled.size(); ++m) line += "  " + pad_left(headers[m], colw[m]);
    out << line << '\n';
    std::size_t total = first;
    for (auto w : colw) total += 2 + w;
    out << std::string(total, '-') << '\n';
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::string a = pad_right(rows[r], first), b = std::string(first, ' ');
        for (std::size_t m = 0; m < pooled.size(); ++m) {
            a += "  " + pad_left(est[r][m], colw[m]);
            b += "  " + pad_left(se[r][m], colw[m]);
        }
        while (!b.empty() && b.back() == ' ') b.pop_back();
        out << a << '\n';
        if (!b.empty()) out << b << '\n';
    }
    out << std::string(total, '-') << '\n';
    out << "Standard errors in parentheses; " << kDash << " not selected.\n";
    return out.str();
}

void write_selection_csv(const std::filesystem::path& path, const std::vector<std::string>& terms,
                         const std::vector<ModelResult>& models)
{
    auto out = open_out(path);
    std::vector<std::string> header{"term"};
    for (const auto& m : models) header.push_back("count_" + m.tag());
    for (const auto& m : models) header.push_back("retained_" + m.tag());
    csv::write_row(out, header);
    for (const auto& t : terms) {
        std::vector<std::string> row{t};
        for (const auto& m : models) {
            int c = 0;
            for (const auto& [name, count] : m.selection.counts)
                if (name == t) c = count;
            row.push_back(std::to_string(c));
        }
        for (const auto& m : models) {
            const auto& r = m.selection.retained;
            row.push_back(std::find(r.begin(), r.end(), t) != r.end() ? "1" : "0");
        }
        csv::write_row(out, row);
    }
}

void write_pooled_csv(const std::filesystem::path& path, const std::vector<ModelResult>& models)
{
    auto out = open_out(path);
    csv::write_row(out, {"term", "estimate", "se", "z", "model"});
    for (const auto& m : models) {
        if (!m.fitted) continue;
        for (std::size_t j = 0; j < m.pooled.terms.size(); ++j) {
            const auto k = static_cast<Eigen::Index>(j);
            csv::write_row(out, {m.pooled.terms[j], csv::format_double(m.pooled.qbar[k]),
                                 csv::format_double(m.pooled.se[k]), csv::format_double(m.pooled.z[k]), m.tag()});
        }
    }
}

void write_ame_csv(const std::filesystem::path& path, const std::vector<ModelResult>& models)
{
    auto out = open_out(path);
    csv::write_row(out, {"term", "ame", "se", "ci90_lo", "ci90_hi", "ci95_lo", "ci95_hi", "kind", "model"});
    for (const auto& m : models) {
        if (!m.fitted) continue;
        for (const auto& r : m.ame.rows) {
            csv::write_row(out, {r.term, csv::format_double(r.ame), csv::format_double(r.se),
                                 csv::format_double(r.ci90_lo), csv::format_double(r.ci90_hi),
                                 csv::format_double(r.ci95_lo), csv::format_double(r.ci95_hi),
                                 r.kind == AmeKind::slope ? "slope" : "discrete", m.tag()});
        }
    }
}

void write_fig1_csv(const std::filesystem::path& path, const std::vector<std::string>& terms,
                    const std::vector<ModelResult>& models)
{
    auto out = open_out(path);
    csv::write_row(out, {"model", "selector", "link", "term", "selected", "ame", "se", "ci90_lo", "ci90_hi",
                         "ci95_lo", "ci95_hi"});
    for (const auto& m : models) {
        for (const auto& t : terms) {
            const AmeRow* hit = nullptr;
            for (const auto& r : m.ame.rows)
                if (r.term == t) hit = &r;
            std::vector<std::string> row{m.tag(), std::string(to_string(m.selector)), std::string(to_string(m.link)), t};
            if (hit) {
                row.insert(row.end(), {"1", csv::format_double(hit->ame), csv::format_double(hit->se),
                                       csv::format_double(hit->ci90_lo), csv::format_double(hit->ci90_hi),
                                       csv::format_double(hit->ci95_lo), csv::format_double(hit->ci95_hi)});
            } else {
                row.insert(row.end(), {"0", "0", "0", "0", "0", "0", "0"});
            }
            csv::write_row(out, row);
        }
    }
}

} // namespace raresight
