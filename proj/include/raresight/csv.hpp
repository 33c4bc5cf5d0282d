#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace raresight::csv {

struct Table
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column, or -1.
    int column(std::string_view name) const;
};

/// RFC-4180-ish reader: comma separated, double-quoted fields with "" escapes,
/// optional UTF-8 BOM, LF or CRLF line ends.
Table read(const std::filesystem::path& path);
Table parse(std::istream& in);

std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

} // namespace raresight::csv
