#include "raresight/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "raresight/error.hpp"

namespace raresight::csv {

int Table::column(std::string_view name) const
{
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

namespace {

// Reads one logical record; returns false at EOF.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line)
{
    fields.clear();
    std::string field;
    bool quoted = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            ++line;
            fields.push_back(std::move(field));
            return true;
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (quoted) throw ParseError("unterminated quoted field near line " + std::to_string(line));
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

} // namespace

Table parse(std::istream& in)
{
    Table t;
    std::size_t line = 1;
    if (in.peek() == 0xEF) {
        char bom[3];
        in.read(bom, 3);
    }
    if (!read_record(in, t.header, line)) throw ParseError("empty CSV: missing header row");
    std::vector<std::string> fields;
    while (read_record(in, fields, line)) {
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (fields.size() != t.header.size())
            throw ParseError("row near line " + std::to_string(line) + " has " +
                             std::to_string(fields.size()) + " fields, header has " +
                             std::to_string(t.header.size()));
        t.rows.push_back(fields);
    }
    return t;
}

Table read(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    return parse(in);
}

std::string escape(std::string_view field)
{
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields)
{
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << escape(fields[i]);
    }
    out << '\n';
}

std::string format_double(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace raresight::csv
