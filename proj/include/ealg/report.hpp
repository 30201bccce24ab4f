#pragma once

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "ealg/error.hpp"

namespace ealg {

enum class TableFormat { csv, markdown };

struct ReportRow {
    std::string label;
    std::vector<double> values;

    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

/// `headers` includes the label column first; `decimals` has one entry per
/// value column.
struct ReportTable {
    std::string caption;
    std::vector<std::string> headers;
    std::vector<ReportRow> rows;
    std::vector<int> decimals;

    friend bool operator==(const ReportTable&, const ReportTable&) = default;
};

inline void validate(const ReportTable& t)
{
    if (t.headers.empty()) throw ShapeError("table needs at least the label column");
    const std::size_t cols = t.headers.size() - 1;
    if (t.decimals.size() != cols)
        throw ShapeError("decimals has " + std::to_string(t.decimals.size()) + " entries for " + std::to_string(cols) + " value columns");
    for (int d : t.decimals)
        if (d < 0 || d > 17) throw ShapeError("decimals must lie in [0, 17]");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.rows[r].values.size() != cols)
            throw ShapeError("row " + std::to_string(r) + " ('" + t.rows[r].label + "') has " + std::to_string(t.rows[r].values.size()) +
                             " values, expected " + std::to_string(cols));
    }
}

inline std::string format_fixed(double v, int decimals)
{
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline std::string render_table(const ReportTable& t, TableFormat format)
{
    validate(t);
    std::string out;
    auto cells = [&](const ReportRow& r) {
        std::vector<std::string> c{r.label};
        for (std::size_t i = 0; i < r.values.size(); ++i) c.push_back(format_fixed(r.values[i], t.decimals[i]));
        return c;
    };
    if (format == TableFormat::csv) {
        auto line = [](const std::vector<std::string>& c) {
            std::string s;
            for (std::size_t i = 0; i < c.size(); ++i) s += (i ? "," : "") + c[i];
            return s + "\n";
        };
        out += line(t.headers);
        for (const auto& r : t.rows) out += line(cells(r));
        return out;
    }
    auto line = [](const std::vector<std::string>& c) {
        std::string s = "|";
        for (const auto& x : c) s += " " + x + " |";
        return s + "\n";
    };
    if (!t.caption.empty()) out += "Table: " + t.caption + "\n\n";
    out += line(t.headers);
    out += "|---|";
    for (std::size_t i = 1; i < t.headers.size(); ++i) out += "---:|";
    out += "\n";
    for (const auto& r : t.rows) out += line(cells(r));
    return out;
}

/// Reads the CSV form back. Decimals per column are the digits after the
/// point in the first data row; a header-only table gets 0.
inline ReportTable parse_table_csv(const std::string& text, std::string caption = {})
{
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (c == ',') {
                out.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur += c;
            }
        }
        out.push_back(cur);
        return out;
    };
    ReportTable t;
    t.caption = std::move(caption);
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto c = split(line);
        if (t.headers.empty()) {
            t.headers = c;
            t.decimals.assign(c.size() - 1, 0);
            continue;
        }
        if (c.size() != t.headers.size()) throw ShapeError("line " + std::to_string(lineno) + " has " + std::to_string(c.size()) + " cells");
        ReportRow r{c[0], {}};
        for (std::size_t i = 1; i < c.size(); ++i) {
            char* end = nullptr;
            const double v = std::strtod(c[i].c_str(), &end);
            if (end == c[i].c_str() || *end) throw ParseError("bad number '" + c[i] + "'", lineno);
            r.values.push_back(v);
            if (t.rows.empty()) {
                const auto dot = c[i].find('.');
                t.decimals[i - 1] = dot == std::string::npos ? 0 : static_cast<int>(c[i].size() - dot - 1);
            }
        }
        t.rows.push_back(std::move(r));
    }
    if (t.headers.empty()) throw ShapeError("empty table text");
    return t;
}

} // namespace ealg
