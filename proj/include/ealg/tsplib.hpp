#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ealg/core.hpp"
#include "ealg/error.hpp"

namespace ealg {

struct TsplibFile {
    std::string name;
    std::string comment;
    std::size_t dimension = 0;
    std::string edge_weight_type = "EUC_2D";
    std::vector<Point> coords;  // original units
    std::optional<double> best_known;

    friend bool operator==(const TsplibFile&, const TsplibFile&) = default;
};

/// Maps normalized coordinates back to the file's units:
/// original = origin + scale * normalized.
struct TsplibScale {
    double min_x = 0.0;
    double min_y = 0.0;
    double scale = 1.0;
};

namespace detail {

inline std::string trim(std::string s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& tok, std::size_t line)
{
    double v = 0.0;
    const char* end = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || p != end || !std::isfinite(v)) throw ParseError("bad number '" + tok + "'", line);
    return v;
}

} // namespace detail

inline TsplibFile parse_tsplib_text(const std::string& text)
{
    TsplibFile f;
    f.edge_weight_type.clear();
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    bool in_coords = false;
    std::vector<bool> seen;
    std::size_t coord_count = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string s = detail::trim(raw);
        if (s.empty()) continue;
        if (s == "EOF") break;
        if (in_coords && (std::isdigit(static_cast<unsigned char>(s[0])) || s[0] == '-' || s[0] == '+')) {
            std::istringstream ls(s);
            std::string id_tok, x_tok, y_tok, extra;
            if (!(ls >> id_tok >> x_tok >> y_tok) || (ls >> extra)) throw ParseError("expected 'index x y'", line);
            const double id = detail::parse_number(id_tok, line);
            if (id != std::floor(id) || id < 1 || id > static_cast<double>(f.dimension))
                throw ParseError("node index " + id_tok + " outside 1.." + std::to_string(f.dimension), line);
            const auto k = static_cast<std::size_t>(id) - 1;
            if (seen[k]) throw ParseError("duplicate node index " + id_tok, line);
            seen[k] = true;
            f.coords[k] = {detail::parse_number(x_tok, line), detail::parse_number(y_tok, line)};
            ++coord_count;
            continue;
        }
        in_coords = false;
        if (s == "NODE_COORD_SECTION") {
            if (f.dimension == 0) throw ParseError("NODE_COORD_SECTION before DIMENSION", line);
            if (f.edge_weight_type != "EUC_2D")
                throw ParseError("unsupported EDGE_WEIGHT_TYPE '" + f.edge_weight_type + "' (only EUC_2D)", line);
            in_coords = true;
            continue;
        }
        const auto colon = s.find(':');
        if (colon == std::string::npos) throw ParseError("unrecognized line '" + s + "'", line);
        const std::string key = detail::trim(s.substr(0, colon));
        const std::string value = detail::trim(s.substr(colon + 1));
        if (key == "NAME") {
            f.name = value;
        } else if (key == "COMMENT") {
            f.comment = f.comment.empty() ? value : f.comment + "\n" + value;
        } else if (key == "TYPE") {
            if (value != "TSP") throw ParseError("unsupported TYPE '" + value + "'", line);
        } else if (key == "DIMENSION") {
            const double d = detail::parse_number(value, line);
            if (d < 2 || d != std::floor(d)) throw ParseError("DIMENSION must be an integer >= 2", line);
            f.dimension = static_cast<std::size_t>(d);
            f.coords.assign(f.dimension, {});
            seen.assign(f.dimension, false);
        } else if (key == "EDGE_WEIGHT_TYPE") {
            if (value != "EUC_2D") throw ParseError("unsupported EDGE_WEIGHT_TYPE '" + value + "' (only EUC_2D)", line);
            f.edge_weight_type = value;
        } else {
            throw ParseError("unsupported keyword '" + key + "'", line);
        }
    }
    if (f.dimension == 0) throw ParseError("missing DIMENSION", line);
    if (f.edge_weight_type.empty()) throw ParseError("missing EDGE_WEIGHT_TYPE", line);
    if (coord_count != f.dimension)
        throw ParseError("DIMENSION is " + std::to_string(f.dimension) + " but " + std::to_string(coord_count) + " coordinates were given",
                         line);
    return f;
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline TsplibFile parse_tsplib_file(const std::filesystem::path& path) { return parse_tsplib_text(read_file(path)); }

/// Writes coordinates with round-trip precision.
inline std::string write_tsplib(const TsplibFile& f)
{
    std::string out = "NAME : " + f.name + "\n";
    if (!f.comment.empty()) {
        std::istringstream cs(f.comment);
        for (std::string c; std::getline(cs, c);) out += "COMMENT : " + c + "\n";
    }
    out += "TYPE : TSP\nDIMENSION : " + std::to_string(f.coords.size()) + "\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n";
    char buf[96];
    for (std::size_t i = 0; i < f.coords.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu %.17g %.17g\n", i + 1, f.coords[i].x, f.coords[i].y);
        out += buf;
    }
    return out + "EOF\n";
}

/// Shifts to the origin and divides by the larger side, so the instance
/// fits [0,1]^2 and distances scale by a single factor.
inline std::pair<Instance, TsplibScale> to_instance(const TsplibFile& f)
{
    TsplibScale s;
    double max_x = f.coords.front().x, max_y = f.coords.front().y;
    s.min_x = max_x;
    s.min_y = max_y;
    for (const Point& p : f.coords) {
        s.min_x = std::min(s.min_x, p.x);
        s.min_y = std::min(s.min_y, p.y);
        max_x = std::max(max_x, p.x);
        max_y = std::max(max_y, p.y);
    }
    s.scale = std::max(max_x - s.min_x, max_y - s.min_y);
    if (!(s.scale > 0.0)) throw InstanceError("all TSPLIB coordinates coincide");
    std::vector<Point> pts;
    pts.reserve(f.coords.size());
    for (const Point& p : f.coords) pts.push_back({(p.x - s.min_x) / s.scale, (p.y - s.min_y) / s.scale});
    return {make_tsp_instance(f.name.empty() ? "tsplib" : f.name, std::move(pts)), s};
}

inline Instance parse_tsplib(const std::filesystem::path& path) { return to_instance(parse_tsplib_file(path)).first; }

/// TSPLIB EUC_2D edge weight: nint of the Euclidean distance.
inline double tsplib_nint(double d) { return static_cast<double>(static_cast<long long>(d + 0.5)); }

/// Tour cost in the file's units, with or without nint rounding per edge.
inline double original_tour_cost(const TsplibFile& f, std::span<const std::size_t> order, bool rounded = true)
{
    if (!is_permutation_of_n(order, f.coords.size())) throw InvalidSolutionError("tour is not a permutation of the file's nodes");
    double total = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const double d = euclidean(f.coords[order[i]], f.coords[order[(i + 1) % order.size()]]);
        total += rounded ? tsplib_nint(d) : d;
    }
    return total;
}

/// Sidecar of best-known costs: lines "name,cost"; '#' starts a comment and
/// a "name,best_known" header is allowed.
inline std::map<std::string, double> parse_best_known(const std::string& text)
{
    std::map<std::string, double> out;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = detail::trim(raw.substr(0, raw.find('#')));
        if (s.empty()) continue;
        const auto comma = s.find(',');
        if (comma == std::string::npos) throw ParseError("expected 'name,cost'", line);
        const std::string name = detail::trim(s.substr(0, comma));
        const std::string cost = detail::trim(s.substr(comma + 1));
        if (line == 1 && name == "name") continue;
        const double v = detail::parse_number(cost, line);
        if (!(v > 0.0)) throw ParseError("best-known cost must be positive", line);
        out[name] = v;
    }
    return out;
}

inline std::map<std::string, double> load_best_known(const std::filesystem::path& path) { return parse_best_known(read_file(path)); }

/// TSPLIB TOUR file: node indices (1-based) until -1 or EOF, returned 0-based.
inline std::vector<std::size_t> parse_tsplib_tour(const std::string& text)
{
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    bool in_tour = false;
    std::vector<std::size_t> order;
    while (std::getline(in, raw)) {
        ++line;
        const std::string s = detail::trim(raw);
        if (s.empty()) continue;
        if (s == "TOUR_SECTION") {
            in_tour = true;
            continue;
        }
        if (!in_tour) continue;
        if (s == "-1" || s == "EOF") break;
        const double v = detail::parse_number(s, line);
        if (v < 1 || v != std::floor(v)) throw ParseError("bad tour node '" + s + "'", line);
        order.push_back(static_cast<std::size_t>(v) - 1);
    }
    return order;
}

} // namespace ealg
