#pragma once

// Line-delimited scene dataset format. One header line carrying the
// format version, then one scene per line as key=value groups with
// semicolon-separated records. Doubles are printed with enough digits
// to round-trip exactly, so write -> read -> write is byte-identical.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scenediff/errors.hpp"
#include "scenediff/raster.hpp"

namespace scenediff {

constexpr const char* kDatasetHeader = "# scenediff-dataset v1";

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::vector<double> parse_doubles(const std::string& s, size_t expect,
                                         const std::string& what) {
    std::vector<std::string> parts = split(s, ',');
    if (parts.size() != expect)
        throw DataError("dataset: bad " + what + " record: " + s);
    std::vector<double> out;
    out.reserve(expect);
    for (const auto& p : parts) {
        size_t pos = 0;
        double v = std::stod(p, &pos);
        if (pos != p.size()) throw DataError("dataset: bad number in " + what + ": " + p);
        out.push_back(v);
    }
    return out;
}

}  // namespace detail

inline std::string scene_to_line(const Scene& scene) {
    using detail::fmt_double;
    std::ostringstream os;
    os << "region=" << scene.region_tag << " seed=" << scene.seed;
    os << " lanes=";
    for (size_t i = 0; i < scene.map.lanes.size(); ++i) {
        const auto& l = scene.map.lanes[i];
        if (i) os << ';';
        os << fmt_double(l.start.x) << ',' << fmt_double(l.start.y) << ','
           << fmt_double(l.end.x) << ',' << fmt_double(l.end.y) << ','
           << fmt_double(l.width);
    }
    os << " parks=";
    for (size_t i = 0; i < scene.map.parking.size(); ++i) {
        const auto& p = scene.map.parking[i];
        if (i) os << ';';
        os << fmt_double(p.strip.start.x) << ',' << fmt_double(p.strip.start.y) << ','
           << fmt_double(p.strip.end.x) << ',' << fmt_double(p.strip.end.y) << ','
           << fmt_double(p.strip.width) << ',' << fmt_double(p.slot_heading);
    }
    os << " agents=";
    for (size_t i = 0; i < scene.agents.size(); ++i) {
        const auto& a = scene.agents[i];
        if (i) os << ';';
        os << fmt_double(a.center.x) << ',' << fmt_double(a.center.y) << ','
           << fmt_double(a.heading) << ',' << fmt_double(a.length) << ','
           << fmt_double(a.width);
    }
    return os.str();
}

inline Scene scene_from_line(const std::string& line) {
    Scene scene;
    for (const std::string& token : detail::split(line, ' ')) {
        if (token.empty()) continue;
        size_t eq = token.find('=');
        if (eq == std::string::npos) throw DataError("dataset: bad token: " + token);
        std::string key = token.substr(0, eq);
        std::string value = token.substr(eq + 1);
        if (key == "region") {
            scene.region_tag = value;
        } else if (key == "seed") {
            scene.seed = std::stoull(value);
        } else if (key == "lanes") {
            if (value.empty()) continue;
            for (const std::string& rec : detail::split(value, ';')) {
                auto v = detail::parse_doubles(rec, 5, "lane");
                scene.map.lanes.push_back({{v[0], v[1]}, {v[2], v[3]}, v[4]});
            }
        } else if (key == "parks") {
            if (value.empty()) continue;
            for (const std::string& rec : detail::split(value, ';')) {
                auto v = detail::parse_doubles(rec, 6, "parking row");
                scene.map.parking.push_back({{{v[0], v[1]}, {v[2], v[3]}, v[4]}, v[5]});
            }
        } else if (key == "agents") {
            if (value.empty()) continue;
            for (const std::string& rec : detail::split(value, ';')) {
                auto v = detail::parse_doubles(rec, 5, "agent");
                OrientedBox b;
                b.center = {v[0], v[1]};
                b.heading = v[2];
                b.length = v[3];
                b.width = v[4];
                b.probability = 1.0;
                scene.agents.push_back(b);
            }
        } else {
            throw DataError("dataset: unknown key: " + key);
        }
    }
    return scene;
}

inline void write_dataset(const std::string& path, const std::vector<Scene>& scenes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << kDatasetHeader << '\n';
    for (const auto& s : scenes) out << scene_to_line(s) << '\n';
    if (!out) throw DataError("write failed: " + path);
}

inline std::vector<Scene> read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kDatasetHeader)
        throw DataError("dataset: missing or unrecognized header in " + path);
    std::vector<Scene> scenes;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        scenes.push_back(scene_from_line(line));
    }
    return scenes;
}

}  // namespace scenediff
