#pragma once

// SVG scene rendering: drivable corridors, lane direction ticks, and
// agent boxes with a heading tick from the center to the front edge.

#include <sstream>
#include <string>

#include "scenediff/geometry.hpp"
#include "scenediff/raster.hpp"

namespace scenediff {

namespace detail {

// SVG y grows downward; world y grows upward.
inline std::string svg_point(Vec2 p) {
    std::ostringstream os;
    os << p.x << ',' << -p.y;
    return os.str();
}

inline void corridor_polygon(std::ostringstream& os, const LaneSegment& seg,
                             const char* fill) {
    Vec2 d = seg.end - seg.start;
    double len = d.norm();
    if (len <= 0.0) return;
    Vec2 u = (1.0 / len) * d;
    Vec2 n{-u.y, u.x};
    Vec2 h = (0.5 * seg.width) * n;
    os << "<polygon points=\"" << svg_point(seg.start + h) << ' '
       << svg_point(seg.end + h) << ' ' << svg_point(seg.end - h) << ' '
       << svg_point(seg.start - h) << "\" fill=\"" << fill << "\"/>\n";
}

}  // namespace detail

inline std::string render_scene_svg(const Scene& scene, const RasterSpec& spec) {
    double half = 0.5 * spec.extent_m;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\""
       << (spec.origin.x - half) << ' ' << (-spec.origin.y - half) << ' '
       << spec.extent_m << ' ' << spec.extent_m << "\">\n";
    os << "<rect x=\"" << (spec.origin.x - half) << "\" y=\"" << (-spec.origin.y - half)
       << "\" width=\"" << spec.extent_m << "\" height=\"" << spec.extent_m
       << "\" fill=\"#1c2b1c\"/>\n";

    for (const auto& lane : scene.map.lanes) detail::corridor_polygon(os, lane, "#555555");
    for (const auto& row : scene.map.parking)
        detail::corridor_polygon(os, row.strip, "#44506a");

    // Direction ticks along lane center lines.
    for (const auto& lane : scene.map.lanes) {
        Vec2 d = lane.end - lane.start;
        double len = d.norm();
        if (len <= 0.0) continue;
        Vec2 u = (1.0 / len) * d;
        for (double s = 4.0; s < len; s += 10.0) {
            Vec2 a = lane.start + s * u;
            Vec2 b = a + 2.0 * u;
            os << "<line x1=\"" << a.x << "\" y1=\"" << -a.y << "\" x2=\"" << b.x
               << "\" y2=\"" << -b.y << "\" stroke=\"#999999\" stroke-width=\"0.3\"/>\n";
        }
    }

    for (const auto& box : scene.agents) {
        auto v = box_vertices(box);
        os << "<polygon points=\"" << detail::svg_point(v[0]) << ' '
           << detail::svg_point(v[1]) << ' ' << detail::svg_point(v[3]) << ' '
           << detail::svg_point(v[2])
           << "\" fill=\"#d08030\" fill-opacity=\"0.8\" stroke=\"#f0f0f0\" "
              "stroke-width=\"0.15\"/>\n";
        Vec2 front = box.center + (0.5 * box.length) * box.axis();
        os << "<line x1=\"" << box.center.x << "\" y1=\"" << -box.center.y << "\" x2=\""
           << front.x << "\" y2=\"" << -front.y
           << "\" stroke=\"#ffffff\" stroke-width=\"0.25\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace scenediff
