#pragma once

// Birds'-eye-view rasters for agents and maps, plus the parametric
// scene description and synthetic scene generator backing the dataset.
//
// Axis convention (global for this project): world x increases with
// raster column, world y increases with raster row, headings are CCW
// from +x. Pixel (row, col) centers map to unique world points.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "scenediff/geometry.hpp"

namespace scenediff {

struct RasterSpec {
    int height_px = 64;
    int width_px = 64;
    double extent_m = 64.0;  // meters covered per side (square pixels)
    Vec2 origin;             // world coordinates of the raster center

    double meters_per_px() const { return extent_m / height_px; }

    bool valid() const {
        return height_px > 0 && width_px > 0 && extent_m > 0.0 &&
               height_px == width_px;
    }

    Vec2 pixel_center(int row, int col) const {
        double mpp = meters_per_px();
        return {origin.x + (col + 0.5 - 0.5 * width_px) * mpp,
                origin.y + (row + 0.5 - 0.5 * height_px) * mpp};
    }

    // Row/col of the pixel containing a world point; may be out of range.
    std::pair<int, int> world_to_pixel(Vec2 p) const {
        double mpp = meters_per_px();
        int col = static_cast<int>(std::floor((p.x - origin.x) / mpp + 0.5 * width_px));
        int row = static_cast<int>(std::floor((p.y - origin.y) / mpp + 0.5 * height_px));
        return {row, col};
    }

    bool in_bounds(int row, int col) const {
        return row >= 0 && row < height_px && col >= 0 && col < width_px;
    }
};

// Channel-planar image: channels * height * width.
struct Raster {
    RasterSpec spec;
    int channels = 0;
    std::vector<double> data;

    Raster() = default;
    Raster(RasterSpec s, int c)
        : spec(s), channels(c),
          data(static_cast<size_t>(c) * s.height_px * s.width_px, 0.0) {}

    double& at(int ch, int row, int col) {
        return data[(static_cast<size_t>(ch) * spec.height_px + row) * spec.width_px + col];
    }
    double at(int ch, int row, int col) const {
        return data[(static_cast<size_t>(ch) * spec.height_px + row) * spec.width_px + col];
    }
};

// Agent image x: occupancy, sin(heading), cos(heading).
using AgentRaster = Raster;
// Map image m: drivable mask, lane-direction sin, lane-direction cos.
using MapRaster = Raster;

struct LaneSegment {
    Vec2 start;
    Vec2 end;
    double width = 4.0;

    double heading() const {
        return std::atan2(end.y - start.y, end.x - start.x);
    }

    // Distance from p to the segment's center line.
    double distance(Vec2 p) const {
        Vec2 d = end - start;
        double len2 = d.dot(d);
        double t = len2 > 0.0 ? std::clamp((p - start).dot(d) / len2, 0.0, 1.0) : 0.0;
        return (p - (start + t * d)).norm();
    }

    bool covers(Vec2 p) const { return distance(p) <= 0.5 * width; }
};

// Parking rows are corridors whose slots face perpendicular to the row.
struct ParkingRow {
    LaneSegment strip;
    double slot_heading = 0.0;
};

struct SceneMap {
    std::vector<LaneSegment> lanes;
    std::vector<ParkingRow> parking;

    bool drivable(Vec2 p) const {
        for (const auto& l : lanes)
            if (l.covers(p)) return true;
        for (const auto& r : parking)
            if (r.strip.covers(p)) return true;
        return false;
    }

    // Heading of the nearest covering corridor; lanes win ties by index,
    // then parking rows.
    double direction_at(Vec2 p) const {
        double best = 1e300;
        double heading = 0.0;
        for (const auto& l : lanes) {
            double d = l.distance(p);
            if (d <= 0.5 * l.width && d < best) {
                best = d;
                heading = l.heading();
            }
        }
        for (const auto& r : parking) {
            double d = r.strip.distance(p);
            if (d <= 0.5 * r.strip.width && d < best) {
                best = d;
                heading = r.slot_heading;
            }
        }
        return heading;
    }
};

struct Scene {
    SceneMap map;
    std::vector<OrientedBox> agents;
    std::string region_tag;
    uint64_t seed = 0;
};

inline AgentRaster rasterize_agents(const Scene& scene, const RasterSpec& spec) {
    if (!spec.valid()) throw std::invalid_argument("rasterize_agents: bad raster spec");
    AgentRaster out(spec, 3);
    for (int row = 0; row < spec.height_px; ++row) {
        for (int col = 0; col < spec.width_px; ++col) {
            Vec2 p = spec.pixel_center(row, col);
            // Later agent index wins on overlap.
            for (size_t i = scene.agents.size(); i-- > 0;) {
                const OrientedBox& b = scene.agents[i];
                if (b.contains(p)) {
                    out.at(0, row, col) = 1.0;
                    out.at(1, row, col) = std::sin(b.heading);
                    out.at(2, row, col) = std::cos(b.heading);
                    break;
                }
            }
        }
    }
    return out;
}

inline MapRaster rasterize_map(const Scene& scene, const RasterSpec& spec) {
    if (!spec.valid()) throw std::invalid_argument("rasterize_map: bad raster spec");
    MapRaster out(spec, 3);
    for (int row = 0; row < spec.height_px; ++row) {
        for (int col = 0; col < spec.width_px; ++col) {
            Vec2 p = spec.pixel_center(row, col);
            if (!scene.map.drivable(p)) continue;
            double h = scene.map.direction_at(p);
            out.at(0, row, col) = 1.0;
            out.at(1, row, col) = std::sin(h);
            out.at(2, row, col) = std::cos(h);
        }
    }
    return out;
}

enum class SceneTemplate { kStraightRoad, kIntersection, kParkingRow };

inline const char* template_name(SceneTemplate t) {
    switch (t) {
        case SceneTemplate::kStraightRoad: return "straight-road";
        case SceneTemplate::kIntersection: return "intersection";
        case SceneTemplate::kParkingRow: return "parking-row";
    }
    return "?";
}

inline SceneTemplate template_from_name(const std::string& name) {
    if (name == "straight-road") return SceneTemplate::kStraightRoad;
    if (name == "intersection") return SceneTemplate::kIntersection;
    if (name == "parking-row") return SceneTemplate::kParkingRow;
    throw std::invalid_argument("unknown scene template: " + name);
}

namespace detail {

// Lane centerline offset from the origin. 64/21 m keeps centerlines on
// detection-cell centers for odd desk-scale grids, which keeps encoded
// box targets in the unclipped regime.
constexpr double kLaneOffset = 64.0 / 21.0;

inline SceneMap template_map(SceneTemplate t) {
    SceneMap map;
    const double off = kLaneOffset;
    switch (t) {
        case SceneTemplate::kStraightRoad:
            // Two opposing lanes through the origin. Corridors stop
            // short of the raster edge so whole boxes stay in frame.
            map.lanes.push_back({{-29.0, -off}, {29.0, -off}, 7.0});
            map.lanes.push_back({{29.0, off}, {-29.0, off}, 7.0});
            break;
        case SceneTemplate::kIntersection:
            map.lanes.push_back({{-29.0, -off}, {29.0, -off}, 7.0});
            map.lanes.push_back({{29.0, off}, {-29.0, off}, 7.0});
            map.lanes.push_back({{off, -29.0}, {off, 29.0}, 7.0});
            map.lanes.push_back({{-off, 29.0}, {-off, -29.0}, 7.0});
            break;
        case SceneTemplate::kParkingRow:
            map.lanes.push_back({{-29.0, 0.0}, {29.0, 0.0}, 6.0});
            map.parking.push_back({{{-25.0, 6.5}, {25.0, 6.5}, 7.0}, M_PI / 2.0});
            break;
    }
    return map;
}

}  // namespace detail

// Deterministic synthetic scene generator. Agent 0 sits at the origin;
// agents are lane-aligned, non-overlapping, and on drivable area.
inline Scene synth_scene(uint64_t rng_seed, SceneTemplate tmpl, double density) {
    if (density < 0.0 || density > 1.0)
        throw std::invalid_argument("synth_scene: density must be in [0,1]");
    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> length_d(4.0, 6.0);
    std::uniform_real_distribution<double> width_d(1.8, 2.2);
    std::uniform_real_distribution<double> heading_noise(-5.0 * M_PI / 180.0,
                                                         5.0 * M_PI / 180.0);

    Scene scene;
    scene.map = detail::template_map(tmpl);
    scene.region_tag = template_name(tmpl);
    scene.seed = rng_seed;

    auto make_agent = [&](Vec2 center, double lane_heading) {
        OrientedBox b;
        b.center = center;
        b.heading = normalize_angle(lane_heading + heading_noise(rng));
        b.length = length_d(rng);
        b.width = width_d(rng);
        b.probability = 1.0;
        return b;
    };

    auto placeable = [&](const OrientedBox& b) {
        if (!scene.map.drivable(b.center)) return false;
        for (const auto& other : scene.agents)
            if (boxes_overlap(b, other)) return false;
        return true;
    };

    // Agent 0: centered on the raster origin, aligned with its lane.
    {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            OrientedBox ego = make_agent({0.0, 0.0}, scene.map.direction_at({0.0, 0.0}));
            if (placeable(ego)) {
                scene.agents.push_back(ego);
                placed = true;
            }
        }
        if (!placed)
            throw std::runtime_error("synth_scene: failed to place agent 0");
    }

    if (density <= 0.0) return scene;

    // March along each corridor with shifted-exponential gaps; keep
    // placements that stay clear of earlier agents.
    std::exponential_distribution<double> gap(density / 6.0);
    auto fill_corridor = [&](const LaneSegment& lane, double heading) {
        Vec2 d = lane.end - lane.start;
        double len = d.norm();
        if (len <= 0.0) return;
        Vec2 u = (1.0 / len) * d;
        double s = 4.0 + gap(rng);
        while (s < len - 4.0) {
            if (unit(rng) < density) {
                Vec2 center = lane.start + s * u;
                OrientedBox b = make_agent(center, heading);
                if (placeable(b)) scene.agents.push_back(b);
            }
            s += 8.0 + gap(rng);
        }
    };
    for (const auto& lane : scene.map.lanes) fill_corridor(lane, lane.heading());
    for (const auto& row : scene.map.parking) fill_corridor(row.strip, row.slot_heading);
    return scene;
}

}  // namespace scenediff
