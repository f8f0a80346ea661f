#pragma once

// MMD^2 two-sample statistics over agent positions and heading vectors,
// plus scene plausibility counters.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "scenediff/geometry.hpp"
#include "scenediff/raster.hpp"

namespace scenediff {

struct KernelParams {
    double bandwidth = 1.0;

    bool valid() const { return bandwidth > 0.0; }
};

// Default bandwidths: positions in meters, headings are unit vectors.
constexpr double kPositionBandwidth = 4.0;
constexpr double kHeadingBandwidth = 0.5;

struct SceneSample {
    std::vector<std::array<double, 2>> positions;
    std::vector<std::array<double, 2>> headings;  // unit vectors

    static SceneSample from_boxes(const std::vector<OrientedBox>& boxes) {
        SceneSample s;
        s.positions.reserve(boxes.size());
        s.headings.reserve(boxes.size());
        for (const auto& b : boxes) {
            s.positions.push_back({b.center.x, b.center.y});
            s.headings.push_back({std::cos(b.heading), std::sin(b.heading)});
        }
        return s;
    }
};

namespace detail {

template <typename Vec>
double sq_dist(const Vec& a, const Vec& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double r = a[i] - b[i];
        d += r * r;
    }
    return d;
}

}  // namespace detail

// Biased V-statistic (self-pairs included): exact 0 for identical
// sample lists and always in [0, 2] for the Gaussian kernel.
template <typename Vec>
double mmd2(const std::vector<Vec>& p, const std::vector<Vec>& q, KernelParams kp) {
    if (p.empty() || q.empty()) throw std::invalid_argument("mmd2: empty sample list");
    if (!kp.valid()) throw std::invalid_argument("mmd2: bandwidth must be > 0");
    double inv = 1.0 / (2.0 * kp.bandwidth * kp.bandwidth);
    auto kernel_mean = [&](const std::vector<Vec>& a, const std::vector<Vec>& b) {
        double total = 0.0;
        for (const auto& x : a)
            for (const auto& y : b) total += std::exp(-detail::sq_dist(x, y) * inv);
        return total / (static_cast<double>(a.size()) * b.size());
    };
    return kernel_mean(p, p) + kernel_mean(q, q) - 2.0 * kernel_mean(p, q);
}

struct SceneMmdResult {
    double position = 0.0;
    double heading = 0.0;
    int pairs_used = 0;
    int pairs_skipped = 0;  // either side had zero agents
};

// Per-pair MMD^2 averaged across (generated, reference) scene pairs
// sharing a map location.
inline SceneMmdResult scene_mmd(
    const std::vector<std::pair<SceneSample, SceneSample>>& pairs,
    KernelParams kp_pos = {kPositionBandwidth},
    KernelParams kp_head = {kHeadingBandwidth}) {
    SceneMmdResult r;
    for (const auto& [gen, ref] : pairs) {
        if (gen.positions.empty() || ref.positions.empty()) {
            r.pairs_skipped += 1;
            continue;
        }
        r.position += mmd2(gen.positions, ref.positions, kp_pos);
        r.heading += mmd2(gen.headings, ref.headings, kp_head);
        r.pairs_used += 1;
    }
    if (r.pairs_used > 0) {
        r.position /= r.pairs_used;
        r.heading /= r.pairs_used;
    }
    return r;
}

struct SceneStats {
    int agent_count = 0;
    int overlap_pairs = 0;
    double off_drivable_fraction = 0.0;
    double mean_nearest_neighbor_m = 0.0;
};

inline SceneStats scene_stats(const Scene& scene) {
    SceneStats s;
    s.agent_count = static_cast<int>(scene.agents.size());
    if (s.agent_count == 0) return s;
    int off = 0;
    double nn_total = 0.0;
    for (int i = 0; i < s.agent_count; ++i) {
        const OrientedBox& a = scene.agents[i];
        if (!scene.map.drivable(a.center)) off += 1;
        double nearest = 0.0;
        bool any = false;
        for (int j = 0; j < s.agent_count; ++j) {
            if (j == i) continue;
            double d = (scene.agents[j].center - a.center).norm();
            if (!any || d < nearest) {
                nearest = d;
                any = true;
            }
            if (j > i && boxes_overlap(a, scene.agents[j])) s.overlap_pairs += 1;
        }
        if (any) nn_total += nearest;
    }
    s.off_drivable_fraction = static_cast<double>(off) / s.agent_count;
    if (s.agent_count > 1) s.mean_nearest_neighbor_m = nn_total / s.agent_count;
    return s;
}

}  // namespace scenediff
