#pragma once

// World-space oriented boxes and the per-cell 7-parameter detection
// encoding (logit, cos, sin, four log side-distances).

#include <array>
#include <cmath>
#include <stdexcept>

namespace scenediff {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

// Wrap an angle into (-pi, pi].
inline double normalize_angle(double a) {
    a = std::remainder(a, 2.0 * M_PI);
    if (a <= -M_PI) a += 2.0 * M_PI;
    return a;
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// -log(sigmoid(x)) = log(1 + exp(-x)), stable for both signs.
inline double softplus_neg(double x) {
    if (x > 0.0) return std::log1p(std::exp(-x));
    return -x + std::log1p(std::exp(x));
}

// Heading is CCW from +x in (-pi, pi]; length is the front-to-back
// extent, width left-to-right. probability is 1 for ground truth.
struct OrientedBox {
    Vec2 center;
    double heading = 0.0;
    double length = 1.0;
    double width = 1.0;
    double probability = 1.0;

    Vec2 axis() const { return {std::cos(heading), std::sin(heading)}; }
    Vec2 left_axis() const { return {-std::sin(heading), std::cos(heading)}; }

    bool valid() const {
        return length > 0.0 && width > 0.0 && heading > -M_PI &&
               heading <= M_PI && probability >= 0.0 && probability <= 1.0;
    }

    bool contains(Vec2 p) const {
        Vec2 d = p - center;
        return std::abs(d.dot(axis())) <= 0.5 * length &&
               std::abs(d.dot(left_axis())) <= 0.5 * width;
    }
};

// Cell channel layout: l, theta_c, theta_s, d_front, d_left, d_back,
// d_right (the d_* channels store log-distances).
constexpr int kCellChannels = 7;

struct CellBoxParams {
    double logit = 0.0;
    double theta_c = 1.0;
    double theta_s = 0.0;
    double d_front = 0.0;
    double d_left = 0.0;
    double d_back = 0.0;
    double d_right = 0.0;
    Vec2 reference;
};

// Side-distance floor before the log; keeps encodings finite when the
// reference lies outside the box.
constexpr double kDistanceClipFloor = 0.01;

// Vertex order: front-left, front-right, back-left, back-right.
inline std::array<Vec2, 4> box_vertices(const OrientedBox& box) {
    Vec2 u = box.axis();
    Vec2 v = box.left_axis();
    Vec2 f = (0.5 * box.length) * u;
    Vec2 l = (0.5 * box.width) * v;
    return {box.center + f + l, box.center + f - l, box.center - f + l,
            box.center - f - l};
}

inline OrientedBox decode_cell(const CellBoxParams& p) {
    double n = std::hypot(p.theta_c, p.theta_s);
    if (n <= 0.0)
        throw std::domain_error("decode_cell: degenerate orientation channels");
    double c = p.theta_c / n;
    double s = p.theta_s / n;
    double ef = std::exp(p.d_front);
    double el = std::exp(p.d_left);
    double eb = std::exp(p.d_back);
    double er = std::exp(p.d_right);
    Vec2 u{c, s};
    Vec2 v{-s, c};
    OrientedBox box;
    box.center = p.reference + (0.5 * (ef - eb)) * u + (0.5 * (el - er)) * v;
    box.heading = normalize_angle(std::atan2(s, c));
    box.length = ef + eb;
    box.width = el + er;
    box.probability = sigmoid(p.logit);
    return box;
}

inline CellBoxParams encode_cell(const OrientedBox& box, Vec2 reference) {
    Vec2 u = box.axis();
    Vec2 v = box.left_axis();
    Vec2 d = box.center - reference;
    double along = d.dot(u);
    double across = d.dot(v);
    auto clipped_log = [](double dist) {
        return std::log(std::max(dist, kDistanceClipFloor));
    };
    CellBoxParams p;
    p.reference = reference;
    p.theta_c = std::cos(box.heading);
    p.theta_s = std::sin(box.heading);
    p.d_front = clipped_log(along + 0.5 * box.length);
    p.d_back = clipped_log(0.5 * box.length - along);
    p.d_left = clipped_log(across + 0.5 * box.width);
    p.d_right = clipped_log(0.5 * box.width - across);
    double prob = std::min(std::max(box.probability, 1e-6), 1.0 - 1e-6);
    p.logit = std::log(prob / (1.0 - prob));
    return p;
}

// Separating-axis intersection test for two oriented rectangles.
// Touching boxes count as overlapping.
inline bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
    auto va = box_vertices(a);
    auto vb = box_vertices(b);
    std::array<Vec2, 4> axes = {a.axis(), a.left_axis(), b.axis(),
                                b.left_axis()};
    for (Vec2 n : axes) {
        double amin = 1e300, amax = -1e300;
        double bmin = 1e300, bmax = -1e300;
        for (Vec2 p : va) {
            double t = p.dot(n);
            amin = std::min(amin, t);
            amax = std::max(amax, t);
        }
        for (Vec2 p : vb) {
            double t = p.dot(n);
            bmin = std::min(bmin, t);
            bmax = std::max(bmax, t);
        }
        if (amax < bmin || bmax < amin) return false;
    }
    return true;
}

}  // namespace scenediff
