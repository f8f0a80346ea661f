#pragma once

// One-to-one oriented-box matching and the detection loss: binary
// cross-entropy on cell logits, L1 on the six shape channels, and the
// vertex cost (mean corner distance) standing in for rotated IoU.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "scenediff/geometry.hpp"
#include "scenediff/raster.hpp"

namespace scenediff {

// Decoder output y: a 7-channel cell grid over the scene extent, one
// candidate box per cell, reference point at the cell center.
struct BoxGrid {
    RasterSpec spec;  // height_px == width_px == grid size G
    std::vector<double> data;

    BoxGrid() = default;
    explicit BoxGrid(RasterSpec s)
        : spec(s), data(static_cast<size_t>(kCellChannels) * s.height_px * s.width_px, 0.0) {}

    int cell_count() const { return spec.height_px * spec.width_px; }

    double& channel(int ch, int cell) {
        return data[static_cast<size_t>(ch) * cell_count() + cell];
    }
    double channel(int ch, int cell) const {
        return data[static_cast<size_t>(ch) * cell_count() + cell];
    }

    Vec2 cell_reference(int cell) const {
        return spec.pixel_center(cell / spec.width_px, cell % spec.width_px);
    }

    CellBoxParams cell_params(int cell) const {
        CellBoxParams p;
        p.logit = channel(0, cell);
        p.theta_c = channel(1, cell);
        p.theta_s = channel(2, cell);
        p.d_front = channel(3, cell);
        p.d_left = channel(4, cell);
        p.d_back = channel(5, cell);
        p.d_right = channel(6, cell);
        p.reference = cell_reference(cell);
        return p;
    }

    void set_cell(int cell, const CellBoxParams& p) {
        channel(0, cell) = p.logit;
        channel(1, cell) = p.theta_c;
        channel(2, cell) = p.theta_s;
        channel(3, cell) = p.d_front;
        channel(4, cell) = p.d_left;
        channel(5, cell) = p.d_back;
        channel(6, cell) = p.d_right;
    }

    bool cell_degenerate(int cell) const {
        return channel(1, cell) == 0.0 && channel(2, cell) == 0.0;
    }
};

struct MatchWeights {
    double alpha_cls = 4.0;
    double alpha_l1 = 1.0;
    double alpha_vert = 1.0;
    double beta_cls = 20.0;
    double beta_l1 = 1.0;
    double beta_vert = 1.0;

    bool valid() const {
        return alpha_cls >= 0 && alpha_l1 >= 0 && alpha_vert >= 0 &&
               beta_cls >= 0 && beta_l1 >= 0 && beta_vert >= 0 &&
               alpha_cls + alpha_l1 + alpha_vert > 0;
    }
};

inline double vertex_cost(const OrientedBox& b, const OrientedBox& g) {
    auto vb = box_vertices(b);
    auto vg = box_vertices(g);
    double total = 0.0;
    for (int v = 0; v < 4; ++v) total += (vb[v] - vg[v]).norm();
    return 0.25 * total;
}

// L1 over the six shape channels (logit excluded); the target is the
// ground truth re-encoded from the cell's own reference point.
inline double l1_cost(const CellBoxParams& cell, const OrientedBox& g) {
    CellBoxParams t = encode_cell(g, cell.reference);
    return std::abs(cell.theta_c - t.theta_c) + std::abs(cell.theta_s - t.theta_s) +
           std::abs(cell.d_front - t.d_front) + std::abs(cell.d_left - t.d_left) +
           std::abs(cell.d_back - t.d_back) + std::abs(cell.d_right - t.d_right);
}

// BCE against target probability 1.
inline double cls_cost(double logit) { return softplus_neg(logit); }

struct Assignment {
    // (ground-truth index, cell index) pairs, one per ground truth.
    std::vector<std::pair<int, int>> pairs;
    std::vector<int> unmatched_cells;

    int matched_cell(int gt) const { return pairs[gt].second; }
};

namespace detail {

// Shortest-augmenting-path assignment (Jonker-Volgenant style) for a
// rows x cols cost matrix with rows <= cols. Returns the matched
// column per row; total cost is globally minimal.
inline std::vector<int> min_cost_assignment(const std::vector<std::vector<double>>& cost) {
    int n = static_cast<int>(cost.size());
    if (n == 0) return {};
    int m = static_cast<int>(cost[0].size());
    if (n > m) throw std::invalid_argument("min_cost_assignment: more rows than columns");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, false);
        do {
            used[j0] = true;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> match(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] > 0) match[p[j] - 1] = j - 1;
    return match;
}

inline OrientedBox decode_cell_guarded(const BoxGrid& grid, int cell, bool& ok) {
    if (grid.cell_degenerate(cell)) {
        ok = false;
        return {};
    }
    ok = true;
    return decode_cell(grid.cell_params(cell));
}

}  // namespace detail

inline double match_cost(const BoxGrid& cells, int cell, const OrientedBox& g,
                         const MatchWeights& w) {
    bool ok = false;
    OrientedBox b = detail::decode_cell_guarded(cells, cell, ok);
    double vert = ok ? vertex_cost(b, g) : 1e9;
    return w.alpha_cls * cls_cost(cells.channel(0, cell)) +
           w.alpha_l1 * l1_cost(cells.cell_params(cell), g) + w.alpha_vert * vert;
}

inline Assignment assign(const BoxGrid& cells, const std::vector<OrientedBox>& gts,
                         const MatchWeights& w) {
    if (!w.valid()) throw std::invalid_argument("assign: bad match weights");
    int n_gt = static_cast<int>(gts.size());
    int n_cell = cells.cell_count();
    if (n_gt > n_cell)
        throw std::invalid_argument("assign: more ground-truth boxes than cells");
    Assignment out;
    if (n_gt > 0) {
        std::vector<std::vector<double>> cost(n_gt, std::vector<double>(n_cell));
        for (int j = 0; j < n_gt; ++j)
            for (int i = 0; i < n_cell; ++i) cost[j][i] = match_cost(cells, i, gts[j], w);
        std::vector<int> match = detail::min_cost_assignment(cost);
        out.pairs.reserve(n_gt);
        for (int j = 0; j < n_gt; ++j) out.pairs.emplace_back(j, match[j]);
    }
    std::vector<char> taken(n_cell, false);
    for (auto& [j, i] : out.pairs) taken[i] = true;
    for (int i = 0; i < n_cell; ++i)
        if (!taken[i]) out.unmatched_cells.push_back(i);
    return out;
}

struct DetectionLossResult {
    double total = 0.0;
    double cls = 0.0;
    double l1 = 0.0;
    double vert = 0.0;
    // d total / d cell channels, same layout as BoxGrid::data.
    std::vector<double> grad;
};

namespace detail {

inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Vertex cost and its gradient w.r.t. the cell's six shape channels
// (theta_c, theta_s, d_front, d_left, d_back, d_right). The decoded
// vertices are ref + {e_f,-e_b} u + {e_l,-e_r} u_perp with u the unit
// heading, so the chain rule stays in closed form.
inline double vertex_cost_grad(const CellBoxParams& p, const OrientedBox& g,
                               double out[6]) {
    double n = std::hypot(p.theta_c, p.theta_s);
    double c = p.theta_c / n, s = p.theta_s / n;
    double ef = std::exp(p.d_front), el = std::exp(p.d_left);
    double eb = std::exp(p.d_back), er = std::exp(p.d_right);
    Vec2 u{c, s}, w{-s, c};
    auto vg = box_vertices(g);
    // Decoded vertices in FL, FR, BL, BR order.
    Vec2 vb[4] = {p.reference + ef * u + el * w, p.reference + ef * u - er * w,
                  p.reference - eb * u + el * w, p.reference - eb * u - er * w};
    double cost = 0.0;
    Vec2 gv[4];
    for (int v = 0; v < 4; ++v) {
        Vec2 d = vb[v] - vg[v];
        double nd = d.norm();
        cost += 0.25 * nd;
        gv[v] = nd > 1e-12 ? (0.25 / nd) * d : Vec2{0.0, 0.0};
    }
    double def = (gv[0] + gv[1]).dot(u);
    double deb = -(gv[2] + gv[3]).dot(u);
    double del = (gv[0] + gv[2]).dot(w);
    double der = -(gv[1] + gv[3]).dot(w);
    Vec2 gu = ef * (gv[0] + gv[1]) - eb * (gv[2] + gv[3]);
    Vec2 gw = el * (gv[0] + gv[2]) - er * (gv[1] + gv[3]);
    double dc = gu.x + gw.y;   // u = (c, s), w = (-s, c)
    double ds = gu.y - gw.x;
    out[0] = (dc * s * s - ds * c * s) / n;   // d/d theta_c
    out[1] = (-dc * c * s + ds * c * c) / n;  // d/d theta_s
    out[2] = def * ef;
    out[3] = del * el;
    out[4] = deb * eb;
    out[5] = der * er;
    return cost;
}

}  // namespace detail

// Three-term detection loss. The assignment is treated as a constant:
// gradients do not flow through the matching.
inline DetectionLossResult detection_loss_with_assignment(
    const BoxGrid& cells, const std::vector<OrientedBox>& gts,
    const Assignment& asg, const MatchWeights& w) {
    int n_cell = cells.cell_count();
    int n_match = static_cast<int>(asg.pairs.size());
    DetectionLossResult r;
    r.grad.assign(cells.data.size(), 0.0);

    std::vector<char> matched(n_cell, false);
    for (auto& [j, i] : asg.pairs) matched[i] = true;

    // Classification: mean BCE over all cells against the matched flag.
    for (int i = 0; i < n_cell; ++i) {
        double l = cells.channel(0, i);
        double t = matched[i] ? 1.0 : 0.0;
        r.cls += matched[i] ? softplus_neg(l) : softplus_neg(-l);
        r.grad[i] += w.beta_cls * (sigmoid(l) - t) / n_cell;
    }
    r.cls /= n_cell;

    // Shape terms: matched pairs only.
    if (n_match > 0) {
        double inv = 1.0 / n_match;
        for (auto& [j, i] : asg.pairs) {
            CellBoxParams p = cells.cell_params(i);
            CellBoxParams t = encode_cell(gts[j], p.reference);
            double pred[6] = {p.theta_c, p.theta_s, p.d_front, p.d_left, p.d_back, p.d_right};
            double targ[6] = {t.theta_c, t.theta_s, t.d_front, t.d_left, t.d_back, t.d_right};
            for (int k = 0; k < 6; ++k) {
                r.l1 += inv * std::abs(pred[k] - targ[k]);
                r.grad[static_cast<size_t>(k + 1) * n_cell + i] +=
                    w.beta_l1 * inv * detail::sign(pred[k] - targ[k]);
            }
            double vg[6];
            r.vert += inv * detail::vertex_cost_grad(p, gts[j], vg);
            for (int k = 0; k < 6; ++k)
                r.grad[static_cast<size_t>(k + 1) * n_cell + i] += w.beta_vert * inv * vg[k];
        }
    }
    r.total = w.beta_cls * r.cls + w.beta_l1 * r.l1 + w.beta_vert * r.vert;
    return r;
}

inline DetectionLossResult detection_loss(const BoxGrid& cells,
                                          const std::vector<OrientedBox>& gts,
                                          const MatchWeights& w) {
    return detection_loss_with_assignment(cells, gts, assign(cells, gts, w), w);
}

}  // namespace scenediff
