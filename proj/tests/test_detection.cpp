#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <functional>
#include <random>

#include "scenediff/detection.hpp"

using namespace scenediff;

namespace {

OrientedBox make_box(double cx, double cy, double heading, double length, double width) {
    OrientedBox b;
    b.center = {cx, cy};
    b.heading = heading;
    b.length = length;
    b.width = width;
    return b;
}

// 3x4 grid over 12m: twelve 1m cells, references at cell centers.
BoxGrid small_grid() {
    RasterSpec spec;
    spec.height_px = 3;
    spec.width_px = 4;
    spec.extent_m = 3.0;
    return BoxGrid(spec);
}

void set_cell_from_box(BoxGrid& g, int cell, const OrientedBox& box, double logit) {
    CellBoxParams p = encode_cell(box, g.cell_reference(cell));
    p.logit = logit;
    g.set_cell(cell, p);
}

void randomize_grid(BoxGrid& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> logit(-3.0, 3.0);
    std::uniform_real_distribution<double> theta(-1.0, 1.0);
    std::uniform_real_distribution<double> dist(std::log(0.3), std::log(4.0));
    for (int i = 0; i < g.cell_count(); ++i) {
        CellBoxParams p;
        p.logit = logit(rng);
        p.theta_c = theta(rng);
        p.theta_s = theta(rng);
        if (p.theta_c == 0.0 && p.theta_s == 0.0) p.theta_c = 1.0;
        p.d_front = dist(rng);
        p.d_left = dist(rng);
        p.d_back = dist(rng);
        p.d_right = dist(rng);
        g.set_cell(i, p);
    }
}

std::vector<OrientedBox> random_gts(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(-4.0, 4.0);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    std::uniform_real_distribution<double> len(2.0, 6.0);
    std::uniform_real_distribution<double> wid(1.0, 3.0);
    std::vector<OrientedBox> gts;
    for (int i = 0; i < n; ++i)
        gts.push_back(make_box(pos(rng), pos(rng), normalize_angle(ang(rng)), len(rng), wid(rng)));
    return gts;
}

// Exhaustive minimum over all injective assignments.
double brute_force_best(const std::vector<std::vector<double>>& cost) {
    int n = static_cast<int>(cost.size());
    int m = static_cast<int>(cost[0].size());
    double best = 1e300;
    std::vector<int> chosen;
    std::vector<char> used(m, false);
    std::function<void(int, double)> rec = [&](int j, double acc) {
        if (acc >= best) return;
        if (j == n) {
            best = acc;
            return;
        }
        for (int i = 0; i < m; ++i) {
            if (used[i]) continue;
            used[i] = true;
            rec(j + 1, acc + cost[j][i]);
            used[i] = false;
        }
    };
    rec(0, 0.0);
    return best;
}

}  // namespace

TEST_CASE("vertex_cost basics") {
    OrientedBox a = make_box(1, 2, 0.3, 4, 2);
    CHECK(vertex_cost(a, a) == 0.0);
    OrientedBox b = a;
    b.center = b.center + Vec2{3, 4};
    CHECK(vertex_cost(a, b) == doctest::Approx(5.0));
    CHECK(vertex_cost(a, b) == doctest::Approx(vertex_cost(b, a)));
}

TEST_CASE("vertex_cost of a half-turn matches explicit enumeration") {
    OrientedBox a = make_box(0, 0, 0, 4, 2);
    OrientedBox b = make_box(0, 0, M_PI, 4, 2);
    auto va = box_vertices(a);
    auto vb = box_vertices(b);
    double manual = 0.0;
    for (int v = 0; v < 4; ++v) manual += 0.25 * (va[v] - vb[v]).norm();
    CHECK(vertex_cost(a, b) == doctest::Approx(manual));
    // Every corner travels the box diagonal.
    CHECK(manual == doctest::Approx(std::hypot(4.0, 2.0)));
}

TEST_CASE("l1_cost basics") {
    OrientedBox g = make_box(0.3, -0.2, 0.4, 4.5, 2.0);
    CellBoxParams cell = encode_cell(g, {0.5, 0.5});
    CHECK(l1_cost(cell, g) == doctest::Approx(0.0));
    cell.theta_c += 0.1;
    cell.theta_s -= 0.1;
    CHECK(l1_cost(cell, g) == doctest::Approx(0.2));
}

TEST_CASE("l1_cost matches straight-line re-evaluation") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int it = 0; it < 100; ++it) {
        OrientedBox g = make_box(u(rng), u(rng), normalize_angle(u(rng)), 3 + u(rng), 2 + 0.4 * u(rng));
        CellBoxParams c;
        c.reference = {u(rng), u(rng)};
        c.theta_c = u(rng) + 0.1;
        c.theta_s = u(rng);
        c.d_front = 0.3 * u(rng);
        c.d_left = 0.3 * u(rng);
        c.d_back = 0.3 * u(rng);
        c.d_right = 0.3 * u(rng);
        CellBoxParams t = encode_cell(g, c.reference);
        double manual = std::abs(c.theta_c - t.theta_c) + std::abs(c.theta_s - t.theta_s) +
                        std::abs(c.d_front - t.d_front) + std::abs(c.d_left - t.d_left) +
                        std::abs(c.d_back - t.d_back) + std::abs(c.d_right - t.d_right);
        CHECK(std::abs(l1_cost(c, g) - manual) < 1e-12);
    }
}

TEST_CASE("cls_cost values") {
    CHECK(cls_cost(30.0) < 1e-12);
    CHECK(cls_cost(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(cls_cost(-5.0) == doctest::Approx(5.0 + std::log1p(std::exp(-5.0))));
}

TEST_CASE("assign: exact cell wins for a single ground truth") {
    BoxGrid g = small_grid();
    std::mt19937_64 rng(42);
    randomize_grid(g, rng);
    OrientedBox gt = make_box(g.cell_reference(5).x, g.cell_reference(5).y, 0.2, 4, 2);
    set_cell_from_box(g, 5, gt, 8.0);
    Assignment a = assign(g, {gt}, MatchWeights{});
    REQUIRE(a.pairs.size() == 1);
    CHECK(a.pairs[0].second == 5);
    CHECK(a.unmatched_cells.size() == 11);
}

TEST_CASE("assign: empty ground truth") {
    BoxGrid g = small_grid();
    Assignment a = assign(g, {}, MatchWeights{});
    CHECK(a.pairs.empty());
    CHECK(static_cast<int>(a.unmatched_cells.size()) == g.cell_count());
}

TEST_CASE("assign rejects infeasible instances") {
    BoxGrid g = small_grid();
    std::vector<OrientedBox> gts(13, make_box(0, 0, 0, 4, 2));
    CHECK_THROWS_AS(assign(g, gts, MatchWeights{}), std::invalid_argument);
}

TEST_CASE("assign matches brute-force enumeration on 200 instances") {
    std::mt19937_64 rng(43);
    MatchWeights w;
    for (int inst = 0; inst < 200; ++inst) {
        BoxGrid g = small_grid();
        randomize_grid(g, rng);
        int n_gt = 1 + static_cast<int>(rng() % 6);
        std::vector<OrientedBox> gts = random_gts(n_gt, rng);
        std::vector<std::vector<double>> cost(n_gt, std::vector<double>(g.cell_count()));
        for (int j = 0; j < n_gt; ++j)
            for (int i = 0; i < g.cell_count(); ++i) cost[j][i] = match_cost(g, i, gts[j], w);
        Assignment a = assign(g, gts, w);
        double total = 0.0;
        for (auto& [j, i] : a.pairs) total += cost[j][i];
        CHECK(total == doctest::Approx(brute_force_best(cost)).epsilon(1e-12));
    }
}

TEST_CASE("detection_loss: perfect prediction is near zero") {
    BoxGrid g = small_grid();
    for (int i = 0; i < g.cell_count(); ++i) {
        CellBoxParams p;
        p.logit = -30.0;
        p.theta_c = 1.0;
        g.set_cell(i, p);
    }
    std::vector<OrientedBox> gts = {make_box(g.cell_reference(2).x, g.cell_reference(2).y, 0.3, 4, 2),
                                    make_box(g.cell_reference(9).x, g.cell_reference(9).y, -1.0, 5, 2)};
    set_cell_from_box(g, 2, gts[0], 30.0);
    set_cell_from_box(g, 9, gts[1], 30.0);
    DetectionLossResult r = detection_loss(g, gts, MatchWeights{});
    CHECK(r.total < 1e-6);
}

TEST_CASE("detection_loss: no ground truth, all logits zero") {
    BoxGrid g = small_grid();
    for (int i = 0; i < g.cell_count(); ++i) {
        CellBoxParams p;
        p.theta_c = 1.0;
        g.set_cell(i, p);
    }
    MatchWeights w;
    DetectionLossResult r = detection_loss(g, {}, w);
    CHECK(r.total == doctest::Approx(w.beta_cls * std::log(2.0)));
    CHECK(r.l1 == 0.0);
    CHECK(r.vert == 0.0);
}

TEST_CASE("detection_loss gradient matches finite differences (frozen assignment)") {
    std::mt19937_64 rng(44);
    BoxGrid g = small_grid();
    randomize_grid(g, rng);
    std::vector<OrientedBox> gts = random_gts(1, rng);
    MatchWeights w;
    Assignment asg = assign(g, gts, w);
    DetectionLossResult r = detection_loss_with_assignment(g, gts, asg, w);
    const double h = 1e-6;
    double max_rel = 0.0;
    for (size_t k = 0; k < g.data.size(); ++k) {
        BoxGrid gp = g, gm = g;
        gp.data[k] += h;
        gm.data[k] -= h;
        double fd = (detection_loss_with_assignment(gp, gts, asg, w).total -
                     detection_loss_with_assignment(gm, gts, asg, w).total) /
                    (2 * h);
        double denom = std::max({std::abs(fd), std::abs(r.grad[k]), 1e-6});
        max_rel = std::max(max_rel, std::abs(fd - r.grad[k]) / denom);
    }
    CHECK(max_rel < 1e-6);
}

TEST_CASE("vertex cost separates the adjacent-vehicle failure mode") {
    // Ground truth at the origin; candidate A is a perfect box for the
    // adjacent vehicle one lane over; candidate B has the right center
    // but 20% extent error.
    OrientedBox gt = make_box(0, 0, 0, 4, 2);
    OrientedBox box_a = make_box(0, 3.5, 0, 4, 2);
    OrientedBox box_b = make_box(0, 0, 0, 4.8, 2.4);
    double vert_a = vertex_cost(box_a, gt);
    double vert_b = vertex_cost(box_b, gt);
    CHECK(vert_a > vert_b);

    CellBoxParams cell_a = encode_cell(box_a, {0.0, 3.5});
    cell_a.logit = 2.0;
    CellBoxParams cell_b = encode_cell(box_b, {0.0, 0.0});
    cell_b.logit = 2.0;
    MatchWeights w;
    double cost_a = w.alpha_cls * cls_cost(cell_a.logit) + w.alpha_l1 * l1_cost(cell_a, gt) +
                    w.alpha_vert * vert_a;
    double cost_b = w.alpha_cls * cls_cost(cell_b.logit) + w.alpha_l1 * l1_cost(cell_b, gt) +
                    w.alpha_vert * vert_b;
    CHECK(cost_b < cost_a);
}

TEST_CASE("detection_loss is invariant to ground-truth permutation") {
    std::mt19937_64 rng(45);
    BoxGrid g = small_grid();
    randomize_grid(g, rng);
    std::vector<OrientedBox> gts = random_gts(4, rng);
    MatchWeights w;
    DetectionLossResult a = detection_loss(g, gts, w);
    Assignment asg_a = assign(g, gts, w);
    std::vector<int> matched_a;
    for (auto& [j, i] : asg_a.pairs) matched_a.push_back(i);
    std::sort(matched_a.begin(), matched_a.end());

    std::reverse(gts.begin(), gts.end());
    DetectionLossResult b = detection_loss(g, gts, w);
    Assignment asg_b = assign(g, gts, w);
    std::vector<int> matched_b;
    for (auto& [j, i] : asg_b.pairs) matched_b.push_back(i);
    std::sort(matched_b.begin(), matched_b.end());

    CHECK(a.total == doctest::Approx(b.total).epsilon(1e-12));
    CHECK(matched_a == matched_b);
}
