#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "scenediff/geometry.hpp"

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

Vec2 rotate(Vec2 p, double phi) {
    return {p.x * std::cos(phi) - p.y * std::sin(phi),
            p.x * std::sin(phi) + p.y * std::cos(phi)};
}

}  // namespace

TEST_CASE("box_vertices axis-aligned") {
    auto v = box_vertices(make_box(0, 0, 0, 4, 2));
    CHECK(v[0].x == doctest::Approx(2));   // FL
    CHECK(v[0].y == doctest::Approx(1));
    CHECK(v[1].x == doctest::Approx(2));   // FR
    CHECK(v[1].y == doctest::Approx(-1));
    CHECK(v[2].x == doctest::Approx(-2));  // BL
    CHECK(v[2].y == doctest::Approx(1));
    CHECK(v[3].x == doctest::Approx(-2));  // BR
    CHECK(v[3].y == doctest::Approx(-1));
}

TEST_CASE("box_vertices quarter turn") {
    auto v = box_vertices(make_box(0, 0, M_PI / 2, 4, 2));
    CHECK(v[0].x == doctest::Approx(-1));
    CHECK(v[0].y == doctest::Approx(2));
    CHECK(v[1].x == doctest::Approx(1));
    CHECK(v[1].y == doctest::Approx(2));
    CHECK(v[2].x == doctest::Approx(-1));
    CHECK(v[2].y == doctest::Approx(-2));
    CHECK(v[3].x == doctest::Approx(1));
    CHECK(v[3].y == doctest::Approx(-2));
}

TEST_CASE("box_vertices rotation-matrix oracle") {
    auto base = box_vertices(make_box(0, 0, 0, 2, 1));
    auto v = box_vertices(make_box(1, 1, M_PI / 6, 2, 1));
    for (int i = 0; i < 4; ++i) {
        Vec2 expect = rotate(base[i], M_PI / 6) + Vec2{1, 1};
        CHECK(v[i].x == doctest::Approx(expect.x).epsilon(1e-12));
        CHECK(v[i].y == doctest::Approx(expect.y).epsilon(1e-12));
    }
}

TEST_CASE("box_vertices rotation equivariance") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::uniform_real_distribution<double> ext(0.5, 6.0);
    for (int it = 0; it < 100; ++it) {
        OrientedBox b = make_box(u(rng), u(rng), normalize_angle(u(rng)), ext(rng), ext(rng));
        double phi = u(rng);
        OrientedBox br = b;
        br.center = rotate(b.center, phi);
        br.heading = normalize_angle(b.heading + phi);
        auto va = box_vertices(b);
        auto vb = box_vertices(br);
        for (int i = 0; i < 4; ++i) {
            Vec2 expect = rotate(va[i], phi);
            CHECK(std::abs(vb[i].x - expect.x) < 1e-9);
            CHECK(std::abs(vb[i].y - expect.y) < 1e-9);
        }
    }
}

TEST_CASE("vertex order is stable") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_real_distribution<double> ext(0.5, 6.0);
    for (int it = 0; it < 50; ++it) {
        OrientedBox b = make_box(u(rng), u(rng), normalize_angle(u(rng)), ext(rng), ext(rng));
        auto v = box_vertices(b);
        CHECK((v[0] - v[1]).norm() == doctest::Approx(b.width).epsilon(1e-12));
        CHECK((v[0] - v[2]).norm() == doctest::Approx(b.length).epsilon(1e-12));
    }
}

TEST_CASE("decode_cell symmetric distances") {
    CellBoxParams p;
    p.reference = {0, 0};
    p.theta_c = 1;
    p.theta_s = 0;
    OrientedBox b = decode_cell(p);  // all d = ln(1)
    CHECK(b.center.x == doctest::Approx(0));
    CHECK(b.center.y == doctest::Approx(0));
    CHECK(b.heading == doctest::Approx(0));
    CHECK(b.length == doctest::Approx(2));
    CHECK(b.width == doctest::Approx(2));
}

TEST_CASE("decode_cell off-center reference") {
    CellBoxParams p;
    p.reference = {0, 0};
    p.theta_c = 1;
    p.theta_s = 0;
    p.d_front = std::log(3.0);
    OrientedBox b = decode_cell(p);
    CHECK(b.center.x == doctest::Approx(1));
    CHECK(b.center.y == doctest::Approx(0));
    CHECK(b.length == doctest::Approx(4));
    CHECK(b.width == doctest::Approx(2));
}

TEST_CASE("decode_cell rejects degenerate orientation") {
    CellBoxParams p;
    p.theta_c = 0;
    p.theta_s = 0;
    CHECK_THROWS_AS(decode_cell(p), std::domain_error);
}

TEST_CASE("decode_cell heading invariant to positive channel scaling") {
    CellBoxParams p;
    p.reference = {0.5, 0.5};
    p.theta_c = 0.3;
    p.theta_s = -0.8;
    OrientedBox a = decode_cell(p);
    p.theta_c *= 7.5;
    p.theta_s *= 7.5;
    OrientedBox b = decode_cell(p);
    CHECK(a.heading == doctest::Approx(b.heading).epsilon(1e-12));
}

TEST_CASE("encode_cell center reference") {
    CellBoxParams p = encode_cell(make_box(0, 0, 0, 4, 2), {0, 0});
    CHECK(p.d_front == doctest::Approx(std::log(2.0)));
    CHECK(p.d_back == doctest::Approx(std::log(2.0)));
    CHECK(p.d_left == doctest::Approx(std::log(1.0)));
    CHECK(p.d_right == doctest::Approx(std::log(1.0)));
}

TEST_CASE("encode_cell shifted reference") {
    CellBoxParams p = encode_cell(make_box(0, 0, 0, 4, 2), {1, 0});
    CHECK(p.d_front == doctest::Approx(std::log(1.0)));
    CHECK(p.d_back == doctest::Approx(std::log(3.0)));
    CHECK(p.d_left == doctest::Approx(std::log(1.0)));
    CHECK(p.d_right == doctest::Approx(std::log(1.0)));
}

TEST_CASE("encode_cell clips outside references") {
    CellBoxParams p = encode_cell(make_box(0, 0, 0, 4, 2), {10, 0});
    CHECK(p.d_front == doctest::Approx(std::log(kDistanceClipFloor)));
    CHECK(p.d_back == doctest::Approx(std::log(12.0)));
}

TEST_CASE("encode/decode round trip for interior references") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-8.0, 8.0);
    std::uniform_real_distribution<double> ext(1.0, 6.0);
    std::uniform_real_distribution<double> frac(-0.45, 0.45);
    for (int it = 0; it < 500; ++it) {
        OrientedBox b = make_box(u(rng), u(rng), normalize_angle(u(rng)), ext(rng), ext(rng));
        Vec2 ref = b.center + (frac(rng) * b.length) * b.axis() +
                   (frac(rng) * b.width) * b.left_axis();
        OrientedBox d = decode_cell(encode_cell(b, ref));
        CHECK(std::abs(d.center.x - b.center.x) < 1e-9);
        CHECK(std::abs(d.center.y - b.center.y) < 1e-9);
        CHECK(std::abs(normalize_angle(d.heading - b.heading)) < 1e-9);
        CHECK(std::abs(d.length - b.length) < 1e-9);
        CHECK(std::abs(d.width - b.width) < 1e-9);
    }
}

TEST_CASE("encode/decode round trip pi/4 example") {
    OrientedBox b = decode_cell([] {
        CellBoxParams p;
        p.reference = {0.5, 0.5};
        p.theta_c = std::sqrt(0.5);
        p.theta_s = std::sqrt(0.5);
        p.d_front = std::log(2.0);
        p.d_back = std::log(1.0);
        p.d_left = std::log(0.5);
        p.d_right = std::log(0.5);
        return p;
    }());
    CHECK(b.heading == doctest::Approx(M_PI / 4));
    CHECK(b.length == doctest::Approx(3.0));
    CHECK(b.width == doctest::Approx(1.0));
    OrientedBox d = decode_cell(encode_cell(b, {0.5, 0.5}));
    CHECK(d.center.x == doctest::Approx(b.center.x).epsilon(1e-12));
    CHECK(d.center.y == doctest::Approx(b.center.y).epsilon(1e-12));
    CHECK(d.length == doctest::Approx(b.length).epsilon(1e-12));
    CHECK(d.width == doctest::Approx(b.width).epsilon(1e-12));
}
