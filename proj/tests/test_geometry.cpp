#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "perfhom/geometry.hpp"

using namespace perfhom;

namespace {

PerforatedGeometry single_ball(int n, double window, double delta, double r_star, Vec center,
                               double radius) {
    PerforatedGeometry g;
    g.n = n;
    g.t = window;
    g.delta = delta;
    g.r_star = r_star;
    g.balls.push_back({center, radius});
    return g;
}

RealizationSeed bernoulli(std::uint64_t seed, double spacing, double radius, double prob) {
    RealizationSeed rs;
    rs.seed = seed;
    rs.kind = GeneratorKind::bernoulli_lattice;
    rs.spacing = spacing;
    rs.radius = radius;
    rs.occupation_prob = prob;
    return rs;
}

RealizationSeed hardcore(std::uint64_t seed, double intensity, double r_min, double r_max) {
    RealizationSeed rs;
    rs.seed = seed;
    rs.kind = GeneratorKind::hardcore_rejection;
    rs.intensity = intensity;
    rs.r_min = r_min;
    rs.r_max = r_max;
    return rs;
}

} // namespace

TEST_CASE("bernoulli lattice: zero occupation gives no balls") {
    auto g = gen_bernoulli_lattice(bernoulli(7, 1.0, 0.2, 0.0), 2, 4.0, 0.05, 0.4);
    CHECK(g.balls.empty());
    CHECK(empirical_density(g) == 1.0);
}

TEST_CASE("bernoulli lattice: full occupation enumerates the half-open window sites") {
    auto g = gen_bernoulli_lattice(bernoulli(7, 1.0, 0.2, 1.0), 2, 4.0, 0.05, 0.4);
    CHECK(g.balls.size() == 16); // integer lattice sites in [0,4)^2
    CHECK(verify_separation(g).empty());
    for (const auto& b : g.balls) {
        CHECK(b.center[0] == double(int(b.center[0])));
        CHECK(b.radius == 0.2);
    }
}

TEST_CASE("bernoulli lattice: identical seeds reproduce bit-exact ball lists") {
    auto a = gen_bernoulli_lattice(bernoulli(42, 1.0, 0.2, 0.5), 2, 6.0, 0.05, 0.4);
    auto b = gen_bernoulli_lattice(bernoulli(42, 1.0, 0.2, 0.5), 2, 6.0, 0.05, 0.4);
    REQUIRE(a.balls.size() == b.balls.size());
    for (std::size_t i = 0; i < a.balls.size(); ++i) {
        CHECK(a.balls[i].center == b.balls[i].center);
        CHECK(a.balls[i].radius == b.balls[i].radius);
    }
    auto c = gen_bernoulli_lattice(bernoulli(43, 1.0, 0.2, 0.5), 2, 6.0, 0.05, 0.4);
    CHECK(a.balls.size() != c.balls.size()); // different seed, different draw
}

TEST_CASE("bernoulli lattice: separation-impossible parameters are rejected") {
    CHECK_THROWS_AS(gen_bernoulli_lattice(bernoulli(1, 1.0, 0.45, 1.0), 2, 4.0, 0.06, 0.5),
                    std::invalid_argument);
}

TEST_CASE("hardcore rejection: zero intensity gives the empty geometry") {
    auto g = gen_hardcore_rejection(hardcore(3, 0.0, 0.1, 0.2), 2, 5.0, 0.1, 0.3);
    CHECK(g.balls.empty());
    CHECK(empirical_density(g) == 1.0);
}

TEST_CASE("hardcore rejection: fixed seed output satisfies the separation predicate") {
    auto g = gen_hardcore_rejection(hardcore(11, 2.0, 0.1, 0.25), 2, 10.0, 0.1, 0.3);
    CHECK(g.balls.size() > 10);
    CHECK(verify_separation(g).empty());
}

TEST_CASE("verify_separation: dilated-ball overlap arithmetic") {
    PerforatedGeometry g;
    g.n = 2;
    g.t = 10.0;
    g.r_star = 1.5;
    g.balls.push_back({{0.0, 0.0, 0.0}, 1.0});
    g.balls.push_back({{3.0, 0.0, 0.0}, 1.0});

    g.delta = 0.4; // gap 1 > 2*0.4
    CHECK(verify_separation(g).empty());

    g.delta = 0.6; // gap 1 < 2*0.6
    auto bad = verify_separation(g);
    REQUIRE(bad.size() == 1);
    CHECK(bad[0] == std::pair<int, int>{0, 1});

    g.balls.pop_back();
    CHECK(verify_separation(g).empty()); // single ball
}

TEST_CASE("hardcore acceptance margin: just-too-close pair is a violation") {
    PerforatedGeometry g;
    g.n = 2;
    g.t = 10.0;
    g.delta = 0.5;
    g.r_star = 1.5;
    double d = 1.0 + 1.0 + 2 * 0.5; // r1 + r2 + 2 delta
    g.balls.push_back({{0.0, 0.0, 0.0}, 1.0});
    g.balls.push_back({{d - 1e-6, 0.0, 0.0}, 1.0});
    CHECK(verify_separation(g).size() == 1);
    g.balls[1].center[0] = d + 1e-6;
    CHECK(verify_separation(g).empty());
}

TEST_CASE("empirical_density: closed-form disk areas") {
    auto g = single_ball(2, 1.0, 0.1, 0.5, {0.5, 0.5, 0.0}, 0.25);
    CHECK(empirical_density(g) == doctest::Approx(1.0 - pi / 16.0).epsilon(1e-12));

    auto out = single_ball(2, 1.0, 0.1, 0.5, {5.0, 5.0, 0.0}, 0.25);
    CHECK(empirical_density(out) == 1.0);

    PerforatedGeometry empty;
    empty.n = 2;
    empty.t = 3.0;
    CHECK(empirical_density(empty) == 1.0);
}

TEST_CASE("disk_box_area: clipped configurations") {
    // half disk: center on the box edge
    double half = disk_box_area({0.0, 0.5, 0.0}, 0.25, 0.0, 0.0, 1.0, 1.0);
    CHECK(half == doctest::Approx(0.5 * pi * 0.25 * 0.25).epsilon(1e-12));
    // quarter disk at a corner
    double quarter = disk_box_area({0.0, 0.0, 0.0}, 0.25, 0.0, 0.0, 1.0, 1.0);
    CHECK(quarter == doctest::Approx(0.25 * pi * 0.25 * 0.25).epsilon(1e-12));
    // box fully inside the disk
    double boxed = disk_box_area({0.5, 0.5, 0.0}, 2.0, 0.0, 0.0, 1.0, 1.0);
    CHECK(boxed == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ball_box_volume: quadrature against closed forms") {
    Vec lo{0, 0, 0}, hi{1, 1, 1};
    double r = 0.3;
    double full = ball_box_volume({0.5, 0.5, 0.5}, r, lo, hi);
    CHECK(full == doctest::Approx(4.0 / 3.0 * pi * r * r * r).epsilon(1e-8));
    double half = ball_box_volume({0.5, 0.5, 0.0}, r, lo, hi);
    CHECK(half == doctest::Approx(0.5 * 4.0 / 3.0 * pi * r * r * r).epsilon(1e-7));
    CHECK(ball_box_volume({5, 5, 5}, r, lo, hi) == 0.0);
}

TEST_CASE("density_lower_bound: annulus and complement branches") {
    PerforatedGeometry empty;
    empty.n = 2;
    empty.t = 1.0;
    CHECK(density_lower_bound(empty) == 1.0);

    auto g = single_ball(2, 1.0, 0.1, 0.5, {0.5, 0.5, 0.0}, 0.25);
    double annulus = pi * (0.35 * 0.35 - 0.25 * 0.25); // ~0.1885
    double complement = 1.0 - pi * 0.25 * 0.25;        // ~0.8037
    CHECK(density_lower_bound(g) == doctest::Approx(std::max(annulus, complement)).epsilon(1e-12));
    CHECK(density_lower_bound(g) <= empirical_density(g) + 1e-6);
}

TEST_CASE("density bounds hold over seeded ensembles of both generators") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto g = gen_hardcore_rejection(hardcore(seed, 1.5, 0.08, 0.2), 2, 6.0, 0.1, 0.3);
        CHECK(verify_separation(g).empty());
        double lb = density_lower_bound(g);
        double d = empirical_density(g);
        CHECK(lb > 0.0);
        CHECK(lb <= 1.0);
        CHECK(lb <= d + 1e-6);

        auto b = gen_bernoulli_lattice(bernoulli(seed, 1.0, 0.2, 0.6), 2, 6.0, 0.05, 0.4);
        CHECK(verify_separation(b).empty());
        CHECK(density_lower_bound(b) > 0.0);
        CHECK(density_lower_bound(b) <= empirical_density(b) + 1e-6);
    }
    // a 3-D sample as well
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto g = gen_hardcore_rejection(hardcore(seed, 0.5, 0.1, 0.2), 3, 4.0, 0.1, 0.3);
        CHECK(verify_separation(g).empty());
        CHECK(density_lower_bound(g) > 0.0);
        CHECK(density_lower_bound(g) <= empirical_density(g) + 1e-6);
    }
}

TEST_CASE("translation equivariance of the exact density") {
    auto g = gen_hardcore_rejection(hardcore(5, 1.5, 0.08, 0.2), 2, 6.0, 0.1, 0.3);
    double d0 = empirical_density(g);
    Vec v{1.25, -0.75, 0.0};
    auto gt = translate(g, v);
    CHECK(std::abs(empirical_density(gt) - d0) <= 1e-12);
}

TEST_CASE("homothety scaling of geometries preserves density") {
    auto g = gen_hardcore_rejection(hardcore(9, 1.5, 0.08, 0.2), 2, 4.0, 0.1, 0.3);
    auto g2 = scaled(g, 2.0);
    CHECK(g2.t == 8.0);
    CHECK(g2.delta == 0.2);
    CHECK(std::abs(empirical_density(g2) - empirical_density(g)) <= 1e-12);
}

TEST_CASE("boundary ball flags") {
    auto g = single_ball(2, 4.0, 0.1, 0.6, {2.0, 2.0, 0.0}, 0.5);
    CHECK_FALSE(g.ball_is_boundary(0));
    auto b = single_ball(2, 4.0, 0.1, 0.6, {0.2, 2.0, 0.0}, 0.5);
    CHECK(b.ball_is_boundary(0));
}
