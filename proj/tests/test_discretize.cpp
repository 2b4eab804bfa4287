#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "perfhom/energy.hpp"

#include <cstdio>

using namespace perfhom;

namespace {

PerforatedGeometry one_ball(int n, double t, double delta, double r_star, Vec c, double r) {
    PerforatedGeometry g;
    g.n = n;
    g.t = t;
    g.delta = delta;
    g.r_star = r_star;
    g.balls.push_back({c, r});
    return g;
}

PerforatedGeometry empty_geo(int n, double t, double delta = 0.25, double r_star = 0.45) {
    PerforatedGeometry g;
    g.n = n;
    g.t = t;
    g.delta = delta;
    g.r_star = r_star;
    return g;
}

SbvField random_sbv(const Grid& g, std::uint64_t seed, bool with_jumps) {
    SbvField f(g);
    Rng rng(seed);
    for (auto& v : f.v) v = rng.uniform(-1.0, 1.0);
    if (with_jumps)
        for (auto& j : f.jump) j = rng.uniform01() < 0.05 ? 1 : 0;
    return f;
}

} // namespace

TEST_CASE("rasterize: empty geometry has no hole cells") {
    Masks mk = rasterize(empty_geo(2, 2.0), 0.1);
    CHECK_FALSE(mk.any_hole());
}

TEST_CASE("rasterize: hole cell area approximates the disk area") {
    auto g = one_ball(2, 1.0, 0.1, 0.5, {0.5, 0.5, 0.0}, 0.25);
    Masks mk = rasterize(g, 1.0 / 64.0);
    long long holes = 0;
    for (auto f : mk.hole_cells) holes += f;
    double area = double(holes) * mk.grid.h * mk.grid.h;
    CHECK(area == doctest::Approx(pi / 16.0).epsilon(0.05));
}

TEST_CASE("rasterize: frame cell and node counts (m=8, width 1)") {
    Masks mk = rasterize(empty_geo(2, 2.0, 0.51), 0.25);
    REQUIRE(mk.grid.m == 8);
    long long frame_cells = 0;
    for (auto f : mk.frame_cells) frame_cells += f;
    CHECK(frame_cells == 28); // 8^2 - 6^2
    long long frame_nodes = 0;
    for (auto f : mk.frame_nodes) frame_nodes += f;
    CHECK(frame_nodes == 56); // 9^2 - 5^2: nodes of the frame cells
}

TEST_CASE("rasterize: refuses h >= delta/2") {
    auto g = one_ball(2, 1.0, 0.1, 0.5, {0.5, 0.5, 0.0}, 0.25);
    CHECK_THROWS_WITH_AS(rasterize(g, 0.05), doctest::Contains("resolution error"),
                         std::invalid_argument);
}

TEST_CASE("rasterize: annuli of distinct balls stay disjoint") {
    RealizationSeed rs;
    rs.kind = GeneratorKind::hardcore_rejection;
    rs.seed = 4;
    rs.intensity = 2.0;
    rs.r_min = 0.08;
    rs.r_max = 0.2;
    auto g = gen_hardcore_rejection(rs, 2, 5.0, 0.1, 0.3);
    Masks mk = rasterize(g, 0.04);
    std::vector<int> owner(mk.grid.cell_count(), -1);
    for (std::size_t b = 0; b < mk.annulus_cells.size(); ++b)
        for (int cid : mk.annulus_cells[b]) {
            CHECK(owner[cid] == -1);
            owner[cid] = static_cast<int>(b);
        }
}

TEST_CASE("volume_energy: affine, constant, and hole-masked values") {
    double t = 2.0;
    Masks mk = rasterize(empty_geo(2, t), 0.1);
    VolumeIntegrand q = VolumeIntegrand::constant(2.0);

    ScalarField u = affine_field(mk.grid, {1.0, 0.0, 0.0});
    CHECK(volume_energy(u, q, mk) == doctest::Approx(t * t).epsilon(1e-14));

    ScalarField c(mk.grid, 3.7);
    CHECK(volume_energy(c, q, mk) == 0.0);

    // one hole, weight 0: energy drops by exactly |xi|^2 * rasterized volume
    auto g = one_ball(2, t, 0.2, 0.5, {1.0, 1.0, 0.0}, 0.4);
    Masks mh = rasterize(g, 0.05);
    long long holes = 0;
    for (auto f : mh.hole_cells) holes += f;
    double vol = double(holes) * mh.grid.h * mh.grid.h;
    ScalarField uh = affine_field(mh.grid, {1.0, 0.0, 0.0});
    CHECK(volume_energy(uh, q, mh) == doctest::Approx(t * t - vol).epsilon(1e-12));
}

TEST_CASE("volume_energy: p=3 affine value") {
    double t = 1.0;
    Masks mk = rasterize(empty_geo(2, t, 0.3), 0.125);
    VolumeIntegrand q = VolumeIntegrand::constant(3.0);
    ScalarField u = affine_field(mk.grid, {1.0, 1.0, 0.0});
    CHECK(volume_energy(u, q, mk) == doctest::Approx(std::pow(2.0, 1.5) * t * t).epsilon(1e-12));
}

TEST_CASE("surface_energy: flat axis interfaces are exactly calibrated") {
    for (int n : {2, 3}) {
        double t = 1.0;
        Masks mk = rasterize(empty_geo(n, t, 0.3), n == 2 ? 1.0 / 16 : 1.0 / 8);
        SurfaceIntegrand s = SurfaceIntegrand::constant(1.0);
        for (int axis = 0; axis < n; ++axis) {
            Vec nu{0, 0, 0};
            nu[axis] = 1.0;
            Vec anchor = mk.grid.cell_center(mk.grid.cell_coords(0));
            anchor[axis] += 0.5 * mk.grid.h + 3 * mk.grid.h; // between cell layers
            LabelField u = label_datum(mk.grid, anchor, nu);
            CHECK(surface_energy(u, s, mk) == doctest::Approx(1.0).epsilon(1e-12));
            LabelField flipped = u;
            for (auto& v : flipped.v) v = 1 - v;
            CHECK(surface_energy(flipped, s, mk) == surface_energy(u, s, mk));
        }
        LabelField constant(mk.grid, 1);
        CHECK(surface_energy(constant, s, mk) == 0.0);
    }
}

TEST_CASE("surface_energy: interface position does not matter") {
    Masks mk = rasterize(empty_geo(2, 1.0, 0.3), 1.0 / 16);
    SurfaceIntegrand s = SurfaceIntegrand::constant(1.0);
    for (int row = 1; row < 15; ++row) {
        LabelField u(mk.grid, 0);
        for (long long cid = 0; cid < mk.grid.cell_count(); ++cid)
            if (mk.grid.cell_coords(static_cast<int>(cid))[1] >= row) u.v[cid] = 1;
        CHECK(surface_energy(u, s, mk) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("surface_energy: varying isotropic weight integrates the interface mean to O(h)") {
    Masks mk = rasterize(empty_geo(2, 1.0, 0.3), 1.0 / 16);
    SurfaceIntegrand s =
        SurfaceIntegrand::isotropic([](const Vec& x) { return 1.0 + 0.5 * x[0]; }, 1.0, 1.5);
    Vec anchor{0.5, 0.5 + 0.5 * mk.grid.h, 0.0};
    LabelField u = label_datum(mk.grid, anchor, {0.0, 1.0, 0.0});
    // mean of 1 + x/2 over the interface x in [0,1] is 1.25; the diagonal
    // facets sample g half a cell off-center, an O(h) quadrature bias
    CHECK(surface_energy(u, s, mk) == doctest::Approx(1.25).epsilon(0.01));
}

TEST_CASE("surface_energy: flat cut through a masked hole costs t minus the chord") {
    double t = 1.0;
    auto g = one_ball(2, t, 0.1, 0.5, {0.5, 0.5, 0.0}, 0.2);
    Masks mk = rasterize(g, 1.0 / 32);
    SurfaceIntegrand s = SurfaceIntegrand::constant(1.0, 0.0);
    Vec anchor{0.5 + 0.3127 * mk.grid.h, 0.5 + 0.1741 * mk.grid.h, 0.0};
    LabelField u = label_datum(mk.grid, anchor, {0.0, 1.0, 0.0});

    // independent facet enumeration: the full cut minus the hole-hole part
    double chord = 0.0;
    for_each_facet(mk.grid, facet_families(mk.grid), [&](int c, int d, const FacetFamily& f, bool) {
        if (u.v[c] == u.v[d]) return;
        if (mk.hole_cells[c] && mk.hole_cells[d])
            chord += f.sigma * 1.0;
    });
    CHECK(chord > 0.0);
    double e = surface_energy(u, s, mk);
    CHECK(e == doctest::Approx(1.0 - chord).epsilon(1e-12));
    CHECK(e < 1.0);
}

TEST_CASE("energies are nondecreasing in the hole weight") {
    auto g = one_ball(2, 1.0, 0.1, 0.5, {0.5, 0.5, 0.0}, 0.2);
    Masks mk = rasterize(g, 1.0 / 32);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        double w1 = rng.uniform01(), w2 = rng.uniform01();
        if (w1 > w2) std::swap(w1, w2);

        ScalarField u(mk.grid);
        for (auto& v : u.v) v = rng.uniform(-1.0, 1.0);
        VolumeIntegrand q1 = VolumeIntegrand::constant(2.0, 1.0, w1);
        VolumeIntegrand q2 = VolumeIntegrand::constant(2.0, 1.0, w2);
        CHECK(volume_energy(u, q1, mk) <= volume_energy(u, q2, mk));

        LabelField lab(mk.grid);
        for (auto& v : lab.v) v = rng.uniform01() < 0.5 ? 1 : 0;
        SurfaceIntegrand s1 = SurfaceIntegrand::constant(1.0, w1);
        SurfaceIntegrand s2 = SurfaceIntegrand::constant(1.0, w2);
        CHECK(surface_energy(lab, s1, mk) <= surface_energy(lab, s2, mk));
    }
}

TEST_CASE("msp_energy: constants, jump planes, and the affine match") {
    double t = 1.0;
    Masks mk = rasterize(empty_geo(2, t, 0.3), 1.0 / 16);

    SbvField c(mk.grid, 2.5);
    CHECK(msp_energy(c, 2.0, mk, Region::all) == 0.0);

    SbvField plane = sbv_plane_jump(mk.grid, {0.5, 0.5 + 0.5 * mk.grid.h, 0.0}, {0.0, 1.0, 0.0});
    CHECK(msp_energy(plane, 2.0, mk, Region::all) == doctest::Approx(1.0).epsilon(1e-12));

    SbvField aff(mk.grid);
    aff.v = affine_field(mk.grid, {1.0, 0.0, 0.0}).v;
    double msp = msp_energy(aff, 2.0, mk, Region::all);
    VolumeIntegrand q = VolumeIntegrand::constant(2.0, 1.0, 1.0);
    ScalarField as(mk.grid);
    as.v = aff.v;
    CHECK(msp == doctest::Approx(t * t).epsilon(1e-14));
    CHECK(msp == volume_energy(as, q, mk));
}

TEST_CASE("msp_energy equals volume_energy on jump-free fields for every p") {
    Masks mk = rasterize(empty_geo(2, 1.0, 0.3), 1.0 / 16);
    for (double p : {1.5, 2.0, 3.0}) {
        SbvField f = random_sbv(mk.grid, 99, false);
        ScalarField sf(mk.grid);
        sf.v = f.v;
        VolumeIntegrand q = VolumeIntegrand::constant(p, 1.0, 1.0);
        CHECK(msp_energy(f, p, mk, Region::all) == volume_energy(sf, q, mk));
    }
}

TEST_CASE("msp_energy: region selection") {
    auto g = one_ball(2, 1.0, 0.1, 0.5, {0.5, 0.5, 0.0}, 0.2);
    Masks mk = rasterize(g, 1.0 / 32);
    SbvField f = random_sbv(mk.grid, 7, true);
    double all = msp_energy(f, 2.0, mk, Region::all);
    double nh = msp_energy(f, 2.0, mk, Region::non_hole);
    double in = msp_energy(f, 2.0, mk, Region::interior);
    CHECK(nh <= all);
    CHECK(in <= all);
    CHECK(nh < all); // the random field has energy inside the hole
}

TEST_CASE("anisotropy_factor: calibrated directions and documented error") {
    Grid g2(2, 1.0, 1.0 / 16);
    CHECK(anisotropy_factor(g2, {1, 0, 0}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(anisotropy_factor(g2, {0, 1, 0}) == doctest::Approx(1.0).epsilon(1e-12));
    double s = std::sqrt(0.5);
    CHECK(anisotropy_factor(g2, {s, s, 0}) == doctest::Approx(1.0).epsilon(1e-12));
    double worst2 = anisotropy_factor(g2, {std::sin(pi / 8), std::cos(pi / 8), 0});
    CHECK(worst2 == doctest::Approx(1.0824).epsilon(1e-3));
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        double phi = rng.uniform(0, 2 * pi);
        double rho = anisotropy_factor(g2, {std::cos(phi), std::sin(phi), 0});
        CHECK(rho >= 1.0 - 1e-12);
        CHECK(rho <= 1.0830);
    }

    Grid g3(3, 1.0, 1.0 / 8);
    CHECK(anisotropy_factor(g3, {0, 0, 1}) == doctest::Approx(1.0).epsilon(1e-12));
    double s3 = 1.0 / std::sqrt(3.0);
    CHECK(anisotropy_factor(g3, {s3, s3, s3}) == doctest::Approx(0.8786).epsilon(1e-3));
    for (int i = 0; i < 500; ++i) {
        Vec nu{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        if (norm(nu) < 0.2) continue;
        double rho = anisotropy_factor(g3, normalized(nu));
        CHECK(rho >= 0.878);
        CHECK(rho <= 1.122);
    }
}

TEST_CASE("surface relabeling invariance on random labelings") {
    auto g = one_ball(2, 1.0, 0.1, 0.5, {0.5, 0.5, 0.0}, 0.2);
    Masks mk = rasterize(g, 1.0 / 32);
    SurfaceIntegrand s =
        SurfaceIntegrand::isotropic([](const Vec& x) { return 1.0 + x[0] + 0.5 * x[1]; }, 1.0, 2.5,
                                    0.3);
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        LabelField u(mk.grid);
        for (auto& v : u.v) v = rng.uniform01() < 0.5 ? 1 : 0;
        LabelField w = u;
        for (auto& v : w.v) v = 1 - v;
        CHECK(surface_energy(u, s, mk) == surface_energy(w, s, mk));
    }
}

TEST_CASE("energies reject mismatched grids") {
    Masks mk = rasterize(empty_geo(2, 1.0, 0.3), 1.0 / 16);
    Grid other(2, 1.0, 1.0 / 8);
    ScalarField u(other);
    CHECK_THROWS_AS(volume_energy(u, VolumeIntegrand::constant(2.0), mk), std::invalid_argument);
    LabelField l(other);
    CHECK_THROWS_AS(surface_energy(l, SurfaceIntegrand::constant(1.0), mk), std::invalid_argument);
    SbvField f(other);
    CHECK_THROWS_AS(msp_energy(f, 2.0, mk, Region::all), std::invalid_argument);
}

TEST_CASE("field dump round trips") {
    Grid g(2, 1.0, 1.0 / 8);
    ScalarField f(g);
    Rng rng(1);
    for (auto& v : f.v) v = rng.uniform(-10, 10);
    std::string path = "test_field_f64.bin";
    save_scalar_field(f, path);
    ScalarField back = load_scalar_field(path);
    CHECK(back.grid.m == g.m);
    CHECK(back.v == f.v);
    std::remove(path.c_str());

    LabelField l(g);
    for (auto& v : l.v) v = rng.uniform01() < 0.5;
    std::string lpath = "test_field_u8.bin";
    save_label_field(l, lpath);
    LabelField lback = load_label_field(lpath);
    CHECK(lback.v == l.v);
    std::remove(lpath.c_str());
}
