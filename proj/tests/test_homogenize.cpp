#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "perfhom/homogenize.hpp"

using namespace perfhom;

namespace {

GeometrySpec empty_spec(int n = 2) {
    GeometrySpec s;
    s.params.kind = GeneratorKind::none;
    s.n = n;
    s.delta = 0.25;
    s.r_star = 0.45;
    return s;
}

GeometrySpec lattice_spec(double radius, double prob, double delta = 0.25) {
    GeometrySpec s;
    s.params.kind = GeneratorKind::bernoulli_lattice;
    s.params.spacing = 1.0;
    s.params.radius = radius;
    s.params.occupation_prob = prob;
    s.n = 2;
    s.delta = delta;
    s.r_star = 0.45;
    return s;
}

GeometrySpec hardcore_spec(double intensity = 1.0) {
    GeometrySpec s;
    s.params.kind = GeneratorKind::hardcore_rejection;
    s.params.intensity = intensity;
    s.params.r_min = 0.1;
    s.params.r_max = 0.35;
    s.n = 2;
    s.delta = 0.2;
    s.r_star = 0.45;
    return s;
}

} // namespace

TEST_CASE("estimate_fhom: empty medium gives |xi|^2 in every cell") {
    Vec xi{1.0, 0.5, 0.0};
    LadderResult lr = estimate_fhom(empty_spec(), VolumeIntegrand::constant(2.0), xi, {2.0, 4.0},
                                    default_k_ladder(), seed_range(1, 3));
    for (const LadderCell& c : lr.rows)
        CHECK(c.normalized == doctest::Approx(1.25).epsilon(1e-10));
    HomEstimate est = k_extrapolate(lr);
    CHECK(est.value == doctest::Approx(1.25).epsilon(1e-10));
    CHECK(est.max_gap <= 1e-14); // weights only act on holes
    BoundsReport br = check_bounds_volume(est, 1.0, 2.0, xi);
    CHECK(br.pass);
}

TEST_CASE("estimate_fhom: zero slope gives zero everywhere") {
    LadderResult lr = estimate_fhom(empty_spec(), VolumeIntegrand::constant(2.0), {0, 0, 0},
                                    {2.0}, default_k_ladder(), seed_range(1, 2));
    for (const LadderCell& c : lr.rows) CHECK(c.normalized == 0.0);
    BoundsReport br = check_bounds_volume(k_extrapolate(lr), 1.0, 2.0, {0, 0, 0});
    CHECK(br.skipped);
}

TEST_CASE("estimate_fhom: perforation softens the medium, more with larger holes") {
    Vec xi{1.0, 0.0, 0.0};
    std::vector<double> values;
    for (double radius : {0.1, 0.2, 0.3}) {
        LadderResult lr =
            estimate_fhom(lattice_spec(radius, 1.0, 0.15), VolumeIntegrand::constant(2.0), xi, {4.0},
                          {PerturbationMode::masked()}, seed_range(1, 2));
        HomEstimate est = k_extrapolate(lr);
        CHECK(est.value < 1.0);
        CHECK(est.value > 0.0);
        values.push_back(est.value);
    }
    CHECK(values[0] > values[1]);
    CHECK(values[1] > values[2]);
}

TEST_CASE("estimate_ghom: empty medium gives exactly one for axis normals") {
    LadderResult lr = estimate_ghom(empty_spec(), SurfaceIntegrand::constant(1.0), {0.0, 1.0, 0.0},
                                    {2.0, 4.0}, default_k_ladder(), seed_range(1, 3));
    for (const LadderCell& c : lr.rows) {
        CHECK(c.normalized == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(c.exact_flag);
    }
    HomEstimate est = k_extrapolate(lr);
    CHECK(check_bounds_surface(est, 1.0).pass);
}

TEST_CASE("estimate_ghom: holes lower the cut, nu sign is irrelevant") {
    GeometrySpec spec = hardcore_spec(1.2);
    LadderResult plus = estimate_ghom(spec, SurfaceIntegrand::constant(1.0), {0.0, 1.0, 0.0},
                                      {3.2}, {PerturbationMode::masked()}, seed_range(5, 4));
    LadderResult minus = estimate_ghom(spec, SurfaceIntegrand::constant(1.0), {0.0, -1.0, 0.0},
                                       {3.2}, {PerturbationMode::masked()}, seed_range(5, 4));
    for (std::size_t i = 0; i < plus.rows.size(); ++i) {
        CHECK(plus.rows[i].normalized <= 1.0 + 1e-12);
        CHECK(plus.rows[i].normalized == minus.rows[i].normalized); // exact complement
    }
}

TEST_CASE("k_extrapolate: single-hole gaps decrease in k, soft mode sits below k=8") {
    GeometrySpec spec = lattice_spec(0.2, 1.0);
    spec.params.spacing = 4.0; // one site per 4x4 window: a single interior hole
    Vec xi{1.0, 0.0, 0.0};
    std::vector<PerturbationMode> ladder = {
        PerturbationMode::finite(1), PerturbationMode::finite(2), PerturbationMode::finite(4),
        PerturbationMode::finite(8), PerturbationMode::soft(0.4), PerturbationMode::masked()};
    LadderResult lr = estimate_fhom(spec, VolumeIntegrand::constant(2.0), xi, {4.0}, ladder,
                                    seed_range(2, 3));
    HomEstimate est = k_extrapolate(lr);
    // gaps are reported in ladder order: k = 1, 2, 4, 8, soft
    REQUIRE(est.perturbation_gaps.size() == 5);
    double g1 = est.perturbation_gaps[0].second;
    double g2 = est.perturbation_gaps[1].second;
    double g4 = est.perturbation_gaps[2].second;
    double g8 = est.perturbation_gaps[3].second;
    double gs = est.perturbation_gaps[4].second;
    CHECK(g1 > g2);
    CHECK(g2 > g4);
    CHECK(g4 > g8);
    CHECK(g8 > 0.0);
    // soft weight 0.4/4 = 0.1 < 1/8: closer to the masked value, exactly
    CHECK(gs <= g8);
    CHECK(gs >= 0.0);
}

TEST_CASE("k_extrapolate: a monotonicity violation is fatal") {
    LadderResult fake;
    fake.kind = "volume";
    fake.t_values = {2.0};
    fake.k_values = {PerturbationMode::finite(1), PerturbationMode::masked()};
    fake.seeds = {1};
    fake.normalized = {{{0.5}, {0.7}}}; // masked above k=1: impossible
    CHECK_THROWS_AS(k_extrapolate(fake), MonotonicityError);
}

TEST_CASE("translation surrogate: shifted windows agree within three standard errors") {
    GeometrySpec a = lattice_spec(0.2, 0.6);
    GeometrySpec b = a;
    b.origin = {4.0, 4.0, 0.0}; // window Q_t(t x) with x = (1,1)
    Vec xi{1.0, 0.0, 0.0};
    LadderResult la = estimate_fhom(a, VolumeIntegrand::constant(2.0), xi, {4.0},
                                    {PerturbationMode::masked()}, seed_range(11, 8));
    LadderResult lb = estimate_fhom(b, VolumeIntegrand::constant(2.0), xi, {4.0},
                                    {PerturbationMode::masked()}, seed_range(11, 8));
    HomEstimate ea = k_extrapolate(la), eb = k_extrapolate(lb);
    double se = std::sqrt(ea.stderr_mean * ea.stderr_mean + eb.stderr_mean * eb.stderr_mean);
    CHECK(std::abs(ea.value - eb.value) <= 3.0 * se + 1e-12);
}

TEST_CASE("cauchy gaps are reported for the masked column") {
    GeometrySpec spec = lattice_spec(0.2, 1.0);
    LadderResult lr = estimate_fhom(spec, VolumeIntegrand::constant(2.0), {1.0, 0.0, 0.0},
                                    {2.0, 4.0, 8.0}, {PerturbationMode::masked()}, seed_range(1, 2));
    HomEstimate est = k_extrapolate(lr);
    REQUIRE(est.cauchy_gaps.size() == 2);
    for (double g : est.cauchy_gaps) CHECK(g >= 0.0);
    // full occupancy is periodic in effect: gaps should already be small
    CHECK(est.cauchy_gaps.back() <= 0.05);
}

TEST_CASE("check_convexity_fhom: empty medium is exactly midpoint convex") {
    std::vector<Vec> xis = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    std::vector<HomEstimate> ests;
    for (const Vec& xi : xis) {
        LadderResult lr = estimate_fhom(empty_spec(), VolumeIntegrand::constant(2.0), xi, {2.0},
                                        {PerturbationMode::masked()}, seed_range(1, 2));
        ests.push_back(k_extrapolate(lr));
    }
    ConvexityReport rep = check_convexity_fhom(xis, ests, 2.0, 1e-10);
    CHECK(rep.midpoint_triples >= 1);
    CHECK(rep.pass);
    CHECK(rep.worst_midpoint_violation <= 0.0 + 1e-12);
    CHECK(rep.max_lipschitz_ratio > 0.0);
    CHECK(rep.max_lipschitz_ratio <= 1.0 + 1e-12); // for f = |xi|^2 along this line
}

TEST_CASE("check_convexity_fhom: perforated medium within dispersion tolerance") {
    GeometrySpec spec = hardcore_spec(1.0);
    std::vector<Vec> xis = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {1.1, 0, 0}};
    std::vector<HomEstimate> ests;
    double disp = 0.0;
    for (const Vec& xi : xis) {
        LadderResult lr = estimate_fhom(spec, VolumeIntegrand::constant(2.0), xi, {3.2},
                                        {PerturbationMode::masked()}, seed_range(3, 4));
        ests.push_back(k_extrapolate(lr));
        disp = std::max(disp, ests.back().dispersion);
    }
    ConvexityReport rep = check_convexity_fhom(xis, ests, 2.0, 2.0 * disp + 1e-9);
    CHECK(rep.pass);
    CHECK(std::isfinite(rep.max_lipschitz_ratio));
}

TEST_CASE("3-D ladders: trivial medium and perforated upper bounds") {
    GeometrySpec empty3 = empty_spec(3);
    empty3.delta = 0.3;
    LadderResult fv = estimate_fhom(empty3, VolumeIntegrand::constant(2.0), {1.0, 0.0, 0.0},
                                    {2.4}, {PerturbationMode::masked()}, seed_range(1, 1));
    CHECK(fv.rows[0].normalized == doctest::Approx(1.0).epsilon(1e-10));
    LadderResult gv = estimate_ghom(empty3, SurfaceIntegrand::constant(1.0), {0.0, 0.0, 1.0},
                                    {2.4}, {PerturbationMode::masked()}, seed_range(1, 1));
    CHECK(gv.rows[0].normalized == doctest::Approx(1.0).epsilon(1e-12));

    GeometrySpec hc3;
    hc3.params.kind = GeneratorKind::hardcore_rejection;
    hc3.params.intensity = 0.8;
    hc3.params.r_min = 0.15;
    hc3.params.r_max = 0.35;
    hc3.n = 3;
    hc3.delta = 0.3;
    hc3.r_star = 0.45;
    LadderResult fp = estimate_fhom(hc3, VolumeIntegrand::constant(2.0), {1.0, 0.0, 0.0}, {2.4},
                                    {PerturbationMode::finite(4), PerturbationMode::masked()},
                                    seed_range(2, 2));
    HomEstimate est = k_extrapolate(fp);
    CHECK(est.value > 0.0);
    CHECK(est.value < 1.0);
}

TEST_CASE("parallel ladder execution is bit-identical to serial") {
    GeometrySpec spec = hardcore_spec(1.0);
    Vec xi{1.0, 0.0, 0.0};
    LadderResult serial = estimate_fhom(spec, VolumeIntegrand::constant(2.0), xi, {2.0, 4.0},
                                        default_k_ladder(), seed_range(1, 4), 0.25, 1e-10, 1);
    LadderResult par = estimate_fhom(spec, VolumeIntegrand::constant(2.0), xi, {2.0, 4.0},
                                     default_k_ladder(), seed_range(1, 4), 0.25, 1e-10, 4);
    REQUIRE(serial.rows.size() == par.rows.size());
    for (std::size_t i = 0; i < serial.rows.size(); ++i)
        CHECK(serial.rows[i].normalized == par.rows[i].normalized);
}
