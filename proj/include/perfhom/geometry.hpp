#pragma once

// Random perforated domains: unions of closed balls with radii below r_star
// whose delta-dilations are pairwise disjoint, generated inside a cubic
// window. Exact continuum volumes (closed-form in 2-D, adaptive quadrature
// in 3-D) back the density diagnostics.

#include "perfhom/core.hpp"

#include <algorithm>
#include <functional>
#include <utility>

namespace perfhom {

struct BallInclusion {
    Vec center{0, 0, 0};
    double radius = 0.0;
};

enum class GeneratorKind { none = 0, bernoulli_lattice = 1, hardcore_rejection = 2 };

// Everything needed to reproduce a realization bit-exactly.
struct RealizationSeed {
    std::uint64_t seed = 0;
    GeneratorKind kind = GeneratorKind::none;
    // bernoulli_lattice parameters
    double spacing = 1.0;
    double radius = 0.2;
    double occupation_prob = 1.0;
    // hardcore_rejection parameters
    double intensity = 1.0;
    double r_min = 0.1;
    double r_max = 0.2;
};

struct PerforatedGeometry {
    int n = 2;
    double t = 1.0;          // window side; the window is origin + [0,t]^n
    Vec origin{0, 0, 0};
    double delta = 0.1;
    double r_star = 0.5;
    std::vector<BallInclusion> balls;
    RealizationSeed seed_record;

    Vec window_lo() const { return origin; }
    Vec window_hi() const {
        Vec hi = origin;
        for (int a = 0; a < n; ++a) hi[a] += t;
        return hi;
    }

    // A ball is a boundary ball when its delta-dilation is not contained in
    // the window; those are exempt from the interior extension machinery.
    bool ball_is_boundary(std::size_t i) const {
        const BallInclusion& b = balls[i];
        for (int a = 0; a < n; ++a) {
            if (b.center[a] - b.radius - delta < origin[a]) return true;
            if (b.center[a] + b.radius + delta > origin[a] + t) return true;
        }
        return false;
    }

    double window_volume() const { return ipow(t, n); }
};

// ---------------------------------------------------------------------------
// Exact ball/box intersection volumes
// ---------------------------------------------------------------------------

namespace detail {

// Area of the intersection of the disk of radius r centered at the origin
// with the triangle (0, a, b), signed by the orientation of (a, b).
inline double circle_tri_area(double ax, double ay, double bx, double by, double r) {
    auto cross = [](double x1, double y1, double x2, double y2) { return x1 * y2 - y1 * x2; };
    auto sector = [r](double x1, double y1, double x2, double y2) {
        double ang = std::atan2(x1 * y2 - y1 * x2, x1 * x2 + y1 * y2);
        return 0.5 * r * r * ang;
    };
    double ra2 = ax * ax + ay * ay, rb2 = bx * bx + by * by, r2 = r * r;
    bool ain = ra2 <= r2, bin = rb2 <= r2;
    if (ain && bin) return 0.5 * cross(ax, ay, bx, by);

    // segment p(t) = a + t (b - a); solve |p(t)|^2 = r^2
    double dx = bx - ax, dy = by - ay;
    double A = dx * dx + dy * dy;
    if (A == 0.0) return 0.0;
    double B = ax * dx + ay * dy;
    double C = ra2 - r2;
    double disc = B * B - A * C;

    if (!ain && !bin) {
        if (disc <= 0.0) return sector(ax, ay, bx, by);
        double sq = std::sqrt(disc);
        double t1 = (-B - sq) / A, t2 = (-B + sq) / A;
        if (t2 <= 0.0 || t1 >= 1.0 || t1 >= t2) return sector(ax, ay, bx, by);
        t1 = std::max(t1, 0.0);
        t2 = std::min(t2, 1.0);
        double p1x = ax + t1 * dx, p1y = ay + t1 * dy;
        double p2x = ax + t2 * dx, p2y = ay + t2 * dy;
        return sector(ax, ay, p1x, p1y) + 0.5 * cross(p1x, p1y, p2x, p2y) +
               sector(p2x, p2y, bx, by);
    }
    if (ain) { // exits through the larger root
        double sq = std::sqrt(std::max(disc, 0.0));
        double t = (-B + sq) / A;
        double px = ax + t * dx, py = ay + t * dy;
        return 0.5 * cross(ax, ay, px, py) + sector(px, py, bx, by);
    }
    // enters through the smaller root
    double sq = std::sqrt(std::max(disc, 0.0));
    double t = (-B - sq) / A;
    double px = ax + t * dx, py = ay + t * dy;
    return sector(ax, ay, px, py) + 0.5 * cross(px, py, bx, by);
}

template <typename F>
double adaptive_simpson_rec(const F& f, double a, double b, double fa, double fm, double fb,
                            double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <typename F>
double adaptive_simpson(const F& f, double a, double b, double tol) {
    if (!(b > a)) return 0.0;
    double m = 0.5 * (a + b);
    double fa = f(a), fm = f(m), fb = f(b);
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40);
}

} // namespace detail

// Exact area of disk(center, r) intersected with [x0,x1] x [y0,y1].
inline double disk_box_area(const Vec& center, double r, double x0, double y0, double x1,
                            double y1) {
    if (r <= 0.0) return 0.0;
    double xs[5] = {x0 - center[0], x1 - center[0], x1 - center[0], x0 - center[0], x0 - center[0]};
    double ys[5] = {y0 - center[1], y0 - center[1], y1 - center[1], y1 - center[1], y0 - center[1]};
    double area = 0.0;
    for (int i = 0; i < 4; ++i)
        area += detail::circle_tri_area(xs[i], ys[i], xs[i + 1], ys[i + 1], r);
    return std::abs(area);
}

// Volume of ball(center, r) intersected with the box [lo, hi], by adaptive
// Simpson quadrature of disk slices. Error below 1e-6 of the full ball
// volume (typically far below; see tests).
inline double ball_box_volume(const Vec& center, double r, const Vec& lo, const Vec& hi) {
    if (r <= 0.0) return 0.0;
    double z0 = std::max(lo[2], center[2] - r);
    double z1 = std::min(hi[2], center[2] + r);
    if (z0 >= z1) return 0.0;
    auto slice = [&](double z) {
        double rr = r * r - (z - center[2]) * (z - center[2]);
        if (rr <= 0.0) return 0.0;
        return disk_box_area(center, std::sqrt(rr), lo[0], lo[1], hi[0], hi[1]);
    };
    double tol = 1e-10 * unit_ball_volume(3) * r * r * r;
    return detail::adaptive_simpson(slice, z0, z1, tol);
}

inline double ball_window_volume(const PerforatedGeometry& g, const BallInclusion& b) {
    Vec lo = g.window_lo(), hi = g.window_hi();
    if (g.n == 2) return disk_box_area(b.center, b.radius, lo[0], lo[1], hi[0], hi[1]);
    return ball_box_volume(b.center, b.radius, lo, hi);
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t site_key(const IVec& k, int n) {
    std::uint64_t key = 0x243f6a8885a308d3ULL;
    for (int a = 0; a < n; ++a)
        key = hash_mix(key, static_cast<std::uint64_t>(static_cast<std::int64_t>(k[a]) + (1LL << 31)));
    return key;
}

// distance from a point to an axis-aligned box (0 inside)
inline double point_box_dist(const Vec& p, const Vec& lo, const Vec& hi, int n) {
    double d2 = 0.0;
    for (int a = 0; a < n; ++a) {
        double d = 0.0;
        if (p[a] < lo[a]) d = lo[a] - p[a];
        else if (p[a] > hi[a]) d = p[a] - hi[a];
        d2 += d * d;
    }
    return std::sqrt(d2);
}

} // namespace detail

// Balls of a fixed radius placed at the lattice sites spacing*Z^n that fall in
// the half-open window [origin, origin+t)^n, kept with probability
// occupation_prob via a per-site hash (stationary in distribution under
// lattice shifts).
inline PerforatedGeometry gen_bernoulli_lattice(const RealizationSeed& rs, int n, double window,
                                                double delta, double r_star,
                                                const Vec& origin = {0, 0, 0}) {
    require(n == 2 || n == 3, "gen_bernoulli_lattice: n must be 2 or 3");
    require(rs.radius > 0.0 && rs.radius < r_star, "gen_bernoulli_lattice: need 0 < radius < r_star");
    require(rs.radius + delta < 0.5 * rs.spacing,
            "gen_bernoulli_lattice: need radius + delta < spacing/2 (separation impossible)");
    require(window > 0.0 && delta > 0.0, "gen_bernoulli_lattice: window and delta must be positive");

    PerforatedGeometry g;
    g.n = n;
    g.t = window;
    g.origin = origin;
    g.delta = delta;
    g.r_star = r_star;
    g.seed_record = rs;
    g.seed_record.kind = GeneratorKind::bernoulli_lattice;

    IVec klo{0, 0, 0}, khi{0, 0, 0};
    for (int a = 0; a < n; ++a) {
        klo[a] = static_cast<int>(std::ceil(origin[a] / rs.spacing - 1e-12));
        // strictly below origin + t
        khi[a] = static_cast<int>(std::ceil((origin[a] + window) / rs.spacing - 1e-12)) - 1;
    }
    bool empty_range = false;
    for (int a = 0; a < n; ++a)
        if (khi[a] < klo[a]) empty_range = true;
    if (!empty_range) {
        IVec k = klo;
        while (true) {
            std::uint64_t key = detail::site_key(k, n);
            if (hash_uniform01(key, rs.seed) < rs.occupation_prob) {
                BallInclusion b;
                for (int a = 0; a < n; ++a) b.center[a] = k[a] * rs.spacing;
                b.radius = rs.radius;
                g.balls.push_back(b);
            }
            int a = 0;
            while (a < n) {
                if (++k[a] <= khi[a]) break;
                k[a] = klo[a];
                ++a;
            }
            if (a == n) break;
        }
    }
    return g;
}

// Sequential hard-core rejection: round(intensity * t^n) proposals drawn
// uniformly over the (r_max+delta)-dilated window, accepted only when the
// delta-dilation is disjoint from every accepted dilation. Radii uniform on
// (r_min, r_max). Only balls whose dilation meets the window are kept.
inline PerforatedGeometry gen_hardcore_rejection(const RealizationSeed& rs, int n, double window,
                                                 double delta, double r_star,
                                                 const Vec& origin = {0, 0, 0}) {
    require(n == 2 || n == 3, "gen_hardcore_rejection: n must be 2 or 3");
    require(rs.r_max < r_star, "gen_hardcore_rejection: need r_max < r_star");
    require(rs.r_min > 0.0 && rs.r_min <= rs.r_max, "gen_hardcore_rejection: need 0 < r_min <= r_max");
    require(window > 0.0 && delta > 0.0, "gen_hardcore_rejection: window and delta must be positive");

    PerforatedGeometry g;
    g.n = n;
    g.t = window;
    g.origin = origin;
    g.delta = delta;
    g.r_star = r_star;
    g.seed_record = rs;
    g.seed_record.kind = GeneratorKind::hardcore_rejection;

    Vec lo = g.window_lo(), hi = g.window_hi();
    double margin = rs.r_max + delta;
    long long proposals = std::llround(rs.intensity * ipow(window, n));
    Rng rng(rs.seed);
    for (long long i = 0; i < proposals; ++i) {
        BallInclusion b;
        for (int a = 0; a < n; ++a) b.center[a] = rng.uniform(lo[a] - margin, hi[a] + margin);
        b.radius = rng.uniform(rs.r_min, rs.r_max);
        if (detail::point_box_dist(b.center, lo, hi, n) > b.radius + delta) continue;
        bool ok = true;
        for (const BallInclusion& o : g.balls) {
            if (dist(b.center, o.center) <= b.radius + o.radius + 2.0 * delta) {
                ok = false;
                break;
            }
        }
        if (ok) g.balls.push_back(b);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Validation and densities
// ---------------------------------------------------------------------------

// Pairs whose delta-dilated open balls intersect, i.e. |c_i - c_j| < r_i + r_j + 2 delta.
// Exact center-distance arithmetic, no rasterization.
inline std::vector<std::pair<int, int>> verify_separation(const PerforatedGeometry& g) {
    std::vector<std::pair<int, int>> bad;
    for (std::size_t i = 0; i < g.balls.size(); ++i)
        for (std::size_t j = i + 1; j < g.balls.size(); ++j) {
            double gap = dist(g.balls[i].center, g.balls[j].center) -
                         (g.balls[i].radius + g.balls[j].radius + 2.0 * g.delta);
            if (gap < 0.0) bad.emplace_back(static_cast<int>(i), static_cast<int>(j));
        }
    return bad;
}

// Exact hole-free volume fraction of the window. Balls are pairwise disjoint
// under the separation assumption, so the covered volume is a plain sum.
inline double empirical_density(const PerforatedGeometry& g) {
    double covered = 0.0;
    for (const BallInclusion& b : g.balls) covered += ball_window_volume(g, b);
    return 1.0 - covered / g.window_volume();
}

// Closed-form positive lower bound on the density: the hole-free annuli of
// interior balls are disjoint and inside the window, contributing
// sum_i c_n ((r_i+delta)^n - r_i^n); independently the complement bound
// t^n - sum_i c_n r_i^n (full ball volumes) also holds. Both are below the
// exact density.
inline double density_lower_bound(const PerforatedGeometry& g) {
    double cn = unit_ball_volume(g.n);
    double annulus_sum = 0.0, ball_sum = 0.0;
    for (std::size_t i = 0; i < g.balls.size(); ++i) {
        const BallInclusion& b = g.balls[i];
        ball_sum += cn * ipow(b.radius, g.n);
        if (!g.ball_is_boundary(i))
            annulus_sum += cn * (ipow(b.radius + g.delta, g.n) - ipow(b.radius, g.n));
    }
    double vol = g.window_volume();
    return std::max(annulus_sum, vol - ball_sum) / vol;
}

inline PerforatedGeometry translate(const PerforatedGeometry& g, const Vec& v) {
    PerforatedGeometry out = g;
    out.origin = add(g.origin, v);
    for (BallInclusion& b : out.balls) b.center = add(b.center, v);
    return out;
}

// Homothety: scale every length by lambda (window, origin, delta, r_star, balls).
inline PerforatedGeometry scaled(const PerforatedGeometry& g, double lambda) {
    PerforatedGeometry out = g;
    out.t = g.t * lambda;
    out.origin = scale(g.origin, lambda);
    out.delta = g.delta * lambda;
    out.r_star = g.r_star * lambda;
    for (BallInclusion& b : out.balls) {
        b.center = scale(b.center, lambda);
        b.radius *= lambda;
    }
    return out;
}

} // namespace perfhom
