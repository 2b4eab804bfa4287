#pragma once

// Discrete volume, surface, and free-discontinuity energies.
//
// Volume term: per-cell forward-difference gradient, energy
//   sum_c weight(c) a(x_c) |grad u|^p h^n,
// exact on affine fields. Surface term: pairwise cell-interface sum over an
// extended neighborhood (8-conn in 2-D, 18-conn in 3-D) with crossing weights
// normalized so flat axis-aligned interfaces are measured exactly; neighbors
// that would leave the grid are clamped so the calibration holds up to the
// boundary. The measured anisotropy for oblique normals is reported by
// anisotropy_factor (max ~ +8.3% in 2-D at 22.5 degrees).

#include "perfhom/grid.hpp"

#include <functional>

namespace perfhom {

struct VolumeIntegrand {
    double p = 2.0;
    double c1 = 1.0, c2 = 1.0;                 // bounds c1 <= a <= c2
    double hole_weight = 0.0;                  // 0 masked, 1/k perturbed, alpha_eps soft
    std::function<double(const Vec&)> a;       // coefficient field

    static VolumeIntegrand constant(double p_, double a_val = 1.0, double w = 0.0) {
        VolumeIntegrand q;
        q.p = p_;
        q.c1 = q.c2 = a_val;
        q.hole_weight = w;
        q.a = [a_val](const Vec&) { return a_val; };
        return q;
    }
    static VolumeIntegrand from_function(double p_, std::function<double(const Vec&)> a_, double c1_,
                                         double c2_, double w = 0.0) {
        VolumeIntegrand q;
        q.p = p_;
        q.c1 = c1_;
        q.c2 = c2_;
        q.hole_weight = w;
        q.a = std::move(a_);
        return q;
    }
};

struct SurfaceIntegrand {
    double c3 = 1.0, c4 = 1.0;                       // bounds c3 <= g <= c4
    double hole_weight = 0.0;                        // weight when both cells are holes
    std::function<double(const Vec&, const Vec&)> g; // g(x, nu), must satisfy g(x,nu)=g(x,-nu)

    static SurfaceIntegrand constant(double g_val = 1.0, double w = 0.0) {
        SurfaceIntegrand s;
        s.c3 = s.c4 = g_val;
        s.hole_weight = w;
        s.g = [g_val](const Vec&, const Vec&) { return g_val; };
        return s;
    }
    static SurfaceIntegrand isotropic(std::function<double(const Vec&)> gx, double c3_, double c4_,
                                      double w = 0.0) {
        SurfaceIntegrand s;
        s.c3 = c3_;
        s.c4 = c4_;
        s.hole_weight = w;
        s.g = [fn = std::move(gx)](const Vec& x, const Vec&) { return fn(x); };
        return s;
    }
};

// ---------------------------------------------------------------------------
// Facet neighborhood
// ---------------------------------------------------------------------------

struct FacetFamily {
    IVec offset;
    Vec normal;   // unit
    double sigma; // crossing weight, units h^{n-1}
};

// Weights solve: flat axis cut exact for every grid; in 2-D additionally the
// 45-degree cut is exact (sigma_axis=(sqrt2-1)h, sigma_diag=(1-1/sqrt2)h); in
// 3-D the face/body-diagonal errors are balanced at +-8.2% subject to axis
// exactness and nonnegativity.
inline std::vector<FacetFamily> facet_families(const Grid& g) {
    std::vector<FacetFamily> fams;
    if (g.n == 2) {
        double sa = (std::sqrt(2.0) - 1.0) * g.h;
        double sd = (1.0 - 0.5 * std::sqrt(2.0)) * g.h;
        double s2 = std::sqrt(0.5);
        fams = {
            {{1, 0, 0}, {1, 0, 0}, sa},
            {{0, 1, 0}, {0, 1, 0}, sa},
            {{1, 1, 0}, {s2, s2, 0}, sd},
            {{1, -1, 0}, {s2, -s2, 0}, sd},
        };
    } else {
        // minimax anisotropy over the sphere subject to exact axis cuts and
        // nonnegative weights; measured range of the crossing density is
        // [0.879, 1.122] (worst underestimate at the body diagonal)
        double beta = 0.246375;
        double sd = beta * g.h * g.h;
        double sa = (1.0 - 4.0 * beta) * g.h * g.h;
        double s2 = std::sqrt(0.5);
        fams = {
            {{1, 0, 0}, {1, 0, 0}, sa},
            {{0, 1, 0}, {0, 1, 0}, sa},
            {{0, 0, 1}, {0, 0, 1}, sa},
            {{1, 1, 0}, {s2, s2, 0}, sd},
            {{1, -1, 0}, {s2, -s2, 0}, sd},
            {{1, 0, 1}, {s2, 0, s2}, sd},
            {{1, 0, -1}, {s2, 0, -s2}, sd},
            {{0, 1, 1}, {0, s2, s2}, sd},
            {{0, 1, -1}, {0, s2, -s2}, sd},
        };
    }
    return fams;
}

// Discrete interface energy per unit area for a straight interface with
// normal nu, relative to g == 1 (== 1 for axis directions by calibration).
inline double anisotropy_factor(const Grid& g, const Vec& nu) {
    double rho = 0.0;
    for (const FacetFamily& f : facet_families(g)) {
        Vec e{f.offset[0] * g.h, f.offset[1] * g.h, f.offset[2] * g.h};
        rho += f.sigma * std::abs(dot(nu, e));
    }
    return rho / ipow(g.h, g.n);
}

// Visits every cell-pair facet once: (cell, clamped neighbor, family).
// Neighbors past the boundary are clamped per axis; the resulting duplicate
// pairs keep flat axis cuts exactly calibrated at the boundary.
template <typename Fn>
inline void for_each_facet(const Grid& g, const std::vector<FacetFamily>& fams, Fn&& fn) {
    const int m = g.m;
    for (std::size_t fi = 0; fi < fams.size(); ++fi) {
        const FacetFamily& f = fams[fi];
        for (long long id = 0; id < g.cell_count(); ++id) {
            IVec c = g.cell_coords(static_cast<int>(id));
            IVec d = c;
            bool clamped = false, self = true;
            for (int a = 0; a < g.n; ++a) {
                int v = c[a] + f.offset[a];
                if (v < 0) { v = 0; clamped = true; }
                if (v > m - 1) { v = m - 1; clamped = true; }
                if (v != c[a]) self = false;
                d[a] = v;
            }
            if (self) continue; // fully clamped back onto itself (axis family at the wall)
            fn(static_cast<int>(id), g.cell_id(d), f, clamped);
        }
    }
}

// ---------------------------------------------------------------------------
// Energies
// ---------------------------------------------------------------------------

namespace detail {

inline void check_same_grid(const Grid& a, const Grid& b, const char* who) {
    if (!a.same_layout(b)) throw std::invalid_argument(std::string(who) + ": grid mismatch");
}

inline double grad_power(double g2, double p) {
    if (p == 2.0) return g2;
    return std::pow(g2, 0.5 * p);
}

} // namespace detail

inline double volume_energy(const ScalarField& u, const VolumeIntegrand& q, const Masks& masks) {
    detail::check_same_grid(u.grid, masks.grid, "volume_energy");
    const Grid& g = masks.grid;
    const double hn = ipow(g.h, g.n), inv_h2 = 1.0 / (g.h * g.h);
    double energy = 0.0;
    for (long long id = 0; id < g.cell_count(); ++id) {
        double w = masks.hole_cells[id] ? q.hole_weight : 1.0;
        if (w == 0.0) continue;
        IVec c = g.cell_coords(static_cast<int>(id));
        double g2 = 0.0;
        int tail = g.link_tail(c);
        for (int a = 0; a < g.n; ++a) {
            double du = u.v[g.link_head(c, a)] - u.v[tail];
            g2 += du * du;
        }
        g2 *= inv_h2;
        if (g2 == 0.0) continue;
        energy += w * q.a(g.cell_center(c)) * detail::grad_power(g2, q.p) * hn;
    }
    return energy;
}

inline double surface_energy(const LabelField& u, const SurfaceIntegrand& s, const Masks& masks) {
    detail::check_same_grid(u.grid, masks.grid, "surface_energy");
    const Grid& g = masks.grid;
    double energy = 0.0;
    for_each_facet(g, facet_families(g), [&](int c, int d, const FacetFamily& f, bool) {
        if (u.v[c] == u.v[d]) return;
        double w = (masks.hole_cells[c] && masks.hole_cells[d]) ? s.hole_weight : 1.0;
        if (w == 0.0) return;
        Vec mid = scale(add(g.cell_center(g.cell_coords(c)), g.cell_center(g.cell_coords(d))), 0.5);
        energy += w * f.sigma * s.g(mid, f.normal);
    });
    return energy;
}

enum class Region { all, non_hole, interior };

// p-Mumford-Shah energy of an SBV field: gradient part from the non-jump
// links of each cell, plus h^{n-1} per jump link. Region membership is
// decided by the link's owning cell (non_hole excludes hole cells, interior
// excludes the frame).
inline double msp_energy(const SbvField& u, double p, const Masks& masks, Region region) {
    detail::check_same_grid(u.grid, masks.grid, "msp_energy");
    const Grid& g = masks.grid;
    const double hn = ipow(g.h, g.n), hs = ipow(g.h, g.n - 1), inv_h2 = 1.0 / (g.h * g.h);
    double energy = 0.0;
    for (long long id = 0; id < g.cell_count(); ++id) {
        if (region == Region::non_hole && masks.hole_cells[id]) continue;
        if (region == Region::interior && masks.frame_cells[id]) continue;
        IVec c = g.cell_coords(static_cast<int>(id));
        int tail = g.link_tail(c);
        double g2 = 0.0;
        int jumps = 0;
        for (int a = 0; a < g.n; ++a) {
            if (u.jump[Grid::link_id(static_cast<int>(id), a, g.n)]) {
                ++jumps;
                continue;
            }
            double du = u.v[g.link_head(c, a)] - u.v[tail];
            g2 += du * du;
        }
        g2 *= inv_h2;
        if (g2 != 0.0) energy += detail::grad_power(g2, p) * hn;
        energy += jumps * hs;
    }
    return energy;
}

} // namespace perfhom
