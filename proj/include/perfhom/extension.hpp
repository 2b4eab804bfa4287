#pragma once

// Extension operators across the perforations.
//
// Values are filled by discrete p-harmonic minimization, iterated band by
// band down the dyadic radius schedule for thick balls; jump sets are filled
// by a minimal-perimeter label continuation (unit-capacity min-cut), followed
// by the small-jump test: when the fill's jump mass in the scan band is below
// gamma * s^{n-1} a jump-free sphere is searched and its interior is set to
// the constant trace, otherwise the whole fill collapses to the constant 0.
// The minimizing fill replaces the literal reflect-then-cutoff construction;
// it matches the trace and can only lower the jump bound.
//
// Contracts: the output equals the input on every non-hole cell bit-exactly,
// fills stay inside the trace value range (fills are clamped averages or
// label copies), and the whole-domain energy ratio is recorded per instance
// together with its invariance under homotheties.

#include "perfhom/energy.hpp"
#include "perfhom/maxflow.hpp"

#include <map>
#include <set>

namespace perfhom {

// ---------------------------------------------------------------------------
// Dyadic radius schedule
// ---------------------------------------------------------------------------

struct DyadicSchedule {
    int n_delta = 0;            // number of ring steps; 0 in the direct case
    double ratio = 1.0;         // 1 + delta/r_star, consecutive radius ratio
    double r_delta = 0.0;       // r * ratio^{-n_delta}, below delta
    std::vector<double> radii;  // r * ratio^{1-i}, i = 0..n_delta (empty when direct)
    bool direct_case = false;   // r < delta: one-step fill, no rings
};

inline int dyadic_step_count(double delta, double r_star) {
    double q = 1.0 + delta / r_star;
    return static_cast<int>(std::floor(std::log(r_star / delta) / std::log(q))) + 1;
}

inline DyadicSchedule dyadic_schedule(double r, double delta, double r_star) {
    require(r > 0.0 && r < r_star, "dyadic_schedule: need 0 < r < r_star");
    require(delta > 0.0, "dyadic_schedule: delta must be positive");
    DyadicSchedule s;
    s.ratio = 1.0 + delta / r_star;
    if (r < delta) {
        s.direct_case = true;
        s.n_delta = 0;
        s.r_delta = r;
        return s;
    }
    s.n_delta = dyadic_step_count(delta, r_star);
    s.radii.resize(s.n_delta + 1);
    for (int i = 0; i <= s.n_delta; ++i) s.radii[i] = r * std::pow(s.ratio, 1.0 - i);
    s.r_delta = r * std::pow(s.ratio, -double(s.n_delta));
    return s;
}

// ---------------------------------------------------------------------------
// Local fills
// ---------------------------------------------------------------------------

namespace detail {

// Nodes incident to any of `cells`, split into unknown (every incident cell
// of the node is in the fill set `fill_cell`) and Dirichlet (the rest).
inline void region_nodes(const Grid& g, const std::vector<int>& cells,
                         const std::vector<std::uint8_t>& fill_cell, std::vector<int>& unknown,
                         std::vector<int>& known) {
    std::set<int> seen;
    for (int cid : cells) {
        IVec c = g.cell_coords(cid);
        IVec v{0, 0, 0};
        int corners = 1 << g.n;
        for (int bit = 0; bit < corners; ++bit) {
            for (int a = 0; a < g.n; ++a) v[a] = c[a] + ((bit >> a) & 1);
            seen.insert(g.node_id(v));
        }
    }
    for (int nid : seen) {
        IVec v = g.node_coords(nid);
        bool all_fill = true;
        IVec c{0, 0, 0};
        for (int bit = 0; bit < (1 << g.n) && all_fill; ++bit) {
            bool valid = true;
            for (int a = 0; a < g.n; ++a) {
                c[a] = v[a] - ((bit >> a) & 1);
                if (c[a] < 0 || c[a] >= g.m) valid = false;
            }
            if (!valid) continue;
            if (!fill_cell[g.cell_id(c)]) all_fill = false;
        }
        if (all_fill) unknown.push_back(nid);
        else known.push_back(nid);
    }
}

// p-harmonic fill over `cells`: minimizes sum_c |grad u|^p h^n over the
// unknown nodes with Dirichlet data at the remaining region nodes. Links in
// `cut_link` are excluded (jump decoupling). Solutions are clamped to the
// Dirichlet range (exact discrete maximum principle).
inline void local_pharmonic_fill(const Grid& g, const std::vector<int>& cells,
                                 const std::vector<std::uint8_t>& fill_cell,
                                 std::vector<double>& values,
                                 const std::vector<std::uint8_t>& cut_link, double p,
                                 double default_value) {
    if (cells.empty()) return;
    std::vector<int> unknown, known;
    region_nodes(g, cells, fill_cell, unknown, known);
    if (unknown.empty()) return;

    double lo = default_value, hi = default_value;
    if (!known.empty()) {
        lo = hi = values[known[0]];
        for (int nid : known) {
            lo = std::min(lo, values[nid]);
            hi = std::max(hi, values[nid]);
        }
        default_value = std::min(hi, std::max(lo, default_value));
    }
    std::vector<std::uint8_t> is_unknown(g.node_count(), 0);
    for (int nid : unknown) {
        is_unknown[nid] = 1;
        values[nid] = default_value;
    }

    // diagonal and apply over active cells only
    std::map<int, double> diag;
    auto cell_links = [&](int cid, auto&& fn) {
        IVec c = g.cell_coords(cid);
        int tail = g.link_tail(c);
        for (int a = 0; a < g.n; ++a) {
            if (!cut_link.empty() && cut_link[Grid::link_id(cid, a, g.n)]) continue;
            fn(tail, g.link_head(c, a));
        }
    };
    for (int cid : cells)
        cell_links(cid, [&](int tnode, int hnode) {
            diag[tnode] += 1.0;
            diag[hnode] += 1.0;
        });

    std::vector<int> active; // unknown nodes actually coupled to the energy
    for (int nid : unknown)
        if (diag.count(nid) && diag[nid] > 0.0) active.push_back(nid);

    if (!active.empty()) {
        std::map<int, int> aidx;
        for (std::size_t i = 0; i < active.size(); ++i) aidx[active[i]] = static_cast<int>(i);
        int na = static_cast<int>(active.size());
        std::vector<double> x(na), r(na), z(na), pd(na), Ap(na), d(na);
        for (int i = 0; i < na; ++i) {
            x[i] = values[active[i]];
            d[i] = diag[active[i]];
        }
        auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
            std::fill(out.begin(), out.end(), 0.0);
            for (int cid : cells)
                cell_links(cid, [&](int tnode, int hnode) {
                    auto it = aidx.find(tnode);
                    auto ih = aidx.find(hnode);
                    double ut = it != aidx.end() ? in[it->second] : 0.0;
                    double uh = ih != aidx.end() ? in[ih->second] : 0.0;
                    double f = uh - ut;
                    if (ih != aidx.end()) out[ih->second] += f;
                    if (it != aidx.end()) out[it->second] -= f;
                });
        };
        // residual r = b - A x, with pinned values folded into b
        {
            std::vector<double> full(g.node_count());
            for (long long i = 0; i < g.node_count(); ++i) full[i] = values[i];
            for (int i = 0; i < na; ++i) full[active[i]] = x[i];
            std::fill(r.begin(), r.end(), 0.0);
            for (int cid : cells)
                cell_links(cid, [&](int tnode, int hnode) {
                    double f = full[hnode] - full[tnode];
                    auto ih = aidx.find(hnode);
                    auto it = aidx.find(tnode);
                    if (ih != aidx.end()) r[ih->second] -= f;
                    if (it != aidx.end()) r[it->second] += f;
                });
        }
        double b2 = 0.0;
        for (int i = 0; i < na; ++i) b2 += r[i] * r[i];
        double stop2 = 1e-20 * std::max(b2, 1e-300);
        if (b2 > stop2) {
            for (int i = 0; i < na; ++i) z[i] = r[i] / d[i];
            pd = z;
            double rz = 0.0;
            for (int i = 0; i < na; ++i) rz += r[i] * z[i];
            int cap = 50 * static_cast<int>(std::sqrt(double(na))) + 20;
            for (int it = 0; it < cap; ++it) {
                apply(pd, Ap);
                double pAp = 0.0;
                for (int i = 0; i < na; ++i) pAp += pd[i] * Ap[i];
                if (pAp <= 0.0) break;
                double alpha = rz / pAp;
                double r2 = 0.0;
                for (int i = 0; i < na; ++i) {
                    x[i] += alpha * pd[i];
                    r[i] -= alpha * Ap[i];
                    r2 += r[i] * r[i];
                }
                if (r2 <= stop2) break;
                double rz2 = 0.0;
                for (int i = 0; i < na; ++i) {
                    z[i] = r[i] / d[i];
                    rz2 += r[i] * z[i];
                }
                double beta = rz2 / rz;
                rz = rz2;
                for (int i = 0; i < na; ++i) pd[i] = z[i] + beta * pd[i];
            }
        }
        for (int i = 0; i < na; ++i) values[active[i]] = x[i];

        // p != 2: diagonal-preconditioned Armijo descent from the p = 2 fill
        if (p != 2.0) {
            const double hn = ipow(g.h, g.n), inv_h2 = 1.0 / (g.h * g.h);
            auto region_energy = [&]() {
                double e = 0.0;
                for (int cid : cells) {
                    double g2 = 0.0;
                    cell_links(cid, [&](int tnode, int hnode) {
                        double du = values[hnode] - values[tnode];
                        g2 += du * du;
                    });
                    g2 *= inv_h2;
                    if (g2 > 0.0) e += std::pow(g2, 0.5 * p) * hn;
                }
                return e;
            };
            double energy = region_energy();
            std::vector<double> grad(na);
            int stagnant = 0;
            for (int it = 0; it < 500 && stagnant < 10; ++it) {
                std::fill(grad.begin(), grad.end(), 0.0);
                for (int cid : cells) {
                    double g2 = 0.0;
                    double contrib[3];
                    int heads[3], tails[3], cnt = 0;
                    cell_links(cid, [&](int tnode, int hnode) {
                        double du = values[hnode] - values[tnode];
                        contrib[cnt] = du;
                        heads[cnt] = hnode;
                        tails[cnt] = tnode;
                        ++cnt;
                        g2 += du * du;
                    });
                    g2 *= inv_h2;
                    double fac = p * std::pow(g2 + 1e-24, 0.5 * p - 1.0) * hn * inv_h2;
                    for (int e = 0; e < cnt; ++e) {
                        double f = fac * contrib[e];
                        auto ih = aidx.find(heads[e]);
                        auto it2 = aidx.find(tails[e]);
                        if (ih != aidx.end()) grad[ih->second] += f;
                        if (it2 != aidx.end()) grad[it2->second] -= f;
                    }
                }
                double gd = 0.0;
                for (int i = 0; i < na; ++i) gd += grad[i] * grad[i] / d[i];
                if (gd <= 0.0) break;
                double step = 1.0;
                bool accepted = false;
                std::vector<double> saved(na);
                for (int i = 0; i < na; ++i) saved[i] = values[active[i]];
                for (int bt = 0; bt < 40; ++bt) {
                    for (int i = 0; i < na; ++i)
                        values[active[i]] = saved[i] - step * grad[i] / d[i];
                    double etrial = region_energy();
                    if (etrial <= energy - 1e-4 * step * gd) {
                        double drop = (energy - etrial) / std::max(energy, 1e-300);
                        energy = etrial;
                        stagnant = drop < 1e-10 ? stagnant + 1 : 0;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if (!accepted) {
                    for (int i = 0; i < na; ++i) values[active[i]] = saved[i];
                    break;
                }
            }
        }
    }

    // nodes never coupled (cut off by jumps or weightless): averaged from
    // valued neighbors, deterministically; stranded components keep default
    std::vector<std::uint8_t> valued(g.node_count(), 1);
    bool any = false;
    for (int nid : unknown)
        if (!diag.count(nid) || diag[nid] <= 0.0) {
            valued[nid] = 0;
            any = true;
        }
    if (any) {
        for (int sweep = 0; sweep < g.m + 2; ++sweep) {
            bool changed = false;
            for (int nid : unknown) {
                if (valued[nid]) continue;
                IVec v = g.node_coords(nid);
                double sum = 0.0;
                int cnt = 0;
                for (int a = 0; a < g.n; ++a)
                    for (int ds = -1; ds <= 1; ds += 2) {
                        IVec w = v;
                        w[a] += ds;
                        if (w[a] < 0 || w[a] > g.m) continue;
                        int wn = g.node_id(w);
                        if (valued[wn] == 1) {
                            sum += values[wn];
                            ++cnt;
                        }
                    }
                if (cnt > 0) {
                    values[nid] = sum / cnt;
                    valued[nid] = 2;
                    changed = true;
                }
            }
            for (int nid : unknown)
                if (valued[nid] == 2) valued[nid] = 1;
            if (!changed) break;
        }
    }

    if (!known.empty())
        for (int nid : unknown) values[nid] = std::min(hi, std::max(lo, values[nid]));
}

// Minimal-perimeter label fill: minimizes the number of axis-facet
// disagreements over `cells` given the labels of adjacent non-fill cells.
inline void local_label_fill(const Grid& g, const std::vector<int>& cells,
                             const std::vector<std::uint8_t>& fill_cell,
                             std::vector<std::uint8_t>& labels) {
    if (cells.empty()) return;
    std::map<int, int> idx;
    for (std::size_t i = 0; i < cells.size(); ++i) idx[cells[i]] = static_cast<int>(i);
    MaxflowGraph mf(static_cast<int>(cells.size()));
    for (int cid : cells) {
        IVec c = g.cell_coords(cid);
        for (int a = 0; a < g.n; ++a)
            for (int ds = -1; ds <= 1; ds += 2) {
                IVec w = c;
                w[a] += ds;
                if (w[a] < 0 || w[a] >= g.m) continue;
                int wid = g.cell_id(w);
                if (fill_cell[wid]) {
                    if (ds == 1) mf.add_bidirectional(idx[cid], idx[wid], 1); // once per pair
                } else {
                    if (labels[wid]) mf.add_edge(mf.source(), idx[cid], 1);
                    else mf.add_edge(idx[cid], mf.sink(), 1);
                }
            }
    }
    mf.run();
    for (std::size_t i = 0; i < cells.size(); ++i)
        labels[cells[i]] = mf.source_side(static_cast<int>(i)) ? 1 : 0;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Per-ball operators
// ---------------------------------------------------------------------------

enum class FillBranch {
    none,            // no fill cells
    constant_trace,  // trace labels constant, nothing to optimize
    small_jump_sphere,
    small_jump_kept, // small jump but no jump-free sphere resolved on the grid
    fallback_zero
};

inline const char* fill_branch_name(FillBranch b) {
    switch (b) {
        case FillBranch::none: return "none";
        case FillBranch::constant_trace: return "constant";
        case FillBranch::small_jump_sphere: return "sphere";
        case FillBranch::small_jump_kept: return "kept";
        case FillBranch::fallback_zero: return "fallback";
    }
    return "?";
}

struct PartitionFillReport {
    FillBranch branch = FillBranch::none;
    double trace_jump_mass = 0.0; // axis jump mass over the annulus trace
    double fill_jump_mass = 0.0;  // axis jump mass added across the fill
    double band_jump_mass = 0.0;  // fill jump mass inside the scan band
    double clean_radius = 0.0;
};

struct SobolevFillReport {
    double trace_energy = 0.0; // p-Dirichlet energy over the annulus cells
    double fill_energy = 0.0;  // p-Dirichlet energy over the filled cells
    int bands = 0;
    int filled_cells = 0;
};

namespace detail {

// scan band [rho, r]: rho = r/2 below delta, one dyadic ring otherwise
inline void scan_band(const PerforatedGeometry& g, double r, double& rho, double& s) {
    double ratio = 1.0 + g.delta / g.r_star;
    rho = r < g.delta ? 0.5 * r : r / ratio;
    s = r - rho;
}

// Counts forward-facet label changes from `cells`. With within_set, only
// pairs whose both endpoints lie in `cells` contribute (needed when labels
// outside the set are not yet meaningful).
inline double axis_jump_mass(const Grid& g, const std::vector<std::uint8_t>& labels,
                             const std::vector<int>& cells,
                             const std::function<bool(const Vec&)>& band_filter,
                             bool within_set = false) {
    std::vector<std::uint8_t> in_set;
    if (within_set) {
        in_set.assign(g.cell_count(), 0);
        for (int cid : cells) in_set[cid] = 1;
    }
    double hs = ipow(g.h, g.n - 1);
    double mass = 0.0;
    for (int cid : cells) {
        IVec c = g.cell_coords(cid);
        if (band_filter && !band_filter(g.cell_center(c))) continue;
        for (int a = 0; a < g.n; ++a) {
            IVec w = c;
            ++w[a];
            if (w[a] >= g.m) continue;
            int wid = g.cell_id(w);
            if (within_set && !in_set[wid]) continue;
            if (labels[cid] != labels[wid]) mass += hs;
        }
    }
    return mass;
}

} // namespace detail

// Fill the labels of one ball's hole cells from the labels of the
// surrounding cells: minimal-perimeter continuation, then the small-jump
// test with the jump-free-sphere constant fill or the constant-0 fallback.
inline PartitionFillReport extend_partition_ball(LabelField& u, const PerforatedGeometry& geo,
                                                 const Masks& masks, int ball_index,
                                                 double gamma_threshold = 12.0) {
    detail::check_same_grid(u.grid, masks.grid, "extend_partition_ball");
    const Grid& g = masks.grid;
    const BallInclusion& ball = geo.balls[ball_index];
    const std::vector<int>& cells = masks.hole_cells_of_ball[ball_index];
    PartitionFillReport rep;
    if (cells.empty()) return rep;

    std::vector<std::uint8_t> fill_cell(g.cell_count(), 0);
    for (int cid : cells) fill_cell[cid] = 1;

    // trace = annulus cells plus any non-fill neighbor of the fill set
    std::vector<int> trace = masks.annulus_cells[ball_index];
    {
        std::set<int> tset(trace.begin(), trace.end());
        for (int cid : cells) {
            IVec c = g.cell_coords(cid);
            for (int a = 0; a < g.n; ++a)
                for (int ds = -1; ds <= 1; ds += 2) {
                    IVec w = c;
                    w[a] += ds;
                    if (w[a] < 0 || w[a] >= g.m) continue;
                    int wid = g.cell_id(w);
                    if (!fill_cell[wid]) tset.insert(wid);
                }
        }
        trace.assign(tset.begin(), tset.end());
    }

    rep.trace_jump_mass = detail::axis_jump_mass(g, u.v, trace, nullptr, true);

    bool constant_trace = true;
    if (!trace.empty()) {
        std::uint8_t first = u.v[trace[0]];
        for (int cid : trace)
            if (u.v[cid] != first) constant_trace = false;
    }
    if (constant_trace) {
        std::uint8_t fillv = trace.empty() ? 0 : u.v[trace[0]];
        for (int cid : cells) u.v[cid] = fillv;
        rep.branch = FillBranch::constant_trace;
        return rep;
    }

    double rho, s;
    detail::scan_band(geo, ball.radius, rho, s);

    // traces jumpier than the threshold get the constant-0 fill outright; the
    // added jump is then bounded by the ball's rasterized perimeter
    if (rep.trace_jump_mass > gamma_threshold * ipow(s, g.n - 1)) {
        for (int cid : cells) u.v[cid] = 0;
        rep.branch = FillBranch::fallback_zero;
        double hs = ipow(g.h, g.n - 1);
        for (int cid : cells) {
            IVec c = g.cell_coords(cid);
            for (int a = 0; a < g.n; ++a)
                for (int ds = -1; ds <= 1; ds += 2) {
                    IVec w = c;
                    w[a] += ds;
                    if (w[a] < 0 || w[a] >= g.m) continue;
                    int wid = g.cell_id(w);
                    if (ds == -1 && fill_cell[wid]) continue;
                    if (u.v[cid] != u.v[wid]) rep.fill_jump_mass += hs;
                }
        }
        return rep;
    }

    detail::local_label_fill(g, cells, fill_cell, u.v);

    auto in_band = std::function<bool(const Vec&)>([&](const Vec& x) {
        double d = dist(x, ball.center);
        return d > rho && d <= ball.radius;
    });
    rep.band_jump_mass = detail::axis_jump_mass(g, u.v, cells, in_band);

    if (rep.band_jump_mass <= gamma_threshold * ipow(s, g.n - 1)) {
        // jump-free sphere scan inside (rho + s/3, rho + 2s/3)
        rep.branch = FillBranch::small_jump_kept;
        for (double rbar = rho + s / 3.0 + 0.25 * g.h; rbar < rho + 2.0 * s / 3.0;
             rbar += 0.25 * g.h) {
            bool clean = true;
            int crossing = 0;
            std::uint8_t lab = 0;
            bool lab_set = false;
            for (int cid : cells) {
                IVec c = g.cell_coords(cid);
                double dc = dist(g.cell_center(c), ball.center);
                for (int a = 0; a < g.n && clean; ++a)
                    for (int ds = -1; ds <= 1 && clean; ds += 2) {
                        IVec w = c;
                        w[a] += ds;
                        if (w[a] < 0 || w[a] >= g.m) continue;
                        int wid = g.cell_id(w);
                        double dw = dist(g.cell_center(w), ball.center);
                        if (dc < rbar && dw >= rbar) {
                            ++crossing;
                            if (u.v[cid] != u.v[wid]) clean = false;
                            else if (!lab_set) { lab = u.v[wid]; lab_set = true; }
                            else if (lab != u.v[wid]) clean = false;
                        }
                    }
                if (!clean) break;
            }
            if (clean && crossing > 0) {
                for (int cid : cells) {
                    if (dist(g.cell_center(g.cell_coords(cid)), ball.center) < rbar)
                        u.v[cid] = lab;
                }
                rep.branch = FillBranch::small_jump_sphere;
                rep.clean_radius = rbar;
                break;
            }
        }
    } else {
        for (int cid : cells) u.v[cid] = 0;
        rep.branch = FillBranch::fallback_zero;
    }

    rep.fill_jump_mass = 0.0;
    {
        double hs = ipow(g.h, g.n - 1);
        for (int cid : cells) {
            IVec c = g.cell_coords(cid);
            for (int a = 0; a < g.n; ++a)
                for (int ds = -1; ds <= 1; ds += 2) {
                    IVec w = c;
                    w[a] += ds;
                    if (w[a] < 0 || w[a] >= g.m) continue;
                    int wid = g.cell_id(w);
                    if (ds == -1 && fill_cell[wid]) continue; // count fill-fill pairs once
                    if (u.v[cid] != u.v[wid]) rep.fill_jump_mass += hs;
                }
        }
    }
    return rep;
}

// p-harmonic value fill of one ball, iterated down the dyadic schedule for
// r >= delta. Fills only nodes interior to the ball's hole cells; the result
// agrees with the surrounding field and stays inside its value range.
inline SobolevFillReport extend_sobolev_ball_values(std::vector<double>& values,
                                                    const PerforatedGeometry& geo,
                                                    const Masks& masks, int ball_index,
                                                    double p = 2.0,
                                                    const std::vector<std::uint8_t>& cut_link = {},
                                                    double default_value = 0.0) {
    const Grid& g = masks.grid;
    const BallInclusion& ball = geo.balls[ball_index];
    const std::vector<int>& cells = masks.hole_cells_of_ball[ball_index];
    SobolevFillReport rep;
    if (cells.empty()) return rep;

    std::vector<std::uint8_t> fill_cell(g.cell_count(), 0);
    for (int cid : cells) fill_cell[cid] = 1;

    const double inv_h2 = 1.0 / (g.h * g.h), hn = ipow(g.h, g.n);
    auto cells_energy = [&](const std::vector<int>& cs) {
        double e = 0.0;
        for (int cid : cs) {
            IVec c = g.cell_coords(cid);
            int tail = g.link_tail(c);
            double g2 = 0.0;
            for (int a = 0; a < g.n; ++a) {
                if (!cut_link.empty() && cut_link[Grid::link_id(cid, a, g.n)]) continue;
                double du = values[g.link_head(c, a)] - values[tail];
                g2 += du * du;
            }
            g2 *= inv_h2;
            if (g2 > 0.0) e += std::pow(g2, 0.5 * p) * hn;
        }
        return e;
    };
    rep.trace_energy = cells_energy(masks.annulus_cells[ball_index]);

    // band decomposition: radii r, r/q, r/q^2, ..., r_delta, then the core
    std::vector<double> rings;
    if (ball.radius >= geo.delta) {
        DyadicSchedule sched = dyadic_schedule(ball.radius, geo.delta, geo.r_star);
        double rr = ball.radius;
        for (int i = 0; i < sched.n_delta; ++i) {
            rings.push_back(rr);
            rr /= sched.ratio;
        }
        rings.push_back(rr); // core boundary ~ r_delta
    } else {
        rings.push_back(ball.radius);
    }

    // nested solves down the schedule: each step fills every remaining cell
    // from the values frozen so far, then freezes the outermost ring. Affine
    // traces propagate exactly; every ring of the schedule is exercised.
    std::vector<std::uint8_t> done(g.cell_count(), 0);
    for (std::size_t bi = 0; bi < rings.size(); ++bi) {
        double inner = bi + 1 < rings.size() ? rings[bi + 1] : -1.0;
        std::vector<int> pending_cells;
        std::vector<std::uint8_t> pending(g.cell_count(), 0);
        for (int cid : cells)
            if (!done[cid]) {
                pending_cells.push_back(cid);
                pending[cid] = 1;
            }
        if (pending_cells.empty()) break;
        detail::local_pharmonic_fill(g, pending_cells, pending, values, cut_link, p, default_value);
        for (int cid : pending_cells) {
            double d = dist(g.cell_center(g.cell_coords(cid)), ball.center);
            if (bi + 1 == rings.size() || d > inner) {
                done[cid] = 1;
                ++rep.filled_cells;
            }
        }
        ++rep.bands;
    }
    rep.fill_energy = cells_energy(cells);
    return rep;
}

inline SobolevFillReport extend_sobolev_ball(ScalarField& u, const PerforatedGeometry& geo,
                                             const Masks& masks, int ball_index, double p = 2.0,
                                             const std::vector<std::uint8_t>& cut_link = {},
                                             double default_value = 0.0) {
    detail::check_same_grid(u.grid, masks.grid, "extend_sobolev_ball");
    return extend_sobolev_ball_values(u.v, geo, masks, ball_index, p, cut_link, default_value);
}

inline SobolevFillReport extend_sobolev_ball(SbvField& u, const PerforatedGeometry& geo,
                                             const Masks& masks, int ball_index, double p = 2.0,
                                             const std::vector<std::uint8_t>& cut_link = {},
                                             double default_value = 0.0) {
    detail::check_same_grid(u.grid, masks.grid, "extend_sobolev_ball");
    return extend_sobolev_ball_values(u.v, geo, masks, ball_index, p, cut_link, default_value);
}

// ---------------------------------------------------------------------------
// Whole-domain SBV extension
// ---------------------------------------------------------------------------

struct ExtensionReport {
    double energy_before = 0.0;         // MS^p of the input on the non-hole region
    double energy_after = 0.0;          // MS^p of the output on the whole window
    double energy_after_interior = 0.0; // frame excluded
    double boundary_term = 0.0;         // 2n t^{n-1} when boundary balls were filled
    double ratio = 0.0;                 // after / (before + boundary_term)
    double ratio_interior = 0.0;        // interior / before
    int balls_filled = 0;
    int boundary_balls = 0;
    int branch_constant = 0;
    int branch_sphere = 0;
    int branch_kept = 0;
    int branch_fallback = 0;
    double trace_jump_mass = 0.0;
    double added_jump_mass = 0.0;
    double value_min = 0.0, value_max = 0.0;
    double homothety_check = 0.0; // filled by the battery runner
};

// Binary label proxy of the SBV trace around one ball: connected components
// of the trace cells under jump-free axis adjacency; the two largest become
// the 0/1 sides, stragglers attach to the side they touch most.
namespace detail {

inline bool trace_label_proxy(const Grid& g, const SbvField& u, const std::vector<int>& trace,
                              std::vector<std::uint8_t>& labels /* full grid, filled on trace */) {
    if (trace.empty()) return false;
    std::map<int, int> comp;
    int ncomp = 0;
    // BFS over trace cells through non-jump axis facets, in index order
    std::vector<int> sorted = trace;
    std::sort(sorted.begin(), sorted.end());
    std::set<int> tset(sorted.begin(), sorted.end());
    for (int cid : sorted) {
        if (comp.count(cid)) continue;
        std::vector<int> stack{cid};
        comp[cid] = ncomp;
        while (!stack.empty()) {
            int cur = stack.back();
            stack.pop_back();
            IVec c = g.cell_coords(cur);
            for (int a = 0; a < g.n; ++a)
                for (int ds = -1; ds <= 1; ds += 2) {
                    IVec w = c;
                    w[a] += ds;
                    if (w[a] < 0 || w[a] >= g.m) continue;
                    int wid = g.cell_id(w);
                    if (!tset.count(wid) || comp.count(wid)) continue;
                    // the facet between cur and wid corresponds to the forward
                    // link of the lower cell along axis a
                    int lower = ds == 1 ? cur : wid;
                    if (u.jump[Grid::link_id(lower, a, g.n)]) continue;
                    comp[wid] = ncomp;
                    stack.push_back(wid);
                }
        }
        ++ncomp;
    }
    if (ncomp <= 1) {
        for (int cid : trace) labels[cid] = 0;
        return false; // jump-free trace
    }
    std::vector<long long> sz(ncomp, 0);
    for (auto& [cid, k] : comp) sz[k] += 1;
    std::vector<int> order(ncomp);
    for (int i = 0; i < ncomp; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (sz[a] != sz[b]) return sz[a] > sz[b];
        return a < b;
    });
    std::vector<std::int8_t> comp_label(ncomp, -1);
    comp_label[order[0]] = 0;
    comp_label[order[1]] = 1;
    // attach remaining components (rare) by adjacency majority, size order
    for (int oi = 2; oi < ncomp; ++oi) {
        int k = order[oi];
        long long votes1 = 0, votes0 = 0;
        for (int cid : sorted) {
            if (comp[cid] != k) continue;
            IVec c = g.cell_coords(cid);
            for (int a = 0; a < g.n; ++a)
                for (int ds = -1; ds <= 1; ds += 2) {
                    IVec w = c;
                    w[a] += ds;
                    if (w[a] < 0 || w[a] >= g.m) continue;
                    int wid = g.cell_id(w);
                    if (!tset.count(wid) || comp[wid] == k) continue;
                    std::int8_t l = comp_label[comp[wid]];
                    if (l == 0) ++votes0;
                    if (l == 1) ++votes1;
                }
        }
        comp_label[k] = votes1 > votes0 ? 1 : 0;
    }
    for (int cid : trace) labels[cid] = static_cast<std::uint8_t>(comp_label[comp[cid]]);
    return true;
}

} // namespace detail

inline std::pair<SbvField, ExtensionReport> extend_sbv_domain(const SbvField& input,
                                                              const PerforatedGeometry& geo,
                                                              const Masks& masks, double p = 2.0,
                                                              double gamma_threshold = 12.0) {
    detail::check_same_grid(input.grid, masks.grid, "extend_sbv_domain");
    const Grid& g = masks.grid;
    SbvField out = input;
    ExtensionReport rep;
    rep.energy_before = msp_energy(input, p, masks, Region::non_hole);

    double glo = input.v.empty() ? 0.0 : input.v[0], ghi = glo;
    for (double v : input.v) {
        glo = std::min(glo, v);
        ghi = std::max(ghi, v);
    }
    double clamp0 = std::min(ghi, std::max(glo, 0.0)); // trivial-fill constant, kept in range

    for (std::size_t bi = 0; bi < geo.balls.size(); ++bi) {
        const std::vector<int>& cells = masks.hole_cells_of_ball[bi];
        if (cells.empty()) continue;
        ++rep.balls_filled;
        if (masks.boundary_ball_flags[bi]) ++rep.boundary_balls;

        std::vector<std::uint8_t> fill_cell(g.cell_count(), 0);
        for (int cid : cells) fill_cell[cid] = 1;

        // trace set: annulus cells plus all non-fill neighbors
        std::vector<int> trace = masks.annulus_cells[bi];
        {
            std::set<int> tset(trace.begin(), trace.end());
            for (int cid : cells) {
                IVec c = g.cell_coords(cid);
                for (int a = 0; a < g.n; ++a)
                    for (int ds = -1; ds <= 1; ds += 2) {
                        IVec w = c;
                        w[a] += ds;
                        if (w[a] < 0 || w[a] >= g.m) continue;
                        int wid = g.cell_id(w);
                        if (!fill_cell[wid]) tset.insert(wid);
                    }
            }
            trace.assign(tset.begin(), tset.end());
        }

        // clear the ball's old links; they are redefined by the fill
        for (int cid : cells)
            for (int a = 0; a < g.n; ++a) out.jump[Grid::link_id(cid, a, g.n)] = 0;

        std::vector<std::uint8_t> labels(g.cell_count(), 0);
        bool has_jumps = detail::trace_label_proxy(g, input, trace, labels);

        if (has_jumps) {
            LabelField lab(g);
            lab.v = labels;
            PartitionFillReport pr = extend_partition_ball(lab, geo, masks, static_cast<int>(bi),
                                                           gamma_threshold);
            rep.trace_jump_mass += pr.trace_jump_mass;
            switch (pr.branch) {
                case FillBranch::constant_trace: ++rep.branch_constant; break;
                case FillBranch::small_jump_sphere: ++rep.branch_sphere; break;
                case FillBranch::small_jump_kept: ++rep.branch_kept; break;
                case FillBranch::fallback_zero: ++rep.branch_fallback; break;
                default: break;
            }
            // label interfaces become jump links on the fill side
            for (int cid : cells) {
                IVec c = g.cell_coords(cid);
                for (int a = 0; a < g.n; ++a)
                    for (int ds = -1; ds <= 1; ds += 2) {
                        IVec w = c;
                        w[a] += ds;
                        if (w[a] < 0 || w[a] >= g.m) continue;
                        int wid = g.cell_id(w);
                        std::uint8_t lw = fill_cell[wid] ? lab.v[wid] : labels[wid];
                        if (lab.v[cid] == lw) continue;
                        if (ds == 1) {
                            out.jump[Grid::link_id(cid, a, g.n)] = 1;
                        } else if (!fill_cell[wid]) {
                            // lower neighbor is trace: the jump belongs to the
                            // fill cell's own link along this axis
                            out.jump[Grid::link_id(cid, a, g.n)] = 1;
                        }
                    }
            }
        } else {
            ++rep.branch_constant;
        }

        extend_sobolev_ball_values(out.v, geo, masks, static_cast<int>(bi), p, out.jump, clamp0);
    }

    rep.energy_after = msp_energy(out, p, masks, Region::all);
    rep.energy_after_interior = msp_energy(out, p, masks, Region::interior);
    rep.boundary_term = rep.boundary_balls > 0 ? 2.0 * g.n * ipow(g.t, g.n - 1) : 0.0;
    double denom = rep.energy_before + rep.boundary_term;
    rep.ratio = denom > 0.0 ? rep.energy_after / denom : 0.0;
    rep.ratio_interior = rep.energy_before > 0.0 ? rep.energy_after_interior / rep.energy_before : 0.0;

    double hs = ipow(g.h, g.n - 1);
    for (long long cid = 0; cid < g.cell_count(); ++cid)
        for (int a = 0; a < g.n; ++a)
            if (masks.hole_cells[cid] && out.jump[Grid::link_id(static_cast<int>(cid), a, g.n)])
                rep.added_jump_mass += hs;

    rep.value_min = out.v.empty() ? 0.0 : out.v[0];
    rep.value_max = rep.value_min;
    for (double v : out.v) {
        rep.value_min = std::min(rep.value_min, v);
        rep.value_max = std::max(rep.value_max, v);
    }
    return {std::move(out), rep};
}

// ---------------------------------------------------------------------------
// Batterable instances
// ---------------------------------------------------------------------------

// A geometry plus a field, scalable as one unit so the energy ratio of the
// extension can be compared across homotheties.
struct SbvInstance {
    PerforatedGeometry geometry;
    SbvField field;
    double p = 2.0;
    double h_request = 0.0;
    int frame_width = 1;
};

// Random instance: hard-core geometry with radii on both sides of delta, a
// smooth field, and (depending on the seed) a jump plane through a ball or
// across the window. Deterministic in the seed.
inline SbvInstance make_extension_instance(std::uint64_t seed, int n = 2, double window = 4.0,
                                           double delta = 0.25, double r_star = 0.75,
                                           double h_over_delta = 0.25, double p = 2.0) {
    SbvInstance inst;
    inst.p = p;
    inst.h_request = h_over_delta * delta;
    RealizationSeed rs;
    rs.kind = GeneratorKind::hardcore_rejection;
    rs.seed = seed;
    rs.intensity = 1.2;
    rs.r_min = 0.4 * delta;
    rs.r_max = 0.8 * r_star;
    inst.geometry = gen_hardcore_rejection(rs, n, window, delta, r_star);

    Grid grid(n, window, inst.h_request, inst.frame_width, inst.geometry.origin);
    inst.field = SbvField(grid);
    Rng rng(hash_mix(seed, 0x5bd1e995u));
    Vec xi{rng.uniform(-1, 1), rng.uniform(-1, 1), n == 3 ? rng.uniform(-1, 1) : 0.0};
    double amp = rng.uniform(0.2, 1.0), freq = 2.0 * pi / window;
    for (long long id = 0; id < grid.node_count(); ++id) {
        Vec x = grid.node_pos(grid.node_coords(static_cast<int>(id)));
        double s = amp;
        for (int a = 0; a < n; ++a) s *= std::sin(freq * x[a]);
        inst.field.v[id] = dot(xi, x) + s;
    }
    int mode = static_cast<int>(seed % 3);
    if (mode != 0 && !inst.geometry.balls.empty()) {
        const BallInclusion& b = inst.geometry.balls[seed % inst.geometry.balls.size()];
        Vec nu = mode == 1 ? Vec{0.0, 1.0, 0.0}
                           : normalized(Vec{1.0, 1.0, n == 3 ? 1.0 : 0.0});
        Vec anchor = b.center;
        anchor[0] += 0.37 * grid.h; // keep nodes off the plane
        add_plane_jump(inst.field, anchor, nu, rng.uniform(0.5, 2.0));
    }
    return inst;
}

// Homothety: all lengths scale by lambda, node values by lambda^{(p-1)/p}
// (both MS^p terms then scale by lambda^{n-1}).
inline SbvInstance scaled_instance(const SbvInstance& inst, double lambda) {
    SbvInstance out;
    out.p = inst.p;
    out.frame_width = inst.frame_width;
    out.h_request = inst.h_request * lambda;
    out.geometry = scaled(inst.geometry, lambda);
    Grid g2 = inst.field.grid;
    g2.t *= lambda;
    g2.h *= lambda;
    g2.origin = scale(inst.field.grid.origin, lambda);
    out.field.grid = g2;
    out.field.jump = inst.field.jump;
    out.field.v.resize(inst.field.v.size());
    double vscale = std::pow(lambda, (inst.p - 1.0) / inst.p);
    for (std::size_t i = 0; i < inst.field.v.size(); ++i)
        out.field.v[i] = inst.field.v[i] * vscale;
    return out;
}

inline std::pair<SbvField, ExtensionReport> run_extension_instance(const SbvInstance& inst,
                                                                   double gamma_threshold = 12.0) {
    Masks masks = rasterize(inst.geometry, inst.h_request, inst.frame_width);
    return extend_sbv_domain(inst.field, inst.geometry, masks, inst.p, gamma_threshold);
}

// Batch constant: max over instances of the extension energy ratio, skipping
// zero-energy traces.
struct ExtensionConstant {
    double c_max = 0.0;
    double c_mean = 0.0;
    int used = 0;
    int skipped = 0;
    bool valid = false;
    std::string message;
};

inline ExtensionConstant empirical_extension_constant(const std::vector<ExtensionReport>& batch) {
    ExtensionConstant out;
    if (batch.size() < 10) {
        out.valid = false;
        out.message = "need at least 10 instances";
        out.skipped = static_cast<int>(batch.size());
        return out;
    }
    double sum = 0.0;
    for (const ExtensionReport& r : batch) {
        if (r.energy_before <= 0.0) {
            ++out.skipped;
            continue;
        }
        double c = (r.energy_after - r.boundary_term) / r.energy_before;
        out.c_max = std::max(out.c_max, c);
        sum += c;
        ++out.used;
    }
    if (out.used == 0) {
        out.valid = false;
        out.message = "all instances skipped: zero trace energy (constant fields extend freely)";
    } else {
        out.valid = true;
        out.c_mean = sum / out.used;
    }
    return out;
}

} // namespace perfhom
