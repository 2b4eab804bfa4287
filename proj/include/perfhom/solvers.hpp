#pragma once

// The two discrete cell problems.
//
// Volume: minimize sum_c w_c a_c |grad u|^p h^n over node fields matching a
// Dirichlet datum on the frame nodes. p = 2 is a symmetric positive
// semi-definite quadratic solved by Jacobi-preconditioned CG; p != 2 runs
// preconditioned descent with Armijo steps from the p = 2 solution.
//
// Surface: minimize the pairwise interface energy over binary labelings with
// frame cells pinned to a half-space datum. Solved exactly by min-cut on
// integer-scaled capacities; a brute-force enumeration oracle shares the
// identical capacities so oracle comparisons are integer-exact.

#include "perfhom/energy.hpp"
#include "perfhom/maxflow.hpp"

#include <chrono>

namespace perfhom {

template <typename FieldT>
struct CellProblemResult {
    FieldT minimizer;
    double energy = 0.0;
    double normalized = 0.0; // energy / t^n (volume) or / t^{n-1} (surface)
    int iterations = 0;
    double residual = 0.0;
    bool exact_flag = false;
    bool converged = true;
    double wall_seconds = 0.0;
};

using VolumeCellResult = CellProblemResult<ScalarField>;
using SurfaceCellResult = CellProblemResult<LabelField>;

namespace detail {

struct StopWatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

// Per-cell quadratic coefficient q_c = w_c a_c h^{n-2}; energy(u) = sum_c q_c
// sum_a (du_a)^2 for p = 2.
struct VolumeSystem {
    const Masks* masks;
    std::vector<double> qcell;     // per cell
    std::vector<std::uint8_t> free_node;
    std::vector<double> diag;      // Jacobi diagonal on nodes
    int n_free = 0;

    VolumeSystem(const Masks& mk, const VolumeIntegrand& q,
                 const std::vector<std::uint8_t>& pinned)
        : masks(&mk) {
        const Grid& g = mk.grid;
        qcell.resize(g.cell_count());
        for (long long id = 0; id < g.cell_count(); ++id) {
            double w = mk.hole_cells[id] ? q.hole_weight : 1.0;
            qcell[id] =
                w == 0.0 ? 0.0
                         : w * q.a(g.cell_center(g.cell_coords(static_cast<int>(id)))) *
                               ipow(g.h, g.n - 2);
        }
        free_node.resize(g.node_count());
        for (long long i = 0; i < g.node_count(); ++i) free_node[i] = pinned[i] ? 0 : 1;
        diag.assign(g.node_count(), 0.0);
        for (long long id = 0; id < g.cell_count(); ++id) {
            if (qcell[id] == 0.0) continue;
            IVec c = g.cell_coords(static_cast<int>(id));
            int tail = g.link_tail(c);
            for (int a = 0; a < g.n; ++a) {
                diag[tail] += qcell[id];
                diag[g.link_head(c, a)] += qcell[id];
            }
        }
        for (long long i = 0; i < g.node_count(); ++i)
            if (free_node[i] && diag[i] > 0.0) ++n_free;
    }

    // r = (A u), A the energy Hessian over all nodes (factor 2 dropped).
    void apply(const std::vector<double>& u, std::vector<double>& r) const {
        const Grid& g = masks->grid;
        std::fill(r.begin(), r.end(), 0.0);
        for (long long id = 0; id < g.cell_count(); ++id) {
            double qc = qcell[id];
            if (qc == 0.0) continue;
            IVec c = g.cell_coords(static_cast<int>(id));
            int tail = g.link_tail(c);
            for (int a = 0; a < g.n; ++a) {
                int head = g.link_head(c, a);
                double f = qc * (u[head] - u[tail]);
                r[head] += f;
                r[tail] -= f;
            }
        }
    }

    bool active(long long node) const { return free_node[node] && diag[node] > 0.0; }
};

// Deterministic fill for nodes untouched by the quadratic form (interiors of
// weight-0 holes): repeated averaging of already-valued grid neighbors. The
// values carry no energy; this only keeps the field finite and reproducible.
inline void fill_orphans(const VolumeSystem& sys, std::vector<double>& u) {
    const Grid& g = sys.masks->grid;
    std::vector<std::uint8_t> valued(g.node_count(), 0);
    bool any_orphan = false;
    for (long long i = 0; i < g.node_count(); ++i) {
        valued[i] = (!sys.free_node[i] || sys.diag[i] > 0.0) ? 1 : 0;
        if (!valued[i]) any_orphan = true;
    }
    if (!any_orphan) return;
    for (int sweep = 0; sweep < g.m * g.n + 2; ++sweep) {
        bool changed = false;
        for (long long i = 0; i < g.node_count(); ++i) {
            if (valued[i]) continue;
            IVec v = g.node_coords(static_cast<int>(i));
            double sum = 0.0;
            int cnt = 0;
            for (int a = 0; a < g.n; ++a)
                for (int dsign = -1; dsign <= 1; dsign += 2) {
                    IVec w = v;
                    w[a] += dsign;
                    if (w[a] < 0 || w[a] > g.m) continue;
                    int nid = g.node_id(w);
                    if (valued[nid]) {
                        sum += u[nid];
                        ++cnt;
                    }
                }
            if (cnt > 0) {
                u[i] = sum / cnt;
                valued[i] = 2; // becomes available next sweep
                changed = true;
            }
        }
        for (long long i = 0; i < g.node_count(); ++i)
            if (valued[i] == 2) valued[i] = 1;
        if (!changed) break;
    }
}

} // namespace detail

// Dirichlet volume solve with explicit pinned nodes carrying pin_values.
inline VolumeCellResult solve_volume_dirichlet(const Masks& masks, const VolumeIntegrand& q,
                                               const std::vector<std::uint8_t>& pinned,
                                               const ScalarField& pin_values, double tol = 1e-8,
                                               int max_iter = -1) {
    detail::check_same_grid(pin_values.grid, masks.grid, "solve_volume_dirichlet");
    require(tol > 0.0, "solve_volume_dirichlet: tol must be positive");
    detail::StopWatch watch;
    const Grid& g = masks.grid;

    VolumeIntegrand q2 = q; // p = 2 pass first (also the p != 2 warm start)
    q2.p = 2.0;
    detail::VolumeSystem sys(masks, q2, pinned);

    std::vector<double> u = pin_values.v; // feasible start: the datum itself
    long long nn = g.node_count();
    std::vector<double> r(nn), z(nn), p(nn), Ap(nn);

    sys.apply(u, r);
    for (long long i = 0; i < nn; ++i) r[i] = sys.active(i) ? -r[i] : 0.0;
    double b2 = 0.0;
    for (long long i = 0; i < nn; ++i) b2 += r[i] * r[i];
    double stop2 = tol * tol * std::max(b2, 1e-300);

    int iters = 0;
    int iter_cap = max_iter > 0 ? max_iter
                                : static_cast<int>(50.0 * std::sqrt(double(std::max(sys.n_free, 1)))) + 10;
    double rz = 0.0;
    double r2 = b2;
    if (r2 > stop2) {
        for (long long i = 0; i < nn; ++i) z[i] = sys.active(i) ? r[i] / sys.diag[i] : 0.0;
        p = z;
        rz = 0.0;
        for (long long i = 0; i < nn; ++i) rz += r[i] * z[i];
        while (iters < iter_cap) {
            sys.apply(p, Ap);
            for (long long i = 0; i < nn; ++i)
                if (!sys.active(i)) Ap[i] = 0.0;
            double pAp = 0.0;
            for (long long i = 0; i < nn; ++i) pAp += p[i] * Ap[i];
            if (pAp <= 0.0) break;
            double alpha = rz / pAp;
            for (long long i = 0; i < nn; ++i) {
                u[i] += alpha * p[i];
                r[i] -= alpha * Ap[i];
            }
            ++iters;
            r2 = 0.0;
            for (long long i = 0; i < nn; ++i) r2 += r[i] * r[i];
            if (r2 <= stop2) break;
            for (long long i = 0; i < nn; ++i) z[i] = sys.active(i) ? r[i] / sys.diag[i] : 0.0;
            double rz2 = 0.0;
            for (long long i = 0; i < nn; ++i) rz2 += r[i] * z[i];
            double beta = rz2 / rz;
            rz = rz2;
            for (long long i = 0; i < nn; ++i) p[i] = z[i] + beta * p[i];
        }
    }

    VolumeCellResult res;
    res.iterations = iters;
    res.residual = b2 > 0.0 ? std::sqrt(r2 / std::max(b2, 1e-300)) : 0.0;
    res.converged = r2 <= stop2;

    // p != 2: preconditioned descent with Armijo line search from the p = 2
    // solution, stopping on relative energy stagnation over 10 steps.
    if (q.p != 2.0) {
        detail::VolumeSystem sysp(masks, q, pinned); // reuse diag as a preconditioner scale
        const double c_armijo = 1e-4;
        ScalarField cur(g);
        cur.v = u;
        double energy = volume_energy(cur, q, masks);
        int stagnant = 0;
        std::vector<double> grad(nn);
        int desc_iters = 0;
        const int desc_cap = 2000;
        while (stagnant < 10 && desc_iters < desc_cap) {
            // gradient of sum w a |G|^p h^n
            std::fill(grad.begin(), grad.end(), 0.0);
            const double hn = ipow(g.h, g.n), inv_h2 = 1.0 / (g.h * g.h);
            for (long long id = 0; id < g.cell_count(); ++id) {
                double w = masks.hole_cells[id] ? q.hole_weight : 1.0;
                if (w == 0.0) continue;
                IVec c = g.cell_coords(static_cast<int>(id));
                int tail = g.link_tail(c);
                double du[3] = {0, 0, 0};
                double g2 = 0.0;
                for (int a = 0; a < g.n; ++a) {
                    du[a] = cur.v[g.link_head(c, a)] - cur.v[tail];
                    g2 += du[a] * du[a];
                }
                g2 *= inv_h2;
                double aco = q.a(g.cell_center(c));
                double fac = w * aco * q.p * std::pow(g2 + 1e-24, 0.5 * q.p - 1.0) * hn * inv_h2;
                for (int a = 0; a < g.n; ++a) {
                    double t = fac * du[a];
                    grad[g.link_head(c, a)] += t;
                    grad[tail] -= t;
                }
            }
            double gd = 0.0;
            for (long long i = 0; i < nn; ++i) {
                if (!sysp.active(i)) { grad[i] = 0.0; continue; }
                gd += grad[i] * grad[i] / sysp.diag[i];
            }
            if (gd <= 0.0) break;
            double step = 1.0;
            bool accepted = false;
            for (int bt = 0; bt < 50; ++bt) {
                ScalarField trial(g);
                trial.v = cur.v;
                for (long long i = 0; i < nn; ++i)
                    if (sysp.active(i)) trial.v[i] -= step * grad[i] / sysp.diag[i];
                double etrial = volume_energy(trial, q, masks);
                if (etrial <= energy - c_armijo * step * gd) {
                    double drop = (energy - etrial) / std::max(energy, 1e-300);
                    cur.v.swap(trial.v);
                    energy = etrial;
                    stagnant = drop < tol ? stagnant + 1 : 0;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            ++desc_iters;
            if (!accepted) break;
        }
        u = cur.v;
        res.iterations += desc_iters;
        res.converged = res.converged && (stagnant >= 10 || desc_iters < desc_cap);
    }

    detail::VolumeSystem sys_fill(masks, q, pinned);
    detail::fill_orphans(sys_fill, u);

    res.minimizer = ScalarField(g);
    res.minimizer.v = std::move(u);
    res.energy = volume_energy(res.minimizer, q, masks);
    res.normalized = res.energy / ipow(g.t, g.n);
    res.exact_flag = false;
    res.wall_seconds = watch.seconds();
    return res;
}

// Volume cell problem: u = l_xi on the frame nodes.
inline VolumeCellResult solve_volume_cell(const Masks& masks, const VolumeIntegrand& q,
                                          const Vec& xi, double tol = 1e-8, int max_iter = -1) {
    return solve_volume_dirichlet(masks, q, masks.frame_nodes, affine_field(masks.grid, xi), tol,
                                  max_iter);
}

// Dense direct oracle, p = 2 only, at most ~400 unknowns.
inline VolumeCellResult brute_force_volume(const Masks& masks, const VolumeIntegrand& q,
                                           const Vec& xi) {
    require(q.p == 2.0, "brute_force_volume: p must be 2");
    detail::StopWatch watch;
    const Grid& g = masks.grid;
    ScalarField datum = affine_field(g, xi);
    detail::VolumeSystem sys(masks, q, masks.frame_nodes);
    require(sys.n_free <= 400, "brute_force_volume: more than 400 free nodes");

    std::vector<int> idx(g.node_count(), -1);
    std::vector<int> nodes;
    for (long long i = 0; i < g.node_count(); ++i)
        if (sys.active(i)) {
            idx[i] = static_cast<int>(nodes.size());
            nodes.push_back(static_cast<int>(i));
        }
    int nf = static_cast<int>(nodes.size());

    // Assemble A (free x free) and rhs = -A_fp u_p by cell loops.
    std::vector<double> A(static_cast<std::size_t>(nf) * nf, 0.0), rhs(nf, 0.0);
    std::vector<double> u = datum.v;
    for (long long id = 0; id < g.cell_count(); ++id) {
        double qc = sys.qcell[id];
        if (qc == 0.0) continue;
        IVec c = g.cell_coords(static_cast<int>(id));
        int tail = g.link_tail(c);
        for (int a = 0; a < g.n; ++a) {
            int head = g.link_head(c, a);
            int it = idx[tail], ih = idx[head];
            // quadratic q (u_h - u_t)^2
            if (it >= 0) A[static_cast<std::size_t>(it) * nf + it] += qc;
            if (ih >= 0) A[static_cast<std::size_t>(ih) * nf + ih] += qc;
            if (it >= 0 && ih >= 0) {
                A[static_cast<std::size_t>(it) * nf + ih] -= qc;
                A[static_cast<std::size_t>(ih) * nf + it] -= qc;
            } else if (it >= 0 && ih < 0) {
                rhs[it] += qc * u[head];
            } else if (ih >= 0 && it < 0) {
                rhs[ih] += qc * u[tail];
            }
        }
    }

    // Cholesky A = L L^T
    for (int j = 0; j < nf; ++j) {
        double d = A[static_cast<std::size_t>(j) * nf + j];
        for (int k = 0; k < j; ++k) {
            double l = A[static_cast<std::size_t>(j) * nf + k];
            d -= l * l;
        }
        require(d > 0.0, "brute_force_volume: matrix not positive definite");
        d = std::sqrt(d);
        A[static_cast<std::size_t>(j) * nf + j] = d;
        for (int i = j + 1; i < nf; ++i) {
            double s = A[static_cast<std::size_t>(i) * nf + j];
            for (int k = 0; k < j; ++k)
                s -= A[static_cast<std::size_t>(i) * nf + k] * A[static_cast<std::size_t>(j) * nf + k];
            A[static_cast<std::size_t>(i) * nf + j] = s / d;
        }
    }
    // forward/backward substitution
    std::vector<double> y(nf);
    for (int i = 0; i < nf; ++i) {
        double s = rhs[i];
        for (int k = 0; k < i; ++k) s -= A[static_cast<std::size_t>(i) * nf + k] * y[k];
        y[i] = s / A[static_cast<std::size_t>(i) * nf + i];
    }
    std::vector<double> x(nf);
    for (int i = nf - 1; i >= 0; --i) {
        double s = y[i];
        for (int k = i + 1; k < nf; ++k) s -= A[static_cast<std::size_t>(k) * nf + i] * x[k];
        x[i] = s / A[static_cast<std::size_t>(i) * nf + i];
    }
    for (int i = 0; i < nf; ++i) u[nodes[i]] = x[i];
    detail::fill_orphans(sys, u);

    VolumeCellResult res;
    res.minimizer = ScalarField(g);
    res.minimizer.v = std::move(u);
    res.energy = volume_energy(res.minimizer, q, masks);
    res.normalized = res.energy / ipow(g.t, g.n);
    res.exact_flag = true;
    res.iterations = 0;
    res.wall_seconds = watch.seconds();
    return res;
}

// ---------------------------------------------------------------------------
// Surface cell problem
// ---------------------------------------------------------------------------

// Facet table with integer capacities; shared between the min-cut solver, the
// brute-force oracle, and datum evaluations so all of them price labelings
// with exactly the same integers.
struct SurfaceInstance {
    const Masks* masks = nullptr;
    std::vector<std::pair<int, int>> cells; // facet endpoints (clamped pair)
    std::vector<double> weight;             // sigma * g * hole factor
    std::vector<std::int64_t> cap;          // floor(weight * scale)
    double scale = 1.0;

    std::int64_t label_energy_int(const std::vector<std::uint8_t>& labels) const {
        std::int64_t e = 0;
        for (std::size_t i = 0; i < cells.size(); ++i)
            if (labels[cells[i].first] != labels[cells[i].second]) e += cap[i];
        return e;
    }
};

inline SurfaceInstance build_surface_instance(const Masks& masks, const SurfaceIntegrand& s) {
    SurfaceInstance inst;
    inst.masks = &masks;
    const Grid& g = masks.grid;
    double total = 0.0;
    for_each_facet(g, facet_families(g), [&](int c, int d, const FacetFamily& f, bool) {
        double w = (masks.hole_cells[c] && masks.hole_cells[d]) ? s.hole_weight : 1.0;
        if (w != 0.0) {
            Vec mid = scale(add(g.cell_center(g.cell_coords(c)), g.cell_center(g.cell_coords(d))), 0.5);
            double gv = s.g(mid, f.normal);
            require(gv >= 0.0, "surface instance: g must be nonnegative");
            w *= f.sigma * gv;
        }
        inst.cells.emplace_back(c, d);
        inst.weight.push_back(w);
        total += w;
    });
    inst.scale = capacity_scale(total);
    inst.cap.resize(inst.weight.size());
    for (std::size_t i = 0; i < inst.weight.size(); ++i)
        inst.cap[i] = static_cast<std::int64_t>(std::floor(inst.weight[i] * inst.scale));
    return inst;
}

// fixed: -1 free, 0 or 1 pinned.
inline SurfaceCellResult solve_surface_labels(const Masks& masks, const SurfaceIntegrand& s,
                                              const std::vector<std::int8_t>& fixed) {
    detail::StopWatch watch;
    const Grid& g = masks.grid;
    require(static_cast<long long>(fixed.size()) == g.cell_count(),
            "solve_surface_labels: fixed size mismatch");
    SurfaceInstance inst = build_surface_instance(masks, s);

    std::vector<int> idx(g.cell_count(), -1);
    int n_free = 0;
    for (long long i = 0; i < g.cell_count(); ++i)
        if (fixed[i] < 0) idx[i] = n_free++;

    MaxflowGraph mf(n_free);
    std::int64_t base = 0;
    for (std::size_t i = 0; i < inst.cells.size(); ++i) {
        auto [c, d] = inst.cells[i];
        std::int64_t cap = inst.cap[i];
        if (cap <= 0) continue;
        bool cf = fixed[c] >= 0, df = fixed[d] >= 0;
        if (!cf && !df) {
            mf.add_bidirectional(idx[c], idx[d], cap);
        } else if (cf && df) {
            if (fixed[c] != fixed[d]) base += cap;
        } else {
            int free_cell = cf ? d : c;
            std::int8_t pin = cf ? fixed[c] : fixed[d];
            if (pin == 1) mf.add_edge(mf.source(), idx[free_cell], cap);
            else mf.add_edge(idx[free_cell], mf.sink(), cap);
        }
    }
    std::int64_t flow = mf.run();

    SurfaceCellResult res;
    res.minimizer = LabelField(g);
    for (long long i = 0; i < g.cell_count(); ++i)
        res.minimizer.v[i] = fixed[i] >= 0 ? static_cast<std::uint8_t>(fixed[i])
                                           : (mf.source_side(idx[i]) ? 1 : 0);
    res.energy = static_cast<double>(base + flow) / inst.scale;
    res.normalized = res.energy / ipow(g.t, g.n - 1);
    res.iterations = mf.phases();
    res.residual = 0.0;
    res.exact_flag = mf.certified();
    res.converged = true;
    res.wall_seconds = watch.seconds();
    return res;
}

inline std::vector<std::int8_t> frame_datum_labels(const Masks& masks, const Vec& nu,
                                                   const Vec& x_datum) {
    const Grid& g = masks.grid;
    std::vector<std::int8_t> fixed(g.cell_count(), -1);
    for (long long i = 0; i < g.cell_count(); ++i)
        if (masks.frame_cells[i]) {
            Vec c = g.cell_center(g.cell_coords(static_cast<int>(i)));
            fixed[i] = dot(sub(c, x_datum), nu) >= 0.0 ? 1 : 0;
        }
    return fixed;
}

// Surface cell problem: frame cells pinned to the half-space datum
// u_{x,1,nu}; exact global minimizer via min-cut.
inline SurfaceCellResult solve_surface_cell(const Masks& masks, const SurfaceIntegrand& s,
                                            const Vec& nu, const Vec& x_datum) {
    return solve_surface_labels(masks, s, frame_datum_labels(masks, nu, x_datum));
}

// Exhaustive oracle over <= 20 free cells, priced on the same integer
// capacities as the min-cut solver. Lexicographically-first minimizer.
inline SurfaceCellResult brute_force_surface(const Masks& masks, const SurfaceIntegrand& s,
                                             const std::vector<std::int8_t>& fixed) {
    detail::StopWatch watch;
    const Grid& g = masks.grid;
    require(static_cast<long long>(fixed.size()) == g.cell_count(),
            "brute_force_surface: fixed size mismatch");
    std::vector<int> free_cells;
    for (long long i = 0; i < g.cell_count(); ++i)
        if (fixed[i] < 0) free_cells.push_back(static_cast<int>(i));
    require(free_cells.size() <= 20, "brute_force_surface: more than 20 free cells");

    SurfaceInstance inst = build_surface_instance(masks, s);
    std::vector<std::uint8_t> labels(g.cell_count(), 0);
    for (long long i = 0; i < g.cell_count(); ++i)
        if (fixed[i] >= 0) labels[i] = static_cast<std::uint8_t>(fixed[i]);

    std::uint64_t combos = 1ULL << free_cells.size();
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    std::uint64_t best_bits = 0;
    for (std::uint64_t bits = 0; bits < combos; ++bits) {
        for (std::size_t j = 0; j < free_cells.size(); ++j)
            labels[free_cells[j]] = (bits >> j) & 1ULL ? 1 : 0;
        std::int64_t e = inst.label_energy_int(labels);
        if (e < best) {
            best = e;
            best_bits = bits;
        }
    }
    for (std::size_t j = 0; j < free_cells.size(); ++j)
        labels[free_cells[j]] = (best_bits >> j) & 1ULL ? 1 : 0;

    SurfaceCellResult res;
    res.minimizer = LabelField(g);
    res.minimizer.v = std::move(labels);
    res.energy = static_cast<double>(best) / inst.scale;
    res.normalized = res.energy / ipow(g.t, g.n - 1);
    res.exact_flag = true;
    res.wall_seconds = watch.seconds();
    return res;
}

} // namespace perfhom
