#pragma once

// Effective-density estimation: the normalized cell-problem minima
// m(t)/t^n (volume) and m(t)/t^{n-1} (surface) over ladders of window sizes,
// hole-weight perturbations, and seeded realizations, plus the structural
// checks (monotone perturbation limit, bounds, symmetry, convexity).

#include "perfhom/extension.hpp"
#include "perfhom/solvers.hpp"

#include <numeric>
#include <thread>

namespace perfhom {

// Hole-weight perturbation: finite k (weight 1/k), fully masked holes
// (weight 0, the k -> infinity limit), or the soft schedule where the weight
// alpha0/t vanishes with the scale.
struct PerturbationMode {
    enum class Kind { finite, masked, soft };
    Kind kind = Kind::masked;
    double k = 1.0;
    double alpha0 = 0.5;

    static PerturbationMode finite(double k_) { return {Kind::finite, k_, 0.0}; }
    static PerturbationMode masked() { return {Kind::masked, 0.0, 0.0}; }
    static PerturbationMode soft(double alpha0_ = 0.5) { return {Kind::soft, 0.0, alpha0_}; }

    double weight(double t) const {
        switch (kind) {
            case Kind::finite: return 1.0 / k;
            case Kind::masked: return 0.0;
            case Kind::soft: return alpha0 / t;
        }
        return 0.0;
    }
    std::string label() const {
        switch (kind) {
            case Kind::finite: {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.17g", k);
                return buf;
            }
            case Kind::masked: return "inf";
            case Kind::soft: return "soft";
        }
        return "?";
    }
};

inline std::vector<PerturbationMode> default_k_ladder() {
    return {PerturbationMode::finite(1), PerturbationMode::finite(2), PerturbationMode::finite(4),
            PerturbationMode::finite(8), PerturbationMode::masked()};
}

// Seeded geometry factory for ladder runs: one generator recipe applied at
// any window size and seed.
struct GeometrySpec {
    RealizationSeed params; // kind + generator parameters; seed is overridden
    int n = 2;
    double delta = 0.25;
    double r_star = 0.45;
    Vec origin{0, 0, 0};

    PerforatedGeometry make(std::uint64_t seed, double t) const {
        RealizationSeed rs = params;
        rs.seed = seed;
        switch (params.kind) {
            case GeneratorKind::bernoulli_lattice:
                return gen_bernoulli_lattice(rs, n, t, delta, r_star, origin);
            case GeneratorKind::hardcore_rejection:
                return gen_hardcore_rejection(rs, n, t, delta, r_star, origin);
            case GeneratorKind::none: {
                PerforatedGeometry g;
                g.n = n;
                g.t = t;
                g.origin = origin;
                g.delta = delta;
                g.r_star = r_star;
                g.seed_record = rs;
                return g;
            }
        }
        throw std::invalid_argument("GeometrySpec: unknown generator kind");
    }
};

// Sub-cell anchor offset keeping cell centers off the datum plane, so the
// nu and -nu problems are exact complements of each other.
inline Vec datum_anchor(const Grid& g) {
    Vec x = g.origin;
    const double off[3] = {0.3127, 0.1741, 0.2593};
    for (int a = 0; a < g.n; ++a) x[a] += 0.5 * g.t + off[a] * g.h;
    return x;
}

struct LadderCell {
    double t = 0.0;
    std::string k_label;
    std::uint64_t seed = 0;
    double normalized = 0.0;
    int iterations = 0;
    bool exact_flag = false;
    bool converged = true;
};

struct LadderResult {
    std::string kind; // "volume" | "surface"
    Vec param{0, 0, 0};
    double p = 2.0;
    std::vector<double> t_values;
    std::vector<PerturbationMode> k_values;
    std::vector<std::uint64_t> seeds;
    // normalized[t_idx][k_idx][seed_idx]
    std::vector<std::vector<std::vector<double>>> normalized;
    std::vector<LadderCell> rows; // flat, CSV-ordered
    std::vector<std::string> warnings;

    int masked_index() const {
        for (std::size_t i = 0; i < k_values.size(); ++i)
            if (k_values[i].kind == PerturbationMode::Kind::masked) return static_cast<int>(i);
        return -1;
    }
    double mean(int ti, int ki) const {
        const auto& col = normalized[ti][ki];
        return std::accumulate(col.begin(), col.end(), 0.0) / col.size();
    }
    double stderr_mean(int ti, int ki) const {
        const auto& col = normalized[ti][ki];
        if (col.size() < 2) return 0.0;
        double mu = mean(ti, ki);
        double s2 = 0.0;
        for (double v : col) s2 += (v - mu) * (v - mu);
        s2 /= double(col.size() - 1);
        return std::sqrt(s2 / double(col.size()));
    }
    // |mean(t_{i+1}) - mean(t_i)| for the masked column, consecutive rungs
    std::vector<double> cauchy_gaps() const {
        std::vector<double> gaps;
        int mi = masked_index();
        if (mi < 0) return gaps;
        for (std::size_t ti = 0; ti + 1 < t_values.size(); ++ti)
            gaps.push_back(std::abs(mean(static_cast<int>(ti) + 1, mi) - mean(static_cast<int>(ti), mi)));
        return gaps;
    }
};

class MonotonicityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

template <typename SolveCell>
LadderResult run_ladder(const std::string& kind, const Vec& param, double p,
                        const GeometrySpec& spec, const std::vector<double>& t_ladder,
                        const std::vector<PerturbationMode>& k_ladder,
                        const std::vector<std::uint64_t>& seeds, double h_over_delta,
                        int frame_width, int parallel, SolveCell&& solve_cell) {
    const int n_seeds = static_cast<int>(seeds.size());
    require(!t_ladder.empty(), "ladder: t_ladder must be nonempty");
    for (std::size_t i = 0; i + 1 < t_ladder.size(); ++i)
        require(t_ladder[i] < t_ladder[i + 1], "ladder: t_ladder must be increasing");
    require(h_over_delta > 0.0 && h_over_delta < 0.5, "ladder: need 0 < h/delta < 1/2");
    require(n_seeds >= 1, "ladder: need at least one seed");

    LadderResult lr;
    lr.kind = kind;
    lr.param = param;
    lr.p = p;
    lr.t_values = t_ladder;
    lr.k_values = k_ladder;
    lr.seeds = seeds;
    lr.normalized.assign(t_ladder.size(),
                         std::vector<std::vector<double>>(k_ladder.size(),
                                                          std::vector<double>(n_seeds, 0.0)));
    std::vector<std::vector<std::vector<LadderCell>>> cells(
        t_ladder.size(),
        std::vector<std::vector<LadderCell>>(k_ladder.size(), std::vector<LadderCell>(n_seeds)));

    struct Task {
        int ti, si;
    };
    std::vector<Task> tasks;
    for (std::size_t ti = 0; ti < t_ladder.size(); ++ti)
        for (int si = 0; si < n_seeds; ++si) tasks.push_back({static_cast<int>(ti), si});

    std::vector<std::vector<std::string>> task_warnings(tasks.size());
    auto run_task = [&](std::size_t task_idx) {
        const Task& tk = tasks[task_idx];
        double t = t_ladder[tk.ti];
        std::uint64_t seed = lr.seeds[tk.si];
        PerforatedGeometry geo = spec.make(seed, t);
        Masks masks = rasterize(geo, h_over_delta * spec.delta, frame_width);
        // identical instance across the whole k column: monotonicity is exact
        for (std::size_t ki = 0; ki < k_ladder.size(); ++ki) {
            double w = k_ladder[ki].weight(t);
            LadderCell cell;
            cell.t = t;
            cell.k_label = k_ladder[ki].label();
            cell.seed = seed;
            solve_cell(masks, w, cell);
            if (!cell.converged)
                task_warnings[task_idx].push_back("non-converged solve at t=" + std::to_string(t) +
                                                  " k=" + cell.k_label +
                                                  " seed=" + std::to_string(seed));
            cells[tk.ti][ki][tk.si] = cell;
            lr.normalized[tk.ti][ki][tk.si] = cell.normalized;
        }
    };

    int threads = std::max(1, parallel);
    if (threads == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
    } else {
        std::vector<std::thread> pool;
        std::size_t stride = static_cast<std::size_t>(threads);
        for (int w = 0; w < threads; ++w)
            pool.emplace_back([&, w]() {
                for (std::size_t i = static_cast<std::size_t>(w); i < tasks.size(); i += stride)
                    run_task(i);
            });
        for (auto& th : pool) th.join();
    }

    for (std::size_t ti = 0; ti < t_ladder.size(); ++ti)
        for (std::size_t ki = 0; ki < k_ladder.size(); ++ki)
            for (int si = 0; si < n_seeds; ++si) lr.rows.push_back(cells[ti][ki][si]);
    for (auto& ws : task_warnings)
        for (auto& w : ws) lr.warnings.push_back(w);
    return lr;
}

} // namespace detail

// Normalized volume-cell minima across (t, k, seed).
inline std::vector<std::uint64_t> seed_range(std::uint64_t base, int count) {
    std::vector<std::uint64_t> s;
    for (int i = 0; i < count; ++i) s.push_back(base + static_cast<std::uint64_t>(i));
    return s;
}

inline LadderResult estimate_fhom(const GeometrySpec& spec, const VolumeIntegrand& q, const Vec& xi,
                                  const std::vector<double>& t_ladder,
                                  const std::vector<PerturbationMode>& k_ladder,
                                  const std::vector<std::uint64_t>& seeds,
                                  double h_over_delta = 0.25, double tol = 1e-10, int parallel = 1,
                                  int frame_width = 1) {
    return detail::run_ladder(
        "volume", xi, q.p, spec, t_ladder, k_ladder, seeds, h_over_delta, frame_width,
        parallel, [&](const Masks& masks, double w, LadderCell& cell) {
            VolumeIntegrand qk = q;
            qk.hole_weight = w;
            VolumeCellResult r = solve_volume_cell(masks, qk, xi, tol);
            cell.normalized = r.normalized;
            cell.iterations = r.iterations;
            cell.exact_flag = r.exact_flag;
            cell.converged = r.converged;
        });
}

// Normalized surface-cell minima (exact min-cut values) across (t, k, seed).
inline LadderResult estimate_ghom(const GeometrySpec& spec, const SurfaceIntegrand& s, const Vec& nu,
                                  const std::vector<double>& t_ladder,
                                  const std::vector<PerturbationMode>& k_ladder,
                                  const std::vector<std::uint64_t>& seeds,
                                  double h_over_delta = 0.25, int parallel = 1,
                                  int frame_width = 1) {
    Vec nunit = normalized(nu);
    return detail::run_ladder(
        "surface", nunit, 1.0, spec, t_ladder, k_ladder, seeds, h_over_delta,
        frame_width, parallel, [&](const Masks& masks, double w, LadderCell& cell) {
            SurfaceIntegrand sk = s;
            sk.hole_weight = w;
            SurfaceCellResult r = solve_surface_cell(masks, sk, nunit, datum_anchor(masks.grid));
            cell.normalized = r.normalized;
            cell.iterations = r.iterations;
            cell.exact_flag = r.exact_flag;
            cell.converged = r.converged;
        });
}

struct HomEstimate {
    std::string kind;
    Vec param{0, 0, 0};
    double value = 0.0;      // masked-column mean at the largest window
    double dispersion = 0.0; // sample standard deviation over seeds
    double stderr_mean = 0.0;
    double t_max = 0.0;
    int n_seeds = 0;
    std::string mode = "hole-masked";
    std::vector<std::pair<std::string, double>> perturbation_gaps; // mean(col_k) - value at t_max
    double max_gap = 0.0;
    std::vector<double> cauchy_gaps;
};

// The k limit is the infimum over the decreasing perturbed values; the
// estimate is the hole-masked column at the largest window. Any pointwise
// monotonicity violation is a solver defect and is fatal.
inline HomEstimate k_extrapolate(const LadderResult& lr) {
    int mi = lr.masked_index();
    require(mi >= 0, "k_extrapolate: ladder must contain the hole-masked column");

    for (std::size_t ti = 0; ti < lr.t_values.size(); ++ti) {
        double t = lr.t_values[ti];
        for (std::size_t si = 0; si < lr.seeds.size(); ++si) {
            // weights in decreasing order must give nonincreasing energies
            std::vector<std::size_t> order(lr.k_values.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return lr.k_values[a].weight(t) > lr.k_values[b].weight(t);
            });
            for (std::size_t oi = 0; oi + 1 < order.size(); ++oi) {
                double e_hi = lr.normalized[ti][order[oi]][si];
                double e_lo = lr.normalized[ti][order[oi + 1]][si];
                if (lr.k_values[order[oi]].weight(t) == lr.k_values[order[oi + 1]].weight(t)) continue;
                if (e_hi < e_lo)
                    throw MonotonicityError(
                        "k-monotonicity violated at t=" + std::to_string(t) + " seed=" +
                        std::to_string(lr.seeds[si]) + " between k=" + lr.k_values[order[oi]].label() +
                        " and k=" + lr.k_values[order[oi + 1]].label());
            }
        }
    }

    HomEstimate est;
    est.kind = lr.kind;
    est.param = lr.param;
    int ti = static_cast<int>(lr.t_values.size()) - 1;
    est.t_max = lr.t_values[ti];
    est.n_seeds = static_cast<int>(lr.seeds.size());
    est.value = lr.mean(ti, mi);
    est.stderr_mean = lr.stderr_mean(ti, mi);
    est.dispersion = est.stderr_mean * std::sqrt(double(std::max(est.n_seeds, 1)));
    for (std::size_t ki = 0; ki < lr.k_values.size(); ++ki) {
        if (static_cast<int>(ki) == mi) continue;
        double gap = lr.mean(ti, static_cast<int>(ki)) - est.value;
        est.perturbation_gaps.emplace_back(lr.k_values[ki].label(), gap);
        est.max_gap = std::max(est.max_gap, gap);
    }
    est.cauchy_gaps = lr.cauchy_gaps();
    return est;
}

struct BoundsReport {
    bool pass = true;
    bool skipped = false;
    double value = 0.0;
    double upper = 0.0;
    std::string message;
};

// Volume: 0 < value <= c2 (1 + |xi|^p) for xi != 0. Surface: 0 < value <= c4
// (axis-aligned datum; oblique normals carry the reported anisotropy factor).
inline BoundsReport check_bounds_volume(const HomEstimate& est, double c2, double p, const Vec& xi) {
    BoundsReport r;
    r.value = est.value;
    if (norm(xi) == 0.0) {
        r.skipped = true;
        r.message = "xi = 0: both sides vanish";
        return r;
    }
    r.upper = c2 * (1.0 + std::pow(norm(xi), p));
    r.pass = est.value > 0.0 && est.value <= r.upper * (1.0 + 1e-12);
    if (!r.pass) r.message = "volume estimate outside (0, c2(1+|xi|^p)]";
    return r;
}

inline BoundsReport check_bounds_surface(const HomEstimate& est, double c4) {
    BoundsReport r;
    r.value = est.value;
    r.upper = c4;
    r.pass = est.value > 0.0 && est.value <= c4 * (1.0 + 1e-12);
    if (!r.pass) r.message = "surface estimate outside (0, c4]";
    return r;
}

struct ConvexityReport {
    double worst_midpoint_violation = 0.0; // max f(mid) - (f(a)+f(b))/2
    double max_lipschitz_ratio = 0.0;      // empirical L'
    int midpoint_triples = 0;
    bool pass = true;
};

// Midpoint convexity and growth-normalized Lipschitz ratios on collinear
// estimates; tolerance covers estimation dispersion.
inline ConvexityReport check_convexity_fhom(const std::vector<Vec>& xis,
                                            const std::vector<HomEstimate>& estimates, double p,
                                            double tolerance) {
    require(xis.size() == estimates.size() && xis.size() >= 3,
            "check_convexity_fhom: need >= 3 collinear samples");
    ConvexityReport rep;
    for (std::size_t i = 0; i < xis.size(); ++i)
        for (std::size_t j = 0; j < xis.size(); ++j) {
            if (i == j) continue;
            for (std::size_t k = 0; k < xis.size(); ++k) {
                if (k == i || k == j) continue;
                Vec mid = scale(add(xis[i], xis[j]), 0.5);
                if (dist(mid, xis[k]) > 1e-12) continue;
                double viol = estimates[k].value -
                              0.5 * (estimates[i].value + estimates[j].value);
                rep.worst_midpoint_violation = std::max(rep.worst_midpoint_violation, viol);
                ++rep.midpoint_triples;
            }
        }
    for (std::size_t i = 0; i < xis.size(); ++i)
        for (std::size_t j = i + 1; j < xis.size(); ++j) {
            double dx = dist(xis[i], xis[j]);
            if (dx == 0.0) continue;
            double growth = 1.0 + std::pow(norm(xis[i]), p - 1.0) + std::pow(norm(xis[j]), p - 1.0);
            double ratio = std::abs(estimates[i].value - estimates[j].value) / (growth * dx);
            rep.max_lipschitz_ratio = std::max(rep.max_lipschitz_ratio, ratio);
        }
    rep.pass = rep.worst_midpoint_violation <= tolerance;
    return rep;
}

} // namespace perfhom
