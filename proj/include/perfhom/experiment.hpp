#pragma once

// Config-driven experiment runner: parse and validate a JSON config, run the
// requested study, emit deterministic CSV/JSON artifacts, and record every
// artifact with a content hash in a manifest so runs can be replayed and
// checked for drift.

#include "perfhom/homogenize.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace perfhom {

using nlohmann::json;

// ---------------------------------------------------------------------------
// SHA-256 (for artifact manifests)
// ---------------------------------------------------------------------------

namespace detail {

class Sha256 {
public:
    Sha256() { reset(); }

    void reset() {
        h_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
              0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
        len_ = 0;
        buf_len_ = 0;
    }

    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        len_ += n;
        while (n > 0) {
            std::size_t take = std::min<std::size_t>(64 - buf_len_, n);
            std::memcpy(buf_ + buf_len_, p, take);
            buf_len_ += take;
            p += take;
            n -= take;
            if (buf_len_ == 64) {
                compress(buf_);
                buf_len_ = 0;
            }
        }
    }

    std::string hex_digest() {
        std::uint64_t bit_len = len_ * 8;
        unsigned char pad[72] = {0x80};
        std::size_t pad_len = (buf_len_ < 56) ? 56 - buf_len_ : 120 - buf_len_;
        update(pad, pad_len);
        unsigned char lenb[8];
        for (int i = 0; i < 8; ++i) lenb[i] = static_cast<unsigned char>(bit_len >> (56 - 8 * i));
        update(lenb, 8);
        char out[65];
        for (int i = 0; i < 8; ++i) std::snprintf(out + 8 * i, 9, "%08x", h_[i]);
        return std::string(out, 64);
    }

private:
    static std::uint32_t rotr(std::uint32_t x, int s) { return (x >> s) | (x << (32 - s)); }

    void compress(const unsigned char* p) {
        static const std::uint32_t K[64] = {
            0x428a2f98u, 0x71374491u, 0xb5c0fbcfu, 0xe9b5dba5u, 0x3956c25bu, 0x59f111f1u,
            0x923f82a4u, 0xab1c5ed5u, 0xd807aa98u, 0x12835b01u, 0x243185beu, 0x550c7dc3u,
            0x72be5d74u, 0x80deb1feu, 0x9bdc06a7u, 0xc19bf174u, 0xe49b69c1u, 0xefbe4786u,
            0x0fc19dc6u, 0x240ca1ccu, 0x2de92c6fu, 0x4a7484aau, 0x5cb0a9dcu, 0x76f988dau,
            0x983e5152u, 0xa831c66du, 0xb00327c8u, 0xbf597fc7u, 0xc6e00bf3u, 0xd5a79147u,
            0x06ca6351u, 0x14292967u, 0x27b70a85u, 0x2e1b2138u, 0x4d2c6dfcu, 0x53380d13u,
            0x650a7354u, 0x766a0abbu, 0x81c2c92eu, 0x92722c85u, 0xa2bfe8a1u, 0xa81a664bu,
            0xc24b8b70u, 0xc76c51a3u, 0xd192e819u, 0xd6990624u, 0xf40e3585u, 0x106aa070u,
            0x19a4c116u, 0x1e376c08u, 0x2748774cu, 0x34b0bcb5u, 0x391c0cb3u, 0x4ed8aa4au,
            0x5b9cca4fu, 0x682e6ff3u, 0x748f82eeu, 0x78a5636fu, 0x84c87814u, 0x8cc70208u,
            0x90befffau, 0xa4506cebu, 0xbef9a3f7u, 0xc67178f2u};
        std::uint32_t w[64];
        for (int i = 0; i < 16; ++i)
            w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
                   (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
        for (int i = 16; i < 64; ++i) {
            std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3];
        std::uint32_t e = h_[4], f = h_[5], g = h_[6], h = h_[7];
        for (int i = 0; i < 64; ++i) {
            std::uint32_t S1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            std::uint32_t ch = (e & f) ^ (~e & g);
            std::uint32_t t1 = h + S1 + ch + K[i] + w[i];
            std::uint32_t S0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            std::uint32_t t2 = S0 + maj;
            h = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        h_[0] += a;
        h_[1] += b;
        h_[2] += c;
        h_[3] += d;
        h_[4] += e;
        h_[5] += f;
        h_[6] += g;
        h_[7] += h;
    }

    std::array<std::uint32_t, 8> h_{};
    unsigned char buf_[64] = {};
    std::size_t buf_len_ = 0;
    std::uint64_t len_ = 0;
};

} // namespace detail

inline std::string sha256_hex(const std::string& data) {
    detail::Sha256 s;
    s.update(data.data(), data.size());
    return s.hex_digest();
}

inline std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), "sha256_file: cannot open " + path);
    detail::Sha256 s;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        s.update(buf, static_cast<std::size_t>(in.gcount()));
    return s.hex_digest();
}

// ---------------------------------------------------------------------------
// Geometry file format (structured text, round-trips stored reals exactly)
// ---------------------------------------------------------------------------

inline json geometry_to_json(const PerforatedGeometry& g) {
    json balls = json::array();
    for (const BallInclusion& b : g.balls) {
        json center = json::array();
        for (int a = 0; a < g.n; ++a) center.push_back(b.center[a]);
        balls.push_back({{"center", center}, {"radius", b.radius}});
    }
    json origin = json::array();
    for (int a = 0; a < g.n; ++a) origin.push_back(g.origin[a]);
    const RealizationSeed& rs = g.seed_record;
    json seed = {{"seed", rs.seed},
                 {"kind", static_cast<int>(rs.kind)},
                 {"spacing", rs.spacing},
                 {"radius", rs.radius},
                 {"occupation_prob", rs.occupation_prob},
                 {"intensity", rs.intensity},
                 {"r_min", rs.r_min},
                 {"r_max", rs.r_max}};
    return {{"n", g.n},       {"t", g.t},           {"origin", origin},
            {"delta", g.delta}, {"r_star", g.r_star}, {"balls", balls},
            {"seed_record", seed}};
}

inline PerforatedGeometry geometry_from_json(const json& j) {
    PerforatedGeometry g;
    g.n = j.at("n").get<int>();
    g.t = j.at("t").get<double>();
    g.delta = j.at("delta").get<double>();
    g.r_star = j.at("r_star").get<double>();
    if (j.contains("origin"))
        for (int a = 0; a < g.n; ++a) g.origin[a] = j["origin"][a].get<double>();
    for (const json& jb : j.at("balls")) {
        BallInclusion b;
        for (int a = 0; a < g.n; ++a) b.center[a] = jb["center"][a].get<double>();
        b.radius = jb["radius"].get<double>();
        g.balls.push_back(b);
    }
    if (j.contains("seed_record")) {
        const json& js = j["seed_record"];
        g.seed_record.seed = js.value("seed", 0ULL);
        g.seed_record.kind = static_cast<GeneratorKind>(js.value("kind", 0));
        g.seed_record.spacing = js.value("spacing", 1.0);
        g.seed_record.radius = js.value("radius", 0.2);
        g.seed_record.occupation_prob = js.value("occupation_prob", 1.0);
        g.seed_record.intensity = js.value("intensity", 1.0);
        g.seed_record.r_min = js.value("r_min", 0.1);
        g.seed_record.r_max = js.value("r_max", 0.2);
    }
    return g;
}

inline void save_geometry(const PerforatedGeometry& g, const std::string& path) {
    std::ofstream out(path);
    require(bool(out), "save_geometry: cannot open " + path);
    out << geometry_to_json(g).dump(2) << "\n";
}

inline PerforatedGeometry load_geometry(const std::string& path) {
    std::ifstream in(path);
    require(bool(in), "load_geometry: cannot open " + path);
    json j = json::parse(in);
    return geometry_from_json(j);
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class ExperimentKind { fhom, ghom, extension_battery, density_study, oracle_suite };

inline const char* experiment_kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::fhom: return "fhom";
        case ExperimentKind::ghom: return "ghom";
        case ExperimentKind::extension_battery: return "extension_battery";
        case ExperimentKind::density_study: return "density_study";
        case ExperimentKind::oracle_suite: return "oracle_suite";
    }
    return "?";
}

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::fhom;
    GeometrySpec geometry;
    double p = 2.0;
    double a_value = 1.0, c1 = 1.0, c2 = 1.0;
    double g_value = 1.0, c3 = 1.0, c4 = 1.0;
    Vec xi{1.0, 0.0, 0.0};
    Vec nu{0.0, 1.0, 0.0};
    std::vector<double> t_ladder{2.0, 4.0, 8.0}; // 8, 16, 32 times the default delta
    std::vector<PerturbationMode> k_ladder = default_k_ladder();
    double soft_alpha0 = 0.5;
    double h_over_delta = 0.25;
    int frame_width = 1;
    std::vector<std::uint64_t> seeds = seed_range(1, 16);
    double tol = 1e-10;
    int parallel = 1;
    int instances = 50;         // extension battery / density study / oracle sizes
    double gamma_threshold = 12.0;
    double window = 4.0;        // extension battery & density study window
    std::string out_dir = "out";

    std::vector<std::string> validate() const {
        std::vector<std::string> errs;
        if (geometry.n != 2 && geometry.n != 3) errs.push_back("n: must be 2 or 3");
        if (!(p > 1.0)) errs.push_back("p: must be > 1");
        if (!(c1 > 0.0 && c1 <= c2)) errs.push_back("c1,c2: need 0 < c1 <= c2");
        if (!(c3 > 0.0 && c3 <= c4)) errs.push_back("c3,c4: need 0 < c3 <= c4");
        if (!(a_value >= c1 && a_value <= c2)) errs.push_back("a_value: must lie in [c1, c2]");
        if (!(g_value >= c3 && g_value <= c4)) errs.push_back("g_value: must lie in [c3, c4]");
        if (!(h_over_delta > 0.0 && h_over_delta < 0.5))
            errs.push_back("h_over_delta: need 0 < h/delta < 1/2");
        if (!(geometry.delta > 0.0)) errs.push_back("delta: must be positive");
        if (!(geometry.r_star > 0.0)) errs.push_back("r_star: must be positive");
        for (std::size_t i = 0; i + 1 < t_ladder.size(); ++i)
            if (!(t_ladder[i] < t_ladder[i + 1])) {
                errs.push_back("t_ladder: must be strictly increasing");
                break;
            }
        if (t_ladder.empty()) errs.push_back("t_ladder: must be nonempty");
        if (seeds.empty()) errs.push_back("seeds: must be nonempty");
        if (parallel < 1) errs.push_back("parallel: must be >= 1");
        if (instances < 1) errs.push_back("instances: must be >= 1");
        if (kind == ExperimentKind::fhom && norm(xi) == 0.0 && k_ladder.empty())
            errs.push_back("k_ladder: must be nonempty");
        return errs;
    }
};

inline json config_to_json(const ExperimentConfig& c) {
    json gen;
    switch (c.geometry.params.kind) {
        case GeneratorKind::none: gen["type"] = "none"; break;
        case GeneratorKind::bernoulli_lattice:
            gen["type"] = "bernoulli_lattice";
            gen["spacing"] = c.geometry.params.spacing;
            gen["radius"] = c.geometry.params.radius;
            gen["occupation_prob"] = c.geometry.params.occupation_prob;
            break;
        case GeneratorKind::hardcore_rejection:
            gen["type"] = "hardcore_rejection";
            gen["intensity"] = c.geometry.params.intensity;
            gen["r_min"] = c.geometry.params.r_min;
            gen["r_max"] = c.geometry.params.r_max;
            break;
    }
    json origin = json::array();
    for (int a = 0; a < c.geometry.n; ++a) origin.push_back(c.geometry.origin[a]);
    gen["origin"] = origin;

    json kl = json::array();
    for (const PerturbationMode& m : c.k_ladder) kl.push_back(m.label());

    json xi = json::array(), nu = json::array();
    for (int a = 0; a < c.geometry.n; ++a) {
        xi.push_back(c.xi[a]);
        nu.push_back(c.nu[a]);
    }

    return {{"kind", experiment_kind_name(c.kind)},
            {"n", c.geometry.n},
            {"generator", gen},
            {"delta", c.geometry.delta},
            {"r_star", c.geometry.r_star},
            {"p", c.p},
            {"a_value", c.a_value},
            {"c1", c.c1},
            {"c2", c.c2},
            {"g_value", c.g_value},
            {"c3", c.c3},
            {"c4", c.c4},
            {"xi", xi},
            {"nu", nu},
            {"t_ladder", c.t_ladder},
            {"k_ladder", kl},
            {"soft_alpha0", c.soft_alpha0},
            {"h_over_delta", c.h_over_delta},
            {"frame_width", c.frame_width},
            {"seeds", c.seeds},
            {"tol", c.tol},
            {"parallel", c.parallel},
            {"instances", c.instances},
            {"gamma_threshold", c.gamma_threshold},
            {"window", c.window},
            {"out_dir", c.out_dir}};
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    std::string kind = j.value("kind", "fhom");
    if (kind == "fhom") c.kind = ExperimentKind::fhom;
    else if (kind == "ghom") c.kind = ExperimentKind::ghom;
    else if (kind == "extension_battery") c.kind = ExperimentKind::extension_battery;
    else if (kind == "density_study") c.kind = ExperimentKind::density_study;
    else if (kind == "oracle_suite") c.kind = ExperimentKind::oracle_suite;
    else throw std::invalid_argument("config: unknown experiment kind '" + kind + "'");

    c.geometry.n = j.value("n", 2);
    c.geometry.delta = j.value("delta", 0.25);
    c.geometry.r_star = j.value("r_star", 0.45);
    if (j.contains("generator")) {
        const json& g = j["generator"];
        std::string type = g.value("type", "none");
        if (type == "none") c.geometry.params.kind = GeneratorKind::none;
        else if (type == "bernoulli_lattice") c.geometry.params.kind = GeneratorKind::bernoulli_lattice;
        else if (type == "hardcore_rejection") c.geometry.params.kind = GeneratorKind::hardcore_rejection;
        else throw std::invalid_argument("config: unknown generator type '" + type + "'");
        c.geometry.params.spacing = g.value("spacing", 1.0);
        c.geometry.params.radius = g.value("radius", 0.2);
        c.geometry.params.occupation_prob = g.value("occupation_prob", 1.0);
        c.geometry.params.intensity = g.value("intensity", 1.0);
        c.geometry.params.r_min = g.value("r_min", 0.1);
        c.geometry.params.r_max = g.value("r_max", 0.2);
        if (g.contains("origin"))
            for (std::size_t a = 0; a < g["origin"].size() && a < 3; ++a)
                c.geometry.origin[a] = g["origin"][a].get<double>();
    }
    c.p = j.value("p", 2.0);
    c.a_value = j.value("a_value", 1.0);
    c.c1 = j.value("c1", c.a_value);
    c.c2 = j.value("c2", c.a_value);
    c.g_value = j.value("g_value", 1.0);
    c.c3 = j.value("c3", c.g_value);
    c.c4 = j.value("c4", c.g_value);
    if (j.contains("xi"))
        for (std::size_t a = 0; a < j["xi"].size() && a < 3; ++a) c.xi[a] = j["xi"][a].get<double>();
    if (j.contains("nu"))
        for (std::size_t a = 0; a < j["nu"].size() && a < 3; ++a) c.nu[a] = j["nu"][a].get<double>();
    if (j.contains("t_ladder")) c.t_ladder = j["t_ladder"].get<std::vector<double>>();
    c.soft_alpha0 = j.value("soft_alpha0", 0.5);
    if (j.contains("k_ladder")) {
        c.k_ladder.clear();
        for (const json& e : j["k_ladder"]) {
            if (e.is_string()) {
                std::string s = e.get<std::string>();
                if (s == "inf") c.k_ladder.push_back(PerturbationMode::masked());
                else if (s == "soft") c.k_ladder.push_back(PerturbationMode::soft(c.soft_alpha0));
                else c.k_ladder.push_back(PerturbationMode::finite(std::stod(s)));
            } else {
                c.k_ladder.push_back(PerturbationMode::finite(e.get<double>()));
            }
        }
    }
    c.h_over_delta = j.value("h_over_delta", 0.25);
    c.frame_width = j.value("frame_width", 1);
    if (j.contains("seeds")) {
        if (j["seeds"].is_array()) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        else c.seeds = seed_range(j.value("base_seed", 1ULL), j["seeds"].get<int>());
    } else if (j.contains("n_seeds")) {
        c.seeds = seed_range(j.value("base_seed", 1ULL), j["n_seeds"].get<int>());
    }
    c.tol = j.value("tol", 1e-10);
    c.parallel = j.value("parallel", 1);
    c.instances = j.value("instances", 50);
    c.gamma_threshold = j.value("gamma_threshold", 4.0);
    c.window = j.value("window", 4.0);
    c.out_dir = j.value("out_dir", "out");
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require(bool(in), "config: cannot open " + path);
    return config_from_json(json::parse(in));
}

// ---------------------------------------------------------------------------
// CSV emission (deterministic %.17g formatting)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string param_string(const Vec& v, int n) {
    std::string s;
    for (int a = 0; a < n; ++a) {
        if (a) s += " ";
        s += fmt17(v[a]);
    }
    return s;
}

} // namespace detail

inline std::string ladder_csv(const LadderResult& lr, int n) {
    std::ostringstream out;
    out << "kind,param,t,k,seed,normalized_energy,iterations,exact_flag\n";
    for (const LadderCell& c : lr.rows)
        out << lr.kind << "," << detail::param_string(lr.param, n) << "," << detail::fmt17(c.t)
            << "," << c.k_label << "," << c.seed << "," << detail::fmt17(c.normalized) << ","
            << c.iterations << "," << (c.exact_flag ? 1 : 0) << "\n";
    return out.str();
}

inline json estimate_to_json(const HomEstimate& est, int n) {
    json gaps = json::array();
    for (const auto& [label, gap] : est.perturbation_gaps)
        gaps.push_back({{"k", label}, {"gap", gap}});
    json param = json::array();
    for (int a = 0; a < n; ++a) param.push_back(est.param[a]);
    return {{"kind", est.kind},
            {"param", param},
            {"value", est.value},
            {"dispersion", est.dispersion},
            {"stderr", est.stderr_mean},
            {"t_max", est.t_max},
            {"n_seeds", est.n_seeds},
            {"mode", est.mode},
            {"perturbation_gaps", gaps},
            {"max_gap", est.max_gap},
            {"cauchy_gaps", est.cauchy_gaps}};
}

// ---------------------------------------------------------------------------
// Shared batteries (used by the oracle_suite experiment and the acceptance
// suite, so both exercise identical instances)
// ---------------------------------------------------------------------------

struct OracleOutcome {
    int surface_cases = 0;
    int surface_mismatches = 0;
    int volume_cases = 0;
    int volume_failures = 0;
    double worst_volume_rel = 0.0;
    bool pass() const { return surface_mismatches == 0 && volume_failures == 0; }
};

// Randomized min-cut vs enumeration instances with <= 16 free cells: random
// isotropic g in [c3, c4], random hole masks and weights, random pinned
// labels. Energies must agree exactly (identical integer capacities).
inline OracleOutcome oracle_surface_battery(int cases, std::uint64_t seed0) {
    OracleOutcome out;
    Rng rng(seed0);
    while (out.surface_cases < cases) {
        Grid g;
        g.n = 2;
        g.m = 4;
        g.t = 4.0;
        g.h = 1.0;
        g.frame_width = 1;
        Masks mk;
        mk.grid = g;
        mk.hole_cells.assign(16, 0);
        mk.frame_cells.assign(16, 0);
        mk.frame_nodes.assign(25, 0);
        mk.cell_ball.assign(16, -1);
        for (auto& h : mk.hole_cells) h = rng.uniform01() < 0.3;

        double c3 = rng.uniform(0.2, 1.0);
        double c4 = c3 + rng.uniform(0.0, 2.0);
        std::uint64_t salt = rng.next_u64();
        SurfaceIntegrand s = SurfaceIntegrand::isotropic(
            [salt, c3, c4](const Vec& x) {
                std::uint64_t k =
                    hash_mix(static_cast<std::uint64_t>(x[0] * 512.0) * 2654435761u,
                             hash_mix(static_cast<std::uint64_t>(x[1] * 512.0), salt));
                return c3 + (c4 - c3) * double(k >> 11) * 0x1.0p-53;
            },
            c3, c4, rng.uniform01() < 0.4 ? 0.0 : rng.uniform01());

        std::vector<std::int8_t> fixed(16, -1);
        int free_cells = 0;
        for (int i = 0; i < 16; ++i) {
            if (rng.uniform01() < 0.4) fixed[i] = rng.uniform01() < 0.5 ? 1 : 0;
            else ++free_cells;
        }
        if (free_cells == 0 || free_cells > 16) continue;

        SurfaceCellResult mc = solve_surface_labels(mk, s, fixed);
        SurfaceCellResult bf = brute_force_surface(mk, s, fixed);
        ++out.surface_cases;
        if (mc.energy != bf.energy || !mc.exact_flag) ++out.surface_mismatches;
    }
    return out;
}

// Randomized p = 2 instances with <= 400 free nodes: CG against the dense
// direct solve, relative agreement 1e-8.
inline OracleOutcome oracle_volume_battery(int cases, std::uint64_t seed0) {
    OracleOutcome out;
    Rng rng(seed0);
    for (int i = 0; i < cases; ++i) {
        int m = 8 + static_cast<int>(rng.uniform_below(9)); // up to 17^2 = 289 free nodes
        double t = 2.0;
        PerforatedGeometry geo;
        geo.n = 2;
        geo.t = t;
        geo.delta = 2.2 * (t / m);
        geo.r_star = 0.45;
        int holes = static_cast<int>(rng.uniform_below(3));
        for (int b = 0; b < holes; ++b) {
            BallInclusion ball;
            ball.center = {rng.uniform(0.3, 1.7), rng.uniform(0.3, 1.7), 0.0};
            ball.radius = rng.uniform(0.08, 0.3);
            bool ok = true;
            for (const BallInclusion& o : geo.balls)
                if (dist(ball.center, o.center) <= ball.radius + o.radius + 2 * geo.delta) ok = false;
            if (ok) geo.balls.push_back(ball);
        }
        Masks mk = rasterize(geo, t / m);

        std::uint64_t salt = rng.next_u64();
        VolumeIntegrand q = VolumeIntegrand::from_function(
            2.0,
            [salt](const Vec& x) {
                std::uint64_t k =
                    hash_mix(static_cast<std::uint64_t>(x[0] * 512.0) * 2654435761u,
                             hash_mix(static_cast<std::uint64_t>(x[1] * 512.0), salt));
                return 0.5 + 1.5 * double(k >> 11) * 0x1.0p-53;
            },
            0.5, 2.0, rng.uniform01() < 0.5 ? 0.0 : rng.uniform01());
        Vec xi{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), 0.0};

        VolumeCellResult cg = solve_volume_cell(mk, q, xi, 1e-12);
        VolumeCellResult dd = brute_force_volume(mk, q, xi);
        ++out.volume_cases;
        double denom = std::max(std::abs(dd.energy), 1e-12);
        double rel = std::abs(cg.energy - dd.energy) / denom;
        out.worst_volume_rel = std::max(out.worst_volume_rel, rel);
        if (rel > 1e-8) ++out.volume_failures;
    }
    return out;
}

// Extension battery rows for the CSV artifact and the acceptance run.
struct ExtensionBatteryRow {
    int instance_id = 0;
    ExtensionReport report;
    std::string branch;
    double lambda_check = 0.0; // max relative ratio drift over lambda in {1/2, 2}
};

struct ExtensionBatteryResult {
    std::vector<ExtensionBatteryRow> rows;
    ExtensionConstant constant;
    double max_lambda_drift = 0.0;
};

inline ExtensionBatteryResult run_extension_battery(int instances, std::uint64_t seed0, int n,
                                                    double window, double delta, double r_star,
                                                    double h_over_delta, double p,
                                                    double gamma_threshold) {
    ExtensionBatteryResult out;
    std::vector<ExtensionReport> reports;
    for (int i = 0; i < instances; ++i) {
        SbvInstance inst =
            make_extension_instance(seed0 + static_cast<std::uint64_t>(i), n, window, delta, r_star,
                                    h_over_delta, p);
        auto [field, rep] = run_extension_instance(inst, gamma_threshold);
        ExtensionBatteryRow row;
        row.instance_id = i;
        row.report = rep;
        {
            std::ostringstream b;
            b << "c" << rep.branch_constant << "/s" << rep.branch_sphere << "/k" << rep.branch_kept
              << "/f" << rep.branch_fallback;
            row.branch = b.str();
        }
        double drift = 0.0;
        if (rep.energy_before > 0.0) {
            for (double lambda : {0.5, 2.0}) {
                auto [f2, rep2] = run_extension_instance(scaled_instance(inst, lambda), gamma_threshold);
                drift = std::max(drift,
                                 std::abs(rep2.ratio - rep.ratio) / std::max(rep.ratio, 1e-300));
            }
        }
        row.lambda_check = drift;
        out.max_lambda_drift = std::max(out.max_lambda_drift, drift);
        out.rows.push_back(row);
        reports.push_back(rep);
    }
    out.constant = empirical_extension_constant(reports);
    return out;
}

inline std::string extension_csv(const ExtensionBatteryResult& r) {
    std::ostringstream out;
    out << "instance_id,ratio,branch,lambda_check\n";
    for (const ExtensionBatteryRow& row : r.rows)
        out << row.instance_id << "," << detail::fmt17(row.report.ratio) << "," << row.branch << ","
            << detail::fmt17(row.lambda_check) << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Runner and manifest
// ---------------------------------------------------------------------------

struct RunResult {
    int exit_code = 0;                 // 0 ok, 1 validation, 2 solver-fatal
    std::vector<std::string> errors;   // validation messages
    std::vector<std::string> warnings; // solver warnings
    std::vector<std::pair<std::string, std::string>> artifacts; // (file, sha256)
    std::string manifest_path;
};

namespace detail {

inline void write_artifact(const std::string& dir, const std::string& name,
                           const std::string& content, RunResult& rr) {
    std::string path = dir + "/" + name;
    std::ofstream out(path, std::ios::binary);
    require(bool(out), "cannot write artifact " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    rr.artifacts.emplace_back(name, sha256_hex(content));
}

} // namespace detail

inline RunResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    RunResult rr;
    rr.errors = cfg.validate();
    if (!rr.errors.empty()) {
        rr.exit_code = 1;
        return rr;
    }
    std::filesystem::create_directories(out_dir);

    try {
        switch (cfg.kind) {
            case ExperimentKind::fhom: {
                VolumeIntegrand q = VolumeIntegrand::constant(cfg.p, cfg.a_value);
                q.c1 = cfg.c1;
                q.c2 = cfg.c2;
                LadderResult lr = estimate_fhom(cfg.geometry, q, cfg.xi, cfg.t_ladder, cfg.k_ladder,
                                                cfg.seeds, cfg.h_over_delta, cfg.tol, cfg.parallel,
                                                cfg.frame_width);
                rr.warnings = lr.warnings;
                HomEstimate est = k_extrapolate(lr);
                BoundsReport bounds = check_bounds_volume(est, cfg.c2, cfg.p, cfg.xi);
                detail::write_artifact(out_dir, "ladder.csv", ladder_csv(lr, cfg.geometry.n), rr);
                json ej = estimate_to_json(est, cfg.geometry.n);
                ej["bounds"] = {{"pass", bounds.pass},
                                {"skipped", bounds.skipped},
                                {"upper", bounds.upper},
                                {"message", bounds.message}};
                detail::write_artifact(out_dir, "estimate.json", ej.dump(2) + "\n", rr);
                break;
            }
            case ExperimentKind::ghom: {
                SurfaceIntegrand s = SurfaceIntegrand::constant(cfg.g_value);
                s.c3 = cfg.c3;
                s.c4 = cfg.c4;
                LadderResult lr = estimate_ghom(cfg.geometry, s, cfg.nu, cfg.t_ladder, cfg.k_ladder,
                                                cfg.seeds, cfg.h_over_delta, cfg.parallel,
                                                cfg.frame_width);
                rr.warnings = lr.warnings;
                HomEstimate est = k_extrapolate(lr);
                BoundsReport bounds = check_bounds_surface(est, cfg.c4);
                Grid probe(cfg.geometry.n, cfg.t_ladder.back(),
                           cfg.h_over_delta * cfg.geometry.delta, cfg.frame_width);
                detail::write_artifact(out_dir, "ladder.csv", ladder_csv(lr, cfg.geometry.n), rr);
                json ej = estimate_to_json(est, cfg.geometry.n);
                ej["bounds"] = {{"pass", bounds.pass},
                                {"skipped", bounds.skipped},
                                {"upper", bounds.upper},
                                {"message", bounds.message}};
                ej["anisotropy_factor"] = anisotropy_factor(probe, normalized(cfg.nu));
                detail::write_artifact(out_dir, "estimate.json", ej.dump(2) + "\n", rr);
                break;
            }
            case ExperimentKind::extension_battery: {
                ExtensionBatteryResult b = run_extension_battery(
                    cfg.instances, cfg.seeds.empty() ? 1 : cfg.seeds[0], cfg.geometry.n, cfg.window,
                    cfg.geometry.delta, cfg.geometry.r_star, cfg.h_over_delta, cfg.p,
                    cfg.gamma_threshold);
                detail::write_artifact(out_dir, "extension.csv", extension_csv(b), rr);
                json recs = json::array();
                for (const ExtensionBatteryRow& row : b.rows) {
                    const ExtensionReport& r = row.report;
                    recs.push_back({{"instance_id", row.instance_id},
                                    {"energy_before", r.energy_before},
                                    {"energy_after", r.energy_after},
                                    {"energy_after_interior", r.energy_after_interior},
                                    {"boundary_term", r.boundary_term},
                                    {"ratio", r.ratio},
                                    {"ratio_interior", r.ratio_interior},
                                    {"balls_filled", r.balls_filled},
                                    {"boundary_balls", r.boundary_balls},
                                    {"branch", row.branch},
                                    {"trace_jump_mass", r.trace_jump_mass},
                                    {"added_jump_mass", r.added_jump_mass},
                                    {"lambda_check", row.lambda_check}});
                }
                detail::write_artifact(out_dir, "extension_reports.json", recs.dump(2) + "\n", rr);
                json s = {{"c_max", b.constant.c_max},
                          {"c_mean", b.constant.c_mean},
                          {"used", b.constant.used},
                          {"skipped", b.constant.skipped},
                          {"valid", b.constant.valid},
                          {"max_lambda_drift", b.max_lambda_drift}};
                if (!b.constant.valid) s["message"] = b.constant.message;
                detail::write_artifact(out_dir, "extension_summary.json", s.dump(2) + "\n", rr);
                break;
            }
            case ExperimentKind::density_study: {
                std::ostringstream csv;
                csv << "seed,balls,empirical_density,lower_bound\n";
                int violations = 0;
                double mean = 0.0;
                for (std::uint64_t seed : cfg.seeds) {
                    PerforatedGeometry g = cfg.geometry.make(seed, cfg.window);
                    double d = empirical_density(g);
                    double lb = density_lower_bound(g);
                    if (!(lb > 0.0 && lb <= d + 1e-6)) ++violations;
                    if (!verify_separation(g).empty()) ++violations;
                    mean += d;
                    csv << seed << "," << g.balls.size() << "," << detail::fmt17(d) << ","
                        << detail::fmt17(lb) << "\n";
                }
                mean /= double(cfg.seeds.size());
                detail::write_artifact(out_dir, "density.csv", csv.str(), rr);
                json s = {{"mean_density", mean},
                          {"violations", violations},
                          {"seeds", cfg.seeds.size()}};
                detail::write_artifact(out_dir, "density_summary.json", s.dump(2) + "\n", rr);
                if (violations > 0) rr.exit_code = 2;
                break;
            }
            case ExperimentKind::oracle_suite: {
                OracleOutcome surf =
                    oracle_surface_battery(cfg.instances * 4, cfg.seeds.empty() ? 1 : cfg.seeds[0]);
                OracleOutcome vol =
                    oracle_volume_battery(cfg.instances, cfg.seeds.empty() ? 1 : cfg.seeds[0] + 7);
                std::ostringstream csv;
                csv << "battery,cases,failures,worst_rel\n";
                csv << "surface_mincut_vs_enumeration," << surf.surface_cases << ","
                    << surf.surface_mismatches << ",0\n";
                csv << "volume_cg_vs_dense," << vol.volume_cases << "," << vol.volume_failures
                    << "," << detail::fmt17(vol.worst_volume_rel) << "\n";
                detail::write_artifact(out_dir, "oracle.csv", csv.str(), rr);
                if (!surf.pass() || !vol.pass()) rr.exit_code = 2;
                break;
            }
        }
    } catch (const MonotonicityError& e) {
        rr.exit_code = 2;
        rr.errors.push_back(e.what());
        return rr;
    }

    json manifest = {{"config", config_to_json(cfg)}, {"warnings", rr.warnings}};
    json arts = json::array();
    for (const auto& [file, hash] : rr.artifacts) arts.push_back({{"file", file}, {"sha256", hash}});
    manifest["artifacts"] = arts;
    rr.manifest_path = out_dir + "/manifest.json";
    std::ofstream mf(rr.manifest_path);
    mf << manifest.dump(2) << "\n";
    return rr;
}

struct ReplayResult {
    int exit_code = 0; // 0 clean, 3 drift
    std::vector<std::string> drift;   // artifacts whose stored bytes changed
    std::vector<std::string> missing; // artifacts absent on disk
    std::vector<std::string> rerun_mismatch; // artifacts the re-run reproduced differently
};

// Re-checks stored artifact hashes, re-runs the config into a scratch
// directory, and compares the fresh hashes against the manifest.
inline ReplayResult replay(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    require(bool(in), "replay: cannot open " + manifest_path);
    json manifest = json::parse(in);
    ExperimentConfig cfg = config_from_json(manifest.at("config"));
    std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();

    ReplayResult rep;
    for (const json& a : manifest.at("artifacts")) {
        std::string file = a.at("file").get<std::string>();
        std::string recorded = a.at("sha256").get<std::string>();
        std::filesystem::path p = dir / file;
        if (!std::filesystem::exists(p)) {
            rep.missing.push_back(file);
            continue;
        }
        if (sha256_file(p.string()) != recorded) rep.drift.push_back(file);
    }

    std::string scratch = (dir / ".replay_check").string();
    RunResult rr = run_experiment(cfg, scratch);
    if (rr.exit_code == 0) {
        std::map<std::string, std::string> fresh(rr.artifacts.begin(), rr.artifacts.end());
        for (const json& a : manifest.at("artifacts")) {
            std::string file = a.at("file").get<std::string>();
            std::string recorded = a.at("sha256").get<std::string>();
            auto it = fresh.find(file);
            if (it == fresh.end() || it->second != recorded) rep.rerun_mismatch.push_back(file);
        }
    } else {
        rep.rerun_mismatch.push_back("(re-run failed)");
    }
    std::error_code ec;
    std::filesystem::remove_all(scratch, ec);

    if (!rep.drift.empty() || !rep.missing.empty() || !rep.rerun_mismatch.empty()) rep.exit_code = 3;
    return rep;
}

} // namespace perfhom
