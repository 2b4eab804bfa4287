#pragma once

// Rasterization of a perforated window onto a regular grid, plus the field
// types the energies operate on. Node fields carry values at grid nodes;
// label fields carry one bit per cell; SBV fields add an explicit set of
// jump links (a link is a cell's forward difference along one axis).

#include "perfhom/core.hpp"
#include "perfhom/geometry.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace perfhom {

struct Grid {
    int n = 2;
    double t = 1.0;      // window side
    double h = 0.25;     // cell size, always exactly t/m
    int m = 4;           // cells per side
    int frame_width = 1; // Dirichlet layer thickness in cells
    Vec origin{0, 0, 0};

    Grid() = default;
    // m = round(t/h_request), then h is snapped to t/m so the cells tile the
    // window exactly.
    Grid(int n_, double t_, double h_request, int frame_width_ = 1, const Vec& origin_ = {0, 0, 0})
        : n(n_), t(t_), frame_width(frame_width_), origin(origin_) {
        require(n == 2 || n == 3, "Grid: n must be 2 or 3");
        require(t_ > 0.0 && h_request > 0.0, "Grid: t and h must be positive");
        m = static_cast<int>(std::llround(t_ / h_request));
        require(m >= 4, "Grid: need at least 4 cells per side");
        h = t / m;
        require(frame_width >= 1, "Grid: frame_width must be >= 1");
        require(frame_width * h < t / 4.0, "Grid: frame_width*h must be < t/4");
    }

    int nodes_per_side() const { return m + 1; }
    long long cell_count() const { return ipow_ll(m, n); }
    long long node_count() const { return ipow_ll(m + 1, n); }

    static long long ipow_ll(long long b, int e) {
        long long r = 1;
        for (int i = 0; i < e; ++i) r *= b;
        return r;
    }

    int cell_id(const IVec& c) const {
        int id = c[n - 1];
        for (int a = n - 2; a >= 0; --a) id = id * m + c[a];
        return id;
    }
    IVec cell_coords(int id) const {
        IVec c{0, 0, 0};
        for (int a = 0; a < n; ++a) {
            c[a] = id % m;
            id /= m;
        }
        return c;
    }
    int node_id(const IVec& v) const {
        int id = v[n - 1];
        for (int a = n - 2; a >= 0; --a) id = id * (m + 1) + v[a];
        return id;
    }
    IVec node_coords(int id) const {
        IVec v{0, 0, 0};
        for (int a = 0; a < n; ++a) {
            v[a] = id % (m + 1);
            id /= (m + 1);
        }
        return v;
    }

    Vec cell_center(const IVec& c) const {
        Vec x = origin;
        for (int a = 0; a < n; ++a) x[a] += (c[a] + 0.5) * h;
        return x;
    }
    Vec node_pos(const IVec& v) const {
        Vec x = origin;
        for (int a = 0; a < n; ++a) x[a] += v[a] * h;
        return x;
    }

    bool cell_in_frame(const IVec& c) const {
        for (int a = 0; a < n; ++a)
            if (c[a] < frame_width || c[a] >= m - frame_width) return true;
        return false;
    }

    // Cell c's forward difference along axis a runs from node(c) to node(c+e_a).
    int link_tail(const IVec& c) const { return node_id(c); }
    int link_head(IVec c, int a) const {
        ++c[a];
        return node_id(c);
    }
    long long link_count() const { return cell_count() * n; }
    static int link_id(int cell, int axis, int n) { return cell * n + axis; }

    bool same_layout(const Grid& o) const {
        return n == o.n && m == o.m && frame_width == o.frame_width && t == o.t;
    }
};

struct Masks {
    Grid grid;
    std::vector<std::uint8_t> hole_cells;  // per cell, frame-overridden
    std::vector<std::uint8_t> frame_cells; // per cell
    std::vector<std::uint8_t> frame_nodes; // per node: nodes of frame cells
    std::vector<int> cell_ball;            // per cell: owning ball or -1
    std::vector<std::uint8_t> boundary_ball_flags;    // per ball
    std::vector<std::vector<int>> annulus_cells;      // per ball
    std::vector<std::vector<int>> hole_cells_of_ball; // per ball (after frame override)

    bool any_hole() const {
        for (std::uint8_t f : hole_cells)
            if (f) return true;
        return false;
    }
};

// Cell-center membership rasterization. Requires h < delta/2 so rasterized
// annuli of distinct balls stay disjoint and a hole-free layer separates
// dilated balls.
inline Masks rasterize(const PerforatedGeometry& g, double h_request, int frame_width = 1) {
    Grid grid(g.n, g.t, h_request, frame_width, g.origin);
    if (!(grid.h < 0.5 * g.delta))
        throw std::invalid_argument("resolution error: effective h must be < delta/2");

    Masks mk;
    mk.grid = grid;
    mk.hole_cells.assign(grid.cell_count(), 0);
    mk.frame_cells.assign(grid.cell_count(), 0);
    mk.frame_nodes.assign(grid.node_count(), 0);
    mk.cell_ball.assign(grid.cell_count(), -1);
    mk.boundary_ball_flags.resize(g.balls.size());
    mk.annulus_cells.resize(g.balls.size());
    mk.hole_cells_of_ball.resize(g.balls.size());

    const int n = grid.n, m = grid.m;
    for (long long id = 0; id < grid.cell_count(); ++id)
        mk.frame_cells[id] = grid.cell_in_frame(grid.cell_coords(static_cast<int>(id))) ? 1 : 0;
    for (long long id = 0; id < grid.node_count(); ++id) {
        IVec v = grid.node_coords(static_cast<int>(id));
        for (int a = 0; a < n; ++a)
            if (v[a] <= grid.frame_width || v[a] >= m - grid.frame_width) {
                mk.frame_nodes[id] = 1;
                break;
            }
    }

    for (std::size_t bi = 0; bi < g.balls.size(); ++bi) {
        const BallInclusion& b = g.balls[bi];
        mk.boundary_ball_flags[bi] = g.ball_is_boundary(bi) ? 1 : 0;
        double reach = b.radius + g.delta;
        IVec lo{0, 0, 0}, hi{0, 0, 0};
        bool disjoint = false;
        for (int a = 0; a < n; ++a) {
            double c0 = (b.center[a] - reach - grid.origin[a]) / grid.h - 0.5;
            double c1 = (b.center[a] + reach - grid.origin[a]) / grid.h - 0.5;
            lo[a] = std::max(0, static_cast<int>(std::floor(c0)));
            hi[a] = std::min(m - 1, static_cast<int>(std::ceil(c1)));
            if (lo[a] > hi[a]) disjoint = true;
        }
        if (disjoint) continue;
        IVec c = lo;
        while (true) {
            double d = dist(grid.cell_center(c), b.center);
            int id = grid.cell_id(c);
            if (d <= b.radius) {
                if (!mk.frame_cells[id]) { // frame overrides hole cells
                    mk.hole_cells[id] = 1;
                    mk.cell_ball[id] = static_cast<int>(bi);
                    mk.hole_cells_of_ball[bi].push_back(id);
                }
            } else if (d < b.radius + g.delta) {
                mk.annulus_cells[bi].push_back(id);
            }
            int a = 0;
            while (a < n) {
                if (++c[a] <= hi[a]) break;
                c[a] = lo[a];
                ++a;
            }
            if (a == n) break;
        }
    }
    return mk;
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

struct ScalarField {
    Grid grid;
    std::vector<double> v; // per node

    ScalarField() = default;
    explicit ScalarField(const Grid& g, double fill = 0.0) : grid(g), v(g.node_count(), fill) {}
};

struct LabelField {
    Grid grid;
    std::vector<std::uint8_t> v; // per cell, in {0,1}

    LabelField() = default;
    explicit LabelField(const Grid& g, std::uint8_t fill = 0) : grid(g), v(g.cell_count(), fill) {}
};

struct SbvField {
    Grid grid;
    std::vector<double> v;            // per node
    std::vector<std::uint8_t> jump;   // per link (cell*n + axis)

    SbvField() = default;
    explicit SbvField(const Grid& g, double fill = 0.0)
        : grid(g), v(g.node_count(), fill), jump(g.link_count(), 0) {}
};

// l_xi(x) = xi . x evaluated at the nodes (absolute coordinates).
inline ScalarField affine_field(const Grid& g, const Vec& xi) {
    ScalarField f(g);
    for (long long id = 0; id < g.node_count(); ++id)
        f.v[id] = dot(xi, g.node_pos(g.node_coords(static_cast<int>(id))));
    return f;
}

// Half-space boundary datum: 1 where (center - x) . nu >= 0.
inline LabelField label_datum(const Grid& g, const Vec& x, const Vec& nu) {
    LabelField f(g);
    for (long long id = 0; id < g.cell_count(); ++id) {
        Vec c = g.cell_center(g.cell_coords(static_cast<int>(id)));
        f.v[id] = dot(sub(c, x), nu) >= 0.0 ? 1 : 0;
    }
    return f;
}

// Adds a step of the given size across the plane (x - anchor) . nu = 0 and
// declares the crossing links as jumps.
inline void add_plane_jump(SbvField& f, const Vec& anchor, const Vec& nu, double step) {
    const Grid& g = f.grid;
    std::vector<std::uint8_t> side(g.node_count());
    for (long long id = 0; id < g.node_count(); ++id) {
        side[id] =
            dot(sub(g.node_pos(g.node_coords(static_cast<int>(id))), anchor), nu) >= 0.0 ? 1 : 0;
        if (side[id]) f.v[id] += step;
    }
    for (long long cid = 0; cid < g.cell_count(); ++cid) {
        IVec c = g.cell_coords(static_cast<int>(cid));
        for (int a = 0; a < g.n; ++a)
            if (side[g.link_tail(c)] != side[g.link_head(c, a)])
                f.jump[Grid::link_id(static_cast<int>(cid), a, g.n)] = 1;
    }
}

// Piecewise-constant 0/1 field jumping across the plane (x - anchor) . nu = 0,
// with the crossing links declared as jumps.
inline SbvField sbv_plane_jump(const Grid& g, const Vec& anchor, const Vec& nu, double lo = 0.0,
                               double hi = 1.0) {
    SbvField f(g, lo);
    add_plane_jump(f, anchor, nu, hi - lo);
    return f;
}

// ---------------------------------------------------------------------------
// Field dump format: one text header line, then raw little-endian payload.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string field_header(const Grid& g, const char* kind) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "perfhom-field %s n=%d m=%d h=%.17g t=%.17g fw=%d\n", kind,
                  g.n, g.m, g.h, g.t, g.frame_width);
    return buf;
}

inline Grid parse_field_header(std::istream& in, const char* kind) {
    std::string line;
    std::getline(in, line);
    char k[16];
    int n = 0, m = 0, fw = 0;
    double h = 0, t = 0;
    if (std::sscanf(line.c_str(), "perfhom-field %15s n=%d m=%d h=%lg t=%lg fw=%d", k, &n, &m, &h,
                    &t, &fw) != 6 ||
        std::string(k) != kind)
        throw std::runtime_error("field load: bad header");
    Grid g(n, t, t / m, fw);
    return g;
}

} // namespace detail

inline void save_scalar_field(const ScalarField& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(bool(out), "save_scalar_field: cannot open " + path);
    std::string hdr = detail::field_header(f.grid, "f64");
    out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    out.write(reinterpret_cast<const char*>(f.v.data()),
              static_cast<std::streamsize>(f.v.size() * sizeof(double)));
}

inline ScalarField load_scalar_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), "load_scalar_field: cannot open " + path);
    ScalarField f(detail::parse_field_header(in, "f64"));
    in.read(reinterpret_cast<char*>(f.v.data()),
            static_cast<std::streamsize>(f.v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_scalar_field: truncated payload");
    return f;
}

inline void save_label_field(const LabelField& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(bool(out), "save_label_field: cannot open " + path);
    std::string hdr = detail::field_header(f.grid, "u8");
    out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    out.write(reinterpret_cast<const char*>(f.v.data()), static_cast<std::streamsize>(f.v.size()));
}

inline LabelField load_label_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), "load_label_field: cannot open " + path);
    LabelField f(detail::parse_field_header(in, "u8"));
    in.read(reinterpret_cast<char*>(f.v.data()), static_cast<std::streamsize>(f.v.size()));
    if (!in) throw std::runtime_error("load_label_field: truncated payload");
    return f;
}

} // namespace perfhom
