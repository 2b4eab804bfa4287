#pragma once

// Deterministic max-flow / min-cut on 64-bit integer capacities (Dinic).
// Double-valued interfaces scale into integers with a power-of-two factor so
// results are exact, reproducible, and monotone under capacity ordering.

#include "perfhom/core.hpp"

#include <queue>
#include <tuple>

namespace perfhom {

class MaxflowGraph {
public:
    explicit MaxflowGraph(int node_count) : head_(node_count + 2, -1), n_(node_count) {}

    int source() const { return n_; }
    int sink() const { return n_ + 1; }
    int node_count() const { return n_ + 2; }

    // Directed edge u -> v. A zero-capacity reverse edge is paired with it.
    void add_edge(int u, int v, std::int64_t cap) {
        push(u, v, cap);
        push(v, u, 0);
    }
    // Symmetric pair: capacity in both directions.
    void add_bidirectional(int u, int v, std::int64_t cap) {
        push(u, v, cap);
        push(v, u, cap);
    }

    std::int64_t run() {
        flow_ = 0;
        phases_ = 0;
        while (bfs()) {
            ++phases_;
            iter_ = head_;
            while (std::int64_t pushed = dfs(source(), std::numeric_limits<std::int64_t>::max()))
                flow_ += pushed;
        }
        mark_source_side();
        return flow_;
    }

    std::int64_t flow_value() const { return flow_; }
    int phases() const { return phases_; }

    // After run(): true when v is on the source side of the returned min cut.
    bool source_side(int v) const { return reach_[v] != 0; }

    // Capacity of the returned cut, from the original capacities. Equals the
    // flow value exactly (max-flow/min-cut certificate).
    std::int64_t cut_capacity() const {
        std::int64_t cut = 0;
        for (std::size_t i = 0; i < to_.size(); ++i) {
            if (orig_cap_[i] == 0) continue; // reverse half of a directed pair
            int u = from_[i], v = to_[i];
            if (reach_[u] && !reach_[v]) cut += orig_cap_[i];
        }
        return cut;
    }

    bool certified() const { return cut_capacity() == flow_; }

private:
    void push(int u, int v, std::int64_t cap) {
        from_.push_back(u);
        to_.push_back(v);
        cap_.push_back(cap);
        orig_cap_.push_back(cap);
        next_.push_back(head_[u]);
        head_[u] = static_cast<int>(to_.size()) - 1;
    }

    bool bfs() {
        level_.assign(node_count(), -1);
        std::queue<int> q;
        level_[source()] = 0;
        q.push(source());
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int e = head_[u]; e != -1; e = next_[e]) {
                if (cap_[e] > 0 && level_[to_[e]] < 0) {
                    level_[to_[e]] = level_[u] + 1;
                    q.push(to_[e]);
                }
            }
        }
        return level_[sink()] >= 0;
    }

    std::int64_t dfs(int u, std::int64_t limit) {
        if (u == sink()) return limit;
        for (int& e = iter_[u]; e != -1; e = next_[e]) {
            int v = to_[e];
            if (cap_[e] > 0 && level_[v] == level_[u] + 1) {
                std::int64_t got = dfs(v, std::min(limit, cap_[e]));
                if (got > 0) {
                    cap_[e] -= got;
                    cap_[e ^ 1] += got;
                    return got;
                }
                level_[v] = -1; // dead end
            }
        }
        return 0;
    }

    void mark_source_side() {
        reach_.assign(node_count(), 0);
        std::queue<int> q;
        reach_[source()] = 1;
        q.push(source());
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int e = head_[u]; e != -1; e = next_[e])
                if (cap_[e] > 0 && !reach_[to_[e]]) {
                    reach_[to_[e]] = 1;
                    q.push(to_[e]);
                }
        }
    }

    std::vector<int> head_, next_, from_, to_, level_, iter_;
    std::vector<std::int64_t> cap_, orig_cap_;
    std::vector<std::uint8_t> reach_;
    std::int64_t flow_ = 0;
    int phases_ = 0;
    int n_ = 0;
};

// Power-of-two scale that keeps the total integer capacity safely inside
// int64 (deterministic given the weights).
inline double capacity_scale(double total_weight) {
    double s = 1125899906842624.0; // 2^50
    while (s > 1.0 && total_weight * s > 4.0e18) s *= 0.5;
    return s;
}

struct MaxflowResult {
    double cut_value = 0.0;
    std::vector<std::uint8_t> source_side; // per node (excluding terminals)
    bool certified = false;
    int phases = 0;
};

// Double-capacity front-end: capacities are floored onto the integer scale.
// edges are (u, v, capacity) with u, v in [0, node_count) or the virtual
// terminals source = node_count, sink = node_count + 1.
inline MaxflowResult maxflow(int node_count, const std::vector<std::tuple<int, int, double>>& edges,
                             bool bidirectional = false) {
    double total = 0.0;
    for (const auto& [u, v, w] : edges) {
        require(w >= 0.0, "maxflow: capacities must be nonnegative");
        total += w;
    }
    double s = capacity_scale(total);
    MaxflowGraph g(node_count);
    for (const auto& [u, v, w] : edges) {
        auto cap = static_cast<std::int64_t>(std::floor(w * s));
        if (cap <= 0) continue;
        if (bidirectional) g.add_bidirectional(u, v, cap);
        else g.add_edge(u, v, cap);
    }
    std::int64_t f = g.run();
    MaxflowResult r;
    r.cut_value = static_cast<double>(f) / s;
    r.certified = g.certified();
    r.phases = g.phases();
    r.source_side.resize(node_count);
    for (int i = 0; i < node_count; ++i) r.source_side[i] = g.source_side(i) ? 1 : 0;
    return r;
}

} // namespace perfhom
