#pragma once

#include <array>
#include <random>
#include <vector>

#include "scg/graph.hpp"
#include "scg/mscm.hpp"

namespace fixtures {

// Eight-node cyclic mixed graph used as the reference oracle throughout:
// two directed 2-cycles and a directed 4-cycle, confounded across components.
// Classes: {v1}, {v2,v3,v4,v5}, {v6,v7}, {v8}.
inline scg::SigmaCG reference_graph() {
    scg::SigmaCG g(8);
    auto add = [&](const char* a, const char* b) { g.add_directed(g.node(a), g.node(b)); };
    add("v1", "v2");
    add("v2", "v3");
    add("v3", "v4");
    add("v4", "v5");
    add("v5", "v2");
    add("v4", "v8");
    add("v6", "v7");
    add("v7", "v6");
    auto conf = [&](const char* a, const char* b) { g.add_bidirected(g.node(a), g.node(b)); };
    conf("v1", "v2");
    conf("v4", "v6");
    conf("v6", "v7");
    conf("v4", "v7");
    g.set_sigma({{0}, {1, 2, 3, 4}, {5, 6}, {7}});
    return g;
}

// Structural model behind reference_graph(): same observed edges, a
// two-child confounder behind v1/v2, a three-child one behind v4/v6/v7, and
// private noise for the rest. Each weight row splits 0.8 over the parents.
inline scg::MSCM reference_mscm() {
    scg::MSCM m;
    for (int i = 1; i <= 8; ++i) m.observed.push_back("v" + std::to_string(i));
    auto edge = [&](const char* a, const char* b) { m.edges.insert({m.node(a), m.node(b)}); };
    edge("v1", "v2");
    edge("v2", "v3");
    edge("v3", "v4");
    edge("v4", "v5");
    edge("v5", "v2");
    edge("v4", "v8");
    edge("v6", "v7");
    edge("v7", "v6");
    m.latents = {{"u1", {0, 1}}, {"u2", {7}}, {"u3", {2}}, {"u4", {3, 5, 6}}, {"u5", {4}}};
    m.weights.assign(8, std::vector<double>(8, 0.0));
    for (int v = 0; v < 8; ++v) {
        const auto pa = m.parents(v);
        for (int k : pa) m.weights[v][k] = 0.8 / static_cast<double>(pa.size());
    }
    m.bias.assign(8, -0.5);
    return m;
}

// Directed four-cycle x_i = tanh(0.9 x_prev + 0.5) + e_i with private noise
// per node. Its dependence structure separates the two separation notions:
// v2 and v4 stay dependent given {v3, v5} even though d-separation claims
// otherwise.
inline scg::MSCM four_cycle_mscm() {
    scg::MSCM m;
    m.observed = {"v2", "v3", "v4", "v5"};
    m.edges = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
    m.latents = {{"e1", {0}}, {"e3", {1}}, {"e4", {2}}, {"e5", {3}}};
    m.weights.assign(4, std::vector<double>(4, 0.0));
    for (const auto& [u, v] : m.edges) m.weights[v][u] = 0.9;
    m.bias.assign(4, 0.5);
    return m;
}

// Six-node DAG whose reduction (drop v1's margin, fix v6) turns cyclic:
// chain v1 -> ... -> v6 plus the shortcut v1 -> v6, singleton classes.
inline scg::SigmaCG shortcut_dag() {
    scg::SigmaCG g(6);
    for (int v = 0; v + 1 < 6; ++v) g.add_directed(v, v + 1);
    g.add_directed(0, 5);
    return g;
}

// Random mixed graph. Sigma classes are a random refinement of the strongly
// connected components: nodes get one of `colors` labels and each class is a
// strongly connected set of the subgraph induced by its label. colors = 1
// recovers the coarsest partition, colors >= n the finest.
inline scg::SigmaCG random_graph(std::mt19937_64& rng, int n, double p_dir, double p_bi,
                                 double p_un, int colors) {
    scg::SigmaCG g(n);
    std::bernoulli_distribution dir(p_dir), bi(p_bi), un(p_un);
    for (int u = 0; u < n; ++u) {
        for (int v = 0; v < n; ++v) {
            if (u != v && dir(rng)) g.add_directed(u, v);
            if (u < v && bi(rng)) g.add_bidirected(u, v);
            if (u <= v && un(rng)) g.add_undirected(u, v);
        }
    }
    std::uniform_int_distribution<int> color(0, colors - 1);
    std::vector<int> label(n);
    for (auto& c : label) c = color(rng);
    scg::SigmaCG induced(n);
    for (auto [u, v] : g.directed())
        if (label[u] == label[v]) induced.add_directed(u, v);
    g.set_sigma(scg::strongly_connected_components(induced));
    return g;
}

// All (X, Y, Z) assignments over n nodes: each node goes to X, Y, Z or none.
// X and Y come out nonempty and the three sets disjoint.
inline std::vector<std::array<scg::NodeSet, 3>> all_queries(int n) {
    std::vector<std::array<scg::NodeSet, 3>> out;
    int total = 1;
    for (int i = 0; i < n; ++i) total *= 4;
    for (int code = 0; code < total; ++code) {
        std::array<scg::NodeSet, 3> q;
        int c = code;
        for (int v = 0; v < n; ++v, c /= 4)
            if (c % 4 < 3) q[c % 4].push_back(v);
        if (!q[0].empty() && !q[1].empty()) out.push_back(std::move(q));
    }
    return out;
}

} // namespace fixtures
