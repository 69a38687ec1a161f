#include "scg/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace scg {

NodeSet make_node_set(std::vector<NodeId> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

namespace {

std::vector<std::string> default_names(int n) {
    std::vector<std::string> names;
    names.reserve(n);
    for (int i = 0; i < n; ++i) names.push_back("v" + std::to_string(i + 1));
    return names;
}

void check_name(const std::string& s) {
    if (s.empty()) throw std::invalid_argument("node name must be non-empty");
    if (s.find(',') != std::string::npos || s.find(';') != std::string::npos)
        throw std::invalid_argument("node name must not contain ',' or ';': " + s);
}

NodeSet operator-(const NodeSet& a, const NodeSet& b) {
    NodeSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

bool intersects(const NodeSet& a, const NodeSet& b) {
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j)
            ++i;
        else if (*j < *i)
            ++j;
        else
            return true;
    }
    return false;
}

} // namespace

SigmaCG::SigmaCG(int n) : SigmaCG(default_names(n)) {}

SigmaCG::SigmaCG(std::vector<std::string> names) : names_(std::move(names)) {
    std::set<std::string> seen;
    for (const auto& s : names_) {
        check_name(s);
        if (!seen.insert(s).second) throw std::invalid_argument("duplicate node name: " + s);
    }
    sigma_.resize(names_.size());
    for (int v = 0; v < num_nodes(); ++v) sigma_[v] = v;
}

void SigmaCG::check_node(NodeId v) const {
    if (v < 0 || v >= num_nodes())
        throw std::out_of_range("node id " + std::to_string(v) + " out of range");
}

const std::string& SigmaCG::name(NodeId v) const {
    check_node(v);
    return names_[v];
}

NodeId SigmaCG::node(const std::string& name) const {
    auto v = find_node(name);
    if (!v) throw std::out_of_range("unknown node: " + name);
    return *v;
}

std::optional<NodeId> SigmaCG::find_node(const std::string& name) const {
    for (int v = 0; v < num_nodes(); ++v)
        if (names_[v] == name) return v;
    return std::nullopt;
}

void SigmaCG::add_directed(NodeId u, NodeId v) {
    check_node(u);
    check_node(v);
    if (u == v) throw std::invalid_argument("directed self-loop not allowed");
    directed_.insert({u, v});
}

void SigmaCG::add_bidirected(NodeId u, NodeId v) {
    check_node(u);
    check_node(v);
    if (u == v) throw std::invalid_argument("bidirected self-loop not allowed");
    bidirected_.insert({std::min(u, v), std::max(u, v)});
}

void SigmaCG::add_undirected(NodeId u, NodeId v) {
    check_node(u);
    check_node(v);
    undirected_.insert({std::min(u, v), std::max(u, v)});
}

void SigmaCG::remove_directed(NodeId u, NodeId v) { directed_.erase({u, v}); }

void SigmaCG::remove_bidirected(NodeId u, NodeId v) {
    bidirected_.erase({std::min(u, v), std::max(u, v)});
}

bool SigmaCG::has_directed(NodeId u, NodeId v) const { return directed_.count({u, v}) > 0; }

bool SigmaCG::has_bidirected(NodeId u, NodeId v) const {
    return bidirected_.count({std::min(u, v), std::max(u, v)}) > 0;
}

bool SigmaCG::has_undirected(NodeId u, NodeId v) const {
    return undirected_.count({std::min(u, v), std::max(u, v)}) > 0;
}

bool SigmaCG::adjacent(NodeId u, NodeId v) const {
    return has_directed(u, v) || has_directed(v, u) || has_bidirected(u, v) ||
           has_undirected(u, v);
}

std::size_t SigmaCG::num_edges() const {
    return directed_.size() + bidirected_.size() + undirected_.size();
}

void SigmaCG::set_sigma(const std::vector<NodeSet>& classes) {
    std::vector<NodeId> rep(num_nodes(), -1);
    for (const auto& cls : classes) {
        if (cls.empty()) throw std::invalid_argument("empty sigma class");
        NodeId r = *std::min_element(cls.begin(), cls.end());
        for (NodeId v : cls) {
            check_node(v);
            if (rep[v] != -1) throw std::invalid_argument("sigma classes overlap");
            rep[v] = r;
        }
    }
    for (int v = 0; v < num_nodes(); ++v)
        if (rep[v] == -1) throw std::invalid_argument("sigma classes do not cover all nodes");
    sigma_ = std::move(rep);
}

void SigmaCG::set_sigma_representatives(std::vector<NodeId> rep) {
    if (static_cast<int>(rep.size()) != num_nodes())
        throw std::invalid_argument("sigma representative vector has wrong size");
    // normalize: representative = minimal member of the class
    std::vector<NodeId> norm(rep.size());
    for (int v = 0; v < num_nodes(); ++v) {
        check_node(rep[v]);
        NodeId mn = v;
        for (int u = 0; u < num_nodes(); ++u)
            if (rep[u] == rep[v]) mn = std::min(mn, u);
        norm[v] = mn;
    }
    sigma_ = std::move(norm);
}

bool SigmaCG::same_class(NodeId u, NodeId v) const {
    check_node(u);
    check_node(v);
    return sigma_[u] == sigma_[v];
}

std::vector<NodeSet> SigmaCG::sigma_classes() const {
    std::map<NodeId, NodeSet> by_rep;
    for (int v = 0; v < num_nodes(); ++v) by_rep[sigma_[v]].push_back(v);
    std::vector<NodeSet> out;
    for (auto& [_, cls] : by_rep) out.push_back(std::move(cls));
    return out;
}

std::string SigmaCG::canonical_key() const {
    std::ostringstream os;
    for (const auto& s : names_) os << s << ',';
    os << "|d";
    for (auto [u, v] : directed_) os << u << '>' << v << ';';
    os << "|b";
    for (auto [u, v] : bidirected_) os << u << '~' << v << ';';
    os << "|u";
    for (auto [u, v] : undirected_) os << u << '-' << v << ';';
    os << "|s";
    for (NodeId r : sigma_) os << r << ',';
    return os.str();
}

bool SigmaCG::operator==(const SigmaCG& other) const {
    return names_ == other.names_ && directed_ == other.directed_ &&
           bidirected_ == other.bidirected_ && undirected_ == other.undirected_ &&
           sigma_ == other.sigma_;
}

// ---------------------------------------------------------------------------
// validation and sigma partitions

namespace {

// mutual reachability over directed edges restricted to `allowed` (nullptr = all)
std::vector<char> directed_reachable(const SigmaCG& g, NodeId from, const std::vector<char>* allowed) {
    std::vector<char> seen(g.num_nodes(), 0);
    if (allowed && !(*allowed)[from]) return seen;
    std::deque<NodeId> todo{from};
    seen[from] = 1;
    while (!todo.empty()) {
        NodeId u = todo.front();
        todo.pop_front();
        for (auto [a, b] : g.directed()) {
            if (a != u || seen[b]) continue;
            if (allowed && !(*allowed)[b]) continue;
            seen[b] = 1;
            todo.push_back(b);
        }
    }
    return seen;
}

} // namespace

ValidationReport validate(const SigmaCG& g) {
    int n = g.num_nodes();
    for (auto [u, v] : g.directed())
        if (u == v) return {false, "directed self-loop at " + g.name(u)};
    for (auto [u, v] : g.bidirected())
        if (u == v) return {false, "bidirected self-loop at " + g.name(u)};
    if (static_cast<int>(g.sigma().size()) != n) return {false, "sigma size mismatch"};
    for (int v = 0; v < n; ++v) {
        NodeId r = g.sigma()[v];
        if (r < 0 || r >= n) return {false, "sigma representative out of range"};
        if (g.sigma()[r] != r) return {false, "sigma representative map inconsistent"};
        if (r > v) return {false, "sigma representative not minimal member"};
    }
    for (const auto& cls : g.sigma_classes()) {
        if (cls.size() < 2) continue;
        std::vector<char> allowed(n, 0);
        for (NodeId v : cls) allowed[v] = 1;
        auto fwd = directed_reachable(g, cls[0], &allowed);
        for (NodeId v : cls)
            if (!fwd[v])
                return {false, "sigma class not a loop: " + g.name(cls[0]) + " cannot reach " +
                                   g.name(v) + " inside the class"};
        for (NodeId v : cls) {
            auto back = directed_reachable(g, v, &allowed);
            if (!back[cls[0]])
                return {false, "sigma class not a loop: " + g.name(v) + " cannot reach " +
                                   g.name(cls[0]) + " inside the class"};
        }
    }
    return {true, ""};
}

std::vector<NodeSet> strongly_connected_components(const SigmaCG& g) {
    int n = g.num_nodes();
    std::vector<std::vector<char>> reach(n);
    for (int v = 0; v < n; ++v) reach[v] = directed_reachable(g, v, nullptr);
    std::vector<NodeId> rep(n);
    for (int v = 0; v < n; ++v) {
        rep[v] = v;
        for (int u = 0; u < v; ++u)
            if (reach[u][v] && reach[v][u]) {
                rep[v] = rep[u];
                break;
            }
    }
    std::map<NodeId, NodeSet> by_rep;
    for (int v = 0; v < n; ++v) by_rep[rep[v]].push_back(v);
    std::vector<NodeSet> out;
    for (auto& [_, cls] : by_rep) out.push_back(std::move(cls));
    return out;
}

SigmaCG coarsest_sigma(const SigmaCG& g) {
    SigmaCG out = g;
    out.set_sigma(strongly_connected_components(g));
    return out;
}

SigmaCG finest_sigma(const SigmaCG& g) {
    SigmaCG out = g;
    std::vector<NodeSet> singletons;
    for (int v = 0; v < g.num_nodes(); ++v) singletons.push_back({v});
    out.set_sigma(singletons);
    return out;
}

// ---------------------------------------------------------------------------
// marginalisation and conditioning

namespace {

// One edge end incident to a fixed node. `other` is the far endpoint, with the
// mark at each end. The undirected self-loop at the node itself is excluded
// and handled separately.
struct EndRec {
    NodeId other;
    Mark at_other;
    Mark at_node;
    EdgeType type;
};

std::vector<EndRec> collect_ends(const SigmaCG& g, NodeId w) {
    std::vector<EndRec> ends;
    for (auto [u, v] : g.directed()) {
        if (u == w) ends.push_back({v, Mark::head, Mark::tail, EdgeType::directed});
        if (v == w) ends.push_back({u, Mark::tail, Mark::head, EdgeType::directed});
    }
    for (auto [u, v] : g.bidirected()) {
        if (u == w) ends.push_back({v, Mark::head, Mark::head, EdgeType::bidirected});
        if (v == w) ends.push_back({u, Mark::head, Mark::head, EdgeType::bidirected});
    }
    for (auto [u, v] : g.undirected()) {
        if (u == v) continue;
        if (u == w) ends.push_back({v, Mark::tail, Mark::tail, EdgeType::undirected});
        if (v == w) ends.push_back({u, Mark::tail, Mark::tail, EdgeType::undirected});
    }
    return ends;
}

// Builds the removed-node graph: copies every edge not incident to `w`,
// maps ids (ids above w shift down), and inherits sigma classes minus w.
SigmaCG removal_base(const SigmaCG& g, NodeId w, std::vector<NodeId>& map) {
    std::vector<std::string> names;
    map.assign(g.num_nodes(), -1);
    for (int v = 0; v < g.num_nodes(); ++v) {
        if (v == w) continue;
        map[v] = static_cast<NodeId>(names.size());
        names.push_back(g.name(v));
    }
    SigmaCG out(names);
    for (auto [u, v] : g.directed())
        if (u != w && v != w) out.add_directed(map[u], map[v]);
    for (auto [u, v] : g.bidirected())
        if (u != w && v != w) out.add_bidirected(map[u], map[v]);
    for (auto [u, v] : g.undirected())
        if (u != w && v != w) out.add_undirected(map[u], map[v]);
    std::vector<NodeId> rep(out.num_nodes());
    for (int v = 0; v < g.num_nodes(); ++v) {
        if (v == w) continue;
        NodeId r = g.sigma()[v];
        if (r == w) { // removed node was the minimal member; find the next one
            r = -1;
            for (int u = 0; u < g.num_nodes(); ++u)
                if (u != w && g.sigma()[u] == g.sigma()[v]) {
                    r = u;
                    break;
                }
        }
        rep[map[v]] = map[r];
    }
    out.set_sigma_representatives(rep);
    return out;
}

void emit_marked_edge(SigmaCG& out, NodeId a, Mark ma, NodeId b, Mark mb) {
    if (ma == Mark::tail && mb == Mark::head) {
        if (a != b) out.add_directed(a, b);
    } else if (ma == Mark::head && mb == Mark::tail) {
        if (a != b) out.add_directed(b, a);
    } else if (ma == Mark::head && mb == Mark::head) {
        if (a != b) out.add_bidirected(a, b);
    } else {
        out.add_undirected(a, b);
    }
}

} // namespace

SigmaCG marginalise(const SigmaCG& g, NodeId w) {
    if (w < 0 || w >= g.num_nodes())
        throw std::out_of_range("marginalise: node id " + std::to_string(w) + " out of range");
    std::vector<NodeId> map;
    SigmaCG out = removal_base(g, w, map);
    const auto ends = collect_ends(g, w);
    const bool self = g.has_undirected(w, w);
    for (const auto& e1 : ends) {
        for (const auto& e2 : ends) {
            if (e1.at_node == Mark::tail)
                emit_marked_edge(out, map[e1.other], e1.at_other, map[e2.other], e2.at_other);
            if (e2.at_node == Mark::tail)
                emit_marked_edge(out, map[e1.other], e1.at_other, map[e2.other], e2.at_other);
            if (self && e1.at_node == Mark::head && e2.at_node == Mark::head)
                emit_marked_edge(out, map[e1.other], e1.at_other, map[e2.other], e2.at_other);
        }
    }
    return out;
}

SigmaCG condition(const SigmaCG& g, NodeId c) {
    if (c < 0 || c >= g.num_nodes())
        throw std::out_of_range("condition: node id " + std::to_string(c) + " out of range");
    std::vector<NodeId> map;
    SigmaCG out = removal_base(g, c, map);
    const auto ends = collect_ends(g, c);
    for (const auto& e1 : ends) {
        const bool e1_out_of_c = e1.type == EdgeType::directed && e1.at_node == Mark::tail;
        for (const auto& e2 : ends) {
            const bool e2_out_of_c = e2.type == EdgeType::directed && e2.at_node == Mark::tail;
            if (e1.at_node == Mark::head && e2.at_node == Mark::head)
                emit_marked_edge(out, map[e1.other], e1.at_other, map[e2.other], e2.at_other);
            if (e1_out_of_c && e2.at_node == Mark::head && g.same_class(e1.other, c))
                emit_marked_edge(out, map[e1.other], Mark::head, map[e2.other], e2.at_other);
            if (e2_out_of_c && e1.at_node == Mark::head && g.same_class(e2.other, c))
                emit_marked_edge(out, map[e1.other], e1.at_other, map[e2.other], Mark::head);
            if (e1_out_of_c && e2_out_of_c && g.same_class(e1.other, c) && g.same_class(e2.other, c))
                emit_marked_edge(out, map[e1.other], Mark::head, map[e2.other], Mark::head);
        }
    }
    return out;
}

SigmaCG reduce(const SigmaCG& g, const NodeSet& marginals, const NodeSet& conditionals) {
    if (intersects(marginals, conditionals))
        throw std::invalid_argument("reduce: marginal and conditional sets overlap");
    SigmaCG h = g;
    std::vector<NodeId> cur(g.num_nodes());
    for (int v = 0; v < g.num_nodes(); ++v) cur[v] = v;
    auto remove = [&](NodeId orig, bool marg) {
        if (orig < 0 || orig >= g.num_nodes())
            throw std::out_of_range("reduce: node id out of range");
        NodeId id = cur[orig];
        h = marg ? marginalise(h, id) : condition(h, id);
        for (auto& c : cur)
            if (c > id) --c;
        cur[orig] = -1;
    };
    for (auto it = marginals.rbegin(); it != marginals.rend(); ++it) remove(*it, true);
    for (auto it = conditionals.rbegin(); it != conditionals.rend(); ++it) remove(*it, false);
    return h;
}

SigmaCG intervened_graph(const SigmaCG& g, const std::vector<NodeId>& targets) {
    std::vector<char> hit(g.num_nodes(), 0);
    for (NodeId t : targets) {
        if (t < 0 || t >= g.num_nodes())
            throw std::out_of_range("intervened_graph: node id out of range");
        hit[t] = 1;
    }
    SigmaCG h(g.names());
    for (auto [u, v] : g.directed())
        if (!hit[v]) h.add_directed(u, v);
    for (auto [u, v] : g.bidirected())
        if (!hit[u] && !hit[v]) h.add_bidirected(u, v);
    for (auto [u, v] : g.undirected()) h.add_undirected(u, v);
    return coarsest_sigma(h);
}

// ---------------------------------------------------------------------------
// separation

SeparationQuery::SeparationQuery(NodeSet x_, NodeSet y_, NodeSet z_)
    : x(make_node_set(std::move(x_))), y(make_node_set(std::move(y_))),
      z(make_node_set(std::move(z_))) {
    x = x - z;
    y = y - z;
}

bool sigma_separated_reduction(const SigmaCG& g, const SeparationQuery& q) {
    for (NodeId v : q.x) g.name(v); // range check
    for (NodeId v : q.y) g.name(v);
    for (NodeId v : q.z) g.name(v);
    if (intersects(q.x, q.y)) return false;
    if (q.x.empty() || q.y.empty()) return true;
    NodeSet keep = q.x;
    keep.insert(keep.end(), q.y.begin(), q.y.end());
    keep.insert(keep.end(), q.z.begin(), q.z.end());
    keep = make_node_set(std::move(keep));
    NodeSet all(g.num_nodes());
    for (int v = 0; v < g.num_nodes(); ++v) all[v] = v;
    SigmaCG h = reduce(g, all - keep, q.z);
    for (NodeId x : q.x)
        for (NodeId y : q.y)
            if (h.adjacent(h.node(g.name(x)), h.node(g.name(y)))) return false;
    return true;
}

namespace {

struct EdgeInst {
    NodeId u, v;
    EdgeType type;
};

Mark mark_at_source(const EdgeInst& e, int dir) {
    // dir 0: traverse u -> v, source end u; dir 1: v -> u, source end v
    if (e.type == EdgeType::directed) return dir == 0 ? Mark::tail : Mark::head;
    return e.type == EdgeType::bidirected ? Mark::head : Mark::tail;
}

Mark mark_at_dest(const EdgeInst& e, int dir) {
    if (e.type == EdgeType::directed) return dir == 0 ? Mark::head : Mark::tail;
    return e.type == EdgeType::bidirected ? Mark::head : Mark::tail;
}

NodeId source(const EdgeInst& e, int dir) { return dir == 0 ? e.u : e.v; }
NodeId dest(const EdgeInst& e, int dir) { return dir == 0 ? e.v : e.u; }

// BFS over (edge instance, direction) states; returns a connecting walk if the
// query endpoints are sigma-connected, std::nullopt if separated.
std::optional<Walk> walk_search(const SigmaCG& g, const SeparationQuery& q) {
    for (NodeId v : q.x) g.name(v);
    for (NodeId v : q.y) g.name(v);
    for (NodeId v : q.z) g.name(v);
    int n = g.num_nodes();
    std::vector<char> in_x(n, 0), in_y(n, 0), in_z(n, 0);
    for (NodeId v : q.x) in_x[v] = 1;
    for (NodeId v : q.y) in_y[v] = 1;
    for (NodeId v : q.z) in_z[v] = 1;
    for (NodeId v : q.x)
        if (in_y[v]) return Walk{v, {}};

    std::vector<EdgeInst> edges;
    for (auto [u, v] : g.directed()) edges.push_back({u, v, EdgeType::directed});
    for (auto [u, v] : g.bidirected()) edges.push_back({u, v, EdgeType::bidirected});
    for (auto [u, v] : g.undirected()) edges.push_back({u, v, EdgeType::undirected});
    const int m = static_cast<int>(edges.size());

    std::vector<std::vector<int>> leaving(n); // state = 2*edge + dir, keyed by source node
    for (int e = 0; e < m; ++e) {
        leaving[edges[e].u].push_back(2 * e);
        leaving[edges[e].v].push_back(2 * e + 1);
    }

    auto open_triple = [&](NodeId prev, NodeId v, NodeId next, const EdgeInst& e1, Mark m1,
                           const EdgeInst& e2, Mark m2) {
        if (e1.type == EdgeType::undirected || e2.type == EdgeType::undirected) return !in_z[v];
        if (m1 == Mark::head && m2 == Mark::head) return static_cast<bool>(in_z[v]);
        if (m1 == Mark::tail && m2 == Mark::head) return !in_z[v] || g.same_class(v, prev);
        if (m1 == Mark::head && m2 == Mark::tail) return !in_z[v] || g.same_class(v, next);
        return !in_z[v] || (g.same_class(v, prev) && g.same_class(v, next));
    };

    std::vector<int> pred(2 * m, -1); // -1 unvisited, -2 start state
    std::deque<int> todo;
    int accept = -1;
    auto visit = [&](int state, int from) {
        if (pred[state] != -1) return;
        pred[state] = from;
        const auto& e = edges[state / 2];
        NodeId arr = dest(e, state % 2);
        if (in_y[arr] && !in_z[arr] && accept == -1) accept = state;
        todo.push_back(state);
    };
    for (NodeId x : q.x)
        for (int s : leaving[x]) visit(s, -2);
    while (accept == -1 && !todo.empty()) {
        int s1 = todo.front();
        todo.pop_front();
        const auto& e1 = edges[s1 / 2];
        int d1 = s1 % 2;
        NodeId v = dest(e1, d1);
        NodeId prev = source(e1, d1);
        Mark m1 = mark_at_dest(e1, d1);
        for (int s2 : leaving[v]) {
            if (pred[s2] != -1) continue;
            const auto& e2 = edges[s2 / 2];
            int d2 = s2 % 2;
            if (open_triple(prev, v, dest(e2, d2), e1, m1, e2, mark_at_source(e2, d2)))
                visit(s2, s1);
            if (accept != -1) break;
        }
    }
    if (accept == -1) return std::nullopt;
    Walk walk;
    std::vector<int> chain;
    for (int s = accept; s != -2; s = pred[s]) chain.push_back(s);
    std::reverse(chain.begin(), chain.end());
    walk.start = source(edges[chain[0] / 2], chain[0] % 2);
    for (int s : chain) {
        const auto& e = edges[s / 2];
        int d = s % 2;
        walk.steps.push_back({source(e, d), dest(e, d), mark_at_source(e, d), mark_at_dest(e, d)});
    }
    return walk;
}

} // namespace

bool sigma_separated_walk(const SigmaCG& g, const SeparationQuery& q) {
    return !walk_search(g, q).has_value();
}

bool sigma_separated(const SigmaCG& g, const SeparationQuery& q, SepBackend backend) {
    return backend == SepBackend::reduction ? sigma_separated_reduction(g, q)
                                            : sigma_separated_walk(g, q);
}

bool d_separated(const SigmaCG& g, const SeparationQuery& q, SepBackend backend) {
    return sigma_separated(finest_sigma(g), q, backend);
}

std::optional<Walk> connecting_walk(const SigmaCG& g, const SeparationQuery& q) {
    return walk_search(g, q);
}

std::string format_walk(const SigmaCG& g, const Walk& walk) {
    std::ostringstream os;
    os << g.name(walk.start);
    for (const auto& s : walk.steps) {
        const char* sym = "--";
        if (s.at_from == Mark::tail && s.at_to == Mark::head)
            sym = "->";
        else if (s.at_from == Mark::head && s.at_to == Mark::tail)
            sym = "<-";
        else if (s.at_from == Mark::head && s.at_to == Mark::head)
            sym = "<->";
        os << ' ' << sym << ' ' << g.name(s.to);
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// JSON I/O

std::string graph_to_json(const SigmaCG& g) {
    nlohmann::json j;
    j["nodes"] = g.names();
    auto pairs = [&](const std::set<std::pair<NodeId, NodeId>>& es) {
        nlohmann::json arr = nlohmann::json::array();
        for (auto [u, v] : es) arr.push_back({g.name(u), g.name(v)});
        return arr;
    };
    j["directed"] = pairs(g.directed());
    j["bidirected"] = pairs(g.bidirected());
    j["undirected"] = pairs(g.undirected());
    nlohmann::json sigma = nlohmann::json::array();
    for (const auto& cls : g.sigma_classes()) {
        nlohmann::json c = nlohmann::json::array();
        for (NodeId v : cls) c.push_back(g.name(v));
        sigma.push_back(c);
    }
    j["sigma"] = sigma;
    return j.dump(2);
}

SigmaCG graph_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("graph json: parse error: ") + e.what());
    }
    if (!j.contains("nodes") || !j["nodes"].is_array())
        throw std::runtime_error("graph json: missing \"nodes\" array");
    std::vector<std::string> names;
    for (const auto& s : j["nodes"]) names.push_back(s.get<std::string>());
    SigmaCG g(names);
    auto read_pairs = [&](const char* key, auto add) {
        if (!j.contains(key)) return;
        for (const auto& pair : j[key]) {
            if (!pair.is_array() || pair.size() != 2)
                throw std::runtime_error(std::string("graph json: bad pair in \"") + key + '"');
            add(g.node(pair[0].get<std::string>()), g.node(pair[1].get<std::string>()));
        }
    };
    read_pairs("directed", [&](NodeId u, NodeId v) { g.add_directed(u, v); });
    read_pairs("bidirected", [&](NodeId u, NodeId v) { g.add_bidirected(u, v); });
    read_pairs("undirected", [&](NodeId u, NodeId v) { g.add_undirected(u, v); });
    if (j.contains("sigma")) {
        std::vector<NodeSet> classes;
        for (const auto& cls : j["sigma"]) {
            NodeSet c;
            for (const auto& s : cls) c.push_back(g.node(s.get<std::string>()));
            classes.push_back(make_node_set(std::move(c)));
        }
        g.set_sigma(classes);
    } else {
        g.set_sigma(strongly_connected_components(g));
    }
    return g;
}

SigmaCG load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open graph file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return graph_from_json(ss.str());
}

void save_graph(const SigmaCG& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write graph file: " + path);
    out << graph_to_json(g) << '\n';
}

} // namespace scg
