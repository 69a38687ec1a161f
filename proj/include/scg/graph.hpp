#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace scg {

using NodeId = int;
using NodeSet = std::vector<NodeId>; // sorted, unique

NodeSet make_node_set(std::vector<NodeId> ids);

enum class Mark { tail, head };
enum class EdgeType { directed, bidirected, undirected };

// Mixed graph with a sigma partition whose classes are loops of the directed part.
// Undirected self-loops are allowed; directed/bidirected self-loops are not
// representable through the add_* interface.
class SigmaCG {
  public:
    SigmaCG() = default;
    explicit SigmaCG(int n);
    explicit SigmaCG(std::vector<std::string> names);

    int num_nodes() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(NodeId v) const;
    NodeId node(const std::string& name) const; // throws if unknown
    std::optional<NodeId> find_node(const std::string& name) const;

    void add_directed(NodeId u, NodeId v);
    void add_bidirected(NodeId u, NodeId v);
    void add_undirected(NodeId u, NodeId v); // u == v allowed
    void remove_directed(NodeId u, NodeId v);
    void remove_bidirected(NodeId u, NodeId v);

    bool has_directed(NodeId u, NodeId v) const;
    bool has_bidirected(NodeId u, NodeId v) const;
    bool has_undirected(NodeId u, NodeId v) const;
    bool adjacent(NodeId u, NodeId v) const; // any orientation, either direction

    const std::set<std::pair<NodeId, NodeId>>& directed() const { return directed_; }
    const std::set<std::pair<NodeId, NodeId>>& bidirected() const { return bidirected_; }
    const std::set<std::pair<NodeId, NodeId>>& undirected() const { return undirected_; }
    std::size_t num_edges() const;

    // sigma is stored as a representative (minimal member id) per node.
    void set_sigma(const std::vector<NodeSet>& classes); // must partition the nodes
    void set_sigma_representatives(std::vector<NodeId> rep);
    const std::vector<NodeId>& sigma() const { return sigma_; }
    bool same_class(NodeId u, NodeId v) const;
    std::vector<NodeSet> sigma_classes() const;

    std::string canonical_key() const;
    bool operator==(const SigmaCG& other) const;

  private:
    void check_node(NodeId v) const;
    std::vector<std::string> names_;
    std::set<std::pair<NodeId, NodeId>> directed_;   // (u, v) = u -> v
    std::set<std::pair<NodeId, NodeId>> bidirected_; // u < v
    std::set<std::pair<NodeId, NodeId>> undirected_; // u <= v
    std::vector<NodeId> sigma_;                      // representative per node, default singletons
};

struct ValidationReport {
    bool ok = true;
    std::string message;
};

ValidationReport validate(const SigmaCG& g);

std::vector<NodeSet> strongly_connected_components(const SigmaCG& g);
SigmaCG coarsest_sigma(const SigmaCG& g);
SigmaCG finest_sigma(const SigmaCG& g);

// Node removal operations. Remaining nodes keep their relative order; ids above
// the removed node shift down by one. Sigma classes are inherited (class minus
// the removed node), not recomputed.
SigmaCG marginalise(const SigmaCG& g, NodeId w);
SigmaCG condition(const SigmaCG& g, NodeId c);

// marginalise every node in `marginals`, then condition on every node in
// `conditionals`, each processed in descending id order.
SigmaCG reduce(const SigmaCG& g, const NodeSet& marginals, const NodeSet& conditionals);

// Surgery for a perfect intervention on `targets`: directed edges into a
// target and bidirected edges at a target are removed (latent links are cut
// too), undirected edges stay, and sigma is recomputed as the coarsest
// partition of what remains.
SigmaCG intervened_graph(const SigmaCG& g, const std::vector<NodeId>& targets);

struct SeparationQuery {
    NodeSet x, y, z;
    // Normalizes: sorts and dedups, then drops z members from x and y.
    SeparationQuery(NodeSet x_, NodeSet y_, NodeSet z_);
};

enum class SepBackend { reduction, walk };

bool sigma_separated_reduction(const SigmaCG& g, const SeparationQuery& q);
bool sigma_separated_walk(const SigmaCG& g, const SeparationQuery& q);
bool sigma_separated(const SigmaCG& g, const SeparationQuery& q,
                     SepBackend backend = SepBackend::reduction);
bool d_separated(const SigmaCG& g, const SeparationQuery& q,
                 SepBackend backend = SepBackend::walk);

// Witness for `graph separate --explain`: the node sequence of a sigma-open
// walk, with the end marks of each traversed edge.
struct WalkStep {
    NodeId from, to;
    Mark at_from, at_to;
};
struct Walk {
    NodeId start = -1;
    std::vector<WalkStep> steps; // empty = single-node walk
};
std::optional<Walk> connecting_walk(const SigmaCG& g, const SeparationQuery& q);
std::string format_walk(const SigmaCG& g, const Walk& walk);

// JSON document I/O. A missing "sigma" field defaults to the coarsest
// partition; serialization always writes sigma so round-trips are lossless.
std::string graph_to_json(const SigmaCG& g);
SigmaCG graph_from_json(const std::string& text);
SigmaCG load_graph(const std::string& path);
void save_graph(const SigmaCG& g, const std::string& path);

} // namespace scg
