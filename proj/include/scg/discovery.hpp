#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "scg/ci.hpp"
#include "scg/graph.hpp"

namespace scg {

// Candidate causal graph over the observed nodes: directed edges plus
// bidirected confounder links, no undirected edges. Sigma is not stored; it
// is recomputed as the strongly connected components whenever the graph is
// used, so intervening on a hypothesis never carries stale classes.
struct HypothesisGraph {
    int nodes = 0;
    std::set<std::pair<NodeId, NodeId>> directed;   // (u, v) = u -> v, u != v
    std::set<std::pair<NodeId, NodeId>> bidirected; // stored with u < v

    bool operator==(const HypothesisGraph&) const = default;
};

ValidationReport validate(const HypothesisGraph& h);
bool is_acyclic(const HypothesisGraph& h);

SigmaCG to_sigma_cg(const HypothesisGraph& h, std::vector<std::string> names = {});
HypothesisGraph hypothesis_from(const SigmaCG& g); // throws on undirected edges

// Perfect-intervention surgery: directed edges into a target and bidirected
// edges at a target are removed, sigma is the coarsest partition of the rest.
SigmaCG intervened_graph(const HypothesisGraph& h, const std::vector<NodeId>& targets);

// Bit-slot encoding of the hypothesis space: the d(d-1) directed slots come
// first (source-major, skipping the diagonal), then the C(d,2) bidirected
// pair slots in lexicographic order. d <= 5 keeps every code within 30 bits.
int directed_slot_count(int d);
int bidirected_slot_count(int d);
int hypothesis_bits(int d);
std::uint64_t hypothesis_count(int d);
int directed_slot(int d, NodeId u, NodeId v);
int bidirected_slot(int d, NodeId u, NodeId v); // absolute slot index
std::uint32_t encode(const HypothesisGraph& h);
HypothesisGraph decode(int d, std::uint32_t code);

enum class SeparationMode { sigma, d };
enum class SolverBackend { reduction, walk, packed };

struct SolveOptions {
    bool acyclic = false; // restrict the directed part to DAGs
    SeparationMode mode = SeparationMode::sigma;
    SolverBackend backend = SolverBackend::reduction;
    int max_nodes = 5;
    std::uint64_t argmin_cap = 1000000; // stored minimizers; the count stays exact
    int threads = 1;
    bool memoize = true;
};

// Sum over statements of the absolute weight of every claim the graph
// contradicts: a positive-lambda statement pays when the pair is
// sigma-connected given Z in the graph intervened on the statement's regime,
// a negative-lambda statement pays when it is separated. Hard statements
// contribute +infinity when violated.
double loss(const HypothesisGraph& h, const std::vector<IndependenceStatement>& statements);

struct SolveResult {
    double best_loss = 0.0;            // +infinity = no graph satisfies the hard constraints
    std::uint64_t argmin_count = 0;    // exact number of minimizers, 0 when infeasible
    std::vector<std::uint32_t> argmin; // lowest minimizer codes, ascending, capped
    int nodes = 0;
};

// Exact global minimum over the full hypothesis space. solve() enumerates
// exhaustively up to 4 nodes and branches-and-bounds at 5; the two searches
// are also exposed directly so they can be cross-checked.
SolveResult solve(const std::vector<IndependenceStatement>& statements, int num_nodes,
                  const SolveOptions& opt = {});
SolveResult solve_exhaustive(const std::vector<IndependenceStatement>& statements, int num_nodes,
                             const SolveOptions& opt = {});
SolveResult solve_branch_and_bound(const std::vector<IndependenceStatement>& statements,
                                   int num_nodes, const SolveOptions& opt = {});

enum class FeatureKind { directed, bidirected };

struct Feature {
    FeatureKind kind = FeatureKind::directed;
    NodeId from = 0;
    NodeId to = 0;       // bidirected features keep from < to
    bool present = true; // polarity being scored
};

struct FeatureConfidence {
    Feature feature;
    double score = 0.0;
};

// Confidence for a feature: optimal loss with the feature clamped to the
// opposite polarity minus optimal loss with the clamp agreeing, so positive
// scores support the queried polarity. Infinity minus infinity (both clamped
// problems infeasible) is defined as zero.
FeatureConfidence feature_confidence(const std::vector<IndependenceStatement>& statements,
                                     int num_nodes, const Feature& f, const SolveOptions& opt = {});

// Present-polarity confidence for every directed and bidirected edge slot,
// in slot order.
std::vector<FeatureConfidence> score_all_features(
    const std::vector<IndependenceStatement>& statements, int num_nodes,
    const SolveOptions& opt = {});

// {best_loss, argmin_count, features: [{kind, from, to, score}]} with names
// substituted for node ids and infinities spelled inf/-inf.
std::string report_to_json(const SolveResult& result,
                           const std::vector<FeatureConfidence>& features,
                           const std::vector<std::string>& names);

namespace detail {

// Separation verdict on the packed graph, bypassing SigmaCG construction:
// same walk rules as sigma_separated_walk, with coarsest sigma (or singleton
// classes when finest). Cross-validated against the public backends.
bool packed_separated(int d, std::uint32_t code, NodeId w, NodeId y, std::uint32_t z_mask,
                      bool finest);

} // namespace detail

} // namespace scg
