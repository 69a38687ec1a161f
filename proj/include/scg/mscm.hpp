#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "scg/graph.hpp"

namespace scg {

struct Latent {
    std::string name;
    std::vector<int> children; // sorted observed indices
    bool operator==(const Latent&) const = default;
};

// Structural model x_v = tanh(sum_k weights[v][k] * x_k + bias[v]) + e_v where
// e_v adds up the values of v's latent parents. Latents are standard normal
// and enter only through that additive term, so the weight matrix covers the
// observed columns.
struct MSCM {
    std::vector<std::string> observed;
    std::vector<Latent> latents;
    std::set<std::pair<int, int>> edges; // directed, observed -> observed
    std::vector<std::vector<double>> weights;
    std::vector<double> bias;
    std::uint64_t seed = 0;

    int num_observed() const { return static_cast<int>(observed.size()); }
    int num_latents() const { return static_cast<int>(latents.size()); }
    int node(const std::string& name) const;
    std::vector<int> parents(int v) const;
    // per observed node, indices of the latents feeding it
    std::vector<std::vector<int>> latent_parents() const;
    bool operator==(const MSCM&) const = default;
};

struct InterventionSpec {
    std::vector<int> targets; // sorted, unique

    InterventionSpec() = default;
    InterventionSpec(std::initializer_list<int> ts) : InterventionSpec(std::vector<int>(ts)) {}
    explicit InterventionSpec(std::vector<int> ts);
    bool observational() const { return targets.empty(); }
};

std::vector<double> sample_l1_ball(int dim, std::mt19937_64& rng);

// d observed nodes, k latent confounders over distinct pairs, edge density p.
// Nodes untouched by a confounder get a private singleton latent so every
// observed node has a noise source. Weight rows are uniform in the L1 ball,
// which keeps every row sum below one.
MSCM random_mscm(int d, int k, double p, std::uint64_t seed);

struct ContractionReport {
    bool ok;
    double max_row_sum;
    std::string message;
};
ContractionReport check_contraction(const MSCM& m);

struct FixedPointResult {
    std::vector<double> x;
    int iterations = 0;
    double residual = 0.0;
    bool converged = true;
    std::vector<double> residuals; // one entry per sweep
};

inline constexpr double kFixedPointTol = 1e-12;
inline constexpr int kFixedPointCap = 10000;

// Jacobi iteration from `init` (zeros if empty); entries of `fixed` are held
// constant, mirroring a perfect intervention on those nodes.
FixedPointResult solve_fixed_point(const MSCM& m, const std::vector<double>& latent_values,
                                   const std::vector<std::pair<int, double>>& fixed = {},
                                   const std::vector<double>& init = {});

// Cuts every edge into the targets (observed and latent), drops latents left
// childless, and gives each target a fresh do-latent carrying its
// standard-normal replacement value.
MSCM intervene(const MSCM& m, const InterventionSpec& spec);

// Observed directed edges, a bidirected edge per latently confounded pair,
// coarsest sigma classes.
SigmaCG induced_sigma_cg(const MSCM& m);

struct Dataset {
    std::vector<std::string> columns;
    std::vector<int> targets; // regime; empty = observational
    std::vector<std::vector<double>> rows;
    std::uint64_t seed = 0;
    std::uint64_t model_seed = 0;
    int max_iterations = 0;
    double max_residual = 0.0;
};

// n rows, each from fresh per-row latent and replacement draws; rows are
// seeded independently, so any subset can be reproduced in isolation.
Dataset sample(const MSCM& m, int n, const InterventionSpec& regime, std::uint64_t seed);

std::string mscm_to_json(const MSCM& m);
MSCM mscm_from_json(const std::string& text);
MSCM load_mscm(const std::string& path);
void save_mscm(const MSCM& m, const std::string& path);

// CSV with the observed names as header; a companion <path minus .csv>.json
// manifest records regime, seed and convergence stats.
void save_dataset(const Dataset& ds, const std::string& csv_path,
                  const std::string& model_ref = "");
Dataset load_dataset(const std::string& csv_path);

} // namespace scg
