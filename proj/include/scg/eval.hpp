#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scg/discovery.hpp"

namespace scg {

// How separation claims are checked when scoring candidate graphs: sigma
// keeps loops as classes, d_cyclic uses singleton classes on the full search
// space, d_acyclic additionally restricts the search to acyclic graphs.
enum class Encoding { sigma, d_cyclic, d_acyclic };

std::string encoding_name(Encoding e);
Encoding encoding_from_name(const std::string& name);

struct ExperimentConfig {
    int d = 4;              // observed nodes
    int k = 1;              // latent confounders
    double p = 0.3;         // edge density
    int n = 10000;          // samples per regime
    int interventions = 0;  // single-target regimes beyond the observational one
    int replicates = 50;    // models simulated
    double alpha = 1e-3;    // independence threshold
    Encoding encoding = Encoding::sigma;
    std::uint64_t seed = 0;

    bool operator==(const ExperimentConfig&) const = default;
};

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);

struct ScoredFeature {
    int model_id = 0;
    Feature feature;
    double score = 0.0;
    bool label = false; // feature present in the generating graph
};

struct ModelRecord {
    int model_id = 0;
    std::uint64_t model_seed = 0;              // seed that produced the kept model
    std::vector<std::vector<int>> regimes;     // observational first, then targets
    int regenerated = 0;                       // models discarded before this one
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<ScoredFeature> scores; // replicate-major, slot order within
    std::vector<ModelRecord> models;
    int skipped = 0; // total discarded models across replicates
};

// One full pass over the protocol: per replicate, draw a model, sample every
// regime, run the independence tests, score all features, and pair scores
// with ground-truth labels. Deterministic given the config; the thread count
// only spreads replicates over workers.
ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads = 1);

struct CurvePoint {
    double threshold = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct Curves {
    std::vector<CurvePoint> points; // one per distinct score, descending
    double auc = 0.0;               // trapezoids under the ROC curve
    double average_precision = 0.0; // step-interpolated area under PR
};

// Threshold sweep over the scores, ties grouped into one step. Infinite
// scores sort to the extremes. Throws when the labels are all equal, when
// sizes differ, or when a score is NaN.
Curves roc_pr(const std::vector<double>& scores, const std::vector<bool>& labels);

// Pooled scores and labels of one feature kind, in result order.
std::pair<std::vector<double>, std::vector<bool>> kind_scores(const ExperimentResult& result,
                                                              FeatureKind kind);

// Curves per feature kind; a kind whose labels are degenerate stays empty.
struct ExperimentCurves {
    std::optional<Curves> directed;
    std::optional<Curves> bidirected;
};
ExperimentCurves experiment_curves(const ExperimentResult& result);

std::string scores_to_csv(const ExperimentResult& result);
std::string curves_to_csv(const ExperimentConfig& cfg, const ExperimentCurves& curves);
std::string summary_to_json(const ExperimentResult& result, const ExperimentCurves& curves);

// scores.csv, curves.csv and summary.json under out_dir, which must exist.
// Identical configs produce byte-identical files.
void write_experiment_files(const ExperimentResult& result, const std::string& out_dir);

} // namespace scg
