#pragma once

#include <limits>
#include <string>
#include <vector>

#include "scg/graph.hpp"
#include "scg/mscm.hpp"

namespace scg {

struct RankResult {
    std::vector<double> values;
    bool degenerate = false; // constant input column
};

// Maps value i to the standard-normal quantile of rank_i / (n + 1), ties
// averaged, making the column marginally standard normal up to
// discretization. Invariant under strictly monotone distortion of the input.
RankResult gauss_rank_transform(const std::vector<double>& column);

struct CorrelationTest {
    double rho = 0.0;
    double p_value = 1.0;
    bool degenerate = false; // zero-variance column or singular submatrix
};

// Partial correlation of columns w and y given the z columns, via inversion
// of the correlation submatrix, with the Fisher two-sided p-value. Columns
// must be rank-transformed already and share a length n > |z| + 3.
CorrelationTest partial_correlation_test(const std::vector<std::vector<double>>& columns, int w,
                                         int y, const std::vector<int>& z);

// log p - log alpha: positive supports independence, negative dependence,
// zero exactly at p = alpha. p is clamped to [1e-300, 1] first.
double weight(double p_value, double alpha);

struct IndependenceStatement {
    int w = 0;
    int y = 0;
    std::vector<int> z;      // condition set, sorted
    std::vector<int> regime; // intervention targets of the source regime, sorted
    double lambda = 0.0;     // +-infinity marks a hard constraint
    double p_value = std::numeric_limits<double>::quiet_NaN(); // NaN on hard constraints
};

struct StatementOptions {
    double alpha = 1e-3;
    int max_cond_size = -1;          // negative = all condition sets
    bool exclude_intervened = false; // drop statements touching their own regime's targets
};

// One statement per regime, unordered pair {w, y} and condition set
// Z subseteq V \ {w, y}, ordered by (regime, pair, Z) lexicographically.
std::vector<IndependenceStatement> generate_statements(const std::vector<Dataset>& datasets,
                                                       const StatementOptions& opt = {});

// Same statement grid, but verdicts come from sigma-separation in the
// ground-truth graph under each regime, with hard +-infinity weights.
std::vector<IndependenceStatement> oracle_statements(const SigmaCG& g,
                                                     const std::vector<std::vector<int>>& regimes,
                                                     const StatementOptions& opt = {});

struct StatementFile {
    std::vector<std::string> nodes;
    std::vector<IndependenceStatement> statements;
};

// CSV with columns w,y,Z,I,lambda,p_value; Z and I are semicolon-joined name
// lists, lambda accepts the tokens inf/-inf. A leading "# nodes:" line pins
// the variable set and its order; without it the nodes are collected from
// the statements in order of first appearance.
std::string statements_to_csv(const std::vector<IndependenceStatement>& statements,
                              const std::vector<std::string>& nodes);
StatementFile statements_from_csv(const std::string& text);
void save_statements(const std::vector<IndependenceStatement>& statements,
                     const std::vector<std::string>& nodes, const std::string& path);
StatementFile load_statements(const std::string& path);

} // namespace scg
