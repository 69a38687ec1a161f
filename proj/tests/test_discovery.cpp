#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "json.hpp"
#include "scg/ci.hpp"
#include "scg/discovery.hpp"
#include "scg/graph.hpp"
#include "scg/mscm.hpp"

using namespace scg;
using fixtures::reference_graph;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

IndependenceStatement stmt(int w, int y, std::vector<int> z, std::vector<int> regime,
                           double lambda) {
    IndependenceStatement s;
    s.w = w;
    s.y = y;
    s.z = std::move(z);
    s.regime = std::move(regime);
    s.lambda = lambda;
    return s;
}

// Random statements with dyadic weights, so sums of weights are exact and
// results can be compared across algorithms with plain equality.
std::vector<IndependenceStatement> random_statements(int d, int count, std::mt19937_64& rng,
                                                     double hard_fraction = 0.0) {
    std::uniform_int_distribution<int> node(0, d - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double mags[] = {0.25, 0.5, 1.0, 2.0, 4.0};
    std::vector<IndependenceStatement> out;
    while (static_cast<int>(out.size()) < count) {
        const int w = node(rng);
        const int y = node(rng);
        if (w == y) continue;
        std::vector<int> z, regime;
        for (int v = 0; v < d; ++v) {
            if (v == w || v == y) continue;
            if (u(rng) < 0.3) z.push_back(v);
        }
        if (u(rng) < 0.4) regime.push_back(node(rng));
        std::sort(regime.begin(), regime.end());
        regime.erase(std::unique(regime.begin(), regime.end()), regime.end());
        double lambda = mags[std::uniform_int_distribution<int>(0, 4)(rng)];
        if (u(rng) < hard_fraction) lambda = kInf;
        if (u(rng) < 0.5) lambda = -lambda;
        out.push_back(stmt(w, y, std::move(z), std::move(regime), lambda));
    }
    return out;
}

// Reference minimizer computed straight from the public loss, one graph at a
// time. Only sensible for small d.
SolveResult brute_force(const std::vector<IndependenceStatement>& stmts, int d,
                        std::uint64_t cap = 1000000) {
    SolveResult r;
    r.nodes = d;
    r.best_loss = kInf;
    for (std::uint64_t c = 0; c < hypothesis_count(d); ++c) {
        const auto code = static_cast<std::uint32_t>(c);
        const double L = loss(decode(d, code), stmts);
        if (L < r.best_loss) {
            r.best_loss = L;
            r.argmin_count = 1;
            r.argmin.assign(1, code);
        } else if (L == r.best_loss && L != kInf) {
            ++r.argmin_count;
            if (r.argmin.size() < cap) r.argmin.push_back(code);
        }
    }
    if (r.best_loss == kInf) {
        r.argmin_count = 0;
        r.argmin.clear();
    }
    return r;
}

bool same_result(const SolveResult& a, const SolveResult& b) {
    return a.best_loss == b.best_loss && a.argmin_count == b.argmin_count && a.argmin == b.argmin &&
           a.nodes == b.nodes;
}

std::vector<IndependenceStatement> scaled(std::vector<IndependenceStatement> stmts, double c) {
    for (auto& s : stmts) s.lambda *= c;
    return stmts;
}

bool graphs_equal(const SigmaCG& a, const SigmaCG& b) {
    if (a.num_nodes() != b.num_nodes()) return false;
    if (a.directed() != b.directed() || a.bidirected() != b.bidirected() ||
        a.undirected() != b.undirected())
        return false;
    for (NodeId u = 0; u < a.num_nodes(); ++u)
        for (NodeId v = 0; v < a.num_nodes(); ++v)
            if (a.same_class(u, v) != b.same_class(u, v)) return false;
    return true;
}

std::vector<IndependenceStatement> oracle_instance(int d, int k, unsigned seed,
                                                   std::vector<std::vector<int>> regimes,
                                                   HypothesisGraph* truth = nullptr) {
    const MSCM m = random_mscm(d, k, 0.3, seed);
    const SigmaCG g = induced_sigma_cg(m);
    if (truth) *truth = hypothesis_from(g);
    return oracle_statements(g, regimes);
}

} // namespace

TEST_CASE("slot layout") {
    CHECK(directed_slot_count(2) == 2);
    CHECK(bidirected_slot_count(2) == 1);
    CHECK(hypothesis_bits(2) == 3);
    CHECK(hypothesis_count(2) == 8);
    CHECK(hypothesis_bits(4) == 18);
    CHECK(hypothesis_bits(5) == 30);
    CHECK(hypothesis_count(5) == (std::uint64_t{1} << 30));

    CHECK(directed_slot(4, 0, 1) == 0);
    CHECK(directed_slot(4, 0, 3) == 2);
    CHECK(directed_slot(4, 1, 0) == 3);
    CHECK(directed_slot(4, 3, 2) == 11);
    CHECK(bidirected_slot(4, 0, 1) == 12);
    CHECK(bidirected_slot(4, 2, 3) == 17);
    CHECK(bidirected_slot(4, 3, 2) == bidirected_slot(4, 2, 3));

    for (int d = 2; d <= 5; ++d) {
        std::set<int> seen;
        for (NodeId u = 0; u < d; ++u)
            for (NodeId v = 0; v < d; ++v)
                if (u != v) seen.insert(directed_slot(d, u, v));
        CHECK(static_cast<int>(seen.size()) == directed_slot_count(d));
        CHECK(*seen.begin() == 0);
        CHECK(*seen.rbegin() == directed_slot_count(d) - 1);
        for (NodeId u = 0; u < d; ++u)
            for (NodeId v = u + 1; v < d; ++v) seen.insert(bidirected_slot(d, u, v));
        CHECK(static_cast<int>(seen.size()) == hypothesis_bits(d));
        CHECK(*seen.rbegin() == hypothesis_bits(d) - 1);
    }

    CHECK_THROWS_AS(directed_slot(3, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(directed_slot(3, 0, 3), std::invalid_argument);
    CHECK_THROWS_AS(bidirected_slot(3, 2, 2), std::invalid_argument);
    CHECK_THROWS_AS(bidirected_slot(3, -1, 0), std::invalid_argument);
}

TEST_CASE("codes round trip") {
    for (int d = 1; d <= 3; ++d) {
        for (std::uint64_t c = 0; c < hypothesis_count(d); ++c) {
            const auto code = static_cast<std::uint32_t>(c);
            const HypothesisGraph h = decode(d, code);
            CHECK(h.nodes == d);
            CHECK(validate(h).ok);
            CHECK(encode(h) == code);
        }
    }
    std::mt19937_64 rng(2024);
    for (int d = 4; d <= 5; ++d) {
        std::uniform_int_distribution<std::uint64_t> pick(0, hypothesis_count(d) - 1);
        for (int i = 0; i < 400; ++i) {
            const auto code = static_cast<std::uint32_t>(pick(rng));
            CHECK(encode(decode(d, code)) == code);
        }
    }

    SUBCASE("decode rejects bits beyond the slot count") {
        CHECK_THROWS_AS(decode(2, 8), std::invalid_argument);
        CHECK_THROWS_AS(decode(3, 1u << 9), std::invalid_argument);
        CHECK_THROWS_AS(decode(6, 0), std::invalid_argument);
    }
    SUBCASE("encode rejects graphs it cannot represent") {
        HypothesisGraph big;
        big.nodes = 6;
        CHECK_THROWS_AS(encode(big), std::invalid_argument);
        HypothesisGraph bad;
        bad.nodes = 3;
        bad.directed.insert({1, 1});
        CHECK_THROWS_AS(encode(bad), std::invalid_argument);
    }
    SUBCASE("specific slots map to the expected edges") {
        const auto h = decode(3, (1u << directed_slot(3, 2, 0)) | (1u << bidirected_slot(3, 0, 1)));
        CHECK(h.directed == std::set<std::pair<NodeId, NodeId>>{{2, 0}});
        CHECK(h.bidirected == std::set<std::pair<NodeId, NodeId>>{{0, 1}});
    }
}

TEST_CASE("hypothesis validation") {
    HypothesisGraph h;
    h.nodes = 3;
    h.directed = {{0, 1}, {1, 2}};
    h.bidirected = {{0, 2}};
    CHECK(validate(h).ok);

    SUBCASE("self-loops and ranges") {
        HypothesisGraph bad = h;
        bad.directed.insert({2, 2});
        CHECK(!validate(bad).ok);
        bad = h;
        bad.directed.insert({0, 3});
        CHECK(!validate(bad).ok);
        bad = h;
        bad.bidirected.insert({1, 1});
        CHECK(!validate(bad).ok);
        bad = h;
        bad.nodes = -1;
        CHECK(!validate(bad).ok);
    }
    SUBCASE("bidirected pairs must be stored low-high") {
        HypothesisGraph bad = h;
        bad.bidirected.insert({2, 1});
        CHECK(!validate(bad).ok);
    }
    SUBCASE("acyclicity looks only at directed edges") {
        CHECK(is_acyclic(h));
        HypothesisGraph cyc = h;
        cyc.directed.insert({2, 0});
        CHECK(!is_acyclic(cyc));
        HypothesisGraph two;
        two.nodes = 2;
        two.directed = {{0, 1}, {1, 0}};
        CHECK(!is_acyclic(two));
        two.directed.clear();
        two.bidirected = {{0, 1}};
        CHECK(is_acyclic(two));
    }
}

TEST_CASE("conversion to the graph calculus") {
    SUBCASE("classes are the strongly connected components") {
        HypothesisGraph h;
        h.nodes = 3;
        h.directed = {{0, 1}, {1, 0}, {1, 2}};
        h.bidirected = {{0, 2}};
        const SigmaCG g = to_sigma_cg(h, {"a", "b", "c"});
        CHECK(g.name(0) == "a");
        CHECK(g.has_directed(0, 1));
        CHECK(g.has_directed(1, 0));
        CHECK(g.has_bidirected(0, 2));
        CHECK(g.same_class(0, 1));
        CHECK(!g.same_class(0, 2));
        CHECK(g.undirected().empty());
    }
    SUBCASE("round trips through hypothesis_from") {
        std::mt19937_64 rng(77);
        for (int d = 2; d <= 5; ++d) {
            std::uniform_int_distribution<std::uint64_t> pick(0, hypothesis_count(d) - 1);
            for (int i = 0; i < 50; ++i) {
                const HypothesisGraph h = decode(d, static_cast<std::uint32_t>(pick(rng)));
                CHECK(hypothesis_from(to_sigma_cg(h)) == h);
            }
        }
        const SigmaCG ref = reference_graph();
        const HypothesisGraph h = hypothesis_from(ref);
        CHECK(h.nodes == 8);
        CHECK(h.directed.count({1, 2}) == 1);
        CHECK(h.bidirected.count({3, 6}) == 1);
        const SigmaCG back = to_sigma_cg(h);
        CHECK(graphs_equal(back, ref));
    }
    SUBCASE("undirected edges have no hypothesis form") {
        SigmaCG g(2);
        g.add_undirected(0, 1);
        CHECK_THROWS_AS(hypothesis_from(g), std::invalid_argument);
    }
    SUBCASE("name list must match the node count") {
        HypothesisGraph h;
        h.nodes = 2;
        CHECK_THROWS_AS(to_sigma_cg(h, {"a"}), std::invalid_argument);
    }
}

TEST_CASE("intervening on a hypothesis") {
    const HypothesisGraph h = hypothesis_from(reference_graph());

    SUBCASE("surgery removes incoming and confounding edges at the target") {
        const SigmaCG g = intervened_graph(h, {3});
        CHECK(!g.has_directed(2, 3));
        CHECK(g.has_directed(3, 4));
        CHECK(g.has_directed(3, 7));
        CHECK(!g.has_bidirected(3, 5));
        CHECK(!g.has_bidirected(3, 6));
        CHECK(g.has_bidirected(0, 1));
        CHECK(g.has_bidirected(5, 6));
        // cutting 2 -> 3 breaks the loop through 1, 2, 3, 4
        CHECK(!g.same_class(1, 2));
        CHECK(!g.same_class(3, 4));
        CHECK(g.same_class(5, 6));
    }
    SUBCASE("empty target set returns the plain graph") {
        CHECK(graphs_equal(intervened_graph(h, {}), to_sigma_cg(h)));
    }
    SUBCASE("intervening everywhere leaves no edges") {
        std::vector<NodeId> all(h.nodes);
        std::iota(all.begin(), all.end(), 0);
        const SigmaCG g = intervened_graph(h, all);
        CHECK(g.directed().empty());
        CHECK(g.bidirected().empty());
    }
    SUBCASE("agrees with surgery on the full calculus") {
        std::mt19937_64 rng(31);
        std::uniform_int_distribution<std::uint64_t> pick(0, hypothesis_count(4) - 1);
        std::uniform_int_distribution<int> node(0, 3);
        for (int i = 0; i < 60; ++i) {
            const HypothesisGraph hh = decode(4, static_cast<std::uint32_t>(pick(rng)));
            std::vector<NodeId> targets;
            for (int v = 0; v < 4; ++v)
                if (std::bernoulli_distribution(0.4)(rng)) targets.push_back(v);
            CHECK(graphs_equal(intervened_graph(hh, targets),
                               intervened_graph(to_sigma_cg(hh), targets)));
        }
    }
    SUBCASE("targets are range checked") {
        CHECK_THROWS_AS(intervened_graph(h, {8}), std::out_of_range);
        CHECK_THROWS_AS(intervened_graph(h, {-1}), std::out_of_range);
    }
}

TEST_CASE("packed separation mirrors the public backends") {
    std::mt19937_64 rng(4242);
    for (int d = 2; d <= 5; ++d) {
        std::uniform_int_distribution<std::uint64_t> pick(0, hypothesis_count(d) - 1);
        std::uniform_int_distribution<int> node(0, d - 1);
        std::uniform_int_distribution<std::uint32_t> subset(0, (1u << d) - 1);
        for (int i = 0; i < 300; ++i) {
            const auto code = static_cast<std::uint32_t>(pick(rng));
            const HypothesisGraph h = decode(d, code);
            const int w = node(rng);
            const int y = node(rng);
            const std::uint32_t z_mask = subset(rng);
            NodeSet z;
            for (int v = 0; v < d; ++v)
                if (z_mask >> v & 1) z.push_back(v);
            const SeparationQuery q({w}, {y}, z);
            for (bool finest : {false, true}) {
                SigmaCG g = to_sigma_cg(h);
                if (finest) g = finest_sigma(g);
                const bool expect = sigma_separated(g, q, SepBackend::reduction);
                CHECK(detail::packed_separated(d, code, w, y, z_mask, finest) == expect);
                CHECK(sigma_separated(g, q, SepBackend::walk) == expect);
            }
        }
    }
}

TEST_CASE("loss") {
    SUBCASE("no statements cost nothing") {
        for (std::uint32_t code = 0; code < 8; ++code) CHECK(loss(decode(2, code), {}) == 0.0);
    }
    SUBCASE("marginal claims on two nodes") {
        const auto wants_sep = stmt(0, 1, {}, {}, 5.0);
        const auto wants_dep = stmt(0, 1, {}, {}, -2.0);
        for (std::uint32_t code = 0; code < 8; ++code) {
            const HypothesisGraph h = decode(2, code);
            const bool any_edge = code != 0;
            CHECK(loss(h, {wants_sep}) == (any_edge ? 5.0 : 0.0));
            CHECK(loss(h, {wants_dep}) == (any_edge ? 0.0 : 2.0));
        }
    }
    SUBCASE("hard violations are infinite") {
        const HypothesisGraph h = decode(2, 1); // one directed edge
        CHECK(loss(h, {stmt(0, 1, {}, {}, kInf)}) == kInf);
        CHECK(loss(h, {stmt(0, 1, {}, {}, -kInf)}) == 0.0);
    }
    SUBCASE("zero-weight statements are ignored") {
        CHECK(loss(decode(2, 1), {stmt(0, 1, {}, {}, 0.0)}) == 0.0);
    }
    SUBCASE("the generating graph satisfies its own oracle") {
        const SigmaCG ref = reference_graph();
        StatementOptions so;
        so.max_cond_size = 2;
        const auto stmts = oracle_statements(ref, {{}, {3}}, so);
        REQUIRE(stmts.size() > 100);
        CHECK(loss(hypothesis_from(ref), stmts) == 0.0);
    }
    SUBCASE("additive over concatenation and linear in the weights") {
        std::mt19937_64 rng(5);
        const auto a = random_statements(3, 12, rng);
        const auto b = random_statements(3, 9, rng);
        auto both = a;
        both.insert(both.end(), b.begin(), b.end());
        for (std::uint32_t code : {0u, 17u, 300u, 511u}) {
            const HypothesisGraph h = decode(3, code);
            CHECK(loss(h, both) == loss(h, a) + loss(h, b));
            CHECK(loss(h, scaled(a, 2.0)) == 2.0 * loss(h, a));
        }
    }
    SUBCASE("statements are checked against the graph") {
        const HypothesisGraph h = decode(3, 0);
        CHECK_THROWS_AS(loss(h, {stmt(0, 0, {}, {}, 1.0)}), std::invalid_argument);
        CHECK_THROWS_AS(loss(h, {stmt(0, 3, {}, {}, 1.0)}), std::invalid_argument);
        CHECK_THROWS_AS(loss(h, {stmt(0, 1, {1}, {}, 1.0)}), std::invalid_argument);
        CHECK_THROWS_AS(loss(h, {stmt(0, 1, {}, {3}, 1.0)}), std::invalid_argument);
        CHECK_THROWS_AS(loss(h, {stmt(0, 1, {}, {}, std::nan(""))}), std::invalid_argument);
    }
}

TEST_CASE("exhaustive search") {
    SolveOptions packed;
    packed.backend = SolverBackend::packed;

    SUBCASE("empty statement lists keep every graph optimal") {
        const auto r = solve_exhaustive({}, 2, packed);
        CHECK(r.best_loss == 0.0);
        CHECK(r.argmin_count == 8);
        std::vector<std::uint32_t> all(8);
        std::iota(all.begin(), all.end(), 0);
        CHECK(r.argmin == all);
        CHECK(r.nodes == 2);

        const auto r1 = solve_exhaustive({}, 1, packed);
        CHECK(r1.argmin_count == 1);
        CHECK(r1.argmin == std::vector<std::uint32_t>{0});
    }
    SUBCASE("the cap limits stored codes but not the count") {
        SolveOptions opt = packed;
        opt.argmin_cap = 3;
        const auto r = solve_exhaustive({}, 2, opt);
        CHECK(r.argmin_count == 8);
        CHECK(r.argmin == std::vector<std::uint32_t>{0, 1, 2});
    }
    SUBCASE("a single marginal claim pins the pair") {
        const auto r = solve_exhaustive({stmt(0, 1, {}, {}, 3.0)}, 2, packed);
        CHECK(r.best_loss == 0.0);
        CHECK(r.argmin_count == 1);
        CHECK(r.argmin == std::vector<std::uint32_t>{0});
        const auto rd = solve_exhaustive({stmt(0, 1, {}, {}, -3.0)}, 2, packed);
        CHECK(rd.argmin_count == 7);
    }
    SUBCASE("matches the one-graph-at-a-time reference") {
        std::mt19937_64 rng(99);
        for (int rep = 0; rep < 6; ++rep) {
            const auto stmts = random_statements(3, 14, rng, rep % 2 ? 0.2 : 0.0);
            const auto expected = brute_force(stmts, 3);
            for (auto backend :
                 {SolverBackend::reduction, SolverBackend::walk, SolverBackend::packed}) {
                SolveOptions opt;
                opt.backend = backend;
                CHECK(same_result(solve_exhaustive(stmts, 3, opt), expected));
            }
        }
    }
    SUBCASE("unsatisfiable hard constraints report infeasibility") {
        const std::vector<IndependenceStatement> stmts = {stmt(0, 1, {}, {}, kInf),
                                                          stmt(0, 1, {}, {}, -kInf)};
        const auto r = solve_exhaustive(stmts, 3, packed);
        CHECK(r.best_loss == kInf);
        CHECK(r.argmin_count == 0);
        CHECK(r.argmin.empty());
    }
    SUBCASE("oracle statements recover the generating graph") {
        HypothesisGraph truth;
        const auto stmts = oracle_instance(4, 1, 42, {{}, {0}, {1}, {2}, {3}}, &truth);
        const auto r = solve_exhaustive(stmts, 4, packed);
        CHECK(r.best_loss == 0.0);
        CHECK(r.argmin_count >= 1);
        CHECK(std::count(r.argmin.begin(), r.argmin.end(), encode(truth)) == 1);
        for (std::size_t i = 0; i < r.argmin.size(); i += 2)
            CHECK(loss(decode(4, r.argmin[i]), stmts) == 0.0);
    }
    SUBCASE("the acyclic restriction enumerates directed acyclic graphs") {
        SolveOptions opt = packed;
        opt.acyclic = true;
        CHECK(solve_exhaustive({}, 2, opt).argmin_count == 6);
        const auto r3 = solve_exhaustive({}, 3, opt);
        CHECK(r3.argmin_count == 200); // 25 labeled DAGs on 3 nodes, free bidirected bits
        for (auto code : r3.argmin) CHECK(is_acyclic(decode(3, code)));
    }
    SUBCASE("partition modes coincide on acyclic graphs") {
        std::mt19937_64 rng(15);
        const auto stmts = random_statements(3, 12, rng);
        SolveOptions sig = packed;
        sig.acyclic = true;
        SolveOptions dsep = sig;
        dsep.mode = SeparationMode::d;
        CHECK(same_result(solve_exhaustive(stmts, 3, sig), solve_exhaustive(stmts, 3, dsep)));
    }
}

TEST_CASE("branching search agrees with exhaustion") {
    std::mt19937_64 rng(123);

    SUBCASE("finite weights") {
        for (int rep = 0; rep < 12; ++rep) {
            const auto stmts = random_statements(3, 16, rng);
            SolveOptions opt;
            opt.backend = rep % 2 ? SolverBackend::packed : SolverBackend::reduction;
            CHECK(same_result(solve_branch_and_bound(stmts, 3, opt),
                              solve_exhaustive(stmts, 3, opt)));
        }
    }
    SUBCASE("hard statements mixed in") {
        for (int rep = 0; rep < 8; ++rep) {
            const auto stmts = random_statements(3, 16, rng, 0.3);
            SolveOptions opt;
            opt.backend = SolverBackend::packed;
            CHECK(same_result(solve_branch_and_bound(stmts, 3, opt),
                              solve_exhaustive(stmts, 3, opt)));
        }
    }
    SUBCASE("acyclic and finest-partition variants") {
        for (int rep = 0; rep < 6; ++rep) {
            const auto stmts = random_statements(3, 14, rng, 0.15);
            SolveOptions opt;
            opt.backend = SolverBackend::packed;
            opt.acyclic = rep % 2 == 0;
            if (rep % 3 == 0) opt.mode = SeparationMode::d;
            CHECK(same_result(solve_branch_and_bound(stmts, 3, opt),
                              solve_exhaustive(stmts, 3, opt)));
        }
    }
    SUBCASE("four nodes") {
        for (int rep = 0; rep < 3; ++rep) {
            const auto stmts = random_statements(4, 24, rng, rep == 2 ? 0.25 : 0.0);
            SolveOptions opt;
            opt.backend = SolverBackend::packed;
            CHECK(same_result(solve_branch_and_bound(stmts, 4, opt),
                              solve_exhaustive(stmts, 4, opt)));
        }
    }
    SUBCASE("subtree collapse keeps codes ascending") {
        SolveOptions opt;
        opt.backend = SolverBackend::packed;
        const auto r = solve_branch_and_bound({}, 3, opt);
        CHECK(r.best_loss == 0.0);
        CHECK(r.argmin_count == 512);
        CHECK(std::is_sorted(r.argmin.begin(), r.argmin.end()));
        CHECK(r.argmin.size() == 512);
        opt.argmin_cap = 10;
        const auto capped = solve_branch_and_bound({}, 3, opt);
        CHECK(capped.argmin_count == 512);
        CHECK(capped.argmin == std::vector<std::uint32_t>(r.argmin.begin(), r.argmin.begin() + 10));
    }
    SUBCASE("caps agree with the exhaustive caps") {
        const auto stmts = random_statements(3, 10, rng);
        SolveOptions opt;
        opt.backend = SolverBackend::packed;
        opt.argmin_cap = 7;
        CHECK(same_result(solve_branch_and_bound(stmts, 3, opt), solve_exhaustive(stmts, 3, opt)));
    }
    SUBCASE("infeasible instances") {
        const std::vector<IndependenceStatement> stmts = {stmt(0, 2, {1}, {}, kInf),
                                                          stmt(0, 2, {1}, {}, -kInf)};
        SolveOptions opt;
        opt.backend = SolverBackend::packed;
        const auto r = solve_branch_and_bound(stmts, 3, opt);
        CHECK(r.best_loss == kInf);
        CHECK(r.argmin_count == 0);
        CHECK(r.argmin.empty());
    }
}

TEST_CASE("five-node search") {
    HypothesisGraph truth;
    const auto stmts = oracle_instance(5, 2, 23, {{}, {0}, {1}, {2}, {3}, {4}}, &truth);
    SolveOptions opt;
    opt.backend = SolverBackend::packed;
    const auto r = solve(stmts, 5, opt);
    CHECK(r.best_loss == 0.0);
    CHECK(r.argmin_count >= 1);
    CHECK(std::count(r.argmin.begin(), r.argmin.end(), encode(truth)) == 1);
    for (auto code : r.argmin) CHECK(loss(decode(5, code), stmts) == 0.0);
}

TEST_CASE("search options") {
    std::mt19937_64 rng(321);
    const auto stmts = random_statements(3, 15, rng, 0.1);

    SUBCASE("memoization does not change answers") {
        SolveOptions on, off;
        on.backend = off.backend = SolverBackend::packed;
        off.memoize = false;
        CHECK(same_result(solve_exhaustive(stmts, 3, on), solve_exhaustive(stmts, 3, off)));
        CHECK(same_result(solve_branch_and_bound(stmts, 3, on),
                          solve_branch_and_bound(stmts, 3, off)));
    }
    SUBCASE("thread count does not change answers") {
        SolveOptions one;
        one.backend = SolverBackend::packed;
        for (int threads : {2, 3, 8}) {
            SolveOptions many = one;
            many.threads = threads;
            CHECK(same_result(solve_exhaustive(stmts, 3, one), solve_exhaustive(stmts, 3, many)));
            CHECK(same_result(solve_branch_and_bound(stmts, 3, one),
                              solve_branch_and_bound(stmts, 3, many)));
        }
        const auto empty_many = [&] {
            SolveOptions o = one;
            o.threads = 4;
            return solve_branch_and_bound({}, 3, o);
        }();
        CHECK(empty_many.argmin_count == 512);
        CHECK(std::is_sorted(empty_many.argmin.begin(), empty_many.argmin.end()));
    }
    SUBCASE("argument validation") {
        CHECK_THROWS_AS(solve({}, 0, {}), std::invalid_argument);
        CHECK_THROWS_AS(solve({}, 6, {}), std::invalid_argument);
        SolveOptions small;
        small.max_nodes = 3;
        CHECK_THROWS_AS(solve({}, 4, small), std::invalid_argument);
        SolveOptions bad;
        bad.threads = 0;
        CHECK_THROWS_AS(solve({}, 2, bad), std::invalid_argument);
    }
}

TEST_CASE("feature confidence") {
    SolveOptions packed;
    packed.backend = SolverBackend::packed;

    SUBCASE("no evidence, no confidence") {
        for (const auto& fc : score_all_features({}, 3, packed)) CHECK(fc.score == 0.0);
    }
    SUBCASE("interventional claims identify both directions") {
        // dependence surviving an intervention on 0 needs 0 -> 1; on 1, 1 -> 0
        const std::vector<IndependenceStatement> stmts = {stmt(0, 1, {}, {0}, -kInf),
                                                          stmt(0, 1, {}, {1}, -kInf)};
        const auto fwd =
            feature_confidence(stmts, 2, {FeatureKind::directed, 0, 1, true}, packed);
        const auto rev =
            feature_confidence(stmts, 2, {FeatureKind::directed, 1, 0, true}, packed);
        const auto conf =
            feature_confidence(stmts, 2, {FeatureKind::bidirected, 0, 1, true}, packed);
        CHECK(fwd.score == kInf);
        CHECK(rev.score == kInf);
        CHECK(conf.score == 0.0);

        const auto absent =
            feature_confidence(stmts, 2, {FeatureKind::directed, 0, 1, false}, packed);
        CHECK(absent.score == -kInf);
    }
    SUBCASE("a hard independence refutes every connecting edge") {
        const std::vector<IndependenceStatement> stmts = {stmt(0, 1, {}, {}, kInf)};
        for (const auto& fc : score_all_features(stmts, 2, packed)) CHECK(fc.score == -kInf);
    }
    SUBCASE("a single soft dependence identifies nothing") {
        const std::vector<IndependenceStatement> stmts = {stmt(0, 1, {}, {}, -1.0)};
        for (const auto& fc : score_all_features(stmts, 2, packed)) CHECK(fc.score == 0.0);
    }
    SUBCASE("statements about one pair say nothing about others") {
        const std::vector<IndependenceStatement> stmts = {stmt(0, 1, {}, {}, -kInf)};
        const auto far =
            feature_confidence(stmts, 3, {FeatureKind::directed, 0, 2, true}, packed);
        CHECK(far.score == 0.0);
        const auto bi = feature_confidence(stmts, 3, {FeatureKind::bidirected, 1, 2, true}, packed);
        CHECK(bi.score == 0.0);
    }
    SUBCASE("matches clamped minima computed by brute force") {
        std::mt19937_64 rng(710);
        const auto stmts = random_statements(3, 14, rng, 0.15);
        const int bits = hypothesis_bits(3);
        std::vector<double> with(bits, kInf), without(bits, kInf);
        for (std::uint32_t code = 0; code < 512; ++code) {
            const double L = loss(decode(3, code), stmts);
            for (int s = 0; s < bits; ++s) {
                double& cell = (code >> s & 1) ? with[s] : without[s];
                cell = std::min(cell, L);
            }
        }
        const auto scores = score_all_features(stmts, 3, packed);
        REQUIRE(static_cast<int>(scores.size()) == bits);
        for (int s = 0; s < bits; ++s) {
            const double expect =
                (with[s] == kInf && without[s] == kInf) ? 0.0 : without[s] - with[s];
            CHECK(scores[s].score == expect);
            const auto one = feature_confidence(stmts, 3, scores[s].feature, packed);
            CHECK(one.score == scores[s].score);
        }
    }
    SUBCASE("scales with the statement weights") {
        std::mt19937_64 rng(11);
        const auto stmts = random_statements(3, 12, rng);
        const auto base = score_all_features(stmts, 3, packed);
        const auto twice = score_all_features(scaled(stmts, 2.0), 3, packed);
        for (std::size_t i = 0; i < base.size(); ++i)
            CHECK(twice[i].score == 2.0 * base[i].score);
    }
    SUBCASE("contradictory evidence leaves every feature open") {
        const std::vector<IndependenceStatement> stmts = {stmt(0, 1, {}, {}, kInf),
                                                          stmt(0, 1, {}, {}, -kInf)};
        for (const auto& fc : score_all_features(stmts, 3, packed)) CHECK(fc.score == 0.0);
    }
    SUBCASE("bidirected endpoints may come in either order") {
        const std::vector<IndependenceStatement> stmts = {stmt(0, 1, {}, {}, kInf)};
        const auto a = feature_confidence(stmts, 3, {FeatureKind::bidirected, 0, 1, true}, packed);
        const auto b = feature_confidence(stmts, 3, {FeatureKind::bidirected, 1, 0, true}, packed);
        CHECK(a.score == b.score);
        CHECK(b.feature.from == 1); // echoes the queried orientation
    }
}

TEST_CASE("five-node feature scores stay consistent with the optimum") {
    HypothesisGraph truth;
    const auto stmts = oracle_instance(5, 2, 23, {{}, {0}, {1}, {2}, {3}, {4}}, &truth);
    SolveOptions opt;
    opt.backend = SolverBackend::packed;
    const auto scores = score_all_features(stmts, 5, opt);
    REQUIRE(scores.size() == 30);
    int decisive = 0;
    for (const auto& fc : scores) {
        const bool in_truth = fc.feature.kind == FeatureKind::directed
                                  ? truth.directed.count({fc.feature.from, fc.feature.to}) == 1
                                  : truth.bidirected.count({fc.feature.from, fc.feature.to}) == 1;
        CHECK((fc.score == kInf || fc.score == -kInf || fc.score == 0.0));
        // the generating graph attains zero loss, so a decisive score must
        // agree with it
        if (fc.score == kInf) {
            CHECK(in_truth);
            ++decisive;
        }
        if (fc.score == -kInf) {
            CHECK(!in_truth);
            ++decisive;
        }
        const auto single = feature_confidence(stmts, 5, fc.feature, opt);
        CHECK(single.score == fc.score);
    }
    CHECK(decisive >= 10);
}

TEST_CASE("scoring every feature follows slot order") {
    SolveOptions packed;
    packed.backend = SolverBackend::packed;
    const auto scores = score_all_features({}, 2, packed);
    REQUIRE(scores.size() == 3);
    CHECK(scores[0].feature.kind == FeatureKind::directed);
    CHECK(scores[0].feature.from == 0);
    CHECK(scores[0].feature.to == 1);
    CHECK(scores[1].feature.from == 1);
    CHECK(scores[1].feature.to == 0);
    CHECK(scores[2].feature.kind == FeatureKind::bidirected);
    CHECK(scores[2].feature.from == 0);
    CHECK(scores[2].feature.to == 1);
    for (const auto& fc : scores) CHECK(fc.feature.present);

    const auto big = score_all_features({}, 4, packed);
    REQUIRE(big.size() == 18);
    for (int s = 0; s < 18; ++s) {
        const auto& f = big[s].feature;
        const int slot = f.kind == FeatureKind::directed ? directed_slot(4, f.from, f.to)
                                                         : bidirected_slot(4, f.from, f.to);
        CHECK(slot == s);
    }
}

TEST_CASE("solver report") {
    SolveOptions packed;
    packed.backend = SolverBackend::packed;

    SUBCASE("plain numbers and names") {
        const std::vector<IndependenceStatement> stmts = {stmt(0, 1, {}, {}, 3.0)};
        const auto r = solve(stmts, 2, packed);
        const auto scores = score_all_features(stmts, 2, packed);
        const auto text = report_to_json(r, scores, {"rain", "mud"});
        const auto j = nlohmann::json::parse(text);
        CHECK(j["best_loss"].get<double>() == 0.0);
        CHECK(j["argmin_count"].get<std::uint64_t>() == 1);
        REQUIRE(j["features"].size() == 3);
        CHECK(j["features"][0]["kind"] == "directed");
        CHECK(j["features"][0]["from"] == "rain");
        CHECK(j["features"][0]["to"] == "mud");
        CHECK(j["features"][2]["kind"] == "bidirected");
    }
    SUBCASE("infinities are spelled out") {
        const std::vector<IndependenceStatement> stmts = {stmt(0, 1, {}, {}, kInf),
                                                          stmt(0, 1, {}, {}, -kInf)};
        const auto r = solve(stmts, 2, packed);
        const auto scores = score_all_features(stmts, 2, packed);
        const auto j = nlohmann::json::parse(report_to_json(r, scores, {"a", "b"}));
        CHECK(j["best_loss"] == "inf");
        CHECK(j["argmin_count"].get<std::uint64_t>() == 0);

        const std::vector<IndependenceStatement> indep = {stmt(0, 1, {}, {}, kInf)};
        const auto js = nlohmann::json::parse(report_to_json(
            solve(indep, 2, packed), score_all_features(indep, 2, packed), {"a", "b"}));
        CHECK(js["features"][0]["score"] == "-inf");
    }
    SUBCASE("the name list must cover the nodes") {
        const auto r = solve({}, 2, packed);
        CHECK_THROWS_AS(report_to_json(r, {}, {"only"}), std::invalid_argument);
    }
}
