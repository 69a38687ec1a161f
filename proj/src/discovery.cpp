#include "scg/discovery.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace scg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_node_range(int d, NodeId v, const char* what) {
    if (v < 0 || v >= d)
        throw std::invalid_argument(std::string(what) + ": node id " + std::to_string(v) +
                                    " out of range for " + std::to_string(d) + " nodes");
}

std::uint32_t full_code_mask(int bits) {
    return bits >= 32 ? ~0u : (1u << bits) - 1u;
}

} // namespace

ValidationReport validate(const HypothesisGraph& h) {
    if (h.nodes < 0) return {false, "negative node count"};
    for (auto [u, v] : h.directed) {
        if (u < 0 || v < 0 || u >= h.nodes || v >= h.nodes)
            return {false, "directed edge endpoint out of range"};
        if (u == v) return {false, "directed self-loop at node " + std::to_string(u)};
    }
    for (auto [u, v] : h.bidirected) {
        if (u < 0 || v < 0 || u >= h.nodes || v >= h.nodes)
            return {false, "bidirected edge endpoint out of range"};
        if (u >= v) return {false, "bidirected pair not stored with u < v"};
    }
    return {true, ""};
}

bool is_acyclic(const HypothesisGraph& h) {
    std::vector<int> color(h.nodes, 0);
    std::vector<std::vector<NodeId>> ch(h.nodes);
    for (auto [u, v] : h.directed) ch[u].push_back(v);
    std::vector<std::pair<NodeId, std::size_t>> stack;
    for (NodeId root = 0; root < h.nodes; ++root) {
        if (color[root] != 0) continue;
        stack.push_back({root, 0});
        color[root] = 1;
        while (!stack.empty()) {
            auto& [v, i] = stack.back();
            if (i < ch[v].size()) {
                NodeId c = ch[v][i++];
                if (color[c] == 1) return false;
                if (color[c] == 0) {
                    color[c] = 1;
                    stack.push_back({c, 0});
                }
            } else {
                color[v] = 2;
                stack.pop_back();
            }
        }
    }
    return true;
}

SigmaCG to_sigma_cg(const HypothesisGraph& h, std::vector<std::string> names) {
    const auto report = validate(h);
    if (!report.ok) throw std::invalid_argument("invalid hypothesis graph: " + report.message);
    if (!names.empty() && static_cast<int>(names.size()) != h.nodes)
        throw std::invalid_argument("name list does not match the node count");
    SigmaCG g = names.empty() ? SigmaCG(h.nodes) : SigmaCG(std::move(names));
    for (auto [u, v] : h.directed) g.add_directed(u, v);
    for (auto [u, v] : h.bidirected) g.add_bidirected(u, v);
    return coarsest_sigma(g);
}

HypothesisGraph hypothesis_from(const SigmaCG& g) {
    if (!g.undirected().empty())
        throw std::invalid_argument("hypothesis graphs admit no undirected edges");
    HypothesisGraph h;
    h.nodes = g.num_nodes();
    h.directed = g.directed();
    h.bidirected = g.bidirected();
    return h;
}

SigmaCG intervened_graph(const HypothesisGraph& h, const std::vector<NodeId>& targets) {
    std::vector<char> hit(h.nodes, 0);
    for (NodeId t : targets) {
        if (t < 0 || t >= h.nodes)
            throw std::out_of_range("intervened_graph: node id out of range");
        hit[t] = 1;
    }
    HypothesisGraph cut;
    cut.nodes = h.nodes;
    for (auto [u, v] : h.directed)
        if (!hit[v]) cut.directed.insert({u, v});
    for (auto [u, v] : h.bidirected)
        if (!hit[u] && !hit[v]) cut.bidirected.insert({u, v});
    return to_sigma_cg(cut);
}

int directed_slot_count(int d) { return d * (d - 1); }

int bidirected_slot_count(int d) { return d * (d - 1) / 2; }

int hypothesis_bits(int d) { return directed_slot_count(d) + bidirected_slot_count(d); }

std::uint64_t hypothesis_count(int d) { return std::uint64_t{1} << hypothesis_bits(d); }

int directed_slot(int d, NodeId u, NodeId v) {
    check_node_range(d, u, "directed_slot");
    check_node_range(d, v, "directed_slot");
    if (u == v) throw std::invalid_argument("directed_slot: self-loop");
    return u * (d - 1) + (v > u ? v - 1 : v);
}

int bidirected_slot(int d, NodeId u, NodeId v) {
    check_node_range(d, u, "bidirected_slot");
    check_node_range(d, v, "bidirected_slot");
    if (u == v) throw std::invalid_argument("bidirected_slot: self-loop");
    if (u > v) std::swap(u, v);
    return directed_slot_count(d) + u * (d - 1) - u * (u - 1) / 2 + (v - u - 1);
}

std::uint32_t encode(const HypothesisGraph& h) {
    if (h.nodes > 5) throw std::invalid_argument("encode: at most 5 nodes");
    const auto report = validate(h);
    if (!report.ok) throw std::invalid_argument("invalid hypothesis graph: " + report.message);
    std::uint32_t code = 0;
    for (auto [u, v] : h.directed) code |= 1u << directed_slot(h.nodes, u, v);
    for (auto [u, v] : h.bidirected) code |= 1u << bidirected_slot(h.nodes, u, v);
    return code;
}

HypothesisGraph decode(int d, std::uint32_t code) {
    if (d < 0 || d > 5) throw std::invalid_argument("decode: at most 5 nodes");
    if (code & ~full_code_mask(hypothesis_bits(d)))
        throw std::invalid_argument("decode: code has bits beyond the slot count");
    HypothesisGraph h;
    h.nodes = d;
    int s = 0;
    for (NodeId u = 0; u < d; ++u)
        for (NodeId v = 0; v < d; ++v) {
            if (u == v) continue;
            if (code >> s & 1) h.directed.insert({u, v});
            ++s;
        }
    for (NodeId u = 0; u < d; ++u)
        for (NodeId v = u + 1; v < d; ++v) {
            if (code >> s & 1) h.bidirected.insert({u, v});
            ++s;
        }
    return h;
}

namespace detail {

bool packed_separated(int d, std::uint32_t code, NodeId w, NodeId y, std::uint32_t z_mask,
                      bool finest) {
    if ((z_mask >> w & 1) || (z_mask >> y & 1)) return true; // conditioned endpoints drop out
    if (w == y) return false;                                // single-node walk connects
    std::uint8_t pa[5] = {}, ch[5] = {}, bi[5] = {}, cls[5];
    int s = 0;
    for (int u = 0; u < d; ++u)
        for (int v = 0; v < d; ++v) {
            if (u == v) continue;
            if (code >> s & 1) {
                ch[u] |= std::uint8_t(1 << v);
                pa[v] |= std::uint8_t(1 << u);
            }
            ++s;
        }
    for (int u = 0; u < d; ++u)
        for (int v = u + 1; v < d; ++v) {
            if (code >> s & 1) {
                bi[u] |= std::uint8_t(1 << v);
                bi[v] |= std::uint8_t(1 << u);
            }
            ++s;
        }
    if (finest) {
        for (int v = 0; v < d; ++v) cls[v] = std::uint8_t(1 << v);
    } else {
        std::uint8_t reach[5];
        for (int v = 0; v < d; ++v) reach[v] = ch[v];
        for (int pass = 0; pass < d; ++pass)
            for (int v = 0; v < d; ++v) {
                std::uint8_t r = reach[v];
                for (int u = 0; u < d; ++u)
                    if (r >> u & 1) r |= reach[u];
                reach[v] = r;
            }
        for (int v = 0; v < d; ++v) {
            std::uint8_t c = std::uint8_t(1 << v);
            for (int u = 0; u < d; ++u)
                if ((reach[v] >> u & 1) && (reach[u] >> v & 1)) c |= std::uint8_t(1 << u);
            cls[v] = c;
        }
    }

    const auto in_z = [&](int v) { return (z_mask >> v & 1) != 0; };
    // state id = node * 4 + arrival-mark * 2 + came-from-own-class, with
    // head arrivals canonicalized to flag 0 (the flag only matters when the
    // arrival end is a tail).
    unsigned visited = 0;
    int stack[20];
    int top = 0;
    bool found = false;
    const auto arrive = [&](int v, int head, int flag) {
        if (v == y) {
            found = true;
            return;
        }
        const int id = (v << 2) | (head << 1) | flag;
        if (visited >> id & 1) return;
        visited |= 1u << id;
        stack[top++] = id;
    };

    for (int c = 0; c < d && !found; ++c)
        if (ch[w] >> c & 1) arrive(c, 1, 0);
    for (int p = 0; p < d && !found; ++p)
        if (pa[w] >> p & 1) arrive(p, 0, cls[p] >> w & 1);
    for (int u = 0; u < d && !found; ++u)
        if (bi[w] >> u & 1) arrive(u, 1, 0);

    while (!found && top > 0) {
        const int id = stack[--top];
        const int v = id >> 2;
        const bool head_in = (id >> 1 & 1) != 0;
        const bool flag = (id & 1) != 0;
        // leave through a tail at v (directed edge v -> c)
        for (int c = 0; c < d && !found; ++c) {
            if (!(ch[v] >> c & 1)) continue;
            const bool within = (cls[v] >> c & 1) != 0;
            const bool open = head_in ? (!in_z(v) || within) : (!in_z(v) || (flag && within));
            if (open) arrive(c, 1, 0);
        }
        // leave through a head at v (directed edge p -> v walked backwards,
        // or a bidirected edge)
        const bool open_head_out = head_in ? in_z(v) : (!in_z(v) || flag);
        if (!open_head_out) continue;
        for (int p = 0; p < d && !found; ++p)
            if (pa[v] >> p & 1) arrive(p, 0, cls[p] >> v & 1);
        for (int u = 0; u < d && !found; ++u)
            if (bi[v] >> u & 1) arrive(u, 1, 0);
    }
    return !found;
}

} // namespace detail

namespace {

std::uint32_t surgery_mask(int d, const std::vector<int>& targets) {
    std::uint32_t m = full_code_mask(hypothesis_bits(d));
    for (int t : targets)
        for (int u = 0; u < d; ++u) {
            if (u == t) continue;
            m &= ~(1u << directed_slot(d, u, t));
            m &= ~(1u << bidirected_slot(d, u, t));
        }
    return m;
}

void check_statement(int d, const IndependenceStatement& s) {
    check_node_range(d, s.w, "statement");
    check_node_range(d, s.y, "statement");
    if (s.w == s.y) throw std::invalid_argument("statement: w and y coincide");
    for (int v : s.z) {
        check_node_range(d, v, "statement condition set");
        if (v == s.w || v == s.y)
            throw std::invalid_argument("statement: condition set contains an endpoint");
    }
    for (int v : s.regime) check_node_range(d, v, "statement regime");
    if (std::isnan(s.lambda)) throw std::invalid_argument("statement: weight is NaN");
}

// Per-statement verdict store: a flat lazily filled table, used when the
// code space is small enough that one table per statement fits comfortably.
// Concurrent fills are idempotent.
class VerdictStore {
  public:
    explicit VerdictStore(int bits) : table_size_(std::size_t{1} << bits) {
        table_ = std::make_unique<std::atomic<std::int8_t>[]>(table_size_);
        for (std::size_t i = 0; i < table_size_; ++i)
            table_[i].store(-1, std::memory_order_relaxed);
    }

    template <typename Compute> bool get(std::uint32_t key, Compute&& compute) {
        const std::int8_t hit = table_[key].load(std::memory_order_relaxed);
        if (hit >= 0) return hit != 0;
        const bool v = compute();
        table_[key].store(v ? 1 : 0, std::memory_order_relaxed);
        return v;
    }

  private:
    std::size_t table_size_ = 0;
    std::unique_ptr<std::atomic<std::int8_t>[]> table_;
};

// Shared verdict cache for the 5-node code space, where exact per-statement
// tables would not fit. Direct mapped and lossy: a colliding key evicts the
// resident entry, which only costs a recompute since verdicts are pure.
// Entries pack the key, the verdict, and an occupancy bit into one word, so
// concurrent readers never see a verdict under a mismatched key.
class LossyVerdictCache {
  public:
    static constexpr int kLogSlots = 22;
    static constexpr std::uint64_t kMaxKey = std::uint64_t{1} << 61;

    LossyVerdictCache()
        : slots_(std::make_unique<std::atomic<std::uint64_t>[]>(std::size_t{1} << kLogSlots)) {
        for (std::size_t i = 0; i < (std::size_t{1} << kLogSlots); ++i)
            slots_[i].store(0, std::memory_order_relaxed);
    }

    template <typename Compute> bool get(std::uint64_t key, Compute&& compute) {
        if (key >= kMaxKey) return compute();
        auto& slot = slots_[mix(key) >> (64 - kLogSlots)];
        const std::uint64_t e = slot.load(std::memory_order_relaxed);
        if ((e & 1) && (e >> 2) == key) return (e >> 1 & 1) != 0;
        const bool v = compute();
        slot.store((key << 2) | (std::uint64_t{v} << 1) | 1u, std::memory_order_relaxed);
        return v;
    }

  private:
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::unique_ptr<std::atomic<std::uint64_t>[]> slots_;
};

class Evaluator {
  public:
    Evaluator(const std::vector<IndependenceStatement>& stmts, int d, const SolveOptions& opt)
        : d_(d), bits_(hypothesis_bits(d)), opt_(opt) {
        for (const auto& s : stmts) {
            check_statement(d, s);
            if (s.lambda == 0.0) continue;
            Entry e;
            e.w = s.w;
            e.y = s.y;
            e.z = s.z;
            e.z_mask = 0;
            for (int v : s.z) e.z_mask |= 1u << v;
            e.mask = surgery_mask(d, s.regime);
            e.penalty = std::fabs(s.lambda);
            e.wants_sep = s.lambda > 0.0;
            if (opt.memoize && bits_ <= 20) e.store = std::make_unique<VerdictStore>(bits_);
            entries_.push_back(std::move(e));
        }
        if (opt.memoize && bits_ > 20) shared_ = std::make_unique<LossyVerdictCache>();
    }

    int dim() const { return d_; }
    int bits() const { return bits_; }
    int size() const { return static_cast<int>(entries_.size()); }
    double penalty(int j) const { return entries_[j].penalty; }
    bool wants_sep(int j) const { return entries_[j].wants_sep; }

    bool separated(int j, std::uint32_t code) {
        auto& e = entries_[j];
        const std::uint32_t key = code & e.mask;
        const auto compute = [&] { return verdict(e, key); };
        if (e.store) return e.store->get(key, compute);
        if (shared_)
            return shared_->get((std::uint64_t{static_cast<std::uint32_t>(j)} << bits_) | key,
                                compute);
        return compute();
    }

    double loss(std::uint32_t code) {
        double total = 0.0;
        for (int j = 0; j < size(); ++j) {
            const bool sep = separated(j, code);
            if (entries_[j].wants_sep ? !sep : sep) total += entries_[j].penalty;
        }
        return total;
    }

  private:
    struct Entry {
        NodeId w, y;
        NodeSet z;
        std::uint32_t z_mask;
        std::uint32_t mask;
        double penalty;
        bool wants_sep;
        std::unique_ptr<VerdictStore> store;
    };

    bool verdict(const Entry& e, std::uint32_t key) const {
        const bool finest = opt_.mode == SeparationMode::d;
        if (opt_.backend == SolverBackend::packed)
            return detail::packed_separated(d_, key, e.w, e.y, e.z_mask, finest);
        SigmaCG g = to_sigma_cg(decode(d_, key));
        if (finest) g = finest_sigma(g);
        const SeparationQuery q({e.w}, {e.y}, e.z);
        return opt_.backend == SolverBackend::walk ? sigma_separated_walk(g, q)
                                                   : sigma_separated_reduction(g, q);
    }

    int d_;
    int bits_;
    SolveOptions opt_;
    std::vector<Entry> entries_;
    std::unique_ptr<LossyVerdictCache> shared_;
};

void check_solve_args(int num_nodes, const SolveOptions& opt) {
    if (num_nodes < 1) throw std::invalid_argument("solve: need at least one node");
    if (num_nodes > opt.max_nodes)
        throw std::invalid_argument("solve: " + std::to_string(num_nodes) +
                                    " nodes exceed the configured limit of " +
                                    std::to_string(opt.max_nodes));
    if (num_nodes > 5) throw std::invalid_argument("solve: the search handles at most 5 nodes");
    if (opt.threads < 1) throw std::invalid_argument("solve: thread count must be positive");
}

// Acyclicity of the directed part, indexed by directed-slot code. Cached per
// node count; the d = 5 table has 2^20 entries.
const std::vector<char>& dag_table(int d) {
    static std::mutex mu;
    static std::map<int, std::vector<char>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(d);
    if (it != cache.end()) return it->second;
    const int dir_bits = directed_slot_count(d);
    std::vector<char> ok(std::size_t{1} << dir_bits);
    for (std::uint32_t code = 0; code < ok.size(); ++code) {
        std::uint8_t ch[5] = {};
        int s = 0;
        for (int u = 0; u < d; ++u)
            for (int v = 0; v < d; ++v) {
                if (u == v) continue;
                if (code >> s & 1) ch[u] |= std::uint8_t(1 << v);
                ++s;
            }
        std::uint8_t reach[5];
        for (int v = 0; v < d; ++v) reach[v] = ch[v];
        for (int pass = 0; pass < d; ++pass)
            for (int v = 0; v < d; ++v) {
                std::uint8_t r = reach[v];
                for (int u = 0; u < d; ++u)
                    if (r >> u & 1) r |= reach[u];
                reach[v] = r;
            }
        bool acyclic = true;
        for (int v = 0; v < d; ++v)
            if (reach[v] >> v & 1) acyclic = false;
        ok[code] = acyclic ? 1 : 0;
    }
    return cache[d] = std::move(ok);
}

struct ChunkResult {
    double best = kInf;
    std::uint64_t count = 0;
    std::vector<std::uint32_t> argmin;
};

ChunkResult merge_chunks(std::vector<ChunkResult> chunks, std::uint64_t cap) {
    ChunkResult out;
    for (const auto& c : chunks) out.best = std::min(out.best, c.best);
    for (const auto& c : chunks) {
        if (c.best != out.best) continue;
        out.count += c.count;
        for (std::uint32_t code : c.argmin) {
            if (out.argmin.size() >= cap) break;
            out.argmin.push_back(code);
        }
    }
    return out;
}

SolveResult finish(ChunkResult r, int num_nodes) {
    SolveResult out;
    out.nodes = num_nodes;
    if (r.best == kInf) {
        out.best_loss = kInf;
        return out; // infeasible: no graph satisfies the hard constraints
    }
    out.best_loss = r.best;
    out.argmin_count = r.count;
    out.argmin = std::move(r.argmin);
    return out;
}

// One exhaustive sweep over the code space. When `minima` is non-null it
// receives, per slot, the best loss among graphs with the slot present and
// absent; argmin codes are collected only when `collect` is set.
struct SlotMinima {
    std::vector<double> with_slot;
    std::vector<double> without_slot;
};

ChunkResult exhaustive_sweep(Evaluator& ev, const SolveOptions& opt, bool collect,
                             SlotMinima* minima) {
    const int bits = ev.bits();
    const std::uint64_t total = std::uint64_t{1} << bits;
    const std::uint32_t dir_mask = full_code_mask(directed_slot_count(ev.dim()));
    const std::vector<char>* dag = opt.acyclic ? &dag_table(ev.dim()) : nullptr;

    const int threads = static_cast<int>(std::min<std::uint64_t>(opt.threads, total));
    std::vector<ChunkResult> chunks(threads);
    std::vector<SlotMinima> partial(minima ? threads : 0);
    const auto run = [&](int t) {
        const std::uint64_t lo = total * t / threads;
        const std::uint64_t hi = total * (t + 1) / threads;
        ChunkResult& r = chunks[t];
        SlotMinima* m = minima ? &partial[t] : nullptr;
        if (m) {
            m->with_slot.assign(bits, kInf);
            m->without_slot.assign(bits, kInf);
        }
        for (std::uint64_t c = lo; c < hi; ++c) {
            const auto code = static_cast<std::uint32_t>(c);
            if (dag && !(*dag)[code & dir_mask]) continue;
            const double L = ev.loss(code);
            if (m)
                for (int s = 0; s < bits; ++s) {
                    double& cell = (code >> s & 1) ? m->with_slot[s] : m->without_slot[s];
                    cell = std::min(cell, L);
                }
            if (L < r.best) {
                r.best = L;
                r.count = 1;
                r.argmin.clear();
                if (collect) r.argmin.push_back(code);
            } else if (L == r.best && r.best != kInf) {
                ++r.count;
                if (collect && r.argmin.size() < opt.argmin_cap) r.argmin.push_back(code);
            }
        }
    };
    if (threads == 1) {
        run(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(run, t);
        for (auto& th : pool) th.join();
    }
    if (minima) {
        minima->with_slot.assign(bits, kInf);
        minima->without_slot.assign(bits, kInf);
        for (const auto& m : partial)
            for (int s = 0; s < bits; ++s) {
                minima->with_slot[s] = std::min(minima->with_slot[s], m.with_slot[s]);
                minima->without_slot[s] = std::min(minima->without_slot[s], m.without_slot[s]);
            }
    }
    return merge_chunks(std::move(chunks), opt.argmin_cap);
}

// Branch-and-bound over slot decisions, most significant slot first, absent
// branch first, so leaves are reached in ascending code order. The bound
// exploits that adding any edge only ever creates sigma-connections: a
// positive statement already connected in the all-absent completion, or a
// negative statement still separated in the all-present completion, cannot
// be rescued by the remaining decisions.
class BnbSearch {
  public:
    BnbSearch(Evaluator& ev, const SolveOptions& opt, std::optional<std::pair<int, int>> clamp)
        : ev_(ev), opt_(opt), clamp_(clamp), bits_(ev.bits()),
          dir_mask_(full_code_mask(directed_slot_count(ev.dim()))),
          dag_(opt.acyclic ? &dag_table(ev.dim()) : nullptr),
          slack_(std::max(0.0, 1.0 - 4.0 * ev.size() * std::numeric_limits<double>::epsilon())) {}

    double find_best(double seed_best = kInf) {
        best_.store(seed_best, std::memory_order_relaxed);
        run_phase(/*collect=*/false);
        return best_.load(std::memory_order_relaxed);
    }

    ChunkResult collect(double best) {
        best_.store(best, std::memory_order_relaxed);
        if (best == kInf) return {};
        run_phase(/*collect=*/true);
        ChunkResult out = merge_chunks(std::move(collected_), opt_.argmin_cap);
        out.best = best;
        return out;
    }

  private:
    struct Frame {
        double bound = 0.0;
        std::vector<std::int8_t> state; // 0 undecided, 1 satisfied, 2 violated
        std::vector<int> open;          // indices of undecided statements
        int open_count = 0;
        ChunkResult result;
        std::uint64_t cap = 0;
        bool collect = false;
    };

    void run_phase(bool collect) {
        const int n = ev_.size();
        int fanout_bits = 0;
        while ((1 << fanout_bits) < opt_.threads && fanout_bits < bits_) ++fanout_bits;
        const int tasks = 1 << fanout_bits;
        std::vector<Frame> frames(opt_.threads);
        if (collect) collected_.assign(opt_.threads, {});
        const auto run = [&](int t) {
            Frame& f = frames[t];
            f.state.assign(n, 0);
            f.open.resize(n);
            f.collect = collect;
            f.cap = opt_.argmin_cap;
            for (int task = t; task < tasks; task += opt_.threads) {
                f.bound = 0.0;
                f.open_count = n;
                for (int j = 0; j < n; ++j) {
                    f.open[j] = j;
                    f.state[j] = 0;
                }
                const auto prefix = static_cast<std::uint32_t>(task);
                if (clamp_valid(prefix, fanout_bits)) {
                    dfs(f, fanout_bits, prefix << (bits_ - fanout_bits));
                }
            }
            if (collect) collected_[t] = std::move(f.result);
        };
        if (opt_.threads == 1) {
            run(0);
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < opt_.threads; ++t) pool.emplace_back(run, t);
            for (auto& th : pool) th.join();
        }
    }

    bool clamp_valid(std::uint32_t prefix, int prefix_bits) const {
        if (!clamp_) return true;
        const auto [slot, value] = *clamp_;
        if (slot < bits_ - prefix_bits) return true;
        const int pos = slot - (bits_ - prefix_bits);
        return (prefix >> pos & 1) == static_cast<unsigned>(value);
    }

    void dfs(Frame& f, int depth, std::uint32_t fixed) {
        const int low_bits = bits_ - depth;
        // Tightest completions that honor a clamp on an undecided slot; every
        // graph in this subtree lies between them edgewise.
        std::uint32_t min_code = fixed;
        std::uint32_t max_code = fixed | full_code_mask(low_bits);
        if (clamp_ && clamp_->first < low_bits) {
            const std::uint32_t bit = 1u << clamp_->first;
            if (clamp_->second == 1)
                min_code |= bit;
            else
                max_code &= ~bit;
        }
        // A cycle among the already decided (plus clamped) directed edges
        // survives into every completion.
        if (dag_ && !(*dag_)[min_code & dir_mask_]) return;

        // settle statements that the remaining decisions cannot flip
        const double saved_bound = f.bound;
        const int saved_open = f.open_count;
        int i = 0;
        while (i < f.open_count) {
            const int j = f.open[i];
            const bool connected_min = !ev_.separated(j, min_code);
            const bool separated_max = ev_.separated(j, max_code);
            if (!connected_min && !separated_max) {
                ++i;
                continue;
            }
            const bool violated = ev_.wants_sep(j) ? connected_min : separated_max;
            f.state[j] = violated ? 2 : 1;
            if (violated) f.bound += ev_.penalty(j);
            std::swap(f.open[i], f.open[f.open_count - 1]);
            --f.open_count;
        }

        // The running bound adds penalties in settlement order, which can
        // drift a few ulps from the statement-order sum reported for whole
        // graphs; pruning leaves that margin so ties at the optimum survive.
        const double incumbent = best_.load(std::memory_order_relaxed);
        const double floor = f.bound * slack_;
        const bool prune = f.collect ? floor > incumbent
                                     : !(floor < incumbent); // phase 1 needs strict improvement
        if (prune) {
            unwind(f, saved_bound, saved_open);
            return;
        }
        if (f.open_count == 0) {
            settle_subtree(f, depth, fixed);
            unwind(f, saved_bound, saved_open);
            return;
        }
        const int slot = bits_ - 1 - depth;
        const bool skip_absent = clamp_ && clamp_->first == slot && clamp_->second == 1;
        const bool skip_present = clamp_ && clamp_->first == slot && clamp_->second == 0;
        if (!skip_absent) dfs(f, depth + 1, fixed);
        if (!skip_present) dfs(f, depth + 1, fixed | (1u << slot));
        unwind(f, saved_bound, saved_open);
    }

    void unwind(Frame& f, double saved_bound, int saved_open) {
        for (int i = f.open_count; i < saved_open; ++i) f.state[f.open[i]] = 0;
        f.bound = saved_bound;
        f.open_count = saved_open;
    }

    // Every completion below this node violates exactly the statements now
    // marked violated, so all of them share one loss. Sum it in statement
    // order: the whole-graph evaluations elsewhere add penalties in that
    // order, and equality tests between the two must be exact.
    double settled_loss(const Frame& f) const {
        double total = 0.0;
        for (int j = 0; j < ev_.size(); ++j)
            if (f.state[j] == 2) total += ev_.penalty(j);
        return total;
    }

    void settle_subtree(Frame& f, int depth, std::uint32_t fixed) {
        const double exact = settled_loss(f);
        if (!f.collect) {
            double cur = best_.load(std::memory_order_relaxed);
            while (exact < cur &&
                   !best_.compare_exchange_weak(cur, exact, std::memory_order_relaxed)) {
            }
            return;
        }
        if (exact != best_.load(std::memory_order_relaxed)) return;
        const int low_bits = bits_ - depth;
        ChunkResult& r = f.result;
        r.best = exact;
        r.count += subtree_size(fixed, low_bits);
        if (r.argmin.size() >= f.cap) return;
        const std::uint64_t span = std::uint64_t{1} << low_bits;
        for (std::uint64_t i = 0; i < span && r.argmin.size() < f.cap; ++i) {
            const auto code = static_cast<std::uint32_t>(fixed | i);
            if (clamp_ && ((code >> clamp_->first & 1) != static_cast<unsigned>(clamp_->second)))
                continue;
            if (dag_ && !(*dag_)[code & dir_mask_]) continue;
            r.argmin.push_back(code);
        }
    }

    std::uint64_t subtree_size(std::uint32_t fixed, int low_bits) const {
        const bool clamped_low = clamp_ && clamp_->first < low_bits;
        const int dir_bits = directed_slot_count(ev_.dim());
        if (!dag_) {
            std::uint64_t span = std::uint64_t{1} << low_bits;
            if (clamped_low) span >>= 1;
            return span;
        }
        // With the DAG restriction, count the acyclic directed codes in the
        // undecided range; bidirected bits are unconstrained. A low clamp
        // falls back to scanning.
        if (clamped_low) {
            std::uint64_t n = 0;
            const std::uint64_t span = std::uint64_t{1} << low_bits;
            for (std::uint64_t i = 0; i < span; ++i) {
                const auto code = static_cast<std::uint32_t>(fixed | i);
                if ((code >> clamp_->first & 1) != static_cast<unsigned>(clamp_->second)) continue;
                if (!(*dag_)[code & dir_mask_]) continue;
                ++n;
            }
            return n;
        }
        const std::vector<char>& dag = *dag_;
        if (low_bits >= dir_bits) {
            std::uint64_t dags = 0;
            for (char c : dag) dags += c;
            return dags << (low_bits - dir_bits);
        }
        const std::uint32_t base = fixed & dir_mask_;
        std::uint64_t n = 0;
        for (std::uint64_t i = 0; i < (std::uint64_t{1} << low_bits); ++i)
            n += dag[base | i];
        return n;
    }

    Evaluator& ev_;
    const SolveOptions& opt_;
    std::optional<std::pair<int, int>> clamp_;
    int bits_;
    std::uint32_t dir_mask_;
    const std::vector<char>* dag_;
    double slack_;
    std::atomic<double> best_{kInf};
    std::vector<ChunkResult> collected_;
};

double clamped_minimum(Evaluator& ev, const SolveOptions& opt, int slot, int value) {
    BnbSearch search(ev, opt, std::make_pair(slot, value));
    return search.find_best();
}

double confidence_from_minima(double min_without, double min_with, bool present) {
    const double favored = present ? min_with : min_without;
    const double opposed = present ? min_without : min_with;
    if (favored == kInf && opposed == kInf) return 0.0; // both clamped problems infeasible
    const double score = opposed - favored;
    if (std::isnan(score)) throw std::logic_error("feature confidence is indeterminate");
    return score;
}

Feature slot_feature(int d, int slot) {
    Feature f;
    const int dir = directed_slot_count(d);
    if (slot < dir) {
        f.kind = FeatureKind::directed;
        f.from = slot / (d - 1);
        const int r = slot % (d - 1);
        f.to = r < f.from ? r : r + 1;
        return f;
    }
    f.kind = FeatureKind::bidirected;
    int idx = slot - dir;
    for (int u = 0; u < d; ++u) {
        const int row = d - 1 - u;
        if (idx < row) {
            f.from = u;
            f.to = u + 1 + idx;
            return f;
        }
        idx -= row;
    }
    throw std::logic_error("slot index out of range");
}

int feature_slot(int d, const Feature& f) {
    if (f.kind == FeatureKind::directed) return directed_slot(d, f.from, f.to);
    return bidirected_slot(d, f.from, f.to);
}

} // namespace

double loss(const HypothesisGraph& h, const std::vector<IndependenceStatement>& statements) {
    const auto report = validate(h);
    if (!report.ok) throw std::invalid_argument("invalid hypothesis graph: " + report.message);
    std::map<std::vector<int>, SigmaCG> intervened;
    double total = 0.0;
    for (const auto& s : statements) {
        check_statement(h.nodes, s);
        if (s.lambda == 0.0) continue;
        auto it = intervened.find(s.regime);
        if (it == intervened.end())
            it = intervened.emplace(s.regime, intervened_graph(h, s.regime)).first;
        const bool sep = sigma_separated_reduction(it->second, SeparationQuery({s.w}, {s.y}, s.z));
        if (s.lambda > 0.0 ? !sep : sep) total += std::fabs(s.lambda);
    }
    return total;
}

SolveResult solve_exhaustive(const std::vector<IndependenceStatement>& statements, int num_nodes,
                             const SolveOptions& opt) {
    check_solve_args(num_nodes, opt);
    Evaluator ev(statements, num_nodes, opt);
    return finish(exhaustive_sweep(ev, opt, /*collect=*/true, nullptr), num_nodes);
}

SolveResult solve_branch_and_bound(const std::vector<IndependenceStatement>& statements,
                                   int num_nodes, const SolveOptions& opt) {
    check_solve_args(num_nodes, opt);
    Evaluator ev(statements, num_nodes, opt);
    BnbSearch search(ev, opt, std::nullopt);
    const double best = search.find_best();
    return finish(search.collect(best), num_nodes);
}

SolveResult solve(const std::vector<IndependenceStatement>& statements, int num_nodes,
                  const SolveOptions& opt) {
    check_solve_args(num_nodes, opt);
    return num_nodes <= 4 ? solve_exhaustive(statements, num_nodes, opt)
                          : solve_branch_and_bound(statements, num_nodes, opt);
}

FeatureConfidence feature_confidence(const std::vector<IndependenceStatement>& statements,
                                     int num_nodes, const Feature& f, const SolveOptions& opt) {
    check_solve_args(num_nodes, opt);
    if (f.kind == FeatureKind::bidirected && f.from > f.to) {
        Feature norm = f;
        std::swap(norm.from, norm.to);
        return {f, feature_confidence(statements, num_nodes, norm, opt).score};
    }
    Evaluator ev(statements, num_nodes, opt);
    const int slot = feature_slot(num_nodes, f);
    double min_with, min_without;
    if (num_nodes <= 4) {
        SlotMinima minima;
        exhaustive_sweep(ev, opt, /*collect=*/false, &minima);
        min_with = minima.with_slot[slot];
        min_without = minima.without_slot[slot];
    } else {
        min_with = clamped_minimum(ev, opt, slot, 1);
        min_without = clamped_minimum(ev, opt, slot, 0);
    }
    return {f, confidence_from_minima(min_without, min_with, f.present)};
}

std::vector<FeatureConfidence> score_all_features(
    const std::vector<IndependenceStatement>& statements, int num_nodes, const SolveOptions& opt) {
    check_solve_args(num_nodes, opt);
    Evaluator ev(statements, num_nodes, opt);
    const int bits = hypothesis_bits(num_nodes);
    SlotMinima minima;
    if (num_nodes <= 4) {
        exhaustive_sweep(ev, opt, /*collect=*/false, &minima);
    } else {
        minima.with_slot.resize(bits);
        minima.without_slot.resize(bits);
        for (int s = 0; s < bits; ++s) {
            minima.with_slot[s] = clamped_minimum(ev, opt, s, 1);
            minima.without_slot[s] = clamped_minimum(ev, opt, s, 0);
        }
    }
    std::vector<FeatureConfidence> out;
    out.reserve(bits);
    for (int s = 0; s < bits; ++s) {
        Feature f = slot_feature(num_nodes, s);
        out.push_back({f, confidence_from_minima(minima.without_slot[s], minima.with_slot[s],
                                                 /*present=*/true)});
    }
    return out;
}

std::string report_to_json(const SolveResult& result,
                           const std::vector<FeatureConfidence>& features,
                           const std::vector<std::string>& names) {
    if (static_cast<int>(names.size()) != result.nodes)
        throw std::invalid_argument("report_to_json: name list does not match the node count");
    nlohmann::json j;
    const auto extended = [](double v) -> nlohmann::json {
        if (v == kInf) return "inf";
        if (v == -kInf) return "-inf";
        return v;
    };
    j["best_loss"] = extended(result.best_loss);
    j["argmin_count"] = result.argmin_count;
    auto arr = nlohmann::json::array();
    for (const auto& fc : features) {
        nlohmann::json e;
        e["kind"] = fc.feature.kind == FeatureKind::directed ? "directed" : "bidirected";
        e["from"] = names.at(fc.feature.from);
        e["to"] = names.at(fc.feature.to);
        e["score"] = extended(fc.score);
        arr.push_back(std::move(e));
    }
    j["features"] = std::move(arr);
    return j.dump(2) + "\n";
}

} // namespace scg
