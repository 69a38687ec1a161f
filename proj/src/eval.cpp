#include "scg/eval.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "scg/ci.hpp"
#include "scg/mscm.hpp"
#include "scg/rng.hpp"

namespace scg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest round-tripping decimal form, with infinities spelled inf/-inf.
// Keeps every emitted file byte-stable across runs.
std::string fmt(double v) {
    if (v == kInf) return "inf";
    if (v == -kInf) return "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void check_config(const ExperimentConfig& cfg) {
    if (cfg.d < 1 || cfg.d > 5)
        throw std::invalid_argument("experiment: observed node count must be between 1 and 5");
    if (cfg.k < 0) throw std::invalid_argument("experiment: latent count must be non-negative");
    if (!(cfg.p >= 0.0 && cfg.p <= 1.0))
        throw std::invalid_argument("experiment: edge density must lie in [0, 1]");
    if (cfg.n < 1) throw std::invalid_argument("experiment: need at least one sample per regime");
    if (cfg.interventions < 0 || cfg.interventions > cfg.d)
        throw std::invalid_argument("experiment: intervention count must lie in [0, d]");
    if (cfg.replicates < 1) throw std::invalid_argument("experiment: need at least one replicate");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
        throw std::invalid_argument("experiment: alpha must lie in (0, 1)");
}

SolveOptions encoding_options(Encoding e) {
    SolveOptions opt;
    opt.backend = SolverBackend::packed;
    switch (e) {
    case Encoding::sigma:
        break;
    case Encoding::d_cyclic:
        opt.mode = SeparationMode::d;
        break;
    case Encoding::d_acyclic:
        opt.mode = SeparationMode::d;
        opt.acyclic = true;
        break;
    }
    return opt;
}

// One replicate: returns the records and extra models burned. A model whose
// generation or sampling fails is discarded and a fresh seed derived, so
// results stay reproducible and unbiased toward easy graphs.
int run_replicate(const ExperimentConfig& cfg, int id, std::vector<ScoredFeature>& scores,
                  ModelRecord& record) {
    constexpr int kMaxAttempts = 100;
    const int bits = hypothesis_bits(cfg.d);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const std::uint64_t model_seed =
            derive_seed(cfg.seed, (std::uint64_t{static_cast<std::uint32_t>(id)} << 16) |
                                      static_cast<unsigned>(attempt));
        try {
            const MSCM m = random_mscm(cfg.d, cfg.k, cfg.p, model_seed);

            auto rng = make_rng(model_seed, 1);
            std::vector<int> perm(cfg.d);
            std::iota(perm.begin(), perm.end(), 0);
            for (int i = cfg.d - 1; i > 0; --i) {
                const auto j = static_cast<int>(uniform_below(rng, i + 1));
                std::swap(perm[i], perm[j]);
            }
            std::vector<std::vector<int>> regimes = {{}};
            for (int r = 0; r < cfg.interventions; ++r) regimes.push_back({perm[r]});

            std::vector<Dataset> datasets;
            for (std::size_t r = 0; r < regimes.size(); ++r)
                datasets.push_back(sample(m, cfg.n, InterventionSpec(regimes[r]),
                                          derive_seed(model_seed, 2 + r)));

            StatementOptions so;
            so.alpha = cfg.alpha;
            const auto statements = generate_statements(datasets, so);
            const auto features =
                score_all_features(statements, cfg.d, encoding_options(cfg.encoding));

            const HypothesisGraph truth = hypothesis_from(induced_sigma_cg(m));
            for (int s = 0; s < bits; ++s) {
                const Feature& f = features[s].feature;
                const bool label = f.kind == FeatureKind::directed
                                       ? truth.directed.count({f.from, f.to}) == 1
                                       : truth.bidirected.count({f.from, f.to}) == 1;
                scores[static_cast<std::size_t>(id) * bits + s] = {id, f, features[s].score,
                                                                   label};
            }
            record = {id, model_seed, std::move(regimes), attempt};
            return attempt;
        } catch (const std::runtime_error&) {
            continue; // generation or sampling failure: burn the seed, retry
        }
    }
    throw std::runtime_error("experiment: replicate " + std::to_string(id) + " failed " +
                             std::to_string(kMaxAttempts) + " times in a row");
}

} // namespace

std::string encoding_name(Encoding e) {
    switch (e) {
    case Encoding::sigma:
        return "sigma";
    case Encoding::d_cyclic:
        return "d-cyclic";
    case Encoding::d_acyclic:
        return "d-acyclic";
    }
    throw std::logic_error("unreachable");
}

Encoding encoding_from_name(const std::string& name) {
    if (name == "sigma") return Encoding::sigma;
    if (name == "d-cyclic") return Encoding::d_cyclic;
    if (name == "d-acyclic") return Encoding::d_acyclic;
    throw std::invalid_argument("unknown encoding: " + name +
                                " (expected sigma, d-cyclic or d-acyclic)");
}

std::string config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["d"] = cfg.d;
    j["k"] = cfg.k;
    j["p"] = cfg.p;
    j["n"] = cfg.n;
    j["interventions"] = cfg.interventions;
    j["replicates"] = cfg.replicates;
    j["alpha"] = cfg.alpha;
    j["encoding"] = encoding_name(cfg.encoding);
    j["seed"] = cfg.seed;
    return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("config JSON parse error: ") + e.what());
    }
    ExperimentConfig cfg;
    try {
        if (j.contains("d")) cfg.d = j["d"].get<int>();
        if (j.contains("k")) cfg.k = j["k"].get<int>();
        if (j.contains("p")) cfg.p = j["p"].get<double>();
        if (j.contains("n")) cfg.n = j["n"].get<int>();
        if (j.contains("interventions")) cfg.interventions = j["interventions"].get<int>();
        if (j.contains("replicates")) cfg.replicates = j["replicates"].get<int>();
        if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
        if (j.contains("encoding")) cfg.encoding = encoding_from_name(j["encoding"].get<std::string>());
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("config field error: ") + e.what());
    }
    check_config(cfg);
    return cfg;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads) {
    check_config(cfg);
    if (threads < 1) throw std::invalid_argument("experiment: thread count must be positive");

    ExperimentResult out;
    out.config = cfg;
    out.scores.resize(static_cast<std::size_t>(cfg.replicates) * hypothesis_bits(cfg.d));
    out.models.resize(cfg.replicates);

    std::atomic<int> skipped{0};
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    const auto worker = [&] {
        for (;;) {
            const int id = next.fetch_add(1, std::memory_order_relaxed);
            if (id >= cfg.replicates) return;
            try {
                skipped += run_replicate(cfg, id, out.scores, out.models[id]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mu);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    const int workers = std::min(threads, cfg.replicates);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    out.skipped = skipped.load();
    return out;
}

Curves roc_pr(const std::vector<double>& scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("roc_pr: scores and labels differ in length");
    std::size_t positives = 0;
    for (double s : scores)
        if (std::isnan(s)) throw std::invalid_argument("roc_pr: NaN score");
    for (bool l : labels) positives += l;
    const std::size_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0)
        throw std::invalid_argument("roc_pr: labels must contain both classes");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    Curves out;
    std::size_t tp = 0, fp = 0;
    double prev_tpr = 0.0, prev_fpr = 0.0, prev_recall = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double threshold = scores[order[i]];
        std::size_t j = i;
        for (; j < order.size() && scores[order[j]] == threshold; ++j) {
            if (labels[order[j]])
                ++tp;
            else
                ++fp;
        }
        CurvePoint pt;
        pt.threshold = threshold;
        pt.tpr = static_cast<double>(tp) / positives;
        pt.fpr = static_cast<double>(fp) / negatives;
        pt.recall = pt.tpr;
        pt.precision = static_cast<double>(tp) / (tp + fp);
        out.auc += (pt.fpr - prev_fpr) * (pt.tpr + prev_tpr) / 2.0;
        out.average_precision += (pt.recall - prev_recall) * pt.precision;
        prev_tpr = pt.tpr;
        prev_fpr = pt.fpr;
        prev_recall = pt.recall;
        out.points.push_back(pt);
        i = j;
    }
    return out;
}

std::pair<std::vector<double>, std::vector<bool>> kind_scores(const ExperimentResult& result,
                                                              FeatureKind kind) {
    std::pair<std::vector<double>, std::vector<bool>> out;
    for (const auto& sf : result.scores) {
        if (sf.feature.kind != kind) continue;
        out.first.push_back(sf.score);
        out.second.push_back(sf.label);
    }
    return out;
}

ExperimentCurves experiment_curves(const ExperimentResult& result) {
    ExperimentCurves out;
    for (FeatureKind kind : {FeatureKind::directed, FeatureKind::bidirected}) {
        const auto [scores, labels] = kind_scores(result, kind);
        const std::size_t pos = std::count(labels.begin(), labels.end(), true);
        if (scores.empty() || pos == 0 || pos == labels.size()) continue;
        auto& slot = kind == FeatureKind::directed ? out.directed : out.bidirected;
        slot = roc_pr(scores, labels);
    }
    return out;
}

std::string scores_to_csv(const ExperimentResult& result) {
    std::ostringstream os;
    os << "model_id,kind,from,to,score,label\n";
    for (const auto& sf : result.scores) {
        const auto& f = sf.feature;
        os << sf.model_id << ','
           << (f.kind == FeatureKind::directed ? "directed" : "bidirected") << ",v" << f.from + 1
           << ",v" << f.to + 1 << ',' << fmt(sf.score) << ',' << (sf.label ? 1 : 0) << '\n';
    }
    return os.str();
}

std::string curves_to_csv(const ExperimentConfig& cfg, const ExperimentCurves& curves) {
    std::ostringstream os;
    os << "encoding,kind,threshold,tpr,fpr,precision,recall\n";
    const auto emit = [&](const char* kind, const std::optional<Curves>& c) {
        if (!c) return;
        for (const auto& pt : c->points)
            os << encoding_name(cfg.encoding) << ',' << kind << ',' << fmt(pt.threshold) << ','
               << fmt(pt.tpr) << ',' << fmt(pt.fpr) << ',' << fmt(pt.precision) << ','
               << fmt(pt.recall) << '\n';
    };
    emit("directed", curves.directed);
    emit("bidirected", curves.bidirected);
    return os.str();
}

std::string summary_to_json(const ExperimentResult& result, const ExperimentCurves& curves) {
    nlohmann::json j;
    j["config"] = nlohmann::json::parse(config_to_json(result.config));
    j["skipped_models"] = result.skipped;
    const auto cell = [&](FeatureKind kind, const std::optional<Curves>& c) {
        const auto [scores, labels] = kind_scores(result, kind);
        nlohmann::json e;
        e["positives"] = std::count(labels.begin(), labels.end(), true);
        e["negatives"] = std::count(labels.begin(), labels.end(), false);
        if (c) {
            e["auc"] = c->auc;
            e["average_precision"] = c->average_precision;
        } else {
            e["auc"] = nullptr;
            e["average_precision"] = nullptr;
        }
        return e;
    };
    j["directed"] = cell(FeatureKind::directed, curves.directed);
    j["bidirected"] = cell(FeatureKind::bidirected, curves.bidirected);
    nlohmann::json models = nlohmann::json::array();
    for (const auto& m : result.models) {
        nlohmann::json e;
        e["model_id"] = m.model_id;
        e["model_seed"] = m.model_seed;
        e["regimes"] = m.regimes;
        e["regenerated"] = m.regenerated;
        models.push_back(std::move(e));
    }
    j["models"] = std::move(models);
    return j.dump(2) + "\n";
}

void write_experiment_files(const ExperimentResult& result, const std::string& out_dir) {
    const auto curves = experiment_curves(result);
    const auto put = [&](const std::string& name, const std::string& content) {
        const std::string path = out_dir + "/" + name;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + path);
        os << content;
        if (!os) throw std::runtime_error("short write on " + path);
    };
    put("scores.csv", scores_to_csv(result));
    put("curves.csv", curves_to_csv(result.config, curves));
    put("summary.json", summary_to_json(result, curves));
}

} // namespace scg
