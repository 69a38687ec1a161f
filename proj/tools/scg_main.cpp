#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "scg/ci.hpp"
#include "scg/discovery.hpp"
#include "scg/eval.hpp"
#include "scg/graph.hpp"
#include "scg/mscm.hpp"
#include "scg/rng.hpp"

namespace {

using namespace scg;

// Exit codes: 0 ok, 2 bad input (flags, missing or unparseable files),
// 3 invalid values or names, 4 runtime failures.
constexpr int kExitInput = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open " + path);
    std::ostringstream os;
    os << is.rdbuf();
    if (!is.good() && !is.eof()) throw InputError("cannot read " + path);
    return os.str();
}

void write_output(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
        return;
    }
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) throw std::runtime_error("cannot write " + path);
}

// Re-tag failures while decoding a file's content as input errors.
template <typename F>
auto parse_input(const std::string& path, F&& f) {
    try {
        return f();
    } catch (const InputError&) {
        throw;
    } catch (const std::exception& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

std::uint64_t parse_seed_text(const std::string& text, const std::string& what) {
    std::uint64_t value = 0;
    const char* first = text.data();
    const char* last = first + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        throw std::invalid_argument(what + " is not an unsigned integer: " + text);
    return value;
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("MSCM_SEED")) return parse_seed_text(env, "MSCM_SEED");
    return 0;
}

int default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

NodeSet node_set(const SigmaCG& g, const std::vector<std::string>& names) {
    std::vector<NodeId> ids;
    for (const auto& name : names) ids.push_back(g.node(name));
    return make_node_set(std::move(ids));
}

// ---------------------------------------------------------------------------
// graph check | reduce | separate

void run_graph_check(const std::string& path) {
    const auto g = parse_input(path, [&] { return graph_from_json(read_file(path)); });
    const auto report = validate(g);
    if (!report.ok) throw std::invalid_argument(path + ": " + report.message);
    std::cout << "ok: " << g.num_nodes() << " nodes, " << g.directed().size() << " directed, "
              << g.bidirected().size() << " bidirected, " << g.undirected().size()
              << " undirected, " << g.sigma_classes().size() << " sigma classes\n";
}

struct ReduceArgs {
    std::string path;
    std::vector<std::string> marginals, conditionals;
    std::string out = "-";
};

void run_graph_reduce(const ReduceArgs& a) {
    const auto g = parse_input(a.path, [&] { return graph_from_json(read_file(a.path)); });
    const auto r = reduce(g, node_set(g, a.marginals), node_set(g, a.conditionals));
    write_output(a.out, graph_to_json(r));
}

struct SeparateArgs {
    std::string path;
    std::vector<std::string> x, y, z;
    std::string mode = "sigma";
    std::string backend = "reduction";
    bool explain = false;
};

void run_graph_separate(const SeparateArgs& a) {
    const auto g = parse_input(a.path, [&] { return graph_from_json(read_file(a.path)); });
    const SeparationQuery q(node_set(g, a.x), node_set(g, a.y), node_set(g, a.z));
    const auto backend = a.backend == "walk" ? SepBackend::walk : SepBackend::reduction;
    const bool sigma_mode = a.mode == "sigma";
    const bool separated =
        sigma_mode ? sigma_separated(g, q, backend) : d_separated(g, q, backend);
    std::cout << (separated ? "separated" : "connected") << '\n';
    if (!separated && a.explain) {
        const auto base = sigma_mode ? g : finest_sigma(g);
        if (const auto walk = connecting_walk(base, q))
            std::cout << format_walk(base, *walk) << '\n';
    }
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    int d = 4, k = 1, n = 10000, interventions = 0;
    double p = 0.3;
    std::string seed; // empty = MSCM_SEED or 0
    std::string out = ".";
};

void run_simulate(const SimulateArgs& a) {
    const std::uint64_t seed =
        a.seed.empty() ? default_seed() : parse_seed_text(a.seed, "--seed");
    const MSCM m = random_mscm(a.d, a.k, a.p, seed);
    std::filesystem::create_directories(a.out);
    const auto in_dir = [&](const std::string& name) { return a.out + "/" + name; };

    save_mscm(m, in_dir("model.json"));
    std::cout << "wrote " << in_dir("model.json") << '\n';
    save_graph(induced_sigma_cg(m), in_dir("graph.json"));
    std::cout << "wrote " << in_dir("graph.json") << '\n';

    // Regime construction matches the evaluation harness: the observational
    // regime plus single-target regimes drawn without replacement.
    if (a.interventions > a.d)
        throw std::invalid_argument("more interventions than observed nodes");
    auto rng = make_rng(seed, 1);
    std::vector<int> perm(a.d);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = a.d - 1; i > 0; --i) {
        const auto j = static_cast<int>(uniform_below(rng, i + 1));
        std::swap(perm[i], perm[j]);
    }
    std::vector<std::vector<int>> regimes = {{}};
    for (int r = 0; r < a.interventions; ++r) regimes.push_back({perm[r]});

    for (std::size_t r = 0; r < regimes.size(); ++r) {
        const auto ds = sample(m, a.n, InterventionSpec(regimes[r]), derive_seed(seed, 2 + r));
        const std::string name =
            regimes[r].empty() ? "data_obs.csv" : "data_int_" + m.observed[regimes[r][0]] + ".csv";
        save_dataset(ds, in_dir(name), "model.json");
        std::cout << "wrote " << in_dir(name) << '\n';
    }
}

// ---------------------------------------------------------------------------
// citest

struct CitestArgs {
    std::vector<std::string> files;
    std::string dir;
    double alpha = 1e-3;
    int max_cond = -1;
    bool exclude_intervened = false;
    std::string out = "-";
};

void run_citest(const CitestArgs& a) {
    std::vector<std::string> files = a.files;
    if (!a.dir.empty()) {
        if (!std::filesystem::is_directory(a.dir)) throw InputError(a.dir + " is not a directory");
        for (const auto& entry : std::filesystem::directory_iterator(a.dir))
            if (entry.path().extension() == ".csv") files.push_back(entry.path().string());
        std::sort(files.begin(), files.end());
    }
    if (files.empty()) throw std::invalid_argument("no dataset files given");

    std::vector<Dataset> datasets;
    for (const auto& f : files)
        datasets.push_back(parse_input(f, [&] { return load_dataset(f); }));

    StatementOptions opt;
    opt.alpha = a.alpha;
    opt.max_cond_size = a.max_cond;
    opt.exclude_intervened = a.exclude_intervened;
    const auto statements = generate_statements(datasets, opt);
    write_output(a.out, statements_to_csv(statements, datasets.front().columns));
    if (a.out != "-")
        std::cout << "wrote " << statements.size() << " statements to " << a.out << '\n';
}

// ---------------------------------------------------------------------------
// discover and score

struct DiscoverArgs {
    std::string statements;
    bool acyclic = false;
    std::string mode = "sigma";
    std::string backend = "reduction";
    int max_nodes = 5;
    std::uint64_t cap_argmin = 1000000;
    int threads = default_threads();
    std::string out = "-";
};

void run_discover(const DiscoverArgs& a) {
    const auto file =
        parse_input(a.statements, [&] { return statements_from_csv(read_file(a.statements)); });
    SolveOptions opt;
    opt.acyclic = a.acyclic;
    opt.mode = a.mode == "d" ? SeparationMode::d : SeparationMode::sigma;
    opt.backend = a.backend == "walk"     ? SolverBackend::walk
                  : a.backend == "packed" ? SolverBackend::packed
                                          : SolverBackend::reduction;
    opt.max_nodes = a.max_nodes;
    opt.argmin_cap = a.cap_argmin;
    opt.threads = a.threads;
    const int nodes = static_cast<int>(file.nodes.size());
    const auto result = solve(file.statements, nodes, opt);
    const auto features = score_all_features(file.statements, nodes, opt);
    write_output(a.out, report_to_json(result, features, file.nodes));
}

struct ScoreArgs {
    std::string graph, statements;
};

void run_score(const ScoreArgs& a) {
    const auto g = parse_input(a.graph, [&] { return graph_from_json(read_file(a.graph)); });
    const auto file =
        parse_input(a.statements, [&] { return statements_from_csv(read_file(a.statements)); });
    const auto h = hypothesis_from(g);
    const auto translate = [&](int id) { return g.node(file.nodes.at(id)); };
    auto statements = file.statements;
    for (auto& s : statements) {
        s.w = translate(s.w);
        s.y = translate(s.y);
        for (auto& v : s.z) v = translate(v);
        for (auto& v : s.regime) v = translate(v);
        std::sort(s.z.begin(), s.z.end());
        std::sort(s.regime.begin(), s.regime.end());
    }
    std::cout << fmt(loss(h, statements)) << '\n';
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
    std::string config;
    std::string out = ".";
    int threads = default_threads();
    std::string seed; // overrides the config when set
};

void run_evaluate(const EvaluateArgs& a) {
    auto cfg = parse_input(a.config, [&] { return config_from_json(read_file(a.config)); });
    if (!a.seed.empty()) cfg.seed = parse_seed_text(a.seed, "--seed");
    if (cfg.d >= 5)
        std::cerr << "warning: d = 5 explores 2^30 graphs per replicate; expect hours\n";
    const auto result = run_experiment(cfg, a.threads);
    std::filesystem::create_directories(a.out);
    write_experiment_files(result, a.out);
    for (const auto* name : {"scores.csv", "curves.csv", "summary.json"})
        std::cout << "wrote " << a.out << '/' << name << '\n';
    if (result.skipped > 0) std::cout << "regenerated models: " << result.skipped << '\n';
    const auto curves = experiment_curves(result);
    if (curves.directed)
        std::cout << "directed auc " << fmt(curves.directed->auc) << ", ap "
                  << fmt(curves.directed->average_precision) << '\n';
    if (curves.bidirected)
        std::cout << "bidirected auc " << fmt(curves.bidirected->auc) << ", ap "
                  << fmt(curves.bidirected->average_precision) << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sigma-connection graphs: separation, simulation, discovery, evaluation"};
    app.require_subcommand(1);

    auto* graph = app.add_subcommand("graph", "inspect and transform graph files");
    graph->require_subcommand(1);

    auto check_path = std::make_shared<std::string>();
    auto* check = graph->add_subcommand("check", "validate a graph file and print a summary");
    check->add_option("file", *check_path, "graph JSON file")->required();
    check->callback([check_path] { run_graph_check(*check_path); });

    auto reduce_args = std::make_shared<ReduceArgs>();
    auto* red = graph->add_subcommand("reduce", "marginalise and condition nodes away");
    red->add_option("file", reduce_args->path, "graph JSON file")->required();
    red->add_option("--marginalise", reduce_args->marginals, "node names to marginalise out");
    red->add_option("--condition", reduce_args->conditionals, "node names to condition on");
    red->add_option("-o,--out", reduce_args->out, "output file, - for stdout");
    red->callback([reduce_args] { run_graph_reduce(*reduce_args); });

    auto sep_args = std::make_shared<SeparateArgs>();
    auto* sep = graph->add_subcommand("separate", "decide separation between node sets");
    sep->add_option("file", sep_args->path, "graph JSON file")->required();
    sep->add_option("--x", sep_args->x, "first node set")->required();
    sep->add_option("--y", sep_args->y, "second node set")->required();
    sep->add_option("--z", sep_args->z, "conditioning set");
    sep->add_option("--mode", sep_args->mode, "sigma or d")
        ->check(CLI::IsMember({"sigma", "d"}));
    sep->add_option("--backend", sep_args->backend, "reduction or walk")
        ->check(CLI::IsMember({"reduction", "walk"}));
    sep->add_flag("--explain", sep_args->explain, "print a connecting walk when connected");
    sep->callback([sep_args] { run_graph_separate(*sep_args); });

    auto sim_args = std::make_shared<SimulateArgs>();
    auto* sim = app.add_subcommand("simulate", "draw a random model and sample datasets");
    sim->add_option("--d", sim_args->d, "observed nodes")->capture_default_str();
    sim->add_option("--k", sim_args->k, "latent confounders")->capture_default_str();
    sim->add_option("--p", sim_args->p, "edge density")->capture_default_str();
    sim->add_option("--n", sim_args->n, "rows per regime")->capture_default_str();
    sim->add_option("--interventions", sim_args->interventions,
                    "number of single-target regimes beyond the observational one")
        ->capture_default_str();
    sim->add_option("--seed", sim_args->seed, "random seed (falls back to MSCM_SEED)");
    sim->add_option("--out", sim_args->out, "output directory")->capture_default_str();
    sim->callback([sim_args] { run_simulate(*sim_args); });

    auto ci_args = std::make_shared<CitestArgs>();
    auto* ci = app.add_subcommand("citest", "run weighted independence tests on datasets");
    ci->add_option("files", ci_args->files, "dataset CSV files");
    ci->add_option("--dir", ci_args->dir, "directory whose *.csv files are the datasets");
    ci->add_option("--alpha", ci_args->alpha, "significance level")->capture_default_str();
    ci->add_option("--max-cond", ci_args->max_cond, "largest condition set, -1 for all")
        ->capture_default_str();
    ci->add_flag("--exclude-intervened", ci_args->exclude_intervened,
                 "drop statements touching their regime's targets");
    ci->add_option("-o,--out", ci_args->out, "statements CSV, - for stdout");
    ci->callback([ci_args] { run_citest(*ci_args); });

    auto disc_args = std::make_shared<DiscoverArgs>();
    auto* disc = app.add_subcommand("discover", "search graph space for the minimum-loss model");
    disc->add_option("--statements", disc_args->statements, "statements CSV")->required();
    disc->add_flag("--acyclic", disc_args->acyclic, "restrict to acyclic directed parts");
    disc->add_option("--mode", disc_args->mode, "separation notion, sigma or d")
        ->check(CLI::IsMember({"sigma", "d"}));
    disc->add_option("--max-nodes", disc_args->max_nodes, "refuse larger inputs")
        ->capture_default_str();
    disc->add_option("--cap-argmin", disc_args->cap_argmin, "stored minimizers")
        ->capture_default_str();
    disc->add_option("--threads", disc_args->threads, "worker threads")->capture_default_str();
    disc->add_option("--sep-backend", disc_args->backend, "reduction, walk or packed")
        ->check(CLI::IsMember({"reduction", "walk", "packed"}));
    disc->add_option("-o,--out", disc_args->out, "report JSON, - for stdout");
    disc->callback([disc_args] { run_discover(*disc_args); });

    auto score_args = std::make_shared<ScoreArgs>();
    auto* score = app.add_subcommand("score", "loss of a candidate graph against statements");
    score->add_option("--graph", score_args->graph, "candidate graph JSON")->required();
    score->add_option("--statements", score_args->statements, "statements CSV")->required();
    score->callback([score_args] { run_score(*score_args); });

    auto eval_args = std::make_shared<EvaluateArgs>();
    auto* eval = app.add_subcommand("evaluate", "replicate experiments and write score curves");
    eval->add_option("--config", eval_args->config, "experiment config JSON")->required();
    eval->add_option("--out", eval_args->out, "output directory")->capture_default_str();
    eval->add_option("--threads", eval_args->threads, "worker threads")->capture_default_str();
    eval->add_option("--seed", eval_args->seed, "override the config's seed");
    eval->callback([eval_args] { run_evaluate(*eval_args); });

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::logic_error& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return kExitRuntime;
    }
}
