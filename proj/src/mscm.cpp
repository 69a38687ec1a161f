#include "scg/mscm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "scg/rng.hpp"

namespace scg {

namespace {

void check_model_name(const std::string& s) {
    if (s.empty()) throw std::invalid_argument("node name must be non-empty");
    if (s.find(',') != std::string::npos || s.find(';') != std::string::npos)
        throw std::invalid_argument("node name must not contain ',' or ';': " + s);
}

double laplace(std::mt19937_64& rng) {
    const double u = uniform01_open(rng);
    return u < 0.5 ? std::log(2.0 * u) : -std::log(2.0 * (1.0 - u));
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

int MSCM::node(const std::string& name) const {
    for (int i = 0; i < num_observed(); ++i)
        if (observed[i] == name) return i;
    throw std::runtime_error("unknown node: " + name);
}

std::vector<int> MSCM::parents(int v) const {
    std::vector<int> pa;
    for (const auto& [u, w] : edges)
        if (w == v) pa.push_back(u);
    return pa;
}

std::vector<std::vector<int>> MSCM::latent_parents() const {
    std::vector<std::vector<int>> lp(observed.size());
    for (int j = 0; j < num_latents(); ++j)
        for (int c : latents[j].children) lp[c].push_back(j);
    return lp;
}

InterventionSpec::InterventionSpec(std::vector<int> ts) : targets(std::move(ts)) {
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
}

std::vector<double> sample_l1_ball(int dim, std::mt19937_64& rng) {
    if (dim < 1) throw std::invalid_argument("sample_l1_ball: dim must be >= 1");
    std::vector<double> y(dim);
    double norm = 0.0;
    for (double& v : y) {
        v = laplace(rng);
        norm += std::abs(v);
    }
    const double s = norm + exp1(rng);
    for (double& v : y) v /= s;
    return y;
}

MSCM random_mscm(int d, int k, double p, std::uint64_t seed) {
    if (d < 1) throw std::invalid_argument("random_mscm: need at least one observed node");
    if (k < 0) throw std::invalid_argument("random_mscm: latent count must be non-negative");
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("random_mscm: edge probability must lie in [0, 1]");
    const long long max_pairs = static_cast<long long>(d) * (d - 1) / 2;
    if (k > max_pairs)
        throw std::invalid_argument("random_mscm: more latent confounders than node pairs");

    MSCM m;
    m.seed = seed;
    for (int i = 0; i < d; ++i) m.observed.push_back("v" + std::to_string(i + 1));

    auto rng = make_rng(seed);
    for (int u = 0; u < d; ++u)
        for (int v = 0; v < d; ++v)
            if (u != v && uniform01(rng) < p) m.edges.insert({u, v});

    // Confounders get distinct pairs; every pair is incomparable with every
    // other pair and with the coverage singletons added below, so child sets
    // never nest.
    std::set<std::pair<int, int>> pairs;
    for (int j = 0; j < k; ++j) {
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            int a = static_cast<int>(uniform_below(rng, d));
            int b = static_cast<int>(uniform_below(rng, d - 1));
            if (b >= a) ++b;
            if (pairs.insert({std::min(a, b), std::max(a, b)}).second) placed = true;
        }
        if (!placed) throw std::runtime_error("random_mscm: could not place distinct confounder pairs");
    }
    std::vector<char> covered(d, 0);
    int u_index = 0;
    for (const auto& [a, b] : pairs) {
        m.latents.push_back({"u" + std::to_string(++u_index), {a, b}});
        covered[a] = covered[b] = 1;
    }
    for (int v = 0; v < d; ++v)
        if (!covered[v]) m.latents.push_back({"u" + std::to_string(++u_index), {v}});

    m.weights.assign(d, std::vector<double>(d, 0.0));
    for (int v = 0; v < d; ++v) {
        const auto pa = m.parents(v);
        if (pa.empty()) continue;
        const auto w = sample_l1_ball(static_cast<int>(pa.size()), rng);
        for (std::size_t i = 0; i < pa.size(); ++i) m.weights[v][pa[i]] = w[i];
    }
    m.bias.resize(d);
    for (int v = 0; v < d; ++v) m.bias[v] = -0.5 + 0.2 * std_normal(rng);
    return m;
}

ContractionReport check_contraction(const MSCM& m) {
    ContractionReport rep{true, 0.0, ""};
    for (int v = 0; v < m.num_observed(); ++v) {
        double sum = 0.0;
        for (double w : m.weights[v]) sum += std::abs(w);
        if (sum > rep.max_row_sum) rep.max_row_sum = sum;
        if (sum >= 1.0 && rep.ok) {
            rep.ok = false;
            rep.message = "weight row of " + m.observed[v] + " has L1 norm " + fmt17(sum) +
                          ", breaking the contraction bound";
        }
    }
    return rep;
}

FixedPointResult solve_fixed_point(const MSCM& m, const std::vector<double>& latent_values,
                                   const std::vector<std::pair<int, double>>& fixed,
                                   const std::vector<double>& init) {
    const int d = m.num_observed();
    if (static_cast<int>(latent_values.size()) != m.num_latents())
        throw std::invalid_argument("solve_fixed_point: need one value per latent");
    if (!init.empty() && static_cast<int>(init.size()) != d)
        throw std::invalid_argument("solve_fixed_point: init size mismatch");

    std::vector<double> noise(d, 0.0);
    for (int j = 0; j < m.num_latents(); ++j)
        for (int c : m.latents[j].children) noise[c] += latent_values[j];

    FixedPointResult res;
    res.x = init.empty() ? std::vector<double>(d, 0.0) : init;
    std::vector<char> held(d, 0);
    int free_count = d;
    for (const auto& [v, value] : fixed) {
        if (v < 0 || v >= d) throw std::invalid_argument("solve_fixed_point: fixed node out of range");
        if (!held[v]) --free_count;
        held[v] = 1;
        res.x[v] = value;
    }
    if (free_count == 0) return res;

    std::vector<double> next = res.x;
    for (int t = 1; t <= kFixedPointCap; ++t) {
        double delta = 0.0;
        for (int v = 0; v < d; ++v) {
            if (held[v]) continue;
            double acc = m.bias[v];
            const auto& row = m.weights[v];
            for (int u = 0; u < d; ++u) acc += row[u] * res.x[u];
            next[v] = std::tanh(acc) + noise[v];
            delta = std::max(delta, std::abs(next[v] - res.x[v]));
        }
        res.x = next;
        res.iterations = t;
        res.residual = delta;
        res.residuals.push_back(delta);
        if (delta < kFixedPointTol) return res;
    }
    res.converged = false;
    return res;
}

MSCM intervene(const MSCM& m, const InterventionSpec& spec) {
    for (int t : spec.targets)
        if (t < 0 || t >= m.num_observed())
            throw std::invalid_argument("intervene: unknown target index " + std::to_string(t));
    if (spec.observational()) return m;

    MSCM out = m;
    std::vector<char> is_target(m.num_observed(), 0);
    for (int t : spec.targets) is_target[t] = 1;

    for (auto it = out.edges.begin(); it != out.edges.end();)
        it = is_target[it->second] ? out.edges.erase(it) : std::next(it);
    for (int t : spec.targets) {
        std::fill(out.weights[t].begin(), out.weights[t].end(), 0.0);
        out.bias[t] = 0.0;
    }

    std::vector<Latent> kept;
    for (auto& lat : out.latents) {
        std::vector<int> children;
        for (int c : lat.children)
            if (!is_target[c]) children.push_back(c);
        if (!children.empty()) kept.push_back({lat.name, std::move(children)});
    }
    for (int t : spec.targets) kept.push_back({"do_" + out.observed[t], {t}});
    out.latents = std::move(kept);
    return out;
}

SigmaCG induced_sigma_cg(const MSCM& m) {
    SigmaCG g(m.observed);
    for (const auto& [u, v] : m.edges) g.add_directed(u, v);
    for (const auto& lat : m.latents)
        for (std::size_t i = 0; i < lat.children.size(); ++i)
            for (std::size_t j = i + 1; j < lat.children.size(); ++j)
                g.add_bidirected(lat.children[i], lat.children[j]);
    return coarsest_sigma(g);
}

Dataset sample(const MSCM& m, int n, const InterventionSpec& regime, std::uint64_t seed) {
    if (n < 0) throw std::invalid_argument("sample: row count must be non-negative");
    for (int t : regime.targets)
        if (t < 0 || t >= m.num_observed())
            throw std::invalid_argument("sample: unknown target index " + std::to_string(t));
    const auto contraction = check_contraction(m);
    if (!contraction.ok) throw std::runtime_error("sample: " + contraction.message);

    Dataset ds;
    ds.columns = m.observed;
    ds.targets = regime.targets;
    ds.seed = seed;
    ds.model_seed = m.seed;
    ds.rows.reserve(n);

    std::vector<double> latent_values(m.num_latents());
    std::vector<std::pair<int, double>> fixed(regime.targets.size());
    for (int i = 0; i < n; ++i) {
        auto rng = make_rng(seed, static_cast<std::uint64_t>(i));
        for (double& v : latent_values) v = std_normal(rng);
        for (std::size_t j = 0; j < regime.targets.size(); ++j)
            fixed[j] = {regime.targets[j], std_normal(rng)};
        auto fp = solve_fixed_point(m, latent_values, fixed);
        if (!fp.converged)
            throw std::runtime_error("sample: fixed-point iteration failed to converge on row " +
                                     std::to_string(i) + " (residual " + fmt17(fp.residual) + ")");
        ds.max_iterations = std::max(ds.max_iterations, fp.iterations);
        ds.max_residual = std::max(ds.max_residual, fp.residual);
        ds.rows.push_back(std::move(fp.x));
    }
    return ds;
}

std::string mscm_to_json(const MSCM& m) {
    nlohmann::json j;
    j["observed"] = m.observed;
    j["latents"] = nlohmann::json::array();
    for (const auto& lat : m.latents) j["latents"].push_back(lat.name);
    auto edges = nlohmann::json::array();
    for (const auto& lat : m.latents)
        for (int c : lat.children) edges.push_back({lat.name, m.observed[c]});
    for (const auto& [u, v] : m.edges) edges.push_back({m.observed[u], m.observed[v]});
    j["edges"] = std::move(edges);
    auto weights = nlohmann::json::array();
    for (const auto& row : m.weights) {
        auto full = row;
        full.resize(row.size() + m.latents.size(), 0.0);
        weights.push_back(full);
    }
    j["weights"] = std::move(weights);
    j["bias"] = m.bias;
    j["seed"] = m.seed;
    return j.dump(2) + "\n";
}

MSCM mscm_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(std::string("model JSON parse error: ") + e.what());
    }
    for (const char* key : {"observed", "edges", "weights", "bias"})
        if (!j.contains(key)) throw std::runtime_error(std::string("model JSON missing field: ") + key);

    MSCM m;
    m.observed = j["observed"].get<std::vector<std::string>>();
    const int d = m.num_observed();
    if (d == 0) throw std::runtime_error("model JSON has no observed nodes");
    std::map<std::string, int> obs_index, lat_index;
    for (int i = 0; i < d; ++i) {
        check_model_name(m.observed[i]);
        if (!obs_index.emplace(m.observed[i], i).second)
            throw std::runtime_error("duplicate node name: " + m.observed[i]);
    }
    if (j.contains("latents")) {
        for (const auto& name_json : j["latents"]) {
            const auto name = name_json.get<std::string>();
            check_model_name(name);
            if (obs_index.count(name) || !lat_index.emplace(name, m.num_latents()).second)
                throw std::runtime_error("duplicate node name: " + name);
            m.latents.push_back({name, {}});
        }
    }

    for (const auto& e : j["edges"]) {
        if (!e.is_array() || e.size() != 2) throw std::runtime_error("model edge must be a name pair");
        const auto from = e[0].get<std::string>();
        const auto to = e[1].get<std::string>();
        const auto to_it = obs_index.find(to);
        if (to_it == obs_index.end()) {
            if (lat_index.count(to)) throw std::runtime_error("latent node cannot have parents: " + to);
            throw std::runtime_error("model edge uses unknown node: " + to);
        }
        if (const auto lat_it = lat_index.find(from); lat_it != lat_index.end()) {
            m.latents[lat_it->second].children.push_back(to_it->second);
        } else if (const auto obs_it = obs_index.find(from); obs_it != obs_index.end()) {
            if (obs_it->second == to_it->second)
                throw std::runtime_error("model edge must not be a self-loop: " + from);
            if (!m.edges.insert({obs_it->second, to_it->second}).second)
                throw std::runtime_error("duplicate model edge: " + from + " -> " + to);
        } else {
            throw std::runtime_error("model edge uses unknown node: " + from);
        }
    }
    for (auto& lat : m.latents) {
        std::sort(lat.children.begin(), lat.children.end());
        if (std::adjacent_find(lat.children.begin(), lat.children.end()) != lat.children.end())
            throw std::runtime_error("duplicate model edge out of latent " + lat.name);
        if (lat.children.empty()) throw std::runtime_error("latent node has no children: " + lat.name);
    }

    const auto weights = j["weights"].get<std::vector<std::vector<double>>>();
    const std::size_t width = m.observed.size() + m.latents.size();
    if (static_cast<int>(weights.size()) != d)
        throw std::runtime_error("weight matrix must have one row per observed node");
    m.weights.assign(d, std::vector<double>(d, 0.0));
    for (int v = 0; v < d; ++v) {
        if (weights[v].size() != width)
            throw std::runtime_error("weight row " + m.observed[v] + " must span observed plus latent columns");
        for (std::size_t k = 0; k < width; ++k) {
            const double w = weights[v][k];
            if (w == 0.0) continue;
            if (k >= static_cast<std::size_t>(d))
                throw std::runtime_error("latent weight columns must be zero (row " + m.observed[v] + ")");
            if (!m.edges.count({static_cast<int>(k), v}))
                throw std::runtime_error("nonzero weight without an edge: " + m.observed[k] + " -> " +
                                         m.observed[v]);
            m.weights[v][k] = w;
        }
    }
    m.bias = j["bias"].get<std::vector<double>>();
    if (static_cast<int>(m.bias.size()) != d)
        throw std::runtime_error("bias vector must have one entry per observed node");
    m.seed = j.value("seed", std::uint64_t{0});
    return m;
}

MSCM load_mscm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return mscm_from_json(buf.str());
}

void save_mscm(const MSCM& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << mscm_to_json(m);
}

namespace {

std::string manifest_path(const std::string& csv_path) {
    if (csv_path.size() >= 4 && csv_path.compare(csv_path.size() - 4, 4, ".csv") == 0)
        return csv_path.substr(0, csv_path.size() - 4) + ".json";
    return csv_path + ".json";
}

} // namespace

void save_dataset(const Dataset& ds, const std::string& csv_path, const std::string& model_ref) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write dataset file: " + csv_path);
    for (std::size_t i = 0; i < ds.columns.size(); ++i)
        out << (i ? "," : "") << ds.columns[i];
    out << "\n";
    for (const auto& row : ds.rows) {
        if (row.size() != ds.columns.size())
            throw std::runtime_error("dataset row width does not match header");
        for (std::size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << fmt17(row[i]);
        out << "\n";
    }

    nlohmann::json meta;
    auto targets = nlohmann::json::array();
    for (int t : ds.targets) targets.push_back(ds.columns.at(t));
    meta["targets"] = std::move(targets);
    meta["n"] = ds.rows.size();
    meta["seed"] = ds.seed;
    meta["model_seed"] = ds.model_seed;
    if (!model_ref.empty()) meta["model"] = model_ref;
    meta["max_iterations"] = ds.max_iterations;
    meta["max_residual"] = ds.max_residual;
    std::ofstream mout(manifest_path(csv_path));
    if (!mout) throw std::runtime_error("cannot write dataset manifest for: " + csv_path);
    mout << meta.dump(2) << "\n";
}

Dataset load_dataset(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + csv_path);
    Dataset ds;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("dataset file is empty: " + csv_path);
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) ds.columns.push_back(cell);
    if (ds.columns.empty()) throw std::runtime_error("dataset header has no columns: " + csv_path);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        row.reserve(ds.columns.size());
        std::stringstream ss(line);
        while (std::getline(ss, cell, ',')) {
            std::size_t pos = 0;
            double v;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw std::runtime_error("dataset cell is not a number: " + cell);
            }
            if (pos != cell.size()) throw std::runtime_error("dataset cell is not a number: " + cell);
            row.push_back(v);
        }
        if (row.size() != ds.columns.size())
            throw std::runtime_error("dataset row width does not match header");
        ds.rows.push_back(std::move(row));
    }

    std::ifstream min(manifest_path(csv_path));
    if (min) {
        nlohmann::json meta;
        try {
            min >> meta;
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(std::string("dataset manifest parse error: ") + e.what());
        }
        for (const auto& name_json : meta.value("targets", nlohmann::json::array())) {
            const auto name = name_json.get<std::string>();
            const auto it = std::find(ds.columns.begin(), ds.columns.end(), name);
            if (it == ds.columns.end())
                throw std::runtime_error("dataset manifest target is not a column: " + name);
            ds.targets.push_back(static_cast<int>(it - ds.columns.begin()));
        }
        std::sort(ds.targets.begin(), ds.targets.end());
        ds.seed = meta.value("seed", std::uint64_t{0});
        ds.model_seed = meta.value("model_seed", std::uint64_t{0});
        ds.max_iterations = meta.value("max_iterations", 0);
        ds.max_residual = meta.value("max_residual", 0.0);
    }
    return ds;
}

} // namespace scg
