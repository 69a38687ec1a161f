#include "scg/ci.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "scg/stats.hpp"

namespace scg {

namespace {

constexpr double kMinP = 1e-300;
constexpr double kRhoGuard = 1e-12;  // keeps atanh off the poles
constexpr double kPivotTol = 1e-12;

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct CorrData {
    std::vector<std::vector<double>> corr;
    std::vector<char> flat; // zero-variance columns
    long n = 0;
};

CorrData correlation_data(const std::vector<std::vector<double>>& columns) {
    const int d = static_cast<int>(columns.size());
    CorrData cd;
    cd.n = d ? static_cast<long>(columns[0].size()) : 0;
    for (const auto& c : columns)
        if (static_cast<long>(c.size()) != cd.n)
            throw std::invalid_argument("columns must share one length");

    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < d; ++i) {
        for (double v : columns[i]) mean[i] += v;
        if (cd.n > 0) mean[i] /= static_cast<double>(cd.n);
    }
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            double acc = 0.0;
            for (long r = 0; r < cd.n; ++r)
                acc += (columns[i][r] - mean[i]) * (columns[j][r] - mean[j]);
            cov[i][j] = cov[j][i] = acc;
        }
    cd.flat.assign(d, 0);
    for (int i = 0; i < d; ++i)
        if (cov[i][i] <= 0.0) cd.flat[i] = 1;
    cd.corr.assign(d, std::vector<double>(d, 0.0));
    for (int i = 0; i < d; ++i) {
        cd.corr[i][i] = 1.0;
        for (int j = i + 1; j < d; ++j) {
            if (cd.flat[i] || cd.flat[j]) continue;
            cd.corr[i][j] = cd.corr[j][i] = cov[i][j] / std::sqrt(cov[i][i] * cov[j][j]);
        }
    }
    return cd;
}

bool invert(std::vector<std::vector<double>>& a) {
    const int k = static_cast<int>(a.size());
    std::vector<std::vector<double>> inv(k, std::vector<double>(k, 0.0));
    for (int i = 0; i < k; ++i) inv[i][i] = 1.0;
    for (int col = 0; col < k; ++col) {
        int pivot = col;
        for (int r = col + 1; r < k; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < kPivotTol) return false;
        std::swap(a[pivot], a[col]);
        std::swap(inv[pivot], inv[col]);
        const double scale = a[col][col];
        for (int c = 0; c < k; ++c) {
            a[col][c] /= scale;
            inv[col][c] /= scale;
        }
        for (int r = 0; r < k; ++r) {
            if (r == col) continue;
            const double f = a[r][col];
            if (f == 0.0) continue;
            for (int c = 0; c < k; ++c) {
                a[r][c] -= f * a[col][c];
                inv[r][c] -= f * inv[col][c];
            }
        }
    }
    a = std::move(inv);
    return true;
}

CorrelationTest test_from(const CorrData& cd, int w, int y, const std::vector<int>& z) {
    const int d = static_cast<int>(cd.corr.size());
    auto check = [&](int v) {
        if (v < 0 || v >= d) throw std::invalid_argument("column index out of range");
    };
    check(w);
    check(y);
    if (w == y) throw std::invalid_argument("test needs two distinct columns");
    std::vector<int> zs = z;
    std::sort(zs.begin(), zs.end());
    if (std::adjacent_find(zs.begin(), zs.end()) != zs.end())
        throw std::invalid_argument("condition set repeats a column");
    for (int v : zs) {
        check(v);
        if (v == w || v == y) throw std::invalid_argument("condition set contains a tested column");
    }
    if (cd.n <= static_cast<long>(zs.size()) + 3)
        throw std::invalid_argument("test needs more rows than |Z| + 3");

    if (cd.flat[w] || cd.flat[y]) return {0.0, 1.0, true};
    for (int v : zs)
        if (cd.flat[v]) return {0.0, 1.0, true};

    // Canonical index order makes the result exactly symmetric in (w, y) and
    // invariant under permutations of Z.
    std::vector<int> idx = {std::min(w, y), std::max(w, y)};
    idx.insert(idx.end(), zs.begin(), zs.end());
    const int k = static_cast<int>(idx.size());
    std::vector<std::vector<double>> sub(k, std::vector<double>(k));
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) sub[i][j] = cd.corr[idx[i]][idx[j]];
    if (!invert(sub)) return {0.0, 1.0, true};

    double rho = -sub[0][1] / std::sqrt(sub[0][0] * sub[1][1]);
    rho = std::clamp(rho, -1.0 + kRhoGuard, 1.0 - kRhoGuard);
    const double dof = static_cast<double>(cd.n) - static_cast<double>(zs.size()) - 3.0;
    const double zstat = std::atanh(rho) * std::sqrt(dof);
    return {rho, two_sided_p(zstat), false};
}

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("alpha must lie strictly between 0 and 1");
}

// Condition sets in increasing bitmask order; the final sort puts everything
// into lexicographic order anyway.
template <typename Fn>
void for_each_condition_set(const std::vector<int>& pool, int max_size, Fn&& fn) {
    const int m = static_cast<int>(pool.size());
    if (m > 30) throw std::invalid_argument("too many conditioning candidates");
    for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
        if (max_size >= 0 && std::popcount(mask) > static_cast<unsigned>(max_size)) continue;
        std::vector<int> zs;
        for (int i = 0; i < m; ++i)
            if (mask & (1u << i)) zs.push_back(pool[i]);
        fn(std::move(zs));
    }
}

void sort_statements(std::vector<IndependenceStatement>& out) {
    std::sort(out.begin(), out.end(), [](const IndependenceStatement& a, const IndependenceStatement& b) {
        return std::tie(a.regime, a.w, a.y, a.z) < std::tie(b.regime, b.w, b.y, b.z);
    });
}

} // namespace

RankResult gauss_rank_transform(const std::vector<double>& column) {
    const int n = static_cast<int>(column.size());
    if (n < 2) throw std::invalid_argument("gauss_rank_transform: need at least two values");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return column[a] < column[b]; });

    RankResult out;
    out.values.resize(n);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j < n && column[order[j]] == column[order[i]]) ++j;
        const double rank = (i + 1 + j) / 2.0; // average of one-based ranks i+1 .. j
        const double q = norm_quantile(rank / (n + 1.0));
        for (int t = i; t < j; ++t) out.values[order[t]] = q;
        i = j;
    }
    out.degenerate = column[order[0]] == column[order[n - 1]];
    return out;
}

CorrelationTest partial_correlation_test(const std::vector<std::vector<double>>& columns, int w,
                                         int y, const std::vector<int>& z) {
    return test_from(correlation_data(columns), w, y, z);
}

double weight(double p_value, double alpha) {
    check_alpha(alpha);
    const double p = std::min(1.0, std::max(kMinP, p_value));
    return std::log(p) - std::log(alpha);
}

std::vector<IndependenceStatement> generate_statements(const std::vector<Dataset>& datasets,
                                                       const StatementOptions& opt) {
    if (datasets.empty()) throw std::invalid_argument("generate_statements: need at least one dataset");
    check_alpha(opt.alpha);
    const auto& names = datasets[0].columns;
    const int d = static_cast<int>(names.size());
    std::set<std::vector<int>> regimes;
    for (const auto& ds : datasets) {
        if (ds.columns != names)
            throw std::invalid_argument("generate_statements: datasets must share the variable set");
        if (!regimes.insert(ds.targets).second)
            throw std::invalid_argument("generate_statements: duplicate regime");
    }

    std::vector<IndependenceStatement> out;
    for (const auto& ds : datasets) {
        std::vector<std::vector<double>> cols(d);
        for (int i = 0; i < d; ++i) {
            std::vector<double> raw(ds.rows.size());
            for (std::size_t r = 0; r < ds.rows.size(); ++r) raw[r] = ds.rows[r][i];
            cols[i] = gauss_rank_transform(raw).values;
        }
        const auto cd = correlation_data(cols);
        std::vector<char> is_target(d, 0);
        for (int t : ds.targets) is_target[t] = 1;

        for (int w = 0; w < d; ++w) {
            if (opt.exclude_intervened && is_target[w]) continue;
            for (int y = w + 1; y < d; ++y) {
                if (opt.exclude_intervened && is_target[y]) continue;
                std::vector<int> pool;
                for (int v = 0; v < d; ++v)
                    if (v != w && v != y && !(opt.exclude_intervened && is_target[v]))
                        pool.push_back(v);
                for_each_condition_set(pool, opt.max_cond_size, [&](std::vector<int> zs) {
                    const auto ct = test_from(cd, w, y, zs);
                    out.push_back({w, y, std::move(zs), ds.targets,
                                   weight(ct.p_value, opt.alpha), ct.p_value});
                });
            }
        }
    }
    sort_statements(out);
    return out;
}

std::vector<IndependenceStatement> oracle_statements(const SigmaCG& g,
                                                     const std::vector<std::vector<int>>& regimes,
                                                     const StatementOptions& opt) {
    if (regimes.empty()) throw std::invalid_argument("oracle_statements: need at least one regime");
    const int d = g.num_nodes();
    const double inf = std::numeric_limits<double>::infinity();
    std::set<std::vector<int>> seen;
    std::vector<IndependenceStatement> out;
    for (const auto& raw : regimes) {
        const auto regime = make_node_set(raw);
        if (!seen.insert(regime).second)
            throw std::invalid_argument("oracle_statements: duplicate regime");
        const auto h = intervened_graph(g, regime);
        std::vector<char> is_target(d, 0);
        for (int t : regime) is_target[t] = 1;

        for (int w = 0; w < d; ++w) {
            if (opt.exclude_intervened && is_target[w]) continue;
            for (int y = w + 1; y < d; ++y) {
                if (opt.exclude_intervened && is_target[y]) continue;
                std::vector<int> pool;
                for (int v = 0; v < d; ++v)
                    if (v != w && v != y && !(opt.exclude_intervened && is_target[v]))
                        pool.push_back(v);
                for_each_condition_set(pool, opt.max_cond_size, [&](std::vector<int> zs) {
                    const bool sep = sigma_separated(h, SeparationQuery({w}, {y}, zs));
                    out.push_back({w, y, std::move(zs), regime, sep ? inf : -inf,
                                   std::numeric_limits<double>::quiet_NaN()});
                });
            }
        }
    }
    sort_statements(out);
    return out;
}

namespace {

std::string join_names(const std::vector<int>& ids, const std::vector<std::string>& nodes) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ';';
        out += nodes.at(ids[i]);
    }
    return out;
}

std::string lambda_token(double lambda) {
    if (std::isinf(lambda)) return lambda > 0 ? "inf" : "-inf";
    return fmt17(lambda);
}

double parse_double(const std::string& cell, const char* what) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error(std::string("statement CSV: bad ") + what + " value: " + cell);
    }
    if (pos != cell.size())
        throw std::runtime_error(std::string("statement CSV: bad ") + what + " value: " + cell);
    return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.push_back("");
    return out;
}

} // namespace

std::string statements_to_csv(const std::vector<IndependenceStatement>& statements,
                              const std::vector<std::string>& nodes) {
    std::string out = "# nodes: ";
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (i) out += ',';
        out += nodes[i];
    }
    out += "\nw,y,Z,I,lambda,p_value\n";
    for (const auto& s : statements) {
        out += nodes.at(s.w) + ',' + nodes.at(s.y) + ',';
        out += join_names(s.z, nodes) + ',' + join_names(s.regime, nodes) + ',';
        out += lambda_token(s.lambda) + ',' + fmt17(s.p_value) + '\n';
    }
    return out;
}

StatementFile statements_from_csv(const std::string& text) {
    StatementFile file;
    std::stringstream in(text);
    std::string line;
    bool pinned = false;
    std::map<std::string, int> index;
    auto resolve = [&](const std::string& name) {
        const auto it = index.find(name);
        if (it != index.end()) return it->second;
        if (pinned) throw std::runtime_error("statement CSV: name missing from node list: " + name);
        if (name.empty()) throw std::runtime_error("statement CSV: empty node name");
        const int id = static_cast<int>(file.nodes.size());
        file.nodes.push_back(name);
        index.emplace(name, id);
        return id;
    };

    if (!std::getline(in, line)) throw std::runtime_error("statement CSV: empty input");
    if (line.rfind("# nodes:", 0) == 0) {
        pinned = true;
        for (auto& name : split(line.substr(8), ',')) {
            name.erase(0, name.find_first_not_of(' '));
            if (name.empty()) throw std::runtime_error("statement CSV: empty node name");
            if (index.count(name)) throw std::runtime_error("statement CSV: duplicate node: " + name);
            index.emplace(name, static_cast<int>(file.nodes.size()));
            file.nodes.push_back(name);
        }
        if (!std::getline(in, line)) throw std::runtime_error("statement CSV: missing header");
    }
    if (line != "w,y,Z,I,lambda,p_value")
        throw std::runtime_error("statement CSV: unexpected header: " + line);

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != 6)
            throw std::runtime_error("statement CSV: expected 6 columns, got " +
                                     std::to_string(cells.size()));
        IndependenceStatement s;
        s.w = resolve(cells[0]);
        s.y = resolve(cells[1]);
        if (s.w == s.y) throw std::runtime_error("statement CSV: w and y coincide: " + cells[0]);
        for (const auto& name : split(cells[2], ';'))
            if (!name.empty()) s.z.push_back(resolve(name));
        for (const auto& name : split(cells[3], ';'))
            if (!name.empty()) s.regime.push_back(resolve(name));
        std::sort(s.z.begin(), s.z.end());
        s.z.erase(std::unique(s.z.begin(), s.z.end()), s.z.end());
        std::sort(s.regime.begin(), s.regime.end());
        s.regime.erase(std::unique(s.regime.begin(), s.regime.end()), s.regime.end());
        if (std::binary_search(s.z.begin(), s.z.end(), s.w) ||
            std::binary_search(s.z.begin(), s.z.end(), s.y))
            throw std::runtime_error("statement CSV: condition set contains a tested node");
        s.lambda = parse_double(cells[4], "lambda");
        s.p_value = parse_double(cells[5], "p_value");
        file.statements.push_back(std::move(s));
    }
    return file;
}

void save_statements(const std::vector<IndependenceStatement>& statements,
                     const std::vector<std::string>& nodes, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write statement file: " + path);
    out << statements_to_csv(statements, nodes);
}

StatementFile load_statements(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open statement file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return statements_from_csv(buf.str());
}

} // namespace scg
