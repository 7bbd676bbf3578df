#pragma once

// Shared fixtures and independent reference implementations for the tests.
// Nothing here calls into the library code it is used to check.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fundrank/fundrank.hpp"

namespace support {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(std::string_view tag = "t") {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                fmt::format("fundrank_{}_{}_{}", tag, static_cast<long>(::getpid()), counter.fetch_add(1));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(std::string_view name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// CSV text for one ticker: rows of (quarter_end, price, 20 fundamentals).
inline std::string stock_csv(const std::vector<std::vector<std::string>>& rows) {
    std::string out = "quarter_end,price";
    for (auto n : fundrank::kFundamentalColumns) out += "," + std::string(n);
    out += "\n";
    for (auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
        out += "\n";
    }
    return out;
}

// A complete series with one value per feature per quarter.
inline fundrank::StockSeries make_series(const std::string& ticker, fundrank::Quarter start,
                                         const std::vector<double>& prices,
                                         const std::vector<std::vector<double>>& values) {
    fundrank::StockSeries s;
    s.ticker = ticker;
    s.feature_names.assign(fundrank::kFundamentalColumns.begin(), fundrank::kFundamentalColumns.end());
    auto q = start;
    for (std::size_t t = 0; t < prices.size(); ++t, q = q.next()) {
        fundrank::RawRecord r{q, prices[t], {}};
        for (auto v : values[t]) r.values.emplace_back(v);
        s.records.push_back(std::move(r));
    }
    return s;
}

inline fundrank::BenchmarkSeries make_benchmark(fundrank::Quarter start, const std::vector<double>& levels) {
    fundrank::BenchmarkSeries b;
    auto q = start;
    for (double l : levels) {
        b.quarters.push_back(q);
        b.levels.push_back(l);
        q = q.next();
    }
    return b;
}

inline fundrank::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                                      double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    fundrank::Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = u(rng);
    return m;
}

// ---- reference implementations ----

// Dense forward pass written directly from the affine/activation definition.
inline double fnn_forward_oracle(const fundrank::fnn::FnnModel& m, const std::vector<double>& x) {
    std::vector<double> a = x;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& L = m.layers[l];
        std::vector<double> z(L.out);
        for (std::size_t o = 0; o < L.out; ++o) {
            long double s = L.bias[o];
            for (std::size_t i = 0; i < L.in; ++i) s += static_cast<long double>(L.weights[o * L.in + i]) * a[i];
            z[o] = static_cast<double>(s);
        }
        if (l + 1 < m.layers.size())
            for (auto& v : z) {
                switch (m.activation) {
                case fundrank::fnn::Activation::tanh: v = std::tanh(v); break;
                case fundrank::fnn::Activation::relu: v = v > 0 ? v : 0; break;
                case fundrank::fnn::Activation::logistic: v = 1.0 / (1.0 + std::exp(-v)); break;
                case fundrank::fnn::Activation::identity: break;
                }
            }
        a = std::move(z);
    }
    return a[0];
}

inline double fnn_mse_oracle(const fundrank::fnn::FnnModel& m, const fundrank::Matrix& x, const std::vector<double>& y) {
    long double s = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        double d = fnn_forward_oracle(m, {row.begin(), row.end()}) - y[r];
        s += static_cast<long double>(d) * d;
    }
    return static_cast<double>(s / static_cast<long double>(x.rows()));
}

// Plain recursive CART: every feature, every midpoint, variance reduction.
// Child SSE is computed in two passes, independently of the library's running sums.
struct CartOracle {
    struct Node {
        int feature = -1;
        double threshold = 0;
        double value = 0;
        int left = -1, right = -1;
    };
    std::vector<Node> nodes;
    std::size_t min_split = 2;

    void fit(const fundrank::Matrix& x, const std::vector<double>& y, std::size_t min_samples_split) {
        min_split = min_samples_split;
        nodes.clear();
        std::vector<std::size_t> idx(x.rows());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        grow(x, y, idx);
    }

    int grow(const fundrank::Matrix& x, const std::vector<double>& y, const std::vector<std::size_t>& idx) {
        double mean = 0;
        for (auto i : idx) mean += y[i];
        mean /= static_cast<double>(idx.size());
        int id = static_cast<int>(nodes.size());
        nodes.push_back({-1, 0, mean, -1, -1});
        if (idx.size() < min_split) return id;
        double sse = 0;
        for (auto i : idx) sse += (y[i] - mean) * (y[i] - mean);
        if (sse <= 0) return id;

        // near-ties (within 1e-10 of the node's sum of squares) keep the earlier feature and threshold
        double sumsq = 0;
        for (auto i : idx) sumsq += y[i] * y[i];
        int best_f = -1;
        double best_t = 0, best_sse = std::numeric_limits<double>::infinity();
        for (std::size_t f = 0; f < x.cols(); ++f) {
            std::vector<double> vals;
            for (auto i : idx) vals.push_back(x(i, f));
            std::sort(vals.begin(), vals.end());
            vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
            for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
                double t = vals[k] + (vals[k + 1] - vals[k]) / 2.0;
                double sl = 0, sr = 0, nl = 0, nr = 0;
                for (auto i : idx) (x(i, f) <= t ? (sl += y[i], nl += 1) : (sr += y[i], nr += 1));
                double ml = sl / nl, mr = sr / nr, child = 0;
                for (auto i : idx) child += x(i, f) <= t ? (y[i] - ml) * (y[i] - ml) : (y[i] - mr) * (y[i] - mr);
                if (child < best_sse - 1e-10 * sumsq) {
                    best_sse = child;
                    best_f = static_cast<int>(f);
                    best_t = t;
                }
            }
        }
        if (best_f < 0 || !(sse - best_sse > 1e-12 * sse)) return id;
        std::vector<std::size_t> l, r;
        for (auto i : idx) (x(i, static_cast<std::size_t>(best_f)) <= best_t ? l : r).push_back(i);
        nodes[static_cast<std::size_t>(id)].feature = best_f;
        nodes[static_cast<std::size_t>(id)].threshold = best_t;
        int li = grow(x, y, l);
        int ri = grow(x, y, r);
        nodes[static_cast<std::size_t>(id)].left = li;
        nodes[static_cast<std::size_t>(id)].right = ri;
        return id;
    }

    double predict(std::span<const double> v) const {
        std::size_t i = 0;
        while (nodes[i].feature >= 0)
            i = static_cast<std::size_t>(v[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left
                                                                                                              : nodes[i].right);
        return nodes[i].value;
    }
};

// Solves the normal equations (A^T A + ridge I) theta = A^T b by Gaussian
// elimination with partial pivoting.
inline std::vector<double> least_squares_oracle(const std::vector<std::vector<double>>& a, const std::vector<double>& b,
                                                double ridge = 0.0) {
    const std::size_t n = a.front().size();
    std::vector<std::vector<long double>> m(n, std::vector<long double>(n + 1, 0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            long double s = 0;
            for (std::size_t r = 0; r < a.size(); ++r) s += static_cast<long double>(a[r][i]) * a[r][j];
            m[i][j] = s + (i == j ? ridge : 0.0);
        }
        long double s = 0;
        for (std::size_t r = 0; r < a.size(); ++r) s += static_cast<long double>(a[r][i]) * b[r];
        m[i][n] = s;
    }
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::fabs(m[r][c]) > std::fabs(m[piv][c])) piv = r;
        std::swap(m[c], m[piv]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            long double k = m[r][c] / m[c][c];
            for (std::size_t j = c; j <= n; ++j) m[r][j] -= k * m[c][j];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(m[i][n] / m[i][i]);
    return x;
}

// ANFIS output straight from the five-layer definition.
inline double anfis_oracle(const fundrank::anfis::RuleBase& rb, const std::vector<double>& x) {
    const std::size_t n = rb.mfs.size();
    std::size_t rules = 1;
    for (auto& m : rb.mfs) rules *= m.size();
    double num = 0, den = 0;
    for (std::size_t r = 0; r < rules; ++r) {
        std::size_t rem = r;
        std::vector<std::size_t> pick(n);
        for (std::size_t j = n; j-- > 0;) {
            pick[j] = rem % rb.mfs[j].size();
            rem /= rb.mfs[j].size();
        }
        double w = 1;
        for (std::size_t j = 0; j < n; ++j) {
            const auto& mf = rb.mfs[j][pick[j]];
            w *= 1.0 / (1.0 + std::pow(std::fabs((x[j] - mf.c) / mf.a), 2.0 * mf.b));
        }
        double f = rb.consequents(r, n);
        for (std::size_t j = 0; j < n; ++j) f += rb.consequents(r, j) * x[j];
        num += w * f;
        den += w;
    }
    return num / den;
}

inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
    return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

// Tickers placed in the top (or bottom) k by each member, counted per ticker.
inline std::vector<std::string> brute_force_consensus(const std::vector<fundrank::Ranking>& rankings, std::size_t k,
                                                      std::size_t m, bool buy) {
    std::vector<std::string> all = rankings.front();
    std::sort(all.begin(), all.end());
    std::vector<std::string> out;
    for (auto& t : all) {
        std::size_t votes = 0;
        for (auto& r : rankings) {
            auto pos = static_cast<std::size_t>(std::find(r.begin(), r.end(), t) - r.begin());
            bool in = buy ? pos < k : pos >= r.size() - k;
            votes += in ? 1 : 0;
        }
        if (votes >= m) out.push_back(t);
    }
    return out;
}

inline double compound_oracle(const std::vector<double>& returns) {
    long double g = 1;
    for (double r : returns) g = g * (1 + static_cast<long double>(r) / 100);
    return static_cast<double>((g - 1) * 100);
}

// Quarterly series whose sample mean and (n-1) standard deviation are exactly the targets.
inline std::vector<double> series_with_moments(double mean, double sd, std::size_t n = 18) {
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = (i % 2 == 0 ? 1.0 : -1.0) * (1.0 + 0.1 * static_cast<double>(i));
    double m = 0;
    for (double v : z) m += v;
    m /= static_cast<double>(n);
    double s = 0;
    for (double& v : z) {
        v -= m;
        s += v * v;
    }
    s = std::sqrt(s / static_cast<double>(n - 1));
    for (double& v : z) v = mean + sd * v / s;
    return z;
}

// A synthetic universe ingested and preprocessed in memory.
inline fundrank::SampleSet synthetic_samples(const fundrank::synth::SynthConfig& cfg) {
    auto g = fundrank::synth::generate(cfg);
    auto assembled = fundrank::assemble_samples(g.series, g.benchmark);
    auto bounds = fundrank::default_boundaries(assembled.set);
    auto set = fundrank::split_chronological(std::move(assembled.set), bounds);
    return fundrank::standardize(std::move(set));
}

} // namespace support
