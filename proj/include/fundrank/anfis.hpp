#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>

#include "fundrank/error.hpp"
#include "fundrank/matrix.hpp"
#include "fundrank/model.hpp"

namespace fundrank::anfis {

// Generalized bell: 1 / (1 + |(x - c) / a|^(2b)).
struct BellMf {
    double a = 1.0; // width
    double b = 2.0; // slope
    double c = 0.0; // center

    double operator()(double x) const {
        double u = (x - c) / a;
        return 1.0 / (1.0 + std::pow(u * u, b));
    }

    bool operator==(const BellMf&) const = default;
};

struct AnfisConfig {
    std::size_t mfs_per_input = 2;
    std::size_t rule_cap = 256;
    double learning_rate = 0.005; // premise parameters
    std::size_t epochs = 200;
    double ridge = 1e-8;          // least-squares floor

    void validate() const {
        if (mfs_per_input < 1) throw ConfigError("BadConfig", "mfs_per_input must be >= 1");
        if (rule_cap < 1) throw ConfigError("BadConfig", "rule_cap must be >= 1");
        if (!(learning_rate >= 0)) throw ConfigError("BadConfig", "learning rate must be non-negative");
    }
};

// Grid rule base. Rule r picks one MF per input in mixed radix, last input fastest.
// consequents(r, j) is the coefficient of input j; column `inputs` is the constant.
struct RuleBase {
    std::vector<std::vector<BellMf>> mfs;
    Matrix consequents;

    std::size_t input_count() const { return mfs.size(); }
    std::size_t rule_count() const {
        std::size_t n = 1;
        for (auto& m : mfs) n *= m.size();
        return n;
    }

    std::vector<std::size_t> rule_mfs(std::size_t rule) const {
        std::vector<std::size_t> pick(mfs.size());
        for (std::size_t j = mfs.size(); j-- > 0;) {
            pick[j] = rule % mfs[j].size();
            rule /= mfs[j].size();
        }
        return pick;
    }

    bool operator==(const RuleBase&) const = default;
};

// Rule count of a full grid; saturates instead of overflowing.
inline std::size_t grid_rule_count(std::size_t inputs, std::size_t mfs_per_input) {
    std::size_t n = 1;
    for (std::size_t i = 0; i < inputs; ++i) {
        if (mfs_per_input != 0 && n > std::numeric_limits<std::size_t>::max() / mfs_per_input)
            return std::numeric_limits<std::size_t>::max();
        n *= mfs_per_input;
    }
    return n;
}

inline std::size_t consequent_parameter_count(std::size_t inputs, std::size_t mfs_per_input) {
    std::size_t rules = grid_rule_count(inputs, mfs_per_input);
    if (rules > std::numeric_limits<std::size_t>::max() / (inputs + 1)) return std::numeric_limits<std::size_t>::max();
    return rules * (inputs + 1);
}

using Memberships = std::vector<std::vector<double>>;

// Layer 1: membership grade of each input in each of its fuzzy sets.
inline Memberships layer1_memberships(const RuleBase& rb, std::span<const double> x) {
    if (x.size() != rb.input_count())
        throw DataError("DimensionMismatch", fmt::format("expected {} inputs, got {}", rb.input_count(), x.size()));
    Memberships out(rb.input_count());
    for (std::size_t j = 0; j < x.size(); ++j) {
        out[j].reserve(rb.mfs[j].size());
        for (auto& mf : rb.mfs[j]) out[j].push_back(mf(x[j]));
    }
    return out;
}

// Layer 2: rule firing strength, the product of its memberships.
inline std::vector<double> layer2_firing(const RuleBase& rb, const Memberships& mu) {
    std::vector<double> w(rb.rule_count());
    for (std::size_t r = 0; r < w.size(); ++r) {
        auto pick = rb.rule_mfs(r);
        double prod = 1.0;
        for (std::size_t j = 0; j < pick.size(); ++j) prod *= mu[j][pick[j]];
        w[r] = prod;
    }
    return w;
}

inline constexpr double kFiringFloor = 1e-300;

// Layer 3: normalised firing strengths.
inline std::vector<double> layer3_normalize(std::span<const double> w) {
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(total >= kFiringFloor)) throw NumericalError("DegenerateFiring", "total firing strength underflowed");
    std::vector<double> out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] / total;
    return out;
}

// First-order consequent polynomial of every rule.
inline std::vector<double> rule_outputs(const RuleBase& rb, std::span<const double> x) {
    const std::size_t n = rb.input_count();
    std::vector<double> f(rb.rule_count());
    for (std::size_t r = 0; r < f.size(); ++r) {
        double v = rb.consequents(r, n);
        for (std::size_t j = 0; j < n; ++j) v += rb.consequents(r, j) * x[j];
        f[r] = v;
    }
    return f;
}

// Layers 4 and 5: normalised-weight average of the rule polynomials.
inline double layer4_5_output(const RuleBase& rb, std::span<const double> wbar, std::span<const double> x) {
    auto f = rule_outputs(rb, x);
    double out = 0.0;
    for (std::size_t r = 0; r < f.size(); ++r) out += wbar[r] * f[r];
    return out;
}

inline double evaluate(const RuleBase& rb, std::span<const double> x) {
    auto wbar = layer3_normalize(layer2_firing(rb, layer1_memberships(rb, x)));
    return layer4_5_output(rb, wbar, x);
}

inline double mse(const RuleBase& rb, const Matrix& x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double d = evaluate(rb, x.row(r)) - y[r];
        s += d * d;
    }
    return s / static_cast<double>(x.rows());
}

// Centers evenly spaced over each input's range, a = range / (2m - 2), b = 2.
inline RuleBase make_rulebase(const AnfisConfig& config, const Matrix& x) {
    config.validate();
    if (x.cols() == 0) throw ConfigError("BadDimension", "ANFIS needs at least one input");
    std::size_t rules = grid_rule_count(x.cols(), config.mfs_per_input);
    if (rules > config.rule_cap)
        throw ConfigError("RuleCapExceeded", fmt::format("{} inputs x {} MFs gives {} rules, cap is {}", x.cols(),
                                                         config.mfs_per_input,
                                                         rules == std::numeric_limits<std::size_t>::max()
                                                             ? std::string("overflowing")
                                                             : std::to_string(rules),
                                                         config.rule_cap));
    RuleBase rb;
    const std::size_t m = config.mfs_per_input;
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            lo = std::min(lo, x(r, j));
            hi = std::max(hi, x(r, j));
        }
        if (x.rows() == 0) lo = hi = 0.0;
        double range = hi - lo;
        if (!(range > 0)) range = 1.0;
        std::vector<BellMf> sets;
        for (std::size_t k = 0; k < m; ++k) {
            double center = m == 1 ? lo + range / 2.0 : lo + range * static_cast<double>(k) / static_cast<double>(m - 1);
            double width = m == 1 ? range / 2.0 : range / static_cast<double>(2 * m - 2);
            sets.push_back({width, 2.0, center});
        }
        rb.mfs.push_back(std::move(sets));
    }
    rb.consequents = Matrix(rules, x.cols() + 1, 0.0);
    return rb;
}

namespace detail {

inline std::vector<double> normalized_firing(const RuleBase& rb, std::span<const double> x) {
    return layer3_normalize(layer2_firing(rb, layer1_memberships(rb, x)));
}

} // namespace detail

// Least-squares consequents for fixed premise parameters:
// minimise |A theta - y|^2 + ridge |theta|^2 over the normalised-weight design A.
inline void solve_consequents(RuleBase& rb, const Matrix& x, std::span<const double> y, double ridge) {
    const std::size_t n = rb.input_count(), rules = rb.rule_count(), cols = rules * (n + 1);
    const auto rows = static_cast<Eigen::Index>(x.rows());
    Eigen::MatrixXd a(rows + static_cast<Eigen::Index>(cols), static_cast<Eigen::Index>(cols));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(a.rows());
    a.setZero();
    for (std::size_t s = 0; s < x.rows(); ++s) {
        auto xs = x.row(s);
        auto wbar = detail::normalized_firing(rb, xs);
        for (std::size_t r = 0; r < rules; ++r) {
            auto base = static_cast<Eigen::Index>(r * (n + 1));
            for (std::size_t j = 0; j < n; ++j) a(static_cast<Eigen::Index>(s), base + static_cast<Eigen::Index>(j)) = wbar[r] * xs[j];
            a(static_cast<Eigen::Index>(s), base + static_cast<Eigen::Index>(n)) = wbar[r];
        }
        b(static_cast<Eigen::Index>(s)) = y[s];
    }
    const double diag = std::sqrt(ridge);
    for (std::size_t c = 0; c < cols; ++c) a(rows + static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) = diag;
    Eigen::VectorXd theta = a.colPivHouseholderQr().solve(b);
    if (!theta.allFinite()) throw NumericalError("NonFiniteLoss", "consequent least squares produced non-finite values");
    for (std::size_t r = 0; r < rules; ++r)
        for (std::size_t j = 0; j <= n; ++j) rb.consequents(r, j) = theta(static_cast<Eigen::Index>(r * (n + 1) + j));
}

// d(MSE)/d(a, b, c) for every membership function, consequents held fixed.
struct PremiseGradient {
    double mse = 0.0;
    std::vector<std::vector<std::array<double, 3>>> grad; // [input][mf] -> {da, db, dc}
};

inline PremiseGradient premise_gradient(const RuleBase& rb, const Matrix& x, std::span<const double> y) {
    const std::size_t n = rb.input_count(), rules = rb.rule_count();
    PremiseGradient out;
    out.grad.resize(n);
    for (std::size_t j = 0; j < n; ++j) out.grad[j].assign(rb.mfs[j].size(), {0.0, 0.0, 0.0});
    std::vector<std::vector<std::size_t>> picks(rules);
    for (std::size_t r = 0; r < rules; ++r) picks[r] = rb.rule_mfs(r);

    const double scale = 2.0 / static_cast<double>(x.rows());
    for (std::size_t s = 0; s < x.rows(); ++s) {
        auto xs = x.row(s);
        auto mu = layer1_memberships(rb, xs);
        auto w = layer2_firing(rb, mu);
        double total = std::accumulate(w.begin(), w.end(), 0.0);
        if (!(total >= kFiringFloor)) throw NumericalError("DegenerateFiring", "total firing strength underflowed");
        auto f = rule_outputs(rb, xs);
        double out_value = 0.0;
        for (std::size_t r = 0; r < rules; ++r) out_value += w[r] * f[r];
        out_value /= total;
        const double err = out_value - y[s];
        out.mse += err * err;

        // d(output)/d(mu[j][k]) = sum over rules using (j,k) of (prod of the rule's other mu) * (f_r - out) / total
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<double> d_mu(rb.mfs[j].size(), 0.0);
            for (std::size_t r = 0; r < rules; ++r) {
                double others = 1.0;
                for (std::size_t jj = 0; jj < n; ++jj)
                    if (jj != j) others *= mu[jj][picks[r][jj]];
                d_mu[picks[r][j]] += others * (f[r] - out_value) / total;
            }
            for (std::size_t k = 0; k < rb.mfs[j].size(); ++k) {
                const auto& mf = rb.mfs[j][k];
                const double m = mu[j][k];
                const double diff = xs[j] - mf.c;
                const double u = diff / mf.a;
                const double t = u * u;
                const double pw = std::pow(t, mf.b);
                const double m2 = m * m;
                const double dmu_da = m2 * 2.0 * mf.b * pw / mf.a;
                const double dmu_db = t > 0 ? -m2 * pw * std::log(t) : 0.0;
                const double dmu_dc = diff != 0 ? m2 * 2.0 * mf.b * pw / diff : 0.0;
                const double g = scale * err * d_mu[k];
                out.grad[j][k][0] += g * dmu_da;
                out.grad[j][k][1] += g * dmu_db;
                out.grad[j][k][2] += g * dmu_dc;
            }
        }
    }
    out.mse /= static_cast<double>(x.rows());
    return out;
}

struct TrainResult {
    RuleBase rulebase;
    TrainReport report;
};

inline constexpr double kMinWidth = 1e-6;
inline constexpr double kMinSlope = 0.1;

// Hybrid learning. Each epoch fits consequents by least squares with premises
// fixed, records train RMSE, then takes one gradient step on the premises.
// A final least-squares pass aligns consequents with the final premises.
inline TrainResult train(RuleBase rb, const Matrix& x, std::span<const double> y, const AnfisConfig& config) {
    if (x.rows() != y.size() || x.rows() == 0) throw DataError("LengthMismatch", "X and y sizes differ or are empty");
    if (x.cols() != rb.input_count()) throw DataError("DimensionMismatch", "feature width differs from rule base");
    if (rb.rule_count() > config.rule_cap)
        throw ConfigError("RuleCapExceeded", fmt::format("{} rules exceed cap {}", rb.rule_count(), config.rule_cap));
    const std::size_t params = rb.rule_count() * (rb.input_count() + 1);
    if (x.rows() < params)
        throw DataError("UnderDetermined", fmt::format("{} samples for {} consequent parameters", x.rows(), params));

    TrainResult result;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        solve_consequents(rb, x, y, config.ridge);
        auto pg = premise_gradient(rb, x, y);
        if (!std::isfinite(pg.mse)) throw NumericalError("NonFiniteLoss", fmt::format("loss diverged at epoch {}", epoch));
        result.report.loss_trace.push_back(std::sqrt(pg.mse));
        for (std::size_t j = 0; j < rb.input_count(); ++j)
            for (std::size_t k = 0; k < rb.mfs[j].size(); ++k) {
                auto& mf = rb.mfs[j][k];
                mf.a = std::max(kMinWidth, mf.a - config.learning_rate * pg.grad[j][k][0]);
                mf.b = std::max(kMinSlope, mf.b - config.learning_rate * pg.grad[j][k][1]);
                mf.c -= config.learning_rate * pg.grad[j][k][2];
            }
        result.report.epochs_run = epoch + 1;
    }
    solve_consequents(rb, x, y, config.ridge);
    double final_mse = mse(rb, x, y);
    if (!std::isfinite(final_mse)) throw NumericalError("NonFiniteLoss", "final loss is not finite");
    result.report.train_rmse = std::sqrt(final_mse);
    result.rulebase = std::move(rb);
    return result;
}

inline nlohmann::json to_json(const AnfisConfig& c) {
    return {{"mfs_per_input", c.mfs_per_input}, {"rule_cap", c.rule_cap}, {"learning_rate", c.learning_rate},
            {"epochs", c.epochs}, {"ridge", c.ridge}};
}

inline AnfisConfig config_from_json(const nlohmann::json& j) {
    AnfisConfig c;
    c.mfs_per_input = j.at("mfs_per_input").get<std::size_t>();
    c.rule_cap = j.at("rule_cap").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.ridge = j.value("ridge", 1e-8);
    return c;
}

inline nlohmann::json to_json(const RuleBase& rb) {
    nlohmann::json inputs = nlohmann::json::array();
    for (auto& sets : rb.mfs) {
        nlohmann::json js = nlohmann::json::array();
        for (auto& mf : sets) js.push_back({mf.a, mf.b, mf.c});
        inputs.push_back(std::move(js));
    }
    nlohmann::json cons = nlohmann::json::array();
    for (std::size_t r = 0; r < rb.consequents.rows(); ++r) {
        auto row = rb.consequents.row(r);
        cons.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return {{"membership", std::move(inputs)}, {"consequents", std::move(cons)}};
}

inline RuleBase rulebase_from_json(const nlohmann::json& j) {
    RuleBase rb;
    for (auto& js : j.at("membership")) {
        std::vector<BellMf> sets;
        for (auto& p : js) sets.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
        if (sets.empty()) throw DataError("BadArtifact", "input without membership functions");
        rb.mfs.push_back(std::move(sets));
    }
    std::vector<std::vector<double>> rows;
    for (auto& r : j.at("consequents")) rows.push_back(r.get<std::vector<double>>());
    rb.consequents = Matrix::from_rows(rows);
    if (rb.consequents.rows() != rb.rule_count() || rb.consequents.cols() != rb.input_count() + 1)
        throw DataError("BadArtifact", "consequent table does not match the rule grid");
    return rb;
}

// Adapter for local learning. When the full input set is infeasible (rule cap,
// or fewer samples than consequent parameters) it keeps the longest feasible
// prefix of `input_priority` and records that in the train report.
class AnfisRegressor final : public Regressor {
public:
    explicit AnfisRegressor(AnfisConfig config = {}, std::vector<std::size_t> input_priority = {})
        : config_(config), priority_(std::move(input_priority)) {}

    static AnfisRegressor from_json(const nlohmann::json& j) {
        AnfisRegressor r(config_from_json(j.at("config")));
        r.inputs_ = j.at("inputs").get<std::vector<std::size_t>>();
        r.n_features_ = j.at("n_features").get<std::size_t>();
        r.rulebase_ = rulebase_from_json(j.at("model"));
        if (r.inputs_.size() != r.rulebase_.input_count()) throw DataError("BadArtifact", "ANFIS input list mismatch");
        return r;
    }

    ModelFamily family() const override { return ModelFamily::anfis; }
    using Regressor::predict;

    // Inputs that fit both the rule cap and the sample count.
    static std::vector<std::size_t> feasible_inputs(const AnfisConfig& config, std::vector<std::size_t> priority,
                                                    std::size_t n_features, std::size_t n_samples) {
        if (priority.empty()) {
            priority.resize(n_features);
            std::iota(priority.begin(), priority.end(), 0);
        }
        std::size_t keep = 0;
        for (std::size_t m = 1; m <= priority.size(); ++m) {
            if (grid_rule_count(m, config.mfs_per_input) > config.rule_cap) break;
            if (consequent_parameter_count(m, config.mfs_per_input) > n_samples) break;
            keep = m;
        }
        priority.resize(keep);
        return priority;
    }

    TrainReport fit(const Matrix& x, std::span<const double> y, std::uint64_t, const FitContext&) override {
        n_features_ = x.cols();
        for (auto i : priority_)
            if (i >= n_features_) throw ConfigError("IndexOutOfRange", "ANFIS input priority index out of range");
        inputs_ = feasible_inputs(config_, priority_, x.cols(), x.rows());
        if (inputs_.empty())
            throw DataError("UnderDetermined", fmt::format("{} samples cannot support a single-input rule grid", x.rows()));
        Matrix sub = x.select_columns(inputs_);
        auto result = train(make_rulebase(config_, sub), sub, y, config_);
        rulebase_ = std::move(result.rulebase);
        if (inputs_.size() < x.cols())
            result.report.notes.push_back(fmt::format("restricted to {} of {} inputs (rule cap {}, {} samples)",
                                                      inputs_.size(), x.cols(), config_.rule_cap, x.rows()));
        return result.report;
    }

    double predict(std::span<const double> x) const override {
        if (x.size() != n_features_)
            throw DataError("DimensionMismatch", fmt::format("expected {} features, got {}", n_features_, x.size()));
        std::vector<double> sub(inputs_.size());
        for (std::size_t j = 0; j < inputs_.size(); ++j) sub[j] = x[inputs_[j]];
        return evaluate(rulebase_, sub);
    }

    nlohmann::json to_json() const override {
        return {{"config", anfis::to_json(config_)},
                {"inputs", inputs_},
                {"n_features", n_features_},
                {"model", anfis::to_json(rulebase_)}};
    }

    std::unique_ptr<Regressor> clone() const override { return std::make_unique<AnfisRegressor>(*this); }

    const RuleBase& rulebase() const { return rulebase_; }
    const std::vector<std::size_t>& inputs() const { return inputs_; }

private:
    AnfisConfig config_;
    std::vector<std::size_t> priority_;
    std::vector<std::size_t> inputs_;
    std::size_t n_features_ = 0;
    RuleBase rulebase_;
};

} // namespace fundrank::anfis
