#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fundrank/error.hpp"
#include "fundrank/matrix.hpp"
#include "fundrank/model.hpp"

namespace fundrank::fnn {

enum class Activation { tanh, relu, logistic, identity };

inline std::string_view to_string(Activation a) {
    switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::logistic: return "logistic";
    case Activation::identity: return "identity";
    }
    return "tanh";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    if (s == "logistic") return Activation::logistic;
    if (s == "identity") return Activation::identity;
    throw ConfigError("BadActivation", std::string(s));
}

struct FnnConfig {
    std::vector<std::size_t> hidden{16}; // empty = linear model
    Activation activation = Activation::tanh;
    double learning_rate = 0.01;
    std::size_t epochs = 500;
    std::size_t patience = 0; // 0 disables early stopping

    void validate() const {
        for (auto h : hidden)
            if (h == 0) throw ConfigError("BadDimension", "hidden layer sizes must be >= 1");
        if (!(learning_rate > 0)) throw ConfigError("BadLearningRate", "learning rate must be positive");
    }
};

// Fully connected layer: weights are out x in, row-major.
struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    double& w(std::size_t o, std::size_t i) { return weights[o * in + i]; }
    double w(std::size_t o, std::size_t i) const { return weights[o * in + i]; }

    bool operator==(const DenseLayer&) const = default;
};

struct FnnModel {
    std::vector<DenseLayer> layers; // last layer has out == 1 and linear output
    Activation activation = Activation::tanh;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (auto& l : layers) n += l.weights.size() + l.bias.size();
        return n;
    }

    bool operator==(const FnnModel&) const = default;
};

namespace detail {

inline double activate(Activation a, double z) {
    switch (a) {
    case Activation::tanh: return std::tanh(z);
    case Activation::relu: return z > 0 ? z : 0.0;
    case Activation::logistic: return 1.0 / (1.0 + std::exp(-z));
    case Activation::identity: return z;
    }
    return z;
}

// Derivative expressed through the activation output h = act(z).
inline double activate_grad(Activation a, double z, double h) {
    switch (a) {
    case Activation::tanh: return 1.0 - h * h;
    case Activation::relu: return z > 0 ? 1.0 : 0.0;
    case Activation::logistic: return h * (1.0 - h);
    case Activation::identity: return 1.0;
    }
    return 1.0;
}

} // namespace detail

// Uniform Glorot-style weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
inline double init_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline FnnModel init(const FnnConfig& config, std::size_t input_dim, std::uint64_t seed) {
    if (input_dim == 0) throw ConfigError("BadDimension", "input dimension must be >= 1");
    config.validate();
    std::mt19937_64 rng(seed);
    FnnModel model;
    model.activation = config.activation;
    std::size_t fan_in = input_dim;
    auto add_layer = [&](std::size_t fan_out) {
        DenseLayer layer{fan_in, fan_out, std::vector<double>(fan_in * fan_out), std::vector<double>(fan_out, 0.0)};
        double bound = init_bound(fan_in, fan_out);
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& w : layer.weights) w = dist(rng);
        model.layers.push_back(std::move(layer));
        fan_in = fan_out;
    };
    for (auto h : config.hidden) add_layer(h);
    add_layer(1);
    return model;
}

inline double forward(const FnnModel& model, std::span<const double> x) {
    if (x.size() != model.input_dim())
        throw DataError("DimensionMismatch", fmt::format("expected {} inputs, got {}", model.input_dim(), x.size()));
    std::vector<double> cur(x.begin(), x.end()), next;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        const bool output = l + 1 == model.layers.size();
        next.assign(layer.out, 0.0);
        for (std::size_t o = 0; o < layer.out; ++o) {
            double z = layer.bias[o];
            for (std::size_t i = 0; i < layer.in; ++i) z += layer.w(o, i) * cur[i];
            next[o] = output ? z : detail::activate(model.activation, z);
        }
        cur.swap(next);
    }
    return cur.front();
}

// Storage shaped like FnnModel's parameters.
struct Gradient {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;
};

struct LossGradient {
    double mse = 0.0;
    Gradient grad;
};

// Mean squared error over the given rows, and its gradient by backpropagation.
// Rows are visited in the order given by `order` (all rows when empty).
inline LossGradient loss_and_gradient(const FnnModel& model, const Matrix& x, std::span<const double> y,
                                      std::span<const std::size_t> order = {}) {
    if (x.rows() != y.size() || x.rows() == 0) throw DataError("LengthMismatch", "X and y sizes differ or are empty");
    if (x.cols() != model.input_dim()) throw DataError("DimensionMismatch", "feature width differs from model");
    const std::size_t L = model.layers.size();
    LossGradient out;
    out.grad.weights.resize(L);
    out.grad.bias.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        out.grad.weights[l].assign(model.layers[l].weights.size(), 0.0);
        out.grad.bias[l].assign(model.layers[l].bias.size(), 0.0);
    }

    std::vector<std::vector<double>> pre(L), act(L + 1);
    std::vector<double> delta, prev_delta;
    const double scale = 2.0 / static_cast<double>(x.rows());
    for (std::size_t k = 0; k < x.rows(); ++k) {
        const std::size_t r = order.empty() ? k : order[k];
        auto row = x.row(r);
        act[0].assign(row.begin(), row.end());
        for (std::size_t l = 0; l < L; ++l) {
            const auto& layer = model.layers[l];
            const bool output = l + 1 == L;
            pre[l].assign(layer.out, 0.0);
            act[l + 1].assign(layer.out, 0.0);
            for (std::size_t o = 0; o < layer.out; ++o) {
                double z = layer.bias[o];
                for (std::size_t i = 0; i < layer.in; ++i) z += layer.w(o, i) * act[l][i];
                pre[l][o] = z;
                act[l + 1][o] = output ? z : detail::activate(model.activation, z);
            }
        }
        const double err = act[L][0] - y[r];
        out.mse += err * err;

        delta.assign(1, scale * err);
        for (std::size_t l = L; l-- > 0;) {
            const auto& layer = model.layers[l];
            auto& gw = out.grad.weights[l];
            auto& gb = out.grad.bias[l];
            for (std::size_t o = 0; o < layer.out; ++o) {
                gb[o] += delta[o];
                for (std::size_t i = 0; i < layer.in; ++i) gw[o * layer.in + i] += delta[o] * act[l][i];
            }
            if (l == 0) break;
            prev_delta.assign(layer.in, 0.0);
            for (std::size_t i = 0; i < layer.in; ++i) {
                double s = 0.0;
                for (std::size_t o = 0; o < layer.out; ++o) s += layer.w(o, i) * delta[o];
                prev_delta[i] = s * detail::activate_grad(model.activation, pre[l - 1][i], act[l][i]);
            }
            delta.swap(prev_delta);
        }
    }
    out.mse /= static_cast<double>(x.rows());
    return out;
}

inline double mse(const FnnModel& model, const Matrix& x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double d = forward(model, x.row(r)) - y[r];
        s += d * d;
    }
    return s / static_cast<double>(x.rows());
}

struct TrainResult {
    FnnModel model;
    TrainReport report;
};

namespace detail {

// Canonical row order (lexicographic on features, then target) so full-batch
// sums do not depend on how the caller ordered the samples.
inline std::vector<std::size_t> canonical_order(const Matrix& x, std::span<const double> y) {
    std::vector<std::size_t> order(x.rows());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        auto ra = x.row(a), rb = x.row(b);
        if (std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end())) return true;
        if (std::lexicographical_compare(rb.begin(), rb.end(), ra.begin(), ra.end())) return false;
        return y[a] < y[b];
    });
    return order;
}

} // namespace detail

// Full-batch gradient descent on MSE. With ctx validation data and patience > 0
// training stops once validation RMSE has not improved for `patience` epochs and
// the best-validation parameters are returned.
inline TrainResult train(FnnModel model, const Matrix& x, std::span<const double> y, const FnnConfig& config,
                         const FitContext& ctx = {}) {
    if (x.rows() != y.size() || x.rows() == 0) throw DataError("LengthMismatch", "X and y sizes differ or are empty");
    config.validate();
    const auto order = detail::canonical_order(x, y);
    const bool early_stop = config.patience > 0 && ctx.validation_x && !ctx.validation_y.empty();

    TrainResult result;
    FnnModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        auto lg = loss_and_gradient(model, x, y, order);
        if (!std::isfinite(lg.mse))
            throw NumericalError("NonFiniteLoss", fmt::format("loss diverged at epoch {}; lower the learning rate", epoch));
        result.report.loss_trace.push_back(std::sqrt(lg.mse));
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            auto& layer = model.layers[l];
            for (std::size_t k = 0; k < layer.weights.size(); ++k)
                layer.weights[k] -= config.learning_rate * lg.grad.weights[l][k];
            for (std::size_t k = 0; k < layer.bias.size(); ++k)
                layer.bias[k] -= config.learning_rate * lg.grad.bias[l][k];
        }
        result.report.epochs_run = epoch + 1;
        if (early_stop) {
            double val = std::sqrt(mse(model, *ctx.validation_x, ctx.validation_y));
            if (val < best_val) {
                best_val = val;
                best = model;
                since_best = 0;
            } else if (++since_best >= config.patience) {
                result.report.notes.push_back(fmt::format("early stop after epoch {}", epoch + 1));
                break;
            }
        }
    }
    if (early_stop && std::isfinite(best_val)) model = best;
    double final_mse = mse(model, x, y);
    if (!std::isfinite(final_mse)) throw NumericalError("NonFiniteLoss", "final loss is not finite");
    result.report.train_rmse = std::sqrt(final_mse);
    result.model = std::move(model);
    return result;
}

inline nlohmann::json to_json(const FnnConfig& c) {
    return {{"hidden", c.hidden},
            {"activation", to_string(c.activation)},
            {"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"patience", c.patience}};
}

inline FnnConfig config_from_json(const nlohmann::json& j) {
    FnnConfig c;
    c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.patience = j.value("patience", std::size_t{0});
    return c;
}

inline nlohmann::json to_json(const FnnModel& m) {
    nlohmann::json layers = nlohmann::json::array();
    for (auto& l : m.layers) layers.push_back({{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}});
    return {{"activation", to_string(m.activation)}, {"layers", std::move(layers)}};
}

inline FnnModel model_from_json(const nlohmann::json& j) {
    FnnModel m;
    m.activation = parse_activation(j.at("activation").get<std::string>());
    std::size_t expect_in = 0;
    for (auto& jl : j.at("layers")) {
        DenseLayer l{jl.at("in").get<std::size_t>(), jl.at("out").get<std::size_t>(),
                     jl.at("weights").get<std::vector<double>>(), jl.at("bias").get<std::vector<double>>()};
        if (l.weights.size() != l.in * l.out || l.bias.size() != l.out || (expect_in && l.in != expect_in))
            throw DataError("BadArtifact", "inconsistent FNN layer dimensions");
        expect_in = l.out;
        m.layers.push_back(std::move(l));
    }
    if (m.layers.empty() || m.layers.back().out != 1) throw DataError("BadArtifact", "FNN must end in one output");
    return m;
}

class FnnRegressor final : public Regressor {
public:
    explicit FnnRegressor(FnnConfig config = {}) : config_(std::move(config)) {}
    FnnRegressor(FnnConfig config, FnnModel model) : config_(std::move(config)), model_(std::move(model)) {}

    static FnnRegressor from_json(const nlohmann::json& j) {
        return FnnRegressor(config_from_json(j.at("config")), model_from_json(j.at("model")));
    }

    ModelFamily family() const override { return ModelFamily::fnn; }
    using Regressor::predict;

    TrainReport fit(const Matrix& x, std::span<const double> y, std::uint64_t seed, const FitContext& ctx) override {
        auto result = train(init(config_, x.cols(), seed), x, y, config_, ctx);
        model_ = std::move(result.model);
        return result.report;
    }

    double predict(std::span<const double> x) const override { return forward(model_, x); }

    nlohmann::json to_json() const override {
        return {{"config", fnn::to_json(config_)}, {"model", fnn::to_json(model_)}};
    }

    std::unique_ptr<Regressor> clone() const override { return std::make_unique<FnnRegressor>(*this); }

    const FnnModel& model() const { return model_; }

private:
    FnnConfig config_;
    FnnModel model_;
};

} // namespace fundrank::fnn
