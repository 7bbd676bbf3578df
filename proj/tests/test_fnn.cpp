#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace fundrank;
using namespace fundrank::fnn;

namespace {

struct Data {
    Matrix x;
    std::vector<double> y;
};

Data linear_data(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Data d{support::random_matrix(n, 3, rng), {}};
    for (std::size_t r = 0; r < n; ++r) d.y.push_back(1.5 * d.x(r, 0) - 2.0 * d.x(r, 1) + 0.5 * d.x(r, 2) + 0.25);
    return d;
}

Data nonlinear_data(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0, 0.1);
    Data d{support::random_matrix(n, 4, rng), {}};
    for (std::size_t r = 0; r < n; ++r) d.y.push_back(std::sin(2 * d.x(r, 0)) + d.x(r, 1) * d.x(r, 2) + noise(rng));
    return d;
}

double& param(FnnModel& m, std::size_t l, bool bias, std::size_t k) {
    return bias ? m.layers[l].bias[k] : m.layers[l].weights[k];
}

} // namespace

TEST(FnnInit, BoundAndZeroBias) {
    EXPECT_NEAR(init_bound(21, 16), std::sqrt(6.0 / 37.0), 1e-15);
    EXPECT_NEAR(init_bound(21, 16), 0.4027, 1e-4);
    FnnConfig cfg;
    auto m = init(cfg, 21, 42);
    ASSERT_EQ(m.layers.size(), 2u);
    EXPECT_EQ(m.layers[0].in, 21u);
    EXPECT_EQ(m.layers[0].out, 16u);
    EXPECT_EQ(m.layers[1].in, 16u);
    EXPECT_EQ(m.layers[1].out, 1u);
    for (auto& l : m.layers) {
        double b = init_bound(l.in, l.out);
        for (double w : l.weights) EXPECT_LE(std::fabs(w), b);
        for (double v : l.bias) EXPECT_EQ(v, 0.0);
    }
}

TEST(FnnInit, DeterministicPerSeed) {
    FnnConfig cfg;
    cfg.hidden = {5, 3};
    EXPECT_EQ(init(cfg, 4, 9), init(cfg, 4, 9));
    EXPECT_NE(init(cfg, 4, 9), init(cfg, 4, 10));
}

TEST(FnnInit, BadDimension) {
    FnnConfig cfg;
    EXPECT_THROW(init(cfg, 0, 1), ConfigError);
    cfg.hidden = {0};
    EXPECT_THROW(init(cfg, 3, 1), ConfigError);
    cfg.hidden = {3};
    cfg.learning_rate = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(FnnForward, ZeroWeightsGiveZero) {
    FnnConfig cfg;
    auto m = init(cfg, 3, 1);
    for (auto& l : m.layers) std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::vector<double> x{1, -2, 3};
    EXPECT_EQ(forward(m, x), 0.0);
}

TEST(FnnForward, SingleLinearUnit) {
    FnnModel m;
    m.layers.push_back(DenseLayer{1, 1, {2.0}, {1.0}});
    std::vector<double> x{3.0};
    EXPECT_EQ(forward(m, x), 7.0);
}

TEST(FnnForward, MatchesOracleForEveryActivation) {
    std::mt19937_64 rng(123);
    for (auto act : {Activation::tanh, Activation::relu, Activation::logistic, Activation::identity}) {
        FnnConfig cfg;
        cfg.hidden = {7, 4};
        cfg.activation = act;
        auto m = init(cfg, 5, 77);
        for (auto& l : m.layers)
            for (auto& b : l.bias) b = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
        for (int trial = 0; trial < 20; ++trial) {
            auto x = support::random_matrix(1, 5, rng, -3, 3);
            auto row = x.row(0);
            EXPECT_NEAR(forward(m, row), support::fnn_forward_oracle(m, {row.begin(), row.end()}), 1e-12);
        }
    }
}

TEST(FnnForward, DimensionMismatch) {
    auto m = init(FnnConfig{}, 3, 1);
    std::vector<double> x{1, 2};
    EXPECT_THROW(forward(m, x), DataError);
}

TEST(FnnTrain, LinearTargetLinearNetConverges) {
    auto d = linear_data(60, 2);
    FnnConfig cfg;
    cfg.hidden = {};
    cfg.learning_rate = 0.5;
    cfg.epochs = 500;
    auto r = train(init(cfg, 3, 5), d.x, d.y, cfg);
    EXPECT_LT(r.report.train_rmse, 1e-6);
    EXPECT_EQ(r.report.loss_trace.size(), 500u);
    EXPECT_EQ(r.report.epochs_run, 500u);
    EXPECT_NEAR(r.model.layers[0].weights[0], 1.5, 1e-5);
    EXPECT_NEAR(r.model.layers[0].bias[0], 0.25, 1e-5);
}

TEST(FnnTrain, ZeroEpochsLeavesModelUnchanged) {
    auto d = nonlinear_data(20, 3);
    FnnConfig cfg;
    cfg.epochs = 0;
    auto m0 = init(cfg, 4, 8);
    auto r = train(m0, d.x, d.y, cfg);
    EXPECT_EQ(r.model, m0);
    EXPECT_TRUE(r.report.loss_trace.empty());
}

TEST(FnnTrain, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(31);
    const double h = 1e-5;
    double worst = 0;
    for (int net = 0; net < 10; ++net) {
        FnnConfig cfg;
        cfg.hidden = {1 + rng() % 5};
        auto d = nonlinear_data(8, 100 + static_cast<std::uint64_t>(net));
        auto m = init(cfg, 4, rng());
        auto lg = loss_and_gradient(m, d.x, d.y);
        EXPECT_NEAR(lg.mse, support::fnn_mse_oracle(m, d.x, d.y), 1e-12);
        for (std::size_t l = 0; l < m.layers.size(); ++l)
            for (bool bias : {false, true}) {
                std::size_t count = bias ? m.layers[l].bias.size() : m.layers[l].weights.size();
                for (std::size_t k = 0; k < count; ++k) {
                    auto plus = m, minus = m;
                    param(plus, l, bias, k) += h;
                    param(minus, l, bias, k) -= h;
                    double numeric = (support::fnn_mse_oracle(plus, d.x, d.y) - support::fnn_mse_oracle(minus, d.x, d.y)) / (2 * h);
                    double analytic = bias ? lg.grad.bias[l][k] : lg.grad.weights[l][k];
                    worst = std::max(worst, support::relative_error(analytic, numeric));
                }
            }
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(FnnTrain, LossNonIncreasingWithSmallStep) {
    auto d = nonlinear_data(40, 4);
    FnnConfig cfg;
    cfg.hidden = {8};
    cfg.learning_rate = 0.01;
    cfg.epochs = 300;
    auto r = train(init(cfg, 4, 2), d.x, d.y, cfg);
    for (std::size_t e = 1; e < r.report.loss_trace.size(); ++e)
        EXPECT_LE(r.report.loss_trace[e], r.report.loss_trace[e - 1] + 1e-15);
}

TEST(FnnTrain, SampleOrderDoesNotMatter) {
    auto d = nonlinear_data(30, 5);
    std::vector<std::size_t> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(6);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix px(30, 4);
    std::vector<double> py;
    for (std::size_t r = 0; r < 30; ++r) {
        for (std::size_t c = 0; c < 4; ++c) px(r, c) = d.x(perm[r], c);
        py.push_back(d.y[perm[r]]);
    }
    FnnConfig cfg;
    cfg.epochs = 200;
    auto a = train(init(cfg, 4, 3), d.x, d.y, cfg);
    auto b = train(init(cfg, 4, 3), px, py, cfg);
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(a.report.loss_trace, b.report.loss_trace);
}

TEST(FnnTrain, EarlyStoppingRestoresBest) {
    auto d = nonlinear_data(30, 7);
    auto v = nonlinear_data(15, 8);
    for (auto& y : v.y) y = -y; // validation gets worse as train improves
    FnnConfig cfg;
    cfg.epochs = 500;
    cfg.patience = 5;
    cfg.learning_rate = 0.05;
    FitContext ctx{&v.x, v.y};
    auto r = train(init(cfg, 4, 1), d.x, d.y, cfg, ctx);
    EXPECT_LT(r.report.epochs_run, 500u);
    ASSERT_FALSE(r.report.notes.empty());
    // returned weights are the best-validation snapshot; no trace point has lower validation loss
    double best = std::sqrt(mse(r.model, v.x, v.y));
    auto m = init(cfg, 4, 1);
    for (std::size_t e = 0; e < r.report.epochs_run; ++e) {
        auto g = loss_and_gradient(m, d.x, d.y, fnn::detail::canonical_order(d.x, d.y));
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            for (std::size_t k = 0; k < m.layers[l].weights.size(); ++k) m.layers[l].weights[k] -= cfg.learning_rate * g.grad.weights[l][k];
            for (std::size_t k = 0; k < m.layers[l].bias.size(); ++k) m.layers[l].bias[k] -= cfg.learning_rate * g.grad.bias[l][k];
        }
        EXPECT_GE(std::sqrt(mse(m, v.x, v.y)), best);
    }
}

TEST(FnnTrain, DivergenceIsNonFiniteLoss) {
    auto d = nonlinear_data(20, 9);
    for (auto& y : d.y) y *= 1e6;
    FnnConfig cfg;
    cfg.hidden = {};
    cfg.learning_rate = 50;
    cfg.epochs = 2000;
    try {
        train(init(cfg, 4, 1), d.x, d.y, cfg);
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_EQ(e.code(), "NonFiniteLoss");
    }
}

TEST(FnnTrain, LengthMismatch) {
    auto d = nonlinear_data(10, 1);
    d.y.pop_back();
    EXPECT_THROW(train(init(FnnConfig{}, 4, 1), d.x, d.y, FnnConfig{}), DataError);
}

TEST(FnnSerialization, RoundTrip) {
    auto d = nonlinear_data(25, 10);
    FnnConfig cfg;
    cfg.hidden = {6, 3};
    cfg.activation = Activation::logistic;
    cfg.epochs = 50;
    FnnRegressor reg(cfg);
    reg.fit(d.x, d.y, 4, {});
    auto back = FnnRegressor::from_json(nlohmann::json::parse(reg.to_json().dump()));
    EXPECT_EQ(back.model(), reg.model());
    EXPECT_EQ(back.predict(d.x), reg.predict(d.x));
    EXPECT_EQ(back.to_json().dump(), reg.to_json().dump());
}
