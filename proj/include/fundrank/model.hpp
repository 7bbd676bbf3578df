#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fundrank/error.hpp"
#include "fundrank/matrix.hpp"

namespace fundrank {

enum class ModelFamily { fnn, rf, anfis };

inline std::string_view to_string(ModelFamily f) {
    switch (f) {
    case ModelFamily::fnn: return "fnn";
    case ModelFamily::rf: return "rf";
    case ModelFamily::anfis: return "anfis";
    }
    return "fnn";
}

inline ModelFamily parse_family(std::string_view s) {
    if (s == "fnn" || s == "FNN") return ModelFamily::fnn;
    if (s == "rf" || s == "RF") return ModelFamily::rf;
    if (s == "anfis" || s == "ANFIS") return ModelFamily::anfis;
    throw ConfigError("UnknownModel", std::string(s));
}

inline double rmse(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size())
        throw DataError("LengthMismatch", "predictions and targets differ in length");
    if (predictions.empty()) throw DataError("Empty", "rmse of an empty vector");
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        double d = predictions[i] - targets[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(predictions.size()));
}

struct TrainReport {
    double train_rmse = 0.0;
    std::vector<double> loss_trace; // train RMSE per epoch, where the family has epochs
    std::size_t epochs_run = 0;
    std::vector<std::string> notes;
};

inline nlohmann::json to_json(const TrainReport& r) {
    return {{"train_rmse", r.train_rmse}, {"epochs_run", r.epochs_run}, {"notes", r.notes}};
}

// Optional held-out data offered to a fit (used for early stopping).
struct FitContext {
    const Matrix* validation_x = nullptr;
    std::span<const double> validation_y;
};

// Uniform train/predict surface shared by all model families.
class Regressor {
public:
    virtual ~Regressor() = default;

    virtual ModelFamily family() const = 0;
    virtual TrainReport fit(const Matrix& x, std::span<const double> y, std::uint64_t seed,
                            const FitContext& ctx = {}) = 0;
    virtual double predict(std::span<const double> x) const = 0;
    virtual nlohmann::json to_json() const = 0;
    virtual std::unique_ptr<Regressor> clone() const = 0;

    std::vector<double> predict(const Matrix& x) const {
        std::vector<double> out(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict(x.row(r));
        return out;
    }
};

} // namespace fundrank
