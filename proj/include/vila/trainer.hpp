#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vila/dataset.hpp"
#include "vila/model.hpp"

namespace vila {

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;
    int min_epochs = 80;
    int patience = 20;
    int max_epochs = 200;
    int shots = 16;
    int runs = 5;
    std::uint64_t seed = 0;

    void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);

// Numerical aborts (non-finite gradients) map to a dedicated type so the CLI
// can distinguish them from configuration errors.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AdamConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;  // classic L2: grad += lambda * theta
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Per-parameter moments; one AdamState per named parameter group.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long long step = 0;
};

// Bias-corrected Adam update over one tensor. Throws on non-finite
// gradients, naming the parameter group.
void adam_step(const TensorPtr& param, AdamState& state, const AdamConfig& cfg,
               const std::string& group_name);

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> curve;
    int best_epoch = 0;
    double best_val_accuracy = 0.0;
};

// Batch-size-1 loop over the few-shot training subset. Monitors validation
// accuracy each epoch; stops once epoch >= min_epochs and accuracy has not
// improved for `patience` consecutive epochs (or at max_epochs). Restores the
// best-validation-accuracy parameters before returning.
TrainResult train(VilaModel& model, const DatasetManifest& data,
                  const std::vector<std::size_t>& train_indices, const TrainConfig& cfg);

struct EvalResult {
    double auc = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
};

EvalResult evaluate(const VilaModel& model, const DatasetManifest& data, Split split);

}  // namespace vila
