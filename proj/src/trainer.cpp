#include "vila/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "vila/config_keys.hpp"
#include "vila/metrics.hpp"
#include "vila/rng.hpp"

namespace vila {

void TrainConfig::validate() const {
    if (learning_rate <= 0) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (weight_decay < 0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
    if (min_epochs < 1) throw std::invalid_argument("TrainConfig: min_epochs must be >= 1");
    if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
    if (max_epochs < min_epochs)
        throw std::invalid_argument("TrainConfig: max_epochs must be >= min_epochs");
    if (shots < 1) throw std::invalid_argument("TrainConfig: shots must be >= 1");
    if (runs < 1) throw std::invalid_argument("TrainConfig: runs must be >= 1");
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(j,
                                {"learning_rate", "weight_decay", "min_epochs", "patience",
                                 "max_epochs", "shots", "runs", "seed", "batch_size"},
                                "TrainConfig");
    if (j.contains("batch_size") && j.at("batch_size").get<int>() != 1)
        throw std::invalid_argument("TrainConfig: only batch_size 1 is supported");
    TrainConfig c;
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("min_epochs")) c.min_epochs = j.at("min_epochs").get<int>();
    if (j.contains("patience")) c.patience = j.at("patience").get<int>();
    if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
    if (j.contains("shots")) c.shots = j.at("shots").get<int>();
    if (j.contains("runs")) c.runs = j.at("runs").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
            {"min_epochs", c.min_epochs},       {"patience", c.patience},
            {"max_epochs", c.max_epochs},       {"shots", c.shots},
            {"runs", c.runs},                   {"seed", c.seed},
            {"batch_size", 1}};
}

void adam_step(const TensorPtr& param, AdamState& state, const AdamConfig& cfg,
               const std::string& group_name) {
    const std::size_t n = param->size();
    if (state.m.empty()) {
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
    }
    if (state.m.size() != n)
        throw std::invalid_argument("adam_step: state size mismatch for '" + group_name + "'");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
    for (std::size_t i = 0; i < n; ++i) {
        double g = param->grad[i];
        if (!std::isfinite(g))
            throw NumericalError("adam_step: non-finite gradient in parameter group '" +
                                 group_name + "'");
        g += cfg.weight_decay * param->values[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        param->values[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

namespace {

std::vector<int> predictions_for(const VilaModel& model, const DatasetManifest& data,
                                 const std::vector<std::size_t>& indices,
                                 std::vector<std::vector<double>>* scores_out) {
    std::vector<int> preds;
    for (std::size_t idx : indices) {
        Bag bag = data.load(data.bags[idx]);
        Tape tape;
        auto diag = model.forward(tape, bag);
        preds.push_back(VilaModel::predict(diag.normalized));
        if (scores_out) scores_out->push_back(diag.normalized);
    }
    return preds;
}

std::vector<int> labels_for(const DatasetManifest& data,
                            const std::vector<std::size_t>& indices) {
    std::vector<int> out;
    for (std::size_t idx : indices) out.push_back(data.bags[idx].label);
    return out;
}

}  // namespace

TrainResult train(VilaModel& model, const DatasetManifest& data,
                  const std::vector<std::size_t>& train_indices, const TrainConfig& cfg) {
    cfg.validate();
    if (train_indices.empty())
        throw std::invalid_argument("train: empty training subset");
    auto val_indices = data.indices_of(Split::Val);
    if (val_indices.empty())
        throw std::invalid_argument("train: empty validation split");

    // preload bags; desk-scale datasets fit in memory
    std::vector<Bag> train_bags;
    for (std::size_t idx : train_indices) train_bags.push_back(data.load(data.bags[idx]));
    auto val_labels = labels_for(data, val_indices);

    auto params = model.parameters();
    std::vector<AdamState> states(params.size());
    AdamConfig adam{cfg.learning_rate, cfg.weight_decay};

    TrainResult result;
    std::vector<std::vector<double>> best_snapshot;
    int stall = 0;
    std::vector<std::size_t> order(train_bags.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::mt19937_64 gen(derive_seed(cfg.seed, "epoch_shuffle", std::uint64_t(epoch)));
        std::shuffle(order.begin(), order.end(), gen);

        double loss_sum = 0.0;
        for (std::size_t i : order) {
            Tape tape;
            auto diag = model.forward(tape, train_bags[i]);
            auto loss = model.normalize_and_loss(tape, diag, train_bags[i].label);
            loss_sum += loss->values[0];
            model.zero_grad();
            tape.backward(loss);
            for (std::size_t p = 0; p < params.size(); ++p)
                adam_step(params[p].second, states[p], adam, params[p].first);
        }

        auto val_preds = predictions_for(model, data, val_indices, nullptr);
        const double val_acc = accuracy(val_preds, val_labels);
        result.curve.push_back({epoch, loss_sum / double(train_bags.size()), val_acc});

        if (best_snapshot.empty() || val_acc > result.best_val_accuracy) {
            result.best_val_accuracy = val_acc;
            result.best_epoch = epoch;
            best_snapshot.clear();
            for (auto& [name, t] : params) best_snapshot.push_back(t->values);
            stall = 0;
        } else {
            ++stall;
        }
        if (epoch + 1 >= cfg.min_epochs && stall >= cfg.patience) break;
    }

    for (std::size_t p = 0; p < params.size(); ++p)
        params[p].second->values = best_snapshot[p];
    return result;
}

EvalResult evaluate(const VilaModel& model, const DatasetManifest& data, Split split) {
    auto indices = data.indices_of(split);
    if (indices.empty()) throw std::invalid_argument("evaluate: empty split");
    std::vector<std::vector<double>> scores;
    auto preds = predictions_for(model, data, indices, &scores);
    auto labels = labels_for(data, indices);
    EvalResult res;
    res.auc = auc_macro(scores, labels, int(data.class_names.size()));
    res.f1 = f1_macro(preds, labels, int(data.class_names.size()));
    res.accuracy = accuracy(preds, labels);
    return res;
}

}  // namespace vila
