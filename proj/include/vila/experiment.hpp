#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vila/dataset.hpp"
#include "vila/metrics.hpp"
#include "vila/model.hpp"
#include "vila/trainer.hpp"

namespace vila {

struct RunMetrics {
    double auc = 0.0;
    double f1 = 0.0;
    double acc = 0.0;
};

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample std, 0 for a single run
};

struct ExperimentReport {
    std::string name;
    std::vector<RunMetrics> runs;

    MetricSummary auc() const;
    MetricSummary f1() const;
    MetricSummary acc() const;

    nlohmann::json to_json() const;
    // "84.3 +/- 4.6"-style percent formatting, one line per metric
    std::string to_table_row() const;
};

ExperimentReport report_from_json(const nlohmann::json& j);

// Per-metric paired t-test p-values between two reports (equal run counts).
struct ReportComparison {
    TTestResult auc, f1, acc;
};
ReportComparison compare_reports(const ExperimentReport& a, const ExperimentReport& b);

// The full few-shot protocol: per run r, derive seed_r from the master seed,
// re-split 4:3:3, draw the K-shot subset, train a fresh model, evaluate on
// the test split. Split and shot sampling resample jointly per run.
ExperimentReport run_experiment(const DatasetManifest& manifest, const ModelConfig& model_cfg,
                                const TrainConfig& train_cfg,
                                const DescriptionConfig& descriptions,
                                const std::string& name = "experiment");

// As run_experiment but also hands back the run-0 trained model params and
// curve (used by the train subcommand).
struct SingleRunResult {
    RunMetrics metrics;
    TrainResult training;
    nlohmann::json params;
};
SingleRunResult run_single(const DatasetManifest& manifest, const ModelConfig& model_cfg,
                           const TrainConfig& train_cfg,
                           const DescriptionConfig& descriptions, std::uint64_t run_seed);

struct AblationArm {
    std::string name;
    ModelConfig config;
};

// The fixed 13-arm comparison grid: six module arms, three aggregator arms,
// one fusion arm, three instance-similarity arms.
std::vector<AblationArm> ablation_grid(const ModelConfig& base);

struct AblationResult {
    std::vector<ExperimentReport> reports;      // one per arm, grid order
    std::vector<ReportComparison> vs_full;      // paired t-test vs the full-model arm
    std::string table;                          // aligned plain-text table
    nlohmann::json to_json() const;
};

AblationResult run_ablation(const DatasetManifest& manifest, const ModelConfig& base,
                            const TrainConfig& train_cfg,
                            const DescriptionConfig& descriptions);

enum class SweepAxis { Prototypes, ContextTokens, Shots };
SweepAxis sweep_axis_from_string(const std::string& s);

// One run_experiment per axis value; returns CSV text
// (value, auc_mean, auc_std, f1_mean, f1_std, acc_mean, acc_std).
std::string run_sweep(const DatasetManifest& manifest, const ModelConfig& base,
                      const TrainConfig& train_cfg, const DescriptionConfig& descriptions,
                      SweepAxis axis, const std::vector<int>& values);

std::string curve_to_csv(const TrainResult& result);

// Worker cap: VILA_THREADS when set, else hardware concurrency.
int worker_count();

// Deterministic parallel map: fn(i) for i in [0, n), results in index order.
void parallel_for_indices(int n, const std::function<void(int)>& fn);

}  // namespace vila
