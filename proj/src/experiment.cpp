#include "vila/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "vila/rng.hpp"

namespace vila {

using nlohmann::json;

namespace {

MetricSummary summarize(const std::vector<RunMetrics>& runs, double RunMetrics::*field) {
    MetricSummary s;
    if (runs.empty()) return s;
    for (const auto& r : runs) s.mean += r.*field;
    s.mean /= double(runs.size());
    if (runs.size() > 1) {
        double var = 0.0;
        for (const auto& r : runs) var += (r.*field - s.mean) * (r.*field - s.mean);
        s.stddev = std::sqrt(var / double(runs.size() - 1));
    }
    return s;
}

std::string fmt_pct(const MetricSummary& s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << s.mean * 100.0 << " +/- " << s.stddev * 100.0;
    return os.str();
}

}  // namespace

MetricSummary ExperimentReport::auc() const { return summarize(runs, &RunMetrics::auc); }
MetricSummary ExperimentReport::f1() const { return summarize(runs, &RunMetrics::f1); }
MetricSummary ExperimentReport::acc() const { return summarize(runs, &RunMetrics::acc); }

json ExperimentReport::to_json() const {
    json jr = json::array();
    for (const auto& r : runs) jr.push_back({{"auc", r.auc}, {"f1", r.f1}, {"acc", r.acc}});
    return {{"name", name},
            {"runs", std::move(jr)},
            {"aggregate",
             {{"auc", {{"mean", auc().mean}, {"std", auc().stddev}}},
              {"f1", {{"mean", f1().mean}, {"std", f1().stddev}}},
              {"acc", {{"mean", acc().mean}, {"std", acc().stddev}}}}}};
}

ExperimentReport report_from_json(const json& j) {
    ExperimentReport r;
    r.name = j.at("name").get<std::string>();
    for (const auto& e : j.at("runs"))
        r.runs.push_back({e.at("auc").get<double>(), e.at("f1").get<double>(),
                          e.at("acc").get<double>()});
    return r;
}

std::string ExperimentReport::to_table_row() const {
    std::ostringstream os;
    os << std::left << std::setw(28) << name << std::setw(16) << fmt_pct(auc())
       << std::setw(16) << fmt_pct(f1()) << std::setw(16) << fmt_pct(acc());
    return os.str();
}

ReportComparison compare_reports(const ExperimentReport& a, const ExperimentReport& b) {
    auto column = [](const ExperimentReport& r, double RunMetrics::*f) {
        std::vector<double> out;
        for (const auto& m : r.runs) out.push_back(m.*f);
        return out;
    };
    ReportComparison c;
    c.auc = paired_t_test(column(a, &RunMetrics::auc), column(b, &RunMetrics::auc));
    c.f1 = paired_t_test(column(a, &RunMetrics::f1), column(b, &RunMetrics::f1));
    c.acc = paired_t_test(column(a, &RunMetrics::acc), column(b, &RunMetrics::acc));
    return c;
}

int worker_count() {
    if (const char* env = std::getenv("VILA_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

void parallel_for_indices(int n, const std::function<void(int)>& fn) {
    const int workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

SingleRunResult run_single(const DatasetManifest& manifest, const ModelConfig& model_cfg,
                           const TrainConfig& train_cfg,
                           const DescriptionConfig& descriptions, std::uint64_t run_seed) {
    DatasetManifest data = manifest;
    split_dataset(data.bags, int(data.class_names.size()), run_seed);
    auto train_idx = few_shot_sample(data, train_cfg.shots, run_seed);

    ModelConfig mc = model_cfg;
    mc.init_seed = derive_seed(run_seed, "model_init");
    VilaModel model(mc, descriptions);

    TrainConfig tc = train_cfg;
    tc.seed = run_seed;

    SingleRunResult out;
    out.training = train(model, data, train_idx, tc);
    auto eval = evaluate(model, data, Split::Test);
    out.metrics = {eval.auc, eval.f1, eval.accuracy};
    out.params = model.params_to_json();
    return out;
}

ExperimentReport run_experiment(const DatasetManifest& manifest, const ModelConfig& model_cfg,
                                const TrainConfig& train_cfg,
                                const DescriptionConfig& descriptions,
                                const std::string& name) {
    ExperimentReport report;
    report.name = name;
    report.runs.resize(std::size_t(train_cfg.runs));
    parallel_for_indices(train_cfg.runs, [&](int r) {
        const std::uint64_t run_seed = derive_seed(train_cfg.seed, "run", std::uint64_t(r));
        report.runs[std::size_t(r)] =
            run_single(manifest, model_cfg, train_cfg, descriptions, run_seed).metrics;
    });
    return report;
}

std::vector<AblationArm> ablation_grid(const ModelConfig& base) {
    std::vector<AblationArm> grid;
    auto push = [&](const std::string& name, auto&& adjust) {
        ModelConfig cfg = base;
        cfg.aggregator = Aggregator::PrototypeDecoder;
        cfg.fusion = Fusion::LogitSummation;
        cfg.similarity = Similarity::BagLevel;
        cfg.scale_mode = ScaleMode::Dual;
        cfg.use_text_decoder = true;
        adjust(cfg);
        grid.push_back({name, cfg});
    };
    // module arms: pooling baselines and the decoder, single then dual scale,
    // text decoder only in the final arm
    push("abmil_low", [](ModelConfig& c) {
        c.aggregator = Aggregator::Abmil;
        c.scale_mode = ScaleMode::LowOnly;
        c.use_text_decoder = false;
    });
    push("abmil_high", [](ModelConfig& c) {
        c.aggregator = Aggregator::Abmil;
        c.scale_mode = ScaleMode::HighOnly;
        c.use_text_decoder = false;
    });
    push("patch_decoder_low", [](ModelConfig& c) {
        c.scale_mode = ScaleMode::LowOnly;
        c.use_text_decoder = false;
    });
    push("patch_decoder_high", [](ModelConfig& c) {
        c.scale_mode = ScaleMode::HighOnly;
        c.use_text_decoder = false;
    });
    push("patch_decoder_dual", [](ModelConfig& c) { c.use_text_decoder = false; });
    push("vila_mil", [](ModelConfig&) {});
    // aggregator arms
    push("mean_pool", [](ModelConfig& c) { c.aggregator = Aggregator::MeanPool; });
    push("attention_pool", [](ModelConfig& c) { c.aggregator = Aggregator::AttentionPool; });
    push("self_attention_pool",
         [](ModelConfig& c) { c.aggregator = Aggregator::SelfAttentionPool; });
    // fusion arm
    push("feature_summation", [](ModelConfig& c) { c.fusion = Fusion::FeatureSummation; });
    // instance-similarity arms
    push("instance_max", [](ModelConfig& c) { c.similarity = Similarity::InstanceMax; });
    push("instance_mean", [](ModelConfig& c) { c.similarity = Similarity::InstanceMean; });
    push("instance_topk", [](ModelConfig& c) { c.similarity = Similarity::InstanceTopK; });
    return grid;
}

AblationResult run_ablation(const DatasetManifest& manifest, const ModelConfig& base,
                            const TrainConfig& train_cfg,
                            const DescriptionConfig& descriptions) {
    auto grid = ablation_grid(base);
    AblationResult result;
    result.reports.resize(grid.size());
    // shared master seed across arms: identical per-run splits and shots
    parallel_for_indices(int(grid.size()), [&](int i) {
        result.reports[std::size_t(i)] = run_experiment(
            manifest, grid[std::size_t(i)].config, train_cfg, descriptions,
            grid[std::size_t(i)].name);
    });

    std::size_t full = 0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (grid[i].name == "vila_mil") full = i;

    std::ostringstream table;
    table << std::left << std::setw(28) << "arm" << std::setw(16) << "AUC"
          << std::setw(16) << "F1" << std::setw(16) << "ACC"
          << "p(ACC) vs full\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        auto cmp = compare_reports(result.reports[i], result.reports[full]);
        result.vs_full.push_back(cmp);
        table << result.reports[i].to_table_row();
        if (i == full) {
            table << "-";
        } else {
            std::ostringstream p;
            p << std::scientific << std::setprecision(3) << cmp.acc.p_value;
            table << p.str();
        }
        table << "\n";
    }
    result.table = table.str();
    return result;
}

json AblationResult::to_json() const {
    json arms = json::array();
    for (std::size_t i = 0; i < reports.size(); ++i) {
        json arm = reports[i].to_json();
        arm["p_values_vs_full"] = {{"auc", vs_full[i].auc.p_value},
                                   {"f1", vs_full[i].f1.p_value},
                                   {"acc", vs_full[i].acc.p_value}};
        arms.push_back(std::move(arm));
    }
    return {{"arms", std::move(arms)}, {"table", table}};
}

SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "N_p" || s == "prototypes") return SweepAxis::Prototypes;
    if (s == "M" || s == "context") return SweepAxis::ContextTokens;
    if (s == "shots") return SweepAxis::Shots;
    throw std::invalid_argument("unknown sweep axis: " + s);
}

std::string run_sweep(const DatasetManifest& manifest, const ModelConfig& base,
                      const TrainConfig& train_cfg, const DescriptionConfig& descriptions,
                      SweepAxis axis, const std::vector<int>& values) {
    if (values.empty()) throw std::invalid_argument("run_sweep: no axis values");
    std::ostringstream csv;
    csv << "value,auc_mean,auc_std,f1_mean,f1_std,acc_mean,acc_std\n";
    for (int v : values) {
        ModelConfig mc = base;
        TrainConfig tc = train_cfg;
        switch (axis) {
            case SweepAxis::Prototypes: mc.n_prototypes = v; break;
            case SweepAxis::ContextTokens: mc.n_context = v; break;
            case SweepAxis::Shots: tc.shots = v; break;
        }
        auto report = run_experiment(manifest, mc, tc, descriptions,
                                     "sweep_" + std::to_string(v));
        csv << v << "," << report.auc().mean << "," << report.auc().stddev << ","
            << report.f1().mean << "," << report.f1().stddev << ","
            << report.acc().mean << "," << report.acc().stddev << "\n";
    }
    return csv.str();
}

std::string curve_to_csv(const TrainResult& result) {
    std::ostringstream csv;
    csv << "epoch,loss,val_acc\n";
    for (const auto& rec : result.curve)
        csv << rec.epoch << "," << rec.mean_loss << "," << rec.val_accuracy << "\n";
    return csv.str();
}

}  // namespace vila
