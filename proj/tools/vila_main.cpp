// vila: synth | train | experiment | ablate | sweep | explain | gradcheck
//
// All randomness flows from --seed through named derivation, so repeating a
// command reproduces its artifacts byte for byte (timestamps live only in the
// run manifest).

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vila/dataset.hpp"
#include "vila/encoders.hpp"
#include "vila/experiment.hpp"
#include "vila/gradcheck.hpp"
#include "vila/model.hpp"
#include "vila/rng.hpp"
#include "vila/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vila;

namespace {

constexpr const char* kVersion = "0.1.0";

void write_text_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << content;
    }
    fs::rename(tmp, path);
}

void write_json_atomic(const fs::path& path, const json& j) {
    write_text_atomic(path, j.dump(2) + "\n");
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    json j;
    in >> j;
    return j;
}

json parse_value(const std::string& raw) {
    if (raw == "true") return true;
    if (raw == "false") return false;
    try {
        std::size_t pos = 0;
        if (raw.find('.') != std::string::npos || raw.find('e') != std::string::npos) {
            double d = std::stod(raw, &pos);
            if (pos == raw.size()) return d;
        } else {
            long long v = std::stoll(raw, &pos);
            if (pos == raw.size()) return v;
        }
    } catch (...) {
    }
    return raw;
}

// key=value overrides with dotted paths, e.g. model.tau=0.1
void apply_overrides(json& cfg, const std::vector<std::string>& extras) {
    for (const auto& kv : extras) {
        auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::invalid_argument("expected key=value override, got '" + kv + "'");
        std::string key = kv.substr(0, eq);
        const std::string section = key.substr(0, key.find('.'));
        if (section != "synth" && section != "model" && section != "train" &&
            section != "prompts")
            throw std::invalid_argument("override: unknown section '" + section + "'");
        json* node = &cfg;
        std::size_t start = 0;
        for (auto dot = key.find('.'); dot != std::string::npos;
             start = dot + 1, dot = key.find('.', start))
            node = &(*node)[key.substr(start, dot - start)];
        (*node)[key.substr(start)] = parse_value(kv.substr(eq + 1));
    }
}

void write_run_manifest(const fs::path& out_dir, const std::string& command,
                        const json& cfg, std::uint64_t seed,
                        const std::vector<std::string>& artifacts) {
    fs::create_directories(out_dir);
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    json j = {{"command", command},
              {"config", cfg},
              {"master_seed", seed},
              {"artifacts", artifacts},
              {"tool_version", kVersion},
              {"timestamp_unix_ms",
               std::chrono::duration_cast<std::chrono::milliseconds>(now).count()}};
    write_json_atomic(out_dir / "run_manifest.json", j);
}

DescriptionConfig descriptions_for(const json& cfg, const DatasetManifest& manifest) {
    if (cfg.contains("prompts"))
        return read_descriptions(cfg.at("prompts").get<std::string>(), manifest.class_names);
    return synthetic_descriptions(manifest.class_names);
}

struct CommonOpts {
    std::string config_path;
    std::string manifest_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

std::uint64_t resolve_seed(const CommonOpts& opts, const json& cfg, const char* section) {
    if (opts.seed_set) return opts.seed;
    if (cfg.contains(section) && cfg.at(section).contains("seed"))
        return cfg.at(section).at("seed").get<std::uint64_t>();
    return 0;
}

int cmd_synth(const CommonOpts& opts, const json& cfg) {
    SynthConfig sc = synth_config_from_json(cfg.value("synth", json::object()));
    sc.seed = resolve_seed(opts, cfg, "synth");
    sc.validate();
    write_run_manifest(opts.out_dir, "synth", cfg, sc.seed,
                       {"manifest.json", "truth.json", "*.vlmb"});
    auto manifest = generate_synthetic(sc, opts.out_dir);
    std::cout << "wrote " << manifest.bags.size() << " bags to " << opts.out_dir << "\n";
    return 0;
}

int cmd_train(const CommonOpts& opts, const json& cfg) {
    auto manifest = read_manifest(opts.manifest_path);
    auto mc = model_config_from_json(cfg.value("model", json::object()));
    auto tc = train_config_from_json(cfg.value("train", json::object()));
    tc.seed = resolve_seed(opts, cfg, "train");
    mc.dim = manifest.dim;
    auto desc = descriptions_for(cfg, manifest);
    write_run_manifest(opts.out_dir, "train", cfg, tc.seed,
                       {"params.json", "curve.csv", "report.json"});

    auto result = run_single(manifest, mc, tc, desc, derive_seed(tc.seed, "run", 0));

    json desc_json;
    for (std::size_t c = 0; c < desc.class_names.size(); ++c)
        desc_json[desc.class_names[c]] = {{"low", desc.get(int(c), Scale::Low)},
                                          {"high", desc.get(int(c), Scale::High)}};
    ModelConfig resolved = mc;
    resolved.init_seed = derive_seed(derive_seed(tc.seed, "run", 0), "model_init");
    json params_file = {{"model_config", to_json(resolved)},
                        {"class_names", manifest.class_names},
                        {"descriptions", desc_json},
                        {"params", result.params}};
    write_json_atomic(fs::path(opts.out_dir) / "params.json", params_file);
    write_text_atomic(fs::path(opts.out_dir) / "curve.csv", curve_to_csv(result.training));
    json report = {{"auc", result.metrics.auc},
                   {"f1", result.metrics.f1},
                   {"acc", result.metrics.acc},
                   {"best_epoch", result.training.best_epoch},
                   {"best_val_accuracy", result.training.best_val_accuracy}};
    write_json_atomic(fs::path(opts.out_dir) / "report.json", report);
    std::cout << "test acc " << result.metrics.acc << " auc " << result.metrics.auc << "\n";
    return 0;
}

int cmd_experiment(const CommonOpts& opts, const json& cfg, int runs_override) {
    auto manifest = read_manifest(opts.manifest_path);
    auto mc = model_config_from_json(cfg.value("model", json::object()));
    auto tc = train_config_from_json(cfg.value("train", json::object()));
    tc.seed = resolve_seed(opts, cfg, "train");
    if (runs_override > 0) tc.runs = runs_override;
    mc.dim = manifest.dim;
    auto desc = descriptions_for(cfg, manifest);
    write_run_manifest(opts.out_dir, "experiment", cfg, tc.seed,
                       {"report.json", "report.txt"});

    auto report = run_experiment(manifest, mc, tc, desc);
    write_json_atomic(fs::path(opts.out_dir) / "report.json", report.to_json());
    write_text_atomic(fs::path(opts.out_dir) / "report.txt", report.to_table_row() + "\n");
    std::cout << report.to_table_row() << "\n";
    return 0;
}

int cmd_ablate(const CommonOpts& opts, const json& cfg) {
    auto manifest = read_manifest(opts.manifest_path);
    auto mc = model_config_from_json(cfg.value("model", json::object()));
    auto tc = train_config_from_json(cfg.value("train", json::object()));
    tc.seed = resolve_seed(opts, cfg, "train");
    mc.dim = manifest.dim;
    auto desc = descriptions_for(cfg, manifest);
    write_run_manifest(opts.out_dir, "ablate", cfg, tc.seed,
                       {"ablation.json", "ablation.txt"});

    auto result = run_ablation(manifest, mc, tc, desc);
    write_json_atomic(fs::path(opts.out_dir) / "ablation.json", result.to_json());
    write_text_atomic(fs::path(opts.out_dir) / "ablation.txt", result.table);
    std::cout << result.table;
    return 0;
}

int cmd_sweep(const CommonOpts& opts, const json& cfg, const std::string& axis,
              const std::string& values_csv) {
    auto manifest = read_manifest(opts.manifest_path);
    auto mc = model_config_from_json(cfg.value("model", json::object()));
    auto tc = train_config_from_json(cfg.value("train", json::object()));
    tc.seed = resolve_seed(opts, cfg, "train");
    mc.dim = manifest.dim;
    auto desc = descriptions_for(cfg, manifest);

    std::vector<int> values;
    std::size_t start = 0;
    while (start < values_csv.size()) {
        auto comma = values_csv.find(',', start);
        if (comma == std::string::npos) comma = values_csv.size();
        values.push_back(std::stoi(values_csv.substr(start, comma - start)));
        start = comma + 1;
    }
    write_run_manifest(opts.out_dir, "sweep", cfg, tc.seed, {"sweep.csv"});
    auto csv = run_sweep(manifest, mc, tc, desc, sweep_axis_from_string(axis), values);
    write_text_atomic(fs::path(opts.out_dir) / "sweep.csv", csv);
    std::cout << csv;
    return 0;
}

int cmd_explain(const std::string& params_path, const std::string& bag_path,
                const std::string& out_dir) {
    std::ifstream in(params_path);
    if (!in) throw std::invalid_argument("cannot open params file: " + params_path);
    json pf;
    in >> pf;

    auto mc = model_config_from_json(pf.at("model_config"));
    auto class_names = pf.at("class_names").get<std::vector<std::string>>();
    DescriptionConfig desc;
    desc.class_names = class_names;
    for (const auto& name : class_names) {
        std::array<std::vector<std::string>, 2> per_scale;
        per_scale[0] = pf.at("descriptions").at(name).at("low").get<std::vector<std::string>>();
        per_scale[1] = pf.at("descriptions").at(name).at("high").get<std::vector<std::string>>();
        desc.sentences.push_back(std::move(per_scale));
    }
    VilaModel model(mc, desc);
    model.params_from_json(pf.at("params"));

    Bag bag = read_bag(bag_path);
    json out = explain_to_json(model.explain(bag));
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_json_atomic(fs::path(out_dir) / "explain.json", out);
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_gradcheck() {
    auto report = gradcheck_tiny_model();
    for (const auto& g : report.groups)
        std::cout << g.group << " max_rel_error " << g.max_rel_error << "\n";
    std::cout << (report.passed() ? "PASS" : "FAIL") << " worst " << report.worst << "\n";
    return report.passed() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-scale vision-language MIL classifier"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string axis, values_csv, params_path, bag_path;
    int runs_override = 0;

    auto add_common = [&](CLI::App* sub, bool needs_manifest) {
        sub->add_option("--config", opts.config_path, "JSON config file");
        sub->add_option("--seed", opts.seed, "master seed")->each([&](const std::string&) {
            opts.seed_set = true;
        });
        sub->add_option("--out", opts.out_dir, "output directory")->required();
        if (needs_manifest)
            sub->add_option("--manifest", opts.manifest_path, "dataset manifest")->required();
        sub->allow_extras();  // key=value overrides
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth, false);
    auto* train = app.add_subcommand("train", "single training run");
    add_common(train, true);
    auto* experiment = app.add_subcommand("experiment", "multi-run few-shot protocol");
    add_common(experiment, true);
    experiment->add_option("--runs", runs_override, "override run count");
    auto* ablate = app.add_subcommand("ablate", "fixed comparison grid");
    add_common(ablate, true);
    auto* sweep = app.add_subcommand("sweep", "hyperparameter sweep");
    add_common(sweep, true);
    sweep->add_option("--axis", axis, "N_p | M | shots")->required();
    sweep->add_option("--values", values_csv, "comma-separated values")->required();
    auto* explain = app.add_subcommand("explain", "prototype assignment export");
    explain->add_option("--params", params_path, "params.json from train")->required();
    explain->add_option("--bag", bag_path, "bag file")->required();
    explain->add_option("--out", opts.out_dir, "output directory");
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference self check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        json cfg = load_config(opts.config_path);
        for (const auto& [key, value] : cfg.items()) {
            (void)value;
            if (key != "synth" && key != "model" && key != "train" && key != "prompts")
                throw std::invalid_argument("config: unknown section '" + key + "'");
        }
        if (synth->parsed()) {
            apply_overrides(cfg, synth->remaining());
            return cmd_synth(opts, cfg);
        }
        if (train->parsed()) {
            apply_overrides(cfg, train->remaining());
            return cmd_train(opts, cfg);
        }
        if (experiment->parsed()) {
            apply_overrides(cfg, experiment->remaining());
            return cmd_experiment(opts, cfg, runs_override);
        }
        if (ablate->parsed()) {
            apply_overrides(cfg, ablate->remaining());
            return cmd_ablate(opts, cfg);
        }
        if (sweep->parsed()) {
            apply_overrides(cfg, sweep->remaining());
            return cmd_sweep(opts, cfg, axis, values_csv);
        }
        if (explain->parsed()) return cmd_explain(params_path, bag_path, opts.out_dir);
        if (gradcheck->parsed()) return cmd_gradcheck();
    } catch (const vila::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
