#include "vila/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "vila/config_keys.hpp"
#include "vila/rng.hpp"

namespace vila {

using nlohmann::json;

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        default: return "test";
    }
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw std::invalid_argument("unknown split name: " + s);
}

Bag DatasetManifest::load(const ManifestEntry& e) const {
    Bag bag = read_bag(base_dir / e.path);
    bag.id = e.id;
    if (bag.dim != dim)
        throw ProtocolError("bag '" + e.id + "' has d=" + std::to_string(bag.dim) +
                            ", manifest declares d=" + std::to_string(dim));
    if (bag.label != e.label)
        throw ProtocolError("bag '" + e.id + "' label disagrees with manifest");
    return bag;
}

std::vector<std::size_t> DatasetManifest::indices_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bags.size(); ++i)
        if (bags[i].split == s) out.push_back(i);
    return out;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    json j;
    j["class_names"] = m.class_names;
    j["d"] = m.dim;
    j["seed"] = m.seed;
    json arr = json::array();
    for (const auto& e : m.bags)
        arr.push_back({{"id", e.id},
                       {"path", e.path},
                       {"label", e.label},
                       {"split", to_string(e.split)}});
    j["bags"] = std::move(arr);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
    out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    json j;
    in >> j;
    DatasetManifest m;
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.dim = j.at("d").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& b : j.at("bags")) {
        ManifestEntry e;
        e.id = b.at("id").get<std::string>();
        e.path = b.at("path").get<std::string>();
        e.label = b.at("label").get<int>();
        e.split = split_from_string(b.at("split").get<std::string>());
        m.bags.push_back(std::move(e));
    }
    m.base_dir = path.parent_path();
    return m;
}

void split_dataset(std::vector<ManifestEntry>& bags, int n_classes, std::uint64_t seed,
                   int r_train, int r_val, int r_test) {
    const int total_ratio = r_train + r_val + r_test;
    for (int c = 0; c < n_classes; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < bags.size(); ++i)
            if (bags[i].label == c) idx.push_back(i);
        if (idx.empty())
            throw ProtocolError("split_dataset: class " + std::to_string(c) + " has 0 bags");
        std::mt19937_64 gen(derive_seed(seed, "split", std::uint64_t(c)));
        std::shuffle(idx.begin(), idx.end(), gen);

        // largest-remainder apportionment of the class count to the ratio
        const int n = int(idx.size());
        double quotas[3] = {double(n) * r_train / total_ratio, double(n) * r_val / total_ratio,
                            double(n) * r_test / total_ratio};
        int counts[3];
        int assigned = 0;
        for (int s = 0; s < 3; ++s) {
            counts[s] = int(std::floor(quotas[s]));
            assigned += counts[s];
        }
        std::vector<int> order = {0, 1, 2};
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return quotas[a] - std::floor(quotas[a]) > quotas[b] - std::floor(quotas[b]);
        });
        for (int r = 0; assigned < n; ++r, ++assigned) counts[order[r % 3]]++;

        std::size_t pos = 0;
        for (int s = 0; s < 3; ++s) {
            Split sp = s == 0 ? Split::Train : (s == 1 ? Split::Val : Split::Test);
            for (int t = 0; t < counts[s]; ++t) bags[idx[pos++]].split = sp;
        }
    }
}

std::vector<std::size_t> few_shot_sample(const DatasetManifest& m, int shots,
                                         std::uint64_t seed) {
    std::vector<std::size_t> out;
    for (int c = 0; c < int(m.class_names.size()); ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < m.bags.size(); ++i)
            if (m.bags[i].split == Split::Train && m.bags[i].label == c) idx.push_back(i);
        if (int(idx.size()) < shots)
            throw ProtocolError("few_shot_sample: class '" + m.class_names[c] + "' has only " +
                                std::to_string(idx.size()) + " training bags, need " +
                                std::to_string(shots));
        std::mt19937_64 gen(derive_seed(seed, "fewshot", std::uint64_t(c)));
        std::shuffle(idx.begin(), idx.end(), gen);
        out.insert(out.end(), idx.begin(), idx.begin() + shots);
    }
    return out;
}

ScaleSplitMode scale_split_from_string(const std::string& s) {
    if (s == "signal_low_only") return ScaleSplitMode::SignalLowOnly;
    if (s == "signal_high_only") return ScaleSplitMode::SignalHighOnly;
    if (s == "split_across_scales") return ScaleSplitMode::SplitAcrossScales;
    throw std::invalid_argument("unknown scale_split mode: " + s);
}

std::string to_string(ScaleSplitMode m) {
    switch (m) {
        case ScaleSplitMode::SignalLowOnly: return "signal_low_only";
        case ScaleSplitMode::SignalHighOnly: return "signal_high_only";
        default: return "split_across_scales";
    }
}

void SynthConfig::validate() const {
    if (n_classes < 2) throw std::invalid_argument("SynthConfig: C must be >= 2");
    if (dim < 4) throw std::invalid_argument("SynthConfig: d must be >= 4");
    if (noise_std < 0) throw std::invalid_argument("SynthConfig: noise_std must be >= 0");
    if (signal_fraction < 0 || signal_fraction > 1)
        throw std::invalid_argument("SynthConfig: signal_fraction must be in [0,1]");
    if (n_signal_prototypes < 1)
        throw std::invalid_argument("SynthConfig: n_signal_prototypes must be >= 1");
    if (patches_low_min < 1 || patches_low_max < patches_low_min)
        throw std::invalid_argument("SynthConfig: bad patches-per-bag range");
    if (high_factor < 1) throw std::invalid_argument("SynthConfig: high_factor must be >= 1");
    if (bags_per_class < 1)
        throw std::invalid_argument("SynthConfig: bags_per_class must be >= 1");
    if (mode == ScaleSplitMode::SplitAcrossScales && n_classes < 3)
        throw std::invalid_argument(
            "SynthConfig: split_across_scales needs C >= 3 (two distinct confused pairs)");
}

SynthConfig synth_config_from_json(const json& j) {
    detail::reject_unknown_keys(j,
                                {"classes", "d", "signal_prototypes", "patches_low_min",
                                 "patches_low_max", "high_factor", "scale_split", "noise_std",
                                 "signal_fraction", "bags_per_class", "seed"},
                                "SynthConfig");
    SynthConfig c;
    if (j.contains("classes")) c.n_classes = j.at("classes").get<int>();
    if (j.contains("d")) c.dim = j.at("d").get<int>();
    if (j.contains("signal_prototypes"))
        c.n_signal_prototypes = j.at("signal_prototypes").get<int>();
    if (j.contains("patches_low_min")) c.patches_low_min = j.at("patches_low_min").get<int>();
    if (j.contains("patches_low_max")) c.patches_low_max = j.at("patches_low_max").get<int>();
    if (j.contains("high_factor")) c.high_factor = j.at("high_factor").get<int>();
    if (j.contains("scale_split"))
        c.mode = scale_split_from_string(j.at("scale_split").get<std::string>());
    if (j.contains("noise_std")) c.noise_std = j.at("noise_std").get<double>();
    if (j.contains("signal_fraction")) c.signal_fraction = j.at("signal_fraction").get<double>();
    if (j.contains("bags_per_class")) c.bags_per_class = j.at("bags_per_class").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json to_json(const SynthConfig& c) {
    return {{"classes", c.n_classes},
            {"d", c.dim},
            {"signal_prototypes", c.n_signal_prototypes},
            {"patches_low_min", c.patches_low_min},
            {"patches_low_max", c.patches_low_max},
            {"high_factor", c.high_factor},
            {"scale_split", to_string(c.mode)},
            {"noise_std", c.noise_std},
            {"signal_fraction", c.signal_fraction},
            {"bags_per_class", c.bags_per_class},
            {"seed", c.seed}};
}

namespace {

std::vector<double> unit_direction(int dim, std::uint64_t seed) {
    auto v = gaussian_vector(std::size_t(dim), seed);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

// Fills an N x d matrix: `n_signal` rows carry one planted direction plus
// noise, the rest are pure noise; rows are then shuffled.
void fill_patches(std::vector<double>& out, int n, int dim,
                  const std::vector<std::vector<double>>& dirs, int n_signal,
                  double noise_std, std::mt19937_64& gen) {
    out.assign(std::size_t(n) * dim, 0.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, int(dirs.size()) - 1);
    for (int i = 0; i < n; ++i) {
        double* p = &out[std::size_t(i) * dim];
        if (i < n_signal) {
            const auto& dir = dirs[pick(gen)];
            for (int j = 0; j < dim; ++j) p[j] = dir[j] + noise_std * noise(gen);
        } else {
            for (int j = 0; j < dim; ++j) p[j] = noise_std * noise(gen);
        }
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<double> shuffled(out.size());
    for (int i = 0; i < n; ++i)
        std::copy(out.begin() + std::size_t(perm[i]) * dim,
                  out.begin() + std::size_t(perm[i] + 1) * dim,
                  shuffled.begin() + std::size_t(i) * dim);
    out = std::move(shuffled);
}

}  // namespace

DatasetManifest generate_synthetic(const SynthConfig& cfg,
                                   const std::filesystem::path& out_dir,
                                   SynthTruth* truth_out) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    SynthTruth truth;
    truth.low_dirs.resize(cfg.n_classes);
    truth.high_dirs.resize(cfg.n_classes);
    for (int c = 0; c < cfg.n_classes; ++c) {
        for (int p = 0; p < cfg.n_signal_prototypes; ++p) {
            truth.low_dirs[c].push_back(unit_direction(
                cfg.dim, derive_seed(cfg.seed, "dir_low", std::uint64_t(c) * 1000 + p)));
            truth.high_dirs[c].push_back(unit_direction(
                cfg.dim, derive_seed(cfg.seed, "dir_high", std::uint64_t(c) * 1000 + p)));
        }
    }
    if (cfg.mode == ScaleSplitMode::SplitAcrossScales) {
        // low scale cannot separate classes 0 and 1; high scale cannot
        // separate classes 1 and 2; only both scales identify every class
        truth.low_dirs[1] = truth.low_dirs[0];
        truth.high_dirs[2] = truth.high_dirs[1];
    }

    DatasetManifest m;
    m.dim = cfg.dim;
    m.seed = cfg.seed;
    m.base_dir = out_dir;
    for (int c = 0; c < cfg.n_classes; ++c) m.class_names.push_back("class_" + std::to_string(c));

    std::uint64_t bag_index = 0;
    for (int c = 0; c < cfg.n_classes; ++c) {
        for (int b = 0; b < cfg.bags_per_class; ++b, ++bag_index) {
            std::mt19937_64 gen(derive_seed(cfg.seed, "bag", bag_index));
            Bag bag;
            bag.id = "bag_" + std::to_string(c) + "_" + std::to_string(b);
            bag.label = c;
            bag.dim = cfg.dim;
            std::uniform_int_distribution<int> nl(cfg.patches_low_min, cfg.patches_low_max);
            bag.n_low = nl(gen);
            bag.n_high = bag.n_low * cfg.high_factor;

            const bool low_signal = cfg.mode != ScaleSplitMode::SignalHighOnly;
            const bool high_signal = cfg.mode != ScaleSplitMode::SignalLowOnly;
            int ns_low = low_signal
                             ? std::max(1, int(std::lround(cfg.signal_fraction * bag.n_low)))
                             : 0;
            int ns_high = high_signal
                              ? std::max(1, int(std::lround(cfg.signal_fraction * bag.n_high)))
                              : 0;
            fill_patches(bag.h_low, bag.n_low, cfg.dim, truth.low_dirs[c], ns_low,
                         cfg.noise_std, gen);
            fill_patches(bag.h_high, bag.n_high, cfg.dim, truth.high_dirs[c], ns_high,
                         cfg.noise_std, gen);

            ManifestEntry e;
            e.id = bag.id;
            e.path = bag.id + ".vlmb";
            e.label = c;
            write_bag(bag, out_dir / e.path);
            m.bags.push_back(std::move(e));
        }
    }

    split_dataset(m.bags, cfg.n_classes, cfg.seed);
    write_manifest(m, out_dir / "manifest.json");

    json jt;
    jt["low_dirs"] = truth.low_dirs;
    jt["high_dirs"] = truth.high_dirs;
    std::ofstream tf(out_dir / "truth.json");
    tf << jt.dump() << "\n";

    if (truth_out) *truth_out = std::move(truth);
    return m;
}

}  // namespace vila
