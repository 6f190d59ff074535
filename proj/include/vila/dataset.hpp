#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vila/bag.hpp"

namespace vila {

enum class Split { Train, Val, Test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct ManifestEntry {
    std::string id;
    std::string path;  // relative to the manifest's directory
    int label = 0;
    Split split = Split::Train;
};

struct DatasetManifest {
    std::vector<std::string> class_names;
    int dim = 0;
    std::uint64_t seed = 0;
    std::vector<ManifestEntry> bags;
    std::filesystem::path base_dir;  // set on load; not serialized

    Bag load(const ManifestEntry& e) const;
    std::vector<std::size_t> indices_of(Split s) const;
};

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Stratified 4:3:3 split (per class, counts within +-1 of the ratio),
// deterministic per seed. Mutates the split field of each entry.
void split_dataset(std::vector<ManifestEntry>& bags, int n_classes, std::uint64_t seed,
                   int r_train = 4, int r_val = 3, int r_test = 3);

// Exactly K training bags per class, uniform without replacement.
std::vector<std::size_t> few_shot_sample(const DatasetManifest& m, int shots,
                                         std::uint64_t seed);

enum class ScaleSplitMode {
    SignalLowOnly,   // class signal present only in the low-scale stream
    SignalHighOnly,  // only in the high-scale stream
    SplitAcrossScales,  // each single scale confuses one designated class pair
};

ScaleSplitMode scale_split_from_string(const std::string& s);
std::string to_string(ScaleSplitMode m);

struct SynthConfig {
    int n_classes = 3;
    int dim = 64;
    int n_signal_prototypes = 1;  // planted signal directions per class, per scale
    int patches_low_min = 384;
    int patches_low_max = 480;
    int high_factor = 2;  // N_h = high_factor * N_l
    ScaleSplitMode mode = ScaleSplitMode::SplitAcrossScales;
    double noise_std = 0.8;
    double signal_fraction = 0.2;
    int bags_per_class = 40;
    std::uint64_t seed = 0;

    void validate() const;
};

SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthConfig& cfg);

// Planted ground truth, kept for oracle checks; also written as truth.json.
struct SynthTruth {
    // [class][prototype] unit directions, each of length dim
    std::vector<std::vector<std::vector<double>>> low_dirs;
    std::vector<std::vector<std::vector<double>>> high_dirs;
};

// Writes one .vlmb file per bag into out_dir plus manifest.json and
// truth.json; entries carry a fresh 4:3:3 split under the dataset seed.
DatasetManifest generate_synthetic(const SynthConfig& cfg,
                                   const std::filesystem::path& out_dir,
                                   SynthTruth* truth_out = nullptr);

}  // namespace vila
