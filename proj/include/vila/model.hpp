#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vila/bag.hpp"
#include "vila/encoders.hpp"
#include "vila/patch_decoder.hpp"
#include "vila/tensor.hpp"
#include "vila/text_decoder.hpp"

namespace vila {

enum class Aggregator {
    PrototypeDecoder,
    MeanPool,
    AttentionPool,
    SelfAttentionPool,
    Abmil,  // same computation as AttentionPool, kept as a named arm
};
enum class Fusion { LogitSummation, FeatureSummation };
enum class Similarity { BagLevel, InstanceMax, InstanceMean, InstanceTopK };
enum class ScaleMode { Dual, LowOnly, HighOnly };

Aggregator aggregator_from_string(const std::string& s);
Fusion fusion_from_string(const std::string& s);
Similarity similarity_from_string(const std::string& s);
std::string to_string(Aggregator a);
std::string to_string(Fusion f);
std::string to_string(Similarity s);

struct ModelConfig {
    int dim = 64;
    int n_prototypes = 16;
    int n_context = 16;
    double alpha_low = 1.0;
    double alpha_high = 1.0;
    double tau = 1.0;
    Aggregator aggregator = Aggregator::PrototypeDecoder;
    Fusion fusion = Fusion::LogitSummation;
    Similarity similarity = Similarity::BagLevel;
    ScaleMode scale_mode = ScaleMode::Dual;
    int topk = 0;  // 0 -> K = max(1, ceil(topk_fraction * N))
    double topk_fraction = 0.1;
    bool use_text_decoder = true;
    bool text_decoder_layer_norm = false;
    bool projected_attention = false;  // learned Q/K/V projections in Eq.-4-style attention
    int attention_layers = 1;
    double layer_norm_eps = 1e-5;
    std::uint64_t encoder_seed = 7;
    std::uint64_t init_seed = 1;

    void validate() const;
};

ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& cfg);

struct ScaleParams {
    PrototypeSet protos;
    PoolingParams pool;
    TensorPtr proj_q, proj_k, proj_v;  // only when projected_attention
};

struct ForwardDiagnostics {
    // index 0 = low, 1 = high; empty vectors for inactive scales
    std::array<std::vector<double>, 2> slide_feature;
    std::array<std::vector<double>, 2> refined_text;     // C x d flattened
    std::array<std::vector<double>, 2> attention;        // prototype weights A
    std::array<std::vector<double>, 2> raw_attention;    // N_p x N flattened
    std::array<std::pair<int, int>, 2> raw_attention_shape{};
    std::array<std::vector<double>, 2> per_class_cosine;
    std::array<std::vector<double>, 2> scale_probs;
    std::vector<double> fused;       // P, sums to the total active alpha
    std::vector<double> normalized;  // P / alpha_total
    double alpha_total = 0.0;
    TensorPtr fused_tensor;  // valid while the tape is alive
};

struct ExplainResult {
    std::string bag_id;
    std::vector<int> assignment;  // per high-scale patch: prototype index
    int representative_prototype = 0;
    std::vector<int> flagged;  // patch indices assigned to the representative
};

nlohmann::json explain_to_json(const ExplainResult& r);

class VilaModel {
public:
    VilaModel(ModelConfig cfg, const DescriptionConfig& descriptions);

    ForwardDiagnostics forward(Tape& tape, const Bag& bag) const;
    ForwardDiagnostics single_scale_forward(Tape& tape, const Bag& bag, Scale scale) const;

    // P-hat = P / alpha_total, then cross entropy against the label.
    TensorPtr normalize_and_loss(Tape& tape, const ForwardDiagnostics& diag, int label) const;

    static int predict(const std::vector<double>& probs);

    ExplainResult explain(const Bag& bag) const;

    // Named trainable parameter groups for the configured mode.
    std::vector<std::pair<std::string, TensorPtr>> parameters() const;
    void zero_grad() const;

    nlohmann::json params_to_json() const;
    void params_from_json(const nlohmann::json& j);

    int n_classes() const { return int(prompts_.low.descriptions.size()); }
    const ModelConfig& config() const { return cfg_; }
    const FrozenTextEncoder& encoder() const { return encoder_; }
    PromptSet& prompts() { return prompts_; }
    ScaleParams& scale_params(Scale s) { return s == Scale::Low ? low_ : high_; }
    const ScaleParams& scale_params(Scale s) const { return s == Scale::Low ? low_ : high_; }

private:
    struct Branch {
        TensorPtr slide;         // 1 x d (null for instance similarity)
        TensorPtr refined_text;  // C x d
        TensorPtr protos_updated;
        TensorPtr raw_attention;
        TensorPtr attention;
        TensorPtr probs;         // 1 x C (null under feature summation)
        std::vector<double> cosines;
    };
    Branch run_branch(Tape& tape, const TensorPtr& patches, Scale scale) const;
    TensorPtr prototype_step(Tape& tape, const TensorPtr& protos, const TensorPtr& patches,
                             Scale scale, TensorPtr* raw_out) const;
    ForwardDiagnostics forward_masked(Tape& tape, const Bag& bag, bool use_low,
                                      bool use_high) const;

    ModelConfig cfg_;
    FrozenTextEncoder encoder_;
    PromptSet prompts_;
    ScaleParams low_;
    ScaleParams high_;
};

// Pooling baselines applied directly to patch rows (comparison arms).
TensorPtr baseline_aggregate(Tape& tape, const TensorPtr& patches, Aggregator mode,
                             const PoolingParams& params);

}  // namespace vila
