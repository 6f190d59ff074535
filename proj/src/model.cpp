#include "vila/model.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "vila/config_keys.hpp"
#include "vila/rng.hpp"

namespace vila {

using nlohmann::json;

Aggregator aggregator_from_string(const std::string& s) {
    if (s == "prototype_decoder") return Aggregator::PrototypeDecoder;
    if (s == "mean_pool") return Aggregator::MeanPool;
    if (s == "attention_pool") return Aggregator::AttentionPool;
    if (s == "self_attention_pool") return Aggregator::SelfAttentionPool;
    if (s == "abmil") return Aggregator::Abmil;
    throw std::invalid_argument("unknown aggregator: " + s);
}

Fusion fusion_from_string(const std::string& s) {
    if (s == "logit_summation") return Fusion::LogitSummation;
    if (s == "feature_summation") return Fusion::FeatureSummation;
    throw std::invalid_argument("unknown fusion mode: " + s);
}

Similarity similarity_from_string(const std::string& s) {
    if (s == "bag_level") return Similarity::BagLevel;
    if (s == "instance_max") return Similarity::InstanceMax;
    if (s == "instance_mean") return Similarity::InstanceMean;
    if (s == "instance_topk") return Similarity::InstanceTopK;
    throw std::invalid_argument("unknown similarity mode: " + s);
}

std::string to_string(Aggregator a) {
    switch (a) {
        case Aggregator::PrototypeDecoder: return "prototype_decoder";
        case Aggregator::MeanPool: return "mean_pool";
        case Aggregator::AttentionPool: return "attention_pool";
        case Aggregator::SelfAttentionPool: return "self_attention_pool";
        default: return "abmil";
    }
}

std::string to_string(Fusion f) {
    return f == Fusion::LogitSummation ? "logit_summation" : "feature_summation";
}

std::string to_string(Similarity s) {
    switch (s) {
        case Similarity::BagLevel: return "bag_level";
        case Similarity::InstanceMax: return "instance_max";
        case Similarity::InstanceMean: return "instance_mean";
        default: return "instance_topk";
    }
}

void ModelConfig::validate() const {
    if (dim < 2) throw std::invalid_argument("ModelConfig: d must be >= 2");
    if (n_prototypes < 1) throw std::invalid_argument("ModelConfig: N_p must be >= 1");
    if (n_context < 0) throw std::invalid_argument("ModelConfig: M must be >= 0");
    if (alpha_low < 0 || alpha_high < 0 || alpha_low + alpha_high <= 0)
        throw std::invalid_argument("ModelConfig: need alpha_l, alpha_h >= 0 and alpha_l + alpha_h > 0");
    if (tau <= 0) throw std::invalid_argument("ModelConfig: tau must be > 0");
    if (attention_layers < 1)
        throw std::invalid_argument("ModelConfig: attention_layers must be >= 1");
    if (topk < 0) throw std::invalid_argument("ModelConfig: topk must be >= 0");
    if (topk_fraction <= 0 || topk_fraction > 1)
        throw std::invalid_argument("ModelConfig: topk_fraction must be in (0,1]");
    if (fusion == Fusion::FeatureSummation && similarity != Similarity::BagLevel)
        throw std::invalid_argument(
            "ModelConfig: instance-level similarity has no slide feature to sum; "
            "feature_summation requires bag_level similarity");
}

ModelConfig model_config_from_json(const json& j) {
    detail::reject_unknown_keys(
        j,
        {"d", "prototypes", "context_tokens", "alpha_low", "alpha_high", "tau", "aggregator",
         "fusion", "similarity", "scale_mode", "topk", "topk_fraction", "use_text_decoder",
         "text_decoder_layer_norm", "projected_attention", "attention_layers",
         "layer_norm_eps", "encoder_seed", "init_seed"},
        "ModelConfig");
    ModelConfig c;
    if (j.contains("d")) c.dim = j.at("d").get<int>();
    if (j.contains("prototypes")) c.n_prototypes = j.at("prototypes").get<int>();
    if (j.contains("context_tokens")) c.n_context = j.at("context_tokens").get<int>();
    if (j.contains("alpha_low")) c.alpha_low = j.at("alpha_low").get<double>();
    if (j.contains("alpha_high")) c.alpha_high = j.at("alpha_high").get<double>();
    if (j.contains("tau")) c.tau = j.at("tau").get<double>();
    if (j.contains("aggregator"))
        c.aggregator = aggregator_from_string(j.at("aggregator").get<std::string>());
    if (j.contains("fusion")) c.fusion = fusion_from_string(j.at("fusion").get<std::string>());
    if (j.contains("similarity"))
        c.similarity = similarity_from_string(j.at("similarity").get<std::string>());
    if (j.contains("scale_mode")) {
        const auto s = j.at("scale_mode").get<std::string>();
        if (s == "dual") c.scale_mode = ScaleMode::Dual;
        else if (s == "low") c.scale_mode = ScaleMode::LowOnly;
        else if (s == "high") c.scale_mode = ScaleMode::HighOnly;
        else throw std::invalid_argument("unknown scale_mode: " + s);
    }
    if (j.contains("topk")) c.topk = j.at("topk").get<int>();
    if (j.contains("topk_fraction")) c.topk_fraction = j.at("topk_fraction").get<double>();
    if (j.contains("use_text_decoder")) c.use_text_decoder = j.at("use_text_decoder").get<bool>();
    if (j.contains("text_decoder_layer_norm"))
        c.text_decoder_layer_norm = j.at("text_decoder_layer_norm").get<bool>();
    if (j.contains("projected_attention"))
        c.projected_attention = j.at("projected_attention").get<bool>();
    if (j.contains("attention_layers")) c.attention_layers = j.at("attention_layers").get<int>();
    if (j.contains("layer_norm_eps")) c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
    if (j.contains("encoder_seed")) c.encoder_seed = j.at("encoder_seed").get<std::uint64_t>();
    if (j.contains("init_seed")) c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
}

json to_json(const ModelConfig& c) {
    std::string scale_mode = c.scale_mode == ScaleMode::Dual
                                 ? "dual"
                                 : (c.scale_mode == ScaleMode::LowOnly ? "low" : "high");
    return {{"d", c.dim},
            {"prototypes", c.n_prototypes},
            {"context_tokens", c.n_context},
            {"alpha_low", c.alpha_low},
            {"alpha_high", c.alpha_high},
            {"tau", c.tau},
            {"aggregator", to_string(c.aggregator)},
            {"fusion", to_string(c.fusion)},
            {"similarity", to_string(c.similarity)},
            {"scale_mode", scale_mode},
            {"topk", c.topk},
            {"topk_fraction", c.topk_fraction},
            {"use_text_decoder", c.use_text_decoder},
            {"text_decoder_layer_norm", c.text_decoder_layer_norm},
            {"projected_attention", c.projected_attention},
            {"attention_layers", c.attention_layers},
            {"layer_norm_eps", c.layer_norm_eps},
            {"encoder_seed", c.encoder_seed},
            {"init_seed", c.init_seed}};
}

VilaModel::VilaModel(ModelConfig cfg, const DescriptionConfig& descriptions)
    : cfg_(cfg), encoder_(cfg.dim, cfg.encoder_seed) {
    cfg_.validate();
    prompts_ = PromptSet::build(descriptions, cfg_.n_context, cfg_.dim,
                                derive_seed(cfg_.encoder_seed, "vocab"), cfg_.init_seed);
    for (Scale s : {Scale::Low, Scale::High}) {
        auto& sp = scale_params(s);
        const std::uint64_t seed =
            derive_seed(cfg_.init_seed, "scale_params", s == Scale::Low ? 0 : 1);
        sp.protos = PrototypeSet::init(cfg_.n_prototypes, cfg_.dim, s, seed);
        sp.pool = PoolingParams::init(cfg_.dim, seed);
        if (cfg_.projected_attention) {
            sp.proj_q = Tensor::from(cfg_.dim, cfg_.dim,
                                     xavier_uniform(cfg_.dim, cfg_.dim, derive_seed(seed, "w_q")), true);
            sp.proj_k = Tensor::from(cfg_.dim, cfg_.dim,
                                     xavier_uniform(cfg_.dim, cfg_.dim, derive_seed(seed, "w_k")), true);
            sp.proj_v = Tensor::from(cfg_.dim, cfg_.dim,
                                     xavier_uniform(cfg_.dim, cfg_.dim, derive_seed(seed, "w_v_proj")), true);
        }
    }
}

TensorPtr VilaModel::prototype_step(Tape& tape, const TensorPtr& protos,
                                    const TensorPtr& patches, Scale sc,
                                    TensorPtr* raw_out) const {
    if (!cfg_.projected_attention) {
        auto res = prototype_attention(tape, protos, patches, cfg_.layer_norm_eps);
        if (raw_out) *raw_out = res.raw_attention;
        return res.prototypes_updated;
    }
    const auto& sp = scale_params(sc);
    const double inv_sqrt_d = 1.0 / std::sqrt(double(cfg_.dim));
    auto q = matmul(tape, protos, sp.proj_q);
    auto k = matmul(tape, patches, sp.proj_k);
    auto v = matmul(tape, patches, sp.proj_v);
    auto raw = scale(tape, matmul(tape, q, transpose(tape, k)), inv_sqrt_d);
    if (raw_out) *raw_out = raw;
    auto context = matmul(tape, softmax_rows(tape, raw), v);
    return add(tape, layer_norm_rows(tape, context, cfg_.layer_norm_eps), protos);
}

TensorPtr baseline_aggregate(Tape& tape, const TensorPtr& patches, Aggregator mode,
                             const PoolingParams& params) {
    switch (mode) {
        case Aggregator::MeanPool:
            return mean_rows(tape, patches);
        case Aggregator::AttentionPool:
        case Aggregator::Abmil:
            return attention_pool(tape, patches, params).slide_feature;
        case Aggregator::SelfAttentionPool: {
            const double inv_sqrt_d = 1.0 / std::sqrt(double(patches->cols));
            auto scores =
                scale(tape, matmul(tape, patches, transpose(tape, patches)), inv_sqrt_d);
            auto attended = matmul(tape, softmax_rows(tape, scores), patches);
            return mean_rows(tape, attended);
        }
        default:
            throw std::invalid_argument("baseline_aggregate: not a baseline mode: " +
                                        to_string(mode));
    }
}

VilaModel::Branch VilaModel::run_branch(Tape& tape, const TensorPtr& patches,
                                        Scale sc) const {
    const auto& sp = scale_params(sc);
    Branch br;

    auto text = encode_class_prompts(tape, prompts_.at(sc), encoder_);  // C x d

    TensorPtr context;  // for the text decoder
    if (cfg_.aggregator == Aggregator::PrototypeDecoder) {
        TensorPtr current = sp.protos.prototypes;
        for (int l = 0; l < cfg_.attention_layers; ++l)
            current = prototype_step(tape, current, patches, sc, &br.raw_attention);
        br.protos_updated = current;
        context = concat_rows(tape, current, patches);
        if (cfg_.similarity == Similarity::BagLevel) {
            auto pooled = attention_pool(tape, current, sp.pool);
            br.slide = pooled.slide_feature;
            br.attention = pooled.attention;
        }
    } else {
        br.slide = baseline_aggregate(tape, patches, cfg_.aggregator, sp.pool);
        context = patches;
    }

    br.refined_text =
        cfg_.use_text_decoder
            ? context_attention_over(tape, text, context, cfg_.text_decoder_layer_norm)
            : text;

    const int n_cls = n_classes();
    if (cfg_.similarity == Similarity::BagLevel) {
        std::vector<TensorPtr> logits;
        for (int i = 0; i < n_cls; ++i) {
            auto c = cosine_rows(tape, br.slide, row(tape, br.refined_text, i));
            br.cosines.push_back(c->values[0]);
            logits.push_back(c);
        }
        if (cfg_.fusion == Fusion::LogitSummation)
            br.probs = softmax_rows(
                tape, scale(tape, row_from_scalars(tape, logits), 1.0 / cfg_.tau));
        return br;
    }

    // instance-level similarity: score each patch against each class, pool
    // the per-patch scores per class
    const int n = patches->rows;
    int k = cfg_.topk > 0 ? cfg_.topk
                          : std::max(1, int(std::ceil(cfg_.topk_fraction * n)));
    if (cfg_.similarity == Similarity::InstanceTopK && k > n) {
        std::cerr << "warning: top-K K=" << k << " exceeds patch count N=" << n
                  << "; clamping to N\n";
        k = n;
    }
    std::vector<TensorPtr> patch_rows;
    for (int j = 0; j < n; ++j) patch_rows.push_back(row(tape, patches, j));
    std::vector<TensorPtr> class_scores;
    for (int i = 0; i < n_cls; ++i) {
        auto text_i = row(tape, br.refined_text, i);
        std::vector<TensorPtr> sims;
        for (int j = 0; j < n; ++j)
            sims.push_back(cosine_rows(tape, patch_rows[j], text_i));
        TensorPtr agg;
        switch (cfg_.similarity) {
            case Similarity::InstanceMax: {
                std::size_t best = 0;
                for (std::size_t j = 1; j < sims.size(); ++j)
                    if (sims[j]->values[0] > sims[best]->values[0]) best = j;
                agg = sims[best];
                break;
            }
            case Similarity::InstanceMean:
                agg = scale(tape, sum_all(tape, row_from_scalars(tape, sims)), 1.0 / n);
                break;
            default: {  // InstanceTopK
                std::vector<int> order(n);
                std::iota(order.begin(), order.end(), 0);
                std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                    return sims[a]->values[0] > sims[b]->values[0];
                });
                std::vector<TensorPtr> top;
                for (int t = 0; t < k; ++t) top.push_back(sims[order[t]]);
                agg = scale(tape, sum_all(tape, row_from_scalars(tape, top)), 1.0 / k);
            }
        }
        br.cosines.push_back(agg->values[0]);
        class_scores.push_back(agg);
    }
    br.probs = softmax_rows(
        tape, scale(tape, row_from_scalars(tape, class_scores), 1.0 / cfg_.tau));
    return br;
}

namespace {

TensorPtr patches_tensor(const Bag& bag, Scale s) {
    if (s == Scale::Low) return Tensor::from(bag.n_low, bag.dim, bag.h_low, false);
    return Tensor::from(bag.n_high, bag.dim, bag.h_high, false);
}

}  // namespace

ForwardDiagnostics VilaModel::forward_masked(Tape& tape, const Bag& bag, bool use_low,
                                             bool use_high) const {
    if (bag.dim != cfg_.dim)
        throw std::invalid_argument("forward: bag d=" + std::to_string(bag.dim) +
                                    " does not match model d=" + std::to_string(cfg_.dim));
    ForwardDiagnostics diag;
    std::optional<Branch> branches[2];
    const bool used[2] = {use_low, use_high};
    const double alphas[2] = {cfg_.alpha_low, cfg_.alpha_high};

    for (int s = 0; s < 2; ++s) {
        if (!used[s]) continue;
        Scale sc = s == 0 ? Scale::Low : Scale::High;
        auto patches = patches_tensor(bag, sc);
        branches[s] = run_branch(tape, patches, sc);
        const auto& br = *branches[s];
        if (br.slide) diag.slide_feature[s] = br.slide->values;
        diag.refined_text[s] = br.refined_text->values;
        if (br.attention) diag.attention[s] = br.attention->values;
        if (br.raw_attention) {
            diag.raw_attention[s] = br.raw_attention->values;
            diag.raw_attention_shape[s] = {br.raw_attention->rows, br.raw_attention->cols};
        }
        diag.per_class_cosine[s] = br.cosines;
        diag.alpha_total += alphas[s];
    }

    TensorPtr fused;
    if (cfg_.fusion == Fusion::LogitSummation) {
        for (int s = 0; s < 2; ++s) {
            if (!used[s]) continue;
            diag.scale_probs[s] = branches[s]->probs->values;
            auto weighted = scale(tape, branches[s]->probs, alphas[s]);
            fused = fused ? add(tape, fused, weighted) : weighted;
        }
    } else {
        // feature summation: sum slide and text features across active
        // scales, one similarity + softmax step
        TensorPtr slide_sum, text_sum;
        for (int s = 0; s < 2; ++s) {
            if (!used[s]) continue;
            slide_sum = slide_sum ? add(tape, slide_sum, branches[s]->slide)
                                  : branches[s]->slide;
            text_sum = text_sum ? add(tape, text_sum, branches[s]->refined_text)
                                : branches[s]->refined_text;
        }
        std::vector<TensorPtr> logits;
        for (int i = 0; i < n_classes(); ++i)
            logits.push_back(cosine_rows(tape, slide_sum, row(tape, text_sum, i)));
        auto probs =
            softmax_rows(tape, scale(tape, row_from_scalars(tape, logits), 1.0 / cfg_.tau));
        for (int s = 0; s < 2; ++s)
            if (used[s]) diag.scale_probs[s] = probs->values;
        fused = scale(tape, probs, diag.alpha_total);
    }

    diag.fused_tensor = fused;
    diag.fused = fused->values;
    diag.normalized = fused->values;
    for (auto& v : diag.normalized) v /= diag.alpha_total;
    return diag;
}

ForwardDiagnostics VilaModel::forward(Tape& tape, const Bag& bag) const {
    switch (cfg_.scale_mode) {
        case ScaleMode::LowOnly: return forward_masked(tape, bag, true, false);
        case ScaleMode::HighOnly: return forward_masked(tape, bag, false, true);
        default: return forward_masked(tape, bag, true, true);
    }
}

ForwardDiagnostics VilaModel::single_scale_forward(Tape& tape, const Bag& bag,
                                                   Scale scale) const {
    return forward_masked(tape, bag, scale == Scale::Low, scale == Scale::High);
}

TensorPtr VilaModel::normalize_and_loss(Tape& tape, const ForwardDiagnostics& diag,
                                        int label) const {
    auto normalized = scale(tape, diag.fused_tensor, 1.0 / diag.alpha_total);
    return cross_entropy(tape, normalized, label);
}

int VilaModel::predict(const std::vector<double>& probs) {
    if (probs.empty()) throw std::invalid_argument("predict: empty probability vector");
    return int(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

ExplainResult VilaModel::explain(const Bag& bag) const {
    if (cfg_.aggregator != Aggregator::PrototypeDecoder)
        throw std::invalid_argument("explain: unsupported aggregator " +
                                    to_string(cfg_.aggregator));
    Tape tape;
    auto patches = patches_tensor(bag, Scale::High);
    TensorPtr raw;
    TensorPtr current = scale_params(Scale::High).protos.prototypes;
    for (int l = 0; l < cfg_.attention_layers; ++l)
        current = prototype_step(tape, current, patches, Scale::High, &raw);
    auto pooled = attention_pool(tape, current, scale_params(Scale::High).pool);

    ExplainResult res;
    res.bag_id = bag.id;
    const int n_p = raw->rows, n = raw->cols;
    res.assignment.resize(n);
    for (int j = 0; j < n; ++j) {
        int best = 0;
        for (int p = 1; p < n_p; ++p)
            if (raw->at(p, j) > raw->at(best, j)) best = p;
        res.assignment[j] = best;
    }
    const auto& a = pooled.attention->values;
    res.representative_prototype =
        int(std::max_element(a.begin(), a.end()) - a.begin());
    for (int j = 0; j < n; ++j)
        if (res.assignment[j] == res.representative_prototype) res.flagged.push_back(j);
    return res;
}

json explain_to_json(const ExplainResult& r) {
    json assignments = json::array();
    for (std::size_t j = 0; j < r.assignment.size(); ++j) {
        bool flagged = r.assignment[j] == r.representative_prototype;
        assignments.push_back(
            {{"patch", int(j)}, {"prototype", r.assignment[j]}, {"flagged", flagged}});
    }
    return {{"bag_id", r.bag_id},
            {"scale", "high"},
            {"assignments", std::move(assignments)},
            {"representative_prototype", r.representative_prototype}};
}

std::vector<std::pair<std::string, TensorPtr>> VilaModel::parameters() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    const bool use_low = cfg_.scale_mode != ScaleMode::HighOnly;
    const bool use_high = cfg_.scale_mode != ScaleMode::LowOnly;
    for (Scale s : {Scale::Low, Scale::High}) {
        if ((s == Scale::Low && !use_low) || (s == Scale::High && !use_high)) continue;
        const std::string tag = to_string(s);
        const auto& sp = scale_params(s);
        if (prompts_.at(s).context)
            out.push_back({"context_" + tag, prompts_.at(s).context});
        const bool instance = cfg_.similarity != Similarity::BagLevel;
        if (cfg_.aggregator == Aggregator::PrototypeDecoder &&
            (!instance || cfg_.use_text_decoder)) {
            out.push_back({"prototypes_" + tag, sp.protos.prototypes});
            if (cfg_.projected_attention) {
                out.push_back({"proj_q_" + tag, sp.proj_q});
                out.push_back({"proj_k_" + tag, sp.proj_k});
                out.push_back({"proj_v_" + tag, sp.proj_v});
            }
        }
        const bool pool_used =
            !instance && (cfg_.aggregator == Aggregator::PrototypeDecoder ||
                          cfg_.aggregator == Aggregator::AttentionPool ||
                          cfg_.aggregator == Aggregator::Abmil);
        if (pool_used) {
            out.push_back({"pool_transform_" + tag, sp.pool.transform});
            out.push_back({"pool_hidden_" + tag, sp.pool.hidden});
            out.push_back({"pool_score_" + tag, sp.pool.score});
            out.push_back({"pool_output_" + tag, sp.pool.output});
        }
    }
    return out;
}

void VilaModel::zero_grad() const {
    for (auto& [name, t] : parameters()) t->zero_grad();
}

json VilaModel::params_to_json() const {
    json j;
    auto dump = [&](const std::string& name, const TensorPtr& t) {
        if (!t) return;
        j[name] = {{"rows", t->rows}, {"cols", t->cols}, {"values", t->values}};
    };
    for (Scale s : {Scale::Low, Scale::High}) {
        const std::string tag = to_string(s);
        const auto& sp = scale_params(s);
        dump("context_" + tag, prompts_.at(s).context);
        dump("prototypes_" + tag, sp.protos.prototypes);
        dump("pool_transform_" + tag, sp.pool.transform);
        dump("pool_hidden_" + tag, sp.pool.hidden);
        dump("pool_score_" + tag, sp.pool.score);
        dump("pool_output_" + tag, sp.pool.output);
        dump("proj_q_" + tag, sp.proj_q);
        dump("proj_k_" + tag, sp.proj_k);
        dump("proj_v_" + tag, sp.proj_v);
    }
    return j;
}

void VilaModel::params_from_json(const json& j) {
    auto load = [&](const std::string& name, const TensorPtr& t) {
        if (!t) return;
        if (!j.contains(name))
            throw std::invalid_argument("params file missing tensor '" + name + "'");
        const auto& e = j.at(name);
        if (e.at("rows").get<int>() != t->rows || e.at("cols").get<int>() != t->cols)
            throw std::invalid_argument("params file shape mismatch for '" + name + "'");
        t->values = e.at("values").get<std::vector<double>>();
    };
    for (Scale s : {Scale::Low, Scale::High}) {
        const std::string tag = to_string(s);
        auto& sp = scale_params(s);
        load("context_" + tag, prompts_.at(s).context);
        load("prototypes_" + tag, sp.protos.prototypes);
        load("pool_transform_" + tag, sp.pool.transform);
        load("pool_hidden_" + tag, sp.pool.hidden);
        load("pool_score_" + tag, sp.pool.score);
        load("pool_output_" + tag, sp.pool.output);
        load("proj_q_" + tag, sp.proj_q);
        load("proj_k_" + tag, sp.proj_k);
        load("proj_v_" + tag, sp.proj_v);
    }
}

}  // namespace vila
