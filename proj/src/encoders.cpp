#include "vila/encoders.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "vila/rng.hpp"

namespace vila {

using nlohmann::json;

DescriptionConfig read_descriptions(const std::filesystem::path& path,
                                    const std::vector<std::string>& class_order) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open description config " + path.string());
    json j;
    in >> j;
    DescriptionConfig cfg;
    cfg.class_names = class_order;
    for (const auto& name : class_order) {
        if (!j.contains(name))
            throw std::invalid_argument("description config missing class '" + name + "'");
        std::array<std::vector<std::string>, 2> per_scale;
        per_scale[0] = j.at(name).at("low").get<std::vector<std::string>>();
        per_scale[1] = j.at(name).at("high").get<std::vector<std::string>>();
        if (per_scale[0].empty() || per_scale[1].empty())
            throw std::invalid_argument("description config: class '" + name +
                                        "' needs at least one sentence per scale");
        cfg.sentences.push_back(std::move(per_scale));
    }
    return cfg;
}

DescriptionConfig synthetic_descriptions(const std::vector<std::string>& class_names) {
    DescriptionConfig cfg;
    cfg.class_names = class_names;
    for (const auto& name : class_names) {
        std::array<std::vector<std::string>, 2> per_scale;
        per_scale[0] = {"coarse tissue organization pattern of " + name + " lowscale " + name,
                        "global structural layout token " + name + " overview region"};
        per_scale[1] = {"fine grained cellular detail of " + name + " highscale " + name,
                        "nuclear texture token " + name + " magnified appearance"};
        cfg.sentences.push_back(std::move(per_scale));
    }
    return cfg;
}

namespace {

std::vector<std::string> tokenize(const std::vector<std::string>& sentences) {
    std::vector<std::string> tokens;
    for (const auto& s : sentences) {
        std::string cur;
        for (char c : s) {
            if (std::isalnum(static_cast<unsigned char>(c))) {
                cur.push_back(char(std::tolower(static_cast<unsigned char>(c))));
            } else if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        }
        if (!cur.empty()) tokens.push_back(cur);
    }
    return tokens;
}

}  // namespace

TensorPtr embed_description(const std::vector<std::string>& sentences,
                            std::uint64_t vocab_seed, int dim) {
    auto tokens = tokenize(sentences);
    if (tokens.empty())
        throw std::invalid_argument("embed_description: no tokens in description text");
    auto out = Tensor::create(int(tokens.size()), dim, false);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto rowv = gaussian_vector(std::size_t(dim), splitmix64(fnv1a(tokens[i]) ^ vocab_seed));
        std::copy(rowv.begin(), rowv.end(), out->values.begin() + i * dim);
    }
    return out;
}

FrozenTextEncoder::FrozenTextEncoder(int dim, std::uint64_t seed) : seed_(seed) {
    projection_ = Tensor::from(
        dim, dim,
        gaussian_vector(std::size_t(dim) * dim, derive_seed(seed, "text_projection"), 0.0,
                        1.0 / std::sqrt(double(dim))),
        false);
}

TensorPtr FrozenTextEncoder::encode(Tape& tape, const TensorPtr& sequence) const {
    if (sequence->rows < 1)
        throw std::invalid_argument("encode_text: empty sequence");
    if (sequence->cols != projection_->rows)
        throw std::invalid_argument("encode_text: dimension mismatch: " +
                                    sequence->shape_str() + " vs projection " +
                                    projection_->shape_str());
    auto pooled = mean_rows(tape, sequence);
    auto projected = matmul(tape, pooled, projection_);
    return layer_norm_rows(tape, projected);
}

TensorPtr assemble_prompt(Tape& tape, const TensorPtr& context,
                          const TensorPtr& description) {
    if (!context) return description;  // M = 0
    if (context->cols != description->cols)
        throw std::invalid_argument("assemble_prompt: dimension mismatch: " +
                                    context->shape_str() + " vs " + description->shape_str());
    return concat_rows(tape, context, description);
}

PromptSet PromptSet::build(const DescriptionConfig& cfg, int n_context, int dim,
                           std::uint64_t vocab_seed, std::uint64_t init_seed) {
    if (n_context < 0) throw std::invalid_argument("PromptSet: M must be >= 0");
    PromptSet set;
    for (Scale s : {Scale::Low, Scale::High}) {
        auto& sp = set.at(s);
        if (n_context > 0) {
            sp.context = Tensor::from(
                n_context, dim,
                gaussian_vector(std::size_t(n_context) * dim,
                                derive_seed(init_seed, "context", s == Scale::Low ? 0 : 1),
                                0.0, 0.02),
                true);
        }
        for (std::size_t c = 0; c < cfg.sentences.size(); ++c)
            sp.descriptions.push_back(embed_description(cfg.get(int(c), s), vocab_seed, dim));
    }
    return set;
}

TensorPtr encode_class_prompts(Tape& tape, const ScalePrompts& prompts,
                               const FrozenTextEncoder& encoder) {
    if (prompts.descriptions.empty())
        throw std::invalid_argument("encode_class_prompts: no classes");
    TensorPtr out;
    for (const auto& desc : prompts.descriptions) {
        auto feat = encoder.encode(tape, assemble_prompt(tape, prompts.context, desc));
        out = out ? concat_rows(tape, out, feat) : feat;
    }
    return out;
}

}  // namespace vila
