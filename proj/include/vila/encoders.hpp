#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vila/tensor.hpp"

namespace vila {

enum class Scale { Low, High };
inline const char* to_string(Scale s) { return s == Scale::Low ? "low" : "high"; }

// Per-class, per-scale descriptive sentences. JSON layout:
// {"class name": {"low": [sentences], "high": [sentences]}}
struct DescriptionConfig {
    // [class][scale] -> sentences, indexed by class order
    std::vector<std::array<std::vector<std::string>, 2>> sentences;
    std::vector<std::string> class_names;

    const std::vector<std::string>& get(int cls, Scale s) const {
        return sentences.at(cls)[s == Scale::Low ? 0 : 1];
    }
};

DescriptionConfig read_descriptions(const std::filesystem::path& path,
                                    const std::vector<std::string>& class_order);
// Deterministic placeholder descriptions for synthetic classes: distinct
// token sets per class and scale.
DescriptionConfig synthetic_descriptions(const std::vector<std::string>& class_names);

// Whitespace/punctuation tokenization; every token maps to a row of a seeded
// Gaussian table keyed by FNV-1a(token) mixed with the vocabulary seed.
// Token order is preserved, so L equals the token count.
TensorPtr embed_description(const std::vector<std::string>& sentences,
                            std::uint64_t vocab_seed, int dim);

// Frozen random-projection text encoder. Stands in for a pretrained sequence
// encoder: mean-pool the token rows, apply a fixed linear map, layer norm.
// Differentiable w.r.t. the input sequence; its own weights never train.
class FrozenTextEncoder {
public:
    FrozenTextEncoder(int dim, std::uint64_t seed);

    // sequence: (M+L) x d -> 1 x d
    TensorPtr encode(Tape& tape, const TensorPtr& sequence) const;

    const TensorPtr& projection() const { return projection_; }
    std::uint64_t seed() const { return seed_; }

private:
    TensorPtr projection_;  // d x d, requires_grad = false
    std::uint64_t seed_;
};

// Context vectors prepended to the frozen description embedding, order kept.
TensorPtr assemble_prompt(Tape& tape, const TensorPtr& context,
                          const TensorPtr& description);

// Trainable prompt state for one scale: shared context plus per-class frozen
// description token embeddings.
struct ScalePrompts {
    TensorPtr context;                   // M x d, trainable (M may be 0 -> null)
    std::vector<TensorPtr> descriptions;  // per class, L_i x d, frozen
};

struct PromptSet {
    ScalePrompts low;
    ScalePrompts high;

    static PromptSet build(const DescriptionConfig& cfg, int n_context, int dim,
                           std::uint64_t vocab_seed, std::uint64_t init_seed);
    const ScalePrompts& at(Scale s) const { return s == Scale::Low ? low : high; }
    ScalePrompts& at(Scale s) { return s == Scale::Low ? low : high; }
};

// Row i = encode(assemble_prompt(context, description_i)); returns C x d.
TensorPtr encode_class_prompts(Tape& tape, const ScalePrompts& prompts,
                               const FrozenTextEncoder& encoder);

}  // namespace vila
