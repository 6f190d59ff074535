#pragma once

#include <cstdint>

#include "vila/encoders.hpp"
#include "vila/tensor.hpp"

namespace vila {

// Learnable prototypes for one scale.
struct PrototypeSet {
    TensorPtr prototypes;  // N_p x d, trainable
    Scale scale = Scale::Low;

    static PrototypeSet init(int n_prototypes, int dim, Scale scale, std::uint64_t seed);
};

// Attention-pooling weights for one scale. Stored as right-multiplying
// matrices over row vectors: transform ~ W_a, hidden ~ W_v, score ~ W_b,
// output ~ W_c.
struct PoolingParams {
    TensorPtr transform;  // d x d
    TensorPtr hidden;     // d x d
    TensorPtr score;      // d x 1
    TensorPtr output;     // d x d

    static PoolingParams init(int dim, std::uint64_t seed);
};

struct DecoderOutput {
    TensorPtr prototypes_updated;  // N_p x d
    TensorPtr attention;           // 1 x N_p, entries >= 0, sums to 1
    TensorPtr slide_feature;       // 1 x d
    TensorPtr raw_attention;       // N_p x N cross-attention logits (pre-softmax)
};

// Cross-attention of prototypes over patches with identity projections:
//   Pr_updated = LayerNorm(Softmax(Pr H^T / sqrt(d)) H) + Pr
// raw_attention (Pr H^T / sqrt(d)) is kept for interpretability.
struct PrototypeAttentionResult {
    TensorPtr prototypes_updated;
    TensorPtr raw_attention;
};
PrototypeAttentionResult prototype_attention(Tape& tape, const TensorPtr& prototypes,
                                             const TensorPtr& patches,
                                             double layer_norm_eps = 1e-5);

// Attention pooling over prototype rows:
//   Pr'_i = Pr_i W_a;  A = softmax_i(tanh(Pr' W_v) W_b);  S = (A Pr') W_c
struct AttentionPoolResult {
    TensorPtr slide_feature;  // 1 x d
    TensorPtr attention;      // 1 x rows
};
AttentionPoolResult attention_pool(Tape& tape, const TensorPtr& rows_in,
                                   const PoolingParams& params);

// Composition: prototype_attention then attention_pool. `layers` stacks the
// attention step (default 1 matches the single written layer).
DecoderOutput decode_patches(Tape& tape, const TensorPtr& prototypes,
                             const TensorPtr& patches, const PoolingParams& params,
                             int layers = 1, double layer_norm_eps = 1e-5);

}  // namespace vila
