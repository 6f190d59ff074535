#include "vila/patch_decoder.hpp"

#include <cmath>
#include <stdexcept>

#include "vila/rng.hpp"

namespace vila {

PrototypeSet PrototypeSet::init(int n_prototypes, int dim, Scale scale, std::uint64_t seed) {
    if (n_prototypes < 1)
        throw std::invalid_argument("PrototypeSet: N_p must be >= 1");
    PrototypeSet set;
    set.scale = scale;
    set.prototypes = Tensor::from(
        n_prototypes, dim,
        gaussian_vector(std::size_t(n_prototypes) * dim,
                        derive_seed(seed, "prototypes", scale == Scale::Low ? 0 : 1), 0.0, 0.02),
        true);
    return set;
}

PoolingParams PoolingParams::init(int dim, std::uint64_t seed) {
    PoolingParams p;
    p.transform = Tensor::from(dim, dim, xavier_uniform(dim, dim, derive_seed(seed, "w_a")), true);
    p.hidden = Tensor::from(dim, dim, xavier_uniform(dim, dim, derive_seed(seed, "w_v")), true);
    p.score = Tensor::from(dim, 1, xavier_uniform(dim, 1, derive_seed(seed, "w_b")), true);
    p.output = Tensor::from(dim, dim, xavier_uniform(dim, dim, derive_seed(seed, "w_c")), true);
    return p;
}

PrototypeAttentionResult prototype_attention(Tape& tape, const TensorPtr& prototypes,
                                             const TensorPtr& patches, double layer_norm_eps) {
    if (patches->rows < 1)
        throw std::invalid_argument("prototype_attention: empty patch matrix");
    if (prototypes->cols != patches->cols)
        throw std::invalid_argument("prototype_attention: dimension mismatch: " +
                                    prototypes->shape_str() + " vs " + patches->shape_str());
    const double inv_sqrt_d = 1.0 / std::sqrt(double(prototypes->cols));
    auto raw = scale(tape, matmul(tape, prototypes, transpose(tape, patches)), inv_sqrt_d);
    auto attn = softmax_rows(tape, raw);
    auto context = matmul(tape, attn, patches);
    auto updated = add(tape, layer_norm_rows(tape, context, layer_norm_eps), prototypes);
    return {updated, raw};
}

AttentionPoolResult attention_pool(Tape& tape, const TensorPtr& rows_in,
                                   const PoolingParams& params) {
    auto transformed = matmul(tape, rows_in, params.transform);       // N_p x d
    auto gate = tanh_elem(tape, matmul(tape, transformed, params.hidden));
    auto scores = matmul(tape, gate, params.score);                   // N_p x 1
    auto attn = softmax_rows(tape, transpose(tape, scores));          // 1 x N_p
    auto pooled = matmul(tape, attn, transformed);                    // 1 x d
    auto slide = matmul(tape, pooled, params.output);                 // 1 x d
    return {slide, attn};
}

DecoderOutput decode_patches(Tape& tape, const TensorPtr& prototypes,
                             const TensorPtr& patches, const PoolingParams& params,
                             int layers, double layer_norm_eps) {
    if (layers < 1) throw std::invalid_argument("decode_patches: layers must be >= 1");
    DecoderOutput out;
    TensorPtr current = prototypes;
    for (int l = 0; l < layers; ++l) {
        auto res = prototype_attention(tape, current, patches, layer_norm_eps);
        current = res.prototypes_updated;
        out.raw_attention = res.raw_attention;  // last layer's map
    }
    out.prototypes_updated = current;
    auto pooled = attention_pool(tape, current, params);
    out.slide_feature = pooled.slide_feature;
    out.attention = pooled.attention;
    return out;
}

}  // namespace vila
