#include "vila/text_decoder.hpp"

#include <cmath>
#include <stdexcept>

namespace vila {

TensorPtr context_attention_over(Tape& tape, const TensorPtr& text_features,
                                 const TensorPtr& context, bool with_layer_norm) {
    if (!context || context->rows < 1)
        throw std::invalid_argument("context_attention: empty context");
    if (text_features->cols != context->cols)
        throw std::invalid_argument("context_attention: dimension mismatch: " +
                                    text_features->shape_str() + " vs " +
                                    context->shape_str());
    const double inv_sqrt_d = 1.0 / std::sqrt(double(text_features->cols));
    auto scores = scale(tape, matmul(tape, text_features, transpose(tape, context)), inv_sqrt_d);
    auto attended = matmul(tape, softmax_rows(tape, scores), context);
    if (with_layer_norm) attended = layer_norm_rows(tape, attended);
    return add(tape, attended, text_features);
}

TensorPtr context_attention(Tape& tape, const TensorPtr& text_features,
                            const TensorPtr& prototypes_updated, const TensorPtr& patches,
                            bool with_layer_norm) {
    auto context = concat_rows(tape, prototypes_updated, patches);
    return context_attention_over(tape, text_features, context, with_layer_norm);
}

}  // namespace vila
