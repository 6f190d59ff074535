#pragma once

#include "vila/tensor.hpp"

namespace vila {

// Context-guided refinement of class text features:
//   K = V = concat_rows(Pr_updated, H)
//   D' = Softmax(D K^T / sqrt(d)) V + D
// Identity projections, no layer norm; `with_layer_norm` enables the ablation
// variant that normalizes the attention output before the residual.
TensorPtr context_attention(Tape& tape, const TensorPtr& text_features,
                            const TensorPtr& prototypes_updated, const TensorPtr& patches,
                            bool with_layer_norm = false);

// Same refinement with an arbitrary pre-built context matrix (used when the
// aggregator has no prototypes, e.g. pooling baselines: context = H alone).
TensorPtr context_attention_over(Tape& tape, const TensorPtr& text_features,
                                 const TensorPtr& context, bool with_layer_norm = false);

}  // namespace vila
