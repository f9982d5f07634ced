#pragma once

// Hybrid representation fusion: attention pooling, fusion weights over the
// four streams, the hybrid embedding and the symmetric contrastive loss.

#include <array>
#include <string>

#include "susa/nn.hpp"

namespace susa::hrf {

// eta = softmax_rows(tanh(H) v); result = tanh(sum_i eta_i H_i), 1 x d.
// v is d x 1.
Tensor attn_pool(const Tensor& h, const Tensor& v);

enum class Stream : std::size_t { Semantic = 0, Rgb = 1, DepthMap = 2, RgbMap = 3 };

// beta = sigmoid(FFN([xs0; xr0; td0; tr0])), optionally L1-normalized.
class FusionWeights {
public:
    FusionWeights() = default;
    FusionWeights(ParamStore& ps, const std::string& prefix, std::size_t d, std::size_t hidden, bool normalize);

    // Rows are 1 x d. `keep` masks streams out: a dropped stream's input is
    // zeroed and its weight forced to 0 before normalization.
    Tensor operator()(const std::array<Tensor, 4>& first_rows, const std::array<bool, 4>& keep = {true, true, true, true}) const;
    bool normalized() const { return normalize_; }

private:
    nn::FFN ffn_;
    bool normalize_ = true;
    std::size_t d_ = 0;
};

// sum_i beta_i * pooled_i, beta is 1 x 4, pooled are 1 x d.
Tensor hybrid_embed(const std::array<Tensor, 4>& pooled, const Tensor& beta);

// Symmetric InfoNCE over cosine similarities with positives on the diagonal.
// e and i are B x d; t > 0.
Tensor contrastive_loss(const Tensor& e, const Tensor& i, double temperature);

// beta_k as a 1 x 1 tensor.
Tensor beta_at(const Tensor& beta, std::size_t k);

}  // namespace susa::hrf
