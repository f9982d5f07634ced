#pragma once

// Textual semantic understanding: static cosine matching of the semantic
// panorama against the instruction, instruction cross-attention, and the
// delta-balanced combination of the two.

#include <string>
#include <vector>

#include "susa/model_config.hpp"
#include "susa/nn.hpp"

namespace susa::tsu {

// Row-wise max over the view x word cosine matrix; n x 1.
Tensor static_match(const Tensor& xs, const Tensor& instruction);

// Stacked cross-attention layers: queries from the semantic panorama,
// keys and values from the instruction.
class TextualCrossAttention {
public:
    TextualCrossAttention() = default;
    TextualCrossAttention(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg);

    // Per-layer instruction keys/values; compute once per instruction.
    std::vector<nn::Attention::KV> prepare(const Tensor& instruction) const;
    Tensor operator()(const Tensor& xs, const std::vector<nn::Attention::KV>& context) const;
    Tensor operator()(const Tensor& xs, const Tensor& instruction) const { return (*this)(xs, prepare(instruction)); }

private:
    std::vector<nn::CrossLayer> layers_;
};

// delta * gamma_stat_i * xs_i + (1 - delta) * gamma_dyn_i.
// Throws std::invalid_argument when delta lies outside [0, 1].
Tensor combine(const Tensor& xs, const Tensor& gamma_stat, const Tensor& gamma_dyn, double delta);
// Learned delta, a 1 x 1 tensor in (0, 1).
Tensor combine(const Tensor& xs, const Tensor& gamma_stat, const Tensor& gamma_dyn, const Tensor& delta);

}  // namespace susa::tsu
