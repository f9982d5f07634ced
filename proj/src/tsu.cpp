#include "susa/tsu.hpp"

#include <fmt/format.h>
#include <stdexcept>

namespace susa::tsu {

Tensor static_match(const Tensor& xs, const Tensor& instruction) {
    return max(cosine_similarity(xs, instruction), 1);
}

TextualCrossAttention::TextualCrossAttention(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg) {
    for (std::size_t i = 0; i < cfg.tca_layers; ++i)
        layers_.emplace_back(ps, fmt::format("{}.layer{}", prefix, i), cfg.d, cfg.hidden, cfg.scaled_attention, false);
}

std::vector<nn::Attention::KV> TextualCrossAttention::prepare(const Tensor& instruction) const {
    std::vector<nn::Attention::KV> out;
    for (const auto& l : layers_) out.push_back(l.cross_attn.keys(instruction));
    return out;
}

Tensor TextualCrossAttention::operator()(const Tensor& xs, const std::vector<nn::Attention::KV>& context) const {
    Tensor x = xs;
    for (std::size_t i = 0; i < layers_.size(); ++i) x = layers_[i](x, context.at(i));
    return x;
}

namespace {
void check_shapes(const Tensor& xs, const Tensor& gamma_stat, const Tensor& gamma_dyn) {
    if (gamma_stat.rows() != xs.rows() || gamma_stat.cols() != 1 || gamma_dyn.shape() != xs.shape())
        throw ShapeError(fmt::format("tsu.combine: xs {}, gamma_stat {}, gamma_dyn {}", xs.shape().str(),
                                     gamma_stat.shape().str(), gamma_dyn.shape().str()));
}
}  // namespace

Tensor combine(const Tensor& xs, const Tensor& gamma_stat, const Tensor& gamma_dyn, double delta) {
    if (!(delta >= 0.0 && delta <= 1.0)) throw std::invalid_argument(fmt::format("tsu.combine: delta {} not in [0, 1]", delta));
    check_shapes(xs, gamma_stat, gamma_dyn);
    return add(scalar_mul(scale_rows(xs, gamma_stat), delta), scalar_mul(gamma_dyn, 1.0 - delta));
}

Tensor combine(const Tensor& xs, const Tensor& gamma_stat, const Tensor& gamma_dyn, const Tensor& delta) {
    check_shapes(xs, gamma_stat, gamma_dyn);
    Tensor rest = add_scalar(scalar_mul(delta, -1.0), 1.0);
    return add(scalar_mul(scale_rows(xs, gamma_stat), delta), scalar_mul(gamma_dyn, rest));
}

}  // namespace susa::tsu
