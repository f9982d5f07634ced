#include "susa/nn.hpp"

#include <cmath>

namespace susa::nn {

Linear::Linear(ParamStore& ps, const std::string& prefix, std::size_t in, std::size_t out, Init init)
    : w(ps.add(prefix + ".w", {in, out}, init)), b(ps.add(prefix + ".b", {1, out}, Init::Zeros)) {}

FFN::FFN(ParamStore& ps, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out, Init last)
    : l1(ps, prefix + ".l1", in, hidden), l2(ps, prefix + ".l2", hidden, out, last) {}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& prefix, std::size_t d)
    : gamma(ps.add(prefix + ".gamma", {1, d}, Init::Ones)), beta(ps.add(prefix + ".beta", {1, d}, Init::Zeros)) {}

Attention::Attention(ParamStore& ps, const std::string& prefix, std::size_t d, bool scaled_)
    : wq(ps.add(prefix + ".wq", {d, d})),
      wk(ps.add(prefix + ".wk", {d, d})),
      wv(ps.add(prefix + ".wv", {d, d})),
      scaled(scaled_) {}

Tensor Attention::operator()(const Tensor& x, const KV& kv, const Tensor& bias) const {
    Tensor logits = matmul(matmul(x, wq), transpose(kv.k));
    if (scaled) logits = scalar_mul(logits, 1.0 / std::sqrt(double(wq.cols())));
    if (bias.defined()) logits = add(logits, bias);
    return matmul(softmax(logits, 1), kv.v);
}

EncoderLayer::EncoderLayer(ParamStore& ps, const std::string& prefix, std::size_t d, std::size_t hidden, bool scaled)
    : attn(ps, prefix + ".attn", d, scaled),
      ln1(ps, prefix + ".ln1", d),
      ln2(ps, prefix + ".ln2", d),
      ffn(ps, prefix + ".ffn", d, hidden, d) {}

Tensor EncoderLayer::operator()(const Tensor& x) const {
    Tensor h = ln1(add(x, attn.self(x)));
    return ln2(add(h, ffn(h)));
}

CrossLayer::CrossLayer(ParamStore& ps, const std::string& prefix, std::size_t d, std::size_t hidden, bool scaled,
                       bool with_self)
    : has_self(with_self),
      cross_attn(ps, prefix + ".cross", d, scaled),
      ln_cross(ps, prefix + ".ln_cross", d),
      ln_ffn(ps, prefix + ".ln_ffn", d),
      ffn(ps, prefix + ".ffn", d, hidden, d) {
    if (with_self) {
        self_attn = Attention(ps, prefix + ".self", d, scaled);
        ln_self = LayerNorm(ps, prefix + ".ln_self", d);
    }
}

Tensor CrossLayer::operator()(const Tensor& x, const Attention::KV& context, const Tensor& self_bias) const {
    Tensor h = x;
    if (has_self) h = ln_self(add(h, self_attn.self(h, self_bias)));
    h = ln_cross(add(h, cross_attn(h, context)));
    return ln_ffn(add(h, ffn(h)));
}

}  // namespace susa::nn
