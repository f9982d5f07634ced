#pragma once

// Small building blocks shared by the encoders, the map encoders and the
// policy heads. Each block registers its parameters in a ParamStore under a
// dotted prefix and keeps tensor handles for the forward pass.

#include <cstddef>
#include <string>
#include <vector>

#include "susa/params.hpp"
#include "susa/tensor.hpp"

namespace susa::nn {

struct Linear {
    Tensor w;  // in x out
    Tensor b;  // 1 x out

    Linear() = default;
    Linear(ParamStore& ps, const std::string& prefix, std::size_t in, std::size_t out, Init init = Init::Xavier);
    Tensor operator()(const Tensor& x) const { return add(matmul(x, w), b); }
};

// Two-layer perceptron with a ReLU hidden layer.
struct FFN {
    Linear l1, l2;

    FFN() = default;
    FFN(ParamStore& ps, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
        Init last = Init::Xavier);
    Tensor operator()(const Tensor& x) const { return l2(relu(l1(x))); }
};

struct LayerNorm {
    Tensor gamma, beta;

    LayerNorm() = default;
    LayerNorm(ParamStore& ps, const std::string& prefix, std::size_t d);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

// Single-head attention without an output projection.
struct Attention {
    Tensor wq, wk, wv;
    bool scaled = true;

    Attention() = default;
    Attention(ParamStore& ps, const std::string& prefix, std::size_t d, bool scaled);

    struct KV {
        Tensor k, v;
    };
    KV keys(const Tensor& context) const { return {matmul(context, wk), matmul(context, wv)}; }
    // softmax(q k^T / sqrt(d) + bias) v; bias may be undefined.
    Tensor operator()(const Tensor& x, const KV& kv, const Tensor& bias = {}) const;
    Tensor self(const Tensor& x, const Tensor& bias = {}) const { return (*this)(x, keys(x), bias); }
};

// Post-norm transformer encoder layer: x = LN(x + SA(x)); x = LN(x + FFN(x)).
struct EncoderLayer {
    Attention attn;
    LayerNorm ln1, ln2;
    FFN ffn;

    EncoderLayer() = default;
    EncoderLayer(ParamStore& ps, const std::string& prefix, std::size_t d, std::size_t hidden, bool scaled);
    Tensor operator()(const Tensor& x) const;
};

// Post-norm decoder-style layer whose keys and values come from a fixed
// context (the instruction). An optional self-attention sublayer with an
// additive bias runs first.
struct CrossLayer {
    bool has_self = true;
    Attention self_attn, cross_attn;
    LayerNorm ln_self, ln_cross, ln_ffn;
    FFN ffn;

    CrossLayer() = default;
    CrossLayer(ParamStore& ps, const std::string& prefix, std::size_t d, std::size_t hidden, bool scaled,
               bool with_self);
    Tensor operator()(const Tensor& x, const Attention::KV& context, const Tensor& self_bias = {}) const;
};

}  // namespace susa::nn
