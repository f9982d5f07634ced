#pragma once

// Instruction encoder, textual semantic panorama, and the panorama encoder
// shared by the depth and RGB modalities.

#include <string>
#include <vector>

#include "susa/model_config.hpp"
#include "susa/nn.hpp"
#include "susa/world.hpp"

namespace susa::encoders {

// Token embeddings shared by the instruction and the semantic panorama, plus
// positional embeddings for instructions.
struct TokenEmbedding {
    Tensor table;      // vocab x d
    Tensor position;   // max_len x d

    TokenEmbedding() = default;
    TokenEmbedding(ParamStore& ps, const std::string& prefix, std::size_t vocab, std::size_t max_len, std::size_t d);
};

struct EncodedInstruction {
    Tensor tokens;  // l x d
    Tensor pooled;  // 1 x d
};

class InstructionEncoder {
public:
    InstructionEncoder() = default;
    InstructionEncoder(ParamStore& ps, const ModelConfig& cfg, const TokenEmbedding& emb);

    // Sequences longer than max_len are truncated.
    EncodedInstruction operator()(const std::vector<std::size_t>& ids) const;

private:
    const TokenEmbedding* emb_ = nullptr;
    std::vector<nn::EncoderLayer> layers_;
    Tensor pool_query_;  // d x 1
};

std::vector<std::size_t> token_ids(const Vocabulary& vocab, const std::vector<std::string>& tokens);

// One row per view: layer-normalized mean of the view's token embeddings, or
// the learned `empty` row for a view without tokens.
Tensor encode_semantics(const TokenEmbedding& emb, const Tensor& empty,
                        const std::vector<std::vector<std::size_t>>& view_tokens);

enum class Modality : std::size_t { Depth = 0, Rgb = 1 };

class PanoramaEncoder {
public:
    PanoramaEncoder() = default;
    PanoramaEncoder(ParamStore& ps, const ModelConfig& cfg, std::size_t d_v);

    // features is n x d_v.
    Tensor operator()(const Tensor& features, Modality m) const;

    const Tensor& modality_table() const { return modality_; }

private:
    nn::Linear proj_;
    Tensor modality_;  // 2 x d
    bool use_modality_ = true;
    std::vector<nn::EncoderLayer> layers_;
    std::size_t d_v_ = 0;
};

// Stacks one feature vector per view into an n x d_v tensor.
Tensor view_features(const Panorama& pano, Modality m);

}  // namespace susa::encoders
