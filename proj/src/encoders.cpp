#include "susa/encoders.hpp"

#include <fmt/format.h>
#include <numeric>

#include "susa/hrf.hpp"

namespace susa::encoders {

TokenEmbedding::TokenEmbedding(ParamStore& ps, const std::string& prefix, std::size_t vocab, std::size_t max_len,
                               std::size_t d)
    : table(ps.add(prefix + ".tokens", {vocab, d}, Init::Normal, 1.0)),
      position(ps.add(prefix + ".position", {max_len, d}, Init::Normal, 0.3)) {}

InstructionEncoder::InstructionEncoder(ParamStore& ps, const ModelConfig& cfg, const TokenEmbedding& emb)
    : emb_(&emb), pool_query_(ps.add("hrf.pool.instruction", {cfg.d, 1})) {
    for (std::size_t i = 0; i < cfg.instr_layers; ++i)
        layers_.emplace_back(ps, fmt::format("encoders.instruction.layer{}", i), cfg.d, cfg.hidden,
                             cfg.scaled_attention);
}

EncodedInstruction InstructionEncoder::operator()(const std::vector<std::size_t>& ids_in) const {
    std::vector<std::size_t> ids = ids_in;
    if (ids.empty()) ids.push_back(Vocabulary::kPad);
    if (ids.size() > emb_->position.rows()) ids.resize(emb_->position.rows());
    std::vector<std::size_t> pos(ids.size());
    std::iota(pos.begin(), pos.end(), 0);
    Tensor x = add(select_rows(emb_->table, ids), select_rows(emb_->position, pos));
    for (const auto& layer : layers_) x = layer(x);
    return {x, hrf::attn_pool(x, pool_query_)};
}

std::vector<std::size_t> token_ids(const Vocabulary& vocab, const std::vector<std::string>& tokens) {
    std::vector<std::size_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(vocab.id(t));
    return out;
}

Tensor encode_semantics(const TokenEmbedding& emb, const Tensor& empty,
                        const std::vector<std::vector<std::size_t>>& view_tokens) {
    const std::size_t n = view_tokens.size();
    std::vector<std::size_t> all;
    for (const auto& v : view_tokens) all.insert(all.end(), v.begin(), v.end());
    if (all.empty()) {
        std::vector<std::size_t> zeros(n, 0);
        return select_rows(empty, zeros);
    }
    // Averaging matrix over the concatenated token rows.
    std::vector<double> avg(n * all.size(), 0.0);
    std::size_t offset = 0;
    std::vector<std::size_t> empty_rows;
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t c = view_tokens[r].size();
        for (std::size_t k = 0; k < c; ++k) avg[r * all.size() + offset + k] = 1.0 / double(c);
        if (c == 0) empty_rows.push_back(r);
        offset += c;
    }
    Tensor x = layer_norm(matmul(Tensor::from({n, all.size()}, std::move(avg)), select_rows(emb.table, all)), {}, {});
    if (empty_rows.empty()) return x;
    std::vector<Tensor> rows;
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t idx[] = {r};
        rows.push_back(view_tokens[r].empty() ? empty : select_rows(x, idx));
    }
    return concat(std::span<const Tensor>(rows), 0);
}

PanoramaEncoder::PanoramaEncoder(ParamStore& ps, const ModelConfig& cfg, std::size_t d_v)
    : proj_(ps, "encoders.panorama.proj", d_v, cfg.d),
      modality_(ps.add("encoders.panorama.modality", {2, cfg.d}, Init::Normal, 0.5)),
      use_modality_(cfg.modality_embedding),
      d_v_(d_v) {
    for (std::size_t i = 0; i < cfg.pano_layers; ++i)
        layers_.emplace_back(ps, fmt::format("encoders.panorama.layer{}", i), cfg.d, cfg.hidden, cfg.scaled_attention);
}

Tensor PanoramaEncoder::operator()(const Tensor& features, Modality m) const {
    if (features.cols() != d_v_)
        throw ShapeError(fmt::format("encode_panorama: expected {} feature columns, got {}", d_v_, features.cols()));
    Tensor x = proj_(features);
    if (use_modality_) {
        const std::size_t idx[] = {static_cast<std::size_t>(m)};
        x = add(x, select_rows(modality_, idx));
    }
    for (const auto& layer : layers_) x = layer(x);
    return x;
}

Tensor view_features(const Panorama& pano, Modality m) {
    const std::size_t n = pano.views.size();
    const std::size_t d_v = n == 0 ? 0 : (m == Modality::Depth ? pano.views[0].depth.size() : pano.views[0].rgb.size());
    std::vector<double> data;
    data.reserve(n * d_v);
    for (const auto& v : pano.views) {
        const auto& f = m == Modality::Depth ? v.depth : v.rgb;
        if (f.size() != d_v) throw ShapeError("view_features: ragged feature vectors");
        data.insert(data.end(), f.begin(), f.end());
    }
    return Tensor::from({n, d_v}, std::move(data));
}

}  // namespace susa::encoders
