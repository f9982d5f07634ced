#include "susa/hrf.hpp"

#include <numeric>
#include <stdexcept>

namespace susa::hrf {

Tensor attn_pool(const Tensor& h, const Tensor& v) {
    if (h.rows() == 0) throw ShapeError("attn_pool: empty input");
    Tensor eta = softmax(matmul(tanh(h), v), 0);  // m x 1
    return tanh(matmul(transpose(eta), h));
}

FusionWeights::FusionWeights(ParamStore& ps, const std::string& prefix, std::size_t d, std::size_t hidden,
                             bool normalize)
    : ffn_(ps, prefix + ".ffn", 4 * d, hidden, 4, Init::Zeros), normalize_(normalize), d_(d) {}

Tensor FusionWeights::operator()(const std::array<Tensor, 4>& rows, const std::array<bool, 4>& keep) const {
    std::array<Tensor, 4> parts;
    std::vector<double> mask(4);
    bool all = true;
    for (std::size_t k = 0; k < 4; ++k) {
        parts[k] = keep[k] ? rows[k] : Tensor::zeros({1, d_});
        mask[k] = keep[k] ? 1.0 : 0.0;
        all = all && keep[k];
    }
    Tensor s = sigmoid(ffn_(concat({parts[0], parts[1], parts[2], parts[3]}, 1)));
    if (!all) s = elementwise_mul(s, Tensor::row(mask));
    if (!normalize_) return s;
    return scalar_div(s, sum(s));
}

Tensor beta_at(const Tensor& beta, std::size_t k) {
    const std::size_t idx[] = {k};
    return select_rows(reshape(beta, {beta.size(), 1}), idx);
}

Tensor hybrid_embed(const std::array<Tensor, 4>& pooled, const Tensor& beta) {
    if (beta.size() != 4) throw ShapeError("hybrid_embed: beta must have 4 entries, got " + beta.shape().str());
    Tensor e = scalar_mul(pooled[0], beta_at(beta, 0));
    for (std::size_t k = 1; k < 4; ++k) e = add(e, scalar_mul(pooled[k], beta_at(beta, k)));
    return e;
}

Tensor contrastive_loss(const Tensor& e, const Tensor& i, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("contrastive_loss: temperature must be positive");
    if (e.shape() != i.shape()) throw ShapeError("contrastive_loss: " + e.shape().str() + " vs " + i.shape().str());
    const std::size_t b = e.rows();
    if (b == 0) throw ShapeError("contrastive_loss: empty batch");
    std::vector<std::size_t> diag(b);
    std::iota(diag.begin(), diag.end(), 0);
    Tensor sim = scalar_mul(cosine_similarity(e, i), 1.0 / temperature);
    Tensor rows = cross_entropy_rows(sim, diag);
    Tensor cols = cross_entropy_rows(transpose(sim), diag);
    return scalar_mul(add(rows, cols), 1.0 / (2.0 * double(b)));
}

}  // namespace susa::hrf
