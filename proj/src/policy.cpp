#include "susa/policy.hpp"

#include <cmath>
#include <fmt/format.h>

namespace susa::policy {

BranchHeads::BranchHeads(ParamStore& ps, const ModelConfig& cfg)
    : semantic(ps, "policy.head.semantic", cfg.d, cfg.hidden, 1),
      rgb(ps, "policy.head.rgb", cfg.d, cfg.hidden, 1),
      depth_map(ps, "policy.head.depth_map", cfg.d, cfg.hidden, 1),
      rgb_map(ps, "policy.head.rgb_map", cfg.d, cfg.hidden, 1),
      gate(ps, "policy.gate", cfg.d, cfg.hidden, 1),
      backtrack(ps.add("policy.backtrack", {1, 1}, Init::Zeros)) {}

Tensor branch_scores(const nn::FFN& head, const Tensor& features) { return head(features); }

Tensor fuse_pair(const Tensor& pa, const Tensor& pb, const Tensor& wa, const Tensor& wb) {
    if (pa.shape() != pb.shape())
        throw ShapeError(fmt::format("fuse: candidate counts differ ({} vs {})", pa.shape().str(), pb.shape().str()));
    return add(scalar_mul(pa, wa), scalar_mul(pb, wb));
}

Tensor local_to_global(const Tensor& local, const std::vector<std::vector<std::size_t>>& facing,
                       const Tensor& backtrack) {
    std::vector<Tensor> rows;
    rows.reserve(facing.size() + 1);
    const std::size_t stop[] = {0};
    rows.push_back(select_rows(local, stop));
    for (const auto& views : facing) {
        if (views.empty()) {
            rows.push_back(backtrack);
            continue;
        }
        std::vector<std::size_t> idx;
        for (std::size_t v : views) {
            if (v + 1 >= local.rows()) throw ShapeError(fmt::format("local_to_global: view {} out of range", v));
            idx.push_back(v + 1);
        }
        Tensor sel = select_rows(local, idx);
        rows.push_back(idx.size() == 1 ? sel : max(sel, 0));
    }
    return concat(std::span<const Tensor>(rows), 0);
}

Tensor dynamic_fuse(const Tensor& global, const Tensor& local_global, const Tensor& g) {
    if (global.shape() != local_global.shape())
        throw ShapeError(fmt::format("dynamic_fuse: {} vs {}", global.shape().str(), local_global.shape().str()));
    Tensor rest = add_scalar(scalar_mul(g, -1.0), 1.0);
    return add(scalar_mul(global, g), scalar_mul(local_global, rest));
}

ActionDistribution make_distribution(std::vector<NodeId> candidates, const Tensor& logits,
                                     const std::vector<std::size_t>& masked) {
    if (logits.size() != candidates.size())
        throw ShapeError(fmt::format("action distribution: {} candidates, {} logits", candidates.size(), logits.size()));
    ActionDistribution out;
    out.candidates = std::move(candidates);
    out.logits = logits;
    if (!masked.empty()) {
        std::vector<double> m(logits.size(), 0.0);
        for (std::size_t i : masked) m.at(i) = kMasked;
        out.logits = add(logits, Tensor::from(logits.shape(), std::move(m)));
    }
    Tensor p = softmax(out.logits.detach(), 0);
    out.probs.assign(p.data().begin(), p.data().end());
    return out;
}

std::size_t select_greedy(const ActionDistribution& dist) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < dist.probs.size(); ++i) {
        if (dist.probs[i] > dist.probs[best]) {
            best = i;
        } else if (dist.probs[i] == dist.probs[best] && best != 0 && dist.candidates[i] < dist.candidates[best]) {
            best = i;
        }
    }
    return best;
}

std::size_t select_sample(const ActionDistribution& dist, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < dist.probs.size(); ++i) {
        acc += dist.probs[i];
        if (u < acc) return i;
    }
    // Rounding left u above the last partial sum: take the last candidate with mass.
    for (std::size_t i = dist.probs.size(); i-- > 0;)
        if (dist.probs[i] > 0.0) return i;
    return 0;
}

Grounding::Grounding(ParamStore& ps, const ModelConfig& cfg)
    : box_(ps, "policy.grounding.box", 4, cfg.d), score_(ps, "policy.grounding.score", 2 * cfg.d, cfg.hidden, 1) {}

Tensor Grounding::operator()(const Tensor& object_tokens, const Tensor& boxes, const Tensor& pooled) const {
    const std::size_t o = object_tokens.rows();
    std::vector<std::size_t> rep(o, 0);
    Tensor obj = add(object_tokens, box_(boxes));
    return score_(concat({obj, select_rows(pooled, rep)}, 1));
}

Tensor box_tensor(const std::vector<ObjectAnnotation>& objects) {
    std::vector<double> data;
    for (const auto& o : objects) data.insert(data.end(), {o.box.x0, o.box.y0, o.box.x1, o.box.y1});
    return Tensor::from({objects.size(), 4}, std::move(data));
}

}  // namespace susa::policy
