#pragma once

// Hierarchical action prediction: per-branch candidate scores, pairwise
// fusion, local-to-global conversion, gated global/local fusion, action
// selection and object grounding.

#include <optional>
#include <string>
#include <vector>

#include "susa/model_config.hpp"
#include "susa/nn.hpp"
#include "susa/rng.hpp"
#include "susa/world.hpp"

namespace susa::policy {

struct BranchHeads {
    nn::FFN semantic, rgb, depth_map, rgb_map;  // d -> 1 per candidate row
    nn::FFN gate;                               // d -> 1 on the hybrid embedding
    Tensor backtrack;                           // 1 x 1, score of non-adjacent map nodes

    BranchHeads() = default;
    BranchHeads(ParamStore& ps, const ModelConfig& cfg);
};

// One score per candidate row (rows x 1).
Tensor branch_scores(const nn::FFN& head, const Tensor& features);

// wa * pa + wb * pb for column score vectors; wa, wb are 1 x 1.
Tensor fuse_pair(const Tensor& pa, const Tensor& pb, const Tensor& wa, const Tensor& wb);

// Local scores (stop + n views) to the global space (stop + k map nodes).
// facing[i] lists the views facing map node i; an empty list marks a node
// that is not adjacent to the agent and receives the backtrack score.
Tensor local_to_global(const Tensor& local, const std::vector<std::vector<std::size_t>>& facing,
                       const Tensor& backtrack);

// g * global + (1 - g) * local, g is 1 x 1.
Tensor dynamic_fuse(const Tensor& global, const Tensor& local_global, const Tensor& g);

inline constexpr double kMasked = -1e9;

struct ActionDistribution {
    std::vector<NodeId> candidates;  // [0] is kStop
    Tensor logits;                   // (k+1) x 1
    std::vector<double> probs;
};

// Softmax over logits after adding kMasked at `masked` indices.
ActionDistribution make_distribution(std::vector<NodeId> candidates, const Tensor& logits,
                                     const std::vector<std::size_t>& masked = {});

// Greedy argmax (ties: stop first, then the lowest node id) or inverse-CDF
// sampling with `rng`. Returns a candidate index.
std::size_t select_greedy(const ActionDistribution& dist);
std::size_t select_sample(const ActionDistribution& dist, Rng& rng);

class Grounding {
public:
    Grounding() = default;
    Grounding(ParamStore& ps, const ModelConfig& cfg);

    // object_tokens: o x d embeddings; boxes: o x 4; pooled: 1 x d. Returns o x 1.
    Tensor operator()(const Tensor& object_tokens, const Tensor& boxes, const Tensor& pooled) const;

private:
    nn::Linear box_;
    nn::FFN score_;
};

// o x 4 tensor of [x0, y0, x1, y1] rows.
Tensor box_tensor(const std::vector<ObjectAnnotation>& objects);

}  // namespace susa::policy
