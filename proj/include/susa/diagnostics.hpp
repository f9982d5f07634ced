#pragma once

// Finite-difference gradient audits: every tensor op on random shapes, and
// the full training loss on a small fixture world.

#include <string>
#include <vector>

#include "susa/tensor.hpp"

namespace susa::diagnostics {

struct OpCheck {
    std::string op;
    double worst = 0.0;  // max relative error over all seeds
    std::size_t checked = 0;
    bool passed = true;
};

// Each op runs on shapes drawn up to 8x8 for `seeds` seeds; the scalar loss
// is sum(op(x) * W) for a fixed random W.
std::vector<OpCheck> check_ops(std::size_t seeds = 20, double eps = 1e-5, double tol = 1e-4);

struct LossCheck {
    GradCheckReport report;
    std::vector<std::string> sampled;  // "name[index]" of every perturbed element
    std::size_t world_nodes = 0;
    double loss = 0.0;
};

// Teacher + contrastive + grounding loss over a two-episode batch (one
// fine-grained, one goal-oriented) on a `nodes`-node world; `params`
// randomly chosen parameter elements are perturbed.
LossCheck check_episode_loss(std::size_t params = 25, std::size_t nodes = 5, std::uint64_t seed = 0,
                             double eps = 1e-5, double tol = 1e-3);

}  // namespace susa::diagnostics
