#pragma once

// The full agent: parameters of every branch plus the per-episode rollout
// that builds the exploration map, scores candidates and moves through the
// world along known shortest paths.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "susa/dsp.hpp"
#include "susa/encoders.hpp"
#include "susa/hrf.hpp"
#include "susa/model_config.hpp"
#include "susa/policy.hpp"
#include "susa/tsu.hpp"
#include "susa/world.hpp"

namespace susa {

enum class Ablation { None, NoTsu, NoDsp, NoHrf, RgbOnly };
std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

enum class RolloutMode { Greedy, Sample, Teacher, Student };

struct RolloutOptions {
    RolloutMode mode = RolloutMode::Greedy;
    Ablation ablation = Ablation::None;
    // Runs only the RGB view and RGB map branches; the other branches are
    // never computed.
    bool native_rgb = false;
    std::optional<double> delta;   // overrides the configured delta
    bool adaptive_delta = false;   // overrides to the learned delta
    std::uint64_t seed = 0;        // action sampling stream
    bool record_steps = true;
    bool record_map = true;  // map snapshot per step
};

struct StepRecord {
    std::size_t step = 0;
    NodeId node = 0;
    std::vector<NodeId> candidates;  // [0] is kStop
    std::vector<double> semantic, rgb;          // local scores, stop + views
    std::vector<double> depth_map, rgb_map;     // global scores, stop + map nodes
    std::vector<double> logits, probs;          // fused, after masking
    std::array<double, 4> beta{};
    double gate = 0.0;
    std::size_t chosen = 0;
    std::optional<std::size_t> target;
    nlohmann::json map;
};

struct Trajectory {
    std::string episode_id;
    std::vector<NodeId> path;
    std::vector<StepRecord> steps;
    bool forced_stop = false;
    std::optional<std::size_t> grounded_object;
    std::optional<Box> grounded_box;
    std::vector<double> hybrid;       // final-step hybrid embedding
    std::vector<double> instruction;  // pooled instruction
};

nlohmann::json trajectory_to_json(const Trajectory& t);

struct RolloutResult {
    Trajectory trajectory;
    Tensor action_loss;     // sum of per-step cross-entropy (teacher / student), undefined otherwise
    Tensor grounding_loss;  // teacher rollouts of goal-oriented episodes ending at the goal
    Tensor hybrid;          // 1 x d, final step
    Tensor instruction;     // 1 x d pooled instruction
    std::size_t supervised_steps = 0;
};

// Map node nearest the goal by geodesic distance (ties: lowest node id), as a
// candidate index over [stop, map nodes...]; 0 when already at the goal.
std::size_t pseudo_target(const dsp::ExplorationMap& map, const NavGraph& graph, NodeId goal, NodeId current);

// Shortest route over edges incident to visited map nodes.
std::vector<NodeId> known_route(const dsp::ExplorationMap& map, const NavGraph& graph, NodeId from, NodeId to);

class SusaModel {
public:
    SusaModel(const ModelConfig& cfg, const WorldParams& world);
    SusaModel(const SusaModel&) = delete;
    SusaModel& operator=(const SusaModel&) = delete;

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }
    const Vocabulary& vocab() const { return vocab_; }
    const WorldParams& world_params() const { return world_; }

    RolloutResult rollout(const World& world, const Episode& episode, const RolloutOptions& opts = {}) const;

    // Current learned delta in (0, 1).
    double learned_delta() const;

    const encoders::TokenEmbedding& embedding() const { return emb_; }
    const encoders::InstructionEncoder& instruction_encoder() const { return instr_; }
    const encoders::PanoramaEncoder& panorama_encoder() const { return pano_; }

private:
    ModelConfig cfg_;
    WorldParams world_;
    Vocabulary vocab_;
    ParamStore params_;

    encoders::TokenEmbedding emb_;
    Tensor semantic_empty_;
    encoders::InstructionEncoder instr_;
    encoders::PanoramaEncoder pano_;
    tsu::TextualCrossAttention tca_;
    Tensor delta_logit_;
    Tensor stop_semantic_, stop_rgb_, stop_depth_map_, stop_rgb_map_;
    Tensor status_;  // 3 x d: visited, frontier, current
    dsp::CrossEncoder rgb_view_, depth_map_, rgb_map_;
    Tensor pool_semantic_, pool_rgb_, pool_depth_map_, pool_rgb_map_;
    hrf::FusionWeights fusion_;
    policy::BranchHeads heads_;
    policy::Grounding grounding_;
};

}  // namespace susa
