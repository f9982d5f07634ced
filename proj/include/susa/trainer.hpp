#pragma once

// Data splits, behavior-cloning training and batched evaluation.
//
// Seen worlds use generator seeds base + i; unseen worlds use
// base + kUnseenOffset + i, so the two ranges never overlap. Held-out seen
// episodes are drawn on the seen worlds from a stream distinct from the
// training stream.
//
// Checkpoint layout (JSON):
//   {"format": "susa-checkpoint", "version": 1, "iteration": next iteration,
//    "config": resolved run config, "params": tensor archive,
//    "optimizer": {"kind", "step", "slots": {"<param>": {"m": [...], "v": [...]}}}}
// Training log: JSON lines {"iter", "mode", "loss": {...}, "beta": [...], "eval"?}.

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "susa/agent.hpp"
#include "susa/metrics.hpp"
#include "susa/world.hpp"

namespace susa {

inline constexpr std::uint64_t kUnseenOffset = 1'000'000;

enum class Split { Train, Seen, Unseen };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct DataConfig {
    std::uint64_t world_seed_base = 1000;
    std::size_t seen_worlds = 100;
    std::size_t unseen_worlds = 100;
    double goal_oriented_fraction = 0.0;
    EpisodeOptions episode;
};
void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);

std::uint64_t world_seed_for(const DataConfig& data, Split split, std::size_t index);

// Generates worlds on demand; safe for concurrent use.
class WorldCache {
public:
    explicit WorldCache(WorldParams params) : params_(std::move(params)) {}
    const World& get(std::uint64_t seed);
    const WorldParams& params() const { return params_; }

private:
    WorldParams params_;
    std::mutex mu_;
    std::map<std::uint64_t, std::unique_ptr<World>> worlds_;
};

// Episode j of a split, addressed by (stream, j); deterministic.
Episode sample_episode(WorldCache& worlds, const DataConfig& data, Split split, std::uint64_t stream, std::size_t j);
std::vector<Episode> sample_episodes(WorldCache& worlds, const DataConfig& data, Split split, std::uint64_t stream,
                                     std::size_t count);

struct LossWeights {
    double lambda1 = 0.2;
    double lambda2 = 0.8;
    double grounding = 1.0;
};

struct TrainConfig {
    std::size_t iterations = 2000;
    std::size_t batch = 8;
    std::string optimizer = "adam";  // sgd | adam
    double lr = 1e-3;
    double momentum = 0.9;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    double clip_norm = 5.0;  // global L2 norm; 0 disables clipping
    LossWeights loss;
    std::uint64_t seed = 0;
    std::size_t eval_every = 0;
    std::size_t eval_episodes = 50;
    std::size_t checkpoint_every = 0;
    // Parameter-name prefixes kept from an imitation-only pre-phase; all
    // other parameters are re-drawn afterwards.
    std::vector<std::string> warm_start;
    std::size_t warm_iterations = 0;
    // Fusion ablation applied during training (and by default at evaluation),
    // for baselines trained without some branches.
    std::string ablate = "none";
};
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LossTerms {
    Tensor total;
    double teacher = 0, student = 0, contrastive = 0, grounding = 0;
    std::array<double, 4> beta{};
};

// Rollouts of one batch on the active tape. `teacher` / `student` select the
// imitation terms; the total is lambda1 * L_teacher + L_student +
// lambda2 * L_cl (+ grounding for goal-oriented episodes). Each imitation term
// is the batch mean of per-episode summed cross-entropy; the contrastive term
// pairs final-step hybrid embeddings with pooled instructions.
LossTerms batch_loss(const SusaModel& model, WorldCache& worlds, const std::vector<Episode>& batch,
                     const LossWeights& w, bool teacher, bool student, std::uint64_t seed,
                     Ablation ablation = Ablation::None);

class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, const ParamStore& params);
    // Applies one update from the accumulated gradients, then zeroes them.
    void step(ParamStore& params);
    nlohmann::json to_json() const;
    void load_json(const nlohmann::json& j);

private:
    TrainConfig cfg_;
    std::size_t t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> slots_;
};

struct TrainHooks {
    std::function<void(const nlohmann::json&)> log;                       // one record per iteration
    std::function<void(const nlohmann::json&, std::size_t)> checkpoint;   // archive, next iteration
    std::function<nlohmann::json(const SusaModel&)> eval;
};

nlohmann::json checkpoint_json(const SusaModel& model, const Optimizer& opt, std::size_t next_iteration,
                               const nlohmann::json& config);

struct TrainState {
    std::size_t start_iteration = 0;
    std::optional<nlohmann::json> optimizer;
};

// Trains in place. Throws std::runtime_error on a non-finite loss.
void train(SusaModel& model, WorldCache& worlds, const DataConfig& data, const TrainConfig& cfg,
           const TrainHooks& hooks = {}, const TrainState& resume = {}, const nlohmann::json& config = {});

struct EvalOptions {
    RolloutOptions rollout;
    metrics::Options metrics;
    std::size_t threads = 1;
};

struct EvalResult {
    std::vector<Trajectory> trajectories;
    std::vector<metrics::Record> records;
    metrics::Summary summary;
    std::array<double, 4> mean_beta{};
    double paired_cosine = 0.0;      // mean cos(E_hyb_i, I_i)
    double mismatched_cosine = 0.0;  // mean cos(E_hyb_i, I_j), i != j
};

EvalResult evaluate(const SusaModel& model, WorldCache& worlds, const std::vector<Episode>& episodes,
                    const EvalOptions& opts);

}  // namespace susa
