#include "susa/trainer.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fmt/format.h>
#include <stdexcept>
#include <thread>

#include "susa/rng.hpp"

namespace susa {

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Seen: return "seen";
        case Split::Unseen: return "unseen";
    }
    return "train";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "seen") return Split::Seen;
    if (s == "unseen") return Split::Unseen;
    throw std::invalid_argument("split must be train, seen or unseen, got '" + s + "'");
}

void to_json(nlohmann::json& j, const DataConfig& c) {
    j = {{"world_seed_base", c.world_seed_base},
         {"seen_worlds", c.seen_worlds},
         {"unseen_worlds", c.unseen_worlds},
         {"goal_oriented_fraction", c.goal_oriented_fraction},
         {"min_hops", c.episode.min_hops},
         {"max_hops", c.episode.max_hops}};
}

void from_json(const nlohmann::json& j, DataConfig& c) {
    DataConfig d;
    c.world_seed_base = j.value("world_seed_base", d.world_seed_base);
    c.seen_worlds = j.value("seen_worlds", d.seen_worlds);
    c.unseen_worlds = j.value("unseen_worlds", d.unseen_worlds);
    c.goal_oriented_fraction = j.value("goal_oriented_fraction", d.goal_oriented_fraction);
    c.episode.min_hops = j.value("min_hops", d.episode.min_hops);
    c.episode.max_hops = j.value("max_hops", d.episode.max_hops);
    if (c.seen_worlds == 0 || c.unseen_worlds == 0) throw std::invalid_argument("data: world counts must be positive");
    if (c.seen_worlds > kUnseenOffset) throw std::invalid_argument("data: seen_worlds overlaps the unseen seed range");
}

std::uint64_t world_seed_for(const DataConfig& data, Split split, std::size_t index) {
    return split == Split::Unseen ? data.world_seed_base + kUnseenOffset + index : data.world_seed_base + index;
}

const World& WorldCache::get(std::uint64_t seed) {
    std::lock_guard<std::mutex> lock(mu_);
    auto& slot = worlds_[seed];
    if (!slot) {
        WorldParams p = params_;
        p.seed = seed;
        slot = std::make_unique<World>(generate_world(p));
    }
    return *slot;
}

Episode sample_episode(WorldCache& worlds, const DataConfig& data, Split split, std::uint64_t stream, std::size_t j) {
    Rng rng(derive(stream, {tag(to_string(split)), j}));
    const std::size_t count = split == Split::Unseen ? data.unseen_worlds : data.seen_worlds;
    const std::uint64_t ws = world_seed_for(data, split, rng.below(count));
    const EpisodeMode mode = rng.bernoulli(data.goal_oriented_fraction) ? EpisodeMode::GoalOriented
                                                                        : EpisodeMode::FineGrained;
    const std::uint64_t eseed = rng.next_u64();
    return make_episode(worlds.get(ws), eseed, mode, data.episode);
}

std::vector<Episode> sample_episodes(WorldCache& worlds, const DataConfig& data, Split split, std::uint64_t stream,
                                     std::size_t count) {
    std::vector<Episode> out;
    out.reserve(count);
    for (std::size_t j = 0; j < count; ++j) out.push_back(sample_episode(worlds, data, split, stream, j));
    return out;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"iterations", c.iterations},
         {"batch", c.batch},
         {"optimizer", c.optimizer},
         {"lr", c.lr},
         {"momentum", c.momentum},
         {"adam_beta1", c.adam_beta1},
         {"adam_beta2", c.adam_beta2},
         {"adam_eps", c.adam_eps},
         {"clip_norm", c.clip_norm},
         {"lambda1", c.loss.lambda1},
         {"lambda2", c.loss.lambda2},
         {"grounding_weight", c.loss.grounding},
         {"seed", c.seed},
         {"eval_every", c.eval_every},
         {"eval_episodes", c.eval_episodes},
         {"checkpoint_every", c.checkpoint_every},
         {"warm_start", c.warm_start},
         {"warm_iterations", c.warm_iterations},
         {"ablate", c.ablate}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.iterations = j.value("iterations", d.iterations);
    c.batch = j.value("batch", d.batch);
    c.optimizer = j.value("optimizer", d.optimizer);
    c.lr = j.value("lr", d.lr);
    c.momentum = j.value("momentum", d.momentum);
    c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
    c.adam_eps = j.value("adam_eps", d.adam_eps);
    c.clip_norm = j.value("clip_norm", d.clip_norm);
    c.loss.lambda1 = j.value("lambda1", d.loss.lambda1);
    c.loss.lambda2 = j.value("lambda2", d.loss.lambda2);
    c.loss.grounding = j.value("grounding_weight", d.loss.grounding);
    c.seed = j.value("seed", d.seed);
    c.eval_every = j.value("eval_every", d.eval_every);
    c.eval_episodes = j.value("eval_episodes", d.eval_episodes);
    c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
    c.warm_start = j.value("warm_start", d.warm_start);
    c.warm_iterations = j.value("warm_iterations", d.warm_iterations);
    c.ablate = j.value("ablate", d.ablate);
    ablation_from_string(c.ablate);
    if (c.batch == 0) throw std::invalid_argument("train.batch must be at least 1");
    if (c.optimizer != "sgd" && c.optimizer != "adam") throw std::invalid_argument("train.optimizer must be sgd or adam");
    if (c.loss.lambda1 < 0 || c.loss.lambda2 < 0 || c.loss.grounding < 0)
        throw std::invalid_argument("loss weights must be non-negative");
}

LossTerms batch_loss(const SusaModel& model, WorldCache& worlds, const std::vector<Episode>& batch,
                     const LossWeights& w, bool teacher, bool student, std::uint64_t seed,
                     Ablation ablation) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    if (!teacher && !student) throw std::invalid_argument("batch_loss: no rollout mode selected");
    LossTerms out;
    Tensor l_teacher, l_student, l_ground;
    std::size_t grounded = 0, beta_steps = 0;
    std::vector<Tensor> hybrids, instructions;
    auto accumulate = [](Tensor& acc, const Tensor& t) {
        if (!t.defined()) return;
        acc = acc.defined() ? add(acc, t) : t;
    };
    for (const Episode& ep : batch) {
        const World& world = worlds.get(ep.world_seed);
        for (int pass = 0; pass < 2; ++pass) {
            const bool is_teacher = pass == 0;
            if ((is_teacher && !teacher) || (!is_teacher && !student)) continue;
            RolloutOptions ro;
            ro.mode = is_teacher ? RolloutMode::Teacher : RolloutMode::Student;
            ro.seed = derive(seed, {tag("student")});
            ro.record_map = false;
            ro.ablation = ablation;
            RolloutResult r = model.rollout(world, ep, ro);
            accumulate(is_teacher ? l_teacher : l_student, r.action_loss);
            if (r.grounding_loss.defined()) {
                accumulate(l_ground, r.grounding_loss);
                ++grounded;
            }
            for (const auto& s : r.trajectory.steps) {
                for (std::size_t b = 0; b < 4; ++b) out.beta[b] += s.beta[b];
                ++beta_steps;
            }
            if (is_teacher || !teacher) {
                hybrids.push_back(r.hybrid);
                instructions.push_back(r.instruction);
            }
        }
    }
    for (double& b : out.beta) b /= double(std::max<std::size_t>(beta_steps, 1));
    const double inv_b = 1.0 / double(batch.size());
    Tensor cl = hrf::contrastive_loss(concat(std::span<const Tensor>(hybrids), 0),
                                      concat(std::span<const Tensor>(instructions), 0), model.config().temperature);
    out.contrastive = cl.item();
    Tensor total;
    if (teacher) {
        l_teacher = scalar_mul(l_teacher, inv_b);
        out.teacher = l_teacher.item();
        total = scalar_mul(l_teacher, w.lambda1);
    }
    if (student) {
        l_student = scalar_mul(l_student, inv_b);
        out.student = l_student.item();
        total = total.defined() ? add(total, l_student) : l_student;
    }
    total = add(total, scalar_mul(cl, w.lambda2));
    if (grounded > 0) {
        l_ground = scalar_mul(l_ground, 1.0 / double(grounded));
        out.grounding = l_ground.item();
        total = add(total, scalar_mul(l_ground, w.grounding));
    }
    out.total = total;
    return out;
}

Optimizer::Optimizer(const TrainConfig& cfg, const ParamStore& params) : cfg_(cfg) {
    for (const auto& [name, t] : params)
        slots_[name] = {std::vector<double>(t.size(), 0.0), std::vector<double>(t.size(), 0.0)};
}

void Optimizer::step(ParamStore& params) {
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& [_, t] : params)
            for (double g : t.grad()) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
    }
    ++t_;
    const bool adam = cfg_.optimizer == "adam";
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, double(t_));
    for (const auto& [name, t_const] : params) {
        Tensor t = t_const;
        auto& [m, v] = slots_.at(name);
        const std::vector<double> g = t.grad();
        auto p = t.mutable_data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i] * scale;
            if (adam) {
                m[i] = cfg_.adam_beta1 * m[i] + (1.0 - cfg_.adam_beta1) * gi;
                v[i] = cfg_.adam_beta2 * v[i] + (1.0 - cfg_.adam_beta2) * gi * gi;
                p[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
            } else {
                m[i] = cfg_.momentum * m[i] + gi;
                p[i] -= cfg_.lr * m[i];
            }
        }
        t.zero_grad();
    }
}

nlohmann::json Optimizer::to_json() const {
    nlohmann::json slots = nlohmann::json::object();
    for (const auto& [name, mv] : slots_) slots[name] = {{"m", mv.first}, {"v", mv.second}};
    return {{"kind", cfg_.optimizer}, {"step", t_}, {"slots", slots}};
}

void Optimizer::load_json(const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != cfg_.optimizer)
        throw std::runtime_error("optimizer state kind does not match the configured optimizer");
    t_ = j.at("step").get<std::size_t>();
    for (auto& [name, mv] : slots_) {
        const auto& s = j.at("slots").at(name);
        auto m = s.at("m").get<std::vector<double>>();
        auto v = s.at("v").get<std::vector<double>>();
        if (m.size() != mv.first.size() || v.size() != mv.second.size())
            throw std::runtime_error(fmt::format("optimizer state for '{}' has the wrong size", name));
        mv = {std::move(m), std::move(v)};
    }
}

nlohmann::json checkpoint_json(const SusaModel& model, const Optimizer& opt, std::size_t next_iteration,
                               const nlohmann::json& config) {
    return {{"format", "susa-checkpoint"},
            {"version", 1},
            {"iteration", next_iteration},
            {"config", config},
            {"params", model.params().to_json()},
            {"optimizer", opt.to_json()}};
}

namespace {

double run_iteration(SusaModel& model, WorldCache& worlds, const DataConfig& data, const TrainConfig& cfg,
                     Optimizer& opt, std::uint64_t stream, std::size_t it, bool teacher, const LossWeights& w,
                     nlohmann::json* record) {
    const auto batch = sample_episodes(worlds, data, Split::Train, derive(stream, {it}), cfg.batch);
    Tape tape;
    LossTerms terms;
    {
        TapeScope scope(tape);
        terms = batch_loss(model, worlds, batch, w, teacher, !teacher, derive(stream, {tag("rollout"), it}),
                           ablation_from_string(cfg.ablate));
    }
    const double total = terms.total.item();
    if (!std::isfinite(total))
        throw std::runtime_error(fmt::format("training diverged at iteration {}: loss {} (teacher {}, student {}, "
                                             "contrastive {})",
                                             it, total, terms.teacher, terms.student, terms.contrastive));
    tape.backward(terms.total);
    opt.step(model.params());
    if (record != nullptr) {
        *record = {{"iter", it},
                   {"mode", teacher ? "teacher" : "student"},
                   {"loss",
                    {{"total", total},
                     {"teacher", terms.teacher},
                     {"student", terms.student},
                     {"contrastive", terms.contrastive},
                     {"grounding", terms.grounding}}},
                   {"beta", terms.beta}};
    }
    return total;
}

bool kept(const std::string& name, const std::vector<std::string>& prefixes) {
    for (const auto& p : prefixes)
        if (name.rfind(p, 0) == 0) return true;
    return false;
}

}  // namespace

void train(SusaModel& model, WorldCache& worlds, const DataConfig& data, const TrainConfig& cfg,
           const TrainHooks& hooks, const TrainState& resume, const nlohmann::json& config) {
    if (resume.start_iteration == 0 && cfg.warm_iterations > 0 && !cfg.warm_start.empty()) {
        TrainConfig warm_cfg = cfg;
        Optimizer warm_opt(warm_cfg, model.params());
        LossWeights w = cfg.loss;
        w.lambda2 = 0.0;
        const std::uint64_t stream = derive(cfg.seed, {tag("warm")});
        for (std::size_t it = 0; it < cfg.warm_iterations; ++it)
            run_iteration(model, worlds, data, cfg, warm_opt, stream, it, true, w, nullptr);
        for (const auto& name : model.params().names())
            if (!kept(name, cfg.warm_start)) model.params().reinitialize(name);
    }

    Optimizer opt(cfg, model.params());
    if (resume.optimizer) opt.load_json(*resume.optimizer);
    const std::uint64_t stream = derive(cfg.seed, {tag("train")});
    for (std::size_t it = resume.start_iteration; it < cfg.iterations; ++it) {
        nlohmann::json record;
        run_iteration(model, worlds, data, cfg, opt, stream, it, it % 2 == 0, cfg.loss, &record);
        if (cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0 && hooks.eval) record["eval"] = hooks.eval(model);
        if (hooks.log) hooks.log(record);
        const bool last = it + 1 == cfg.iterations;
        if (hooks.checkpoint && ((cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) || last))
            hooks.checkpoint(checkpoint_json(model, opt, it + 1, config), it + 1);
    }
    if (hooks.checkpoint && resume.start_iteration >= cfg.iterations)
        hooks.checkpoint(checkpoint_json(model, opt, cfg.iterations, config), cfg.iterations);
}

namespace {
double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return aa > 0 && bb > 0 ? ab / std::sqrt(aa * bb) : 0.0;
}
}  // namespace

EvalResult evaluate(const SusaModel& model, WorldCache& worlds, const std::vector<Episode>& episodes,
                    const EvalOptions& opts) {
    EvalResult out;
    const std::size_t n = episodes.size();
    std::vector<const World*> world_of(n);
    for (std::size_t i = 0; i < n; ++i) world_of[i] = &worlds.get(episodes[i].world_seed);
    out.trajectories.resize(n);
    out.records.resize(n);

    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(std::max<std::size_t>(opts.threads, 1));
    auto worker = [&](std::size_t wid) {
        try {
            for (std::size_t i = next++; i < n; i = next++) {
                const Episode& ep = episodes[i];
                Trajectory traj = model.rollout(*world_of[i], ep, opts.rollout).trajectory;
                std::optional<metrics::Grounding> g;
                if (ep.mode == EpisodeMode::GoalOriented)
                    g = metrics::Grounding{traj.grounded_box, metrics::reference_boxes(*world_of[i], ep)};
                out.records[i] = {ep.episode_id, to_string(ep.mode),
                                  metrics::compute_all(traj.path, ep, world_of[i]->graph, g, opts.metrics)};
                out.trajectories[i] = std::move(traj);
            }
        } catch (...) {
            errors[wid] = std::current_exception();
        }
    };
    const std::size_t threads = std::max<std::size_t>(opts.threads, 1);
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker, w);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    if (n == 0) return out;

    out.summary = metrics::aggregate(out.records);
    std::size_t steps = 0;
    for (const auto& t : out.trajectories)
        for (const auto& s : t.steps) {
            for (std::size_t b = 0; b < 4; ++b) out.mean_beta[b] += s.beta[b];
            ++steps;
        }
    for (double& b : out.mean_beta) b /= double(std::max<std::size_t>(steps, 1));
    double paired = 0, mismatched = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        paired += cosine(out.trajectories[i].hybrid, out.trajectories[i].instruction);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            mismatched += cosine(out.trajectories[i].hybrid, out.trajectories[j].instruction);
            ++pairs;
        }
    }
    out.paired_cosine = paired / double(n);
    out.mismatched_cosine = pairs > 0 ? mismatched / double(pairs) : 0.0;
    return out;
}

}  // namespace susa
