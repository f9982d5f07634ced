#include "susa/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>

#include "susa/rng.hpp"

namespace susa {

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::None: return "none";
        case Ablation::NoTsu: return "no_tsu";
        case Ablation::NoDsp: return "no_dsp";
        case Ablation::NoHrf: return "no_hrf";
        case Ablation::RgbOnly: return "rgb_only";
    }
    return "none";
}

Ablation ablation_from_string(const std::string& s) {
    for (auto a : {Ablation::None, Ablation::NoTsu, Ablation::NoDsp, Ablation::NoHrf, Ablation::RgbOnly})
        if (to_string(a) == s) return a;
    throw std::invalid_argument("unknown ablation '" + s + "' (none|no_tsu|no_dsp|no_hrf|rgb_only)");
}

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

nlohmann::json box_json(const Box& b) { return {b.x0, b.y0, b.x1, b.y1}; }

}  // namespace

nlohmann::json trajectory_to_json(const Trajectory& t) {
    using nlohmann::json;
    json steps = json::array();
    for (const auto& s : t.steps) {
        json cands = json::array();
        for (NodeId c : s.candidates) cands.push_back(c == kStop ? json("STOP") : json(c));
        json j = {{"step", s.step},   {"node", s.node},   {"candidates", cands}, {"semantic", s.semantic},
                  {"rgb", s.rgb},     {"depth_map", s.depth_map}, {"rgb_map", s.rgb_map},
                  {"logits", s.logits}, {"probs", s.probs}, {"beta", s.beta},   {"gate", s.gate},
                  {"chosen", cands.at(s.chosen)}};
        if (s.target) j["target"] = cands.at(*s.target);
        if (!s.map.is_null()) j["map"] = s.map;
        steps.push_back(std::move(j));
    }
    json out = {{"episode_id", t.episode_id}, {"path", t.path}, {"forced_stop", t.forced_stop}, {"steps", steps}};
    out["grounded_object"] = t.grounded_object ? json(*t.grounded_object) : json(nullptr);
    out["grounded_box"] = t.grounded_box ? box_json(*t.grounded_box) : json(nullptr);
    return out;
}

std::size_t pseudo_target(const dsp::ExplorationMap& map, const NavGraph& graph, NodeId goal, NodeId current) {
    if (current == goal) return 0;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    NodeId best_id = kStop;
    for (std::size_t i = 0; i < map.size(); ++i) {
        const NodeId id = map.nodes()[i];
        if (id == current) continue;
        const double d = graph.geodesic(id, goal);
        if (d < best_d || (d == best_d && id < best_id)) {
            best = i + 1;
            best_d = d;
            best_id = id;
        }
    }
    return best;
}

std::vector<NodeId> known_route(const dsp::ExplorationMap& map, const NavGraph& graph, NodeId from, NodeId to) {
    if (from == to) return {from};
    // Dijkstra over edges with at least one visited endpoint.
    auto visited = [&](NodeId u) {
        auto i = map.index_of(u);
        return i && map.status(*i) == dsp::NodeStatus::Visited;
    };
    std::map<NodeId, double> dist{{from, 0.0}};
    std::map<NodeId, NodeId> prev;
    using Item = std::pair<double, NodeId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    pq.push({0.0, from});
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[u]) continue;
        if (u == to) break;
        if (!visited(u)) continue;  // frontier nodes are leaves of the known graph
        for (NodeId v : graph.neighbors(u)) {
            const double nd = d + graph.euclidean(u, v);
            auto it = dist.find(v);
            if (it == dist.end() || nd < it->second) {
                dist[v] = nd;
                prev[v] = u;
                pq.push({nd, v});
            }
        }
    }
    if (dist.count(to) == 0) throw std::runtime_error(fmt::format("known_route: node {} unreachable from {}", to, from));
    std::vector<NodeId> route{to};
    while (route.back() != from) route.push_back(prev.at(route.back()));
    std::reverse(route.begin(), route.end());
    return route;
}

SusaModel::SusaModel(const ModelConfig& cfg, const WorldParams& world)
    : cfg_(cfg),
      world_(world),
      vocab_(world.vocabulary()),
      params_(cfg.seed),
      emb_(params_, "encoders.embedding", vocab_.size(), cfg.max_len, cfg.d),
      semantic_empty_(params_.add("encoders.semantic.empty", {1, cfg.d}, Init::Normal, 1.0)),
      instr_(params_, cfg, emb_),
      pano_(params_, cfg, world.d_v),
      tca_(params_, "tsu.tca", cfg),
      delta_logit_(params_.add("tsu.delta_logit", {1, 1}, Init::Zeros)),
      stop_semantic_(params_.add("tsu.stop", {1, cfg.d}, Init::Normal, 1.0)),
      stop_rgb_(params_.add("dsp.rgb_view.stop", {1, cfg.d}, Init::Normal, 1.0)),
      stop_depth_map_(params_.add("dsp.depth_map.stop", {1, cfg.d}, Init::Normal, 1.0)),
      stop_rgb_map_(params_.add("dsp.rgb_map.stop", {1, cfg.d}, Init::Normal, 1.0)),
      status_(params_.add("dsp.status", {3, cfg.d}, Init::Normal, 0.5)),
      rgb_view_(params_, "dsp.rgb_view", cfg, false),
      depth_map_(params_, "dsp.depth_map", cfg, true),
      rgb_map_(params_, "dsp.rgb_map", cfg, true),
      pool_semantic_(params_.add("hrf.pool.semantic", {cfg.d, 1})),
      pool_rgb_(params_.add("hrf.pool.rgb", {cfg.d, 1})),
      pool_depth_map_(params_.add("hrf.pool.depth_map", {cfg.d, 1})),
      pool_rgb_map_(params_.add("hrf.pool.rgb_map", {cfg.d, 1})),
      fusion_(params_, "hrf.fusion", cfg.d, cfg.hidden, cfg.normalize_beta),
      heads_(params_, cfg),
      grounding_(params_, cfg) {
    cfg_.validate();
    world_.validate();
}

double SusaModel::learned_delta() const { return 1.0 / (1.0 + std::exp(-delta_logit_.item())); }

RolloutResult SusaModel::rollout(const World& world, const Episode& episode, const RolloutOptions& opts) const {
    if (world.params.d_v != world_.d_v || world.n_views() == 0)
        throw ShapeError(fmt::format("rollout: world d_v {} does not match model d_v {}", world.params.d_v, world_.d_v));
    const bool native = opts.native_rgb;
    const Ablation ab = native ? Ablation::RgbOnly : opts.ablation;
    const bool use_semantic = !native;
    const bool use_depth = !native;
    const bool teacher = opts.mode == RolloutMode::Teacher;
    const bool student = opts.mode == RolloutMode::Student;
    const bool adaptive = opts.adaptive_delta || (!opts.delta && cfg_.adaptive_delta);
    const double delta = opts.delta.value_or(cfg_.delta);

    RolloutResult res;
    Trajectory& traj = res.trajectory;
    traj.episode_id = episode.episode_id;

    const auto instr = instr_(encoders::token_ids(vocab_, episode.instruction_tokens));
    res.instruction = instr.pooled;
    traj.instruction = values(instr.pooled);
    const auto tca_kv = use_semantic ? tca_.prepare(instr.tokens) : std::vector<nn::Attention::KV>{};
    const auto rgb_kv = rgb_view_.prepare(instr.tokens);
    const auto depth_kv = use_depth ? depth_map_.prepare(instr.tokens) : std::vector<nn::Attention::KV>{};
    const auto rgbmap_kv = rgb_map_.prepare(instr.tokens);

    Rng rng(derive(opts.seed, {tag("actions"), tag(episode.episode_id)}));
    dsp::ExplorationMap map;
    NodeId node = episode.start;
    traj.path.push_back(node);
    std::size_t gt_pos = 0;
    bool stopped = false;

    const std::size_t n = world.n_views();
    for (std::size_t t = 0; t < cfg_.max_steps && !stopped; ++t) {
        const Observation obs = observe(world, node);
        const Panorama& pano = *obs.panorama;
        Tensor enc_rgb = pano_(encoders::view_features(pano, encoders::Modality::Rgb), encoders::Modality::Rgb);
        Tensor enc_depth =
            use_depth ? pano_(encoders::view_features(pano, encoders::Modality::Depth), encoders::Modality::Depth)
                      : enc_rgb;  // placeholder; the depth map is never read in this mode
        map.update(world, node, t, enc_depth, enc_rgb);

        const std::size_t k = map.size();
        std::vector<std::size_t> status(k);
        std::vector<std::size_t> masked;
        std::vector<std::vector<std::size_t>> facing(k);
        std::vector<NodeId> candidates{kStop};
        for (std::size_t i = 0; i < k; ++i) {
            const NodeId id = map.nodes()[i];
            candidates.push_back(id);
            status[i] = id == node ? 2 : (map.status(i) == dsp::NodeStatus::Visited ? 0 : 1);
            if (id == node) masked.push_back(i + 1);
            if (world.graph.adjacent(node, id))
                facing[i].push_back(facing_view(world.graph.node(node).pos, world.graph.node(id).pos, n));
        }
        const auto buckets = dsp::bucketize(map.distances(world.graph, node), cfg_.bucket_edges);

        // RGB view stream.
        Tensor xr = rgb_view_(concat({stop_rgb_, enc_rgb}, 0), rgb_kv);
        // RGB map stream.
        Tensor tr_in = concat({stop_rgb_map_, map.rgb_features()}, 0);
        Tensor td_in;
        if (cfg_.status_embedding) {
            std::vector<std::size_t> idx(status);
            Tensor st = concat({Tensor::zeros({1, cfg_.d}), select_rows(status_, idx)}, 0);
            tr_in = add(tr_in, st);
            if (use_depth) td_in = add(concat({stop_depth_map_, map.depth_features()}, 0), st);
        } else if (use_depth) {
            td_in = concat({stop_depth_map_, map.depth_features()}, 0);
        }
        Tensor trm = rgb_map_(tr_in, rgbmap_kv, buckets);

        Tensor xs, tdm;
        if (use_semantic) {
            std::vector<std::vector<std::size_t>> view_tokens;
            for (const auto& v : pano.views) view_tokens.push_back(encoders::token_ids(vocab_, v.landmark_tokens));
            Tensor sem = concat({stop_semantic_, encoders::encode_semantics(emb_, semantic_empty_, view_tokens)}, 0);
            Tensor gstat = tsu::static_match(sem, instr.tokens);
            Tensor gdyn = tca_(sem, tca_kv);
            xs = adaptive ? tsu::combine(sem, gstat, gdyn, sigmoid(delta_logit_))
                          : tsu::combine(sem, gstat, gdyn, delta);
        }
        if (use_depth) tdm = depth_map_(td_in, depth_kv, buckets);

        auto first = [](const Tensor& x) {
            const std::size_t r0[] = {0};
            return select_rows(x, r0);
        };

        // Fusion weights.
        Tensor beta;
        switch (ab) {
            case Ablation::None: beta = fusion_({first(xs), first(xr), first(tdm), first(trm)}); break;
            case Ablation::NoTsu:
                beta = fusion_({Tensor{}, first(xr), first(tdm), first(trm)}, {false, true, true, true});
                break;
            case Ablation::NoDsp:
                beta = fusion_({first(xs), first(xr), Tensor{}, first(trm)}, {true, true, false, true});
                break;
            case Ablation::NoHrf: {
                const double w = cfg_.normalize_beta ? 0.25 : 0.5;
                beta = Tensor::row({w, w, w, w});
                break;
            }
            case Ablation::RgbOnly: beta = Tensor::row({0.0, 1.0, 0.0, 1.0}); break;
        }

        Tensor p_xr = policy::branch_scores(heads_.rgb, xr);
        Tensor p_trm = policy::branch_scores(heads_.rgb_map, trm);
        Tensor p_x, p_t, hybrid;
        Tensor pooled_rgb = hrf::attn_pool(xr, pool_rgb_);
        Tensor pooled_rgb_map = hrf::attn_pool(trm, pool_rgb_map_);
        Tensor p_xs, p_tdm;
        if (native) {
            p_x = p_xr;
            p_t = p_trm;
            hybrid = add(pooled_rgb, pooled_rgb_map);
        } else {
            p_xs = policy::branch_scores(heads_.semantic, xs);
            p_tdm = policy::branch_scores(heads_.depth_map, tdm);
            p_x = policy::fuse_pair(p_xs, p_xr, hrf::beta_at(beta, 0), hrf::beta_at(beta, 1));
            p_t = policy::fuse_pair(p_tdm, p_trm, hrf::beta_at(beta, 2), hrf::beta_at(beta, 3));
            hybrid = hrf::hybrid_embed({hrf::attn_pool(xs, pool_semantic_), pooled_rgb,
                                        hrf::attn_pool(tdm, pool_depth_map_), pooled_rgb_map},
                                       beta);
        }
        Tensor p_xg = policy::local_to_global(p_x, facing, heads_.backtrack);
        Tensor gate = sigmoid(heads_.gate(hybrid));
        Tensor logits = policy::dynamic_fuse(p_t, p_xg, gate);
        policy::ActionDistribution dist = policy::make_distribution(candidates, logits, masked);
        res.hybrid = hybrid;

        // Supervision and choice.
        std::optional<std::size_t> target;
        std::size_t chosen = 0;
        if (teacher) {
            if (node != episode.gt_path.at(gt_pos))
                throw std::logic_error("teacher rollout left the reference path");
            if (gt_pos + 1 < episode.gt_path.size()) {
                const NodeId next = episode.gt_path[gt_pos + 1];
                auto idx = map.index_of(next);
                if (!idx) throw std::logic_error("teacher target missing from the candidate list");
                target = *idx + 1;
            } else {
                target = 0;
            }
            chosen = *target;
        } else if (student) {
            target = pseudo_target(map, world.graph, episode.goal, node);
            chosen = policy::select_sample(dist, rng);
        } else if (opts.mode == RolloutMode::Sample) {
            chosen = policy::select_sample(dist, rng);
        } else {
            chosen = policy::select_greedy(dist);
        }
        if (target) {
            Tensor ce = cross_entropy(dist.logits, *target);
            res.action_loss = res.action_loss.defined() ? add(res.action_loss, ce) : ce;
            ++res.supervised_steps;
        }

        if (opts.record_steps) {
            StepRecord rec;
            rec.step = t;
            rec.node = node;
            rec.candidates = dist.candidates;
            rec.rgb = values(p_xr);
            rec.rgb_map = values(p_trm);
            if (!native) {
                rec.semantic = values(p_xs);
                rec.depth_map = values(p_tdm);
            }
            rec.logits = values(dist.logits);
            rec.probs = dist.probs;
            for (std::size_t b = 0; b < 4; ++b) rec.beta[b] = native ? (b % 2 == 1 ? 1.0 : 0.0) : beta.data()[b];
            rec.gate = gate.item();
            rec.chosen = chosen;
            rec.target = target;
            if (opts.record_map) rec.map = map.snapshot();
            traj.steps.push_back(std::move(rec));
        }

        if (chosen == 0) {
            stopped = true;
            break;
        }
        const NodeId dest = dist.candidates[chosen];
        const auto route = known_route(map, world.graph, node, dest);
        traj.path.insert(traj.path.end(), route.begin() + 1, route.end());
        node = dest;
        if (teacher) ++gt_pos;
    }
    traj.forced_stop = !stopped;
    traj.hybrid = values(res.hybrid);

    // Object grounding at the final node.
    std::vector<ObjectAnnotation> objects;
    for (const auto& v : world.panoramas.at(node).views) objects.insert(objects.end(), v.objects.begin(), v.objects.end());
    if (!objects.empty()) {
        std::vector<std::string> tokens;
        for (const auto& o : objects) tokens.push_back(o.token);
        Tensor scores = grounding_(select_rows(emb_.table, encoders::token_ids(vocab_, tokens)),
                                   policy::box_tensor(objects), instr.pooled);
        std::size_t best = 0;
        for (std::size_t i = 1; i < objects.size(); ++i)
            if (scores.data()[i] > scores.data()[best]) best = i;
        traj.grounded_object = objects[best].object_id;
        traj.grounded_box = objects[best].box;
        if (teacher && episode.mode == EpisodeMode::GoalOriented && episode.target_object_id && node == episode.goal) {
            for (std::size_t i = 0; i < objects.size(); ++i)
                if (objects[i].object_id == *episode.target_object_id)
                    res.grounding_loss = cross_entropy(scores, i);
        }
    }
    return res;
}

}  // namespace susa
