// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
//
//   acceptance [--work DIR] [criterion ...]
//
// Criteria 6-10 share the seed-0 model trained for criterion 6; criterion 7
// trains four more seeds of both the full agent and the RGB-only baseline.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "susa/commands.hpp"
#include "susa/diagnostics.hpp"
#include "susa/hrf.hpp"
#include "susa/metrics.hpp"
#include "susa/rng.hpp"
#include "susa/tsu.hpp"

using namespace susa;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTol = 1e-3;
constexpr double kGradEps = 1e-5;
constexpr std::size_t kGradParams = 25;
constexpr std::size_t kGradNodes = 5;
constexpr double kGradSeconds = 60;

constexpr std::size_t kDtwGraphs = 20;
constexpr std::size_t kDtwMaxNodes = 6;
constexpr std::size_t kDtwMaxLen = 5;
constexpr double kDtwSeconds = 30;

constexpr std::size_t kFloydGraphs = 100;
constexpr std::size_t kFloydMaxNodes = 12;
constexpr double kFloydSeconds = 10;

constexpr double kFixtureTol = 1e-9;

constexpr double kSeenSr = 90.0;
constexpr double kUnseenSr = 70.0;
constexpr std::size_t kEvalEpisodes = 200;
constexpr double kTrainSeconds = 15 * 60;

constexpr std::size_t kAblationSeeds = 5;
constexpr std::size_t kAblationIterations = 2000;
constexpr double kAblationAmbiguity = 0.3;
constexpr double kAblationGap = 5.0;

constexpr double kAlignmentGap = 0.1;
constexpr std::size_t kConsistencyEpisodes = 50;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- 1. gradients

Outcome gradients() {
    const auto t0 = Clock::now();
    double worst_op = 0.0;
    std::string worst_name;
    bool ok = true;
    for (const auto& c : diagnostics::check_ops(20, kGradEps, kGradTol)) {
        ok = ok && c.passed && c.checked > 0;
        if (c.worst >= worst_op) {
            worst_op = c.worst;
            worst_name = c.op;
        }
    }
    const auto loss = diagnostics::check_episode_loss(kGradParams, kGradNodes, 0, kGradEps, kGradTol);
    const double dt = seconds_since(t0);
    ok = ok && loss.report.worst() < kGradTol && loss.sampled.size() == kGradParams && dt < kGradSeconds;
    return {ok, fmt::format("worst op {} rel err {:.2e}, episode loss ({} params, {} nodes) rel err {:.2e}, "
                            "tol {:.0e}, {:.1f}s (limit {}s)",
                            worst_name, worst_op, loss.sampled.size(), loss.world_nodes, loss.report.worst(),
                            kGradTol, dt, kGradSeconds)};
}

// ---- 2. DTW dynamic program against warping enumeration

NavGraph graph_of(const std::vector<Vec3>& pos, const std::vector<std::pair<NodeId, NodeId>>& edges) {
    std::vector<GraphNode> nodes;
    for (std::size_t i = 0; i < pos.size(); ++i) {
        GraphNode g;
        g.id = i;
        g.pos = pos[i];
        g.room = "hall";
        g.landmark = "lamp";
        nodes.push_back(g);
    }
    return NavGraph(nodes, edges);
}

NavGraph random_connected(Rng& rng, std::size_t n) {
    std::vector<Vec3> pos;
    for (std::size_t i = 0; i < n; ++i) pos.push_back({rng.uniform(0, 8), rng.uniform(0, 8), 0});
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId i = 1; i < n; ++i) edges.push_back({rng.below(i), i});
    for (NodeId a = 0; a < n; ++a)
        for (NodeId b = a + 1; b < n; ++b)
            if (rng.bernoulli(0.25)) edges.push_back({a, b});
    return graph_of(pos, edges);
}

double enumerate_dtw(const std::vector<NodeId>& p, const std::vector<NodeId>& g, const NavGraph& graph) {
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
        acc += graph.geodesic(p[i], g[j]);
        if (i + 1 == p.size() && j + 1 == g.size()) {
            best = std::min(best, acc);
            return;
        }
        if (i + 1 < p.size()) walk(i + 1, j, acc);
        if (j + 1 < g.size()) walk(i, j + 1, acc);
        if (i + 1 < p.size() && j + 1 < g.size()) walk(i + 1, j + 1, acc);
    };
    walk(0, 0, 0.0);
    return best;
}

// Every node sequence of length `len` (repeats allowed: the agent may stay).
void sequences(std::size_t n, std::size_t len, std::vector<std::vector<NodeId>>& out) {
    std::vector<NodeId> cur(len, 0);
    while (true) {
        out.push_back(cur);
        std::size_t k = 0;
        while (k < len && ++cur[k] == n) cur[k++] = 0;
        if (k == len) return;
    }
}

Outcome dtw() {
    const auto t0 = Clock::now();
    std::size_t pairs = 0, mismatches = 0;
    const metrics::Options opts;
    for (std::uint64_t gi = 0; gi < kDtwGraphs; ++gi) {
        Rng rng(derive(2024, {gi}));
        const NavGraph g = random_connected(rng, rng.between(2, kDtwMaxNodes));
        // All sequences up to length 3, a random sample of the longer ones.
        std::vector<std::vector<NodeId>> pool;
        for (std::size_t len = 1; len <= 3; ++len) sequences(g.size(), len, pool);
        for (std::size_t len = 4; len <= kDtwMaxLen; ++len)
            for (int k = 0; k < 40; ++k) {
                std::vector<NodeId> s(len);
                for (auto& v : s) v = rng.below(g.size());
                pool.push_back(s);
            }
        for (int k = 0; k < 400; ++k) {
            const auto& p = pool[rng.below(pool.size())];
            const auto& q = pool[rng.below(pool.size())];
            const double brute = enumerate_dtw(p, q, g);
            const double expected = std::exp(-brute / (double(p.size()) * opts.d_th));
            ++pairs;
            if (metrics::dtw_cost(p, q, g) != brute || metrics::ndtw(p, q, g, opts) != expected) ++mismatches;
        }
    }
    const double dt = seconds_since(t0);
    return {mismatches == 0 && dt < kDtwSeconds,
            fmt::format("{} path pairs on {} graphs (<= {} nodes, |P|,|G| <= {}), {} mismatches, {:.1f}s (limit {}s)",
                        pairs, kDtwGraphs, kDtwMaxNodes, kDtwMaxLen, mismatches, dt, kDtwSeconds)};
}

// ---- 3. Floyd-Warshall against Dijkstra

std::vector<double> dijkstra(std::size_t n, const std::vector<WeightedEdge>& edges, NodeId src) {
    std::vector<std::vector<std::pair<NodeId, double>>> adj(n);
    for (const auto& e : edges) {
        adj[e.a].push_back({e.b, e.length});
        adj[e.b].push_back({e.a, e.length});
    }
    std::vector<double> d(n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, NodeId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    d[src] = 0;
    pq.push({0, src});
    while (!pq.empty()) {
        auto [du, u] = pq.top();
        pq.pop();
        if (du > d[u]) continue;
        for (auto [v, w] : adj[u])
            if (du + w < d[v]) pq.push({d[v] = du + w, v});
    }
    return d;
}

Outcome floyd() {
    const auto t0 = Clock::now();
    std::size_t entries = 0, mismatches = 0;
    for (std::uint64_t gi = 0; gi < kFloydGraphs; ++gi) {
        Rng rng(derive(4048, {gi}));
        const std::size_t n = rng.between(1, kFloydMaxNodes);
        std::vector<WeightedEdge> edges;
        // Lengths on a 1/8 m grid keep every path sum exact.
        for (NodeId a = 0; a < n; ++a)
            for (NodeId b = a + 1; b < n; ++b)
                if (rng.bernoulli(0.3)) edges.push_back({a, b, std::round(rng.uniform(0.5, 5.0) * 8) / 8});
        const auto table = all_pairs_shortest(n, edges);
        for (NodeId s = 0; s < n; ++s) {
            const auto d = dijkstra(n, edges, s);
            for (NodeId v = 0; v < n; ++v, ++entries)
                if (table.at(s, v) != d[v]) ++mismatches;
        }
    }
    const double dt = seconds_since(t0);
    return {mismatches == 0 && dt < kFloydSeconds,
            fmt::format("{} graphs (<= {} nodes), {} distance entries, {} mismatches, {:.2f}s (limit {}s)",
                        kFloydGraphs, kFloydMaxNodes, entries, mismatches, dt, kFloydSeconds)};
}

// ---- 4. metric fixture

Outcome fixture() {
    std::ifstream in(std::string(SUSA_FIXTURE_DIR) + "/metrics_fixture.json");
    if (!in) return {false, "fixture file missing"};
    const json fx = json::parse(in);
    std::vector<Vec3> pos;
    for (std::size_t i = 0; i < fx["positions"].size(); ++i) {
        const auto& p = fx["positions"][std::to_string(i)];
        pos.push_back({p[0].get<double>(), p[1].get<double>(), 0});
    }
    const NavGraph g = graph_of(pos, fx["edges"].get<std::vector<std::pair<NodeId, NodeId>>>());
    metrics::Options opts;
    opts.d_th = fx["d_th"].get<double>();
    double worst = 0.0;
    std::vector<metrics::Record> records;
    auto compare = [&](double got, const json& want) { worst = std::max(worst, std::abs(got - want.get<double>())); };
    for (const auto& r : fx["records"]) {
        Episode e;
        e.gt_path = r["gt"].get<std::vector<NodeId>>();
        e.start = e.gt_path.front();
        e.goal = e.gt_path.back();
        std::optional<metrics::Grounding> gr;
        if (r.contains("reference")) {
            metrics::Grounding x;
            for (const auto& b : r["reference"]) x.reference.push_back({b[0], b[1], b[2], b[3]});
            if (!r["predicted"].is_null()) x.predicted = Box{r["predicted"][0], r["predicted"][1], r["predicted"][2], r["predicted"][3]};
            gr = x;
        }
        const auto m = metrics::compute_all(r["path"].get<std::vector<NodeId>>(), e, g, gr, opts);
        const auto& w = r["metrics"];
        compare(m.tl, w["TL"]);
        compare(m.ne, w["NE"]);
        compare(m.one, w["ONE"]);
        compare(m.sr, w["SR"]);
        compare(m.osr, w["OSR"]);
        compare(m.spl, w["SPL"]);
        compare(m.ndtw, w["nDTW"]);
        compare(m.sdtw, w["sDTW"]);
        if (w.contains("RGS") != m.rgs.has_value()) worst = std::numeric_limits<double>::infinity();
        if (m.rgs) {
            compare(*m.rgs, w["RGS"]);
            compare(*m.rgspl, w["RGSPL"]);
        }
        records.push_back({r["id"], "fixture", m});
    }
    const auto s = metrics::aggregate(records);
    const auto& w = fx["summary"];
    compare(s.tl, w["TL"]);
    compare(s.ne, w["NE"]);
    compare(s.one, w["ONE"]);
    compare(s.sr, w["SR"]);
    compare(s.osr, w["OSR"]);
    compare(s.spl, w["SPL"]);
    compare(s.ndtw, w["nDTW"]);
    compare(s.sdtw, w["sDTW"]);
    compare(s.rgs.value_or(-1), w["RGS"]);
    compare(s.rgspl.value_or(-1), w["RGSPL"]);
    return {worst <= kFixtureTol, fmt::format("{} episodes plus aggregate, max abs deviation {:.2e} (tol {:.0e})",
                                               records.size(), worst, kFixtureTol)};
}

// ---- 5. exact identities

Outcome identities() {
    std::vector<std::string> failed;
    // Delta endpoints.
    Rng rng(5);
    std::vector<double> a(12), b(12);
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    const Tensor xs = Tensor::from({3, 4}, a), dyn = Tensor::from({3, 4}, b);
    const Tensor stat = Tensor::from({3, 1}, {0.3, -0.7, 1.1});
    const Tensor one = tsu::combine(xs, stat, dyn, 1.0), zero = tsu::combine(xs, stat, dyn, 0.0);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            if (one.at(r, c) != stat.at(r, 0) * xs.at(r, c)) failed.push_back("delta=1");
            if (zero.at(r, c) != dyn.at(r, c)) failed.push_back("delta=0");
        }
    // Single-pair contrastive loss.
    if (hrf::contrastive_loss(Tensor::row(a), Tensor::row(b), 0.07).item() != 0.0) failed.push_back("B=1 contrastive");

    // Loss without the contrastive term, and fusion weights at initialization.
    WorldParams wp;
    wp.seed = 3;
    DataConfig data;
    WorldCache worlds(wp);
    ModelConfig mc;
    SusaModel model(mc, wp);
    const auto batch = sample_episodes(worlds, data, Split::Train, 11, 4);
    LossWeights w;
    w.lambda2 = 0.0;
    Tape tape;
    {
        TapeScope scope(tape);
        const auto t = batch_loss(model, worlds, batch, w, true, false, 1);
        const double expect = w.lambda1 * t.teacher + (t.grounding != 0 ? w.grounding * t.grounding : 0.0);
        if (t.total.item() != expect) failed.push_back("lambda2=0");
    }
    for (const auto& e : batch)
        for (const auto& s : model.rollout(worlds.get(e.world_seed), e).trajectory.steps)
            for (double v : s.beta)
                if (v != 0.25) failed.push_back("initial beta");
    std::set<std::string> uniq(failed.begin(), failed.end());
    std::string list;
    for (const auto& f : uniq) list += (list.empty() ? "" : ", ") + f;
    return {uniq.empty(), uniq.empty() ? "delta in {0, 1}, lambda2 = 0, B = 1 contrastive, initial beta = 0.25: all exact"
                                       : "not exact: " + list};
}

// ---- shared trained model

// Trains into dir/name unless a finished run with the same config is already
// there; the wall time of the run that produced the checkpoint is kept next
// to it.
struct Trained {
    std::string checkpoint;
    double seconds = 0.0;
};

Trained train_once(const fs::path& dir, const std::string& name, const RunConfig& cfg) {
    const fs::path out = dir / name;
    const fs::path ck = out / "checkpoint.json", timing = out / "train_seconds.txt";
    if (fs::exists(ck) && fs::exists(timing)) {
        const json have = read_json_file(ck.string());
        if (have.at("config") == cfg.to_json() && have.at("iteration") == cfg.train.iterations)
            return {ck.string(), std::stod(slurp(timing))};
    }
    const auto t0 = Clock::now();
    cli::cmd_train(cfg, {out.string(), std::nullopt, true});
    const double dt = seconds_since(t0);
    std::ofstream(timing) << fmt::format("{:.3f}\n", dt);
    return {ck.string(), dt};
}

RunConfig run_config(std::uint64_t seed, const std::vector<std::string>& overrides = {}) {
    return resolve_config(json::object(), overrides, seed);
}

cli::EvalOutput eval_on(const std::string& checkpoint, const std::string& split,
                        std::vector<std::string> overrides = {}) {
    cli::EvalArgs args;
    args.checkpoint = checkpoint;
    args.split = split;
    overrides.push_back(fmt::format("eval.episodes={}", kEvalEpisodes));
    args.overrides = overrides;
    return cli::run_eval(args);
}

struct Context {
    fs::path work;
    std::optional<Trained> base;
    const Trained& model() {
        if (!base) base = train_once(work, "full_seed0", run_config(0));
        return *base;
    }
};

// ---- 6. training reaches the success-rate targets

Outcome training(Context& ctx) {
    const auto& m = ctx.model();
    const double seen = eval_on(m.checkpoint, "seen").result.summary.sr;
    const double unseen = eval_on(m.checkpoint, "unseen").result.summary.sr;
    const RunConfig cfg = run_config(0);
    return {seen >= kSeenSr && unseen >= kUnseenSr && m.seconds < kTrainSeconds,
            fmt::format("batch {}, {} iterations: seen SR {:.1f} (>= {}), unseen SR {:.1f} (>= {}) on {} episodes "
                        "each, training {:.0f}s (limit {:.0f}s)",
                        cfg.train.batch, cfg.train.iterations, seen, kSeenSr, unseen, kUnseenSr, kEvalEpisodes,
                        m.seconds, kTrainSeconds)};
}

// ---- 7. full agent against the RGB-only baseline on ambiguous unseen worlds

Outcome ablation(Context& ctx) {
    const std::string amb = fmt::format("eval.ambiguity={}", kAblationAmbiguity);
    const std::string iters = fmt::format("train.iterations={}", kAblationIterations);
    double full_sum = 0, rgb_sum = 0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < kAblationSeeds; ++seed) {
        const std::string full_ck =
            seed == 0 && run_config(0, {iters}).to_json() == run_config(0).to_json()
                ? ctx.model().checkpoint
                : train_once(ctx.work, fmt::format("full_seed{}", seed), run_config(seed, {iters})).checkpoint;
        const std::string rgb_ck =
            train_once(ctx.work, fmt::format("rgb_only_seed{}", seed), run_config(seed, {iters, "train.ablate=\"rgb_only\""}))
                .checkpoint;
        const double f = eval_on(full_ck, "unseen", {amb}).result.summary.sr;
        const double r = eval_on(rgb_ck, "unseen", {amb}).result.summary.sr;
        full_sum += f;
        rgb_sum += r;
        per_seed += fmt::format("{}{:.1f}/{:.1f}", seed == 0 ? "" : " ", f, r);
    }
    const double full = full_sum / kAblationSeeds, rgb = rgb_sum / kAblationSeeds;
    return {full - rgb >= kAblationGap,
            fmt::format("ambiguity {} unseen SR over {} seeds: full {:.2f}, rgb_only {:.2f}, gap {:.2f}pp (>= {}); "
                        "per seed full/rgb {}",
                        kAblationAmbiguity, kAblationSeeds, full, rgb, full - rgb, kAblationGap, per_seed)};
}

// ---- 8. hybrid embeddings align with their own instruction

Outcome alignment(Context& ctx) {
    const auto r = eval_on(ctx.model().checkpoint, "seen").result;
    const double gap = r.paired_cosine - r.mismatched_cosine;
    return {gap >= kAlignmentGap, fmt::format("paired cosine {:.4f}, mismatched {:.4f}, gap {:.4f} (>= {})",
                                              r.paired_cosine, r.mismatched_cosine, gap, kAlignmentGap)};
}

// ---- 9. evaluation output is byte-deterministic

Outcome determinism(Context& ctx) {
    const std::string ck = ctx.model().checkpoint;
    std::vector<std::string> dirs;
    for (std::size_t threads : {1, 1, 4}) {
        cli::EvalArgs args;
        args.checkpoint = ck;
        args.split = "unseen";
        args.threads = threads;
        args.overrides = {"eval.episodes=50"};
        const std::string out = (ctx.work / fmt::format("determinism_{}", dirs.size())).string();
        cli::cmd_eval(args, out);
        dirs.push_back(out);
    }
    std::size_t differing = 0;
    for (const char* f : {"metrics.csv", "summary.json", "trajectories.jsonl"})
        for (std::size_t i = 1; i < dirs.size(); ++i) {
            const std::string a = slurp(fs::path(dirs[0]) / f), b = slurp(fs::path(dirs[i]) / f);
            // The thread count is part of the embedded config; compare everything else.
            auto strip = [](std::string s) {
                for (std::size_t p; (p = s.find("\"threads\":")) != std::string::npos;) {
                    const std::size_t e = s.find_first_of(",}", p);
                    s.erase(p, e - p);
                }
                return s;
            };
            if (a.empty() || strip(a) != strip(b)) ++differing;
        }
    return {differing == 0, fmt::format("3 runs (1, 1 and 4 threads) x 3 artifacts on 50 episodes, {} differing",
                                        differing)};
}

// ---- 10. zero-weighted branches reproduce the native RGB-only pipeline

Outcome consistency(Context& ctx) {
    const json ck = read_json_file(ctx.model().checkpoint);
    const RunConfig cfg = RunConfig::from_json(ck.at("config"));
    SusaModel model(cfg.model, cfg.world);
    model.params().load_json(ck.at("params"));
    WorldCache worlds(cfg.eval_world());
    const auto episodes = sample_episodes(worlds, cfg.data, Split::Unseen, cfg.eval.stream, kConsistencyEpisodes);
    std::size_t differing = 0, steps = 0;
    for (const auto& e : episodes) {
        RolloutOptions ablated, native;
        ablated.ablation = Ablation::RgbOnly;
        native.native_rgb = true;
        const World& w = worlds.get(e.world_seed);
        const auto a = model.rollout(w, e, ablated).trajectory, b = model.rollout(w, e, native).trajectory;
        bool same = a.path == b.path && a.steps.size() == b.steps.size();
        for (std::size_t i = 0; same && i < a.steps.size(); ++i)
            same = a.steps[i].probs == b.steps[i].probs && a.steps[i].chosen == b.steps[i].chosen;
        steps += a.steps.size();
        if (!same) ++differing;
    }
    return {differing == 0, fmt::format("{} episodes ({} steps): {} differ in path or action distribution",
                                        episodes.size(), steps, differing)};
}

}  // namespace

int main(int argc, char** argv) {
    Context ctx;
    ctx.work = fs::temp_directory_path() / "susa_acceptance";
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--work" && i + 1 < argc) {
            ctx.work = argv[++i];
        } else {
            only.insert(std::stoi(a));
        }
    }
    fs::create_directories(ctx.work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient check", gradients},
        {"nDTW dynamic program", dtw},
        {"shortest paths", floyd},
        {"metric fixture", fixture},
        {"exact identities", identities},
        {"training success rate", [&] { return training(ctx); }},
        {"ablation gap", [&] { return ablation(ctx); }},
        {"embedding alignment", [&] { return alignment(ctx); }},
        {"eval determinism", [&] { return determinism(ctx); }},
        {"branch-removal consistency", [&] { return consistency(ctx); }},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = int(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::cout << fmt::format("{} [{}] {}: {}", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail)
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
