#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <queue>
#include <set>

#include <gtest/gtest.h>

#include "susa/rng.hpp"
#include "susa/trainer.hpp"
#include "susa/world.hpp"

using namespace susa;

namespace {

// Independent per-source Dijkstra over an adjacency list.
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
            if (du + w < d[v]) {
                d[v] = du + w;
                pq.push({d[v], v});
            }
    }
    return d;
}

GraphNode node(NodeId id, double x, double y, std::string landmark = "", std::string room = "kitchen") {
    GraphNode g;
    g.id = id;
    g.pos = {x, y, 0};
    g.room = std::move(room);
    g.landmark = landmark.empty() ? "lamp" : std::move(landmark);
    return g;
}

}  // namespace

TEST(ShortestPaths, TriangleWithUnitEdges) {
    auto t = all_pairs_shortest(3, {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 1.0}});
    for (NodeId i = 0; i < 3; ++i)
        for (NodeId j = 0; j < 3; ++j) EXPECT_EQ(t.at(i, j), i == j ? 0.0 : 1.0);
}

TEST(ShortestPaths, PathLengthsAdd) {
    auto t = all_pairs_shortest(3, {{0, 1, 2.0}, {1, 2, 3.0}});
    EXPECT_EQ(t.at(0, 2), 5.0);
    EXPECT_EQ(t.next[0 * 3 + 2], 1u);
}

TEST(ShortestPaths, FloydEqualsDijkstraOnRandomGraphs) {
    for (std::uint64_t g = 0; g < 100; ++g) {
        Rng rng(derive(77, {g}));
        const std::size_t n = rng.between(1, 12);
        std::vector<WeightedEdge> edges;
        for (NodeId a = 0; a < n; ++a)
            for (NodeId b = a + 1; b < n; ++b)
                if (rng.bernoulli(0.35)) edges.push_back({a, b, std::round(rng.uniform(0.5, 5.0) * 8) / 8});
        const auto t = all_pairs_shortest(n, edges);
        for (NodeId s = 0; s < n; ++s) {
            const auto d = dijkstra(n, edges, s);
            for (NodeId v = 0; v < n; ++v) EXPECT_EQ(t.at(s, v), d[v]) << "graph " << g << " " << s << "->" << v;
        }
    }
}

TEST(ShortestPaths, SymmetricTriangleInequality) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        WorldParams p;
        p.seed = seed;
        const World w = generate_world(p);
        const auto& g = w.graph;
        for (NodeId a = 0; a < g.size(); ++a)
            for (NodeId b = 0; b < g.size(); ++b) {
                EXPECT_EQ(g.geodesic(a, b), g.geodesic(b, a));
                for (NodeId c = 0; c < g.size(); ++c)
                    EXPECT_LE(g.geodesic(a, c), g.geodesic(a, b) + g.geodesic(b, c) + 1e-12);
            }
    }
}

TEST(World, SameSeedSameWorld) {
    WorldParams p;
    p.seed = 7;
    EXPECT_EQ(world_to_json(generate_world(p)).dump(), world_to_json(generate_world(p)).dump());
}

TEST(World, SingleNodeWorld) {
    WorldParams p;
    p.min_nodes = p.max_nodes = 1;
    const World w = generate_world(p);
    EXPECT_EQ(w.graph.size(), 1u);
    EXPECT_TRUE(w.graph.edges().empty());
    EXPECT_EQ(w.graph.geodesic(0, 0), 0.0);
    const auto obs = observe(w, 0);
    ASSERT_EQ(obs.candidates.size(), 1u);
    EXPECT_EQ(obs.candidates[0].node, kStop);
}

TEST(World, GeneratedWorldsAreConnectedAndSized) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        WorldParams p;
        p.seed = seed;
        const World w = generate_world(p);
        EXPECT_TRUE(w.graph.connected());
        EXPECT_GE(w.graph.size(), p.min_nodes);
        EXPECT_LE(w.graph.size(), p.max_nodes);
        EXPECT_EQ(w.panoramas.size(), w.graph.size());
        for (const auto& pano : w.panoramas) {
            ASSERT_EQ(pano.views.size(), p.n_views);
            for (const auto& v : pano.views) {
                EXPECT_EQ(v.rgb.size(), p.d_v);
                EXPECT_EQ(v.depth.size(), p.d_v);
                EXPECT_FALSE(v.landmark_tokens.empty());
            }
        }
    }
}

TEST(World, JsonRoundTripIsLossless) {
    WorldParams p;
    p.seed = 21;
    const World w = generate_world(p);
    const auto j = world_to_json(w);
    const World back = world_from_json(j);
    EXPECT_EQ(world_to_json(back).dump(), j.dump());
    for (NodeId a = 0; a < w.graph.size(); ++a)
        for (NodeId b = 0; b < w.graph.size(); ++b) EXPECT_EQ(back.graph.geodesic(a, b), w.graph.geodesic(a, b));
}

TEST(World, InvalidParamsRejected) {
    WorldParams p;
    p.min_nodes = 0;
    EXPECT_THROW(generate_world(p), std::invalid_argument);
    p = {};
    p.jitter = p.spacing;
    EXPECT_THROW(generate_world(p), std::invalid_argument);
}

TEST(World, DepthFeatureIgnoresLandmarks) {
    // Two nodes with the same neighbour offsets and different landmarks.
    std::vector<GraphNode> nodes = {node(0, 0, 0, "clock"), node(1, 2, 0, "sofa"), node(2, 10, 0, "piano"),
                                    node(3, 12, 0, "plant")};
    WorldParams p;
    const World w = world_from_graph(p, NavGraph(nodes, {{0, 1}, {2, 3}}));
    for (std::size_t h = 0; h < p.n_views; ++h) {
        EXPECT_EQ(w.panoramas[0].views[h].depth, w.panoramas[2].views[h].depth);
        EXPECT_NE(w.panoramas[0].views[h].landmark_tokens, w.panoramas[2].views[h].landmark_tokens);
    }
}

TEST(World, FacingViewOnCrossFixture) {
    // Centre with neighbours east, north, west, south; 8 views of 45 degrees,
    // view 0 centred on +x and indices increasing counter-clockwise.
    std::vector<GraphNode> nodes = {node(0, 0, 0), node(1, 2, 0), node(2, 0, 2), node(3, -2, 0), node(4, 0, -2)};
    WorldParams p;
    const World w = world_from_graph(p, NavGraph(nodes, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}));
    const auto obs = observe(w, 0);
    ASSERT_EQ(obs.candidates.size(), 5u);
    EXPECT_EQ(obs.candidates[1].view, 0u);
    EXPECT_EQ(obs.candidates[2].view, 2u);
    EXPECT_EQ(obs.candidates[3].view, 4u);
    EXPECT_EQ(obs.candidates[4].view, 6u);
    // A bearing just inside the sector boundary at 22.5 degrees.
    EXPECT_EQ(facing_view({0, 0, 0}, {std::cos(0.39), std::sin(0.39), 0}, 8), 0u);
    EXPECT_EQ(facing_view({0, 0, 0}, {std::cos(0.40), std::sin(0.40), 0}, 8), 1u);
}

TEST(World, ObservationListsStopThenNeighboursById) {
    std::vector<GraphNode> nodes = {node(0, 0, 0), node(1, 2, 0), node(2, 0, 2), node(3, -2, 0)};
    const World w = world_from_graph(WorldParams{}, NavGraph(nodes, {{0, 3}, {0, 1}, {0, 2}}));
    const auto obs = observe(w, 0);
    ASSERT_EQ(obs.candidates.size(), 4u);
    EXPECT_EQ(obs.candidates[0].node, kStop);
    EXPECT_EQ(obs.candidates[1].node, 1u);
    EXPECT_EQ(obs.candidates[2].node, 2u);
    EXPECT_EQ(obs.candidates[3].node, 3u);
    EXPECT_THROW(observe(w, 9), std::out_of_range);
}

TEST(Episodes, StartEqualsGoal) {
    WorldParams p;
    p.seed = 3;
    const World w = generate_world(p);
    const Episode e = make_episode_between(w, 4, 4, EpisodeMode::FineGrained, "x");
    EXPECT_EQ(e.gt_path, std::vector<NodeId>{4});
    EXPECT_EQ(e.instruction_tokens, (std::vector<std::string>{"stop", "at", w.graph.node(4).landmark}));
}

TEST(Episodes, Deterministic) {
    WorldParams p;
    p.seed = 5;
    const World w = generate_world(p);
    EXPECT_EQ(episode_to_json(make_episode(w, 9, EpisodeMode::FineGrained)).dump(),
              episode_to_json(make_episode(w, 9, EpisodeMode::FineGrained)).dump());
    EXPECT_EQ(episode_to_json(make_episode(w, 9, EpisodeMode::GoalOriented)).dump(),
              episode_to_json(make_episode(w, 9, EpisodeMode::GoalOriented)).dump());
}

TEST(Episodes, FineGrainedNamesIntermediateLandmarksInOrder) {
    std::vector<GraphNode> nodes = {node(0, 0, 0, "clock"), node(1, 2, 0, "sofa"), node(2, 4, 0, "piano")};
    const World w = world_from_graph(WorldParams{}, NavGraph(nodes, {{0, 1}, {1, 2}}));
    const Episode e = make_episode_between(w, 0, 2, EpisodeMode::FineGrained, "line");
    EXPECT_EQ(e.gt_path, (std::vector<NodeId>{0, 1, 2}));
    const auto& t = e.instruction_tokens;
    EXPECT_EQ(std::count(t.begin(), t.end(), "sofa"), 1);
    EXPECT_EQ(std::count(t.begin(), t.end(), "clock"), 0);
    EXPECT_LT(std::find(t.begin(), t.end(), "sofa") - t.begin(), std::find(t.begin(), t.end(), "piano") - t.begin());
}

TEST(Episodes, GoalOrientedNamesTargetObject) {
    WorldParams p;
    p.seed = 12;
    const World w = generate_world(p);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Episode e = make_episode(w, s, EpisodeMode::GoalOriented);
        ASSERT_TRUE(e.target_object_id.has_value());
        const auto* obj = find_object(w, e.goal, *e.target_object_id);
        ASSERT_NE(obj, nullptr);
        EXPECT_NE(std::find(e.instruction_tokens.begin(), e.instruction_tokens.end(), obj->token),
                  e.instruction_tokens.end());
    }
}

TEST(Episodes, GroundTruthIsShortestAndHopsInRange) {
    WorldParams p;
    p.seed = 8;
    const World w = generate_world(p);
    for (std::uint64_t s = 0; s < 50; ++s) {
        const Episode e = make_episode(w, s, EpisodeMode::FineGrained);
        double len = 0;
        for (std::size_t i = 1; i < e.gt_path.size(); ++i) {
            ASSERT_TRUE(w.graph.adjacent(e.gt_path[i - 1], e.gt_path[i]));
            len += w.graph.euclidean(e.gt_path[i - 1], e.gt_path[i]);
        }
        EXPECT_NEAR(len, w.graph.geodesic(e.start, e.goal), 1e-9);
        EXPECT_GE(e.gt_path.size() - 1, 2u);
        EXPECT_LE(e.gt_path.size() - 1, 6u);
    }
}

TEST(Episodes, FileRoundTripSkipsHeader) {
    WorldParams p;
    p.seed = 2;
    const World w = generate_world(p);
    std::vector<Episode> eps = {make_episode(w, 1, EpisodeMode::FineGrained), make_episode(w, 2, EpisodeMode::GoalOriented)};
    const auto path = (std::filesystem::temp_directory_path() / "susa_episodes_test.jsonl").string();
    save_episodes(eps, path, nlohmann::json{{"note", "x"}});
    const auto back = load_episodes(path);
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(episode_to_json(back[i]).dump(), episode_to_json(eps[i]).dump());
    EXPECT_EQ(load_episode_header(path).at("note"), "x");
    std::filesystem::remove(path);
}

TEST(Splits, SeenAndUnseenSeedRangesAreDisjoint) {
    DataConfig d;
    std::set<std::uint64_t> seen, unseen;
    for (std::size_t i = 0; i < d.seen_worlds; ++i) seen.insert(world_seed_for(d, Split::Seen, i));
    for (std::size_t i = 0; i < d.unseen_worlds; ++i) unseen.insert(world_seed_for(d, Split::Unseen, i));
    for (auto s : seen) EXPECT_EQ(unseen.count(s), 0u);
    EXPECT_EQ(world_seed_for(d, Split::Train, 3), world_seed_for(d, Split::Seen, 3));
}

TEST(Splits, SampledEpisodesAreDeterministicAndStreamSpecific) {
    DataConfig d;
    WorldCache worlds(WorldParams{});
    const auto a = sample_episodes(worlds, d, Split::Unseen, 5, 6);
    const auto b = sample_episodes(worlds, d, Split::Unseen, 5, 6);
    const auto c = sample_episodes(worlds, d, Split::Unseen, 6, 6);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(episode_to_json(a[i]).dump(), episode_to_json(b[i]).dump());
        EXPECT_GE(a[i].world_seed, d.world_seed_base + kUnseenOffset);
        differs = differs || episode_to_json(a[i]).dump() != episode_to_json(c[i]).dump();
    }
    EXPECT_TRUE(differs);
}
