#include <cmath>
#include <fstream>
#include <functional>

#include <gtest/gtest.h>

#include "susa/metrics.hpp"
#include "susa/rng.hpp"

using namespace susa;
using namespace susa::metrics;

namespace {

NavGraph graph_from(const std::vector<std::pair<double, double>>& pos, const std::vector<std::pair<NodeId, NodeId>>& edges) {
    std::vector<GraphNode> nodes;
    for (std::size_t i = 0; i < pos.size(); ++i) {
        GraphNode g;
        g.id = i;
        g.pos = {pos[i].first, pos[i].second, 0};
        g.room = "hall";
        g.landmark = "lamp";
        nodes.push_back(g);
    }
    return NavGraph(nodes, edges);
}

Episode episode_on(const std::vector<NodeId>& gt) {
    Episode e;
    e.episode_id = "fixture";
    e.start = gt.front();
    e.goal = gt.back();
    e.gt_path = gt;
    return e;
}

// Minimum summed cost over every monotone warping, enumerated explicitly and
// summed from (0, 0) forward.
double brute_dtw(const std::vector<NodeId>& p, const std::vector<NodeId>& g, const NavGraph& graph) {
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

// Random connected graph of n nodes on a jittered ring with chords.
NavGraph random_graph(Rng& rng, std::size_t n) {
    std::vector<std::pair<double, double>> pos;
    for (std::size_t i = 0; i < n; ++i) pos.push_back({rng.uniform(0, 8), rng.uniform(0, 8)});
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId i = 1; i < n; ++i) edges.push_back({rng.below(i), i});
    for (NodeId a = 0; a < n; ++a)
        for (NodeId b = a + 1; b < n; ++b)
            if (rng.bernoulli(0.2)) edges.push_back({a, b});
    return graph_from(pos, edges);
}

std::vector<NodeId> random_walk(Rng& rng, const NavGraph& g, std::size_t len) {
    std::vector<NodeId> p = {rng.below(g.size())};
    while (p.size() < len) {
        const auto& nb = g.neighbors(p.back());
        if (nb.empty() || rng.bernoulli(0.2)) {
            p.push_back(p.back());
        } else {
            p.push_back(nb[rng.below(nb.size())]);
        }
    }
    return p;
}

nlohmann::json load_fixture() {
    std::ifstream in(std::string(SUSA_FIXTURE_DIR) + "/metrics_fixture.json");
    if (!in) throw std::runtime_error("metrics fixture missing");
    return nlohmann::json::parse(in);
}

}  // namespace

TEST(Metrics, PerfectTrajectory) {
    const NavGraph g = graph_from({{0, 0}, {2, 0}, {4, 0}}, {{0, 1}, {1, 2}});
    const auto m = compute_all({0, 1, 2}, episode_on({0, 1, 2}), g);
    EXPECT_EQ(m.ne, 0.0);
    EXPECT_EQ(m.sr, 1.0);
    EXPECT_EQ(m.spl, 1.0);
    EXPECT_EQ(m.ndtw, 1.0);
    EXPECT_EQ(m.sdtw, 1.0);
}

TEST(Metrics, DetourHalvesSpl) {
    // Line 0-1-2 with 2 m edges plus a detour 1-3-4-2.
    const NavGraph g = graph_from({{0, 0}, {2, 0}, {4, 0}, {2, 2}, {4, 2}}, {{0, 1}, {1, 2}, {1, 3}, {3, 4}, {4, 2}});
    const auto m = compute_all({0, 1, 3, 4, 2}, episode_on({0, 1, 2}), g);
    EXPECT_EQ(m.tl, 8.0);
    EXPECT_EQ(m.spl, 0.5);
}

TEST(Metrics, SuccessThresholdIsInclusive) {
    const NavGraph g = graph_from({{0, 0}, {3, 0}, {3.5, 0}}, {{0, 1}, {1, 2}});
    EXPECT_EQ(compute_all({0}, episode_on({0, 1}), g).sr, 1.0);
    EXPECT_EQ(compute_all({0}, episode_on({0, 1, 2}), g).sr, 0.0);
}

TEST(Metrics, JumpIsRejectedWithStep) {
    const NavGraph g = graph_from({{0, 0}, {2, 0}, {4, 0}}, {{0, 1}, {1, 2}});
    try {
        compute_all({0, 2}, episode_on({0, 1, 2}), g);
        FAIL() << "jump accepted";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
    }
}

TEST(Ndtw, IdenticalPathsScoreOne) {
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        const NavGraph g = random_graph(rng, 6);
        const auto p = random_walk(rng, g, rng.between(1, 6));
        EXPECT_EQ(ndtw(p, p, g), 1.0);
    }
}

TEST(Ndtw, FarPathsStayPositive) {
    const NavGraph g = graph_from({{0, 0}, {500, 0}}, {{0, 1}});
    const double v = ndtw({0, 0, 0}, {1, 1}, g);
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1e-30);
}

TEST(Ndtw, DynamicProgramEqualsWarpingEnumeration) {
    for (std::uint64_t gi = 0; gi < 20; ++gi) {
        Rng rng(derive(31, {gi}));
        const NavGraph g = random_graph(rng, rng.between(2, 6));
        for (std::size_t lp = 1; lp <= 5; ++lp)
            for (std::size_t lg = 1; lg <= 5; ++lg)
                for (int rep = 0; rep < 4; ++rep) {
                    const auto p = random_walk(rng, g, lp), q = random_walk(rng, g, lg);
                    EXPECT_EQ(dtw_cost(p, q, g), brute_dtw(p, q, g));
                }
    }
}

TEST(Ndtw, ReferenceNormalizationToggle) {
    const NavGraph g = graph_from({{0, 0}, {2, 0}, {4, 0}}, {{0, 1}, {1, 2}});
    Options o;
    const double c = dtw_cost({0, 1}, {0, 1, 2}, g);
    EXPECT_DOUBLE_EQ(ndtw({0, 1}, {0, 1, 2}, g, o), std::exp(-c / (2 * 3.0)));
    o.ndtw_norm = NdtwNorm::Reference;
    EXPECT_DOUBLE_EQ(ndtw({0, 1}, {0, 1, 2}, g, o), std::exp(-c / (3 * 3.0)));
}

TEST(Iou, Cases) {
    const Box unit{0, 0, 1, 1};
    EXPECT_EQ(iou(unit, unit), 1.0);
    EXPECT_EQ(iou(unit, Box{2, 2, 3, 3}), 0.0);
    EXPECT_NEAR(iou(unit, Box{0.5, 0, 1.5, 1}), 1.0 / 3.0, 1e-15);
    const Box a{0.1, 0.2, 0.7, 0.9}, b{0.3, 0.1, 0.8, 0.5};
    EXPECT_EQ(iou(a, b), iou(b, a));
    EXPECT_THROW(iou(unit, Box{1, 1, 1, 2}), std::invalid_argument);
}

TEST(Aggregate, SingleAndPair) {
    MetricSet m;
    m.tl = 3;
    m.ne = 1;
    m.sr = 1;
    m.spl = 0.5;
    auto s = aggregate({{"a", "fine_grained", m}});
    EXPECT_EQ(s.tl, 3.0);
    EXPECT_EQ(s.sr, 100.0);
    EXPECT_EQ(s.spl, 0.5);
    MetricSet f;
    s = aggregate({{"a", "fine_grained", m}, {"b", "fine_grained", f}});
    EXPECT_EQ(s.sr, 50.0);
    EXPECT_THROW(aggregate({}), std::invalid_argument);
}

TEST(Aggregate, TenEpisodeFixture) {
    const auto fx = load_fixture();
    std::vector<std::pair<double, double>> pos;
    for (std::size_t i = 0; i < fx["positions"].size(); ++i) {
        const auto& p = fx["positions"][std::to_string(i)];
        pos.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    const NavGraph g = graph_from(pos, fx["edges"].get<std::vector<std::pair<NodeId, NodeId>>>());
    std::vector<Record> records;
    for (const auto& r : fx["records"]) {
        const auto path = r["path"].get<std::vector<NodeId>>();
        std::optional<Grounding> gr;
        if (r.contains("reference")) {
            Grounding x;
            for (const auto& b : r["reference"]) x.reference.push_back({b[0], b[1], b[2], b[3]});
            if (!r["predicted"].is_null()) {
                const auto& b = r["predicted"];
                x.predicted = Box{b[0], b[1], b[2], b[3]};
            }
            gr = x;
        }
        const MetricSet m = compute_all(path, episode_on(r["gt"].get<std::vector<NodeId>>()), g, gr);
        const auto& want = r["metrics"];
        const std::string id = r["id"];
        EXPECT_NEAR(m.tl, want["TL"].get<double>(), 1e-9) << id;
        EXPECT_NEAR(m.ne, want["NE"].get<double>(), 1e-9) << id;
        EXPECT_NEAR(m.one, want["ONE"].get<double>(), 1e-9) << id;
        EXPECT_NEAR(m.sr, want["SR"].get<double>(), 1e-9) << id;
        EXPECT_NEAR(m.osr, want["OSR"].get<double>(), 1e-9) << id;
        EXPECT_NEAR(m.spl, want["SPL"].get<double>(), 1e-9) << id;
        EXPECT_NEAR(m.ndtw, want["nDTW"].get<double>(), 1e-9) << id;
        EXPECT_NEAR(m.sdtw, want["sDTW"].get<double>(), 1e-9) << id;
        if (want.contains("RGS")) {
            ASSERT_TRUE(m.rgs.has_value()) << id;
            EXPECT_NEAR(*m.rgs, want["RGS"].get<double>(), 1e-9) << id;
            EXPECT_NEAR(*m.rgspl, want["RGSPL"].get<double>(), 1e-9) << id;
        } else {
            EXPECT_FALSE(m.rgs.has_value()) << id;
        }
        records.push_back({id, "fixture", m});
    }
    const Summary s = aggregate(records);
    const auto& want = fx["summary"];
    EXPECT_NEAR(s.tl, want["TL"].get<double>(), 1e-9);
    EXPECT_NEAR(s.ne, want["NE"].get<double>(), 1e-9);
    EXPECT_NEAR(s.one, want["ONE"].get<double>(), 1e-9);
    EXPECT_NEAR(s.sr, want["SR"].get<double>(), 1e-9);
    EXPECT_NEAR(s.osr, want["OSR"].get<double>(), 1e-9);
    EXPECT_NEAR(s.spl, want["SPL"].get<double>(), 1e-9);
    EXPECT_NEAR(s.ndtw, want["nDTW"].get<double>(), 1e-9);
    EXPECT_NEAR(s.sdtw, want["sDTW"].get<double>(), 1e-9);
    EXPECT_NEAR(*s.rgs, want["RGS"].get<double>(), 1e-9);
    EXPECT_NEAR(*s.rgspl, want["RGSPL"].get<double>(), 1e-9);
}

TEST(Metrics, OrderingInvariantsOnRandomTrajectories) {
    Rng rng(9);
    for (int t = 0; t < 300; ++t) {
        const NavGraph g = random_graph(rng, rng.between(2, 8));
        const auto p = random_walk(rng, g, rng.between(1, 7));
        const auto q = g.shortest_path(rng.below(g.size()), rng.below(g.size()));
        const auto m = compute_all(p, episode_on(q), g);
        EXPECT_LE(m.spl, m.sr);
        EXPECT_LE(m.sdtw, std::min(m.sr, m.ndtw));
        EXPECT_GE(m.ndtw, 0.0);
        EXPECT_LE(m.ndtw, 1.0);
        EXPECT_LE(m.one, m.ne);
        if (m.sr == 1.0) {
            auto longer = p;
            longer.push_back(p.back());
            EXPECT_LE(compute_all(longer, episode_on(q), g).spl, m.spl);
        }
    }
}

TEST(Metrics, CsvHasHeaderRowsAndMean) {
    MetricSet m;
    m.sr = 1;
    const std::string csv = to_csv({{"a", "fine_grained", m}, {"b", "fine_grained", MetricSet{}}}, {"config: {}"});
    EXPECT_EQ(csv.rfind("# config: {}\nepisode_id,mode,TL,NE,ONE,SR,OSR,SPL,nDTW,sDTW,RGS,RGSPL\n", 0), 0u);
    EXPECT_NE(csv.find("\nmean,"), std::string::npos);
}
