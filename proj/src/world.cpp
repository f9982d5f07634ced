#include "susa/world.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <numbers>
#include <queue>
#include <stdexcept>

#include "susa/rng.hpp"

namespace susa {

namespace {

const std::vector<std::string> kTemplateWords = {"past", "stop", "at", "find", "the", "in", "go", "to"};

const std::vector<std::string> kRoomNames = {"kitchen", "bedroom", "bathroom", "hallway", "office",
                                             "livingroom", "diningroom", "laundry", "garage", "closet"};

const std::vector<std::string> kLandmarkNames = {
    "sofa",     "plant",    "painting",  "lamp",     "fireplace", "piano",     "mirror",   "bookshelf",
    "clock",    "rug",      "armchair",  "television", "aquarium", "sculpture", "curtain", "chandelier",
    "cabinet",  "dresser",  "bathtub",   "sink",     "stove",     "fridge",    "counter",  "desk",
    "bed",      "wardrobe", "staircase", "railing",  "window",    "doorway",   "column",   "bench",
    "poster",   "statue",   "fountain",  "globe",    "harp",      "easel",     "shelf",    "radiator",
    "ottoman",  "crib",     "treadmill", "pooltable", "drumkit",  "tapestry",  "hammock",  "workbench"};

const std::vector<std::string> kObjectNames = {"cup",    "pillow", "vase",   "book",   "remote", "towel",
                                               "bottle", "bowl",   "candle", "basket", "laptop", "phone",
                                               "shoe",   "hat",    "box",    "plate"};

std::vector<std::string> names_from(const std::vector<std::string>& base, std::size_t count, const char* prefix) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(i < base.size() ? base[i] : fmt::format("{}{:02}", prefix, i));
    return out;
}

void normalize(std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0.0)
        for (double& x : v) x /= n;
}

// World-independent appearance of a token in rgb space.
std::vector<double> appearance(const std::string& token, std::size_t d_v) {
    Rng rng(derive(0xA99EA5A4CEULL, {tag(token)}));
    std::vector<double> v(d_v);
    for (double& x : v) x = rng.normal();
    normalize(v);
    return v;
}

std::vector<double> rgb_feature(const WorldParams& p, NodeId node, std::size_t heading,
                                const std::vector<std::string>& tokens) {
    std::vector<double> app(p.d_v, 0.0);
    for (const auto& t : tokens) {
        auto a = appearance(t, p.d_v);
        for (std::size_t i = 0; i < p.d_v; ++i) app[i] += a[i];
    }
    normalize(app);
    Rng rng(derive(p.seed, {tag("rgb"), node, heading}));
    std::vector<double> noise(p.d_v);
    for (double& x : noise) x = rng.normal();
    normalize(noise);
    std::vector<double> out(p.d_v);
    for (std::size_t i = 0; i < p.d_v; ++i) out[i] = p.rgb_noise * noise[i] + (1.0 - p.rgb_noise) * app[i];
    normalize(out);
    return out;
}

double rbf(double x, double c, double sigma) {
    const double z = (x - c) / sigma;
    return std::exp(-z * z);
}

}  // namespace

// ---- vocabulary -------------------------------------------------------------

void Vocabulary::push(const std::string& t) {
    if (index_.count(t) != 0) return;
    index_.emplace(t, tokens_.size());
    tokens_.push_back(t);
}

Vocabulary Vocabulary::standard(std::size_t rooms, std::size_t landmarks, std::size_t objects) {
    Vocabulary v;
    v.push("[UNK]");
    v.push("[PAD]");
    for (const auto& w : kTemplateWords) v.push(w);
    v.rooms_ = names_from(kRoomNames, rooms, "room");
    v.landmarks_ = names_from(kLandmarkNames, landmarks, "landmark");
    v.objects_ = names_from(kObjectNames, objects, "object");
    for (const auto& w : v.rooms_) v.push(w);
    for (const auto& w : v.landmarks_) v.push(w);
    for (const auto& w : v.objects_) v.push(w);
    return v;
}

std::size_t Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

// ---- params -----------------------------------------------------------------

void WorldParams::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("WorldParams: " + m); };
    if (min_nodes == 0 || max_nodes < min_nodes) fail("need 0 < min_nodes <= max_nodes");
    if (room_vocab == 0 || landmark_vocab == 0 || object_vocab == 0) fail("vocabulary sizes must be positive");
    if (objects_max < objects_min) fail("objects_max < objects_min");
    if (n_views == 0) fail("n_views must be positive");
    if (d_v < 4) fail("d_v must be at least 4");
    if (!(spacing > 0.0)) fail("spacing must be positive");
    if (jitter < 0.0 || jitter >= spacing / 2) fail("jitter must lie in [0, spacing/2)");
    if (edge_keep <= 0.0 || edge_keep > 1.0) fail("edge_keep must lie in (0, 1]");
    if (ambiguity < 0.0 || ambiguity > 1.0) fail("ambiguity must lie in [0, 1]");
    if (rgb_noise < 0.0 || rgb_noise >= 1.0) fail("rgb_noise must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const WorldParams& p) {
    j = {{"min_nodes", p.min_nodes},       {"max_nodes", p.max_nodes},   {"room_vocab", p.room_vocab},
         {"landmark_vocab", p.landmark_vocab}, {"object_vocab", p.object_vocab}, {"objects_min", p.objects_min},
         {"objects_max", p.objects_max},   {"n_views", p.n_views},       {"d_v", p.d_v},
         {"spacing", p.spacing},           {"jitter", p.jitter},         {"edge_keep", p.edge_keep},
         {"diagonal_prob", p.diagonal_prob}, {"ambiguity", p.ambiguity}, {"rgb_noise", p.rgb_noise},
         {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, WorldParams& p) {
    WorldParams d;
    p.min_nodes = j.value("min_nodes", d.min_nodes);
    p.max_nodes = j.value("max_nodes", d.max_nodes);
    p.room_vocab = j.value("room_vocab", d.room_vocab);
    p.landmark_vocab = j.value("landmark_vocab", d.landmark_vocab);
    p.object_vocab = j.value("object_vocab", d.object_vocab);
    p.objects_min = j.value("objects_min", d.objects_min);
    p.objects_max = j.value("objects_max", d.objects_max);
    p.n_views = j.value("n_views", d.n_views);
    p.d_v = j.value("d_v", d.d_v);
    p.spacing = j.value("spacing", d.spacing);
    p.jitter = j.value("jitter", d.jitter);
    p.edge_keep = j.value("edge_keep", d.edge_keep);
    p.diagonal_prob = j.value("diagonal_prob", d.diagonal_prob);
    p.ambiguity = j.value("ambiguity", d.ambiguity);
    p.rgb_noise = j.value("rgb_noise", d.rgb_noise);
    p.seed = j.value("seed", d.seed);
}

// ---- shortest paths -----------------------------------------------------------

DistanceTable all_pairs_shortest(std::size_t n, const std::vector<WeightedEdge>& edges) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    DistanceTable t;
    t.n = n;
    t.dist.assign(n * n, inf);
    t.next.assign(n * n, kStop);
    for (std::size_t i = 0; i < n; ++i) t.dist[i * n + i] = 0.0;
    for (const auto& e : edges) {
        if (e.length < t.dist[e.a * n + e.b]) {
            t.dist[e.a * n + e.b] = t.dist[e.b * n + e.a] = e.length;
            t.next[e.a * n + e.b] = e.b;
            t.next[e.b * n + e.a] = e.a;
        }
    }
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i) {
            const double dik = t.dist[i * n + k];
            if (dik == inf) continue;
            for (std::size_t j = 0; j < n; ++j) {
                const double cand = dik + t.dist[k * n + j];
                if (cand < t.dist[i * n + j]) {
                    t.dist[i * n + j] = cand;
                    t.next[i * n + j] = t.next[i * n + k];
                }
            }
        }
    return t;
}

// ---- graph ------------------------------------------------------------------

NavGraph::NavGraph(std::vector<GraphNode> nodes, std::vector<std::pair<NodeId, NodeId>> edges)
    : nodes_(std::move(nodes)), adjacency_(nodes_.size()) {
    std::vector<WeightedEdge> weighted;
    for (auto [a, b] : edges) {
        if (a >= nodes_.size() || b >= nodes_.size() || a == b)
            throw std::invalid_argument(fmt::format("NavGraph: invalid edge ({}, {})", a, b));
        if (a > b) std::swap(a, b);
        if (std::find(adjacency_[a].begin(), adjacency_[a].end(), b) != adjacency_[a].end()) continue;
        edges_.emplace_back(a, b);
        adjacency_[a].push_back(b);
        adjacency_[b].push_back(a);
        const double len = euclidean(a, b);
        if (!(len > 0.0)) throw std::invalid_argument(fmt::format("NavGraph: edge ({}, {}) has zero length", a, b));
        weighted.push_back({a, b, len});
    }
    for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
    table_ = all_pairs_shortest(nodes_.size(), weighted);
}

bool NavGraph::adjacent(NodeId a, NodeId b) const {
    const auto& adj = adjacency_.at(a);
    return std::binary_search(adj.begin(), adj.end(), b);
}

double NavGraph::euclidean(NodeId a, NodeId b) const {
    const Vec3& p = nodes_.at(a).pos;
    const Vec3& q = nodes_.at(b).pos;
    return std::sqrt((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) + (p.z - q.z) * (p.z - q.z));
}

std::vector<NodeId> NavGraph::shortest_path(NodeId from, NodeId to) const {
    std::vector<NodeId> path{from};
    NodeId cur = from;
    while (cur != to) {
        NodeId nxt = table_.next[cur * table_.n + to];
        if (nxt == kStop) throw std::runtime_error(fmt::format("no path from {} to {}", from, to));
        path.push_back(nxt);
        cur = nxt;
    }
    return path;
}

bool NavGraph::connected() const {
    for (std::size_t j = 0; j < size(); ++j)
        if (std::isinf(table_.at(0, j))) return false;
    return true;
}

// ---- geometry -----------------------------------------------------------------

std::size_t facing_view(const Vec3& from, const Vec3& to, std::size_t n_views) {
    const double two_pi = 2.0 * std::numbers::pi;
    double bearing = std::atan2(to.y - from.y, to.x - from.x);
    if (bearing < 0) bearing += two_pi;
    const double width = two_pi / double(n_views);
    auto idx = static_cast<std::size_t>(std::floor((bearing + width / 2.0) / width));
    return idx % n_views;
}

std::vector<double> depth_feature(const std::vector<Vec3>& offsets, std::size_t heading, std::size_t n_views,
                                  std::size_t d_v) {
    constexpr double kWall = 1.0;
    const Vec3 origin{};
    std::vector<double> range(n_views, kWall);
    std::vector<bool> open(n_views, false);
    for (const auto& o : offsets) {
        const std::size_t s = facing_view(origin, o, n_views);
        const double r = std::sqrt(o.x * o.x + o.y * o.y + o.z * o.z);
        if (!open[s] || r < range[s]) range[s] = r;
        open[s] = true;
    }
    const std::size_t prev = (heading + n_views - 1) % n_views;
    const std::size_t next = (heading + 1) % n_views;
    const double theta = 2.0 * std::numbers::pi * double(heading) / double(n_views);

    std::vector<double> raw;
    raw.push_back(open[heading] ? 1.0 : 0.0);
    raw.push_back(range[heading] / 6.0);
    raw.push_back(std::cos(theta));
    raw.push_back(std::sin(theta));
    raw.push_back(double(offsets.size()) / double(n_views));
    for (int k = 0; k < 12; ++k) raw.push_back(rbf(range[heading], 0.5 + 0.5 * k, 0.5));
    for (int k = 0; k < 6; ++k) raw.push_back(rbf(range[prev], 0.5 + 1.0 * k, 1.0));
    for (int k = 0; k < 6; ++k) raw.push_back(rbf(range[next], 0.5 + 1.0 * k, 1.0));
    raw.resize(d_v, 0.0);
    normalize(raw);
    return raw;
}

// ---- generation -----------------------------------------------------------------

namespace {

// Panoramas for a finished graph: objects, view tokens and features.
World assemble_world(const WorldParams& p, NavGraph graph, Rng& rng) {
    const Vocabulary vocab = p.vocabulary();
    const std::size_t n = graph.size();
    World world;
    world.params = p;
    world.panoramas.resize(n);
    std::size_t next_object = 0;
    for (NodeId u = 0; u < n; ++u) {
        Panorama& pano = world.panoramas[u];
        pano.views.resize(p.n_views);
        const auto obj_count =
            static_cast<std::size_t>(rng.between(std::int64_t(p.objects_min), std::int64_t(p.objects_max)));
        for (std::size_t k = 0; k < obj_count; ++k) {
            ObjectAnnotation obj;
            obj.object_id = next_object++;
            obj.token = vocab.objects()[rng.below(vocab.objects().size())];
            const double w = rng.uniform(0.1, 0.4);
            const double h = rng.uniform(0.1, 0.4);
            obj.box.x0 = rng.uniform(0.0, 1.0 - w);
            obj.box.y0 = rng.uniform(0.0, 1.0 - h);
            obj.box.x1 = obj.box.x0 + w;
            obj.box.y1 = obj.box.y0 + h;
            pano.views[rng.below(p.n_views)].objects.push_back(obj);
        }
        std::vector<Vec3> offsets;
        for (NodeId v : graph.neighbors(u)) {
            const Vec3& a = graph.node(u).pos;
            const Vec3& b = graph.node(v).pos;
            offsets.push_back({b.x - a.x, b.y - a.y, b.z - a.z});
        }
        for (std::size_t h = 0; h < p.n_views; ++h) {
            View& view = pano.views[h];
            view.heading = h;
            for (NodeId v : graph.neighbors(u)) {
                if (facing_view(graph.node(u).pos, graph.node(v).pos, p.n_views) != h) continue;
                view.landmark_tokens.push_back(graph.node(v).room);
                view.landmark_tokens.push_back(graph.node(v).landmark);
            }
            if (view.landmark_tokens.empty()) view.landmark_tokens = {graph.node(u).room, graph.node(u).landmark};
            std::vector<std::string> visible = view.landmark_tokens;
            for (const auto& o : view.objects) visible.push_back(o.token);
            view.rgb = rgb_feature(p, u, h, visible);
            view.depth = depth_feature(offsets, h, p.n_views, p.d_v);
        }
    }
    world.graph = std::move(graph);
    return world;
}

}  // namespace

World world_from_graph(const WorldParams& params, NavGraph graph) {
    params.validate();
    Rng rng(derive(params.seed, {tag("panoramas")}));
    return assemble_world(params, std::move(graph), rng);
}

World generate_world(const WorldParams& p) {
    p.validate();
    constexpr int kMaxAttempts = 64;
    Rng rng(derive(p.seed, {tag("world")}));

    std::vector<GraphNode> nodes;
    std::vector<std::pair<NodeId, NodeId>> edges;
    std::vector<std::pair<int, int>> cells;
    NavGraph graph;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
        const auto count = static_cast<std::size_t>(rng.between(std::int64_t(p.min_nodes), std::int64_t(p.max_nodes)));
        cells.assign(1, {0, 0});
        std::map<std::pair<int, int>, NodeId> occupied{{{0, 0}, 0}};
        static constexpr std::array<std::pair<int, int>, 4> kDirs{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
        while (cells.size() < count) {
            auto base = cells[rng.below(cells.size())];
            auto dir = kDirs[rng.below(4)];
            std::pair<int, int> c{base.first + dir.first, base.second + dir.second};
            if (occupied.count(c) != 0) continue;
            occupied.emplace(c, cells.size());
            cells.push_back(c);
        }
        nodes.clear();
        for (std::size_t i = 0; i < cells.size(); ++i) {
            GraphNode g;
            g.id = i;
            g.pos = {cells[i].first * p.spacing + rng.uniform(-p.jitter, p.jitter),
                     cells[i].second * p.spacing + rng.uniform(-p.jitter, p.jitter), 0.0};
            nodes.push_back(g);
        }
        edges.clear();
        static constexpr std::array<std::pair<int, int>, 4> kForward{{{1, 0}, {0, 1}, {1, 1}, {1, -1}}};
        for (std::size_t i = 0; i < cells.size(); ++i) {
            for (std::size_t d = 0; d < kForward.size(); ++d) {
                std::pair<int, int> c{cells[i].first + kForward[d].first, cells[i].second + kForward[d].second};
                auto it = occupied.find(c);
                if (it == occupied.end()) continue;
                const double prob = d < 2 ? p.edge_keep : p.diagonal_prob;
                if (rng.bernoulli(prob)) edges.emplace_back(i, it->second);
            }
        }
        graph = NavGraph(nodes, edges);
        ok = graph.connected();
    }
    if (!ok) throw std::runtime_error(fmt::format("generate_world: no connected layout after {} attempts (seed {})",
                                                  kMaxAttempts, p.seed));

    const Vocabulary vocab = p.vocabulary();
    const std::size_t n = nodes.size();

    // Rooms: breadth-first clusters of two to four viewpoints.
    std::vector<std::size_t> room_of(n, kStop);
    std::vector<std::vector<NodeId>> rooms;
    std::vector<NodeId> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(order, rng);
    for (NodeId seed_node : order) {
        if (room_of[seed_node] != kStop) continue;
        const auto target = static_cast<std::size_t>(rng.between(2, 4));
        std::vector<NodeId> members;
        std::queue<NodeId> q;
        q.push(seed_node);
        room_of[seed_node] = rooms.size();
        while (!q.empty() && members.size() < target) {
            NodeId u = q.front();
            q.pop();
            members.push_back(u);
            for (NodeId v : graph.neighbors(u)) {
                if (room_of[v] != kStop || members.size() + q.size() >= target) continue;
                room_of[v] = rooms.size();
                q.push(v);
            }
        }
        while (!q.empty()) {  // claimed but not expanded
            members.push_back(q.front());
            q.pop();
        }
        rooms.push_back(members);
    }
    std::vector<std::string> room_label(rooms.size());
    for (auto& l : room_label) l = vocab.rooms()[rng.below(vocab.rooms().size())];

    // Landmarks: disjoint slices of the shuffled vocabulary per room.
    std::vector<std::string> pool = vocab.landmarks();
    shuffle(pool, rng);
    std::vector<std::string> landmark(n);
    std::size_t cursor = 0;
    for (const auto& members : rooms)
        for (NodeId u : members) landmark[u] = pool[cursor++ % pool.size()];
    if (p.ambiguity > 0.0 && rooms.size() > 1) {
        const std::vector<std::string> original = landmark;
        for (NodeId u = 0; u < n; ++u) {
            if (!rng.bernoulli(p.ambiguity)) continue;
            NodeId v = u;
            while (room_of[v] == room_of[u]) v = rng.below(n);
            landmark[u] = original[v];
        }
    }
    for (NodeId u = 0; u < n; ++u) {
        nodes[u].room = room_label[room_of[u]];
        nodes[u].landmark = landmark[u];
    }
    graph = NavGraph(nodes, graph.edges());

    return assemble_world(p, std::move(graph), rng);
}

// ---- observation ------------------------------------------------------------------

Observation observe(const World& world, NodeId node) {
    if (node >= world.graph.size()) throw std::out_of_range(fmt::format("observe: node {} not in world", node));
    Observation obs;
    obs.node = node;
    obs.panorama = &world.panoramas[node];
    obs.candidates.push_back({kStop, 0});
    for (NodeId v : world.graph.neighbors(node))
        obs.candidates.push_back({v, facing_view(world.graph.node(node).pos, world.graph.node(v).pos, world.n_views())});
    return obs;
}

// ---- episodes -----------------------------------------------------------------------

std::string to_string(EpisodeMode m) { return m == EpisodeMode::FineGrained ? "fine_grained" : "goal_oriented"; }

EpisodeMode episode_mode_from_string(const std::string& s) {
    if (s == "fine_grained") return EpisodeMode::FineGrained;
    if (s == "goal_oriented") return EpisodeMode::GoalOriented;
    throw std::invalid_argument("unknown episode mode '" + s + "'");
}

const ObjectAnnotation* find_object(const World& world, NodeId node, std::size_t object_id) {
    for (const auto& v : world.panoramas.at(node).views)
        for (const auto& o : v.objects)
            if (o.object_id == object_id) return &o;
    return nullptr;
}

std::vector<std::string> instruction_for(const World& world, const std::vector<NodeId>& path, EpisodeMode mode,
                                         const std::optional<std::size_t>& target_object) {
    const NodeId goal = path.back();
    std::vector<std::string> tokens;
    if (mode == EpisodeMode::FineGrained) {
        for (std::size_t i = 1; i + 1 < path.size(); ++i) {
            tokens.push_back("past");
            tokens.push_back(world.graph.node(path[i]).landmark);
        }
        tokens.insert(tokens.end(), {"stop", "at", world.graph.node(goal).landmark});
        return tokens;
    }
    const ObjectAnnotation* obj = target_object ? find_object(world, goal, *target_object) : nullptr;
    if (obj != nullptr) return {"find", "the", obj->token, "in", "the", world.graph.node(goal).room};
    return {"go", "to", "the", world.graph.node(goal).room};
}

Episode make_episode_between(const World& world, NodeId start, NodeId goal, EpisodeMode mode, std::string id,
                             std::uint64_t seed) {
    Episode e;
    e.episode_id = std::move(id);
    e.world_seed = world.params.seed;
    e.mode = mode;
    e.start = start;
    e.goal = goal;
    e.gt_path = world.graph.shortest_path(start, goal);
    if (mode == EpisodeMode::GoalOriented) {
        std::vector<std::size_t> ids;
        for (const auto& v : world.panoramas.at(goal).views)
            for (const auto& o : v.objects) ids.push_back(o.object_id);
        std::sort(ids.begin(), ids.end());
        if (!ids.empty()) {
            Rng rng(derive(world.params.seed, {tag("target"), seed}));
            e.target_object_id = ids[rng.below(ids.size())];
        }
    }
    e.instruction_tokens = instruction_for(world, e.gt_path, mode, e.target_object_id);
    return e;
}

Episode make_episode(const World& world, std::uint64_t seed, EpisodeMode mode, const EpisodeOptions& opts) {
    const std::size_t n = world.graph.size();
    if (n < 2) throw std::invalid_argument("make_episode: world needs at least 2 nodes");
    std::vector<std::pair<NodeId, NodeId>> pairs, fallback;
    for (NodeId s = 0; s < n; ++s)
        for (NodeId g = 0; g < n; ++g) {
            if (s == g) continue;
            const std::size_t hops = world.graph.shortest_path(s, g).size() - 1;
            fallback.emplace_back(s, g);
            if (hops >= opts.min_hops && hops <= opts.max_hops) pairs.emplace_back(s, g);
        }
    const auto& pick_from = pairs.empty() ? fallback : pairs;
    Rng rng(derive(world.params.seed, {tag("episode"), seed}));
    auto [s, g] = pick_from[rng.below(pick_from.size())];
    return make_episode_between(world, s, g, mode, fmt::format("w{}-e{}", world.params.seed, seed), seed);
}

// ---- serialization ------------------------------------------------------------------

nlohmann::json world_to_json(const World& world) {
    using nlohmann::json;
    json nodes = json::array();
    for (const auto& n : world.graph.nodes())
        nodes.push_back({{"id", n.id}, {"pos", {n.pos.x, n.pos.y, n.pos.z}}, {"room", n.room}, {"landmark", n.landmark}});
    json edges = json::array();
    for (auto [a, b] : world.graph.edges()) edges.push_back({a, b});
    json panos = json::object();
    for (NodeId u = 0; u < world.panoramas.size(); ++u) {
        json views = json::array();
        for (const auto& v : world.panoramas[u].views) {
            json objs = json::array();
            for (const auto& o : v.objects)
                objs.push_back({{"object_id", o.object_id},
                                {"token", o.token},
                                {"box", {o.box.x0, o.box.y0, o.box.x1, o.box.y1}}});
            views.push_back({{"heading", v.heading},
                             {"landmarks", v.landmark_tokens},
                             {"objects", objs},
                             {"rgb", v.rgb},
                             {"depth", v.depth}});
        }
        panos[std::to_string(u)] = views;
    }
    return {{"format", "susa-world"}, {"version", 1}, {"params", world.params},
            {"nodes", nodes},         {"edges", edges}, {"panoramas", panos}};
}

World world_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "susa-world") throw std::runtime_error("world file: missing or wrong 'format' tag");
    if (j.value("version", 0) != 1) throw std::runtime_error("world file: unsupported version");
    World w;
    w.params = j.at("params").get<WorldParams>();
    std::vector<GraphNode> nodes;
    for (const auto& jn : j.at("nodes")) {
        GraphNode g;
        g.id = jn.at("id").get<NodeId>();
        if (g.id != nodes.size()) throw std::runtime_error("world file: node ids must be 0..n-1 in order");
        const auto& pos = jn.at("pos");
        g.pos = {pos.at(0).get<double>(), pos.at(1).get<double>(), pos.at(2).get<double>()};
        g.room = jn.at("room").get<std::string>();
        g.landmark = jn.value("landmark", std::string{});
        nodes.push_back(std::move(g));
    }
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (const auto& je : j.at("edges")) edges.emplace_back(je.at(0).get<NodeId>(), je.at(1).get<NodeId>());
    const std::size_t n = nodes.size();
    w.graph = NavGraph(std::move(nodes), std::move(edges));
    w.panoramas.resize(n);
    for (NodeId u = 0; u < n; ++u) {
        for (const auto& jv : j.at("panoramas").at(std::to_string(u))) {
            View v;
            v.heading = jv.at("heading").get<std::size_t>();
            v.landmark_tokens = jv.at("landmarks").get<std::vector<std::string>>();
            for (const auto& jo : jv.at("objects")) {
                ObjectAnnotation o;
                o.object_id = jo.at("object_id").get<std::size_t>();
                o.token = jo.at("token").get<std::string>();
                const auto& b = jo.at("box");
                o.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
                v.objects.push_back(std::move(o));
            }
            v.rgb = jv.at("rgb").get<std::vector<double>>();
            v.depth = jv.at("depth").get<std::vector<double>>();
            w.panoramas[u].views.push_back(std::move(v));
        }
    }
    return w;
}

nlohmann::json episode_to_json(const Episode& e) {
    nlohmann::json j = {{"episode_id", e.episode_id},
                        {"world_seed", e.world_seed},
                        {"mode", to_string(e.mode)},
                        {"instruction", e.instruction_tokens},
                        {"start", e.start},
                        {"goal", e.goal},
                        {"gt_path", e.gt_path}};
    j["target_object_id"] = e.target_object_id ? nlohmann::json(*e.target_object_id) : nlohmann::json(nullptr);
    return j;
}

Episode episode_from_json(const nlohmann::json& j) {
    Episode e;
    e.episode_id = j.at("episode_id").get<std::string>();
    e.world_seed = j.at("world_seed").get<std::uint64_t>();
    e.mode = episode_mode_from_string(j.at("mode").get<std::string>());
    e.instruction_tokens = j.at("instruction").get<std::vector<std::string>>();
    e.start = j.at("start").get<NodeId>();
    e.goal = j.at("goal").get<NodeId>();
    e.gt_path = j.at("gt_path").get<std::vector<NodeId>>();
    if (j.contains("target_object_id") && !j.at("target_object_id").is_null())
        e.target_object_id = j.at("target_object_id").get<std::size_t>();
    return e;
}

void save_world(const World& world, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write world file '" + path + "'");
    out << world_to_json(world).dump() << '\n';
}

World load_world(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read world file '" + path + "'");
    return world_from_json(nlohmann::json::parse(in));
}

void save_episodes(const std::vector<Episode>& episodes, const std::string& path, const nlohmann::json& header) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write episode file '" + path + "'");
    if (!header.is_null()) out << nlohmann::json{{"header", header}}.dump() << '\n';
    for (const auto& e : episodes) out << episode_to_json(e).dump() << '\n';
}

std::vector<Episode> load_episodes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read episode file '" + path + "'");
    std::vector<Episode> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        if (j.contains("header")) continue;
        out.push_back(episode_from_json(j));
    }
    return out;
}

nlohmann::json load_episode_header(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read episode file '" + path + "'");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        return j.contains("header") ? j.at("header") : nlohmann::json(nullptr);
    }
    return nullptr;
}

}  // namespace susa
