#pragma once

// Procedural navigation worlds: graph, panoramic observations, episodes.
//
// A world is a connected undirected graph of viewpoints laid out on a
// jittered lattice. Each viewpoint carries a ring of `n_views` views; the view
// whose angular sector contains the bearing to a neighbour "faces" that
// neighbour and shows the neighbour's room and landmark. Other views show the
// viewpoint's own room and landmark.
//
// File formats
//   world:    {"format": "susa-world", "version": 1, "params": {...},
//              "nodes": [{"id", "pos": [x, y, z], "room", "landmark"}],
//              "edges": [[i, j], ...],
//              "panoramas": {"<node>": [{"heading", "landmarks": [...],
//                            "objects": [{"object_id", "token", "box"}],
//                            "rgb": [...], "depth": [...]}]}}
//   episodes: JSON lines, one `episode_to_json` object per line.

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace susa {

using NodeId = std::size_t;
inline constexpr NodeId kStop = std::numeric_limits<NodeId>::max();

class Vocabulary {
public:
    static constexpr std::size_t kUnk = 0;
    static constexpr std::size_t kPad = 1;

    static Vocabulary standard(std::size_t rooms, std::size_t landmarks, std::size_t objects);

    std::size_t size() const { return tokens_.size(); }
    // Unknown tokens map to kUnk.
    std::size_t id(const std::string& token) const;
    const std::string& token(std::size_t id) const { return tokens_.at(id); }

    const std::vector<std::string>& rooms() const { return rooms_; }
    const std::vector<std::string>& landmarks() const { return landmarks_; }
    const std::vector<std::string>& objects() const { return objects_; }

private:
    void push(const std::string& t);
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::string> rooms_, landmarks_, objects_;
};

struct WorldParams {
    std::size_t min_nodes = 15;
    std::size_t max_nodes = 30;
    std::size_t room_vocab = 10;
    std::size_t landmark_vocab = 48;
    std::size_t object_vocab = 16;
    std::size_t objects_min = 1;
    std::size_t objects_max = 3;
    std::size_t n_views = 8;
    std::size_t d_v = 32;
    double spacing = 2.0;          // lattice pitch, meters
    double jitter = 0.25;          // max positional jitter, meters
    double edge_keep = 0.8;        // probability a lattice-adjacent pair is connected
    double diagonal_prob = 0.15;   // probability a diagonal pair is connected
    double ambiguity = 0.0;        // probability a node borrows another room's landmark
    double rgb_noise = 0.6;        // weight of appearance noise in rgb features
    std::uint64_t seed = 0;

    void validate() const;
    Vocabulary vocabulary() const { return Vocabulary::standard(room_vocab, landmark_vocab, object_vocab); }
};
void to_json(nlohmann::json& j, const WorldParams& p);
void from_json(const nlohmann::json& j, WorldParams& p);

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

struct Box {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double area() const { return (x1 - x0) * (y1 - y0); }
};

struct ObjectAnnotation {
    std::size_t object_id = 0;
    std::string token;
    Box box;
};

struct View {
    std::size_t heading = 0;
    std::vector<std::string> landmark_tokens;
    std::vector<ObjectAnnotation> objects;
    std::vector<double> rgb;
    std::vector<double> depth;
};

struct Panorama {
    std::vector<View> views;
};

struct GraphNode {
    NodeId id = 0;
    Vec3 pos;
    std::string room;
    std::string landmark;
};

struct DistanceTable {
    std::size_t n = 0;
    std::vector<double> dist;     // n x n
    std::vector<NodeId> next;     // first hop on a shortest path, kStop when unreachable or i == j

    double at(NodeId i, NodeId j) const { return dist[i * n + j]; }
};

struct WeightedEdge {
    NodeId a, b;
    double length;
};

// Floyd-Warshall over an undirected weighted edge list. Unreachable pairs
// are +infinity. Ties keep the first-found path, which prefers lower
// intermediate node ids.
DistanceTable all_pairs_shortest(std::size_t node_count, const std::vector<WeightedEdge>& edges);

class NavGraph {
public:
    NavGraph() = default;
    NavGraph(std::vector<GraphNode> nodes, std::vector<std::pair<NodeId, NodeId>> edges);

    std::size_t size() const { return nodes_.size(); }
    const std::vector<GraphNode>& nodes() const { return nodes_; }
    const GraphNode& node(NodeId id) const { return nodes_.at(id); }
    const std::vector<std::pair<NodeId, NodeId>>& edges() const { return edges_; }
    const std::vector<NodeId>& neighbors(NodeId id) const { return adjacency_.at(id); }
    bool adjacent(NodeId a, NodeId b) const;
    double euclidean(NodeId a, NodeId b) const;
    double geodesic(NodeId a, NodeId b) const { return table_.at(a, b); }
    const DistanceTable& geodesic_table() const { return table_; }
    std::vector<NodeId> shortest_path(NodeId from, NodeId to) const;
    bool connected() const;

private:
    std::vector<GraphNode> nodes_;
    std::vector<std::pair<NodeId, NodeId>> edges_;
    std::vector<std::vector<NodeId>> adjacency_;
    DistanceTable table_;
};

struct World {
    WorldParams params;
    NavGraph graph;
    std::vector<Panorama> panoramas;

    std::size_t n_views() const { return params.n_views; }
};

// Deterministic in params; throws std::runtime_error when no connected
// layout is found within the retry bound.
World generate_world(const WorldParams& params);
// Panoramas and objects for a hand-built graph (rooms and landmarks taken
// from its nodes); deterministic in params.seed.
World world_from_graph(const WorldParams& params, NavGraph graph);

// View sector containing the bearing from `from` to `to`.
std::size_t facing_view(const Vec3& from, const Vec3& to, std::size_t n_views);

// Unit-normalized depth descriptor of one view; depends only on the offsets
// to the node's neighbours.
std::vector<double> depth_feature(const std::vector<Vec3>& neighbor_offsets, std::size_t heading, std::size_t n_views,
                                  std::size_t d_v);

struct Candidate {
    NodeId node = kStop;
    std::size_t view = 0;  // facing view; unused for the stop entry
};

struct Observation {
    NodeId node = 0;
    const Panorama* panorama = nullptr;
    std::vector<Candidate> candidates;  // [0] is stop, then neighbours by id
};

Observation observe(const World& world, NodeId node);

enum class EpisodeMode { FineGrained, GoalOriented };
std::string to_string(EpisodeMode m);
EpisodeMode episode_mode_from_string(const std::string& s);

struct Episode {
    std::string episode_id;
    std::uint64_t world_seed = 0;
    EpisodeMode mode = EpisodeMode::FineGrained;
    std::vector<std::string> instruction_tokens;
    NodeId start = 0;
    NodeId goal = 0;
    std::vector<NodeId> gt_path;
    std::optional<std::size_t> target_object_id;
};

struct EpisodeOptions {
    std::size_t min_hops = 2;
    std::size_t max_hops = 6;
};

Episode make_episode(const World& world, std::uint64_t seed, EpisodeMode mode, const EpisodeOptions& opts = {});
Episode make_episode_between(const World& world, NodeId start, NodeId goal, EpisodeMode mode, std::string id,
                             std::uint64_t seed = 0);
std::vector<std::string> instruction_for(const World& world, const std::vector<NodeId>& path, EpisodeMode mode,
                                         const std::optional<std::size_t>& target_object);
const ObjectAnnotation* find_object(const World& world, NodeId node, std::size_t object_id);

nlohmann::json world_to_json(const World& world);
World world_from_json(const nlohmann::json& j);
nlohmann::json episode_to_json(const Episode& e);
Episode episode_from_json(const nlohmann::json& j);

void save_world(const World& world, const std::string& path);
World load_world(const std::string& path);
// JSON lines; an optional first line {"header": {...}} carries provenance and
// is skipped by load_episodes.
void save_episodes(const std::vector<Episode>& episodes, const std::string& path,
                   const nlohmann::json& header = nullptr);
std::vector<Episode> load_episodes(const std::string& path);
// The header object, or null when the file has none.
nlohmann::json load_episode_header(const std::string& path);

}  // namespace susa
