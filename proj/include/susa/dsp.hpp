#pragma once

// Depth-aware spatial perception: per-episode exploration maps for the depth
// and RGB modalities, and the cross-modal map encoder whose self-attention
// carries a learned bias over bucketized geodesic distances.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "susa/model_config.hpp"
#include "susa/nn.hpp"
#include "susa/world.hpp"

namespace susa::dsp {

enum class NodeStatus { Visited, Frontier };

// Map nodes in insertion order. Stream matrices built from the map put a
// stop token in row 0, so map node i sits in row i + 1.
class ExplorationMap {
public:
    // encoded_depth / encoded_rgb are n x d encodings of the panorama at
    // `current`. Re-applying the same update is a no-op on the features.
    void update(const World& world, NodeId current, std::size_t step, const Tensor& encoded_depth,
                const Tensor& encoded_rgb);

    std::size_t size() const { return nodes_.size(); }
    const std::vector<NodeId>& nodes() const { return nodes_; }
    NodeStatus status(std::size_t i) const { return entries_.at(nodes_.at(i)).status; }
    std::optional<std::size_t> visit_step(std::size_t i) const { return entries_.at(nodes_.at(i)).visit_step; }
    std::optional<std::size_t> index_of(NodeId node) const;
    bool contains(NodeId node) const { return entries_.count(node) != 0; }

    // k x d per-modality node features.
    Tensor depth_features() const;
    Tensor rgb_features() const;

    // (k+1) x (k+1) geodesic distances; the stop token (row/column 0) sits at
    // the current node.
    std::vector<double> distances(const NavGraph& graph, NodeId current) const;

    nlohmann::json snapshot() const;

private:
    struct Entry {
        NodeStatus status = NodeStatus::Frontier;
        std::optional<std::size_t> visit_step;
        Tensor depth, rgb;  // 1 x d
        // Frontier observations keyed by observer node: facing-view rows.
        std::map<NodeId, std::pair<Tensor, Tensor>> seen_from;
    };
    void refresh_frontier(Entry& e);

    std::vector<NodeId> nodes_;
    std::map<NodeId, Entry> entries_;
};

// Bucket index per entry; bucket b covers [edges[b], edges[b+1]).
std::vector<std::size_t> bucketize(const std::vector<double>& dist, const std::vector<double>& edges);

// k x k additive attention bias gathered from a 1 x B table.
Tensor distance_bias(const Tensor& table, const std::vector<std::size_t>& buckets, std::size_t k);

// One graph-aware self-attention sublayer: LN(x + softmax(q k^T + bias) v).
Tensor gasa_layer(const Tensor& x, const nn::Attention& attn, const nn::LayerNorm& ln, const Tensor& bias);

class CrossEncoder {
public:
    CrossEncoder() = default;
    // use_distance = false gives plain self-attention (no bias table).
    CrossEncoder(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg, bool use_distance);

    std::vector<nn::Attention::KV> prepare(const Tensor& instruction) const;
    // buckets is (k x k) row-major and must be empty iff use_distance is false.
    Tensor operator()(const Tensor& x, const std::vector<nn::Attention::KV>& context,
                      const std::vector<std::size_t>& buckets = {}) const;

    std::size_t layer_count() const { return layers_.size(); }
    const Tensor& bias_table(std::size_t layer) const { return bias_.at(layer); }

private:
    std::vector<nn::CrossLayer> layers_;
    std::vector<Tensor> bias_;
    bool use_distance_ = false;
};

}  // namespace susa::dsp
