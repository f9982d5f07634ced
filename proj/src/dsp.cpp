#include "susa/dsp.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <stdexcept>

namespace susa::dsp {

void ExplorationMap::update(const World& world, NodeId current, std::size_t step, const Tensor& encoded_depth,
                            const Tensor& encoded_rgb) {
    if (current >= world.graph.size())
        throw std::out_of_range(fmt::format("update_map: node {} not in world", current));
    if (encoded_depth.rows() != world.n_views() || encoded_rgb.rows() != world.n_views())
        throw ShapeError(fmt::format("update_map: expected {} encoded views, got {} and {}", world.n_views(),
                                     encoded_depth.rows(), encoded_rgb.rows()));
    auto touch = [&](NodeId id) -> Entry& {
        auto [it, inserted] = entries_.try_emplace(id);
        if (inserted) nodes_.push_back(id);
        return it->second;
    };
    Entry& cur = touch(current);
    cur.status = NodeStatus::Visited;
    if (!cur.visit_step) cur.visit_step = step;
    cur.depth = mean(encoded_depth, 0);
    cur.rgb = mean(encoded_rgb, 0);
    cur.seen_from.clear();

    const Vec3& here = world.graph.node(current).pos;
    for (NodeId v : world.graph.neighbors(current)) {
        if (auto it = entries_.find(v); it != entries_.end() && it->second.status == NodeStatus::Visited) continue;
        const std::size_t view[] = {facing_view(here, world.graph.node(v).pos, world.n_views())};
        Entry& e = touch(v);
        e.seen_from[current] = {select_rows(encoded_depth, view), select_rows(encoded_rgb, view)};
        refresh_frontier(e);
    }
}

void ExplorationMap::refresh_frontier(Entry& e) {
    if (e.seen_from.size() == 1) {
        e.depth = e.seen_from.begin()->second.first;
        e.rgb = e.seen_from.begin()->second.second;
        return;
    }
    std::vector<Tensor> d, r;
    for (const auto& [_, rows] : e.seen_from) {
        d.push_back(rows.first);
        r.push_back(rows.second);
    }
    e.depth = mean(concat(std::span<const Tensor>(d), 0), 0);
    e.rgb = mean(concat(std::span<const Tensor>(r), 0), 0);
}

std::optional<std::size_t> ExplorationMap::index_of(NodeId node) const {
    auto it = std::find(nodes_.begin(), nodes_.end(), node);
    if (it == nodes_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - nodes_.begin());
}

Tensor ExplorationMap::depth_features() const {
    std::vector<Tensor> rows;
    for (NodeId id : nodes_) rows.push_back(entries_.at(id).depth);
    return concat(std::span<const Tensor>(rows), 0);
}

Tensor ExplorationMap::rgb_features() const {
    std::vector<Tensor> rows;
    for (NodeId id : nodes_) rows.push_back(entries_.at(id).rgb);
    return concat(std::span<const Tensor>(rows), 0);
}

std::vector<double> ExplorationMap::distances(const NavGraph& graph, NodeId current) const {
    const std::size_t k = nodes_.size() + 1;
    std::vector<double> d(k * k, 0.0);
    for (std::size_t j = 1; j < k; ++j) d[j] = d[j * k] = graph.geodesic(current, nodes_[j - 1]);
    for (std::size_t i = 1; i < k; ++i)
        for (std::size_t j = 1; j < k; ++j) d[i * k + j] = graph.geodesic(nodes_[i - 1], nodes_[j - 1]);
    return d;
}

nlohmann::json ExplorationMap::snapshot() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (NodeId id : nodes_) {
        const Entry& e = entries_.at(id);
        nodes.push_back({{"id", id},
                         {"status", e.status == NodeStatus::Visited ? "visited" : "frontier"},
                         {"visit_step", e.visit_step ? nlohmann::json(*e.visit_step) : nlohmann::json(nullptr)}});
    }
    return nodes;
}

std::vector<std::size_t> bucketize(const std::vector<double>& dist, const std::vector<double>& edges) {
    std::vector<std::size_t> out(dist.size());
    for (std::size_t i = 0; i < dist.size(); ++i) {
        auto it = std::upper_bound(edges.begin(), edges.end(), dist[i]);
        out[i] = it == edges.begin() ? 0 : static_cast<std::size_t>(it - edges.begin()) - 1;
    }
    return out;
}

Tensor distance_bias(const Tensor& table, const std::vector<std::size_t>& buckets, std::size_t k) {
    if (buckets.size() != k * k) throw ShapeError(fmt::format("distance_bias: {} buckets for k = {}", buckets.size(), k));
    return take(table, buckets, {k, k});
}

Tensor gasa_layer(const Tensor& x, const nn::Attention& attn, const nn::LayerNorm& ln, const Tensor& bias) {
    return ln(add(x, attn.self(x, bias)));
}

CrossEncoder::CrossEncoder(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg, bool use_distance)
    : use_distance_(use_distance) {
    for (std::size_t i = 0; i < cfg.cross_layers; ++i) {
        const std::string p = fmt::format("{}.layer{}", prefix, i);
        layers_.emplace_back(ps, p, cfg.d, cfg.hidden, cfg.scaled_attention, true);
        if (use_distance) bias_.push_back(ps.add(p + ".distance_bias", {1, cfg.bucket_edges.size()}, Init::Zeros));
    }
}

std::vector<nn::Attention::KV> CrossEncoder::prepare(const Tensor& instruction) const {
    std::vector<nn::Attention::KV> out;
    for (const auto& l : layers_) out.push_back(l.cross_attn.keys(instruction));
    return out;
}

Tensor CrossEncoder::operator()(const Tensor& x, const std::vector<nn::Attention::KV>& context,
                                const std::vector<std::size_t>& buckets) const {
    if (use_distance_ == buckets.empty())
        throw std::invalid_argument("cross_encode: distance buckets required iff the encoder is graph-aware");
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        Tensor bias = use_distance_ ? distance_bias(bias_[i], buckets, x.rows()) : Tensor{};
        h = layers_[i](h, context.at(i), bias);
    }
    return h;
}

}  // namespace susa::dsp
