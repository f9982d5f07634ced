#pragma once

// VLN evaluation metrics over geodesic graph distances.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "susa/world.hpp"

namespace susa::metrics {

enum class NdtwNorm { Path, Reference };
NdtwNorm ndtw_norm_from_string(const std::string& s);
std::string to_string(NdtwNorm n);

struct Options {
    double d_th = 3.0;
    NdtwNorm ndtw_norm = NdtwNorm::Path;
};

struct MetricSet {
    double tl = 0, ne = 0, one = 0;
    double sr = 0, osr = 0;
    double spl = 0, ndtw = 0, sdtw = 0;
    std::optional<double> rgs, rgspl;  // goal-oriented episodes only
};

// Grounding inputs for RGS: the predicted box (if any) and the reference
// boxes of the target object.
struct Grounding {
    std::optional<Box> predicted;
    std::vector<Box> reference;
};

double iou(const Box& a, const Box& b);

// min over monotone warpings of the summed geodesic cost, by dynamic programming.
double dtw_cost(const std::vector<NodeId>& p, const std::vector<NodeId>& g, const NavGraph& graph);
double ndtw(const std::vector<NodeId>& p, const std::vector<NodeId>& g, const NavGraph& graph,
            const Options& opts = {});

// Throws std::invalid_argument naming the first step that is neither a stay
// nor a move along an edge.
void check_path(const std::vector<NodeId>& p, const NavGraph& graph);

MetricSet compute_all(const std::vector<NodeId>& path, const Episode& episode, const NavGraph& graph,
                      const std::optional<Grounding>& grounding = std::nullopt, const Options& opts = {});

// Reference boxes of the episode's target object (empty when none).
std::vector<Box> reference_boxes(const World& world, const Episode& episode);

struct Record {
    std::string episode_id;
    std::string mode;
    MetricSet m;
};

// Arithmetic means; SR, OSR, RGS and RGSPL in percent. RGS/RGSPL average
// only over records that carry them.
struct Summary {
    std::size_t count = 0;
    double tl = 0, ne = 0, one = 0, sr = 0, osr = 0, spl = 0, ndtw = 0, sdtw = 0;
    std::optional<double> rgs, rgspl;
};
Summary aggregate(const std::vector<Record>& records);

// CSV with one row per record and a trailing "mean" row; `preamble` lines are
// written first, each prefixed with "# ".
std::string to_csv(const std::vector<Record>& records, const std::vector<std::string>& preamble = {});
nlohmann::ordered_json summary_json(const Summary& s);

}  // namespace susa::metrics
