#include "susa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <stdexcept>

namespace susa::metrics {

NdtwNorm ndtw_norm_from_string(const std::string& s) {
    if (s == "path") return NdtwNorm::Path;
    if (s == "reference") return NdtwNorm::Reference;
    throw std::invalid_argument("metrics.ndtw_norm must be 'path' or 'reference', got '" + s + "'");
}

std::string to_string(NdtwNorm n) { return n == NdtwNorm::Path ? "path" : "reference"; }

double iou(const Box& a, const Box& b) {
    if (!(a.area() > 0.0) || !(b.area() > 0.0)) throw std::invalid_argument("iou: zero-area box");
    const double w = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
    const double h = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
    const double inter = w * h;
    return inter / (a.area() + b.area() - inter);
}

double dtw_cost(const std::vector<NodeId>& p, const std::vector<NodeId>& g, const NavGraph& graph) {
    if (p.empty() || g.empty()) throw std::invalid_argument("dtw: empty path");
    constexpr double inf = std::numeric_limits<double>::infinity();
    const std::size_t n = p.size(), m = g.size();
    std::vector<double> c((n + 1) * (m + 1), inf);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return c[i * (m + 1) + j]; };
    at(0, 0) = 0.0;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            at(i, j) = graph.geodesic(p[i - 1], g[j - 1]) + std::min({at(i - 1, j), at(i, j - 1), at(i - 1, j - 1)});
    return at(n, m);
}

double ndtw(const std::vector<NodeId>& p, const std::vector<NodeId>& g, const NavGraph& graph, const Options& opts) {
    const double len = double(opts.ndtw_norm == NdtwNorm::Path ? p.size() : g.size());
    return std::exp(-dtw_cost(p, g, graph) / (len * opts.d_th));
}

void check_path(const std::vector<NodeId>& p, const NavGraph& graph) {
    if (p.empty()) throw std::invalid_argument("trajectory is empty");
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] >= graph.size()) throw std::invalid_argument(fmt::format("trajectory step {}: node {} not in graph", i, p[i]));
        if (i > 0 && p[i] != p[i - 1] && !graph.adjacent(p[i - 1], p[i]))
            throw std::invalid_argument(fmt::format("trajectory step {}: jump from {} to {}", i, p[i - 1], p[i]));
    }
}

MetricSet compute_all(const std::vector<NodeId>& path, const Episode& episode, const NavGraph& graph,
                      const std::optional<Grounding>& grounding, const Options& opts) {
    check_path(path, graph);
    const NodeId goal = episode.gt_path.empty() ? episode.goal : episode.gt_path.back();
    MetricSet m;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) m.tl += graph.geodesic(path[i], path[i + 1]);
    m.ne = graph.geodesic(path.back(), goal);
    m.one = std::numeric_limits<double>::infinity();
    for (NodeId u : path) m.one = std::min(m.one, graph.geodesic(u, goal));
    m.sr = m.ne <= opts.d_th ? 1.0 : 0.0;
    m.osr = m.one <= opts.d_th ? 1.0 : 0.0;
    const double shortest = graph.geodesic(path.front(), goal);
    const double denom = std::max(m.tl, shortest);
    const double efficiency = denom > 0.0 ? shortest / denom : 1.0;
    m.spl = m.sr * efficiency;
    m.ndtw = ndtw(path, episode.gt_path.empty() ? std::vector<NodeId>{goal} : episode.gt_path, graph, opts);
    m.sdtw = m.sr * m.ndtw;
    if (grounding) {
        double best = 0.0;
        if (grounding->predicted)
            for (const auto& b : grounding->reference) best = std::max(best, iou(*grounding->predicted, b));
        m.rgs = best >= 0.5 ? 1.0 : 0.0;
        m.rgspl = *m.rgs * efficiency;
    }
    return m;
}

std::vector<Box> reference_boxes(const World& world, const Episode& episode) {
    std::vector<Box> out;
    if (!episode.target_object_id) return out;
    for (const auto& v : world.panoramas.at(episode.goal).views)
        for (const auto& o : v.objects)
            if (o.object_id == *episode.target_object_id) out.push_back(o.box);
    return out;
}

Summary aggregate(const std::vector<Record>& records) {
    if (records.empty()) throw std::invalid_argument("aggregate: no records");
    Summary s;
    s.count = records.size();
    double rgs = 0, rgspl = 0;
    std::size_t grounded = 0;
    for (const auto& r : records) {
        s.tl += r.m.tl;
        s.ne += r.m.ne;
        s.one += r.m.one;
        s.sr += r.m.sr;
        s.osr += r.m.osr;
        s.spl += r.m.spl;
        s.ndtw += r.m.ndtw;
        s.sdtw += r.m.sdtw;
        if (r.m.rgs) {
            rgs += *r.m.rgs;
            rgspl += r.m.rgspl.value_or(0.0);
            ++grounded;
        }
    }
    const double n = double(records.size());
    s.tl /= n;
    s.ne /= n;
    s.one /= n;
    s.sr = 100.0 * s.sr / n;
    s.osr = 100.0 * s.osr / n;
    s.spl /= n;
    s.ndtw /= n;
    s.sdtw /= n;
    if (grounded > 0) {
        s.rgs = 100.0 * rgs / double(grounded);
        s.rgspl = 100.0 * rgspl / double(grounded);
    }
    return s;
}

namespace {
std::string num(double v) { return fmt::format("{:.10g}", v); }
std::string opt(const std::optional<double>& v) { return v ? num(*v) : std::string{}; }
}  // namespace

std::string to_csv(const std::vector<Record>& records, const std::vector<std::string>& preamble) {
    std::string out;
    for (const auto& line : preamble) out += "# " + line + "\n";
    out += "episode_id,mode,TL,NE,ONE,SR,OSR,SPL,nDTW,sDTW,RGS,RGSPL\n";
    for (const auto& r : records) {
        const auto& m = r.m;
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", r.episode_id, r.mode, num(m.tl), num(m.ne),
                           num(m.one), num(m.sr), num(m.osr), num(m.spl), num(m.ndtw), num(m.sdtw), opt(m.rgs),
                           opt(m.rgspl));
    }
    if (!records.empty()) {
        const Summary s = aggregate(records);
        // The summary row keeps per-episode units (fractions, not percent).
        out += fmt::format("mean,,{},{},{},{},{},{},{},{},{},{}\n", num(s.tl), num(s.ne), num(s.one), num(s.sr / 100.0),
                           num(s.osr / 100.0), num(s.spl), num(s.ndtw), num(s.sdtw),
                           s.rgs ? num(*s.rgs / 100.0) : std::string{}, s.rgspl ? num(*s.rgspl / 100.0) : std::string{});
    }
    return out;
}

nlohmann::ordered_json summary_json(const Summary& s) {
    auto o = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    j["TL"] = s.tl;
    j["NE"] = s.ne;
    j["OSR"] = s.osr;
    j["SR"] = s.sr;
    j["SPL"] = 100.0 * s.spl;
    j["nDTW"] = 100.0 * s.ndtw;
    j["sDTW"] = 100.0 * s.sdtw;
    j["RGS"] = o(s.rgs);
    j["RGSPL"] = o(s.rgspl);
    j["ONE"] = s.one;
    j["episodes"] = s.count;
    return j;
}

}  // namespace susa::metrics
