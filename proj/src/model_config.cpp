#include "susa/model_config.hpp"

#include <algorithm>
#include <stdexcept>

namespace susa {

void ModelConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("ModelConfig: " + m); };
    if (d == 0 || hidden == 0 || max_len == 0) fail("d, hidden and max_len must be positive");
    if (!(delta >= 0.0 && delta <= 1.0)) fail("delta must lie in [0, 1]");
    if (!(temperature > 0.0)) fail("temperature must be positive");
    if (bucket_edges.empty() || bucket_edges.front() != 0.0) fail("bucket_edges must start at 0");
    if (!std::is_sorted(bucket_edges.begin(), bucket_edges.end())) fail("bucket_edges must be increasing");
    if (max_steps == 0) fail("max_steps must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"d", c.d},
         {"hidden", c.hidden},
         {"max_len", c.max_len},
         {"instr_layers", c.instr_layers},
         {"pano_layers", c.pano_layers},
         {"tca_layers", c.tca_layers},
         {"cross_layers", c.cross_layers},
         {"scaled_attention", c.scaled_attention},
         {"modality_embedding", c.modality_embedding},
         {"status_embedding", c.status_embedding},
         {"delta", c.adaptive_delta ? nlohmann::json("adaptive") : nlohmann::json(c.delta)},
         {"normalize_beta", c.normalize_beta},
         {"temperature", c.temperature},
         {"bucket_edges", c.bucket_edges},
         {"max_steps", c.max_steps},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.d = j.value("d", d.d);
    c.hidden = j.value("hidden", d.hidden);
    c.max_len = j.value("max_len", d.max_len);
    c.instr_layers = j.value("instr_layers", d.instr_layers);
    c.pano_layers = j.value("pano_layers", d.pano_layers);
    c.tca_layers = j.value("tca_layers", d.tca_layers);
    c.cross_layers = j.value("cross_layers", d.cross_layers);
    c.scaled_attention = j.value("scaled_attention", d.scaled_attention);
    c.modality_embedding = j.value("modality_embedding", d.modality_embedding);
    c.status_embedding = j.value("status_embedding", d.status_embedding);
    c.adaptive_delta = false;
    c.delta = d.delta;
    if (j.contains("delta")) {
        const auto& v = j.at("delta");
        if (v.is_string()) {
            if (v.get<std::string>() != "adaptive") throw std::invalid_argument("tsu.delta must be a number or \"adaptive\"");
            c.adaptive_delta = true;
        } else {
            c.delta = v.get<double>();
        }
    }
    c.normalize_beta = j.value("normalize_beta", d.normalize_beta);
    c.temperature = j.value("temperature", d.temperature);
    c.bucket_edges = j.value("bucket_edges", d.bucket_edges);
    c.max_steps = j.value("max_steps", d.max_steps);
    c.seed = j.value("seed", d.seed);
}

}  // namespace susa
