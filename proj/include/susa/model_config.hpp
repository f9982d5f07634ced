#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "json.hpp"

namespace susa {

struct ModelConfig {
    std::size_t d = 32;
    std::size_t hidden = 64;
    std::size_t max_len = 32;
    std::size_t instr_layers = 2;
    std::size_t pano_layers = 2;
    std::size_t tca_layers = 2;
    std::size_t cross_layers = 4;
    bool scaled_attention = true;      // 1/sqrt(d) on attention logits
    bool modality_embedding = true;    // depth/rgb type embedding in the shared panorama encoder
    bool status_embedding = true;      // visited/frontier/current embedding on map nodes
    double delta = 0.5;
    bool adaptive_delta = false;       // learn delta through a sigmoid instead
    bool normalize_beta = true;
    double temperature = 0.07;
    // Left edges of the geodesic distance buckets in meters; the last bucket
    // is open-ended.
    std::vector<double> bucket_edges = {0, 1, 2, 4, 8, 16};
    std::size_t max_steps = 15;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace susa
