#pragma once

// Layered run configuration: defaults, then an optional JSON file, then
// "section.key=value" overrides. Sections:
//   world, encoders, tsu, dsp, hrf, policy, data, train, eval, metrics
// plus top-level "seed" (model initialization and training streams) and
// "out_dir". The resolved document is embedded in every output artifact.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "susa/metrics.hpp"
#include "susa/model_config.hpp"
#include "susa/trainer.hpp"
#include "susa/world.hpp"

namespace susa {

struct EvalConfig {
    std::string split = "seen";
    std::string ablate = "none";
    std::size_t episodes = 200;
    std::uint64_t stream = 0x5EED;   // episode sampling stream
    double ambiguity = -1.0;         // >= 0 overrides world.ambiguity for evaluation worlds
    std::size_t threads = 1;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    WorldParams world;
    ModelConfig model;
    DataConfig data;
    TrainConfig train;
    EvalConfig eval;
    metrics::Options metrics;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    // World parameters for evaluation worlds (ambiguity override applied).
    WorldParams eval_world() const;
};

// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
// possible, otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

// Seed precedence: `seed`, then "seed" in the document or overrides, then the
// SUSA_SEED environment variable, then 0.
RunConfig resolve_config(nlohmann::json doc, const std::vector<std::string>& overrides,
                         std::optional<std::uint64_t> seed = std::nullopt);
nlohmann::json read_json_file(const std::string& path);

}  // namespace susa
