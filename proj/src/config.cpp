#include "susa/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace susa {

nlohmann::json RunConfig::to_json() const {
    using nlohmann::json;
    json m = model;  // flat model fields, regrouped by module below
    json out = {{"seed", seed}, {"out_dir", out_dir}, {"world", world}};
    out["encoders"] = {{"d", m["d"]},
                       {"hidden", m["hidden"]},
                       {"max_len", m["max_len"]},
                       {"instr_layers", m["instr_layers"]},
                       {"pano_layers", m["pano_layers"]},
                       {"modality_embedding", m["modality_embedding"]}};
    out["tsu"] = {{"delta", m["delta"]}, {"tca_layers", m["tca_layers"]}};
    out["dsp"] = {{"cross_layers", m["cross_layers"]},
                  {"bucket_edges", m["bucket_edges"]},
                  {"scaled_attention", m["scaled_attention"]},
                  {"status_embedding", m["status_embedding"]}};
    out["hrf"] = {{"normalize_beta", m["normalize_beta"]}, {"temperature", m["temperature"]}};
    out["policy"] = {{"max_steps", m["max_steps"]}};
    out["data"] = data;
    json t = train;
    t.erase("seed");
    out["train"] = t;
    out["eval"] = {{"split", eval.split},       {"ablate", eval.ablate},       {"episodes", eval.episodes},
                   {"stream", eval.stream},     {"ambiguity", eval.ambiguity}, {"threads", eval.threads}};
    out["metrics"] = {{"d_th", metrics.d_th}, {"ndtw_norm", to_string(metrics.ndtw_norm)}};
    return out;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    using nlohmann::json;
    static const std::vector<std::string> known = {"seed", "out_dir", "world", "encoders", "tsu", "dsp", "hrf",
                                                   "policy", "data", "train", "eval", "metrics"};
    for (const auto& [k, _] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw std::invalid_argument("config: unknown section '" + k + "'");
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.world = j.value("world", json::object()).get<WorldParams>();
    json m = json::object();
    for (const char* section : {"encoders", "tsu", "dsp", "hrf", "policy"}) {
        const json part = j.value(section, json::object());
        for (const auto& [k, v] : part.items()) m[k] = v;
    }
    c.model = m.get<ModelConfig>();
    c.model.seed = c.seed;
    c.data = j.value("data", json::object()).get<DataConfig>();
    c.train = j.value("train", json::object()).get<TrainConfig>();
    c.train.seed = c.seed;
    const json e = j.value("eval", json::object());
    c.eval.split = e.value("split", c.eval.split);
    c.eval.ablate = e.value("ablate", c.eval.ablate);
    c.eval.episodes = e.value("episodes", c.eval.episodes);
    c.eval.stream = e.value("stream", c.eval.stream);
    c.eval.ambiguity = e.value("ambiguity", c.eval.ambiguity);
    c.eval.threads = e.value("threads", c.eval.threads);
    split_from_string(c.eval.split);
    ablation_from_string(c.eval.ablate);
    const json mt = j.value("metrics", json::object());
    c.metrics.d_th = mt.value("d_th", c.metrics.d_th);
    c.metrics.ndtw_norm = metrics::ndtw_norm_from_string(mt.value("ndtw_norm", std::string("path")));
    c.world.validate();
    c.model.validate();
    return c;
}

WorldParams RunConfig::eval_world() const {
    WorldParams p = world;
    if (eval.ambiguity >= 0.0) p.ambiguity = eval.ambiguity;
    return p;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override must look like key=value: " + assignment);
    std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    std::string pointer;
    for (char ch : key) pointer += ch == '.' ? '/' : ch;
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    doc[nlohmann::json::json_pointer("/" + pointer)] = value;
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    return nlohmann::json::parse(in);
}

RunConfig resolve_config(nlohmann::json doc, const std::vector<std::string>& overrides,
                         std::optional<std::uint64_t> seed) {
    if (doc.is_null()) doc = nlohmann::json::object();
    if (!doc.contains("seed"))
        if (const char* env = std::getenv("SUSA_SEED"); env != nullptr && *env != '\0') {
            try {
                doc["seed"] = std::stoull(env);
            } catch (const std::exception&) {
                throw std::invalid_argument(std::string("SUSA_SEED is not an unsigned integer: ") + env);
            }
        }
    for (const auto& o : overrides) apply_override(doc, o);
    if (seed) doc["seed"] = *seed;
    return RunConfig::from_json(doc);
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    return resolve_config(path.empty() ? nlohmann::json::object() : read_json_file(path), overrides);
}

}  // namespace susa
