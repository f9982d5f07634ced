#include "susa/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "susa/diagnostics.hpp"

namespace susa::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const std::string& path, const std::string& text) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string config_line(const RunConfig& cfg) { return "config: " + cfg.to_json().dump(); }

std::string csv_with_preamble(const RunConfig& cfg, const std::string& body) {
    return "# " + config_line(cfg) + "\n" + body;
}

std::optional<double> parse_delta(const std::string& s, bool& adaptive) {
    adaptive = false;
    if (s == "adaptive") {
        adaptive = true;
        return std::nullopt;
    }
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || !(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("delta must be a number in [0, 1] or 'adaptive', got '" + s + "'");
    return v;
}

void load_checkpoint_into(SusaModel& model, const json& ck) {
    if (ck.value("format", "") != "susa-checkpoint") throw std::runtime_error("not a susa checkpoint");
    try {
        model.params().load_json(ck.at("params"));
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("checkpoint does not match the model configuration: ") + e.what());
    }
}

}  // namespace

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void cmd_gen_world(const RunConfig& cfg, std::optional<std::size_t> nodes, const std::string& out) {
    WorldParams p = cfg.world;
    p.seed = cfg.seed;
    if (nodes) p.min_nodes = p.max_nodes = *nodes;
    p.validate();
    json j = world_to_json(generate_world(p));
    j["config"] = cfg.to_json();
    write_text(out, j.dump(1) + "\n");
}

void cmd_gen_episodes(const RunConfig& cfg, const std::string& split, std::size_t count, const std::string& out) {
    const Split s = split_from_string(split);
    WorldCache worlds(s == Split::Train ? cfg.world : cfg.eval_world());
    const auto episodes = sample_episodes(worlds, cfg.data, s, cfg.eval.stream, count);
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    save_episodes(episodes, out, json{{"config", cfg.to_json()}, {"split", split}, {"world", worlds.params()}});
}

RunConfig resume_config(const std::string& checkpoint, const std::vector<std::string>& overrides) {
    const json ck = read_json_file(checkpoint);
    return resolve_config(ck.at("config"), overrides);
}

void cmd_train(const RunConfig& cfg, const TrainArgs& args) {
    fs::create_directories(args.out_dir);
    const fs::path dir(args.out_dir);
    SusaModel model(cfg.model, cfg.world);
    WorldCache worlds(cfg.world);
    WorldCache eval_worlds(cfg.eval_world());

    TrainState state;
    std::vector<json> log;
    if (args.resume) {
        const json ck = read_json_file(*args.resume);
        load_checkpoint_into(model, ck);
        state.start_iteration = ck.at("iteration").get<std::size_t>();
        state.optimizer = ck.at("optimizer");
        // Keep earlier log records so the log stays monotone across restarts.
        std::ifstream in(dir / "train_log.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json r = json::parse(line);
            if (r.contains("header")) continue;
            if (r.at("iter").get<std::size_t>() < state.start_iteration) log.push_back(std::move(r));
        }
    }

    const json config = cfg.to_json();
    write_text((dir / "config.json").string(), config.dump(2) + "\n");
    std::ofstream log_out(dir / "train_log.jsonl", std::ios::binary | std::ios::trunc);
    if (!log_out) throw std::runtime_error("cannot write training log in '" + args.out_dir + "'");
    log_out << json{{"header", {{"config", config}}}}.dump() << '\n';
    for (const auto& r : log) log_out << r.dump() << '\n';
    log_out.flush();

    TrainHooks hooks;
    hooks.log = [&](const json& r) {
        log_out << r.dump() << '\n';
        log_out.flush();
        log.push_back(r);
        if (!args.quiet && (r.contains("eval") || (r.at("iter").get<std::size_t>() + 1) % 100 == 0))
            std::cerr << fmt::format("iter {} loss {:.4f}{}\n", r.at("iter").get<std::size_t>(),
                                     r.at("loss").at("total").get<double>(),
                                     r.contains("eval") ? " eval " + r.at("eval").dump() : "");
    };
    hooks.checkpoint = [&](const json& archive, std::size_t) {
        const fs::path tmp = dir / "checkpoint.json.tmp";
        write_text(tmp.string(), archive.dump() + "\n");
        fs::rename(tmp, dir / "checkpoint.json");
    };
    if (cfg.train.eval_every > 0) {
        const auto seen = sample_episodes(eval_worlds, cfg.data, Split::Seen, cfg.eval.stream, cfg.train.eval_episodes);
        const auto unseen =
            sample_episodes(eval_worlds, cfg.data, Split::Unseen, cfg.eval.stream, cfg.train.eval_episodes);
        hooks.eval = [&, seen, unseen](const SusaModel& m) {
            EvalOptions eo;
            eo.rollout.ablation = ablation_from_string(cfg.train.ablate);
            eo.rollout.record_map = false;
            eo.rollout.record_steps = false;
            eo.metrics = cfg.metrics;
            eo.threads = cfg.eval.threads;
            const auto a = evaluate(m, eval_worlds, seen, eo);
            const auto b = evaluate(m, eval_worlds, unseen, eo);
            return json{{"seen_sr", a.summary.sr},
                        {"unseen_sr", b.summary.sr},
                        {"seen_spl", a.summary.spl},
                        {"unseen_spl", b.summary.spl},
                        {"alignment", a.paired_cosine - a.mismatched_cosine}};
        };
    }

    train(model, worlds, cfg.data, cfg.train, hooks, state, config);

    // Plot data.
    std::string loss = "iter,mode,total,teacher,student,contrastive,grounding\n";
    std::string beta = "iter,beta1,beta2,beta3,beta4\n";
    std::string sr = "iter,seen_sr,unseen_sr,seen_spl,unseen_spl,alignment\n";
    for (const auto& r : log) {
        const auto& l = r.at("loss");
        const auto it = r.at("iter").get<std::size_t>();
        loss += fmt::format("{},{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", it, r.at("mode").get<std::string>(),
                            l.at("total").get<double>(), l.at("teacher").get<double>(), l.at("student").get<double>(),
                            l.at("contrastive").get<double>(), l.at("grounding").get<double>());
        const auto& b = r.at("beta");
        beta += fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g}\n", it, b[0].get<double>(), b[1].get<double>(),
                            b[2].get<double>(), b[3].get<double>());
        if (r.contains("eval")) {
            const auto& e = r.at("eval");
            sr += fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", it, e.at("seen_sr").get<double>(),
                              e.at("unseen_sr").get<double>(), e.at("seen_spl").get<double>(),
                              e.at("unseen_spl").get<double>(), e.at("alignment").get<double>());
        }
    }
    write_text((dir / "loss_curve.csv").string(), csv_with_preamble(cfg, loss));
    write_text((dir / "beta_curve.csv").string(), csv_with_preamble(cfg, beta));
    if (cfg.train.eval_every > 0) write_text((dir / "sr_curve.csv").string(), csv_with_preamble(cfg, sr));
}

EvalOutput run_eval(const EvalArgs& args) {
    const json ck = read_json_file(args.checkpoint);
    if (!ck.contains("config")) throw std::runtime_error("checkpoint has no config");
    std::vector<std::string> overrides = args.overrides;
    if (args.split) overrides.push_back("eval.split=\"" + *args.split + "\"");
    if (args.ablate) overrides.push_back("eval.ablate=\"" + *args.ablate + "\"");
    if (args.threads) overrides.push_back(fmt::format("eval.threads={}", *args.threads));
    if (args.delta) {
        bool adaptive = false;
        const auto v = parse_delta(*args.delta, adaptive);
        overrides.push_back(adaptive ? std::string("tsu.delta=\"adaptive\"") : fmt::format("tsu.delta={}", *v));
    }
    EvalOutput out{resolve_config(ck.at("config"), overrides), {}, {}, {}};
    const RunConfig& cfg = out.config;

    SusaModel model(cfg.model, cfg.world);
    load_checkpoint_into(model, ck);

    std::vector<Episode>& episodes = out.episodes;
    out.world = cfg.eval_world();
    if (args.episodes) {
        episodes = load_episodes(*args.episodes);
        const json header = load_episode_header(*args.episodes);
        if (!header.is_null() && header.contains("world")) out.world = header.at("world").get<WorldParams>();
    }
    WorldCache worlds(out.world);
    if (!args.episodes)
        episodes = sample_episodes(worlds, cfg.data, split_from_string(cfg.eval.split), cfg.eval.stream,
                                   cfg.eval.episodes);

    EvalOptions eo;
    // A checkpoint trained under an ablation is evaluated under it unless
    // --ablate or eval.ablate says otherwise.
    const bool explicit_ablate = args.ablate || cfg.eval.ablate != "none";
    eo.rollout.ablation = ablation_from_string(explicit_ablate ? cfg.eval.ablate : cfg.train.ablate);
    eo.rollout.native_rgb = args.native_rgb;
    eo.rollout.seed = cfg.seed;
    eo.metrics = cfg.metrics;
    eo.threads = cfg.eval.threads;
    out.result = evaluate(model, worlds, episodes, eo);
    return out;
}

EvalOutput cmd_eval(const EvalArgs& args, const std::string& out_dir) {
    EvalOutput out = run_eval(args);
    const RunConfig& cfg = out.config;
    const EvalResult& r = out.result;
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    write_text((dir / "metrics.csv").string(), metrics::to_csv(r.records, {config_line(cfg)}));

    nlohmann::ordered_json summary;
    summary["config"] = cfg.to_json();
    summary["checkpoint"] = args.checkpoint;
    summary["native_rgb"] = args.native_rgb;
    summary["metrics"] = metrics::summary_json(r.summary);
    summary["mean_beta"] = r.mean_beta;
    summary["alignment"] = {{"paired", r.paired_cosine},
                            {"mismatched", r.mismatched_cosine},
                            {"gap", r.paired_cosine - r.mismatched_cosine}};
    write_text((dir / "summary.json").string(), summary.dump(2) + "\n");

    std::string dump = json{{"header", {{"config", cfg.to_json()}, {"world", out.world}}}}.dump() + "\n";
    for (std::size_t i = 0; i < r.trajectories.size(); ++i) {
        json t = trajectory_to_json(r.trajectories[i]);
        t["episode"] = episode_to_json(out.episodes[i]);
        dump += t.dump() + "\n";
    }
    write_text((dir / "trajectories.jsonl").string(), dump);
    return out;
}

std::string cmd_delta_sweep(const EvalArgs& args, const std::vector<std::string>& values, const std::string& out) {
    if (values.empty()) throw std::invalid_argument("delta-sweep needs at least one value");
    std::string body = "delta,SR,SPL,nDTW,sDTW,OSR,NE,TL\n";
    for (const auto& v : values) {
        EvalArgs a = args;
        a.delta = v;
        const EvalOutput e = run_eval(a);
        const auto& s = e.result.summary;
        body += fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", v, s.sr, 100.0 * s.spl,
                            100.0 * s.ndtw, 100.0 * s.sdtw, s.osr, s.ne, s.tl);
    }
    // The checkpoint's configuration; delta varies per row.
    std::vector<std::string> overrides = args.overrides;
    if (args.split) overrides.push_back("eval.split=\"" + *args.split + "\"");
    if (args.ablate) overrides.push_back("eval.ablate=\"" + *args.ablate + "\"");
    const RunConfig shown = resume_config(args.checkpoint, overrides);
    const std::string text = "# " + config_line(shown) + "\n# delta values: " + fmt::format("{}", fmt::join(values, ",")) +
                             "\n" + body;
    if (!out.empty()) write_text(out, text);
    return text;
}

json cmd_grad_check(std::size_t seeds, std::size_t params, std::uint64_t seed) {
    json report = {{"seed", seed}, {"seeds", seeds}};
    bool ok = true;
    json ops = json::array();
    for (const auto& c : diagnostics::check_ops(seeds)) {
        ops.push_back({{"op", c.op}, {"max_rel_error", c.worst}, {"checked", c.checked}, {"passed", c.passed}});
        ok = ok && c.passed;
    }
    report["ops"] = ops;
    const auto l = diagnostics::check_episode_loss(params, 5, seed);
    report["episode_loss"] = {{"loss", l.loss},
                              {"world_nodes", l.world_nodes},
                              {"max_rel_error", l.report.worst()},
                              {"checked", l.report.checked},
                              {"elements", l.sampled},
                              {"passed", l.report.passed}};
    ok = ok && l.report.passed;
    report["passed"] = ok;
    return report;
}

std::string cmd_metrics(const std::string& trajectories, const std::optional<std::string>& out) {
    std::ifstream in(trajectories);
    if (!in) throw std::runtime_error("cannot read trajectory file '" + trajectories + "'");
    std::string line;
    std::optional<RunConfig> cfg;
    std::optional<WorldCache> worlds;
    std::vector<metrics::Record> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        if (j.contains("header")) {
            cfg = resolve_config(j.at("header").at("config"), {});
            worlds.emplace(j.at("header").value("world", cfg->eval_world()));
            continue;
        }
        if (!cfg) throw std::runtime_error("trajectory file has no header record");
        const Episode ep = episode_from_json(j.at("episode"));
        const World& world = worlds->get(ep.world_seed);
        const auto path = j.at("path").get<std::vector<NodeId>>();
        std::optional<metrics::Grounding> g;
        if (ep.mode == EpisodeMode::GoalOriented) {
            metrics::Grounding gr;
            gr.reference = metrics::reference_boxes(world, ep);
            const auto& box = j.at("grounded_box");
            if (!box.is_null()) {
                const auto v = box.get<std::vector<double>>();
                gr.predicted = Box{v.at(0), v.at(1), v.at(2), v.at(3)};
            }
            g = gr;
        }
        records.push_back({ep.episode_id, to_string(ep.mode), metrics::compute_all(path, ep, world.graph, g, cfg->metrics)});
    }
    if (!cfg) throw std::runtime_error("trajectory file is empty");
    const std::string csv = metrics::to_csv(records, {config_line(*cfg)});
    if (out && !out->empty()) write_text(*out, csv);
    return csv;
}

}  // namespace susa::cli
