// susa: world generation, training, evaluation and audits.
//
// Errors are reported on stderr as one JSON object {"error": ..., "command": ...}
// with exit code 1; usage errors exit with CLI11's code.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "susa/commands.hpp"

namespace {

struct ConfigFlags {
    std::string config;
    std::vector<std::string> set;
    std::optional<std::uint64_t> seed;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "JSON run config file (sections: world, encoders, tsu, dsp, hrf, "
                                            "policy, data, train, eval, metrics; top-level seed, out_dir)");
        app->add_option("--set", set, "Override one config key, e.g. --set tsu.delta=adaptive (repeatable)");
        app->add_option("--seed", seed, "Run seed; defaults to the config value, then $SUSA_SEED, then 0");
    }
    susa::RunConfig resolve() const {
        nlohmann::json doc = config.empty() ? nlohmann::json::object() : susa::read_json_file(config);
        return susa::resolve_config(doc, set, seed);
    }
};

void attach_eval(CLI::App* app, susa::cli::EvalArgs& a) {
    app->add_option("--checkpoint", a.checkpoint, "Checkpoint written by `susa train`")->required();
    app->add_option("--episodes", a.episodes, "Episode file from `susa gen-episodes`; sampled from --split otherwise");
    app->add_option("--split", a.split, "Held-out split: seen | unseen")->check(CLI::IsMember({"seen", "unseen"}));
    app->add_option("--ablate", a.ablate, "Fusion ablation: none | no_tsu | no_dsp | no_hrf | rgb_only")
        ->check(CLI::IsMember({"none", "no_tsu", "no_dsp", "no_hrf", "rgb_only"}));
    app->add_flag("--native-rgb", a.native_rgb, "Run only the RGB view and RGB map branches");
    app->add_option("--threads", a.threads, "Evaluation worker threads");
    app->add_option("--set", a.overrides, "Override a key of the checkpoint's config (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-world vision-and-language navigation: simulator, agent, training and evaluation"};
    app.require_subcommand(1);

    ConfigFlags gw_flags;
    std::optional<std::size_t> gw_nodes;
    std::string gw_out;
    auto* gw = app.add_subcommand("gen-world", "Generate one world file");
    gw_flags.attach(gw);
    gw->add_option("--nodes", gw_nodes, "Exact node count (overrides world.min_nodes / world.max_nodes)");
    gw->add_option("--out", gw_out, "Output world JSON")->required();

    ConfigFlags ge_flags;
    std::string ge_split = "seen", ge_out;
    std::size_t ge_count = 200;
    auto* ge = app.add_subcommand("gen-episodes", "Sample episodes from a split");
    ge_flags.attach(ge);
    ge->add_option("--split", ge_split, "train | seen | unseen")->check(CLI::IsMember({"train", "seen", "unseen"}));
    ge->add_option("--count", ge_count, "Number of episodes");
    ge->add_option("--out", ge_out, "Output JSON-lines file")->required();

    ConfigFlags tr_flags;
    susa::cli::TrainArgs tr_args;
    std::optional<std::size_t> tr_iters;
    auto* tr = app.add_subcommand("train", "Train an agent by behavior cloning");
    tr_flags.attach(tr);
    tr->add_option("--out", tr_args.out_dir, "Output directory (checkpoint, log, plot data)")->required();
    tr->add_option("--resume", tr_args.resume, "Continue from a checkpoint; its config is reused with --set applied");
    tr->add_option("--iterations", tr_iters, "Shorthand for --set train.iterations=N");
    tr->add_flag("--quiet", tr_args.quiet, "No progress lines on stderr");

    susa::cli::EvalArgs ev_args;
    std::string ev_out;
    std::optional<std::string> ev_delta;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint: metrics CSV, summary JSON, trajectory dump");
    attach_eval(ev, ev_args);
    ev->add_option("--delta", ev_delta, "Override the static/dynamic balance: number in [0, 1] or 'adaptive'");
    ev->add_option("--out", ev_out, "Output directory")->required();

    susa::cli::EvalArgs ds_args;
    std::string ds_values = "0,0.5,1,adaptive", ds_out;
    auto* ds = app.add_subcommand("delta-sweep", "Evaluate one checkpoint across delta values");
    attach_eval(ds, ds_args);
    ds->add_option("--values", ds_values, "Comma-separated delta values; 'adaptive' uses the learned delta");
    ds->add_option("--out", ds_out, "Output CSV (stdout when omitted)");

    std::size_t gc_seeds = 20, gc_params = 25;
    std::optional<std::uint64_t> gc_seed;
    auto* gc = app.add_subcommand("grad-check", "Finite-difference audit of every op and the full training loss");
    gc->add_option("--seeds", gc_seeds, "Random cases per op");
    gc->add_option("--params", gc_params, "Parameter elements perturbed in the loss audit");
    gc->add_option("--seed", gc_seed, "Fixture seed; defaults to $SUSA_SEED, then 0");

    std::string mt_traj;
    std::optional<std::string> mt_out;
    auto* mt = app.add_subcommand("metrics", "Score a trajectory dump written by `susa eval`");
    mt->add_option("--trajectories", mt_traj, "trajectories.jsonl")->required();
    mt->add_option("--out", mt_out, "Output CSV (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (*gw) {
            susa::cli::cmd_gen_world(gw_flags.resolve(), gw_nodes, gw_out);
        } else if (*ge) {
            susa::cli::cmd_gen_episodes(ge_flags.resolve(), ge_split, ge_count, ge_out);
        } else if (*tr) {
            if (tr_iters) tr_flags.set.push_back("train.iterations=" + std::to_string(*tr_iters));
            const susa::RunConfig cfg =
                tr_args.resume ? susa::cli::resume_config(*tr_args.resume, tr_flags.set) : tr_flags.resolve();
            susa::cli::cmd_train(cfg, tr_args);
        } else if (*ev) {
            ev_args.delta = ev_delta;
            const auto out = susa::cli::cmd_eval(ev_args, ev_out);
            std::cout << susa::metrics::summary_json(out.result.summary).dump() << '\n';
        } else if (*ds) {
            const std::string csv = susa::cli::cmd_delta_sweep(ds_args, susa::cli::split_list(ds_values), ds_out);
            if (ds_out.empty()) std::cout << csv;
        } else if (*gc) {
            std::uint64_t seed = 0;
            if (gc_seed) {
                seed = *gc_seed;
            } else if (const char* env = std::getenv("SUSA_SEED"); env != nullptr && *env != '\0') {
                seed = std::stoull(env);
            }
            const auto report = susa::cli::cmd_grad_check(gc_seeds, gc_params, seed);
            std::cout << report.dump(2) << '\n';
            if (!report.at("passed").get<bool>()) throw std::runtime_error("gradient check failed");
        } else if (*mt) {
            const std::string csv = susa::cli::cmd_metrics(mt_traj, mt_out);
            if (!mt_out) std::cout << csv;
        }
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", e.what()}, {"command", command}}.dump() << '\n';
        return 1;
    }
    return 0;
}
