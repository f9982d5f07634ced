#pragma once

// Subcommand implementations behind the `susa` binary. Every artifact carries
// the resolved RunConfig: JSON files under "config", CSV files as a leading
// "# config: {...}" line, JSON-lines files as a first {"header": {...}} record.
//
// Output directory layout:
//   train: config.json, checkpoint.json, train_log.jsonl,
//          loss_curve.csv, beta_curve.csv, sr_curve.csv (when eval_every > 0)
//   eval:  metrics.csv, summary.json, trajectories.jsonl

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "susa/config.hpp"
#include "susa/trainer.hpp"

namespace susa::cli {

void cmd_gen_world(const RunConfig& cfg, std::optional<std::size_t> nodes, const std::string& out);

void cmd_gen_episodes(const RunConfig& cfg, const std::string& split, std::size_t count, const std::string& out);

struct TrainArgs {
    std::string out_dir;
    std::optional<std::string> resume;  // checkpoint to continue from
    bool quiet = false;
};
// With `resume`, the run config is the checkpoint's, with `overrides` applied.
void cmd_train(const RunConfig& cfg, const TrainArgs& args);
RunConfig resume_config(const std::string& checkpoint, const std::vector<std::string>& overrides);

struct EvalArgs {
    std::string checkpoint;
    std::optional<std::string> episodes;  // JSON-lines file; sampled from the split otherwise
    std::optional<std::string> split;     // overrides eval.split
    std::optional<std::string> ablate;    // overrides eval.ablate
    std::optional<std::string> delta;     // number in [0, 1] or "adaptive"
    bool native_rgb = false;
    std::optional<std::size_t> threads;
    std::vector<std::string> overrides;   // applied on top of the checkpoint config
};

struct EvalOutput {
    RunConfig config;
    WorldParams world;  // parameters of the evaluation worlds
    std::vector<Episode> episodes;
    EvalResult result;
};
EvalOutput run_eval(const EvalArgs& args);
EvalOutput cmd_eval(const EvalArgs& args, const std::string& out_dir);

// One row per requested value, in order; the delta column echoes the input text.
// Rates are in percent, as in summary.json.
std::string cmd_delta_sweep(const EvalArgs& args, const std::vector<std::string>& values, const std::string& out);

// Returns the report; throws when any check fails.
nlohmann::json cmd_grad_check(std::size_t seeds, std::size_t params, std::uint64_t seed);

// Recomputes metrics from a trajectory dump written by cmd_eval.
std::string cmd_metrics(const std::string& trajectories, const std::optional<std::string>& out);

std::vector<std::string> split_list(const std::string& csv);

}  // namespace susa::cli
