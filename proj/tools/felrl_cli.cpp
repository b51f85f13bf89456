// Command-line front end; talks to the core only through the C API.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "felrl.h"

namespace {

int report(felrl_status st) {
  if (st != FELRL_OK) std::fprintf(stderr, "error: %s\n", felrl_last_error());
  return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"felrl - model-free and model-based RL experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "runs/out";
  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("config", config_path, "experiment config file")->required();
  run->add_option("-o,--out", out_dir, "artifact directory");

  std::string ckpt, env_kind = "pendulum", env_cfg, out_csv = "verify.csv";
  int episodes = 50, horizon = 200;
  std::uint64_t seed = 1;
  auto* ver = app.add_subcommand("verify", "evaluate a policy checkpoint deterministically");
  ver->add_option("checkpoint", ckpt, "policy checkpoint")->required();
  ver->add_option("--env", env_kind, "pendulum | fel-sim");
  ver->add_option("--env-config", env_cfg, "env config JSON string");
  ver->add_option("-n,--episodes", episodes, "verification episodes");
  ver->add_option("--horizon", horizon, "episode cap");
  ver->add_option("--seed", seed, "verification seed");
  ver->add_option("-o,--out", out_csv, "output CSV");

  std::vector<std::string> agg_inputs;
  std::string column = "return", agg_out = "summary.csv";
  auto* agg = app.add_subcommand("aggregate", "mean/std of a column across run CSVs");
  agg->add_option("csvs", agg_inputs, "input run CSVs")->required();
  agg->add_option("-c,--column", column, "column to aggregate");
  agg->add_option("-o,--out", agg_out, "output CSV");

  std::string suite_name, suite_dir = "suites";
  auto* suite = app.add_subcommand("suite", "write the config files of an ablation suite");
  suite->add_option("name", suite_name,
                    "naf-variants | naf-variants-noise | ensemble-size | naf-vs-aedyna")
      ->required();
  suite->add_option("-o,--out", suite_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return report(felrl_run_experiment(config_path.c_str(), out_dir.c_str()));
  if (ver->parsed())
    return report(felrl_verify(ckpt.c_str(), env_kind.c_str(), env_cfg.c_str(), episodes, seed,
                               horizon, out_csv.c_str()));
  if (agg->parsed()) {
    std::vector<const char*> ptrs;
    for (const auto& s : agg_inputs) ptrs.push_back(s.c_str());
    return report(felrl_aggregate(ptrs.data(), static_cast<int>(ptrs.size()), column.c_str(),
                                  agg_out.c_str()));
  }
  return report(felrl_suite(suite_name.c_str(), suite_dir.c_str()));
}
