#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "felrl/aedyna.hpp"
#include "felrl/env.hpp"
#include "felrl/naf.hpp"

namespace felrl {

using Json = nlohmann::json;

// Raised for malformed configs; maps to exit code 2 at the CLI.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Experiment description, populated from JSON with per-environment defaults.
struct ExperimentConfig {
  Json raw;

  std::string id;
  std::string algorithm;  // "naf2" | "aedyna-sac"
  std::string env;        // "pendulum" | "fel-sim"
  std::vector<std::uint64_t> seeds;
  int episodes = 100;           // naf2 training budget (episodes)
  int verification_episodes = 0;
  int verification_horizon = 200;

  static ExperimentConfig from_json(const Json& j);
  static ExperimentConfig from_file(const std::string& path);

  std::string canonical() const;  // stable dump used for hashing
  std::uint64_t hash() const;

  NafConfig naf_config() const;
  AedynaConfig aedyna_config() const;
  std::unique_ptr<Env> make_env(std::uint64_t seed) const;
};

// Trains every seed, writes per-seed train.csv + policy checkpoint (+ verify.csv
// when verification is configured), a cross-seed summary.csv and manifest.json.
// Returns the artifact directory.
std::string run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

struct VerificationEpisode {
  int length = 0;
  double cumulative_reward = 0.0;
  double final_reward = 0.0;
};

struct VerificationReport {
  std::vector<VerificationEpisode> episodes;
  double mean_length = 0.0, std_length = 0.0;
  double mean_cumulative = 0.0, std_cumulative = 0.0;
  double mean_final = 0.0, std_final = 0.0;
  int successes = 0;  // episodes that terminated at the env threshold
};

VerificationReport verify(const std::string& checkpoint_path, Env& env, int n_episodes,
                          std::uint64_t seed, int horizon = 200);
void write_verification_csv(const VerificationReport& rep, const std::string& path);

struct CurveSummary {
  std::vector<double> mean, stddev;
  std::vector<int> padded;  // count of padded (shorter) runs per row
};

// Aligns one numeric column across run CSVs by row index; shorter runs are
// padded with their last value and flagged.
CurveSummary aggregate_curves(const std::vector<std::string>& csv_paths,
                              const std::string& column);
void write_summary_csv(const CurveSummary& s, const std::string& path);

// Config matrices reproducing the appendix ablations at desk scale.
// name: naf-variants | naf-variants-noise | ensemble-size | naf-vs-aedyna
std::vector<ExperimentConfig> ablation_suite(const std::string& name);

}  // namespace felrl
