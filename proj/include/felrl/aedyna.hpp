#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "felrl/dyn_model.hpp"
#include "felrl/env.hpp"
#include "felrl/replay.hpp"
#include "felrl/sac.hpp"

namespace felrl {

struct AedynaConfig {
  int initial_random_steps = 200;
  int batch_steps = 50;
  int controller_steps_per_epoch = 2500;
  int controller_warmup_steps = 256;
  int controller_updates_per_step = 1;
  int model_horizon = 10;            // synthetic episode length
  int collection_horizon = 10;       // real data-collection episode length
  UncertaintyStrategy strategy = UncertaintyStrategy::PerEpisodeModel;
  double improvement_fraction = 1.0;  // phi
  double success_threshold = 0.0;     // mean test return must reach this...
  bool success_requires_all_done = false;  // ...or all test episodes must terminate early
  int test_episodes = 5;
  int test_horizon = 200;
  long max_real_steps = 500;
  double exploration_sigma = 0.0;     // additive Gaussian action noise while collecting
  std::optional<double> synthetic_done_reward;  // early model-episode termination threshold
  int max_epochs = 1000;
  SacConfig sac;
  EnsembleConfig ensemble;
};

struct EpochRecord {
  int epoch = 0;
  std::size_t dataset_size = 0;
  double batch_return = 0.0;                // mean per-episode return of the collected batch
  std::vector<double> model_returns;        // validation mean return per ensemble member
  std::vector<double> model_return_stds;
  bool tested_real = false;
  double real_test_return = 0.0;
  long real_test_steps = 0;
};

struct AedynaResult {
  std::vector<EpochRecord> epochs;
  bool success = false;
  long real_steps = 0;       // exact real-environment interaction count
  long collected_steps = 0;  // transitions stored in the real dataset
};

// Appends n_steps real transitions using either uniform random actions or the
// current policy plus exploration noise; episode starts are recorded for the
// synthetic start-state distribution.
void collect_real_data(Env& env, const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>* policy,
                       int n_steps, double sigma_x, int horizon, Dataset& dataset,
                       std::vector<Eigen::VectorXd>& start_states, Rng& rng,
                       std::vector<double>* episode_returns = nullptr);

// Runs SAC purely against the learned model; performs zero real-environment calls.
void train_controller_on_model(SacAgent& agent, const Ensemble& ens, const AedynaConfig& cfg,
                               const std::vector<Eigen::VectorXd>& start_states, Rng& rng);

// 10 deterministic synthetic episodes on each individual model; returns M means
// (and per-model stds when requested).
std::vector<double> validate_on_models(SacAgent& agent, const Ensemble& ens,
                                       const AedynaConfig& cfg,
                                       const std::vector<Eigen::VectorXd>& start_states, Rng& rng,
                                       std::vector<double>* stds = nullptr);

// True (trigger a real test) when fewer than ceil(phi*M) models improved over
// the previous validation; always true on the first validation.
bool improvement_gate(const std::vector<std::vector<double>>& history, double phi);

AedynaResult run_aedyna(Env& env, const AedynaConfig& cfg, std::uint64_t seed,
                        SacAgent* out_agent = nullptr, Ensemble* out_ensemble = nullptr);

}  // namespace felrl
