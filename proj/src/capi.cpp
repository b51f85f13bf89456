#include "felrl.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "felrl/env.hpp"
#include "felrl/harness.hpp"

namespace {

thread_local std::string g_last_error;

felrl::Json parse_env_config(const char* config_json) {
  if (!config_json || !*config_json) return felrl::Json::object();
  try {
    return felrl::Json::parse(config_json);
  } catch (const felrl::Json::parse_error& e) {
    throw felrl::ConfigError(std::string("env config parse error: ") + e.what());
  }
}

std::unique_ptr<felrl::Env> build_env(const char* kind, const char* config_json,
                                      std::uint64_t seed) {
  if (!kind) throw felrl::ConfigError("env kind is null");
  felrl::Json cfg{{"algorithm", "naf2"}, {"env", std::string(kind)},
                  {"env_config", parse_env_config(config_json)}};
  return felrl::ExperimentConfig::from_json(cfg).make_env(seed);
}

template <typename Fn>
felrl_status guarded(Fn&& fn) {
  try {
    fn();
    return FELRL_OK;
  } catch (const felrl::ConfigError& e) {
    g_last_error = e.what();
    return FELRL_CONFIG_ERROR;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FELRL_RUN_ERROR;
  }
}

}  // namespace

struct felrl_env {
  std::unique_ptr<felrl::Env> env;
};

extern "C" {

const char* felrl_version(void) { return "0.1.0"; }

const char* felrl_last_error(void) { return g_last_error.c_str(); }

felrl_env* felrl_env_create(const char* kind, const char* config_json, uint64_t seed) {
  felrl_env* handle = nullptr;
  const felrl_status st = guarded([&] {
    handle = new felrl_env{build_env(kind, config_json, seed)};
  });
  return st == FELRL_OK ? handle : nullptr;
}

void felrl_env_destroy(felrl_env* env) { delete env; }

int felrl_env_obs_dim(const felrl_env* env) { return env ? env->env->spec().obs_dim : 0; }
int felrl_env_act_dim(const felrl_env* env) { return env ? env->env->spec().act_dim : 0; }
long felrl_env_step_count(const felrl_env* env) { return env ? env->env->step_count() : 0; }

felrl_status felrl_env_reset(felrl_env* env, double* obs_out) {
  if (!env || !obs_out) {
    g_last_error = "felrl_env_reset: null argument";
    return FELRL_RUN_ERROR;
  }
  return guarded([&] {
    const Eigen::VectorXd obs = env->env->reset();
    std::memcpy(obs_out, obs.data(), sizeof(double) * static_cast<std::size_t>(obs.size()));
  });
}

felrl_status felrl_env_step(felrl_env* env, const double* action, double* obs_out,
                            double* reward_out, int* done_out) {
  if (!env || !action || !obs_out || !reward_out || !done_out) {
    g_last_error = "felrl_env_step: null argument";
    return FELRL_RUN_ERROR;
  }
  return guarded([&] {
    const int d = env->env->spec().act_dim;
    Eigen::VectorXd a(d);
    std::memcpy(a.data(), action, sizeof(double) * static_cast<std::size_t>(d));
    const felrl::StepResult sr = env->env->step(a);
    std::memcpy(obs_out, sr.obs.data(), sizeof(double) * static_cast<std::size_t>(sr.obs.size()));
    *reward_out = sr.reward;
    *done_out = sr.done ? 1 : 0;
  });
}

felrl_status felrl_run_experiment(const char* config_path, const char* out_dir) {
  return guarded([&] {
    if (!config_path || !out_dir) throw felrl::ConfigError("null path argument");
    const auto cfg = felrl::ExperimentConfig::from_file(config_path);
    felrl::run_experiment(cfg, out_dir);
  });
}

felrl_status felrl_verify(const char* checkpoint_path, const char* env_kind,
                          const char* env_config_json, int n_episodes, uint64_t seed,
                          int horizon, const char* out_csv) {
  return guarded([&] {
    if (!checkpoint_path || !out_csv) throw felrl::ConfigError("null path argument");
    auto env = build_env(env_kind, env_config_json, seed);
    const auto rep = felrl::verify(checkpoint_path, *env, n_episodes, seed, horizon);
    felrl::write_verification_csv(rep, out_csv);
  });
}

felrl_status felrl_aggregate(const char* const* csv_paths, int n_paths, const char* column,
                             const char* out_csv) {
  return guarded([&] {
    if (!csv_paths || n_paths <= 0 || !column || !out_csv)
      throw felrl::ConfigError("felrl_aggregate: bad arguments");
    std::vector<std::string> paths(csv_paths, csv_paths + n_paths);
    felrl::write_summary_csv(felrl::aggregate_curves(paths, column), out_csv);
  });
}

felrl_status felrl_suite(const char* name, const char* out_dir) {
  return guarded([&] {
    if (!name || !out_dir) throw felrl::ConfigError("null argument");
    const auto configs = felrl::ablation_suite(name);
    std::filesystem::create_directories(out_dir);
    for (const auto& cfg : configs) {
      std::ofstream os(std::filesystem::path(out_dir) / (cfg.id + ".json"));
      os << cfg.raw.dump(2) << '\n';
    }
  });
}

}  // extern "C"
