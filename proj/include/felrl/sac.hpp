#pragma once

#include <vector>

#include <Eigen/Dense>

#include "felrl/env.hpp"
#include "felrl/net.hpp"
#include "felrl/replay.hpp"
#include "felrl/rng.hpp"

namespace felrl {

struct SacConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double alpha = 0.2;
  bool auto_alpha = false;
  double alpha_lr = 3e-4;
  double lr = 3e-4;
  int batch_size = 256;
  std::vector<int> hidden{64, 64};
  double logstd_min = -20.0;
  double logstd_max = 2.0;
};

// Squashed-Gaussian actor plus twin critics with twin targets.
struct SacAgent {
  SacConfig cfg;
  int obs_dim = 0, act_dim = 0;
  Eigen::VectorXd act_low, act_high, act_center, act_scale;
  Net actor;              // obs -> [mean, raw log-std]
  Net q1, q2, tq1, tq2;   // (obs, act) -> scalar
  Adam opt_actor, opt_q1, opt_q2;
  double log_alpha = 0.0;
  Rng rng;

  SacAgent(const EnvSpec& spec, SacConfig cfg, std::uint64_t seed);

  double alpha() const;
  Eigen::VectorXd act(const Eigen::VectorXd& s, bool deterministic);
};

struct ActorSample {
  Eigen::VectorXd action;
  double log_prob = 0.0;
};

// a = center + scale * tanh(mean + std * xi); log-prob includes the tanh
// change-of-variables correction.
ActorSample actor_sample(const SacAgent& agent, const Eigen::VectorXd& s, Rng& rng,
                         bool deterministic = false);

double critic_value(const SacAgent& agent, const Net& critic, const Eigen::VectorXd& s,
                    const Eigen::VectorXd& a);

double critic_update(SacAgent& agent, const std::vector<const Transition*>& batch);
double actor_update(SacAgent& agent, const std::vector<const Transition*>& batch);

// Fresh networks and empty optimizer state; targets equal online copies.
void reset_controller(SacAgent& agent, std::uint64_t seed);

void save_sac_actor(std::ostream& os, const SacAgent& agent);
// Loads only what is needed to act deterministically.
struct SacPolicy {
  Net actor;
  Eigen::VectorXd act_low, act_high;
  Eigen::VectorXd act(const Eigen::VectorXd& s) const;
};
SacPolicy load_sac_actor(std::istream& is);

}  // namespace felrl
