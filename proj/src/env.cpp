#include "felrl/env.hpp"

#include <cmath>

#include "felrl/net.hpp"  // ContractViolation

namespace felrl {

Eigen::VectorXd add_observation_noise(const Eigen::VectorXd& obs, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ContractViolation("observation noise sigma must be >= 0");
  if (sigma == 0.0) return obs;
  Eigen::VectorXd out = obs;
  for (int i = 0; i < out.size(); ++i) out[i] += rng.normal(0.0, sigma);
  return out;
}

namespace {

double wrap_angle(double theta) {
  theta = std::fmod(theta + M_PI, 2.0 * M_PI);
  if (theta < 0.0) theta += 2.0 * M_PI;
  return theta - M_PI;
}

constexpr double kGravity = 10.0;
constexpr double kMass = 1.0;
constexpr double kLength = 1.0;
constexpr double kDt = 0.05;
constexpr double kMaxTorque = 2.0;
constexpr double kMaxSpeed = 8.0;

}  // namespace

PendulumEnv::PendulumEnv(PendulumConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
  spec_.obs_dim = 3;
  spec_.act_dim = 1;
  spec_.action_low = Eigen::VectorXd::Constant(1, -kMaxTorque);
  spec_.action_high = Eigen::VectorXd::Constant(1, kMaxTorque);
  spec_.horizon = cfg.horizon;
}

Eigen::VectorXd PendulumEnv::observe() {
  Eigen::VectorXd obs(3);
  obs << std::cos(theta_), std::sin(theta_), theta_dot_;
  if (cfg_.obs_noise_sigma > 0.0) {
    // Noise is specified in the normalized observation space; the angular
    // velocity spans [-kMaxSpeed, kMaxSpeed] so its raw-space std scales up.
    obs[0] += rng_.normal(0.0, cfg_.obs_noise_sigma);
    obs[1] += rng_.normal(0.0, cfg_.obs_noise_sigma);
    obs[2] += rng_.normal(0.0, cfg_.obs_noise_sigma * kMaxSpeed);
  }
  return obs;
}

Eigen::VectorXd PendulumEnv::reset() {
  theta_ = rng_.uniform(-M_PI, M_PI);
  theta_dot_ = rng_.uniform(-1.0, 1.0);
  t_ = 0;
  return observe();
}

StepResult PendulumEnv::step(const Eigen::VectorXd& action) {
  if (action.size() != 1 || !action.allFinite())
    throw ContractViolation("pendulum: action must be a finite 1-vector");
  ++steps_;
  const double a = std::clamp(action[0], -kMaxTorque, kMaxTorque);
  const double th = wrap_angle(theta_);
  const double cost = th * th + 0.1 * theta_dot_ * theta_dot_ + 0.001 * a * a;

  theta_dot_ += (3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                 3.0 * a / (kMass * kLength * kLength)) *
                kDt;
  theta_dot_ = std::clamp(theta_dot_, -kMaxSpeed, kMaxSpeed);
  theta_ += theta_dot_ * kDt;
  ++t_;

  StepResult r;
  r.obs = observe();
  r.reward = -cost;
  r.done = t_ >= cfg_.horizon;
  if (r.done) r.info["timeout"] = 1.0;
  return r;
}

FelSimEnv::FelSimEnv(FelSimConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
  for (int i = 0; i < 4; ++i)
    if (cfg_.target[i] < 0.2 || cfg_.target[i] > 0.8)
      throw ContractViolation("fel-sim: target must lie in [0.2, 0.8]^4");
  if (cfg_.beam_sigma <= 0.0 || cfg_.beam_sigma > 1.0)
    throw ContractViolation("fel-sim: beam sigma must be in (0, 1]");
  spec_.obs_dim = 4;
  spec_.act_dim = 4;
  spec_.action_low = Eigen::VectorXd::Constant(4, -cfg_.a_max);
  spec_.action_high = Eigen::VectorXd::Constant(4, cfg_.a_max);
  spec_.horizon = cfg_.horizon;
  spec_.done_threshold = cfg_.intensity_threshold;
  state_.setZero();
}

double FelSimEnv::intensity(const Eigen::Vector4d& s) const {
  const double d2 = (s - cfg_.target).squaredNorm();
  return std::exp(-d2 / (2.0 * cfg_.beam_sigma * cfg_.beam_sigma));
}

Eigen::VectorXd FelSimEnv::reset() {
  for (int i = 0; i < 4; ++i) state_[i] = rng_.uniform();
  t_ = 0;
  return add_observation_noise(state_, cfg_.obs_noise_sigma, rng_);
}

StepResult FelSimEnv::step(const Eigen::VectorXd& action) {
  if (action.size() != 4 || !action.allFinite())
    throw ContractViolation("fel-sim: action must be a finite 4-vector");
  ++steps_;
  for (int i = 0; i < 4; ++i) {
    const double da = std::clamp(action[i], -cfg_.a_max, cfg_.a_max);
    state_[i] = std::clamp(state_[i] + da, 0.0, 1.0);
  }
  ++t_;

  const double inten = intensity(state_);
  StepResult r;
  r.obs = add_observation_noise(state_, cfg_.obs_noise_sigma, rng_);
  r.reward = inten - 1.0;
  if (cfg_.reward_noise_sigma > 0.0) r.reward += rng_.normal(0.0, cfg_.reward_noise_sigma);
  r.info["true_intensity"] = inten;
  // Termination thresholds the physical intensity, never the noisy reward.
  if (inten >= cfg_.intensity_threshold) {
    r.done = true;
    r.info["success"] = 1.0;
  } else if (t_ >= cfg_.horizon) {
    r.done = true;
    r.info["timeout"] = 1.0;
  }
  return r;
}

std::unique_ptr<PendulumEnv> make_pendulum(const PendulumConfig& cfg, std::uint64_t seed) {
  return std::make_unique<PendulumEnv>(cfg, seed);
}

std::unique_ptr<FelSimEnv> make_fel_sim(const FelSimConfig& cfg, std::uint64_t seed) {
  return std::make_unique<FelSimEnv>(cfg, seed);
}

}  // namespace felrl
