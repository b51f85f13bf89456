#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "felrl/rng.hpp"

namespace felrl {

struct EnvSpec {
  int obs_dim = 0;
  int act_dim = 0;
  Eigen::VectorXd action_low, action_high;
  int horizon = 0;
  std::optional<double> done_threshold;
};

struct StepResult {
  Eigen::VectorXd obs;
  double reward = 0.0;
  bool done = false;
  std::map<std::string, double> info;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Eigen::VectorXd reset() = 0;
  virtual StepResult step(const Eigen::VectorXd& action) = 0;
  virtual void seed(std::uint64_t s) = 0;

  // Every real-environment interaction is counted; the orchestrator asserts on this.
  long step_count() const { return steps_; }

 protected:
  long steps_ = 0;
};

// obs + iid N(0, sigma) per component; never touches the internal state.
Eigen::VectorXd add_observation_noise(const Eigen::VectorXd& obs, double sigma, Rng& rng);

struct PendulumConfig {
  double obs_noise_sigma = 0.0;
  int horizon = 200;
};

// Classic swing-up pendulum: state (theta, theta_dot), obs (cos, sin, theta_dot),
// torque in [-2, 2], g = 10, m = l = 1, dt = 0.05, no reward threshold.
class PendulumEnv final : public Env {
 public:
  explicit PendulumEnv(PendulumConfig cfg, std::uint64_t seed);

  const EnvSpec& spec() const override { return spec_; }
  Eigen::VectorXd reset() override;
  StepResult step(const Eigen::VectorXd& action) override;
  void seed(std::uint64_t s) override { rng_ = Rng(s); }

  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }

 private:
  Eigen::VectorXd observe();

  PendulumConfig cfg_;
  EnvSpec spec_;
  Rng rng_;
  double theta_ = 0.0, theta_dot_ = 0.0;
  int t_ = 0;
};

struct FelSimConfig {
  Eigen::Vector4d target{0.5, 0.5, 0.5, 0.5};  // kept inside [0.2, 0.8]^4
  double beam_sigma = 0.3;
  double a_max = 1.0 / 12.0;
  double intensity_threshold = 0.95;
  double obs_noise_sigma = 0.0;
  double reward_noise_sigma = 0.0;
  int horizon = 500;
};

// Synthetic seed-laser alignment problem: 4 mirror voltages in [0,1], delta
// actions clipped to +-a_max, Gaussian intensity bump around the target,
// reward = intensity - 1, early termination at 95% of peak intensity.
class FelSimEnv final : public Env {
 public:
  FelSimEnv(FelSimConfig cfg, std::uint64_t seed);

  const EnvSpec& spec() const override { return spec_; }
  Eigen::VectorXd reset() override;
  StepResult step(const Eigen::VectorXd& action) override;
  void seed(std::uint64_t s) override { rng_ = Rng(s); }

  double intensity(const Eigen::Vector4d& s) const;
  const Eigen::Vector4d& state() const { return state_; }

 private:
  FelSimConfig cfg_;
  EnvSpec spec_;
  Rng rng_;
  Eigen::Vector4d state_;
  int t_ = 0;
};

std::unique_ptr<PendulumEnv> make_pendulum(const PendulumConfig& cfg, std::uint64_t seed);
std::unique_ptr<FelSimEnv> make_fel_sim(const FelSimConfig& cfg, std::uint64_t seed);

}  // namespace felrl
