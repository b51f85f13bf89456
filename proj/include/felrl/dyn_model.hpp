#pragma once

#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "felrl/net.hpp"
#include "felrl/replay.hpp"
#include "felrl/rng.hpp"

namespace felrl {

enum class UncertaintyStrategy { Gaussian, PerStepModel, PerEpisodeModel, Pessimistic };

UncertaintyStrategy parse_strategy(const std::string& name);
std::string strategy_name(UncertaintyStrategy s);

struct EnsembleConfig {
  int models = 3;
  std::vector<int> hidden{25, 25};
  double sigma_eps = 1e-3;     // homoscedastic data-noise std (normalized target space)
  double delta = 0.1;          // uniform init half-range, <= 0.1
  int patience = 20;     // counted in validation evaluations
  int eval_every = 5;    // epochs between validation evaluations
  double lr = 3e-3;
  int max_epochs = 1000;
  double loss_threshold = 1e-4;
  int batch_size = 64;
  double validation_ratio = 0.2;
  bool predict_delta = true;   // model s' - s instead of s' directly
};

// Maps raw (s, a) inputs onto [-1, 1] and z-scores the regression targets.
struct Normalizer {
  Eigen::VectorXd in_lo, in_hi;
  Eigen::VectorXd out_mean, out_std;

  Eigen::VectorXd normalize_in(const Eigen::VectorXd& x) const;
  Eigen::VectorXd normalize_out(const Eigen::VectorXd& y) const;
  Eigen::VectorXd denormalize_out(const Eigen::VectorXd& y) const;
};

struct AnchoredNet {
  Net net;
  Eigen::VectorXd theta_anc;   // drawn once, never trained
  Eigen::VectorXd gamma_diag;  // sigma_eps^2 / sigma_prior_i^2 per parameter
};

// Weights ~ U[-delta, delta], last layer scaled down by its input width,
// anchors ~ N(0, sigma_prior^2) with sigma_prior matching the init std per group.
AnchoredNet init_anchored(const EnsembleConfig& cfg, int in_dim, int out_dim, Rng& rng);

// Mean data MSE plus (1/N) |Gamma^{1/2} (theta - theta_anc)|^2; n_total sets the
// regularizer scale (the full training-set size, also when called on minibatches).
double anchored_loss(const AnchoredNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                     std::size_t n_total);

struct Ensemble {
  EnsembleConfig cfg;
  int obs_dim = 0, act_dim = 0;
  std::vector<AnchoredNet> members;
  Normalizer norm;
  bool fitted = false;

  int in_dim() const { return obs_dim + act_dim; }
  int out_dim() const { return obs_dim + 1; }  // next state (or delta) and reward
};

Ensemble make_ensemble(const EnsembleConfig& cfg, int obs_dim, int act_dim, std::uint64_t seed);

// Trains every member on its own shuffled train/validation split with early
// stopping (patience on validation MSE, or training MSE below threshold);
// returns best-validation MSE per member.
std::vector<double> train_model(Ensemble& ens, const Dataset& data, Rng& rng);

// Raw-space (s', r) prediction of one member.
Eigen::VectorXd predict_member(const Ensemble& ens, int member, const Eigen::VectorXd& s,
                               const Eigen::VectorXd& a);

struct EnsemblePrediction {
  Eigen::VectorXd mean;  // per output dim across members
  Eigen::VectorXd std;   // population std
};

EnsemblePrediction predict_ensemble(const Ensemble& ens, const Eigen::VectorXd& s,
                                    const Eigen::VectorXd& a);

// Stateful strategy-driven sampler; PerEpisodeModel holds its model until
// begin_episode() is called again.
class EnsembleSampler {
 public:
  EnsembleSampler(const Ensemble& ens, UncertaintyStrategy strategy)
      : ens_(&ens), strategy_(strategy) {}

  void begin_episode(Rng& rng);
  // Returns (s', r).
  std::pair<Eigen::VectorXd, double> sample(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                                            Rng& rng) const;
  int episode_model() const { return episode_model_; }

 private:
  const Ensemble* ens_;
  UncertaintyStrategy strategy_;
  int episode_model_ = 0;
};

void save_ensemble(std::ostream& os, const Ensemble& ens);
Ensemble load_ensemble(std::istream& is);

}  // namespace felrl
