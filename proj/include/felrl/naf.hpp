#pragma once

#include <vector>

#include <Eigen/Dense>

#include "felrl/env.hpp"
#include "felrl/net.hpp"
#include "felrl/replay.hpp"
#include "felrl/rng.hpp"

namespace felrl {

// Q(s,a) = -1/2 (a - mu(s))^T P(s) (a - mu(s)) + V(s), with P = L L^T from a
// Cholesky factor whose diagonal is exponentiated. One trunk network outputs
// [V, mu, l-entries].
struct NafNet {
  Net net;
  int act_dim = 0;
  Eigen::VectorXd act_low, act_high;

  int head_dim() const { return 1 + act_dim + act_dim * (act_dim + 1) / 2; }
};

NafNet make_naf_net(int obs_dim, int act_dim, const std::vector<int>& hidden,
                    const Eigen::VectorXd& act_low, const Eigen::VectorXd& act_high, Rng& rng);

struct NafHeads {
  double v = 0.0;
  Eigen::VectorXd mu;
  Eigen::VectorXd l_entries;
};

NafHeads split_heads(const NafNet& net, const Eigen::VectorXd& y);

// Lower-triangular L with exponentiated diagonal; P = L L^T is SPD.
Eigen::MatrixXd build_L(const Eigen::VectorXd& l_entries, int d);
Eigen::MatrixXd build_P(const Eigen::VectorXd& l_entries, int d);

double q_value(const NafNet& net, const Eigen::VectorXd& s, const Eigen::VectorXd& a);
double v_value(const NafNet& net, const Eigen::VectorXd& s);
Eigen::VectorXd policy_mean(const NafNet& net, const Eigen::VectorXd& s);

enum class ActionMode { Train, Eval };

// Eval: clip(mu(s), bounds). Train: clip(mu(s) + clip(eps, -c, c), bounds), eps ~ N(0, sigma).
Eigen::VectorXd select_action(const NafNet& net, const Eigen::VectorXd& s, ActionMode mode,
                              double sigma, double clip_c, Rng& rng);

struct NafConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double smoothing_sigma = 0.2;  // absolute, in action units
  double smoothing_clip = 0.4;
  bool twin = true;
  int batch_size = 128;
  double lr = 1e-3;
  int updates_per_step = 1;
  std::vector<int> hidden{64, 64};
  int warmup_steps = 200;
  std::size_t buffer_capacity = 200000;
  long max_total_steps = 0;  // 0 = unlimited; stops training mid-episode when hit
  // Exploration: Gaussian action noise with per-episode exponential decay,
  // floored at smoothing_sigma. Negative sigma0 means 0.25 * action range.
  double expl_sigma0 = -1.0;
  double expl_decay = 0.97;
};

// y = r + gamma (1 - d) min_i V_targ_i(s2); one or two target nets.
double td_target(double r, const Eigen::VectorXd& s2, bool done, double gamma,
                 const std::vector<const NafNet*>& targets);

struct NafAgent {
  NafConfig cfg;
  NafNet net1, net2;    // net2 unused when twin is off
  NafNet targ1, targ2;
  Adam opt1, opt2;
  Rng rng;

  double expl_sigma = 0.0;  // current exploration scale, managed by train_naf

  NafAgent(const EnvSpec& spec, NafConfig cfg, std::uint64_t seed);
  Eigen::VectorXd act(const Eigen::VectorXd& s, ActionMode mode);
};

struct NafUpdateResult {
  double loss1 = 0.0;
  double loss2 = 0.0;
};

NafUpdateResult naf_update(NafAgent& agent, const std::vector<const Transition*>& batch);

struct EpisodeRow {
  int episode = 0;
  int steps = 0;
  double ret = 0.0;
  double bellman_error = 0.0;
  double mean_v = 0.0;
};

struct RunRecord {
  std::vector<EpisodeRow> rows;
  long total_steps = 0;
};

// Full training loop; records per-episode return plus Bellman-error and
// mean-V diagnostics over 200 held-out states.
RunRecord train_naf(Env& env, const NafConfig& cfg, int episodes, std::uint64_t seed,
                    NafAgent* out_agent = nullptr);

void save_naf_policy(std::ostream& os, const NafNet& net);
NafNet load_naf_policy(std::istream& is);

}  // namespace felrl
