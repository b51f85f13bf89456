// Acceptance suite: one pass/fail line per criterion, exit 0 only if all pass.
// Training criteria fan seeds out to threads; each worker owns its env/agent.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "felrl/aedyna.hpp"
#include "felrl/dyn_model.hpp"
#include "felrl/env.hpp"
#include "felrl/harness.hpp"
#include "felrl/naf.hpp"
#include "felrl/net.hpp"

using namespace felrl;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, const char* name, bool pass, const std::string& detail) {
  std::printf("[%2d] %-34s %s  (%s)\n", idx, name, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- criterion 1: gradients ----------------------------------------------

bool check_gradients(std::string& detail) {
  double worst = 0.0;
  const std::vector<std::pair<std::vector<int>, int>> archs = {
      {{4}, 1}, {{8, 8}, 2}, {{16}, 3}, {{6, 6, 6}, 1}};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (const auto& [hidden, out] : archs) {
      Rng rng(seed * 31 + out);
      Net net = make_mlp(3, hidden, out);
      init_fanin(net, rng);
      const Eigen::VectorXd x = rng.normal_vec(3);
      const Eigen::VectorXd t = rng.normal_vec(out);
      ForwardCache cache;
      const Eigen::MatrixXd y = forward_batch(net, x, &cache);
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.params.size());
      backward(net, cache, y - t, grad);
      const double h = 1e-5;
      for (int i = 0; i < net.params.size(); ++i) {
        Net pert = net;
        pert.params[i] += h;
        const double up = 0.5 * (forward(pert, x) - t).squaredNorm();
        pert.params[i] -= 2 * h;
        const double dn = 0.5 * (forward(pert, x) - t).squaredNorm();
        const double fd = (up - dn) / (2 * h);
        const double rel = std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, rel);
      }
    }
  }
  detail = "max rel err " + std::to_string(worst) + ", tol 1e-4";
  return worst < 1e-4;
}

// ---- criterion 2: NAF algebra --------------------------------------------

bool check_naf_algebra(std::string& detail) {
  Rng rng(7);
  NafNet net = make_naf_net(3, 2, {32, 32}, Eigen::VectorXd::Constant(2, -2.0),
                            Eigen::VectorXd::Constant(2, 2.0), rng);
  double worst_gap = 0.0, worst_excess = -1e18, min_eig = 1e18;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd s = rng.normal_vec(3);
    const double v = v_value(net, s);
    worst_gap = std::max(worst_gap, std::abs(q_value(net, s, policy_mean(net, s)) - v));
    const NafHeads h = split_heads(net, forward(net.net, s));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(build_P(h.l_entries, 2));
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    if (trial == 0) {
      for (int i = 0; i < 100000; ++i) {
        Eigen::VectorXd a = rng.uniform_vec(2, -4.0, 4.0);
        worst_excess = std::max(worst_excess, q_value(net, s, a) - v);
      }
    }
  }
  std::ostringstream os;
  os << "|Q(s,mu)-V| " << worst_gap << " (tol 1e-10), grid excess " << worst_excess
     << " (tol 1e-8), min eig " << min_eig;
  detail = os.str();
  return worst_gap < 1e-10 && worst_excess <= 1e-8 && min_eig > 0.0;
}

// ---- criterion 3: anchored-loss algebra ----------------------------------

bool check_anchored_algebra(std::string& detail) {
  EnsembleConfig cfg;
  Rng rng(5);
  AnchoredNet an = init_anchored(cfg, 3, 2, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 8);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Random(2, 8);

  AnchoredNet at_anchor = an;
  at_anchor.net.params = at_anchor.theta_anc;
  const double mse =
      (forward_batch(at_anchor.net, x) - y).squaredNorm() / static_cast<double>(x.cols());
  const double d1 = std::abs(anchored_loss(at_anchor, x, y, x.cols()) - mse);

  EnsembleConfig noiseless = cfg;
  noiseless.sigma_eps = 0.0;
  Rng rng2(6);
  const AnchoredNet zero_gamma = init_anchored(noiseless, 3, 2, rng2);
  const double gmax = zero_gamma.gamma_diag.cwiseAbs().maxCoeff();

  std::ostringstream os;
  os << "theta=anchor gap " << d1 << ", sigma_eps=0 max Gamma " << gmax << " (both exact)";
  detail = os.str();
  return d1 == 0.0 && gmax == 0.0;
}

// ---- criterion 4: epistemic uncertainty ----------------------------------

bool check_epistemic(std::string& detail) {
  EnsembleConfig cfg;
  cfg.models = 3;
  cfg.hidden = {20, 20};
  cfg.max_epochs = 600;
  Ensemble ens = make_ensemble(cfg, 1, 0, 42);
  Rng rng(43);
  Dataset data;
  for (int i = 0; i < 20; ++i) {
    Transition t;
    t.s = rng.uniform_vec(1, -1.0, 1.0);
    t.a = Eigen::VectorXd(0);
    t.s2 = Eigen::VectorXd::Constant(1, std::sin(3.0 * t.s[0]));
    t.r = 0.0;
    data.push(t);
  }
  train_model(ens, data, rng);
  std::vector<double> in_dist;
  for (std::size_t i = 0; i < data.size(); ++i)
    in_dist.push_back(predict_ensemble(ens, data[i].s, data[i].a).std[0]);
  const double med = median(in_dist);
  const double far =
      predict_ensemble(ens, Eigen::VectorXd::Constant(1, 5.0), Eigen::VectorXd(0)).std[0];
  std::ostringstream os;
  os << "sigma(x=5) " << far << " vs median in-dist " << med << ", need >= 3x";
  detail = os.str();
  return far >= 3.0 * med;
}

// ---- criteria 5/6: NAF2 pendulum ------------------------------------------

ExperimentConfig pendulum_naf_cfg(bool noisy, bool clipping, bool smoothing) {
  Json j{{"id", "acc"}, {"algorithm", "naf2"}, {"env", "pendulum"}, {"episodes", 100}};
  j["naf"] = Json::object();
  if (!clipping) j["naf"]["twin"] = false;
  if (!smoothing) j["naf"]["smoothing_sigma"] = 0.0;
  if (noisy) j["env_config"] = {{"obs_noise_sigma", 0.05}};
  return ExperimentConfig::from_json(j);
}

std::vector<RunRecord> run_naf_seeds(const ExperimentConfig& cfg) {
  std::vector<RunRecord> out(cfg.seeds.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
    threads.emplace_back([&, i] {
      auto env = cfg.make_env(cfg.seeds[i]);
      out[i] = train_naf(*env, cfg.naf_config(), cfg.episodes, cfg.seeds[i]);
    });
  for (auto& t : threads) t.join();
  return out;
}

bool check_naf_pendulum(std::string& detail) {
  const std::vector<RunRecord> recs = run_naf_seeds(pendulum_naf_cfg(false, true, true));
  int good = 0;
  std::ostringstream os;
  os << "median final-10 returns:";
  for (const auto& rec : recs) {
    std::vector<double> last10;
    for (std::size_t i = rec.rows.size() >= 10 ? rec.rows.size() - 10 : 0; i < rec.rows.size();
         ++i)
      last10.push_back(rec.rows[i].ret);
    const double m = median(last10);
    os << " " << std::lround(m);
    if (m >= -200.0) ++good;
  }
  os << "; " << good << "/5 >= -200, need 4";
  detail = os.str();
  return good >= 4;
}

bool check_noise_ordering(std::string& detail) {
  const std::vector<RunRecord> full = run_naf_seeds(pendulum_naf_cfg(true, true, true));
  const std::vector<RunRecord> bare = run_naf_seeds(pendulum_naf_cfg(true, false, false));
  auto auc = [](const RunRecord& rec) {
    double s = 0.0;
    for (std::size_t i = 50; i < rec.rows.size() && i < 100; ++i) s += rec.rows[i].ret;
    return s;
  };
  int good = 0;
  std::ostringstream os;
  os << "AUC(ep 50-100) full vs bare:";
  for (std::size_t i = 0; i < full.size(); ++i) {
    const double a = auc(full[i]), b = auc(bare[i]);
    os << " [" << std::lround(a) << "," << std::lround(b) << "]";
    if (a >= b) ++good;
  }
  os << "; " << good << "/5 ordered, need 4";
  detail = os.str();
  return good >= 4;
}

// ---- criteria 7/8: AE-DYNA pendulum ---------------------------------------

ExperimentConfig pendulum_aedyna_cfg(bool noisy, int models, long max_real_steps) {
  Json j{{"id", "acc"}, {"algorithm", "aedyna-sac"}, {"env", "pendulum"}};
  j["aedyna"] = {{"max_real_steps", max_real_steps}};
  j["aedyna"]["ensemble"] = {{"models", models}};
  if (noisy) j["env_config"] = {{"obs_noise_sigma", 0.05}};
  return ExperimentConfig::from_json(j);
}

struct AedynaSeedOutcome {
  bool success = false;
  long data_points = 0;  // collected training transitions (the paper's count)
};

std::vector<AedynaSeedOutcome> run_aedyna_seeds(const ExperimentConfig& cfg) {
  std::vector<AedynaSeedOutcome> out(cfg.seeds.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
    threads.emplace_back([&, i] {
      auto env = cfg.make_env(cfg.seeds[i]);
      const AedynaResult res = run_aedyna(*env, cfg.aedyna_config(), cfg.seeds[i]);
      out[i] = {res.success, res.collected_steps};
    });
  for (auto& t : threads) t.join();
  return out;
}

bool check_aedyna_efficiency(const std::vector<AedynaSeedOutcome>& clean, std::string& detail) {
  const auto noisy = run_aedyna_seeds(pendulum_aedyna_cfg(true, 3, 4000));
  int cgood = 0, ngood = 0;
  std::ostringstream os;
  os << "clean data-points:";
  for (const auto& o : clean) {
    os << " " << o.data_points << (o.success ? "*" : "");
    if (o.success && o.data_points <= 2000) ++cgood;
  }
  os << "; noisy data-points:";
  for (const auto& o : noisy) {
    os << " " << o.data_points << (o.success ? "*" : "");
    if (o.success && o.data_points <= 4000) ++ngood;
  }
  os << "; " << cgood << "/5 <=2000 and " << ngood << "/5 <=4000, need 3 each";
  detail = os.str();
  return cgood >= 3 && ngood >= 3;
}

bool check_ensemble_size(const std::vector<AedynaSeedOutcome>& m3, std::string& detail) {
  const long budget = 2000;
  const auto m1 = run_aedyna_seeds(pendulum_aedyna_cfg(false, 1, budget));
  int good = 0;
  std::ostringstream os;
  os << "data-points-to-success (M=3 vs M=1, ! = no success):";
  for (std::size_t i = 0; i < m3.size(); ++i) {
    const long s3 = m3[i].success ? m3[i].data_points : budget + 1;
    const long s1 = m1[i].success ? m1[i].data_points : budget + 1;
    os << " [" << (m3[i].success ? std::to_string(s3) : "!") << ","
       << (m1[i].success ? std::to_string(s1) : "!") << "]";
    if (m3[i].success && s3 < s1) ++good;
  }
  os << "; " << good << "/5 faster, need 3";
  detail = os.str();
  return good >= 3;
}

// ---- criteria 9/10: FEL sim ----------------------------------------------

bool check_fel_aedyna(std::string& detail) {
  Json j{{"id", "acc"}, {"algorithm", "aedyna-sac"}, {"env", "fel-sim"}, {"seeds", {1}}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(j);
  auto env = cfg.make_env(1);
  SacAgent* agent = nullptr;
  SacAgent holder(env->spec(), cfg.aedyna_config().sac, 1);
  agent = &holder;
  const AedynaResult res = run_aedyna(*env, cfg.aedyna_config(), 1, agent);

  // verify with the deterministic policy on a fresh env
  auto venv = cfg.make_env(99);
  int successes = 0;
  double len_sum = 0.0, final_sum = 0.0;
  const int n_ep = 50;
  for (int ep = 0; ep < n_ep; ++ep) {
    Eigen::VectorXd s = venv->reset();
    double final_r = 0.0;
    int t = 0;
    for (; t < 200; ++t) {
      const StepResult r = venv->step(agent->act(s, true));
      s = r.obs;
      final_r = r.reward;
      if (r.done && r.info.count("success")) {
        ++successes;
        ++t;
        break;
      }
      if (r.done) {
        ++t;
        break;
      }
    }
    len_sum += t;
    final_sum += final_r;
  }
  const double mean_len = len_sum / n_ep, mean_final = final_sum / n_ep;
  std::ostringstream os;
  os << "data-points " << res.collected_steps << " (<=500), success " << successes << "/50, "
     << "mean len " << mean_len << " (<=6), mean final reward " << mean_final << " (>=-0.06)";
  detail = os.str();
  return res.collected_steps <= 500 && successes == n_ep && mean_len <= 6.0 &&
         mean_final >= -0.06;
}

bool check_fel_naf(std::string& detail) {
  Json j{{"id", "acc"}, {"algorithm", "naf2"}, {"env", "fel-sim"}, {"seeds", {1}},
         {"episodes", 200}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(j);
  auto env = cfg.make_env(1);
  NafConfig ncfg = cfg.naf_config();
  ncfg.max_total_steps = 1000;
  NafAgent agent(env->spec(), ncfg, 1);
  const RunRecord rec = train_naf(*env, ncfg, cfg.episodes, 1, &agent);

  auto venv = cfg.make_env(77);
  int successes = 0;
  double len_sum = 0.0;
  const int n_ep = 100;
  Rng dummy(1);
  for (int ep = 0; ep < n_ep; ++ep) {
    Eigen::VectorXd s = venv->reset();
    int t = 0;
    for (; t < 200; ++t) {
      const Eigen::VectorXd a = select_action(agent.net1, s, ActionMode::Eval, 0.0, 0.0, dummy);
      const StepResult r = venv->step(a);
      s = r.obs;
      if (r.done && r.info.count("success")) {
        ++successes;
        ++t;
        break;
      }
      if (r.done) {
        ++t;
        break;
      }
    }
    len_sum += t;
  }
  const double mean_len = len_sum / n_ep;
  std::ostringstream os;
  os << "train steps " << rec.total_steps << " (<=1000), success " << successes
     << "/100, mean len " << mean_len << " (<=5)";
  detail = os.str();
  return rec.total_steps <= 1000 && successes == n_ep && mean_len <= 5.0;
}

// ---- criterion 11: accounting --------------------------------------------

bool check_accounting(std::string& detail) {
  FelSimEnv env({}, 4);
  AedynaConfig cfg;
  cfg.initial_random_steps = 60;
  cfg.batch_steps = 30;
  cfg.controller_steps_per_epoch = 120;
  cfg.controller_warmup_steps = 32;
  cfg.model_horizon = 10;
  cfg.collection_horizon = 10;
  cfg.test_episodes = 2;
  cfg.test_horizon = 25;
  cfg.max_real_steps = 150;
  cfg.max_epochs = 3;
  cfg.success_requires_all_done = true;
  cfg.ensemble.models = 2;
  cfg.ensemble.max_epochs = 40;
  cfg.sac.hidden = {16, 16};
  const AedynaResult res = run_aedyna(env, cfg, 5);

  long expected = res.collected_steps;
  for (const auto& ep : res.epochs)
    if (ep.tested_real) expected += ep.real_test_steps;
  const bool exact = (res.real_steps == env.step_count()) && (res.real_steps == expected);

  // purity re-check: controller training on a fixed setup touches no real env
  Dataset data;
  std::vector<Eigen::VectorXd> starts;
  Rng rng(6);
  FelSimEnv env2(FelSimConfig{}, 7);
  collect_real_data(env2, nullptr, 50, 0.0, 10, data, starts, rng);
  const long before = env2.step_count();
  Ensemble ens = make_ensemble(cfg.ensemble, 4, 4, 8);
  train_model(ens, data, rng);
  SacAgent agent(env2.spec(), cfg.sac, 9);
  train_controller_on_model(agent, ens, cfg, starts, rng);
  const bool pure = env2.step_count() == before;

  std::ostringstream os;
  os << "real_steps " << res.real_steps << " == env counter " << env.step_count()
     << " == schedule " << expected << "; controller training added "
     << (env2.step_count() - before) << " real calls";
  detail = os.str();
  return exact && pure;
}

// ---- criterion 12: determinism -------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool check_determinism(std::string& detail) {
  Json j{{"id", "det"},   {"algorithm", "naf2"}, {"env", "pendulum"},
         {"seeds", {1, 2}}, {"episodes", 3},       {"verification_episodes", 5}};
  j["naf"] = {{"warmup_steps", 100}, {"hidden", {16, 16}}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(j);
  const fs::path base = fs::temp_directory_path() / "felrl_acceptance_det";
  fs::remove_all(base);
  const std::string d1 = run_experiment(cfg, (base / "a").string());
  const std::string d2 = run_experiment(cfg, (base / "b").string());
  int mismatches = 0, compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(d1)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    const fs::path rel = fs::relative(e.path(), d1);
    ++compared;
    if (slurp(e.path()) != slurp(fs::path(d2) / rel)) ++mismatches;
  }
  fs::remove_all(base);
  std::ostringstream os;
  os << compared << " CSVs compared, " << mismatches << " byte mismatches";
  detail = os.str();
  return compared > 0 && mismatches == 0;
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string d;

  report(1, "gradient correctness", check_gradients(d), d);
  report(2, "NAF algebra", check_naf_algebra(d), d);
  report(3, "anchored-loss algebra", check_anchored_algebra(d), d);
  report(4, "epistemic uncertainty", check_epistemic(d), d);
  report(5, "NAF2 pendulum threshold", check_naf_pendulum(d), d);
  report(6, "noise-robustness ordering", check_noise_ordering(d), d);
  // Criteria 7 and 8 share the clean M=3 runs (identical configuration).
  const auto clean_m3 = run_aedyna_seeds(pendulum_aedyna_cfg(false, 3, 2000));
  report(7, "AE-DYNA sample efficiency", check_aedyna_efficiency(clean_m3, d), d);
  report(8, "ensemble-size ablation", check_ensemble_size(clean_m3, d), d);
  report(9, "FEL-sim AE-DYNA", check_fel_aedyna(d), d);
  report(10, "FEL-sim NAF2", check_fel_naf(d), d);
  report(11, "orchestrator accounting", check_accounting(d), d);
  report(12, "determinism", check_determinism(d), d);

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d/12 criteria passed in %.0fs\n", 12 - g_failures, secs);
  return g_failures == 0 ? 0 : 1;
}
