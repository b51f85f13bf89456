#include "felrl/aedyna.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace felrl {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

Eigen::VectorXd random_action(const EnvSpec& spec, Rng& rng) {
  Eigen::VectorXd a(spec.act_dim);
  for (int i = 0; i < spec.act_dim; ++i) a[i] = rng.uniform(spec.action_low[i], spec.action_high[i]);
  return a;
}

const Eigen::VectorXd& pick_start(const std::vector<Eigen::VectorXd>& starts, Rng& rng) {
  return starts[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(starts.size())))];
}

}  // namespace

void collect_real_data(Env& env,
                       const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>* policy,
                       int n_steps, double sigma_x, int horizon, Dataset& dataset,
                       std::vector<Eigen::VectorXd>& start_states, Rng& rng,
                       std::vector<double>* episode_returns) {
  const EnvSpec& spec = env.spec();
  int remaining = n_steps;
  while (remaining > 0) {
    Eigen::VectorXd s = env.reset();
    start_states.push_back(s);
    double ep_ret = 0.0;
    int t = 0;
    while (t < horizon && remaining > 0) {
      Eigen::VectorXd a;
      if (policy) {
        a = (*policy)(s);
        for (int i = 0; i < a.size(); ++i)
          a[i] = std::clamp(a[i] + rng.normal(0.0, sigma_x), spec.action_low[i],
                            spec.action_high[i]);
      } else {
        a = random_action(spec, rng);
      }
      const StepResult sr = env.step(a);
      const bool terminal = sr.done && !sr.info.count("timeout");
      dataset.push({s, a, sr.obs, sr.reward, terminal});
      s = sr.obs;
      ep_ret += sr.reward;
      ++t;
      --remaining;
      if (sr.done) break;
    }
    if (episode_returns) episode_returns->push_back(ep_ret);
  }
}

void train_controller_on_model(SacAgent& agent, const Ensemble& ens, const AedynaConfig& cfg,
                               const std::vector<Eigen::VectorXd>& start_states, Rng& rng) {
  if (cfg.controller_steps_per_epoch <= 0) return;
  EnsembleSampler sampler(ens, cfg.strategy);
  Dataset synth(static_cast<std::size_t>(cfg.controller_steps_per_epoch));

  Eigen::VectorXd s = pick_start(start_states, rng);
  sampler.begin_episode(rng);
  int t = 0;
  for (int step = 0; step < cfg.controller_steps_per_epoch; ++step) {
    const Eigen::VectorXd a = agent.act(s, false);
    auto [s2, r] = sampler.sample(s, a, rng);
    const bool terminal = cfg.synthetic_done_reward && r >= *cfg.synthetic_done_reward;
    synth.push({s, a, s2, r, terminal});
    if (static_cast<int>(synth.size()) >= cfg.controller_warmup_steps) {
      for (int u = 0; u < cfg.controller_updates_per_step; ++u) {
        const auto batch = synth.sample_batch(agent.cfg.batch_size, agent.rng);
        critic_update(agent, batch);
        actor_update(agent, batch);
      }
    }
    ++t;
    if (terminal || t >= cfg.model_horizon) {
      s = pick_start(start_states, rng);
      sampler.begin_episode(rng);
      t = 0;
    } else {
      s = std::move(s2);
    }
  }
}

std::vector<double> validate_on_models(SacAgent& agent, const Ensemble& ens,
                                       const AedynaConfig& cfg,
                                       const std::vector<Eigen::VectorXd>& start_states, Rng& rng,
                                       std::vector<double>* stds) {
  constexpr int kEpisodes = 10;
  std::vector<double> means;
  if (stds) stds->clear();
  for (int j = 0; j < static_cast<int>(ens.members.size()); ++j) {
    std::vector<double> rets;
    for (int ep = 0; ep < kEpisodes; ++ep) {
      Eigen::VectorXd s = pick_start(start_states, rng);
      double ret = 0.0;
      for (int t = 0; t < cfg.model_horizon; ++t) {
        const Eigen::VectorXd a = agent.act(s, true);
        const Eigen::VectorXd out = predict_member(ens, j, s, a);
        const double r = out[ens.obs_dim];
        ret += r;
        if (cfg.synthetic_done_reward && r >= *cfg.synthetic_done_reward) break;
        s = out.head(ens.obs_dim);
      }
      rets.push_back(ret);
    }
    const double mean = std::accumulate(rets.begin(), rets.end(), 0.0) / rets.size();
    means.push_back(mean);
    if (stds) {
      double var = 0.0;
      for (double r : rets) var += (r - mean) * (r - mean);
      stds->push_back(std::sqrt(var / rets.size()));
    }
  }
  return means;
}

bool improvement_gate(const std::vector<std::vector<double>>& history, double phi) {
  if (history.empty()) throw ContractViolation("improvement_gate: no validation yet");
  if (history.size() == 1) return true;
  const auto& prev = history[history.size() - 2];
  const auto& curr = history.back();
  int improved = 0;
  for (std::size_t j = 0; j < curr.size(); ++j)
    if (curr[j] > prev[j]) ++improved;
  const int needed = static_cast<int>(std::ceil(phi * static_cast<double>(curr.size())));
  return improved < needed;
}

namespace {

struct RealTest {
  double mean_return = 0.0;
  long steps = 0;
  bool all_done_early = true;
};

RealTest run_real_test(Env& env, SacAgent& agent, const AedynaConfig& cfg) {
  RealTest res;
  double total = 0.0;
  for (int ep = 0; ep < cfg.test_episodes; ++ep) {
    Eigen::VectorXd s = env.reset();
    double ret = 0.0;
    bool done_early = false;
    for (int t = 0; t < cfg.test_horizon; ++t) {
      const StepResult sr = env.step(agent.act(s, true));
      ++res.steps;
      ret += sr.reward;
      s = sr.obs;
      if (sr.done) {
        done_early = !sr.info.count("timeout");
        break;
      }
    }
    res.all_done_early = res.all_done_early && done_early;
    total += ret;
  }
  res.mean_return = total / cfg.test_episodes;
  return res;
}

}  // namespace

AedynaResult run_aedyna(Env& env, const AedynaConfig& cfg, std::uint64_t seed, SacAgent* out_agent,
                        Ensemble* out_ensemble) {
  AedynaResult result;
  const long base_steps = env.step_count();
  env.seed(mix(seed, 11));
  Rng rng(mix(seed, 13));

  if (cfg.max_real_steps < cfg.initial_random_steps) return result;

  Dataset data(std::nullopt);
  std::vector<Eigen::VectorXd> start_states;
  std::vector<double> batch_returns;
  collect_real_data(env, nullptr, cfg.initial_random_steps, 0.0, cfg.collection_horizon, data,
                    start_states, rng, &batch_returns);

  const EnvSpec& spec = env.spec();
  Ensemble ens = make_ensemble(cfg.ensemble, spec.obs_dim, spec.act_dim, rng.next_seed());
  SacAgent agent(spec, cfg.sac, rng.next_seed());
  std::vector<std::vector<double>> history;

  double last_batch_return =
      std::accumulate(batch_returns.begin(), batch_returns.end(), 0.0) / batch_returns.size();

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    train_model(ens, data, rng);
    reset_controller(agent, rng.next_seed());
    train_controller_on_model(agent, ens, cfg, start_states, rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.dataset_size = data.size();
    rec.batch_return = last_batch_return;
    rec.model_returns = validate_on_models(agent, ens, cfg, start_states, rng,
                                           &rec.model_return_stds);
    history.push_back(rec.model_returns);

    if (improvement_gate(history, cfg.improvement_fraction)) {
      const RealTest test = run_real_test(env, agent, cfg);
      rec.tested_real = true;
      rec.real_test_return = test.mean_return;
      rec.real_test_steps = test.steps;
      const bool ok = cfg.success_requires_all_done ? test.all_done_early
                                                    : test.mean_return >= cfg.success_threshold;
      if (ok) {
        result.epochs.push_back(rec);
        result.success = true;
        break;
      }
    }
    result.epochs.push_back(rec);

    if (static_cast<long>(data.size()) + cfg.batch_steps > cfg.max_real_steps) break;
    std::vector<double> rets;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> policy =
        [&agent](const Eigen::VectorXd& s) { return agent.act(s, true); };
    collect_real_data(env, &policy, cfg.batch_steps, cfg.exploration_sigma, cfg.collection_horizon,
                      data, start_states, rng, &rets);
    last_batch_return = std::accumulate(rets.begin(), rets.end(), 0.0) / rets.size();
  }

  result.real_steps = env.step_count() - base_steps;
  result.collected_steps = static_cast<long>(data.size());
  if (out_agent) *out_agent = agent;
  if (out_ensemble) *out_ensemble = ens;
  return result;
}

}  // namespace felrl
