#include "felrl/naf.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

namespace felrl {

namespace {

Eigen::VectorXd clip_to(const Eigen::VectorXd& a, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi) {
  return a.cwiseMax(lo).cwiseMin(hi);
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace

NafNet make_naf_net(int obs_dim, int act_dim, const std::vector<int>& hidden,
                    const Eigen::VectorXd& act_low, const Eigen::VectorXd& act_high, Rng& rng) {
  NafNet n;
  n.act_dim = act_dim;
  n.act_low = act_low;
  n.act_high = act_high;
  n.net = make_mlp(obs_dim, hidden, 1 + act_dim + act_dim * (act_dim + 1) / 2);
  init_fanin(n.net, rng);
  return n;
}

NafHeads split_heads(const NafNet& net, const Eigen::VectorXd& y) {
  NafHeads h;
  h.v = y[0];
  // mu is kept inside the action box via a scaled tanh; without the squash the
  // regression is free to push mu arbitrarily far outside the bounds.
  h.mu.resize(net.act_dim);
  for (int i = 0; i < net.act_dim; ++i) {
    const double c = 0.5 * (net.act_high[i] + net.act_low[i]);
    const double sc = 0.5 * (net.act_high[i] - net.act_low[i]);
    h.mu[i] = c + sc * std::tanh(y[1 + i]);
  }
  h.l_entries = y.segment(1 + net.act_dim, net.act_dim * (net.act_dim + 1) / 2);
  return h;
}

Eigen::MatrixXd build_L(const Eigen::VectorXd& l_entries, int d) {
  if (l_entries.size() != d * (d + 1) / 2) throw ContractViolation("build_L: wrong entry count");
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d, d);
  int idx = 0;
  for (int j = 0; j < d; ++j)
    for (int k = 0; k <= j; ++k, ++idx) L(j, k) = (k == j) ? std::exp(l_entries[idx]) : l_entries[idx];
  return L;
}

Eigen::MatrixXd build_P(const Eigen::VectorXd& l_entries, int d) {
  const Eigen::MatrixXd L = build_L(l_entries, d);
  return L * L.transpose();
}

double q_value(const NafNet& net, const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
  const NafHeads h = split_heads(net, forward(net.net, s));
  const Eigen::VectorXd u = a - h.mu;
  const Eigen::MatrixXd P = build_P(h.l_entries, net.act_dim);
  return h.v - 0.5 * u.dot(P * u);
}

double v_value(const NafNet& net, const Eigen::VectorXd& s) { return forward(net.net, s)[0]; }

Eigen::VectorXd policy_mean(const NafNet& net, const Eigen::VectorXd& s) {
  return split_heads(net, forward(net.net, s)).mu;
}

Eigen::VectorXd select_action(const NafNet& net, const Eigen::VectorXd& s, ActionMode mode,
                              double sigma, double clip_c, Rng& rng) {
  Eigen::VectorXd a = policy_mean(net, s);
  if (mode == ActionMode::Train && sigma > 0.0) {
    for (int i = 0; i < a.size(); ++i)
      a[i] += std::clamp(rng.normal(0.0, sigma), -clip_c, clip_c);
  }
  return clip_to(a, net.act_low, net.act_high);
}

double td_target(double r, const Eigen::VectorXd& s2, bool done, double gamma,
                 const std::vector<const NafNet*>& targets) {
  if (targets.empty() || targets.size() > 2)
    throw ContractViolation("td_target: expected 1 or 2 target nets");
  if (done) return r;
  double v = v_value(*targets[0], s2);
  if (targets.size() == 2) v = std::min(v, v_value(*targets[1], s2));
  return r + gamma * v;
}

NafAgent::NafAgent(const EnvSpec& spec, NafConfig cfg_in, std::uint64_t seed)
    : cfg(cfg_in),
      net1(),
      net2(),
      targ1(),
      targ2(),
      opt1(),
      opt2(),
      rng(mix(seed, 17)) {
  Rng init_rng(mix(seed, 23));
  net1 = make_naf_net(spec.obs_dim, spec.act_dim, cfg.hidden, spec.action_low, spec.action_high,
                      init_rng);
  net2 = make_naf_net(spec.obs_dim, spec.act_dim, cfg.hidden, spec.action_low, spec.action_high,
                      init_rng);
  targ1 = net1;
  targ2 = net2;
  opt1 = make_adam(net1.net, cfg.lr);
  opt2 = make_adam(net2.net, cfg.lr);
}

Eigen::VectorXd NafAgent::act(const Eigen::VectorXd& s, ActionMode mode) {
  if (mode == ActionMode::Train) {
    // Unclipped Gaussian exploration around the online policy; the scale decays
    // per episode and is floored at the smoothing sigma.
    Eigen::VectorXd a = policy_mean(net1, s);
    for (int i = 0; i < a.size(); ++i) a[i] += rng.normal(0.0, expl_sigma);
    return clip_to(a, net1.act_low, net1.act_high);
  }
  return select_action(net1, s, ActionMode::Eval, 0.0, 0.0, rng);
}

namespace {

// Fills one dY column for a squared-error term e = Q - y at (s, a).
void q_backward_column(const NafNet& net, const Eigen::VectorXd& a, const NafHeads& h,
                       double dloss_dq, Eigen::Ref<Eigen::VectorXd> dy_col, double* q_out) {
  const int d = net.act_dim;
  const Eigen::MatrixXd L = build_L(h.l_entries, d);
  const Eigen::VectorXd u = a - h.mu;
  const Eigen::VectorXd w = L.transpose() * u;
  if (q_out) *q_out = h.v - 0.5 * w.squaredNorm();
  dy_col[0] = dloss_dq;
  const Eigen::VectorXd dmu = L * w;  // dq/dmu = P u
  for (int i = 0; i < d; ++i) {
    // chain through mu = c + sc * tanh(raw)
    const double c = 0.5 * (net.act_high[i] + net.act_low[i]);
    const double sc = 0.5 * (net.act_high[i] - net.act_low[i]);
    const double t = (h.mu[i] - c) / sc;
    dy_col[1 + i] = dloss_dq * dmu[i] * sc * (1.0 - t * t);
  }
  int idx = 0;
  for (int j = 0; j < d; ++j)
    for (int k = 0; k <= j; ++k, ++idx) {
      double g = -u[j] * w[k];  // dq/dL = -(u u^T) L
      if (k == j) g *= L(j, j);
      dy_col[1 + d + idx] = dloss_dq * g;
    }
}

std::vector<double> compute_targets(NafAgent& agent, const std::vector<const Transition*>& batch) {
  const auto& cfg = agent.cfg;
  std::vector<const NafNet*> targets{&agent.targ1};
  if (cfg.twin) targets.push_back(&agent.targ2);

  // One batched forward per target net; per-sample head algebra after that.
  Eigen::MatrixXd s2(batch[0]->s2.size(), static_cast<long>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) s2.col(static_cast<long>(b)) = batch[b]->s2;
  std::vector<Eigen::MatrixXd> outs;
  outs.reserve(targets.size());
  for (const NafNet* tn : targets) outs.push_back(forward_batch(tn->net, s2));

  std::vector<double> y(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Transition& t = *batch[b];
    if (t.done) {
      y[b] = t.r;
      continue;
    }
    Eigen::VectorXd eps;
    if (cfg.smoothing_sigma > 0.0) {
      eps.resize(agent.targ1.act_dim);
      for (int i = 0; i < eps.size(); ++i)
        eps[i] = std::clamp(agent.rng.normal(0.0, cfg.smoothing_sigma), -cfg.smoothing_clip,
                            cfg.smoothing_clip);
    }
    double qmin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const NafNet* tn = targets[k];
      const NafHeads h = split_heads(*tn, outs[k].col(static_cast<long>(b)));
      double q = h.v;
      if (eps.size() > 0) {
        // Each target net evaluates its own smoothed, clipped policy action.
        const Eigen::VectorXd a = clip_to(h.mu + eps, tn->act_low, tn->act_high);
        const Eigen::VectorXd w =
            build_L(h.l_entries, tn->act_dim).transpose() * (a - h.mu);
        q -= 0.5 * w.squaredNorm();
      }
      qmin = std::min(qmin, q);
    }
    y[b] = t.r + cfg.gamma * qmin;
  }
  return y;
}

double regress_net(NafNet& net, Adam& opt, const Eigen::MatrixXd& s_batch,
                   const std::vector<const Transition*>& batch, const std::vector<double>& y) {
  const auto B = batch.size();
  ForwardCache cache;
  const Eigen::MatrixXd out = forward_batch(net.net, s_batch, &cache);
  Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(net.net.out_dim(), static_cast<long>(B));
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const NafHeads h = split_heads(net, out.col(b));
    double q = 0.0;
    Eigen::VectorXd col(net.net.out_dim());
    q_backward_column(net, batch[b]->a, h, 1.0, col, &q);
    const double e = q - y[b];
    loss += e * e;
    dy.col(b) = (2.0 * e / static_cast<double>(B)) * col;
  }
  loss /= static_cast<double>(B);
  if (!std::isfinite(loss)) throw TrainingDivergence("naf_update: non-finite loss");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.net.params.size());
  backward(net.net, cache, dy, grad);
  adam_step(net.net, grad, opt);
  return loss;
}

}  // namespace

NafUpdateResult naf_update(NafAgent& agent, const std::vector<const Transition*>& batch) {
  if (batch.empty()) throw ContractViolation("naf_update: empty batch");
  const std::vector<double> y = compute_targets(agent, batch);
  Eigen::MatrixXd s_batch(batch[0]->s.size(), static_cast<long>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) s_batch.col(static_cast<long>(b)) = batch[b]->s;

  NafUpdateResult res;
  res.loss1 = regress_net(agent.net1, agent.opt1, s_batch, batch, y);
  if (agent.cfg.twin) res.loss2 = regress_net(agent.net2, agent.opt2, s_batch, batch, y);
  soft_update(agent.targ1.net, agent.net1.net, agent.cfg.tau);
  if (agent.cfg.twin) soft_update(agent.targ2.net, agent.net2.net, agent.cfg.tau);
  return res;
}

namespace {

double bellman_diagnostic(NafAgent& agent, const Dataset& buf, Rng& rng) {
  if (buf.empty()) return 0.0;
  const auto n = std::min<std::size_t>(256, buf.size());
  const auto batch = buf.sample_batch(n, rng);
  std::vector<const NafNet*> targets{&agent.targ1};
  if (agent.cfg.twin) targets.push_back(&agent.targ2);
  double err = 0.0;
  for (const Transition* t : batch) {
    const double y = td_target(t->r, t->s2, t->done, agent.cfg.gamma, targets);
    const double e = q_value(agent.net1, t->s, t->a) - y;
    err += e * e;
  }
  return err / static_cast<double>(n);
}

}  // namespace

RunRecord train_naf(Env& env, const NafConfig& cfg, int episodes, std::uint64_t seed,
                    NafAgent* out_agent) {
  NafAgent agent(env.spec(), cfg, seed);
  Dataset buf(cfg.buffer_capacity);
  Rng diag_rng(mix(seed, 31));

  // Held-out states for the mean-V diagnostic.
  env.seed(mix(seed, 41));
  std::vector<Eigen::VectorXd> held;
  for (int i = 0; i < 200; ++i) held.push_back(env.reset());
  env.seed(mix(seed, 43));

  const double range = (agent.net1.act_high - agent.net1.act_low).maxCoeff();
  const double sigma0 = cfg.expl_sigma0 >= 0.0 ? cfg.expl_sigma0 : 0.25 * range;

  RunRecord rec;
  for (int ep = 0; ep < episodes; ++ep) {
    if (cfg.max_total_steps > 0 && rec.total_steps >= cfg.max_total_steps) break;
    agent.expl_sigma = std::max(cfg.smoothing_sigma, sigma0 * std::pow(cfg.expl_decay, ep));
    Eigen::VectorXd s = env.reset();
    double ret = 0.0;
    int steps = 0;
    while (true) {
      const Eigen::VectorXd a = agent.act(s, ActionMode::Train);
      const StepResult sr = env.step(a);
      const bool terminal = sr.done && !sr.info.count("timeout");
      buf.push({s, a, sr.obs, sr.reward, terminal});
      s = sr.obs;
      ret += sr.reward;
      ++steps;
      ++rec.total_steps;
      if (buf.size() >= static_cast<std::size_t>(cfg.warmup_steps))
        for (int u = 0; u < cfg.updates_per_step; ++u)
          naf_update(agent, buf.sample_batch(cfg.batch_size, agent.rng));
      if (sr.done) break;
      if (cfg.max_total_steps > 0 && rec.total_steps >= cfg.max_total_steps) break;
    }
    EpisodeRow row;
    row.episode = ep;
    row.steps = steps;
    row.ret = ret;
    row.bellman_error = bellman_diagnostic(agent, buf, diag_rng);
    double mv = 0.0;
    for (const auto& hs : held) mv += v_value(agent.net1, hs);
    row.mean_v = mv / static_cast<double>(held.size());
    rec.rows.push_back(row);
  }
  if (out_agent) *out_agent = agent;
  return rec;
}

void save_naf_policy(std::ostream& os, const NafNet& net) {
  os << "nafpolicy v1\n" << net.act_dim << '\n' << std::hexfloat;
  for (int i = 0; i < net.act_dim; ++i) os << net.act_low[i] << ' ';
  os << '\n';
  for (int i = 0; i < net.act_dim; ++i) os << net.act_high[i] << ' ';
  os << std::defaultfloat << '\n';
  save_net(os, net.net);
}

NafNet load_naf_policy(std::istream& is) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != "nafpolicy" || version != "v1")
    throw ContractViolation("checkpoint: bad naf policy header");
  NafNet n;
  is >> n.act_dim;
  n.act_low.resize(n.act_dim);
  n.act_high.resize(n.act_dim);
  std::string tok;
  for (int i = 0; i < n.act_dim; ++i) {
    is >> tok;
    n.act_low[i] = std::strtod(tok.c_str(), nullptr);
  }
  for (int i = 0; i < n.act_dim; ++i) {
    is >> tok;
    n.act_high[i] = std::strtod(tok.c_str(), nullptr);
  }
  n.net = load_net(is);
  return n;
}

}  // namespace felrl
