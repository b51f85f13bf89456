#include "felrl/sac.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

namespace felrl {

namespace {

constexpr double kLogSqrt2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)
constexpr double kSquashEps = 1e-6;

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

void init_nets(SacAgent& a, std::uint64_t seed) {
  Rng init_rng(seed);
  a.actor = make_mlp(a.obs_dim, a.cfg.hidden, 2 * a.act_dim);
  init_fanin(a.actor, init_rng);
  a.q1 = make_mlp(a.obs_dim + a.act_dim, a.cfg.hidden, 1);
  init_fanin(a.q1, init_rng);
  a.q2 = make_mlp(a.obs_dim + a.act_dim, a.cfg.hidden, 1);
  init_fanin(a.q2, init_rng);
  a.tq1 = a.q1;
  a.tq2 = a.q2;
  a.opt_actor = make_adam(a.actor, a.cfg.lr);
  a.opt_q1 = make_adam(a.q1, a.cfg.lr);
  a.opt_q2 = make_adam(a.q2, a.cfg.lr);
  a.log_alpha = std::log(a.cfg.alpha);
}

}  // namespace

SacAgent::SacAgent(const EnvSpec& spec, SacConfig cfg_in, std::uint64_t seed)
    : cfg(cfg_in),
      obs_dim(spec.obs_dim),
      act_dim(spec.act_dim),
      act_low(spec.action_low),
      act_high(spec.action_high),
      act_center((spec.action_low + spec.action_high) / 2.0),
      act_scale((spec.action_high - spec.action_low) / 2.0),
      rng(mix(seed, 101)) {
  init_nets(*this, mix(seed, 103));
}

double SacAgent::alpha() const { return std::exp(log_alpha); }

Eigen::VectorXd SacAgent::act(const Eigen::VectorXd& s, bool deterministic) {
  return actor_sample(*this, s, rng, deterministic).action;
}

ActorSample actor_sample(const SacAgent& agent, const Eigen::VectorXd& s, Rng& rng,
                         bool deterministic) {
  const int d = agent.act_dim;
  const Eigen::VectorXd y = forward(agent.actor, s);
  ActorSample out;
  out.action.resize(d);
  for (int i = 0; i < d; ++i) {
    const double mean = y[i];
    const double logstd = std::clamp(y[d + i], agent.cfg.logstd_min, agent.cfg.logstd_max);
    const double xi = deterministic ? 0.0 : rng.normal();
    const double z = mean + std::exp(logstd) * xi;
    const double t = std::tanh(z);
    out.action[i] = agent.act_center[i] + agent.act_scale[i] * t;
    out.log_prob += -0.5 * xi * xi - logstd - kLogSqrt2Pi -
                    std::log(agent.act_scale[i] * (1.0 - t * t) + kSquashEps);
  }
  return out;
}

double critic_value(const SacAgent& agent, const Net& critic, const Eigen::VectorXd& s,
                    const Eigen::VectorXd& a) {
  Eigen::VectorXd x(agent.obs_dim + agent.act_dim);
  x << s, a;
  return forward(critic, x)[0];
}

double critic_update(SacAgent& agent, const std::vector<const Transition*>& batch) {
  if (batch.empty()) throw ContractViolation("critic_update: empty batch");
  const auto B = static_cast<long>(batch.size());
  const double alpha = agent.alpha();

  Eigen::VectorXd y(B);
  for (long b = 0; b < B; ++b) {
    const Transition& t = *batch[b];
    if (t.done) {
      y[b] = t.r;
      continue;
    }
    const ActorSample ns = actor_sample(agent, t.s2, agent.rng);
    const double q = std::min(critic_value(agent, agent.tq1, t.s2, ns.action),
                              critic_value(agent, agent.tq2, t.s2, ns.action));
    y[b] = t.r + agent.cfg.gamma * (q - alpha * ns.log_prob);
  }

  Eigen::MatrixXd x(agent.obs_dim + agent.act_dim, B);
  for (long b = 0; b < B; ++b) x.col(b) << batch[b]->s, batch[b]->a;

  double loss = 0.0;
  for (Net* critic : {&agent.q1, &agent.q2}) {
    Adam& opt = (critic == &agent.q1) ? agent.opt_q1 : agent.opt_q2;
    ForwardCache cache;
    const Eigen::MatrixXd q = forward_batch(*critic, x, &cache);
    Eigen::MatrixXd dy(1, B);
    double l = 0.0;
    for (long b = 0; b < B; ++b) {
      const double e = q(0, b) - y[b];
      l += e * e;
      dy(0, b) = 2.0 * e / static_cast<double>(B);
    }
    l /= static_cast<double>(B);
    if (!std::isfinite(l)) throw TrainingDivergence("critic_update: non-finite loss");
    loss += 0.5 * l;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(critic->params.size());
    backward(*critic, cache, dy, grad);
    adam_step(*critic, grad, opt);
  }
  soft_update(agent.tq1, agent.q1, agent.cfg.tau);
  soft_update(agent.tq2, agent.q2, agent.cfg.tau);
  return loss;
}

double actor_update(SacAgent& agent, const std::vector<const Transition*>& batch) {
  if (batch.empty()) throw ContractViolation("actor_update: empty batch");
  const auto B = static_cast<long>(batch.size());
  const int d = agent.act_dim;
  const double alpha = agent.alpha();
  const double invB = 1.0 / static_cast<double>(B);

  Eigen::MatrixXd s_batch(agent.obs_dim, B);
  for (long b = 0; b < B; ++b) s_batch.col(b) = batch[b]->s;

  ForwardCache actor_cache;
  const Eigen::MatrixXd y = forward_batch(agent.actor, s_batch, &actor_cache);

  // Reparameterized samples and squashed actions.
  Eigen::MatrixXd z(d, B), tanh_z(d, B), logstd(d, B), clamped(d, B);
  Eigen::MatrixXd x(agent.obs_dim + d, B);
  Eigen::VectorXd logp = Eigen::VectorXd::Zero(B);
  for (long b = 0; b < B; ++b) {
    for (int i = 0; i < d; ++i) {
      const double raw = y(d + i, b);
      const double ls = std::clamp(raw, agent.cfg.logstd_min, agent.cfg.logstd_max);
      clamped(i, b) = (raw > agent.cfg.logstd_min && raw < agent.cfg.logstd_max) ? 1.0 : 0.0;
      const double xi = agent.rng.normal();
      const double zz = y(i, b) + std::exp(ls) * xi;
      const double t = std::tanh(zz);
      z(i, b) = zz;
      tanh_z(i, b) = t;
      logstd(i, b) = ls;
      x.col(b).segment(agent.obs_dim + i, 1)[0] = agent.act_center[i] + agent.act_scale[i] * t;
      logp[b] += -0.5 * xi * xi - ls - kLogSqrt2Pi -
                 std::log(agent.act_scale[i] * (1.0 - t * t) + kSquashEps);
    }
    x.col(b).head(agent.obs_dim) = batch[b]->s;
  }

  // dQ/da of the per-sample min critic.
  ForwardCache c1, c2;
  const Eigen::MatrixXd q1 = forward_batch(agent.q1, x, &c1);
  const Eigen::MatrixXd q2 = forward_batch(agent.q2, x, &c2);
  Eigen::MatrixXd dy1 = Eigen::MatrixXd::Zero(1, B), dy2 = Eigen::MatrixXd::Zero(1, B);
  double loss = 0.0;
  for (long b = 0; b < B; ++b) {
    const double qmin = std::min(q1(0, b), q2(0, b));
    loss += invB * (alpha * logp[b] - qmin);
    // Minimizing the actor loss: d(-qmin)/dq = -1/B on the selected critic.
    (q1(0, b) <= q2(0, b) ? dy1 : dy2)(0, b) = -invB;
  }
  if (!std::isfinite(loss)) throw TrainingDivergence("actor_update: non-finite loss");
  Eigen::VectorXd scratch1 = Eigen::VectorXd::Zero(agent.q1.params.size());
  Eigen::VectorXd scratch2 = Eigen::VectorXd::Zero(agent.q2.params.size());
  Eigen::MatrixXd dx1, dx2;
  backward(agent.q1, c1, dy1, scratch1, &dx1);
  backward(agent.q2, c2, dy2, scratch2, &dx2);

  // Chain into actor outputs.
  Eigen::MatrixXd dy_actor = Eigen::MatrixXd::Zero(2 * d, B);
  for (long b = 0; b < B; ++b) {
    for (int i = 0; i < d; ++i) {
      const double t = tanh_z(i, b);
      const double sc = agent.act_scale[i];
      const double one_m_t2 = 1.0 - t * t;
      const double da = dx1(agent.obs_dim + i, b) + dx2(agent.obs_dim + i, b);
      const double dlogp_dz = 2.0 * sc * t * one_m_t2 / (sc * one_m_t2 + kSquashEps);
      const double dz = invB * alpha * dlogp_dz + da * sc * one_m_t2;
      dy_actor(i, b) = dz;
      dy_actor(d + i, b) =
          clamped(i, b) * (dz * (z(i, b) - y(i, b)) - invB * alpha);
    }
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(agent.actor.params.size());
  backward(agent.actor, actor_cache, dy_actor, grad);
  adam_step(agent.actor, grad, agent.opt_actor);

  if (agent.cfg.auto_alpha) {
    const double target_entropy = -static_cast<double>(d);
    const double dlogalpha = -agent.alpha() * (logp.mean() + target_entropy);
    agent.log_alpha -= agent.cfg.alpha_lr * dlogalpha;
  }
  return loss;
}

void reset_controller(SacAgent& agent, std::uint64_t seed) {
  agent.rng = Rng(mix(seed, 101));
  init_nets(agent, mix(seed, 103));
}

void save_sac_actor(std::ostream& os, const SacAgent& agent) {
  os << "sacpolicy v1\n" << agent.act_dim << '\n' << std::hexfloat;
  for (int i = 0; i < agent.act_dim; ++i) os << agent.act_low[i] << ' ';
  os << '\n';
  for (int i = 0; i < agent.act_dim; ++i) os << agent.act_high[i] << ' ';
  os << std::defaultfloat << '\n';
  save_net(os, agent.actor);
}

Eigen::VectorXd SacPolicy::act(const Eigen::VectorXd& s) const {
  const int d = static_cast<int>(act_low.size());
  const Eigen::VectorXd y = forward(actor, s);
  Eigen::VectorXd a(d);
  for (int i = 0; i < d; ++i) {
    const double c = (act_low[i] + act_high[i]) / 2.0;
    const double sc = (act_high[i] - act_low[i]) / 2.0;
    a[i] = c + sc * std::tanh(y[i]);
  }
  return a;
}

SacPolicy load_sac_actor(std::istream& is) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != "sacpolicy" || version != "v1")
    throw ContractViolation("checkpoint: bad sac policy header");
  SacPolicy p;
  int d = 0;
  is >> d;
  p.act_low.resize(d);
  p.act_high.resize(d);
  std::string tok;
  for (int i = 0; i < d; ++i) {
    is >> tok;
    p.act_low[i] = std::strtod(tok.c_str(), nullptr);
  }
  for (int i = 0; i < d; ++i) {
    is >> tok;
    p.act_high[i] = std::strtod(tok.c_str(), nullptr);
  }
  p.actor = load_net(is);
  return p;
}

}  // namespace felrl
