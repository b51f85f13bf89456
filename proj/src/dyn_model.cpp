#include "felrl/dyn_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

namespace felrl {

UncertaintyStrategy parse_strategy(const std::string& name) {
  if (name == "gaussian") return UncertaintyStrategy::Gaussian;
  if (name == "per-step-model") return UncertaintyStrategy::PerStepModel;
  if (name == "per-episode-model") return UncertaintyStrategy::PerEpisodeModel;
  if (name == "pessimistic") return UncertaintyStrategy::Pessimistic;
  throw ContractViolation("unknown uncertainty strategy '" + name + "'");
}

std::string strategy_name(UncertaintyStrategy s) {
  switch (s) {
    case UncertaintyStrategy::Gaussian: return "gaussian";
    case UncertaintyStrategy::PerStepModel: return "per-step-model";
    case UncertaintyStrategy::PerEpisodeModel: return "per-episode-model";
    case UncertaintyStrategy::Pessimistic: return "pessimistic";
  }
  throw ContractViolation("unknown uncertainty strategy");
}

Eigen::VectorXd Normalizer::normalize_in(const Eigen::VectorXd& x) const {
  return 2.0 * (x - in_lo).cwiseQuotient(in_hi - in_lo).array() - 1.0;
}

Eigen::VectorXd Normalizer::normalize_out(const Eigen::VectorXd& y) const {
  return (y - out_mean).cwiseQuotient(out_std);
}

Eigen::VectorXd Normalizer::denormalize_out(const Eigen::VectorXd& y) const {
  return y.cwiseProduct(out_std) + out_mean;
}

namespace {

// Per-parameter prior std: Delta/sqrt(3) (the uniform-init std), divided by the
// last hidden width for last-layer weights to match the init scaling.
Eigen::VectorXd prior_std(const Net& net, double delta) {
  Eigen::VectorXd sp(net.params.size());
  const double base = delta / std::sqrt(3.0);
  int off = 0;
  for (int l = 0; l < net.num_layers(); ++l) {
    const int ni = net.sizes[l], no = net.sizes[l + 1];
    const bool last = l == net.num_layers() - 1;
    const double wstd = last ? base / static_cast<double>(ni) : base;
    for (int i = 0; i < ni * no; ++i) sp[off + i] = wstd;
    for (int i = 0; i < no; ++i) sp[off + ni * no + i] = base;
    off += ni * no + no;
  }
  return sp;
}

}  // namespace

AnchoredNet init_anchored(const EnsembleConfig& cfg, int in_dim, int out_dim, Rng& rng) {
  if (cfg.delta <= 0.0 || cfg.delta > 0.1)
    throw ContractViolation("init_anchored: delta must be in (0, 0.1]");
  AnchoredNet a;
  a.net = make_mlp(in_dim, cfg.hidden, out_dim);
  init_uniform(a.net, cfg.delta, rng);
  {
    // Last-layer weights normalised by its input node count.
    auto w = weight_block(a.net.params, a.net, a.net.num_layers() - 1);
    w /= static_cast<double>(a.net.sizes[a.net.num_layers() - 1]);
  }
  const Eigen::VectorXd sp = prior_std(a.net, cfg.delta);
  a.theta_anc.resize(a.net.params.size());
  for (int i = 0; i < a.theta_anc.size(); ++i) a.theta_anc[i] = rng.normal(0.0, sp[i]);
  a.gamma_diag = (cfg.sigma_eps * cfg.sigma_eps) * sp.array().square().inverse().matrix();
  return a;
}

double anchored_loss(const AnchoredNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                     std::size_t n_total) {
  if (x.cols() < 1) throw ContractViolation("anchored_loss: need at least one sample");
  const double n = static_cast<double>(n_total);
  const Eigen::MatrixXd pred = forward_batch(net.net, x);
  const double data = (pred - y).squaredNorm() / static_cast<double>(x.cols());
  const Eigen::VectorXd d = net.net.params - net.theta_anc;
  const double reg = net.gamma_diag.cwiseProduct(d.array().square().matrix()).sum() / n;
  return data + reg;
}

Ensemble make_ensemble(const EnsembleConfig& cfg, int obs_dim, int act_dim, std::uint64_t seed) {
  if (cfg.models < 1) throw ContractViolation("make_ensemble: need at least one model");
  Ensemble e;
  e.cfg = cfg;
  e.obs_dim = obs_dim;
  e.act_dim = act_dim;
  Rng rng(seed);
  for (int m = 0; m < cfg.models; ++m)
    e.members.push_back(init_anchored(cfg, e.in_dim(), e.out_dim(), rng));
  return e;
}

namespace {

void build_matrices(const Ensemble& ens, const Dataset& data, Eigen::MatrixXd& x,
                    Eigen::MatrixXd& y_raw) {
  const auto n = static_cast<long>(data.size());
  x.resize(ens.in_dim(), n);
  y_raw.resize(ens.out_dim(), n);
  for (long i = 0; i < n; ++i) {
    const Transition& t = data[static_cast<std::size_t>(i)];
    x.col(i) << t.s, t.a;
    if (ens.cfg.predict_delta)
      y_raw.col(i).head(ens.obs_dim) = t.s2 - t.s;
    else
      y_raw.col(i).head(ens.obs_dim) = t.s2;
    y_raw(ens.obs_dim, i) = t.r;
  }
}

Normalizer fit_normalizer(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y_raw) {
  Normalizer nm;
  nm.in_lo = x.rowwise().minCoeff();
  nm.in_hi = x.rowwise().maxCoeff();
  for (long i = 0; i < nm.in_lo.size(); ++i)
    if (nm.in_hi[i] - nm.in_lo[i] < 1e-9) {
      nm.in_lo[i] -= 0.5;
      nm.in_hi[i] += 0.5;
    }
  nm.out_mean = y_raw.rowwise().mean();
  nm.out_std.resize(y_raw.rows());
  for (long i = 0; i < y_raw.rows(); ++i) {
    const double var =
        (y_raw.row(i).array() - nm.out_mean[i]).square().sum() / static_cast<double>(y_raw.cols());
    nm.out_std[i] = std::max(std::sqrt(var), 1e-8);
  }
  return nm;
}

double data_mse(const Net& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  return (forward_batch(net, x) - y).squaredNorm() / static_cast<double>(x.cols());
}

void train_member(AnchoredNet& member, const EnsembleConfig& cfg, const Eigen::MatrixXd& xtr,
                  const Eigen::MatrixXd& ytr, const Eigen::MatrixXd& xval,
                  const Eigen::MatrixXd& yval, Rng& rng, double* best_val_out) {
  const long n = xtr.cols();
  const double n_total = static_cast<double>(n);
  Adam opt = make_adam(member.net, cfg.lr);

  Eigen::VectorXd best_params = member.net.params;
  double best_val = data_mse(member.net, xval, yval);
  int bad = 0;

  std::vector<long> order(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i + 1)))]);
    for (long start = 0; start < n; start += cfg.batch_size) {
      const long bs = std::min<long>(cfg.batch_size, n - start);
      Eigen::MatrixXd xb(xtr.rows(), bs), yb(ytr.rows(), bs);
      for (long k = 0; k < bs; ++k) {
        xb.col(k) = xtr.col(order[static_cast<std::size_t>(start + k)]);
        yb.col(k) = ytr.col(order[static_cast<std::size_t>(start + k)]);
      }
      ForwardCache cache;
      const Eigen::MatrixXd pred = forward_batch(member.net, xb, &cache);
      const Eigen::MatrixXd dy = 2.0 * (pred - yb) / static_cast<double>(bs);
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(member.net.params.size());
      backward(member.net, cache, dy, grad);
      // Anchor pull, scaled by the full training-set size as in the MAP objective.
      grad += (2.0 / n_total) *
              member.gamma_diag.cwiseProduct(member.net.params - member.theta_anc);
      adam_step(member.net, grad, opt);
    }
    if ((epoch + 1) % std::max(1, cfg.eval_every) != 0) continue;
    const double val = data_mse(member.net, xval, yval);
    if (val < best_val - 1e-12) {
      best_val = val;
      best_params = member.net.params;
      bad = 0;
    } else {
      ++bad;
      if (bad > cfg.patience) break;
    }
    if (data_mse(member.net, xtr, ytr) <= cfg.loss_threshold) {
      if (val < best_val) {
        best_val = val;
        best_params = member.net.params;
      }
      break;
    }
  }
  member.net.params = best_params;
  if (best_val_out) *best_val_out = best_val;
}

}  // namespace

std::vector<double> train_model(Ensemble& ens, const Dataset& data, Rng& rng) {
  if (data.size() < 5) throw ContractViolation("train_model: need at least 5 transitions");
  Eigen::MatrixXd x_all, y_all_raw;
  build_matrices(ens, data, x_all, y_all_raw);
  ens.norm = fit_normalizer(x_all, y_all_raw);

  std::vector<double> val_losses;
  for (auto& member : ens.members) {
    Rng member_rng(rng.next_seed());
    auto [train, val] = data.split(ens.cfg.validation_ratio, member_rng);
    Eigen::MatrixXd xtr, ytr, xval, yval;
    build_matrices(ens, train, xtr, ytr);
    build_matrices(ens, val, xval, yval);
    for (long c = 0; c < xtr.cols(); ++c) {
      xtr.col(c) = ens.norm.normalize_in(xtr.col(c));
      ytr.col(c) = ens.norm.normalize_out(ytr.col(c));
    }
    for (long c = 0; c < xval.cols(); ++c) {
      xval.col(c) = ens.norm.normalize_in(xval.col(c));
      yval.col(c) = ens.norm.normalize_out(yval.col(c));
    }
    double best_val = 0.0;
    train_member(member, ens.cfg, xtr, ytr, xval, yval, member_rng, &best_val);
    val_losses.push_back(best_val);
  }
  ens.fitted = true;
  return val_losses;
}

Eigen::VectorXd predict_member(const Ensemble& ens, int member, const Eigen::VectorXd& s,
                               const Eigen::VectorXd& a) {
  Eigen::VectorXd x(ens.in_dim());
  x << s, a;
  Eigen::VectorXd out =
      ens.norm.denormalize_out(forward(ens.members[static_cast<std::size_t>(member)].net,
                                       ens.norm.normalize_in(x)));
  if (ens.cfg.predict_delta) out.head(ens.obs_dim) += s;
  return out;
}

EnsemblePrediction predict_ensemble(const Ensemble& ens, const Eigen::VectorXd& s,
                                    const Eigen::VectorXd& a) {
  const int m = static_cast<int>(ens.members.size());
  Eigen::MatrixXd preds(ens.out_dim(), m);
  for (int j = 0; j < m; ++j) preds.col(j) = predict_member(ens, j, s, a);
  EnsemblePrediction p;
  p.mean = preds.rowwise().mean();
  p.std.resize(ens.out_dim());
  for (long i = 0; i < p.std.size(); ++i) {
    const double var =
        (preds.row(i).array() - p.mean[i]).square().sum() / static_cast<double>(m);
    p.std[i] = std::sqrt(var);
  }
  return p;
}

void EnsembleSampler::begin_episode(Rng& rng) {
  episode_model_ = rng.uniform_int(static_cast<int>(ens_->members.size()));
}

std::pair<Eigen::VectorXd, double> EnsembleSampler::sample(const Eigen::VectorXd& s,
                                                           const Eigen::VectorXd& a,
                                                           Rng& rng) const {
  const int m = static_cast<int>(ens_->members.size());
  Eigen::VectorXd out;
  switch (strategy_) {
    case UncertaintyStrategy::Gaussian: {
      const EnsemblePrediction p = predict_ensemble(*ens_, s, a);
      out.resize(p.mean.size());
      for (long i = 0; i < out.size(); ++i) out[i] = rng.normal(p.mean[i], p.std[i]);
      break;
    }
    case UncertaintyStrategy::PerStepModel:
      out = predict_member(*ens_, rng.uniform_int(m), s, a);
      break;
    case UncertaintyStrategy::PerEpisodeModel:
      out = predict_member(*ens_, episode_model_, s, a);
      break;
    case UncertaintyStrategy::Pessimistic: {
      double worst = std::numeric_limits<double>::infinity();
      for (int j = 0; j < m; ++j) {
        Eigen::VectorXd pj = predict_member(*ens_, j, s, a);
        if (pj[ens_->obs_dim] < worst) {
          worst = pj[ens_->obs_dim];
          out = std::move(pj);
        }
      }
      break;
    }
  }
  const double r = out[ens_->obs_dim];
  Eigen::VectorXd s2 = out.head(ens_->obs_dim);
  return {std::move(s2), r};
}

namespace {

void write_vec_hex(std::ostream& os, const Eigen::VectorXd& v) {
  os << v.size() << '\n' << std::hexfloat;
  for (long i = 0; i < v.size(); ++i) os << v[i] << '\n';
  os << std::defaultfloat;
}

Eigen::VectorXd read_vec_hex(std::istream& is) {
  long n = 0;
  is >> n;
  Eigen::VectorXd v(n);
  std::string tok;
  for (long i = 0; i < n; ++i) {
    is >> tok;
    v[i] = std::strtod(tok.c_str(), nullptr);
  }
  if (!is) throw ContractViolation("ensemble checkpoint: truncated");
  return v;
}

}  // namespace

void save_ensemble(std::ostream& os, const Ensemble& ens) {
  os << "ensemble v1\n"
     << ens.obs_dim << ' ' << ens.act_dim << ' ' << ens.members.size() << ' '
     << (ens.cfg.predict_delta ? 1 : 0) << ' ' << (ens.fitted ? 1 : 0) << '\n';
  write_vec_hex(os, ens.norm.in_lo);
  write_vec_hex(os, ens.norm.in_hi);
  write_vec_hex(os, ens.norm.out_mean);
  write_vec_hex(os, ens.norm.out_std);
  for (const auto& m : ens.members) {
    save_net(os, m.net);
    write_vec_hex(os, m.theta_anc);
    write_vec_hex(os, m.gamma_diag);
  }
}

Ensemble load_ensemble(std::istream& is) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != "ensemble" || version != "v1")
    throw ContractViolation("checkpoint: bad ensemble header");
  Ensemble e;
  std::size_t m = 0;
  int pd = 0, fitted = 0;
  is >> e.obs_dim >> e.act_dim >> m >> pd >> fitted;
  e.cfg.models = static_cast<int>(m);
  e.cfg.predict_delta = pd != 0;
  e.fitted = fitted != 0;
  e.norm.in_lo = read_vec_hex(is);
  e.norm.in_hi = read_vec_hex(is);
  e.norm.out_mean = read_vec_hex(is);
  e.norm.out_std = read_vec_hex(is);
  for (std::size_t j = 0; j < m; ++j) {
    AnchoredNet a;
    a.net = load_net(is);
    a.theta_anc = read_vec_hex(is);
    a.gamma_diag = read_vec_hex(is);
    e.members.push_back(std::move(a));
  }
  return e;
}

}  // namespace felrl
