#include "felrl/net.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace felrl {

int param_count(const std::vector<int>& sizes) {
  int n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
  return n;
}

Net make_net(std::vector<int> sizes, std::vector<Act> acts) {
  if (sizes.size() < 2 || acts.size() != sizes.size() - 1)
    throw ContractViolation("make_net: sizes/acts mismatch");
  for (int s : sizes)
    if (s <= 0) throw ContractViolation("make_net: non-positive layer size");
  Net net;
  net.sizes = std::move(sizes);
  net.acts = std::move(acts);
  net.params = Eigen::VectorXd::Zero(param_count(net.sizes));
  return net;
}

Net make_mlp(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes;
  sizes.push_back(in);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(out);
  std::vector<Act> acts(hidden.size(), Act::Tanh);
  acts.push_back(Act::Linear);
  return make_net(std::move(sizes), std::move(acts));
}

bool same_shape(const Net& a, const Net& b) { return a.sizes == b.sizes && a.acts == b.acts; }

void init_uniform(Net& net, double delta, Rng& rng) {
  for (int i = 0; i < net.params.size(); ++i) net.params[i] = rng.uniform(-delta, delta);
}

void init_fanin(Net& net, Rng& rng) {
  int off = 0;
  for (int l = 0; l < net.num_layers(); ++l) {
    const int ni = net.sizes[l], no = net.sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(ni));
    for (int i = 0; i < ni * no + no; ++i) net.params[off + i] = rng.uniform(-bound, bound);
    off += ni * no + no;
  }
}

namespace {

int layer_offset(const Net& net, int layer) {
  int off = 0;
  for (int l = 0; l < layer; ++l) off += net.sizes[l] * net.sizes[l + 1] + net.sizes[l + 1];
  return off;
}

}  // namespace

Eigen::Map<Eigen::MatrixXd> weight_block(Eigen::VectorXd& params, const Net& net, int layer) {
  return {params.data() + layer_offset(net, layer), net.sizes[layer + 1], net.sizes[layer]};
}

Eigen::Map<const Eigen::MatrixXd> weight_block(const Eigen::VectorXd& params, const Net& net,
                                               int layer) {
  return {params.data() + layer_offset(net, layer), net.sizes[layer + 1], net.sizes[layer]};
}

Eigen::MatrixXd forward_batch(const Net& net, const Eigen::MatrixXd& x, ForwardCache* cache) {
  if (x.rows() != net.in_dim()) throw ContractViolation("forward: input dimension mismatch");
  if (cache) {
    cache->a.clear();
    cache->a.reserve(net.num_layers() + 1);
    cache->a.push_back(x);
  }
  Eigen::MatrixXd a = x;
  for (int l = 0; l < net.num_layers(); ++l) {
    const int no = net.sizes[l + 1];
    auto w = weight_block(net.params, net, l);
    Eigen::Map<const Eigen::VectorXd> b(net.params.data() + layer_offset(net, l) +
                                            net.sizes[l] * no,
                                        no);
    Eigen::MatrixXd z = (w * a).colwise() + b;
    if (net.acts[l] == Act::Tanh) z = z.array().tanh();
    a = std::move(z);
    if (cache) cache->a.push_back(a);
  }
  return a;
}

Eigen::VectorXd forward(const Net& net, const Eigen::VectorXd& x) {
  return forward_batch(net, x).col(0);
}

void backward(const Net& net, const ForwardCache& cache, const Eigen::MatrixXd& dy,
              Eigen::VectorXd& grad, Eigen::MatrixXd* dx) {
  if (grad.size() != net.params.size()) throw ContractViolation("backward: grad size mismatch");
  if (dy.rows() != net.out_dim() || dy.cols() != cache.a.front().cols())
    throw ContractViolation("backward: dy shape mismatch");
  Eigen::MatrixXd dz = dy;
  for (int l = net.num_layers() - 1; l >= 0; --l) {
    const int ni = net.sizes[l], no = net.sizes[l + 1];
    if (net.acts[l] == Act::Tanh)
      dz.array() *= 1.0 - cache.a[l + 1].array().square();
    const int off = layer_offset(net, l);
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + off, no, ni);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + off + ni * no, no);
    gw.noalias() += dz * cache.a[l].transpose();
    gb += dz.rowwise().sum();
    if (l > 0 || dx) {
      auto w = weight_block(net.params, net, l);
      Eigen::MatrixXd da = w.transpose() * dz;
      if (l == 0) {
        if (dx) *dx = std::move(da);
        break;
      }
      dz = std::move(da);
    }
  }
}

Adam make_adam(const Net& net, double lr) {
  Adam s;
  s.m = Eigen::VectorXd::Zero(net.params.size());
  s.v = Eigen::VectorXd::Zero(net.params.size());
  s.lr = lr;
  return s;
}

void adam_step(Net& net, const Eigen::VectorXd& grad, Adam& state) {
  if (grad.size() != net.params.size()) throw ContractViolation("adam_step: grad size mismatch");
  if (!grad.allFinite()) throw TrainingDivergence("adam_step: non-finite gradient");
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.array().square().matrix();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  net.params.array() -=
      state.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

void soft_update(Net& target, const Net& online, double tau) {
  if (!same_shape(target, online)) throw ContractViolation("soft_update: architecture mismatch");
  target.params = tau * online.params + (1.0 - tau) * target.params;
}

namespace {

void write_vec(std::ostream& os, const Eigen::VectorXd& v) {
  os << v.size() << '\n' << std::hexfloat;
  for (int i = 0; i < v.size(); ++i) os << v[i] << '\n';
  os << std::defaultfloat;
}

Eigen::VectorXd read_vec(std::istream& is) {
  long n = 0;
  is >> n;
  if (!is || n < 0) throw ContractViolation("checkpoint: bad vector length");
  Eigen::VectorXd v(n);
  for (long i = 0; i < n; ++i) {
    std::string tok;
    is >> tok;
    v[i] = std::strtod(tok.c_str(), nullptr);
  }
  if (!is) throw ContractViolation("checkpoint: truncated vector");
  return v;
}

}  // namespace

void save_net(std::ostream& os, const Net& net) {
  os << "net v1\n" << net.sizes.size() << '\n';
  for (int s : net.sizes) os << s << ' ';
  os << '\n';
  for (Act a : net.acts) os << (a == Act::Tanh ? "tanh" : "linear") << ' ';
  os << '\n';
  write_vec(os, net.params);
}

Net load_net(std::istream& is) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != "net" || version != "v1") throw ContractViolation("checkpoint: bad net header");
  std::size_t n = 0;
  is >> n;
  std::vector<int> sizes(n);
  for (auto& s : sizes) is >> s;
  std::vector<Act> acts(n - 1);
  for (auto& a : acts) {
    std::string tag;
    is >> tag;
    if (tag == "tanh")
      a = Act::Tanh;
    else if (tag == "linear")
      a = Act::Linear;
    else
      throw ContractViolation("checkpoint: unknown activation '" + tag + "'");
  }
  Net net = make_net(std::move(sizes), std::move(acts));
  net.params = read_vec(is);
  if (net.params.size() != param_count(net.sizes))
    throw ContractViolation("checkpoint: param count mismatch");
  return net;
}

void save_adam(std::ostream& os, const Adam& state) {
  os << "adam v1\n"
     << state.step << ' ' << std::hexfloat << state.lr << ' ' << state.beta1 << ' ' << state.beta2
     << ' ' << state.eps << std::defaultfloat << '\n';
  write_vec(os, state.m);
  write_vec(os, state.v);
}

Adam load_adam(std::istream& is) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != "adam" || version != "v1") throw ContractViolation("checkpoint: bad adam header");
  Adam s;
  std::string lr, b1, b2, eps;
  is >> s.step >> lr >> b1 >> b2 >> eps;
  s.lr = std::strtod(lr.c_str(), nullptr);
  s.beta1 = std::strtod(b1.c_str(), nullptr);
  s.beta2 = std::strtod(b2.c_str(), nullptr);
  s.eps = std::strtod(eps.c_str(), nullptr);
  s.m = read_vec(is);
  s.v = read_vec(is);
  return s;
}

}  // namespace felrl
