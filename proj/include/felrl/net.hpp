#pragma once

#include <iosfwd>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "felrl/rng.hpp"

namespace felrl {

enum class Act { Tanh, Linear };

// Dense feed-forward network with a single flat parameter vector.
// Layout: [W0 (col-major), b0, W1, b1, ...], W_l is (sizes[l+1] x sizes[l]).
struct Net {
  std::vector<int> sizes;   // layer widths, input first
  std::vector<Act> acts;    // one per non-input layer
  Eigen::VectorXd params;

  int in_dim() const { return sizes.front(); }
  int out_dim() const { return sizes.back(); }
  int num_layers() const { return static_cast<int>(acts.size()); }
};

int param_count(const std::vector<int>& sizes);

Net make_net(std::vector<int> sizes, std::vector<Act> acts);

// Hidden layers tanh, output linear.
Net make_mlp(int in, const std::vector<int>& hidden, int out);

bool same_shape(const Net& a, const Net& b);

// Uniform init in [-delta, delta] for all weights and biases.
void init_uniform(Net& net, double delta, Rng& rng);

// Fan-in scaled uniform init, U[-1/sqrt(fan_in), 1/sqrt(fan_in)].
void init_fanin(Net& net, Rng& rng);

Eigen::Map<Eigen::MatrixXd> weight_block(Eigen::VectorXd& params, const Net& net, int layer);
Eigen::Map<const Eigen::MatrixXd> weight_block(const Eigen::VectorXd& params, const Net& net,
                                               int layer);

// Activations per layer, [0] = input, [num_layers] = output. Columns are batch samples.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> a;
};

Eigen::MatrixXd forward_batch(const Net& net, const Eigen::MatrixXd& x,
                              ForwardCache* cache = nullptr);
Eigen::VectorXd forward(const Net& net, const Eigen::VectorXd& x);

// Accumulates d(loss)/d(params) into grad given d(loss)/d(output) columns in dy.
// Optionally also writes d(loss)/d(input) into dx (overwritten, not accumulated).
void backward(const Net& net, const ForwardCache& cache, const Eigen::MatrixXd& dy,
              Eigen::VectorXd& grad, Eigen::MatrixXd* dx = nullptr);

struct Adam {
  Eigen::VectorXd m, v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

Adam make_adam(const Net& net, double lr);

// Bias-corrected Adam update. Throws on non-finite gradients.
void adam_step(Net& net, const Eigen::VectorXd& grad, Adam& state);

// target <- tau * online + (1 - tau) * target
void soft_update(Net& target, const Net& online, double tau);

// Bit-exact text serialization (hexfloat params).
void save_net(std::ostream& os, const Net& net);
Net load_net(std::istream& is);
void save_adam(std::ostream& os, const Adam& state);
Adam load_adam(std::istream& is);

struct ContractViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace felrl
