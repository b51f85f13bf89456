#pragma once

#include <deque>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "felrl/rng.hpp"

namespace felrl {

struct Transition {
  Eigen::VectorXd s, a, s2;
  double r = 0.0;
  bool done = false;
};

// Transition store: ring buffer when a capacity is set, insertion order preserved.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::optional<std::size_t> capacity) : capacity_(capacity) {}

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  const Transition& operator[](std::size_t i) const { return data_[i]; }

  // n uniform draws with replacement.
  std::vector<const Transition*> sample_batch(std::size_t n, Rng& rng) const;

  // Disjoint shuffled (train, validation) partition, |val| = round(ratio * N).
  std::pair<Dataset, Dataset> split(double validation_ratio, Rng& rng) const;

  void clear() { data_.clear(); }

  void export_csv(std::ostream& os) const;
  static Dataset import_csv(std::istream& is, std::optional<std::size_t> capacity = std::nullopt);

 private:
  std::deque<Transition> data_;
  std::optional<std::size_t> capacity_;
};

}  // namespace felrl
