#include "felrl/replay.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "felrl/net.hpp"  // ContractViolation

namespace felrl {

void Dataset::push(Transition t) {
  if (!std::isfinite(t.r)) throw ContractViolation("dataset: non-finite reward");
  if (capacity_ && data_.size() >= *capacity_) data_.pop_front();
  data_.push_back(std::move(t));
}

std::vector<const Transition*> Dataset::sample_batch(std::size_t n, Rng& rng) const {
  if (data_.empty()) throw ContractViolation("dataset: cannot sample from empty dataset");
  std::vector<const Transition*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(&data_[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(data_.size())))]);
  return out;
}

std::pair<Dataset, Dataset> Dataset::split(double validation_ratio, Rng& rng) const {
  if (validation_ratio <= 0.0 || validation_ratio >= 1.0)
    throw ContractViolation("dataset: validation ratio must be in (0, 1)");
  if (data_.size() < 2) throw ContractViolation("dataset: need at least 2 transitions to split");
  std::vector<std::size_t> idx(data_.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Fisher-Yates
  for (std::size_t i = idx.size() - 1; i > 0; --i)
    std::swap(idx[i], idx[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i + 1)))]);
  const auto n_val =
      static_cast<std::size_t>(std::lround(validation_ratio * static_cast<double>(data_.size())));
  Dataset train, val;
  for (std::size_t i = 0; i < idx.size(); ++i)
    (i < n_val ? val : train).push(data_[idx[i]]);
  return {std::move(train), std::move(val)};
}

void Dataset::export_csv(std::ostream& os) const {
  if (data_.empty()) {
    os << "r,done\n";
    return;
  }
  const auto sd = data_.front().s.size();
  const auto ad = data_.front().a.size();
  for (long i = 0; i < sd; ++i) os << "s" << i << ",";
  for (long i = 0; i < ad; ++i) os << "a" << i << ",";
  for (long i = 0; i < sd; ++i) os << "s2_" << i << ",";
  os << "r,done\n";
  char buf[32];
  auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf << sep;
  };
  for (const auto& t : data_) {
    for (long i = 0; i < sd; ++i) put(t.s[i], ',');
    for (long i = 0; i < ad; ++i) put(t.a[i], ',');
    for (long i = 0; i < sd; ++i) put(t.s2[i], ',');
    put(t.r, ',');
    os << (t.done ? 1 : 0) << '\n';
  }
}

Dataset Dataset::import_csv(std::istream& is, std::optional<std::size_t> capacity) {
  std::string header;
  if (!std::getline(is, header)) throw ContractViolation("dataset csv: missing header");
  long sd = 0, ad = 0;
  {
    std::stringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.rfind("s2_", 0) == 0 || col == "r" || col == "done") continue;
      if (col.rfind('s', 0) == 0) ++sd;
      if (col.rfind('a', 0) == 0) ++ad;
    }
  }
  Dataset ds(capacity);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    auto next = [&]() {
      if (!std::getline(ls, cell, ',')) throw ContractViolation("dataset csv: short row");
      return std::strtod(cell.c_str(), nullptr);
    };
    Transition t;
    t.s.resize(sd);
    t.a.resize(ad);
    t.s2.resize(sd);
    for (long i = 0; i < sd; ++i) t.s[i] = next();
    for (long i = 0; i < ad; ++i) t.a[i] = next();
    for (long i = 0; i < sd; ++i) t.s2[i] = next();
    t.r = next();
    t.done = next() != 0.0;
    ds.push(std::move(t));
  }
  return ds;
}

}  // namespace felrl
