#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace parq {

// A finite set of quantization targets, stored as the full signed list in
// strictly increasing order. Asymmetric sets (e.g. from signed combinations
// of unequal scales) are representable; symmetric() reports whether the set
// is closed under negation.
class QuantGrid {
 public:
  explicit QuantGrid(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("QuantGrid: empty value set");
    for (double& v : values_) {
      if (!std::isfinite(v)) throw std::invalid_argument("QuantGrid: non-finite value");
      v += 0.0;  // normalize -0.0
    }
    std::sort(values_.begin(), values_.end());
    values_.erase(std::unique(values_.begin(), values_.end()), values_.end());
    symmetric_ = detect_symmetric();
  }

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  bool symmetric() const { return symmetric_; }
  double min_value() const { return values_.front(); }
  double max_value() const { return values_.back(); }

  // Midpoints between adjacent values: the decision thresholds of nearest().
  std::vector<double> thresholds() const {
    std::vector<double> mids;
    mids.reserve(values_.size() - 1);
    for (std::size_t j = 0; j + 1 < values_.size(); ++j)
      mids.push_back(0.5 * (values_[j] + values_[j + 1]));
    return mids;
  }

  // Nearest grid value. Ties at a midpoint resolve to the value of larger
  // magnitude, which preserves negation symmetry on symmetric grids.
  double nearest(double u) const {
    const auto it = std::lower_bound(values_.begin(), values_.end(), u);
    if (it == values_.begin()) return values_.front();
    if (it == values_.end()) return values_.back();
    const double hi = *it;
    const double lo = *(it - 1);
    const double dlo = u - lo;
    const double dhi = hi - u;
    if (dlo < dhi) return lo;
    if (dhi < dlo) return hi;
    return std::fabs(hi) >= std::fabs(lo) ? hi : lo;
  }

 private:
  bool detect_symmetric() const {
    const std::size_t n = values_.size();
    for (std::size_t i = 0; i < n; ++i)
      if (values_[i] != -values_[n - 1 - i]) return false;
    return true;
  }

  std::vector<double> values_;
  bool symmetric_ = false;
};

inline void hard_quantize(std::span<const double> u, const QuantGrid& grid,
                          std::span<double> out) {
  if (out.size() != u.size())
    throw std::invalid_argument("hard_quantize: output size mismatch");
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = grid.nearest(u[i]);
}

inline std::vector<double> hard_quantize(std::span<const double> u, const QuantGrid& grid) {
  std::vector<double> w(u.size());
  hard_quantize(u, grid, w);
  return w;
}

// Fraction of elements lying within tol of some grid value.
inline double quantized_fraction(std::span<const double> w, const QuantGrid& grid,
                                 double tol) {
  if (tol < 0.0) throw std::invalid_argument("quantized_fraction: negative tolerance");
  if (w.empty()) return 1.0;
  std::size_t on_grid = 0;
  for (double x : w)
    if (std::fabs(x - grid.nearest(x)) <= tol) ++on_grid;
  return double(on_grid) / double(w.size());
}

}  // namespace parq
