#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "parq/quant_grid.hpp"

namespace parq {

// Scales of an n-bit scaled-binary representation w_i = sum_j v_j s_j(u_i),
// kept nonincreasing: v_1 >= v_2 >= ... >= v_n >= 0.
struct ScaleVector {
  std::vector<double> v;

  int bits() const { return int(v.size()); }
};

// Ternary fit: w_i = scale * assignment_i with assignment_i in {-1, 0, +1}.
struct TernaryFit {
  double scale = 0.0;
  std::vector<int> assignment;
};

inline double mean_abs(std::span<const double> u) {
  double s = 0.0;
  for (double x : u) s += std::fabs(x);
  return s / double(u.size());
}

// Least-squares 1-bit fit: v_1 = mean |u_i|, signs sgn(u_i).
inline ScaleVector lsbq_1bit(std::span<const double> u) {
  if (u.empty()) throw std::invalid_argument("lsbq_1bit: empty input");
  return ScaleVector{{mean_abs(u)}};
}

// Least-squares ternary fit. The optimal support is a prefix of the
// magnitudes sorted descending; prefix size k scores (sum of top-k)^2 / k and
// the best k fixes scale = mean of the selected magnitudes. The all-zero
// input yields scale 0 with empty support.
inline TernaryFit lsbq_ternary(std::span<const double> u) {
  if (u.empty()) throw std::invalid_argument("lsbq_ternary: empty input");
  const std::size_t d = u.size();
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return std::fabs(u[i]) > std::fabs(u[j]);
  });
  double run = 0.0;
  double best_gain = 0.0;
  double best_sum = 0.0;
  std::size_t best_k = 0;
  for (std::size_t k = 1; k <= d; ++k) {
    run += std::fabs(u[order[k - 1]]);
    const double gain = run * run / double(k);
    if (gain > best_gain) {
      best_gain = gain;
      best_sum = run;
      best_k = k;
    }
  }
  TernaryFit fit;
  fit.assignment.assign(d, 0);
  if (best_k == 0) return fit;
  fit.scale = best_sum / double(best_k);
  for (std::size_t k = 0; k < best_k; ++k) {
    const std::size_t i = order[k];
    fit.assignment[i] = u[i] < 0.0 ? -1 : 1;
  }
  return fit;
}

// Greedy foldable n-bit fit: each scale is the mean magnitude of the running
// residual and each sign function folds, s_j = sgn(residual), with
// sgn(0) := +1. The residual norm never increases with j. If the raw scales
// come out locally increasing they are sorted descending so the ScaleVector
// ordering holds (signs are recovered by folding against the sorted scales).
inline ScaleVector lsbq_greedy(std::span<const double> u, int bits) {
  if (bits < 1) throw std::invalid_argument("lsbq_greedy: bits must be >= 1");
  if (u.empty()) throw std::invalid_argument("lsbq_greedy: empty input");
  std::vector<double> r(u.begin(), u.end());
  std::vector<double> v;
  v.reserve(std::size_t(bits));
  for (int j = 0; j < bits; ++j) {
    const double vj = mean_abs(r);
    v.push_back(vj);
    for (double& x : r) x -= (x < 0.0 ? -vj : vj);
  }
  if (!std::is_sorted(v.rbegin(), v.rend())) std::sort(v.rbegin(), v.rend());
  return ScaleVector{std::move(v)};
}

// Reconstruction under foldable signs: s_j(u_i) = sgn(u_i - partial sum).
inline std::vector<double> fold_reconstruct(std::span<const double> u,
                                            const ScaleVector& scales) {
  std::vector<double> w(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    double acc = 0.0;
    for (double vj : scales.v) acc += (u[i] - acc) < 0.0 ? -vj : vj;
    w[i] = acc;
  }
  return w;
}

inline double reconstruction_error(std::span<const double> u, const ScaleVector& scales) {
  const auto w = fold_reconstruct(u, scales);
  double err = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) err += (u[i] - w[i]) * (u[i] - w[i]);
  return err;
}

inline double reconstruction_error(std::span<const double> u, const TernaryFit& fit) {
  double err = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double r = u[i] - fit.scale * double(fit.assignment[i]);
    err += r * r;
  }
  return err;
}

// All 2^n signed combinations +-v_1 +- ... +- v_n, deduplicated and sorted.
// Signed sums negate exactly in IEEE arithmetic, so the result is closed
// under negation.
inline QuantGrid grid_from_scales(const ScaleVector& scales) {
  const int n = scales.bits();
  if (n < 1 || n > 16) throw std::invalid_argument("grid_from_scales: bits out of range");
  std::vector<double> combos;
  combos.reserve(std::size_t(1) << n);
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += ((mask >> j) & 1u) ? scales.v[std::size_t(j)] : -scales.v[std::size_t(j)];
    combos.push_back(s);
  }
  return QuantGrid(std::move(combos));
}

inline QuantGrid ternary_grid(double scale) {
  return QuantGrid({-scale, 0.0, scale});
}

namespace detail {

inline double assignment_error(std::span<const double> u, std::span<const double> recon) {
  double err = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) err += (u[i] - recon[i]) * (u[i] - recon[i]);
  return err;
}

}  // namespace detail

// Exhaustive least-squares oracle: enumerates every per-element sign
// assignment and solves the induced least-squares problem for the scales
// under v_1 >= v_2 >= 0. Intentionally brute force; limited to d <= 8 and
// n <= 2.
inline ScaleVector lsbq_bruteforce(std::span<const double> u, int bits) {
  if (u.empty()) throw std::invalid_argument("lsbq_bruteforce: empty input");
  const std::size_t d = u.size();
  if (d > 8 || bits < 1 || bits > 2)
    throw std::invalid_argument("lsbq_bruteforce: size limits exceeded (d <= 8, n <= 2)");

  double best_err = std::numeric_limits<double>::infinity();
  ScaleVector best;

  if (bits == 1) {
    std::vector<double> recon(d);
    for (std::uint32_t mask = 0; mask < (1u << d); ++mask) {
      double num = 0.0;
      for (std::size_t i = 0; i < d; ++i)
        num += ((mask >> i) & 1u) ? u[i] : -u[i];
      const double v = std::max(0.0, num / double(d));
      for (std::size_t i = 0; i < d; ++i) recon[i] = ((mask >> i) & 1u) ? v : -v;
      const double err = detail::assignment_error(u, recon);
      if (err < best_err) {
        best_err = err;
        best = ScaleVector{{v}};
      }
    }
    return best;
  }

  std::vector<double> s1(d), s2(d), recon(d);
  const std::uint64_t total = std::uint64_t(1) << (2 * d);
  for (std::uint64_t code = 0; code < total; ++code) {
    double r1 = 0.0, r2 = 0.0, cross = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      s1[i] = ((code >> (2 * i)) & 1u) ? 1.0 : -1.0;
      s2[i] = ((code >> (2 * i + 1)) & 1u) ? 1.0 : -1.0;
      r1 += s1[i] * u[i];
      r2 += s2[i] * u[i];
      cross += s1[i] * s2[i];
    }
    const double dd = double(d);
    const auto consider = [&](double v1, double v2) {
      if (!(v1 >= v2 && v2 >= 0.0)) return;
      for (std::size_t i = 0; i < d; ++i) recon[i] = s1[i] * v1 + s2[i] * v2;
      const double err = detail::assignment_error(u, recon);
      if (err < best_err) {
        best_err = err;
        best = ScaleVector{{v1, v2}};
      }
    };
    const double det = dd * dd - cross * cross;
    if (det > 0.0)
      consider((dd * r1 - cross * r2) / det, (dd * r2 - cross * r1) / det);
    consider(std::max(0.0, r1 / dd), 0.0);  // v2 = 0 boundary
    const double denom = 2.0 * dd + 2.0 * cross;
    const double t = denom > 0.0 ? std::max(0.0, (r1 + r2) / denom) : 0.0;
    consider(t, t);  // v1 = v2 boundary
  }
  return best;
}

// Exhaustive ternary oracle over all {-1, 0, +1}^d assignments; d <= 8.
inline TernaryFit lsbq_ternary_bruteforce(std::span<const double> u) {
  if (u.empty()) throw std::invalid_argument("lsbq_ternary_bruteforce: empty input");
  const std::size_t d = u.size();
  if (d > 8)
    throw std::invalid_argument("lsbq_ternary_bruteforce: size limits exceeded (d <= 8)");

  std::vector<int> assign(d, -1);
  TernaryFit best;
  best.assignment.assign(d, 0);
  double best_err = std::numeric_limits<double>::infinity();
  std::uint64_t total = 1;
  for (std::size_t i = 0; i < d; ++i) total *= 3;
  for (std::uint64_t code = 0; code < total; ++code) {
    std::uint64_t c = code;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      assign[i] = int(c % 3) - 1;
      c /= 3;
      num += double(assign[i]) * u[i];
      den += double(assign[i] * assign[i]);
    }
    const double q = den > 0.0 ? std::max(0.0, num / den) : 0.0;
    double err = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double r = u[i] - q * double(assign[i]);
      err += r * r;
    }
    if (err < best_err) {
      best_err = err;
      best.scale = q;
      best.assignment = assign;
    }
  }
  return best;
}

}  // namespace parq
