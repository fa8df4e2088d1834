#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "parq/quant_grid.hpp"

namespace parq {

// Exact subdifferential of the (lambda-scaled) regularizer at a scalar point.
// A singleton when lo == hi; hi is +infinity at the outermost breakpoint and
// lo is -infinity at its mirror image.
struct SubgradientInterval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double g, double tol = 0.0) const {
    return g >= lo - tol && g <= hi + tol;
  }
};

// Convex piecewise-affine regularizer
//
//   Psi(w) = max_k { a_k (|w| - q_k) + b_k },  0 = q_0 < q_1 < ... < q_m,
//
// with nonnegative strictly increasing slopes a_0 < ... < a_{m-1} and an
// implicit final slope a_m = +infinity: Psi is +infinity beyond q_m and the
// infinite slope is realized by clipping branches, never stored as a float.
// The offsets b_k join the pieces continuously and are recomputed from
// b_k = b_{k-1} + a_{k-1} (q_k - q_{k-1}) at construction.
//
// lambda placement: eval() and subdifferential() report values of
// lambda * Psi, while prox() takes one combined scale argument (eta*lambda,
// gamma*lambda, ...) applied to the unit-strength slopes. This keeps a single
// multiplication site for lambda.
class ParRegularizer {
 public:
  ParRegularizer(std::vector<double> breakpoints, std::vector<double> slopes,
                 double lambda)
      : q_(std::move(breakpoints)), a_(std::move(slopes)), lambda_(lambda) {
    if (q_.size() < 2)
      throw std::invalid_argument("ParRegularizer: need q_0 = 0 and at least one positive breakpoint");
    if (q_.front() != 0.0)
      throw std::invalid_argument("ParRegularizer: q_0 must be 0");
    if (a_.size() != q_.size() - 1)
      throw std::invalid_argument("ParRegularizer: need one finite slope per segment");
    if (!(lambda_ > 0.0))
      throw std::invalid_argument("ParRegularizer: lambda must be positive");
    for (std::size_t k = 0; k + 1 < q_.size(); ++k)
      if (!(q_[k] < q_[k + 1]))
        throw std::invalid_argument("ParRegularizer: breakpoints must be strictly increasing");
    if (!(a_.front() >= 0.0))
      throw std::invalid_argument("ParRegularizer: slopes must be nonnegative");
    for (std::size_t k = 0; k + 1 < a_.size(); ++k)
      if (!(a_[k] < a_[k + 1]))
        throw std::invalid_argument("ParRegularizer: slopes must be strictly increasing");
    for (double v : q_)
      if (!std::isfinite(v)) throw std::invalid_argument("ParRegularizer: non-finite breakpoint");
    for (double v : a_)
      if (!std::isfinite(v)) throw std::invalid_argument("ParRegularizer: non-finite slope");
    b_.resize(q_.size());
    b_[0] = 0.0;
    for (std::size_t k = 1; k < q_.size(); ++k)
      b_[k] = b_[k - 1] + a_[k - 1] * (q_[k] - q_[k - 1]);
  }

  const std::vector<double>& breakpoints() const { return q_; }  // q_0 .. q_m
  const std::vector<double>& slopes() const { return a_; }       // a_0 .. a_{m-1}
  const std::vector<double>& offsets() const { return b_; }      // b_0 .. b_m
  double lambda() const { return lambda_; }
  double q_max() const { return q_.back(); }
  std::size_t segments() const { return a_.size(); }  // m

  // lambda * Psi at one coordinate; +infinity beyond the last breakpoint.
  double eval_scalar(double w) const {
    const double x = std::fabs(w);
    if (x > q_.back()) return std::numeric_limits<double>::infinity();
    double best = a_[0] * x;
    for (std::size_t k = 1; k < a_.size(); ++k)
      best = std::max(best, a_[k] * (x - q_[k]) + b_[k]);
    return lambda_ * best;
  }

  double eval(std::span<const double> w) const {
    double total = 0.0;
    for (double x : w) total += eval_scalar(x);
    return total;
  }

  // Exact subdifferential of lambda * Psi at a scalar point.
  SubgradientInterval subdifferential(double w) const {
    const double x = std::fabs(w);
    if (x > q_.back())
      throw std::domain_error("ParRegularizer::subdifferential: |w| beyond last breakpoint");
    if (x == 0.0) return {-lambda_ * a_[0], lambda_ * a_[0]};
    const std::size_t m = a_.size();
    SubgradientInterval iv;
    const auto it = std::lower_bound(q_.begin(), q_.end(), x);
    if (it != q_.end() && *it == x) {
      const std::size_t k = std::size_t(it - q_.begin());
      iv.lo = lambda_ * a_[k - 1];
      iv.hi = (k == m) ? std::numeric_limits<double>::infinity() : lambda_ * a_[k];
    } else {
      const std::size_t k = std::size_t(it - q_.begin());  // x in (q_{k-1}, q_k)
      iv.lo = iv.hi = lambda_ * a_[k - 1];
    }
    if (w < 0.0) iv = {-iv.hi, -iv.lo};
    return iv;
  }

  // Closed-form prox of scale * Psi_unit: argmin_v { scale*Psi_unit(v) +
  // (v - u)^2 / 2 }. The caller folds lambda into scale. Piecewise: outputs
  // sgn(u) q_k on the flat |u| in [scale a_{k-1} + q_k, scale a_k + q_k],
  // u - sgn(u) scale a_k on the slant between flats, and clips to sgn(u) q_m
  // past the outermost flat.
  double prox_scalar(double scale, double u) const {
    if (!(scale > 0.0))
      throw std::invalid_argument("ParRegularizer::prox: scale must be positive");
    const double x = std::fabs(u);
    const double sg = u < 0.0 ? -1.0 : 1.0;
    const std::size_t m = a_.size();
    if (x >= scale * a_[m - 1] + q_[m]) return sg * q_[m];
    double prev_slope = 0.0;  // a_{-1}
    for (std::size_t k = 0; k < m; ++k) {
      if (x <= scale * a_[k] + q_[k])
        return (x >= scale * prev_slope + q_[k]) ? sg * q_[k]
                                                 : sg * (x - scale * prev_slope);
      prev_slope = a_[k];
    }
    return sg * (x - scale * prev_slope);  // slant below the outermost flat
  }

  void prox(double scale, std::span<const double> u, std::span<double> out) const {
    if (out.size() != u.size())
      throw std::invalid_argument("ParRegularizer::prox: output size mismatch");
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = prox_scalar(scale, u[i]);
  }

  std::vector<double> prox(double scale, std::span<const double> u) const {
    std::vector<double> w(u.size());
    prox(scale, u, w);
    return w;
  }

 private:
  std::vector<double> q_;
  std::vector<double> a_;
  std::vector<double> b_;
  double lambda_;
};

// Builds the regularizer whose asymptotic prox matches hard quantization onto
// the given symmetric grid: lambda * a_k = (q_k + q_{k+1}) / 2. When 0 is not
// a grid value, a_0 = 0 removes it as a reflection point.
inline ParRegularizer par_from_grid(const QuantGrid& grid, double lambda) {
  if (grid.size() < 2)
    throw std::invalid_argument("par_from_grid: need at least two grid values");
  if (!grid.symmetric())
    throw std::invalid_argument("par_from_grid: grid must be symmetric");
  if (!(lambda > 0.0)) throw std::invalid_argument("par_from_grid: lambda must be positive");
  std::vector<double> q{0.0};
  bool has_zero = false;
  for (double v : grid.values()) {
    if (v == 0.0)
      has_zero = true;
    else if (v > 0.0)
      q.push_back(v);
  }
  const std::size_t m = q.size() - 1;
  std::vector<double> a(m);
  for (std::size_t k = 0; k < m; ++k) a[k] = 0.5 * (q[k] + q[k + 1]) / lambda;
  if (!has_zero) a[0] = 0.0;
  return ParRegularizer(std::move(q), std::move(a), lambda);
}

// Element-wise first-order optimality test: component i passes when -grad_i
// lies in the tol-widened subdifferential of lambda*Psi at w_i.
inline std::vector<bool> check_stationarity(const ParRegularizer& reg,
                                            std::span<const double> w,
                                            std::span<const double> grad, double tol) {
  if (w.size() != grad.size())
    throw std::invalid_argument("check_stationarity: size mismatch");
  if (tol < 0.0) throw std::invalid_argument("check_stationarity: negative tolerance");
  std::vector<bool> ok(w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    ok[i] = reg.subdifferential(w[i]).contains(-grad[i], tol);
  return ok;
}

// Soft quantization map used by the practical algorithm: a slanted segment of
// the given slope centred at each midpoint between adjacent grid values, flat
// at the nearest grid value elsewhere, clipped to the extreme values. At
// slope 1 this is the identity clipped to [min, max]; as slope grows it
// approaches hard quantization.
inline double prox_parq_scalar(double u, const QuantGrid& grid, double slope) {
  if (!(slope >= 1.0)) throw std::invalid_argument("prox_parq: slope must be >= 1");
  const auto& v = grid.values();
  if (u <= v.front()) return v.front();
  if (u >= v.back()) return v.back();
  const auto it = std::upper_bound(v.begin(), v.end(), u);
  const double hi = *it;
  const double lo = *(it - 1);
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo) / slope;
  if (u < mid - half) return lo;
  if (u > mid + half) return hi;
  return mid + slope * (u - mid);
}

inline std::vector<double> prox_parq(std::span<const double> u, const QuantGrid& grid,
                                     double slope) {
  std::vector<double> w(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) w[i] = prox_parq_scalar(u[i], grid, slope);
  return w;
}

// Relaxed quantization map: the convex combination (rho Q(u) + u) / (rho + 1)
// of the hard-quantized point and the input. Identity at rho = 0; the slanted
// slope 1/(1+rho) decays to 0 as rho grows.
inline double prox_binaryrelax_scalar(double u, const QuantGrid& grid, double rho) {
  if (!(rho >= 0.0))
    throw std::invalid_argument("prox_binaryrelax: rho must be nonnegative");
  return (rho * grid.nearest(u) + u) / (rho + 1.0);
}

inline std::vector<double> prox_binaryrelax(std::span<const double> u,
                                            const QuantGrid& grid, double rho) {
  std::vector<double> w(u.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    w[i] = prox_binaryrelax_scalar(u[i], grid, rho);
  return w;
}

}  // namespace parq
