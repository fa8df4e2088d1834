#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "parq/lsbq.hpp"
#include "parq/par.hpp"
#include "parq/quant_grid.hpp"

namespace parq {

enum class Granularity { kPerTensor, kPerRow };

// Describes one parameter tensor inside the flat optimization vector. Flat
// tensors set cols = 0 with rows = element count; cols > 0 marks a 2-D
// row-major tensor, which per-row granularity requires.
struct ParamGroup {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Granularity granularity = Granularity::kPerTensor;
  int bits = 1;
  bool ternary = false;
  bool quantize = true;

  std::size_t size() const { return cols > 0 ? rows * cols : rows; }

  void validate() const {
    if (rows == 0) throw std::invalid_argument("ParamGroup: empty group");
    if (granularity == Granularity::kPerRow && cols == 0)
      throw std::invalid_argument("ParamGroup: per-row granularity requires a 2-D shape");
    if (quantize && !ternary && bits < 1)
      throw std::invalid_argument("ParamGroup: bits must be >= 1");
  }
};

// Grids most recently estimated for one group: one entry for per-tensor
// granularity, one per row otherwise.
using GroupGrids = std::vector<QuantGrid>;

// Shared state of all optimizer step functions.
//   u      latent full-precision vector accumulating gradient steps
//   w      quantized (or plain) iterate the next gradient is evaluated at
//   gamma  running sum of applied step sizes
//   wbar_* running weighted sum / weight for the eta-weighted iterate average
struct OptimizerState {
  std::vector<double> u;
  std::vector<double> w;
  double gamma = 0.0;
  long t = 0;
  std::vector<double> wbar_num;
  double wbar_den = 0.0;
  std::vector<GroupGrids> group_grids;

  explicit OptimizerState(std::vector<double> w0)
      : u(w0), w(std::move(w0)), wbar_num(u.size(), 0.0) {}

  std::size_t dim() const { return w.size(); }
};

namespace detail {

// Every step pairs eta_t with the iterate w^t the gradient was evaluated at,
// so the weighted average accumulates before the update.
inline void begin_step(OptimizerState& s, std::span<const double> grad, double eta) {
  if (grad.size() != s.w.size())
    throw std::invalid_argument("optimizer step: gradient shape mismatch");
  if (!(eta > 0.0)) throw std::invalid_argument("optimizer step: eta must be positive");
  for (std::size_t i = 0; i < s.w.size(); ++i) s.wbar_num[i] += eta * s.w[i];
  s.wbar_den += eta;
  s.gamma += eta;
  ++s.t;
}

inline void check_groups(const OptimizerState& s, std::span<const ParamGroup> groups) {
  std::size_t expect = 0;
  for (const ParamGroup& g : groups) {
    g.validate();
    if (g.offset != expect)
      throw std::invalid_argument("optimizer step: groups must tile the parameter vector");
    expect += g.size();
  }
  if (expect != s.dim())
    throw std::invalid_argument("optimizer step: groups do not cover the parameter vector");
}

inline QuantGrid estimate_grid(std::span<const double> slice, const ParamGroup& g) {
  if (g.ternary) return ternary_grid(lsbq_ternary(slice).scale);
  return grid_from_scales(lsbq_greedy(slice, g.bits));
}

inline void soft_map(std::span<const double> u, const QuantGrid& grid, double inv_slope,
                     bool binary_relax, std::span<double> w_out) {
  if (inv_slope == 0.0) {
    for (std::size_t i = 0; i < u.size(); ++i) w_out[i] = grid.nearest(u[i]);
  } else if (binary_relax) {
    const double rho = 1.0 / inv_slope;
    for (std::size_t i = 0; i < u.size(); ++i)
      w_out[i] = prox_binaryrelax_scalar(u[i], grid, rho);
  } else {
    const double rho = 1.0 / inv_slope;
    for (std::size_t i = 0; i < u.size(); ++i)
      w_out[i] = prox_parq_scalar(u[i], grid, rho);
  }
}

inline void apply_soft_quantization(OptimizerState& s, std::span<const ParamGroup> groups,
                                    double inv_slope, bool refresh, bool binary_relax) {
  check_groups(s, groups);
  if (s.group_grids.size() != groups.size()) s.group_grids.assign(groups.size(), {});
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const ParamGroup& g = groups[gi];
    const auto u_slice = std::span<const double>(s.u).subspan(g.offset, g.size());
    const auto w_slice = std::span<double>(s.w).subspan(g.offset, g.size());
    if (!g.quantize) {
      for (std::size_t i = 0; i < u_slice.size(); ++i) w_slice[i] = u_slice[i];
      continue;
    }
    GroupGrids& grids = s.group_grids[gi];
    if (g.granularity == Granularity::kPerTensor) {
      if (refresh || grids.empty()) {
        grids.clear();
        grids.push_back(estimate_grid(u_slice, g));
      }
      soft_map(u_slice, grids[0], inv_slope, binary_relax, w_slice);
    } else {
      if (refresh || grids.size() != g.rows) {
        grids.clear();
        grids.reserve(g.rows);
        for (std::size_t r = 0; r < g.rows; ++r)
          grids.push_back(estimate_grid(u_slice.subspan(r * g.cols, g.cols), g));
      }
      for (std::size_t r = 0; r < g.rows; ++r)
        soft_map(u_slice.subspan(r * g.cols, g.cols), grids[r], inv_slope, binary_relax,
                 w_slice.subspan(r * g.cols, g.cols));
    }
  }
}

}  // namespace detail

// Plain stochastic gradient step; the latent vector tracks w.
inline void sgd_step(OptimizerState& s, std::span<const double> grad, double eta) {
  detail::begin_step(s, grad, eta);
  for (std::size_t i = 0; i < s.w.size(); ++i) {
    s.w[i] -= eta * grad[i];
    s.u[i] = s.w[i];
  }
}

// Proximal SGD: forward step from w, backward prox with per-step scale
// eta * lambda. The flat widths shrink with eta.
inline void prox_sgd_step(OptimizerState& s, std::span<const double> grad, double eta,
                          const ParRegularizer& reg) {
  detail::begin_step(s, grad, eta);
  const double scale = eta * reg.lambda();
  for (std::size_t i = 0; i < s.w.size(); ++i) {
    s.u[i] = s.w[i] - eta * grad[i];
    s.w[i] = reg.prox_scalar(scale, s.u[i]);
  }
}

// Aggregate proximal step: gradients accumulate on the latent u and the prox
// is applied with the aggregate scale gamma_t * lambda, gamma_t = sum of all
// step sizes so far (including this one). The flat widths grow with gamma.
inline void aprox_step(OptimizerState& s, std::span<const double> grad, double eta,
                       const ParRegularizer& reg) {
  detail::begin_step(s, grad, eta);
  for (std::size_t i = 0; i < s.u.size(); ++i) s.u[i] -= eta * grad[i];
  const double scale = s.gamma * reg.lambda();
  for (std::size_t i = 0; i < s.w.size(); ++i) s.w[i] = reg.prox_scalar(scale, s.u[i]);
}

// Aggregate proximal step under the indicator regularizer of the grid. The
// indicator prox is hard quantization at every scale, so gamma never enters
// the map and the update coincides with binaryconnect_step.
inline void aprox_step(OptimizerState& s, std::span<const double> grad, double eta,
                       const QuantGrid& grid) {
  detail::begin_step(s, grad, eta);
  for (std::size_t i = 0; i < s.u.size(); ++i) {
    s.u[i] -= eta * grad[i];
    s.w[i] = grid.nearest(s.u[i]);
  }
}

// Latent-variable step with hard quantization (straight-through training).
// The caller evaluates the gradient at the previous w, never at u.
inline void binaryconnect_step(OptimizerState& s, std::span<const double> grad, double eta,
                               const QuantGrid& grid) {
  detail::begin_step(s, grad, eta);
  for (std::size_t i = 0; i < s.u.size(); ++i) {
    s.u[i] -= eta * grad[i];
    s.w[i] = grid.nearest(s.u[i]);
  }
}

// Practical step: gradient update on u, per-group grid estimation by
// least-squares binary quantization, then the slanted soft map at slope
// 1/inv_slope (hard quantization once inv_slope reaches 0). Grids refresh
// every step unless the caller caches them via refresh_grids = false.
inline void parq_step(OptimizerState& s, std::span<const double> grad, double eta,
                      double inv_slope, std::span<const ParamGroup> groups,
                      bool refresh_grids = true) {
  if (!(inv_slope >= 0.0 && inv_slope <= 1.0))
    throw std::invalid_argument("parq_step: inv_slope must be in [0, 1]");
  detail::begin_step(s, grad, eta);
  for (std::size_t i = 0; i < s.u.size(); ++i) s.u[i] -= eta * grad[i];
  detail::apply_soft_quantization(s, groups, inv_slope, refresh_grids, false);
}

// As parq_step but with the relaxed map (rho Q(u) + u) / (rho + 1), driven by
// the shared schedule through rho = 1/inv_slope.
inline void binaryrelax_step(OptimizerState& s, std::span<const double> grad, double eta,
                             double inv_slope, std::span<const ParamGroup> groups,
                             bool refresh_grids = true) {
  if (!(inv_slope >= 0.0 && inv_slope <= 1.0))
    throw std::invalid_argument("binaryrelax_step: inv_slope must be in [0, 1]");
  detail::begin_step(s, grad, eta);
  for (std::size_t i = 0; i < s.u.size(); ++i) s.u[i] -= eta * grad[i];
  detail::apply_soft_quantization(s, groups, inv_slope, refresh_grids, true);
}

// Step-size-weighted average of past iterates, (sum eta_s w^s) / (sum eta_s).
inline std::vector<double> average_iterate(const OptimizerState& s) {
  if (s.t < 1) throw std::domain_error("average_iterate: no completed steps");
  std::vector<double> out(s.wbar_num.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.wbar_num[i] / s.wbar_den;
  return out;
}

}  // namespace parq
