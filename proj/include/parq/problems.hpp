#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "parq/optim.hpp"
#include "parq/par.hpp"
#include "parq/rng.hpp"

namespace parq {

// A deterministic test problem with a stochastic-gradient oracle. Stochastic
// gradients are pure functions of (w, sample_seed) and unbiased estimates of
// the full-loss gradient.
class Problem {
 public:
  virtual ~Problem() = default;
  virtual std::size_t dim() const = 0;
  virtual double full_loss(std::span<const double> w) const = 0;
  virtual void full_grad(std::span<const double> w, std::span<double> out) const = 0;
  virtual void stochastic_grad(std::span<const double> w, std::uint64_t sample_seed,
                               std::span<double> out) const = 0;
  // Accuracy-style metric where one exists; defaults to the loss.
  virtual double eval_metric(std::span<const double> w) const { return full_loss(w); }
  virtual std::span<const ParamGroup> groups() const = 0;
  // Unregularized minimizer when known in closed form.
  virtual std::optional<std::vector<double>> unregularized_optimum() const {
    return std::nullopt;
  }
};

namespace detail {

inline void require_dim(const Problem& p, std::span<const double> w) {
  if (w.size() != p.dim()) throw std::invalid_argument("problem: dimension mismatch");
}

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// log(1 + e^z), overflow-safe.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace detail

// f(w, z) = 0.5 ||w - c - z||^2 with z ~ N(0, sigma^2 I). The reported full
// loss drops the additive d sigma^2 / 2 constant, which cancels in every
// objective-gap computation.
class QuadraticProblem final : public Problem {
 public:
  QuadraticProblem(std::vector<double> center, double noise_sigma)
      : c_(std::move(center)), sigma_(noise_sigma) {
    if (c_.empty()) throw std::invalid_argument("QuadraticProblem: empty center");
    if (sigma_ < 0.0) throw std::invalid_argument("QuadraticProblem: negative noise");
    groups_.push_back(ParamGroup{.offset = 0, .rows = c_.size(), .cols = 0});
  }

  std::size_t dim() const override { return c_.size(); }

  double full_loss(std::span<const double> w) const override {
    detail::require_dim(*this, w);
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += (w[i] - c_[i]) * (w[i] - c_[i]);
    return 0.5 * s;
  }

  void full_grad(std::span<const double> w, std::span<double> out) const override {
    detail::require_dim(*this, w);
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] - c_[i];
  }

  void stochastic_grad(std::span<const double> w, std::uint64_t sample_seed,
                       std::span<double> out) const override {
    detail::require_dim(*this, w);
    PhiloxRng rng({sample_seed, 0});
    for (std::size_t i = 0; i < w.size(); ++i)
      out[i] = w[i] - c_[i] - sigma_ * rng.next_gaussian();
  }

  std::span<const ParamGroup> groups() const override { return groups_; }

  std::optional<std::vector<double>> unregularized_optimum() const override { return c_; }

  const std::vector<double>& center() const { return c_; }
  double noise_sigma() const { return sigma_; }

 private:
  std::vector<double> c_;
  double sigma_;
  std::vector<ParamGroup> groups_;
};

inline std::unique_ptr<QuadraticProblem> quadratic_problem(std::vector<double> center,
                                                           double noise_sigma) {
  return std::make_unique<QuadraticProblem>(std::move(center), noise_sigma);
}

// Two Gaussian clusters at +-separation/2 along a random unit direction,
// labels +-1, mean logistic loss over the training set. Minibatches are drawn
// uniformly with replacement from the sample seed; eval_metric is held-out
// accuracy on an independent set of the same size.
class LogisticProblem final : public Problem {
 public:
  LogisticProblem(std::size_t n_samples, std::size_t dim, double separation, RngSpec rng,
                  std::size_t minibatch = 8)
      : n_(n_samples), d_(dim), batch_(minibatch) {
    if (n_ < 2 || d_ < 1) throw std::invalid_argument("LogisticProblem: degenerate sizes");
    if (!(separation >= 0.0)) throw std::invalid_argument("LogisticProblem: negative separation");
    if (batch_ < 1) throw std::invalid_argument("LogisticProblem: empty minibatch");

    PhiloxRng gen({rng.seed, rng.stream});
    std::vector<double> dir(d_);
    double norm = 0.0;
    for (double& x : dir) {
      x = gen.next_gaussian();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      dir.assign(d_, 0.0);
      dir[0] = 1.0;
      norm = 1.0;
    }
    for (double& x : dir) x /= norm;

    const auto fill = [&](PhiloxRng& g, std::vector<double>& xs, std::vector<double>& ys) {
      xs.resize(n_ * d_);
      ys.resize(n_);
      for (std::size_t i = 0; i < n_; ++i) {
        const double y = (i % 2 == 0) ? 1.0 : -1.0;
        ys[i] = y;
        for (std::size_t j = 0; j < d_; ++j)
          xs[i * d_ + j] = y * 0.5 * separation * dir[j] + g.next_gaussian();
      }
    };
    fill(gen, xs_, ys_);
    PhiloxRng holdout_gen({rng.seed, rng.stream + 1});
    fill(holdout_gen, holdout_xs_, holdout_ys_);

    groups_.push_back(ParamGroup{.offset = 0, .rows = d_, .cols = 0});
  }

  std::size_t dim() const override { return d_; }

  double full_loss(std::span<const double> w) const override {
    detail::require_dim(*this, w);
    double total = 0.0;
    for (std::size_t i = 0; i < n_; ++i) total += detail::softplus(-margin(w, i));
    return total / double(n_);
  }

  void full_grad(std::span<const double> w, std::span<double> out) const override {
    detail::require_dim(*this, w);
    for (double& x : out) x = 0.0;
    for (std::size_t i = 0; i < n_; ++i) add_sample_grad(w, i, 1.0 / double(n_), out);
  }

  void stochastic_grad(std::span<const double> w, std::uint64_t sample_seed,
                       std::span<double> out) const override {
    detail::require_dim(*this, w);
    PhiloxRng rng({sample_seed, 1});
    for (double& x : out) x = 0.0;
    for (std::size_t b = 0; b < batch_; ++b) {
      const std::size_t i = rng.next_u32() % n_;
      add_sample_grad(w, i, 1.0 / double(batch_), out);
    }
  }

  double eval_metric(std::span<const double> w) const override {
    detail::require_dim(*this, w);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      double z = 0.0;
      for (std::size_t j = 0; j < d_; ++j) z += w[j] * holdout_xs_[i * d_ + j];
      const double pred = z >= 0.0 ? 1.0 : -1.0;
      if (pred == holdout_ys_[i]) ++correct;
    }
    return double(correct) / double(n_);
  }

  std::span<const ParamGroup> groups() const override { return groups_; }

 private:
  double margin(std::span<const double> w, std::size_t i) const {
    double z = 0.0;
    for (std::size_t j = 0; j < d_; ++j) z += w[j] * xs_[i * d_ + j];
    return ys_[i] * z;
  }

  void add_sample_grad(std::span<const double> w, std::size_t i, double weight,
                       std::span<double> out) const {
    const double coeff = -ys_[i] * detail::sigmoid(-margin(w, i)) * weight;
    for (std::size_t j = 0; j < d_; ++j) out[j] += coeff * xs_[i * d_ + j];
  }

  std::size_t n_, d_, batch_;
  std::vector<double> xs_, ys_, holdout_xs_, holdout_ys_;
  std::vector<ParamGroup> groups_;
};

inline std::unique_ptr<LogisticProblem> logistic_problem(std::size_t n_samples,
                                                         std::size_t dim, double separation,
                                                         RngSpec rng,
                                                         std::size_t minibatch = 8) {
  return std::make_unique<LogisticProblem>(n_samples, dim, separation, rng, minibatch);
}

// One hidden tanh layer with a sigmoid output unit and binary cross-entropy
// on a two-interleaved-moons synthetic set; gradients by hand-rolled
// backprop. Parameter layout (flat):
//   [ W1 (hidden x 2, row-major) | b1 (hidden) | w2 (hidden) | b2 ]
// W1 is the quantizable group; biases stay full precision, and the output
// weights w2 only quantize when quantize_output is set. eval_metric is
// training-set accuracy.
class MlpProblem final : public Problem {
 public:
  MlpProblem(std::size_t hidden, std::size_t n_samples, RngSpec rng,
             std::size_t minibatch = 16, double noise = 0.15, bool quantize_output = false)
      : h_(hidden), n_(n_samples), batch_(minibatch) {
    if (h_ < 1) throw std::invalid_argument("MlpProblem: hidden width must be >= 1");
    if (n_ < 2) throw std::invalid_argument("MlpProblem: need at least two samples");
    if (batch_ < 1) throw std::invalid_argument("MlpProblem: empty minibatch");
    if (noise < 0.0) throw std::invalid_argument("MlpProblem: negative noise");

    PhiloxRng gen({rng.seed, rng.stream});
    xs_.resize(n_ * 2);
    ys_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const double t = std::numbers::pi * gen.next_double();
      const bool moon = (i % 2 == 1);
      double x0, x1;
      if (!moon) {
        x0 = std::cos(t);
        x1 = std::sin(t);
      } else {
        x0 = 1.0 - std::cos(t);
        x1 = 0.5 - std::sin(t);
      }
      xs_[i * 2 + 0] = x0 + noise * gen.next_gaussian();
      xs_[i * 2 + 1] = x1 + noise * gen.next_gaussian();
      ys_[i] = moon ? 1.0 : 0.0;
    }

    groups_ = {
        ParamGroup{.offset = 0, .rows = h_, .cols = 2},
        ParamGroup{.offset = 2 * h_, .rows = h_, .cols = 0, .quantize = false},
        ParamGroup{.offset = 3 * h_, .rows = h_, .cols = 0, .quantize = quantize_output},
        ParamGroup{.offset = 4 * h_, .rows = 1, .cols = 0, .quantize = false},
    };
  }

  std::size_t dim() const override { return 4 * h_ + 1; }

  double full_loss(std::span<const double> w) const override {
    detail::require_dim(*this, w);
    double total = 0.0;
    std::vector<double> hbuf(h_);
    for (std::size_t i = 0; i < n_; ++i) {
      const double z = forward(w, i, hbuf);
      total += detail::softplus(z) - ys_[i] * z;
    }
    return total / double(n_);
  }

  void full_grad(std::span<const double> w, std::span<double> out) const override {
    detail::require_dim(*this, w);
    for (double& x : out) x = 0.0;
    std::vector<double> hbuf(h_);
    for (std::size_t i = 0; i < n_; ++i)
      add_sample_grad(w, i, 1.0 / double(n_), hbuf, out);
  }

  void stochastic_grad(std::span<const double> w, std::uint64_t sample_seed,
                       std::span<double> out) const override {
    detail::require_dim(*this, w);
    PhiloxRng rng({sample_seed, 2});
    for (double& x : out) x = 0.0;
    std::vector<double> hbuf(h_);
    for (std::size_t b = 0; b < batch_; ++b) {
      const std::size_t i = rng.next_u32() % n_;
      add_sample_grad(w, i, 1.0 / double(batch_), hbuf, out);
    }
  }

  double eval_metric(std::span<const double> w) const override {
    detail::require_dim(*this, w);
    std::size_t correct = 0;
    std::vector<double> hbuf(h_);
    for (std::size_t i = 0; i < n_; ++i) {
      const double z = forward(w, i, hbuf);
      if ((z > 0.0) == (ys_[i] > 0.5)) ++correct;
    }
    return double(correct) / double(n_);
  }

  std::span<const ParamGroup> groups() const override { return groups_; }

  std::size_t hidden() const { return h_; }

 private:
  double forward(std::span<const double> w, std::size_t i, std::vector<double>& h) const {
    const double* W1 = w.data();
    const double* b1 = w.data() + 2 * h_;
    const double* w2 = w.data() + 3 * h_;
    const double b2 = w[4 * h_];
    const double x0 = xs_[i * 2 + 0];
    const double x1 = xs_[i * 2 + 1];
    double z = b2;
    for (std::size_t j = 0; j < h_; ++j) {
      h[j] = std::tanh(W1[2 * j] * x0 + W1[2 * j + 1] * x1 + b1[j]);
      z += w2[j] * h[j];
    }
    return z;
  }

  void add_sample_grad(std::span<const double> w, std::size_t i, double weight,
                       std::vector<double>& h, std::span<double> out) const {
    const double z = forward(w, i, h);
    const double dz = (detail::sigmoid(z) - ys_[i]) * weight;
    const double* w2 = w.data() + 3 * h_;
    const double x0 = xs_[i * 2 + 0];
    const double x1 = xs_[i * 2 + 1];
    for (std::size_t j = 0; j < h_; ++j) {
      const double dh = dz * w2[j] * (1.0 - h[j] * h[j]);
      out[2 * j] += dh * x0;
      out[2 * j + 1] += dh * x1;
      out[2 * h_ + j] += dh;
      out[3 * h_ + j] += dz * h[j];
    }
    out[4 * h_] += dz;
  }

  std::size_t h_, n_, batch_;
  std::vector<double> xs_, ys_;
  std::vector<ParamGroup> groups_;
};

inline std::unique_ptr<MlpProblem> mlp_problem(std::size_t hidden, std::size_t n_samples,
                                               RngSpec rng, std::size_t minibatch = 16,
                                               double noise = 0.15,
                                               bool quantize_output = false) {
  return std::make_unique<MlpProblem>(hidden, n_samples, rng, minibatch, noise,
                                      quantize_output);
}

struct RegularizedOptimum {
  std::vector<double> w;
  double value = 0.0;
};

namespace detail {

// 1-D minimizer of a convex objective over [-q_m, q_m]: dense scan at the
// given step, golden-section refinement around the scan argmin, then an
// exact-candidate sweep over 0 and the breakpoints so minimizers sitting on a
// kink are returned as exact breakpoint values.
template <class F>
double minimize_1d(F&& g, const ParRegularizer& reg, double step = 1e-6) {
  const double qm = reg.q_max();
  const long n = long(std::ceil(2.0 * qm / step));
  double best_x = -qm;
  double best_g = g(best_x);
  for (long i = 1; i <= n; ++i) {
    const double x = std::min(-qm + double(i) * step, qm);
    const double gx = g(x);
    if (gx < best_g) {
      best_g = gx;
      best_x = x;
    }
  }
  double lo = std::max(-qm, best_x - step);
  double hi = std::min(qm, best_x + step);
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = hi - ratio * (hi - lo);
  double d = lo + ratio * (hi - lo);
  double fc = g(c);
  double fd = g(d);
  for (int it = 0; it < 80; ++it) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - ratio * (hi - lo);
      fc = g(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + ratio * (hi - lo);
      fd = g(d);
    }
  }
  const double refined = 0.5 * (lo + hi);
  // Kink minimizers should come back as exact breakpoint values: snap when
  // the refinement landed within 1e-9 of a candidate (safe: the
  // subdifferential interval at a breakpoint covers the adjacent slopes), and
  // otherwise let candidates win on value.
  std::vector<double> candidates{0.0};
  for (double q : reg.breakpoints())
    if (q != 0.0) {
      candidates.push_back(q);
      candidates.push_back(-q);
    }
  for (double cand : candidates)
    if (std::fabs(refined - cand) <= 1e-9) return cand;
  double arg = refined;
  double val = g(refined);
  for (double cand : candidates) {
    const double gv = g(cand);
    if (gv < val) {
      val = gv;
      arg = cand;
    }
  }
  return arg;
}

}  // namespace detail

// Brute-force minimizer of full_loss + lambda*Psi. Separable quadratic
// problems minimize coordinate-wise; other problems up to d = 2 run
// coordinate descent with the same 1-D search. This is an oracle: it never
// touches the closed-form prox path.
inline RegularizedOptimum regularized_optimum(const Problem& problem,
                                              const ParRegularizer& reg) {
  RegularizedOptimum result;
  if (const auto* quad = dynamic_cast<const QuadraticProblem*>(&problem)) {
    const auto& c = quad->center();
    result.w.resize(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double ci = c[i];
      result.w[i] = detail::minimize_1d(
          [&](double x) { return 0.5 * (x - ci) * (x - ci) + reg.eval_scalar(x); }, reg);
    }
  } else if (problem.dim() <= 2) {
    std::vector<double> w(problem.dim(), 0.0);
    double prev = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < 200; ++sweep) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = detail::minimize_1d(
            [&](double x) {
              std::vector<double> probe(w);
              probe[i] = x;
              return problem.full_loss(probe) + reg.eval(probe);
            },
            reg, 1e-4);
      }
      const double cur = problem.full_loss(w) + reg.eval(w);
      if (std::fabs(prev - cur) < 1e-12) break;
      prev = cur;
    }
    result.w = std::move(w);
  } else {
    throw std::invalid_argument("regularized_optimum: unsupported problem class");
  }
  result.value = problem.full_loss(result.w) + reg.eval(result.w);
  return result;
}

// Lipschitz estimate for the regularized objective: max stochastic-gradient
// norm over a short warmup trajectory plus the regularizer's own bound
// lambda * a_{m-1} * sqrt(d).
inline double estimate_lipschitz(const Problem& problem, const ParRegularizer& reg,
                                 std::span<const double> w0, int warmup_steps,
                                 std::uint64_t seed) {
  if (warmup_steps < 1) throw std::invalid_argument("estimate_lipschitz: need warmup steps");
  OptimizerState state(std::vector<double>(w0.begin(), w0.end()));
  std::vector<double> g(problem.dim());
  double max_norm = 0.0;
  for (int t = 1; t <= warmup_steps; ++t) {
    problem.stochastic_grad(state.w, derive_seed(seed, std::uint64_t(t)), g);
    max_norm = std::max(max_norm, detail::l2_norm(g));
    aprox_step(state, g, 0.1 / std::sqrt(double(t)), reg);
  }
  return max_norm + reg.lambda() * reg.slopes().back() * std::sqrt(double(problem.dim()));
}

}  // namespace parq
