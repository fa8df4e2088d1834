#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace parq {

// Per-step learning rates eta_t, t >= 1. The inverse-sqrt family satisfies
// eta_t -> 0 with divergent sum; multistep decays by a fixed factor at each
// milestone.
class StepSchedule {
 public:
  enum class Kind { kConstant, kInverseSqrt, kMultistep };

  static StepSchedule constant(double base) { return {Kind::kConstant, base, {}, 1.0}; }
  static StepSchedule inverse_sqrt(double base) { return {Kind::kInverseSqrt, base, {}, 1.0}; }
  static StepSchedule multistep(double base, std::vector<long> milestones, double decay) {
    return {Kind::kMultistep, base, std::move(milestones), decay};
  }

  double at(long t) const {
    if (t < 1) throw std::domain_error("StepSchedule: t must be >= 1");
    switch (kind_) {
      case Kind::kConstant:
        return base_;
      case Kind::kInverseSqrt:
        return base_ / std::sqrt(double(t));
      case Kind::kMultistep: {
        double eta = base_;
        for (long m : milestones_)
          if (t >= m) eta *= decay_;
        return eta;
      }
    }
    return base_;
  }

  Kind kind() const { return kind_; }
  double base() const { return base_; }

 private:
  StepSchedule(Kind kind, double base, std::vector<long> milestones, double decay)
      : kind_(kind), base_(base), milestones_(std::move(milestones)), decay_(decay) {
    if (!(base_ > 0.0)) throw std::invalid_argument("StepSchedule: base must be positive");
    if (kind_ == Kind::kMultistep && !(decay_ > 0.0))
      throw std::invalid_argument("StepSchedule: decay must be positive");
    std::sort(milestones_.begin(), milestones_.end());
  }

  Kind kind_;
  double base_;
  std::vector<long> milestones_;
  double decay_;
};

// Inverse slope rho_t^{-1} of the soft quantization maps over t = 1..T:
// nonincreasing from ~1 at t = 1 to exactly 0 at the saturation step
// ceil(saturation_fraction * T) and afterwards. rho^{-1} = 0 signals hard
// quantization to the consumer; the infinite slope itself is never formed.
// The constant-one and hard kinds pin the map to clipped identity and hard
// quantization respectively.
class SlopeSchedule {
 public:
  enum class Kind { kCosine, kSigmoid, kConstantOne, kHard };

  static SlopeSchedule cosine(long total_steps, double saturation_fraction = 0.93) {
    return {Kind::kCosine, total_steps, 50.0, saturation_fraction};
  }
  static SlopeSchedule sigmoid(long total_steps, double steepness = 50.0,
                               double saturation_fraction = 0.93) {
    return {Kind::kSigmoid, total_steps, steepness, saturation_fraction};
  }
  static SlopeSchedule constant_one(long total_steps) {
    return {Kind::kConstantOne, total_steps, 50.0, 1.0};
  }
  static SlopeSchedule hard(long total_steps) {
    return {Kind::kHard, total_steps, 50.0, 1.0};
  }

  double inv_slope(long t) const {
    if (t < 1 || t > total_steps_) throw std::domain_error("SlopeSchedule: t out of range");
    switch (kind_) {
      case Kind::kConstantOne:
        return 1.0;
      case Kind::kHard:
        return 0.0;
      default:
        break;
    }
    if (t >= saturation_step_) return 0.0;
    const double x = double(t) / double(saturation_step_);
    if (kind_ == Kind::kCosine) return 0.5 * (1.0 + std::cos(std::numbers::pi * x));
    // Logistic sigma(-k (x - 1/2)), affinely renormalized to 1 at x = 0 and
    // 0 at x = 1.
    const auto raw = [this](double xx) {
      return 1.0 / (1.0 + std::exp(steepness_ * (xx - 0.5)));
    };
    const double r0 = raw(0.0);
    const double r1 = raw(1.0);
    return (raw(x) - r1) / (r0 - r1);
  }

  Kind kind() const { return kind_; }
  long total_steps() const { return total_steps_; }
  long saturation_step() const { return saturation_step_; }
  double steepness() const { return steepness_; }

 private:
  SlopeSchedule(Kind kind, long total_steps, double steepness, double saturation_fraction)
      : kind_(kind), total_steps_(total_steps), steepness_(steepness) {
    if (total_steps_ < 1) throw std::invalid_argument("SlopeSchedule: total_steps must be >= 1");
    if (!(saturation_fraction > 0.0 && saturation_fraction <= 1.0))
      throw std::invalid_argument("SlopeSchedule: saturation_fraction must be in (0, 1]");
    if (!(steepness_ > 0.0)) throw std::invalid_argument("SlopeSchedule: steepness must be positive");
    saturation_step_ =
        std::max<long>(1, long(std::ceil(saturation_fraction * double(total_steps_))));
  }

  Kind kind_;
  long total_steps_;
  long saturation_step_ = 1;
  double steepness_;
};

}  // namespace parq
