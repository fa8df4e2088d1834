#include "parq/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "parq/lsbq.hpp"
#include "parq/par.hpp"
#include "parq/quant_grid.hpp"
#include "parq/rng.hpp"
#include "parq/schedules.hpp"
#include "test_util.hpp"

namespace {

using parq::aprox_step;
using parq::average_iterate;
using parq::binaryconnect_step;
using parq::binaryrelax_step;
using parq::Granularity;
using parq::OptimizerState;
using parq::par_from_grid;
using parq::ParamGroup;
using parq::parq_step;
using parq::prox_sgd_step;
using parq::QuantGrid;
using parq::sgd_step;

std::vector<ParamGroup> flat_group(std::size_t n, int bits = 1, bool ternary = false) {
  return {ParamGroup{.offset = 0, .rows = n, .cols = 0, .bits = bits, .ternary = ternary}};
}

TEST(SgdStep, Arithmetic) {
  OptimizerState s({1.0});
  sgd_step(s, std::vector<double>{2.0}, 0.5);
  EXPECT_EQ(s.w, (std::vector<double>{0.0}));
  EXPECT_EQ(s.u, s.w);

  sgd_step(s, std::vector<double>{0.0}, 0.5);
  EXPECT_EQ(s.w, (std::vector<double>{0.0}));

  OptimizerState s2({0.0});
  sgd_step(s2, std::vector<double>{1.0}, 1.0);
  sgd_step(s2, std::vector<double>{-1.0}, 1.0);
  EXPECT_EQ(s2.w, (std::vector<double>{0.0}));
  EXPECT_EQ(s2.t, 2);
  EXPECT_DOUBLE_EQ(s2.gamma, 2.0);
}

TEST(ProxSgdStep, ForwardBackwardExample) {
  const auto reg = par_from_grid(QuantGrid({-1.0, 0.0, 1.0}), 1.0);
  OptimizerState s({0.8});
  prox_sgd_step(s, std::vector<double>{0.0}, 0.1, reg);
  EXPECT_EQ(s.u, (std::vector<double>{0.8}));
  EXPECT_DOUBLE_EQ(s.w[0], 0.75);  // slant shifted by eta*lambda*a_0 = 0.05
  EXPECT_NEAR(s.w[0], testutil::prox_bruteforce(reg, 0.1, 0.8), 1e-5);
}

TEST(ProxSgdStep, ZeroIsAFixedPointUnderZeroGradient) {
  // 0 is the only grid value inside its own flat when a_0 > 0; it stays put.
  const auto reg = par_from_grid(QuantGrid({-1.0, 0.0, 1.0}), 1.0);
  OptimizerState s({0.0});
  for (int i = 0; i < 5; ++i) prox_sgd_step(s, std::vector<double>{0.0}, 0.01, reg);
  EXPECT_EQ(s.w, (std::vector<double>{0.0}));
}

TEST(ProxSgdStep, ProxApproachesIdentityAsEtaVanishes) {
  const auto reg = par_from_grid(QuantGrid({-1.0, 0.0, 1.0}), 1.0);
  const double eta = 1e-8;
  OptimizerState s({0.8});
  prox_sgd_step(s, std::vector<double>{0.25}, eta, reg);
  const double forward = 0.8 - eta * 0.25;
  EXPECT_NEAR(s.w[0], forward, eta * reg.lambda() * reg.slopes().back());
}

TEST(AproxStep, FlatAtZero) {
  const auto reg = par_from_grid(QuantGrid({-1.0, 0.0, 1.0}), 1.0);
  OptimizerState s({0.2});
  aprox_step(s, std::vector<double>{0.0}, 1.0, reg);
  EXPECT_DOUBLE_EQ(s.gamma, 1.0);
  EXPECT_EQ(s.w, (std::vector<double>{0.0}));  // |u| = 0.2 < gamma*lambda*a_0 = 0.5
  EXPECT_EQ(s.u, (std::vector<double>{0.2}));  // latent untouched by the prox
}

TEST(AproxStep, LatentAccumulatesExactly) {
  const auto reg = par_from_grid(QuantGrid({-1.0, 0.0, 1.0}), 1.0);
  OptimizerState s({0.5});
  const double g = 0.25, eta = 0.5;
  for (int t = 0; t < 8; ++t) aprox_step(s, std::vector<double>{g}, eta, reg);
  EXPECT_EQ(s.u, (std::vector<double>{0.5 - 8 * eta * g}));
  EXPECT_DOUBLE_EQ(s.gamma, 4.0);
}

TEST(AproxStep, IndicatorProxMatchesBinaryConnectBitwise) {
  const QuantGrid grid({-1.0, 1.0});
  OptimizerState a({0.3, -0.2, 0.05});
  OptimizerState b({0.3, -0.2, 0.05});
  parq::PhiloxRng rng({99, 0});
  for (int t = 1; t <= 200; ++t) {
    std::vector<double> grad(3);
    for (double& x : grad) x = rng.next_gaussian();
    const double eta = 0.3 / std::sqrt(double(t));
    aprox_step(a, grad, eta, grid);
    binaryconnect_step(b, grad, eta, grid);
    ASSERT_EQ(0, std::memcmp(a.w.data(), b.w.data(), 3 * sizeof(double)));
    ASSERT_EQ(0, std::memcmp(a.u.data(), b.u.data(), 3 * sizeof(double)));
  }
}

TEST(BinaryConnectStep, Examples) {
  const QuantGrid grid({-1.0, 1.0});
  OptimizerState s({0.4});
  binaryconnect_step(s, std::vector<double>{-0.2}, 1.0, grid);
  EXPECT_DOUBLE_EQ(s.u[0], 0.6);
  EXPECT_EQ(s.w, (std::vector<double>{1.0}));

  binaryconnect_step(s, std::vector<double>{0.0}, 1.0, grid);
  EXPECT_DOUBLE_EQ(s.u[0], 0.6);
  EXPECT_EQ(s.w, (std::vector<double>{1.0}));

  OptimizerState s2({-0.1});
  binaryconnect_step(s2, std::vector<double>{0.2}, 1.0, grid);
  EXPECT_DOUBLE_EQ(s2.u[0], -0.3);
  EXPECT_EQ(s2.w, (std::vector<double>{-1.0}));
}

TEST(ParqStep, OneBitClippedIdentity) {
  OptimizerState s({1.0, -3.0});
  const auto groups = flat_group(2, 1);
  parq_step(s, std::vector<double>{0.0, 0.0}, 1.0, 1.0, groups);
  // lsbq_1bit([1,-3]) -> v = 2, grid {-2, 2}; slope 1 clips
  EXPECT_EQ(s.group_grids[0][0].values(), (std::vector<double>{-2.0, 2.0}));
  EXPECT_EQ(s.w, (std::vector<double>{1.0, -2.0}));

  OptimizerState s2({1.0, -3.0});
  parq_step(s2, std::vector<double>{0.0, 0.0}, 1.0, 0.0, groups);  // inv slope 0 -> hard
  EXPECT_EQ(s2.w, (std::vector<double>{2.0, -2.0}));
}

TEST(ParqStep, GridStabilizesUnderZeroGradients) {
  OptimizerState s({0.7, -1.3, 0.4});
  const auto groups = flat_group(3, 2);
  parq_step(s, std::vector<double>{0.0, 0.0, 0.0}, 0.5, 1.0, groups);
  const auto first = s.group_grids[0][0].values();
  for (int t = 0; t < 5; ++t)
    parq_step(s, std::vector<double>{0.0, 0.0, 0.0}, 0.5, 1.0, groups);
  EXPECT_EQ(s.group_grids[0][0].values(), first);
}

TEST(ParqStep, PerRowGranularityEstimatesRowGrids) {
  // 2 x 3 tensor; rows get independent grids
  OptimizerState s({1.0, 2.0, -1.5, 10.0, -8.0, 9.0});
  std::vector<ParamGroup> groups{ParamGroup{.offset = 0,
                                            .rows = 2,
                                            .cols = 3,
                                            .granularity = Granularity::kPerRow,
                                            .bits = 1}};
  parq_step(s, std::vector<double>(6, 0.0), 1.0, 0.0, groups);
  const std::vector<double> row0{1.0, 2.0, -1.5};
  const std::vector<double> row1{10.0, -8.0, 9.0};
  EXPECT_EQ(s.group_grids[0].size(), 2u);
  EXPECT_EQ(s.group_grids[0][0].values(),
            parq::grid_from_scales(parq::lsbq_greedy(row0, 1)).values());
  EXPECT_EQ(s.group_grids[0][1].values(),
            parq::grid_from_scales(parq::lsbq_greedy(row1, 1)).values());
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(s.w[i], s.group_grids[0][0].nearest(s.u[i]));
    EXPECT_EQ(s.w[3 + i], s.group_grids[0][1].nearest(s.u[3 + i]));
  }
}

TEST(ParqStep, TernaryGroups) {
  OptimizerState s({3.0, 0.1, -2.9});
  const auto groups = flat_group(3, 2, /*ternary=*/true);
  parq_step(s, std::vector<double>(3, 0.0), 1.0, 0.0, groups);
  const double q = parq::lsbq_ternary(std::vector<double>{3.0, 0.1, -2.9}).scale;
  EXPECT_DOUBLE_EQ(q, 2.95);
  EXPECT_EQ(s.group_grids[0][0].values(), (std::vector<double>{-q, 0.0, q}));
  EXPECT_EQ(s.w, (std::vector<double>{q, 0.0, -q}));
}

TEST(ParqStep, TerminalQuantizationPersists) {
  parq::PhiloxRng rng({55, 0});
  OptimizerState s({0.7, -1.3, 0.4, 2.2});
  const auto groups = flat_group(4, 2);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> grad(4);
    for (double& x : grad) x = 0.2 * rng.next_gaussian();
    parq_step(s, grad, 0.1, 0.0, groups);
    const auto& grid = s.group_grids[0][0].values();
    for (double w : s.w) {
      bool on = false;
      for (double v : grid) on |= (w == v);
      EXPECT_TRUE(on) << "w=" << w;
    }
  }
}

TEST(ParqStep, RefreshCadenceReusesGrids) {
  OptimizerState s({0.7, -1.3, 0.4});
  const auto groups = flat_group(3, 1);
  parq_step(s, std::vector<double>{0.3, -0.1, 0.2}, 0.5, 1.0, groups);
  const auto cached = s.group_grids[0][0].values();
  parq_step(s, std::vector<double>{0.4, 0.6, -0.2}, 0.5, 1.0, groups,
            /*refresh_grids=*/false);
  EXPECT_EQ(s.group_grids[0][0].values(), cached);
  parq_step(s, std::vector<double>{0.4, 0.6, -0.2}, 0.5, 1.0, groups);
  EXPECT_NE(s.group_grids[0][0].values(), cached);
}

TEST(ParqStep, SkipsFullPrecisionGroups) {
  OptimizerState s({0.7, -1.3, 0.4, 0.9});
  std::vector<ParamGroup> groups{
      ParamGroup{.offset = 0, .rows = 2, .cols = 0, .bits = 1},
      ParamGroup{.offset = 2, .rows = 2, .cols = 0, .quantize = false}};
  parq_step(s, std::vector<double>(4, 0.0), 1.0, 0.0, groups);
  EXPECT_EQ(s.w[2], s.u[2]);
  EXPECT_EQ(s.w[3], s.u[3]);
}

TEST(BinaryRelaxStep, ConvexCombination) {
  OptimizerState s({1.0, -3.0});
  const auto groups = flat_group(2, 1);
  binaryrelax_step(s, std::vector<double>{0.0, 0.0}, 1.0, 1.0, groups);  // rho = 1
  // grid {-2, 2}: w = (Q(u) + u) / 2
  EXPECT_EQ(s.w, (std::vector<double>{1.5, -2.5}));

  OptimizerState s2({1.0, -3.0});
  binaryrelax_step(s2, std::vector<double>{0.0, 0.0}, 1.0, 0.0, groups);
  EXPECT_EQ(s2.w, (std::vector<double>{2.0, -2.0}));
}

TEST(AverageIterate, WeightedMean) {
  OptimizerState s({1.0});
  EXPECT_THROW(average_iterate(s), std::domain_error);
  // first step pairs eta_1 with w^1
  sgd_step(s, std::vector<double>{0.0}, 0.7);
  EXPECT_EQ(average_iterate(s), (std::vector<double>{1.0}));

  // eta = [1, 2] against iterates w = [1], [4]: mean (1*1 + 2*4) / 3 = 3
  OptimizerState s2({1.0});
  sgd_step(s2, std::vector<double>{-3.0}, 1.0);  // w^2 = 4
  sgd_step(s2, std::vector<double>{0.0}, 2.0);
  EXPECT_EQ(average_iterate(s2), (std::vector<double>{3.0}));
}

TEST(AverageIterate, AlternatingCancels) {
  const QuantGrid grid({-1.0, 1.0});
  OptimizerState s({1.0});
  s.u[0] = 0.5;
  for (int k = 0; k < 10; ++k) {
    // flip the latent across zero each step: w alternates +1 / -1
    binaryconnect_step(s, std::vector<double>{(k % 2 == 0) ? 1.0 : -1.0}, 1.0, grid);
  }
  EXPECT_EQ(average_iterate(s), (std::vector<double>{0.0}));
}

TEST(AproxStep, QuantizedCoordinatesAreExactGridValues) {
  // coordinates inside the flats come out as exact grid doubles, so the
  // quantized fraction is identical at tolerance 0 and 1e-12
  const QuantGrid grid({-1.0, 0.0, 1.0});
  const auto reg = par_from_grid(grid, 0.3);
  parq::PhiloxRng rng({314, 0});
  OptimizerState s({0.1, -0.4, 1.2, 0.8});
  const std::vector<double> c{0.1, -0.3, 1.9, 0.2};
  std::vector<double> g(4);
  for (int t = 1; t <= 500; ++t) {
    for (int i = 0; i < 4; ++i) g[i] = s.w[i] - c[i] - 0.3 * rng.next_gaussian();
    aprox_step(s, g, 0.4 / std::sqrt(double(t)), reg);
  }
  const double exact = parq::quantized_fraction(s.w, grid, 0.0);
  EXPECT_EQ(exact, parq::quantized_fraction(s.w, grid, 1e-12));
  EXPECT_GT(exact, 0.0);
}

TEST(OptimizerState, GammaMatchesRecomputedSum) {
  const auto sched = parq::StepSchedule::inverse_sqrt(0.3);
  const auto reg = par_from_grid(QuantGrid({-1.0, 0.0, 1.0}), 1.0);
  OptimizerState s({0.4});
  long double expected = 0.0L;
  double max_eta = 0.0;
  const long T = 10000;
  for (long t = 1; t <= T; ++t) {
    const double eta = sched.at(t);
    expected += eta;
    max_eta = std::max(max_eta, eta);
    aprox_step(s, std::vector<double>{0.01}, eta, reg);
  }
  EXPECT_NEAR(s.gamma, double(expected), double(T) * 2.3e-16 * max_eta);
}

TEST(Steps, ShapeMismatchThrows) {
  OptimizerState s({1.0, 2.0});
  EXPECT_THROW(sgd_step(s, std::vector<double>{1.0}, 0.1), std::invalid_argument);
  EXPECT_THROW(sgd_step(s, std::vector<double>{1.0, 1.0}, 0.0), std::invalid_argument);
  const auto groups = flat_group(3);
  EXPECT_THROW(parq_step(s, std::vector<double>{1.0, 1.0}, 0.1, 1.0, groups),
               std::invalid_argument);
  EXPECT_THROW(parq_step(s, std::vector<double>{1.0, 1.0}, 0.1, 1.5, flat_group(2)),
               std::invalid_argument);
}

TEST(ParamGroup, Validation) {
  ParamGroup flat_per_row{.offset = 0, .rows = 4, .cols = 0,
                          .granularity = Granularity::kPerRow};
  EXPECT_THROW(flat_per_row.validate(), std::invalid_argument);
  ParamGroup empty{.offset = 0, .rows = 0};
  EXPECT_THROW(empty.validate(), std::invalid_argument);
  ParamGroup bad_bits{.offset = 0, .rows = 2, .bits = 0};
  EXPECT_THROW(bad_bits.validate(), std::invalid_argument);
  ParamGroup ternary_ok{.offset = 0, .rows = 2, .bits = 0, .ternary = true};
  EXPECT_NO_THROW(ternary_ok.validate());
}

}  // namespace
