#include "parq/quant_grid.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "parq/rng.hpp"
#include "test_util.hpp"

namespace {

using parq::hard_quantize;
using parq::QuantGrid;
using parq::quantized_fraction;

TEST(QuantGrid, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(QuantGrid({}), std::invalid_argument);
  EXPECT_THROW(QuantGrid({0.0, std::numeric_limits<double>::infinity()}),
               std::invalid_argument);
  EXPECT_THROW(QuantGrid({std::numeric_limits<double>::quiet_NaN()}), std::invalid_argument);
}

TEST(QuantGrid, SortsAndDeduplicates) {
  const QuantGrid grid({1.0, -1.0, 0.0, 1.0, -0.0});
  EXPECT_EQ(grid.values(), (std::vector<double>{-1.0, 0.0, 1.0}));
  EXPECT_TRUE(grid.symmetric());
}

TEST(QuantGrid, SymmetryDetection) {
  EXPECT_TRUE(QuantGrid({-2.0, -1.0, 1.0, 2.0}).symmetric());
  EXPECT_FALSE(QuantGrid({-1.0, 0.0, 2.0}).symmetric());
  EXPECT_TRUE(QuantGrid({0.0}).symmetric());
}

TEST(QuantGrid, Thresholds) {
  const QuantGrid grid({-1.0, 0.0, 2.0});
  EXPECT_EQ(grid.thresholds(), (std::vector<double>{-0.5, 1.0}));
}

TEST(HardQuantize, BinaryExample) {
  const QuantGrid grid({-1.0, 1.0});
  EXPECT_EQ(hard_quantize(std::vector<double>{0.2}, grid), (std::vector<double>{1.0}));
}

TEST(HardQuantize, NearestOverTernaryGrid) {
  const QuantGrid grid({-0.5, 0.0, 0.5});
  // brute-force nearest over the grid agrees; the midpoint is 0.25
  double best = grid.values()[0];
  for (double v : grid.values())
    if (std::fabs(0.3 - v) < std::fabs(0.3 - best)) best = v;
  EXPECT_EQ(best, 0.5);
  EXPECT_EQ(hard_quantize(std::vector<double>{0.3}, grid), (std::vector<double>{0.5}));
}

TEST(HardQuantize, MidpointTieGoesAwayFromZero) {
  const QuantGrid grid({-0.5, 0.0, 0.5});
  EXPECT_EQ(grid.nearest(0.25), 0.5);
  EXPECT_EQ(grid.nearest(-0.25), -0.5);
  const QuantGrid negatives({-1.0, -0.5});
  EXPECT_EQ(negatives.nearest(-0.75), -1.0);
}

TEST(QuantizedFraction, Examples) {
  const QuantGrid grid({-1.0, 1.0});
  EXPECT_EQ(quantized_fraction(std::vector<double>{1.0, -1.0}, grid, 0.0), 1.0);
  EXPECT_EQ(quantized_fraction(std::vector<double>{0.5, 1.0}, grid, 0.0), 0.5);
  EXPECT_EQ(quantized_fraction(std::vector<double>{0.999}, grid, 1e-2), 1.0);
  EXPECT_THROW(quantized_fraction(std::vector<double>{0.0}, grid, -1.0),
               std::invalid_argument);
}

TEST(HardQuantize, Idempotent) {
  parq::PhiloxRng rng({2024, 0});
  for (int trial = 0; trial < 50; ++trial) {
    const QuantGrid grid = testutil::random_symmetric_grid(rng);
    for (int i = 0; i < 100; ++i) {
      const double u = 6.0 * (2.0 * rng.next_double() - 1.0);
      const double once = grid.nearest(u);
      EXPECT_EQ(grid.nearest(once), once);
    }
  }
}

TEST(HardQuantize, MonotoneElementwise) {
  parq::PhiloxRng rng({2025, 0});
  for (int trial = 0; trial < 50; ++trial) {
    const QuantGrid grid = testutil::random_symmetric_grid(rng);
    double prev_u = -10.0;
    double prev_w = grid.nearest(prev_u);
    for (int i = 0; i < 200; ++i) {
      const double u = prev_u + 0.1 * rng.next_double();
      const double w = grid.nearest(u);
      EXPECT_LE(prev_w, w);
      prev_u = u;
      prev_w = w;
    }
  }
}

TEST(HardQuantize, OddSymmetryOnSymmetricGrids) {
  parq::PhiloxRng rng({2026, 0});
  for (int trial = 0; trial < 50; ++trial) {
    const QuantGrid grid = testutil::random_symmetric_grid(rng);
    const auto mids = grid.thresholds();
    for (int i = 0; i < 100; ++i) {
      const double u = 5.0 * (2.0 * rng.next_double() - 1.0);
      EXPECT_EQ(grid.nearest(-u), -grid.nearest(u)) << "u=" << u;
    }
    // exercise the tie rule at the midpoints themselves
    for (double m : mids) {
      if (m != 0.0) {
        EXPECT_EQ(grid.nearest(-m), -grid.nearest(m));
      }
    }
  }
}

TEST(HardQuantize, NearestIsOptimal) {
  parq::PhiloxRng rng({2027, 0});
  for (int trial = 0; trial < 50; ++trial) {
    const QuantGrid grid = testutil::random_symmetric_grid(rng);
    for (int i = 0; i < 100; ++i) {
      const double u = 5.0 * (2.0 * rng.next_double() - 1.0);
      const double w = grid.nearest(u);
      for (double v : grid.values())
        EXPECT_LE(std::fabs(u - w), std::fabs(u - v));
    }
  }
}

}  // namespace
