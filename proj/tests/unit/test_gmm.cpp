#include <gtest/gtest.h>

#include <cmath>

#include "panoscan/errors.hpp"
#include "panoscan/gmm.hpp"
#include "test_util.hpp"

using namespace panoscan;

namespace {

GmmParams unit_gmm() { return GmmParams{{1.0}, {{0.0, 0.0}}, {{1.0, 1.0}}}; }

GmmParams random_gmm(RngStream& rng, int k) {
  GmmParams g;
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    g.weights.push_back(0.2 + rng.uniform());
    total += g.weights.back();
    g.means.push_back({4.0 * (2.0 * rng.uniform() - 1.0), 4.0 * (2.0 * rng.uniform() - 1.0)});
    g.sigmas.push_back({0.3 + 1.5 * rng.uniform(), 0.3 + 1.5 * rng.uniform()});
  }
  for (double& w : g.weights) w /= total;
  return g;
}

// Sum of cell masses over a lattice covering +-8 sigma around every mean.
double lattice_total(const GmmParams& g, const QuantizerSpec& q) {
  double lo_u = 1e300, hi_u = -1e300, lo_v = 1e300, hi_v = -1e300;
  for (int k = 0; k < g.components(); ++k) {
    lo_u = std::min(lo_u, g.means[k].u - 8.0 * g.sigmas[k].u);
    hi_u = std::max(hi_u, g.means[k].u + 8.0 * g.sigmas[k].u);
    lo_v = std::min(lo_v, g.means[k].v - 8.0 * g.sigmas[k].v);
    hi_v = std::max(hi_v, g.means[k].v + 8.0 * g.sigmas[k].v);
  }
  const long iu0 = std::lround(std::floor(lo_u / q.step)), iu1 = std::lround(std::ceil(hi_u / q.step));
  const long iv0 = std::lround(std::floor(lo_v / q.step)), iv1 = std::lround(std::ceil(hi_v / q.step));
  double total = 0.0;
  for (long i = iu0; i <= iu1; ++i) {
    for (long j = iv0; j <= iv1; ++j) total += gmm_mass(g, {i * q.step, j * q.step}, q);
  }
  return total;
}

}  // namespace

TEST(GmmDensity, StandardNormalPeak) { EXPECT_NEAR(gmm_density(unit_gmm(), {0.0, 0.0}), 0.15915494309189535, 1e-15); }

TEST(GmmDensity, IdenticalComponentsCollapse) {
  GmmParams two{{0.5, 0.5}, {{1.0, -1.0}, {1.0, -1.0}}, {{0.7, 1.3}, {0.7, 1.3}}};
  GmmParams one{{1.0}, {{1.0, -1.0}}, {{0.7, 1.3}}};
  for (double x : {-2.0, 0.0, 0.5, 3.0}) EXPECT_NEAR(gmm_density(two, {x, x / 2}), gmm_density(one, {x, x / 2}), 1e-15);
}

TEST(GmmDensity, IntegratesToOne) {
  RngStream rng(11, 0);
  const GmmParams g = random_gmm(rng, 3);
  // Trapezoid rule on a fine grid covering +-8 sigma.
  const double h = 0.02;
  double total = 0.0;
  for (double u = -20.0; u <= 20.0; u += h) {
    for (double v = -20.0; v <= 20.0; v += h) total += gmm_density(g, {u, v});
  }
  EXPECT_NEAR(total * h * h, 1.0, 1e-4);
}

TEST(Quantize, Oracles) {
  const QuantizerSpec q{0.2};
  EXPECT_EQ(quantize(0.0, q), 0.0);
  EXPECT_NEAR(quantize(0.3, q), 0.4, 1e-15);
  EXPECT_EQ(quantize(-0.1, q), 0.0);
  EXPECT_NEAR(quantize(-0.3, q), -0.2, 1e-15);
}

TEST(Quantize, Idempotent) {
  RngStream rng(12, 0);
  for (double step : {0.1, 0.2, 0.5, 1.0}) {
    for (int i = 0; i < 10000; ++i) {
      const double x = 100.0 * (2.0 * rng.uniform() - 1.0);
      const double once = quantize(x, {step});
      ASSERT_EQ(quantize(once, {step}), once);
    }
  }
}

TEST(GmmMass, UnitCellOracle) {
  const double expect = std::pow(normal_cdf(0.1) - normal_cdf(-0.1), 2);
  EXPECT_NEAR(gmm_mass(unit_gmm(), {0.0, 0.0}, {0.2}), expect, 1e-15);
  EXPECT_NEAR(expect, 0.0063450, 5e-8);
}

TEST(GmmMass, MidpointLimitForWideSigma) {
  GmmParams g{{1.0}, {{3.0, -2.0}}, {{100.0, 100.0}}};
  const UVPoint c{10.0, 4.0};
  const double mass = gmm_mass(g, c, {0.2});
  EXPECT_NEAR(mass / (0.04 * gmm_density(g, c)), 1.0, 0.01);
}

TEST(GmmMass, SumsToOneOnLattice) {
  RngStream rng(13, 0);
  for (int trial = 0; trial < 20; ++trial) {
    for (double step : {0.1, 0.2, 0.5}) {
      const GmmParams g = random_gmm(rng, 1 + trial % 3);
      ASSERT_NEAR(lattice_total(g, {step}), 1.0, 1e-6);
    }
  }
}

TEST(GmmMass, PermutationAndMergeInvariance) {
  RngStream rng(14, 0);
  for (int i = 0; i < 100; ++i) {
    const GmmParams g = random_gmm(rng, 3);
    GmmParams perm{{g.weights[2], g.weights[0], g.weights[1]},
                   {g.means[2], g.means[0], g.means[1]},
                   {g.sigmas[2], g.sigmas[0], g.sigmas[1]}};
    GmmParams split = g;
    split.weights[0] *= 0.5;
    split.weights.push_back(split.weights[0]);
    split.means.push_back(g.means[0]);
    split.sigmas.push_back(g.sigmas[0]);
    const UVPoint c{quantize(g.means[1].u, {}), quantize(g.means[1].v, {})};
    ASSERT_NEAR(gmm_mass(perm, c, {}), gmm_mass(g, c, {}), 1e-12);
    ASSERT_NEAR(gmm_mass(split, c, {}), gmm_mass(g, c, {}), 1e-12);
  }
}

TEST(GmmMass, IncreasesWithStepAtMode) {
  const GmmParams g = unit_gmm();
  double prev = 0.0;
  for (double step = 0.05; step < 3.0; step += 0.05) {
    const double m = gmm_mass(g, {0.0, 0.0}, {step});
    ASSERT_GT(m, prev);
    prev = m;
  }
}

TEST(GmmMass, FloorApplies) {
  EXPECT_EQ(gmm_mass(unit_gmm(), {1000.0, 0.0}, {0.2}), kMassFloor);
}

TEST(CodeLength, Oracles) {
  EXPECT_NEAR(code_length(unit_gmm(), {0.0, 0.0}, {0.2}), -std::log2(0.0063450), 1e-4);
  EXPECT_NEAR(code_length(unit_gmm(), {0.0, 0.0}, {0.2}), 7.300, 5e-4);
  // Target is quantized before evaluation.
  EXPECT_EQ(code_length(unit_gmm(), {0.05, -0.07}, {0.2}), code_length(unit_gmm(), {0.0, 0.0}, {0.2}));
  // A cell holding half the mass costs one bit; a cell holding all of it costs none.
  GmmParams split{{0.5, 0.5}, {{0.0, 0.0}, {50.0, 0.0}}, {{1e-3, 1e-3}, {1e-3, 1e-3}}};
  EXPECT_NEAR(code_length(split, {0.0, 0.0}, {0.2}), 1.0, 1e-12);
  EXPECT_NEAR(code_length(GmmParams{{1.0}, {{0.0, 0.0}}, {{1e-3, 1e-3}}}, {0.0, 0.0}, {0.2}), 0.0, 1e-12);
  EXPECT_NEAR(code_length(unit_gmm(), {1000.0, 0.0}, {0.2}), -std::log2(kMassFloor), 1e-9);
}

TEST(CodeLength, GradientMatchesFiniteDifferences) {
  RngStream rng(15, 0);
  const QuantizerSpec q{0.2};
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    const GmmParams g = random_gmm(rng, 1 + trial % 3);
    const UVPoint target{g.means[0].u + rng.normal(), g.means[0].v + rng.normal()};
    const CodeLengthGrad cg = code_length_with_grad(g, target, q);
    ASSERT_FALSE(cg.floored);
    ASSERT_DOUBLE_EQ(cg.bits, code_length(g, target, q));
    auto check = [&](double analytic, auto&& mutate) {
      GmmParams a = g, b = g;
      mutate(a, h);
      mutate(b, -h);
      const double fd = (code_length(a, target, q) - code_length(b, target, q)) / (2.0 * h);
      EXPECT_LT(test::rel_err(analytic, fd, 1e-2), 1e-4) << "analytic " << analytic << " fd " << fd;
    };
    for (int k = 0; k < g.components(); ++k) {
      check(cg.d_weights[k], [k](GmmParams& p, double d) { p.weights[k] += d; });
      check(cg.d_means[k].u, [k](GmmParams& p, double d) { p.means[k].u += d; });
      check(cg.d_means[k].v, [k](GmmParams& p, double d) { p.means[k].v += d; });
      check(cg.d_sigmas[k].u, [k](GmmParams& p, double d) { p.sigmas[k].u += d; });
      check(cg.d_sigmas[k].v, [k](GmmParams& p, double d) { p.sigmas[k].v += d; });
    }
  }
}

TEST(NormalCdf, TailsAndSymmetry) {
  EXPECT_NEAR(normal_cdf(0.0), 0.5, 1e-16);
  EXPECT_NEAR(normal_cdf(1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(normal_cdf(-8.0) / 6.22096057427178e-16, 1.0, 1e-12);
  EXPECT_NEAR(normal_interval(8.0, 9.0) / (normal_cdf(-8.0) - normal_cdf(-9.0)), 1.0, 1e-12);
  for (double x : {0.3, 1.7, 4.2}) EXPECT_NEAR(normal_cdf(x) + normal_cdf(-x), 1.0, 1e-15);
}

TEST(GmmParams, Validation) {
  EXPECT_NO_THROW(unit_gmm().validate());
  GmmParams bad = unit_gmm();
  bad.weights[0] = 0.9;
  EXPECT_ANY_THROW(bad.validate());
  bad = unit_gmm();
  bad.sigmas[0].u = 1e-4;
  EXPECT_ANY_THROW(bad.validate());
  EXPECT_ANY_THROW((GmmParams{}.validate()));
}
