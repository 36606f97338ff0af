#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "panoscan/errors.hpp"
#include "panoscan/metrics.hpp"
#include "test_util.hpp"

using namespace panoscan;

namespace {

Scanpath random_walk(RngStream& rng, int n, double step = 0.1) {
  Scanpath p;
  p.points.push_back(test::random_viewpoint(rng, 1.0));
  while (static_cast<int>(p.points.size()) < n) p.points.push_back(test::nearby_viewpoint(rng, p.points.back(), step));
  return p;
}

}  // namespace

TEST(Od, MetricAxioms) {
  RngStream rng(81, 0);
  for (int i = 0; i < 200; ++i) {
    const Scanpath a = random_walk(rng, 20), b = random_walk(rng, 20), c = random_walk(rng, 20);
    ASSERT_EQ(od(a, a), 0.0);
    ASSERT_GT(od(a, b), 0.0);
    ASSERT_DOUBLE_EQ(od(a, b), od(b, a));
    ASSERT_LE(od(a, c), od(a, b) + od(b, c) + 1e-12);
    ASSERT_LE(od(a, b), kPi);
  }
}

TEST(Od, Oracles) {
  Scanpath a{{{0.0, 0.0}, {0.0, 0.0}}}, b{{{0.0, kPi / 2}, {kPi / 2, 0.0}}};
  EXPECT_NEAR(od(a, b), kPi / 2, 1e-15);
  Scanpath c{{{0.0, kPi - 0.01}}}, d{{{0.0, -kPi + 0.01}}};
  EXPECT_NEAR(od(c, d), 0.02, 1e-12);  // across the seam
  EXPECT_THROW(od(a, c), ShapeError);
  EXPECT_THROW(od(Scanpath{}, Scanpath{}), EmptyPath);
}

TEST(Tc, Oracles) {
  Scanpath a, b, flipped;
  for (int i = 0; i < 10; ++i) {
    a.points.push_back({0.05 * i, 0.1 * i});
    b.points.push_back({0.2 + 0.1 * i, -1.0 + 0.3 * i});
    flipped.points.push_back({-0.05 * i, -0.1 * i});
  }
  EXPECT_NEAR(tc(a, a), 1.0, 1e-12);
  EXPECT_NEAR(tc(a, b), 1.0, 1e-12);  // affine in each coordinate
  EXPECT_NEAR(tc(a, flipped), -1.0, 1e-12);
  // Longitude crossing the seam is unwrapped first.
  Scanpath seam;
  for (int i = 0; i < 10; ++i) seam.points.push_back({0.05 * i, normalize_longitude(kPi - 0.3 + 0.1 * i)});
  EXPECT_NEAR(tc(a, seam), 1.0, 1e-12);
  Scanpath still;
  still.points.assign(10, Viewpoint{0.1, 0.1});
  EXPECT_THROW(tc(a, still), DegenerateSeries);
}

TEST(Tc, Symmetric) {
  RngStream rng(82, 0);
  for (int i = 0; i < 100; ++i) {
    const Scanpath a = random_walk(rng, 15), b = random_walk(rng, 15);
    ASSERT_DOUBLE_EQ(tc(a, b), tc(b, a));
    ASSERT_LE(std::abs(tc(a, b)), 1.0 + 1e-12);
  }
}

TEST(Unwrap, RemovesJumps) {
  const std::vector<double> raw{3.0, -3.1, -2.9, 3.0, 2.8};
  const auto u = unwrap_longitude(raw);
  EXPECT_DOUBLE_EQ(u[0], 3.0);
  EXPECT_NEAR(u[1], -3.1 + kTwoPi, 1e-15);
  EXPECT_NEAR(u[2], -2.9 + kTwoPi, 1e-15);
  EXPECT_NEAR(u[3], 3.0, 1e-15);
  EXPECT_NEAR(u[4], 2.8, 1e-15);
}

TEST(SetMetrics, MatchBruteForce) {
  RngStream rng(83, 0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Scanpath> a, b;
    for (int i = 0; i < 5; ++i) {
      a.push_back(random_walk(rng, 12));
      b.push_back(random_walk(rng, 12));
    }
    const SetMetric mo = min_od(a, b), mt = max_tc(a, b);
    double best_od = std::numeric_limits<double>::infinity(), best_tc = -std::numeric_limits<double>::infinity();
    int oa = -1, ob = -1;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        const double o = od(a[i], b[j]), t = tc(a[i], b[j]);
        if (o < best_od) best_od = o, oa = i, ob = j;
        best_tc = std::max(best_tc, t);
        ASSERT_EQ(mo.table[i][j], o);
        ASSERT_EQ(mt.table[i][j], t);
      }
    ASSERT_EQ(mo.value, best_od);
    ASSERT_EQ(mo.best_a, oa);
    ASSERT_EQ(mo.best_b, ob);
    ASSERT_EQ(mt.value, best_tc);
    ASSERT_EQ(mt.table[mt.best_a][mt.best_b], best_tc);
    ASSERT_EQ(mt.degenerate_pairs, 0);
  }
}

TEST(SetMetrics, SelfComparison) {
  RngStream rng(84, 0);
  std::vector<Scanpath> a;
  for (int i = 0; i < 4; ++i) a.push_back(random_walk(rng, 10));
  EXPECT_EQ(min_od(a, a).value, 0.0);
  EXPECT_NEAR(max_tc(a, a).value, 1.0, 1e-12);
}

TEST(SetMetrics, DegeneratePairsAreCounted) {
  RngStream rng(85, 0);
  Scanpath still;
  still.points.assign(10, Viewpoint{0.0, 0.0});
  const std::vector<Scanpath> a{random_walk(rng, 10), still};
  const std::vector<Scanpath> b{random_walk(rng, 10), random_walk(rng, 10)};
  const SetMetric m = max_tc(a, b);
  EXPECT_EQ(m.degenerate_pairs, 2);
  EXPECT_TRUE(std::isnan(m.table[1][0]));
  EXPECT_EQ(m.best_a, 0);
  const std::vector<Scanpath> stills{still};
  EXPECT_THROW(max_tc(stills, stills), DegenerateSeries);
}

TEST(Correlation, PearsonAndRanks) {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 1, 4, 3, 5};
  EXPECT_NEAR(srcc(x, y), 0.8, 1e-15);
  EXPECT_NEAR(pearson(x, x), 1.0, 1e-15);
  EXPECT_EQ(average_ranks(std::vector<double>{10, 30, 20, 20}), (std::vector<double>{1, 4, 2.5, 2.5}));
  EXPECT_THROW(pearson(x, std::vector<double>(5, 1.0)), DegenerateSeries);
  EXPECT_THROW(pearson(x, std::vector<double>{1, 2}), ShapeError);
  // Monotone transforms leave SRCC unchanged.
  RngStream rng(86, 0);
  std::vector<double> a(30), b(30), c(30);
  for (int i = 0; i < 30; ++i) {
    a[i] = rng.normal();
    b[i] = a[i] + 0.5 * rng.normal();
    c[i] = std::exp(3.0 * b[i]);
  }
  EXPECT_NEAR(srcc(a, b), srcc(a, c), 1e-15);
}

TEST(Logistic, NeverWorseThanRaw) {
  RngStream rng(87, 0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> q(40), y(40);
    for (int i = 0; i < 40; ++i) {
      q[i] = rng.normal();
      y[i] = (trial % 3 == 0 ? q[i] : std::tanh(2.0 * q[i])) + 0.3 * rng.normal();
    }
    const LogisticFit fit = plcc_logistic(q, y);
    ASSERT_GE(fit.plcc, fit.raw_plcc - 1e-9);
    ASSERT_NEAR(fit.raw_plcc, pearson(q, y), 1e-15);
  }
}

TEST(Logistic, RecoversSigmoid) {
  const std::array<double, 4> beta{5.0, 1.0, 0.2, 0.3};
  std::vector<double> q, y;
  for (int i = 0; i < 50; ++i) {
    q.push_back(-2.0 + 4.0 * i / 49.0);
    y.push_back(logistic4(q.back(), beta));
  }
  const LogisticFit fit = plcc_logistic(q, y);
  EXPECT_FALSE(fit.fallback);
  EXPECT_NEAR(fit.plcc, 1.0, 1e-6);
  EXPECT_GT(fit.plcc, fit.raw_plcc);
  EXPECT_NEAR(logistic4(0.2, beta), 3.0, 1e-15);
}

TEST(Saliency, NormalizedWithPeakAtViewpoint) {
  Scanpath p;
  p.points.assign(5, Viewpoint{0.3, 1.0});
  const std::vector<Scanpath> paths{p};
  const Eigen::MatrixXd s = saliency_from_scanpaths(paths, 64, 128, 5.0);
  EXPECT_NEAR(s.sum(), 1.0, 1e-12);
  EXPECT_GE(s.minCoeff(), 0.0);
  Eigen::Index r, c;
  s.maxCoeff(&r, &c);
  const ErpCoord e = euler_to_erp_pixel(p.points[0], 64, 128);
  EXPECT_LE(std::abs(r - e.m), 1.0);
  EXPECT_LE(std::abs(c - e.n), 1.0);
}

TEST(Saliency, AntipodeIsNegligible) {
  Scanpath p;
  p.points.assign(1, Viewpoint{0.0, 0.0});
  const std::vector<Scanpath> paths{p};
  const Eigen::MatrixXd s = saliency_from_scanpaths(paths, 64, 128, 5.0);
  const ErpCoord near = euler_to_erp_pixel({0.0, 0.0}, 64, 128);
  const ErpCoord far = euler_to_erp_pixel({0.0, -kPi}, 64, 128);
  const double peak = s(std::lround(near.m), std::lround(near.n));
  EXPECT_LT(s(std::lround(far.m), std::lround(far.n)), 1e-12 * peak);
}

TEST(Saliency, WritesPgmAndSidecar) {
  const auto dir = test::scratch_dir("saliency");
  Scanpath p;
  p.points.assign(3, Viewpoint{0.1, 0.2});
  const std::vector<Scanpath> paths{p};
  write_heatmap(saliency_from_scanpaths(paths, 16, 32, 10.0), dir / "h.pgm", 10.0);
  EXPECT_TRUE(std::filesystem::exists(dir / "h.pgm"));
  EXPECT_TRUE(std::filesystem::exists(dir / "h.json"));
}
