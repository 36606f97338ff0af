#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "panoscan/sampling.hpp"
#include "test_util.hpp"

using namespace panoscan;

TEST(SelectComponent, EqualWeightsZeroNoise) {
  const std::vector<double> w{0.25, 0.25, 0.25, 0.25};
  const std::vector<double> g(4, 0.0);
  for (double tau : {0.1, 1.0, 10.0}) {
    const ComponentSelection s = select_component(w, g, tau);
    EXPECT_EQ(s.index, 0);
    EXPECT_EQ(s.forward, (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
    for (double p : s.surrogate) EXPECT_NEAR(p, 0.25, 1e-15);
  }
}

TEST(SelectComponent, DominantWeight) {
  const std::vector<double> w{1.0 - 2e-4, 1e-4, 1e-4};
  EXPECT_EQ(select_component(w, std::vector<double>(3, 0.0), 1.0).index, 0);
}

TEST(SelectComponent, ForwardIsExactlyOneHot) {
  RngStream rng(21, 0);
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> w(3), g(3);
    double t = 0.0;
    for (double& x : w) t += (x = rng.uniform());
    for (double& x : w) x /= t;
    for (double& x : g) x = rng.gumbel();
    const ComponentSelection s = select_component(w, g, 0.5);
    ASSERT_EQ(std::count(s.forward.begin(), s.forward.end(), 1.0), 1);
    ASSERT_EQ(std::count(s.forward.begin(), s.forward.end(), 0.0), 2);
    ASSERT_EQ(s.forward[s.index], 1.0);
    ASSERT_NEAR(std::accumulate(s.surrogate.begin(), s.surrogate.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(SelectComponent, LowTemperatureConverges) {
  RngStream rng(22, 0);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> w{0.5, 0.3, 0.2}, g(3);
    for (double& x : g) x = rng.gumbel();
    const ComponentSelection s = select_component(w, g, 1e-4);
    std::vector<double> logits(3);
    for (int k = 0; k < 3; ++k) logits[k] = std::log(w[k]) + g[k];
    std::sort(logits.begin(), logits.end());
    if (logits[2] - logits[1] < 1e-2) continue;  // near-tie: convergence needs a smaller tau
    for (int k = 0; k < 3; ++k) ASSERT_NEAR(s.surrogate[k], s.forward[k], 1e-6);
  }
}

TEST(SelectComponent, GumbelMaxFrequencies) {
  RngStream rng(23, 0);
  const std::vector<double> w{0.5, 0.3, 0.2};
  std::vector<int> count(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const std::vector<double> g{rng.gumbel(), rng.gumbel(), rng.gumbel()};
    ++count[select_component(w, g, 1.0).index];
  }
  for (int k = 0; k < 3; ++k) {
    const double se = std::sqrt(w[k] * (1.0 - w[k]) / n);
    EXPECT_LT(std::abs(count[k] / static_cast<double>(n) - w[k]), 3.0 * se);
  }
}

TEST(SelectComponent, SurrogateJacobianMatchesFiniteDifferences) {
  RngStream rng(24, 0);
  const double tau = 0.7, h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> logw(4), g(4);
    for (double& x : logw) x = rng.normal();
    for (double& x : g) x = rng.gumbel();
    auto surrogate = [&](const std::vector<double>& lw) {
      std::vector<double> w(lw.size());
      for (std::size_t k = 0; k < lw.size(); ++k) w[k] = std::exp(lw[k]);
      return select_component(w, g, tau).surrogate;  // softmax is invariant to the weight sum
    };
    const auto base = surrogate(logw);
    const Eigen::MatrixXd jac = surrogate_jacobian(base, tau);
    for (int j = 0; j < 4; ++j) {
      auto up = logw, dn = logw;
      up[j] += h;
      dn[j] -= h;
      const auto su = surrogate(up), sd = surrogate(dn);
      for (int i = 0; i < 4; ++i) {
        ASSERT_LT(test::rel_err(jac(i, j), (su[i] - sd[i]) / (2.0 * h), 1e-3), 1e-4);
      }
    }
  }
}

TEST(ReparamSample, Oracles) {
  GmmParams g{{0.5, 0.5}, {{1.0, 2.0}, {-3.0, 4.0}}, {{0.5, 0.5}, {1e-3, 1e-3}}};
  const UVPoint zero = reparam_sample(g, 1, Vec2::Zero());
  EXPECT_EQ(zero.u, -3.0);
  EXPECT_EQ(zero.v, 4.0);
  const UVPoint p = reparam_sample(g, 0, Vec2(2.0, -2.0));
  EXPECT_DOUBLE_EQ(p.u, 2.0);
  EXPECT_DOUBLE_EQ(p.v, 1.0);
  const UVPoint f = reparam_sample(g, 1, Vec2(3.0, -1.0));
  EXPECT_NEAR(f.u, -3.0, 3e-3 + 1e-15);
  EXPECT_NEAR(f.v, 4.0, 1e-3 + 1e-15);
}

TEST(ReparamSample, MomentsMatch) {
  RngStream rng(25, 0);
  GmmParams g{{1.0}, {{1.5, -0.5}}, {{2.0, 0.5}}};
  const int n = 100000;
  double su = 0, sv = 0, su2 = 0, sv2 = 0;
  for (int i = 0; i < n; ++i) {
    const UVPoint p = reparam_sample(g, 0, Vec2(rng.normal(), rng.normal()));
    su += p.u;
    sv += p.v;
    su2 += p.u * p.u;
    sv2 += p.v * p.v;
  }
  const double mu = su / n, mv = sv / n;
  EXPECT_LT(std::abs(mu - 1.5), 3.0 * 2.0 / std::sqrt(n));
  EXPECT_LT(std::abs(mv + 0.5), 3.0 * 0.5 / std::sqrt(n));
  EXPECT_NEAR((su2 / n - mu * mu) / 4.0, 1.0, 0.05);
  EXPECT_NEAR((sv2 / n - mv * mv) / 0.25, 1.0, 0.05);
}

TEST(PidAdvance, Oracles) {
  PidGains gains;
  PidState s;
  s.position = Vec2(0.3, -0.2);
  EXPECT_EQ(pid_advance(s, gains).position, s.position);

  s.velocity = Vec2(1.0, 0.0);
  s.acceleration = Vec2(0.0, 2.0);
  const PidState a = pid_advance(s, gains);
  EXPECT_EQ(a.position, Vec2(1.3, 0.8));
  EXPECT_EQ(a.velocity, Vec2(1.0, 2.0));
  EXPECT_EQ(a.acceleration, s.acceleration);
}

TEST(PidAdvance, HalfStepsMatchFullStep) {
  PidState s;
  s.velocity = Vec2(0.75, -1.25);
  s.acceleration = Vec2(0.5, 1.5);
  PidGains full, half;
  half.dt = 0.5;
  const PidState one = pid_advance(s, full);
  const PidState two = pid_advance(pid_advance(s, half), half);
  EXPECT_EQ(one.position, two.position);
  EXPECT_EQ(one.velocity, two.velocity);
}

TEST(PidAdvance, ExactlyReversible) {
  RngStream rng(26, 0);
  PidGains gains;
  for (int i = 0; i < 1000; ++i) {
    PidState s;
    s.position = Vec2(rng.normal(), rng.normal());
    s.velocity = Vec2(rng.normal(), rng.normal());
    s.acceleration = Vec2(rng.normal(), rng.normal());
    const PidState back = pid_retreat(pid_advance(s, gains), gains);
    ASSERT_LT((back.position - s.position).norm(), 1e-14);
    ASSERT_LT((back.velocity - s.velocity).norm(), 1e-14);
  }
}

TEST(PidCorrect, Oracles) {
  PidGains gains;
  PidState s;
  for (int i = 0; i < 10; ++i) {
    s = pid_advance(pid_correct(s, {0.0, 0.0}, gains), gains);
    ASSERT_EQ(s.acceleration, Vec2::Zero());
  }
  PidGains p{1.0, 0.0, 0.0, 1.0};
  const PidState a = pid_correct(PidState{}, {0.5, 0.0}, p);
  EXPECT_EQ(a.acceleration, Vec2(0.5, 0.0));
  EXPECT_EQ(a.error_integral, Vec2(0.5, 0.0));
  EXPECT_EQ(a.prev_error, Vec2(0.5, 0.0));
}

TEST(PidCorrect, StepReferenceSettlesWithDefaultGains) {
  PidGains gains;
  PidState s;
  double err = 1.0;
  for (int i = 0; i < 100; ++i) {
    s = pid_advance(pid_correct(s, {1.0, 0.0}, gains), gains);
    err = (Vec2(1.0, 0.0) - s.position).norm();
  }
  EXPECT_LT(err, 0.05);
  EXPECT_TRUE(s.finite());
}

TEST(PidCorrect, IntegralIsRunningSum) {
  RngStream rng(27, 0);
  PidGains gains;
  PidState s;
  Vec2 sum = Vec2::Zero();
  for (int i = 0; i < 50; ++i) {
    const UVPoint ref{rng.normal(), rng.normal()};
    sum += Vec2(ref.u, ref.v) - s.position;
    s = pid_advance(pid_correct(s, ref, gains), gains);
    ASSERT_LT((s.error_integral - sum).norm(), 1e-12);
  }
}

TEST(SampleNextViewpoint, ZeroGainsHoldPosition) {
  RngStream rng(28, 0);
  GmmParams g{{0.5, 0.5}, {{30.0, 1.0}, {-10.0, 5.0}}, {{2.0, 2.0}, {1.0, 1.0}}};
  PidState s;
  s.position = Vec2(1.5, -2.5);
  const PidGains zero{0.0, 0.0, 0.0, 1.0};
  for (int i = 0; i < 20; ++i) {
    const SampledStep step = sample_next_viewpoint(g, s, zero, rng);
    ASSERT_EQ(step.emitted.u, 1.5);
    ASSERT_EQ(step.emitted.v, -2.5);
    s = step.state;
  }
}

TEST(SampleNextViewpoint, DeterministicPerSeed) {
  GmmParams g{{0.6, 0.4}, {{3.0, 0.5}, {-2.5, -0.5}}, {{1.0, 0.8}, {1.2, 1.0}}};
  auto run = [&] {
    RngStream rng(29, 4);
    PidState s;
    std::vector<double> out;
    for (int i = 0; i < 50; ++i) {
      const SampledStep step = sample_next_viewpoint(g, s, PidGains{}, rng);
      out.push_back(step.emitted.u);
      out.push_back(step.emitted.v);
      s = step.state;
    }
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(SampleNextViewpoint, ConvergesTowardNarrowMean) {
  // PD control (pure P is unstable for the discretized double integrator).
  RngStream rng(30, 0);
  GmmParams g{{1.0}, {{5.0, -3.0}}, {{kSigmaFloor, kSigmaFloor}}};
  const PidGains pd{0.1, 0.0, 0.6, 1.0};
  PidState s;
  for (int i = 0; i < 200; ++i) s = sample_next_viewpoint(g, s, pd, rng).state;
  EXPECT_LT((s.position - Vec2(5.0, -3.0)).norm(), 1e-2);
}

TEST(DrawSampleNoise, ConsumesKGumbelsThenTwoNormals) {
  RngStream a(31, 0), b(31, 0);
  const SampleDraw d = draw_sample_noise(3, a);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(d.gumbel[k], b.gumbel());
  EXPECT_EQ(d.noise.x(), b.normal());
  EXPECT_EQ(d.noise.y(), b.normal());
}

TEST(RngStream, StreamsAreIndependentOfOrder) {
  RngStream a(5, 1), b(5, 2);
  std::vector<double> first;
  for (int i = 0; i < 10; ++i) first.push_back(a.uniform());
  RngStream b2(5, 2), a2(5, 1);
  for (int i = 0; i < 10; ++i) b2.uniform();
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a2.uniform(), first[i]);
  EXPECT_NE(RngStream(5, 1).next_u64(), RngStream(5, 2).next_u64());
  for (int i = 0; i < 100000; ++i) {
    const double u = b.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}
