#include <gtest/gtest.h>

#include <cmath>

#include "panoscan/diff_ops.hpp"
#include "panoscan/errors.hpp"
#include "panoscan/renderer.hpp"
#include "test_util.hpp"

using namespace panoscan;

namespace {

// Smooth periodic test pattern; channels differ so they cannot be mixed up silently.
ErpFrame smooth_frame(int h, int w, double phase = 0.0) {
  ErpFrame f(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double x = kTwoPi * c / w, y = kPi * r / h;
      f.at(r, c, 0) = 0.5 + 0.4 * std::sin(2.0 * x + phase) * std::sin(y);
      f.at(r, c, 1) = 0.5 + 0.3 * std::cos(3.0 * x) * std::cos(2.0 * y);
      f.at(r, c, 2) = 0.5 + 0.2 * std::sin(x + 3.0 * y + phase);
    }
  }
  return f;
}

ErpFrame random_frame(RngStream& rng, int h, int w) {
  ErpFrame f(h, w);
  for (Eigen::Index i = 0; i < f.rgb.size(); ++i) f.rgb(i) = rng.uniform();
  return f;
}

}  // namespace

TEST(Renderer, CenterPixelLooksAtCenter) {
  RngStream rng(61, 0);
  const ViewportSpec spec{5, 5, kPi / 3.0};
  for (int i = 0; i < 200; ++i) {
    const Viewpoint c = test::random_viewpoint(rng);
    const FlowField f = flow_field(c, spec, 64, 128);
    const ErpCoord e = euler_to_erp_pixel(c.normalized(), 64, 128);
    ASSERT_NEAR(f.m(2, 2), e.m, 1e-9);
    ASSERT_NEAR(f.n(2, 2), e.n, 1e-9);
  }
}

TEST(Renderer, FlowIsPointSymmetricAtEquator) {
  const ViewportSpec spec{16, 12, kPi / 2.0};
  const FlowField f = flow_field({0.0, 0.0}, spec, 64, 128);
  const ErpCoord c = euler_to_erp_pixel({0.0, 0.0}, 64, 128);
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 16; ++j) {
      ASSERT_NEAR(f.m(i, j) - c.m, -(f.m(11 - i, 15 - j) - c.m), 1e-9);
      ASSERT_NEAR(f.n(i, j) - c.n, -(f.n(11 - i, 15 - j) - c.n), 1e-9);
    }
  }
  // Image rows go down and columns go right.
  EXPECT_GT(f.m(11, 8), f.m(0, 8));
  EXPECT_GT(f.n(6, 15), f.n(6, 0));
}

TEST(Renderer, ConstantFrameGivesConstantViewport) {
  RngStream rng(62, 0);
  const ErpFrame frame = Image::constant(32, 64, 0.25, 0.5, 0.75);
  for (int i = 0; i < 20; ++i) {
    const Image v = render_viewport(frame, test::random_viewpoint(rng, 1.57), {9, 7, 1.4});
    for (Eigen::Index p = 0; p < v.rgb.rows(); ++p) {
      ASSERT_NEAR(v.rgb(p, 0), 0.25, 1e-15);
      ASSERT_NEAR(v.rgb(p, 1), 0.5, 1e-15);
      ASSERT_NEAR(v.rgb(p, 2), 0.75, 1e-15);
    }
  }
}

TEST(Renderer, BilinearReproducesLatticeAndLinearFields) {
  // A field linear in (m, n) is reproduced exactly away from the seam and the poles.
  const int h = 64, w = 128;
  ErpFrame frame(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      frame.at(r, c, 0) = 0.01 * r;
      frame.at(r, c, 1) = 0.005 * c;
      frame.at(r, c, 2) = 0.003 * r + 0.002 * c;
    }
  const FlowField f = flow_field({0.2, 0.4}, {12, 10, 1.0}, h, w);
  const Image v = bilinear_sample(frame, f);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 12; ++j) {
      const double m = f.m(i, j), n = f.n(i, j);
      ASSERT_NEAR(v.at(i, j, 0), 0.01 * m, 1e-12);
      ASSERT_NEAR(v.at(i, j, 1), 0.005 * n, 1e-12);
      ASSERT_NEAR(v.at(i, j, 2), 0.003 * m + 0.002 * n, 1e-12);
    }
}

TEST(Renderer, SamplesExactPixelsAndMidpoints) {
  RngStream rng(63, 0);
  const ErpFrame frame = random_frame(rng, 16, 32);
  FlowField f;
  f.erp_height = 16;
  f.erp_width = 32;
  f.m.resize(1, 3);
  f.n.resize(1, 3);
  f.m << 5.0, 5.5, 7.0;
  f.n << 9.0, 9.0, 31.5;  // last one straddles the seam
  const Image v = bilinear_sample(frame, f);
  for (int ch = 0; ch < 3; ++ch) {
    EXPECT_NEAR(v.at(0, 0, ch), frame.at(5, 9, ch), 1e-15);
    EXPECT_NEAR(v.at(0, 1, ch), 0.5 * (frame.at(5, 9, ch) + frame.at(6, 9, ch)), 1e-15);
    EXPECT_NEAR(v.at(0, 2, ch), 0.5 * (frame.at(7, 31, ch) + frame.at(7, 0, ch)), 1e-15);
  }
}

TEST(Renderer, OutputStaysWithinFrameRange) {
  RngStream rng(64, 0);
  const ErpFrame frame = random_frame(rng, 32, 64);
  const double lo = frame.rgb.minCoeff(), hi = frame.rgb.maxCoeff();
  for (int i = 0; i < 50; ++i) {
    const Image v = render_viewport(frame, test::random_viewpoint(rng, 1.57), {8, 8, 1.2});
    ASSERT_GE(v.rgb.minCoeff(), lo - 1e-15);
    ASSERT_LE(v.rgb.maxCoeff(), hi + 1e-15);
  }
}

TEST(Renderer, LongitudeIsPeriodic) {
  RngStream rng(65, 0);
  const ErpFrame frame = smooth_frame(32, 64);
  for (int i = 0; i < 20; ++i) {
    const Viewpoint c = test::random_viewpoint(rng);
    const Image a = render_viewport(frame, c, {8, 8, 1.0});
    const Image b = render_viewport(frame, {c.phi, c.theta + kTwoPi}, {8, 8, 1.0});
    ASSERT_LT((a.rgb - b.rgb).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Renderer, SequenceIndices) {
  EXPECT_EQ(sequence_indices(35, 7), (std::vector<int>{0, 5, 11, 17, 22, 28, 34}));
  EXPECT_EQ(sequence_indices(75, 7), (std::vector<int>{0, 12, 24, 37, 49, 61, 74}));
  EXPECT_EQ(sequence_indices(10, 1), (std::vector<int>{0}));
  EXPECT_EQ(sequence_indices(3, 7), (std::vector<int>{0, 0, 0, 1, 1, 1, 2}));
  for (int p = 1; p < 60; ++p) {
    const auto idx = sequence_indices(p, 7);
    ASSERT_EQ(idx.front(), 0);
    ASSERT_EQ(idx.back(), p - 1);
    ASSERT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  }
}

TEST(Renderer, NearestFrame) {
  Video v;
  v.frames.assign(10, Image::constant(2, 4, 0, 0, 0));
  v.fps = 2.0;
  EXPECT_EQ(nearest_frame(0.0, v), 0);
  EXPECT_EQ(nearest_frame(1.2, v), 2);
  EXPECT_EQ(nearest_frame(1.3, v), 3);
  EXPECT_EQ(nearest_frame(100.0, v), 9);
  v.fps = 0.0;
  EXPECT_EQ(nearest_frame(3.0, v), 0);
  EXPECT_THROW(nearest_frame(0.0, Video{}), EmptyVideo);
}

TEST(Renderer, SequenceOfStillImage) {
  Video still;
  still.frames.push_back(smooth_frame(32, 64));
  Scanpath path;
  for (int i = 0; i < 35; ++i) path.points.push_back({0.01 * i, -0.02 * i});
  const ViewportSequence seq = render_sequence(still, path, 7, {8, 8, 1.0});
  ASSERT_EQ(seq.frames.size(), 7u);
  EXPECT_EQ(seq.path_indices, (std::vector<int>{0, 5, 11, 17, 22, 28, 34}));
  for (int k = 0; k < 7; ++k) {
    EXPECT_EQ(seq.frame_indices[k], 0);
    EXPECT_DOUBLE_EQ(seq.source_times[k], seq.path_indices[k] / 5.0);
    EXPECT_EQ(seq.frames[k].rgb, render_viewport(still.frames[0], path.points[seq.path_indices[k]], {8, 8, 1.0}).rgb);
  }
  EXPECT_THROW(render_sequence(still, Scanpath{}, 7, {8, 8, 1.0}), EmptyPath);
  EXPECT_THROW(render_sequence(Video{}, path, 7, {8, 8, 1.0}), EmptyVideo);
}

TEST(Renderer, SequencePicksFramesByTime) {
  Video video;
  for (int i = 0; i < 8; ++i) video.frames.push_back(smooth_frame(16, 32, 0.3 * i));
  video.fps = 1.0;
  Scanpath path;
  path.points.assign(35, Viewpoint{0.1, 0.2});
  const ViewportSequence seq = render_sequence(video, path, 7, {4, 4, 1.0});
  // Path indices 0,5,11,17,22,28,34 at 5 Hz are 0,1,2.2,3.4,4.4,5.6,6.8 s.
  EXPECT_EQ(seq.frame_indices, (std::vector<int>{0, 1, 2, 3, 4, 6, 7}));
}

TEST(Renderer, TapeRenderMatchesPlainAndGradient) {
  const ErpFrame frame = smooth_frame(64, 128);
  const ViewportSpec spec{8, 8, 1.0};
  RngStream rng(66, 0);
  Eigen::MatrixXd probe(64, 3);
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe(i) = rng.normal();
  auto value = [&](const Viewpoint& c) { return (render_viewport(frame, c, spec).rgb.array() * probe.array()).sum(); };
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Viewpoint c = test::random_viewpoint(rng, 1.2);
    ad::Tape tape;
    const ad::Var center = tape.variable(ad::row2(c.phi, c.theta));
    const ad::Var img = ad::render_viewport(center, frame, spec);
    ASSERT_EQ(img.value(), render_viewport(frame, c, spec).rgb);
    tape.backward(ad::sum(ad::hadamard(img, tape.constant(probe))));
    const Eigen::MatrixXd g = tape.grad(center);
    const double h = 1e-6;
    const double fd_phi = (value({c.phi + h, c.theta}) - value({c.phi - h, c.theta})) / (2 * h);
    const double fd_theta = (value({c.phi, c.theta + h}) - value({c.phi, c.theta - h})) / (2 * h);
    worst = std::max({worst, test::rel_err(g(0, 0), fd_phi), test::rel_err(g(0, 1), fd_theta)});
  }
  EXPECT_LT(worst, 2e-3);
}

TEST(Renderer, TapeSequenceMatchesPlain) {
  Video video;
  for (int i = 0; i < 3; ++i) video.frames.push_back(smooth_frame(32, 64, i));
  video.fps = 0.5;
  Scanpath path;
  for (int i = 0; i < 12; ++i) path.points.push_back({0.02 * i, 0.05 * i});
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& vp : path.points) vars.push_back(tape.constant(ad::row2(vp.phi, vp.theta)));
  const auto frames = ad::render_sequence(vars, video, 4, {6, 6, 1.0});
  const ViewportSequence seq = render_sequence(video, path, 4, {6, 6, 1.0});
  ASSERT_EQ(frames.size(), 4u);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(frames[k].value(), seq.frames[k].rgb);
}
