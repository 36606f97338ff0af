#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "panoscan/density_net.hpp"
#include "panoscan/errors.hpp"
#include "panoscan/tensor_file.hpp"
#include "test_util.hpp"

using namespace panoscan;

namespace {

std::vector<Viewpoint> wander(RngStream& rng, int n, double step = 0.05) {
  std::vector<Viewpoint> path{test::random_viewpoint(rng, 1.0)};
  while (static_cast<int>(path.size()) < n) path.push_back(test::nearby_viewpoint(rng, path.back(), step));
  return path;
}

TrainingExample random_example(RngStream& rng, const NetHyper& h) {
  const auto path = wander(rng, h.history);
  const auto rel = relative_scanpath_set(path, ViewportSpec{});
  std::vector<UVPoint> causal;
  const int valid = static_cast<int>(rng.next_u64() % (h.horizon + 1));
  for (int i = 0; i < valid; ++i) causal.push_back({8.0 * rng.normal(), 8.0 * rng.normal()});
  TrainingExample ex;
  ex.history = encode_history(rel, h);
  ex.causal = encode_causal(CausalContext::from_points(causal, h.horizon), h);
  ex.target = {2.0 * rng.normal(), 2.0 * rng.normal()};  // within reach of the initial 1 px sigmas
  return ex;
}

std::vector<TrainingExample> random_batch(std::uint64_t seed, int n, const NetHyper& h) {
  RngStream rng(seed, 7);
  std::vector<TrainingExample> out;
  for (int i = 0; i < n; ++i) out.push_back(random_example(rng, h));
  return out;
}

}  // namespace

TEST(DensityNet, InitIsDeterministicPerSeed) {
  const NetHyper h;
  const GeneratorParams a = init_params(3, h), b = init_params(3, h), c = init_params(4, h);
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    EXPECT_EQ(a.tensors[i].first, b.tensors[i].first);
    EXPECT_EQ(a.tensors[i].second, b.tensors[i].second);
    any_diff |= a.tensors[i].second != c.tensors[i].second;
  }
  EXPECT_TRUE(any_diff);
  EXPECT_NO_THROW(a.validate());
}

TEST(DensityNet, LayoutMatchesParameters) {
  const NetHyper h;
  const auto layout = parameter_layout(h);
  const GeneratorParams p = init_params(1, h);
  std::size_t count = 0;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    EXPECT_EQ(p.tensors[i].first, layout[i].first);
    count += static_cast<std::size_t>(layout[i].second.first) * layout[i].second.second;
  }
  EXPECT_EQ(p.parameter_count(), count);
}

TEST(DensityNet, InitialMixtureIsNearUniformWithUnitSigmas) {
  const NetHyper h;
  const GeneratorParams p = init_params(5, h);
  RngStream rng(51, 0);
  for (int i = 0; i < 50; ++i) {
    const auto path = wander(rng, h.history);
    const GmmParams g = forward(p, relative_scanpath_set(path, {}), CausalContext::empty(h.horizon));
    ASSERT_EQ(g.components(), h.components);
    ASSERT_NEAR(std::accumulate(g.weights.begin(), g.weights.end(), 0.0), 1.0, 1e-12);
    for (int k = 0; k < h.components; ++k) {
      ASSERT_NEAR(g.weights[k], 1.0 / h.components, 0.05);
      ASSERT_GE(g.sigmas[k].u, 0.5);
      ASSERT_LE(g.sigmas[k].u, 2.0);
      ASSERT_GE(g.sigmas[k].v, 0.5);
      ASSERT_LE(g.sigmas[k].v, 2.0);
    }
  }
}

TEST(DensityNet, OutputsRespectFloors) {
  NetHyper h;
  GeneratorParams p = init_params(6, h);
  p.at("head_weight.b")(0, 0) = 1e3;
  p.at("head_sigma.b").setConstant(-1e3);
  RngStream rng(52, 0);
  const GmmParams g = forward(p, relative_scanpath_set(wander(rng, h.history), {}), CausalContext::empty(h.horizon));
  EXPECT_NO_THROW(g.validate());
  for (int k = 0; k < h.components; ++k) {
    EXPECT_GE(g.weights[k], kWeightFloor);
    EXPECT_GE(g.sigmas[k].u, kSigmaFloor);
  }
}

TEST(DensityNet, MaskedSlotValuesAreIgnored) {
  const NetHyper h;
  const GeneratorParams p = init_params(7, h);
  RngStream rng(53, 0);
  const auto rel = relative_scanpath_set(wander(rng, h.history), {});
  const UVPoint pts[] = {{3.0, -2.0}, {5.0, 1.0}};
  CausalContext clean = CausalContext::from_points(pts, h.horizon);
  // Garbage in masked slots must not matter to the network input.
  ad::Tape tape;
  const NetVars vars = bind_params(tape, p, false);
  ad::Matrix dirty = encode_causal(clean, h);
  for (int i = 2; i < h.horizon; ++i) {
    dirty(0, 3 * i) = 100.0 * rng.normal();
    dirty(0, 3 * i + 1) = 100.0 * rng.normal();
  }
  const auto hist = tape.constant(encode_history(rel, h));
  const GmmVars a = forward(vars, h, hist, tape.constant(encode_causal(clean, h)));
  const GmmVars b = forward(vars, h, hist, tape.constant(dirty));
  EXPECT_EQ(a.weights.value(), b.weights.value());
  EXPECT_EQ(a.means.value(), b.means.value());
  EXPECT_EQ(a.sigmas.value(), b.sigmas.value());

  CausalContext bad = clean;
  bad.slots[3].valid = true;
  EXPECT_THROW(bad.validate(), ShapeError);
  EXPECT_THROW(CausalContext::from_points(std::vector<UVPoint>(h.horizon + 1), h.horizon), ShapeError);
}

TEST(DensityNet, CausalContextChangesPrediction) {
  const NetHyper h;
  const GeneratorParams p = init_params(8, h);
  RngStream rng(54, 0);
  const auto rel = relative_scanpath_set(wander(rng, h.history), {});
  const UVPoint pts[] = {{20.0, -10.0}};
  const GmmParams a = forward(p, rel, CausalContext::empty(h.horizon));
  const GmmParams b = forward(p, rel, CausalContext::from_points(pts, h.horizon));
  EXPECT_NE(a.means[0].u, b.means[0].u);
}

TEST(DensityNet, GradientMatchesFiniteDifferences) {
  NetHyper h;
  h.hnet_width = 8;
  h.cnet_width = 6;
  const GeneratorParams p = init_params(9, h);
  const auto batch = random_batch(9, 4, h);
  const LossAndGrad lg = grad_code_length(p, batch);
  EXPECT_DOUBLE_EQ(lg.loss_bits, batch_code_length(p, batch));
  const double step = 1e-5;
  double worst = 0.0;
  for (std::size_t t = 0; t < p.tensors.size(); ++t) {
    const auto& m = p.tensors[t].second;
    for (Eigen::Index i = 0; i < m.size(); i += std::max<Eigen::Index>(1, m.size() / 7)) {
      GeneratorParams up = p, dn = p;
      up.tensors[t].second(i) += step;
      dn.tensors[t].second(i) -= step;
      const double fd = (batch_code_length(up, batch) - batch_code_length(dn, batch)) / (2.0 * step);
      worst = std::max(worst, test::rel_err(lg.grads.tensors[t].second(i), fd));
    }
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(DensityNet, DuplicatedBatchHasSameLossAndGradient) {
  NetHyper h;
  h.hnet_width = 8;
  h.cnet_width = 6;
  const GeneratorParams p = init_params(10, h);
  auto batch = random_batch(10, 5, h);
  const LossAndGrad once = grad_code_length(p, batch);
  auto twice = batch;
  twice.insert(twice.end(), batch.begin(), batch.end());
  const LossAndGrad dup = grad_code_length(p, twice);
  EXPECT_NEAR(once.loss_bits, dup.loss_bits, 1e-12);
  for (std::size_t t = 0; t < p.tensors.size(); ++t) {
    EXPECT_LT((once.grads.tensors[t].second - dup.grads.tensors[t].second).norm(), 1e-10);
  }
}

TEST(DensityNet, GradientDescentReducesLoss) {
  NetHyper h;
  h.hnet_width = 16;
  h.cnet_width = 8;
  GeneratorParams p = init_params(11, h);
  const auto batch = random_batch(11, 32, h);
  const double start = batch_code_length(p, batch);
  for (int step = 0; step < 50; ++step) {
    const LossAndGrad lg = grad_code_length(p, batch);
    for (std::size_t t = 0; t < p.tensors.size(); ++t) p.tensors[t].second -= 0.003 * lg.grads.tensors[t].second;
  }
  EXPECT_LT(batch_code_length(p, batch), start - 0.5);
}

TEST(DensityNet, FewDeadGradients) {
  // Rows of first-layer weights fed by an input that is zero across the batch
  // (the reference point of each relative path, unused causal slots) are
  // structurally zero and not counted.
  const NetHyper h;
  const GeneratorParams p = init_params(12, h);
  const auto batch = random_batch(12, 16, h);
  const LossAndGrad lg = grad_code_length(p, batch);
  auto live_inputs = [&](bool history) {
    std::vector<bool> live(history ? h.history_inputs() : h.causal_inputs(), false);
    for (const auto& ex : batch) {
      const auto& row = history ? ex.history : ex.causal;
      for (std::size_t c = 0; c < live.size(); ++c) live[c] = live[c] || row(0, c) != 0.0;
    }
    return live;
  };
  const auto hist_live = live_inputs(true), causal_live = live_inputs(false);
  std::size_t zero = 0, total = 0;
  for (const auto& [name, g] : lg.grads.tensors) {
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      if (name == "hnet.w1" && !hist_live[r]) continue;
      if (name == "cnet.w1" && !causal_live[r]) continue;
      zero += (g.row(r).array() == 0.0).count();
      total += g.cols();
    }
  }
  EXPECT_LT(static_cast<double>(zero) / total, 0.01);
}

TEST(DensityNet, CheckpointRoundTrip) {
  const auto dir = test::scratch_dir("density_ckpt");
  NetHyper h;
  h.components = 4;
  const GeneratorParams p = init_params(13, h);
  save_checkpoint(p, dir / "g.pscn");
  const GeneratorParams q = load_checkpoint(dir / "g.pscn");
  EXPECT_EQ(q.hyper, p.hyper);
  ASSERT_EQ(q.tensors.size(), p.tensors.size());
  for (std::size_t i = 0; i < p.tensors.size(); ++i) EXPECT_EQ(q.tensors[i].second, p.tensors[i].second);
}

TEST(DensityNet, CheckpointCorruptionIsDetected) {
  const auto dir = test::scratch_dir("density_corrupt");
  save_checkpoint(init_params(14, NetHyper{}), dir / "g.pscn");
  std::string bytes;
  {
    std::ifstream in(dir / "g.pscn", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream(dir / name, std::ios::binary) << data;
    return dir / name;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write("magic.pscn", bad_magic)), MagicError);
  EXPECT_THROW(load_checkpoint(write("short.pscn", bytes.substr(0, bytes.size() - 100))), TruncationError);
  std::string flipped = bytes;
  flipped[flipped.size() - 50] ^= 0x10;
  EXPECT_THROW(load_checkpoint(write("crc.pscn", flipped)), ChecksumError);
  EXPECT_THROW(read_tensor_file(dir / "g.pscn", kAssessorMagic), MagicError);
  EXPECT_THROW(load_checkpoint(dir / "missing.pscn"), IoError);
}

TEST(DensityNet, ForwardRejectsWrongShapes) {
  const NetHyper h;
  const GeneratorParams p = init_params(15, h);
  RngStream rng(55, 0);
  const auto rel = relative_scanpath_set(wander(rng, h.history + 1), {});
  EXPECT_THROW(forward(p, rel, CausalContext::empty(h.horizon)), ShapeError);
  EXPECT_THROW(NetHyper{.history = 0}.validate(), ConfigError);
}
