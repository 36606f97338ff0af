#include <benchmark/benchmark.h>

#include <cmath>

#include "panoscan/density_net.hpp"
#include "panoscan/generator.hpp"
#include "panoscan/geometry.hpp"
#include "panoscan/gmm.hpp"
#include "panoscan/renderer.hpp"
#include "panoscan/synthetic.hpp"
#include "panoscan/training.hpp"

using namespace panoscan;

static void BM_ProjectRoundTrip(benchmark::State& state) {
  const ViewportSpec spec;
  const Viewpoint c{0.3, -1.2};
  double u = -100.0;
  for (auto _ : state) {
    const Viewpoint p = viewport_to_sphere({u, 0.5 * u}, c, spec);
    benchmark::DoNotOptimize(sphere_to_viewport(p, c, spec));
    u = u > 100.0 ? -100.0 : u + 0.37;
  }
}
BENCHMARK(BM_ProjectRoundTrip);

static void BM_GmmMass(benchmark::State& state) {
  const GmmParams g = SyntheticScanpathModel::standard().step;
  const QuantizerSpec q{0.2};
  double u = -5.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gmm_mass(g, {u, 0.3}, q));
    u = u > 5.0 ? -5.0 : u + 0.2;
  }
}
BENCHMARK(BM_GmmMass);

static void BM_CodeLengthGrad(benchmark::State& state) {
  const NetHyper hyper;
  const auto model = SyntheticScanpathModel::standard();
  const auto examples = build_examples(synth_scanpaths(model, 4, 75, 1), hyper, model.spec);
  const std::span<const TrainingExample> batch(examples.data(), static_cast<std::size_t>(state.range(0)));
  const GeneratorParams p = init_params(2, hyper);
  for (auto _ : state) benchmark::DoNotOptimize(grad_code_length(p, batch).loss_bits);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CodeLengthGrad)->Arg(1)->Arg(32);

static void BM_RenderViewport(benchmark::State& state) {
  ErpFrame frame(256, 512);
  for (int r = 0; r < 256; ++r)
    for (int c = 0; c < 512; ++c)
      for (int ch = 0; ch < 3; ++ch) frame.at(r, c, ch) = 0.5 + 0.5 * std::sin(0.05 * c + 0.07 * r + ch);
  const int side = static_cast<int>(state.range(0));
  const ViewportSpec spec{side, side, kPi / 2.0};
  for (auto _ : state) benchmark::DoNotOptimize(render_viewport(frame, {0.2, 2.9}, spec).rgb.data());
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_RenderViewport)->Arg(32)->Arg(224);

static void BM_GenerateBatch(benchmark::State& state) {
  const GeneratorParams p = init_params(3, NetHyper{});
  GenerationConfig cfg;
  cfg.n_paths = static_cast<int>(state.range(0));
  cfg.duration_s = 15.0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_batch(p, cfg).clamp_count);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenerateBatch)->Arg(1)->Arg(20)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
