#pragma once

// Autoregressive scanpath generation. A generation unit (SGU) predicts one
// viewpoint; W chained units form a block (SGB); M blocks extend an initial
// path of H viewpoints to M*W + H viewpoints.
//
// Every unit works in the viewport frame centered at the last historical
// viewpoint of its block. The PID proxy viewer runs in that frame; at a block
// boundary the new center is the last emitted viewpoint, so the position is
// re-expressed as the origin while velocity, acceleration and the error
// terms carry over.
//
// The rollout is recorded on a tape so stage-3 training can backpropagate
// through it. The plain API runs the same code with constant parameters.

#include <cstdint>
#include <span>
#include <vector>

#include "panoscan/density_net.hpp"
#include "panoscan/geometry.hpp"
#include "panoscan/rng.hpp"
#include "panoscan/sampling.hpp"
#include "panoscan/tape.hpp"

namespace panoscan {

inline constexpr double kScanpathRateHz = 5.0;

struct Scanpath {
  std::vector<Viewpoint> points;
  double rate_hz = kScanpathRateHz;
};

struct GenerationOptions {
  ViewportSpec spec;  // defines the uv frame the network works in
  PidGains gains;
  double tau = 1.0;

  void validate() const;
};

struct GenerationConfig {
  Viewpoint start;
  double duration_s = 7.0;
  int n_paths = 20;
  double init_jitter_rad = 0.0;
  std::uint64_t seed = 0;
  GenerationOptions options;

  void validate() const;
};

/// M = ceil((rate * S - H) / W), at least 0.
int blocks_for_duration(double duration_s, int history, int horizon, double rate_hz = kScanpathRateHz);

/// Path i replicates `start` H times, each copy displaced by isotropic
/// Gaussian tangent jitter drawn from stream (seed, i).
std::vector<std::vector<Viewpoint>> make_initial_paths(const GenerationConfig& cfg, int history);

/// Random stream of path `path` in a batch, positioned after the draws spent on its initial jitter.
RngStream path_rng(const GenerationConfig& cfg, int path, int history);

struct SguResult {
  Viewpoint viewpoint;
  UVPoint uv;  // emitted PID position in the block frame
  PidState pid;
  int component = 0;
  int clamps = 0;
};

/// One unit. `causal` holds earlier outputs of this block in the frame
/// centered at hist.back().
SguResult sgu_step(const GeneratorParams& params, std::span<const Viewpoint> hist, const CausalContext& causal,
                   const PidState& pid, RngStream& rng, const GenerationOptions& opts);

struct BlockResult {
  std::vector<Viewpoint> points;
  PidState pid;
  int clamps = 0;
};

/// W units starting from an empty causal context. `pid` is in the frame of hist.back().
BlockResult sgb_rollout(const GeneratorParams& params, std::span<const Viewpoint> hist, const PidState& pid,
                        RngStream& rng, const GenerationOptions& opts);

struct GeneratedPath {
  Scanpath path;
  int clamps = 0;
};

GeneratedPath generate_scanpath(const GeneratorParams& params, std::span<const Viewpoint> initial, int blocks,
                                RngStream& rng, const GenerationOptions& opts);

struct GeneratedBatch {
  std::vector<Scanpath> paths;
  int clamp_count = 0;
};

/// N paths; path i uses stream (cfg.seed, i). Output does not depend on `threads`.
GeneratedBatch generate_batch(const GeneratorParams& params, const GenerationConfig& cfg, int threads = 1);

namespace ad {

struct PidVars {
  Var position, velocity, acceleration, error_integral, prev_error;
};

PidVars pid_constants(Tape& tape, const PidState& s);
PidState pid_values(const PidVars& p);

struct DiffScanpath {
  std::vector<Var> points;  // 1x2 [phi, theta]
  int clamps = 0;
};

/// Differentiable rollout; consumes `rng` exactly like generate_scanpath.
DiffScanpath generate_scanpath(Tape& tape, const NetVars& vars, const NetHyper& hyper,
                               std::span<const Viewpoint> initial, int blocks, RngStream& rng,
                               const GenerationOptions& opts);

}  // namespace ad

}  // namespace panoscan
