#pragma once

// The density estimation network: an H-Net over the H relative history
// paths, a C-Net over the masked causal context, and three linear heads that
// emit mixture weights, means and per-axis standard deviations.
//
// The same GeneratorParams instance is shared by every generation unit.

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "panoscan/geometry.hpp"
#include "panoscan/gmm.hpp"
#include "panoscan/tape.hpp"

namespace panoscan {

struct NetHyper {
  int history = 5;      // H
  int horizon = 5;      // W
  int components = 3;   // K
  int hnet_width = 64;
  int cnet_width = 32;
  double input_scale = 16.0;  // uv pixels per unit of network input
  double mean_scale = 16.0;   // uv pixels per unit of mean-head output

  void validate() const;
  int history_inputs() const { return history * history * 2; }
  int causal_inputs() const { return horizon * 3; }
  int feature_width() const { return hnet_width + cnet_width; }
  friend bool operator==(const NetHyper&, const NetHyper&) = default;
};

struct GeneratorParams {
  NetHyper hyper;
  std::vector<std::pair<std::string, ad::Matrix>> tensors;

  ad::Matrix& at(const std::string& name);
  const ad::Matrix& at(const std::string& name) const;
  std::size_t parameter_count() const;
  /// Zero tensors with the same names and shapes.
  GeneratorParams zeros_like() const;
  void validate() const;
};

struct CausalSlot {
  double u = 0.0;
  double v = 0.0;
  bool valid = false;
};

struct CausalContext {
  std::vector<CausalSlot> slots;

  static CausalContext empty(int horizon);
  /// Fills the first points.size() slots; throws ShapeError when they exceed the horizon.
  static CausalContext from_points(std::span<const UVPoint> points, int horizon);
  int valid_count() const;
  /// Valid slots must form a prefix and masked slots must hold zeros.
  void validate() const;
};

/// Tensor names and shapes implied by the hyperparameters, in checkpoint order.
std::vector<std::pair<std::string, std::pair<int, int>>> parameter_layout(const NetHyper& hyper);

GeneratorParams init_params(std::uint64_t seed, const NetHyper& hyper);

/// Row of H*H*2 inputs: relative paths in order, each as (u, v) per point.
ad::Matrix encode_history(std::span<const RelativePath> history, const NetHyper& hyper);
/// Row of W*3 inputs: (u, v, mask) per slot with masked values zeroed.
ad::Matrix encode_causal(const CausalContext& causal, const NetHyper& hyper);

/// Parameters bound as tape leaves (same order as GeneratorParams::tensors).
struct NetVars {
  std::vector<ad::Var> tensors;
  const ad::Var& at(std::size_t i) const { return tensors[i]; }
};

NetVars bind_params(ad::Tape& tape, const GeneratorParams& params, bool trainable);

struct GmmVars {
  ad::Var weights;  // B x K
  ad::Var means;    // B x 2K, interleaved (u, v)
  ad::Var sigmas;   // B x 2K, interleaved (u, v)
};

/// Batched forward: history B x H*H*2, causal B x W*3.
GmmVars forward(const NetVars& vars, const NetHyper& hyper, const ad::Var& history, const ad::Var& causal);

/// Single-example convenience forward.
GmmParams forward(const GeneratorParams& params, std::span<const RelativePath> history, const CausalContext& causal);

struct TrainingExample {
  ad::Matrix history;  // 1 x H*H*2
  ad::Matrix causal;   // 1 x W*3
  UVPoint target;
};

struct LossAndGrad {
  double loss_bits = 0.0;
  GeneratorParams grads;
};

/// Mean code length over the batch and its gradient with respect to every parameter.
LossAndGrad grad_code_length(const GeneratorParams& params, std::span<const TrainingExample> batch,
                             const QuantizerSpec& q = {});

/// Mean code length only.
double batch_code_length(const GeneratorParams& params, std::span<const TrainingExample> batch,
                         const QuantizerSpec& q = {});

void save_checkpoint(const GeneratorParams& params, const std::filesystem::path& path);
GeneratorParams load_checkpoint(const std::filesystem::path& path);

}  // namespace panoscan
