#pragma once

// The three-stage optimization protocol:
//   1. pretrain the generator on recorded scanpaths by minimizing code length
//      with teacher-forced causal contexts;
//   2. freeze the generator and warm up the assessor by maximizing PLCC
//      between aggregated predictions and quality labels;
//   3. finetune generator and assessor jointly through the renderer.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "panoscan/assessor.hpp"
#include "panoscan/density_net.hpp"
#include "panoscan/generator.hpp"
#include "panoscan/synthetic.hpp"

namespace panoscan {

struct EpochLog {
  int stage = 0;
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

/// One JSON object per line with fields {stage, epoch, train_loss, val_metric, grad_norm, wall_ms}.
std::string encode_log(std::span<const EpochLog> logs);

struct LrSchedule {
  double initial = 1e-3;
  double decay_ratio = 1.0;
  int decay_every = 1;  // epochs

  double at(int epoch) const;
  void validate() const;
};

/// Adaptive moment estimation over a fixed list of tensors.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Eigen::MatrixXd* const> params, std::span<const Eigen::MatrixXd> grads, double lr);
  long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

double grad_norm(std::span<const Eigen::MatrixXd> grads);

// ---------------------------------------------------------------- stage 1

struct ExampleInfo {
  int path = 0;
  int window_start = 0;  // T: history is path[T .. T+H-1]
  int step = 0;          // t: target is path[T+H+t]
  std::vector<Viewpoint> causal_viewpoints;  // path[T+H .. T+H+t-1]
  Viewpoint target;
};

using ExampleHook = std::function<void(const ExampleInfo&, const TrainingExample&)>;

/// Sliding windows (H history, W future) over every path with stride `stride`.
std::vector<TrainingExample> build_examples(std::span<const Scanpath> paths, const NetHyper& hyper,
                                            const ViewportSpec& spec, int stride = 1, const ExampleHook& hook = {});

/// Targets permuted across examples; the histories and causal contexts stay in place.
std::vector<TrainingExample> shuffle_targets(std::vector<TrainingExample> examples, std::uint64_t seed);

struct Stage1Config {
  LrSchedule lr{1e-3, 0.5, 50};
  int epochs = 200;
  int batch = 48;
  int patience = 10;
  QuantizerSpec quantizer;
  std::uint64_t seed = 0;
  bool record_wall_time = false;
};

struct Stage1Result {
  GeneratorParams params;  // parameters at the best validation epoch
  std::vector<EpochLog> log;
  double initial_train_loss = 0.0;
  double initial_val = 0.0;
  double best_val = 0.0;
  int best_epoch = -1;
};

/// Mean code length over `examples`, evaluated in chunks.
double mean_code_length(const GeneratorParams& params, std::span<const TrainingExample> examples,
                        const QuantizerSpec& q = {});

Stage1Result stage1_pretrain(const GeneratorParams& init, std::span<const TrainingExample> train,
                             std::span<const TrainingExample> val, const Stage1Config& cfg);

// ---------------------------------------------------------------- stages 2 and 3

struct QualityTask {
  GenerationOptions generation;
  Viewpoint start;
  double duration_s = 7.0;
  double init_jitter_rad = 0.02;
  int n_paths = 8;
  int sequence_length = 7;
  ViewportSpec render{32, 32, kPi / 2.0};

  void validate() const;
};

/// Seed of the scanpaths for one (epoch, video) pair.
std::uint64_t scanpath_seed(std::uint64_t seed, int epoch, int video);

/// Per-path sequence features (n_paths x 4) of one video.
Eigen::MatrixXd video_features(const GeneratorParams& gen, const Video& video, const QualityTask& task,
                               std::uint64_t seed);

/// Predicted quality of each video: aggregate of the per-path scores.
std::vector<double> predict_quality(const GeneratorParams& gen, const ToyAssessor& assessor,
                                    std::span<const LabeledVideo> videos, const QualityTask& task,
                                    std::uint64_t seed);

struct Stage2Config {
  LrSchedule lr{3e-2, 0.95, 2};
  int epochs = 30;
  int batch = 8;
  int patience = 10;
  bool regenerate = true;  // fresh scanpaths every epoch; false keeps the epoch-0 set
  std::uint64_t seed = 0;
  bool record_wall_time = false;
};

struct Stage2Result {
  ToyAssessorParams params;  // best validation epoch
  std::vector<EpochLog> log;
  double best_val = 0.0;
};

/// 1 - PLCC of the batch predictions; throws ConfigError for batches below 3.
double plcc_loss(std::span<const double> pred, std::span<const double> labels);

Stage2Result stage2_warmup(const ToyAssessorParams& init, const GeneratorParams& gen,
                           std::span<const LabeledVideo> train, std::span<const LabeledVideo> val,
                           const QualityTask& task, const Stage2Config& cfg);

struct Stage3Config {
  LrSchedule lr{1e-3, 0.1, 2};
  int epochs = 5;
  int batch = 4;
  std::uint64_t seed = 0;
  bool record_wall_time = false;
};

struct Stage3Result {
  GeneratorParams generator;
  ToyAssessorParams assessor;
  std::vector<EpochLog> log;
  std::vector<double> generator_grad_norms;  // one per optimizer step
};

/// Joint finetuning through sampling, PID, rendering and the assessor.
Stage3Result stage3_finetune(const GeneratorParams& gen, const ToyAssessorParams& assessor,
                             std::span<const LabeledVideo> train, std::span<const LabeledVideo> val,
                             const QualityTask& task, const Stage3Config& cfg);

/// Loss and gradients of one stage-3 batch.
struct JointGrad {
  double loss = 0.0;
  GeneratorParams generator;
  std::vector<Eigen::MatrixXd> assessor;  // w1, b1, w2, b2
};

JointGrad joint_gradient(const GeneratorParams& gen, const ToyAssessorParams& assessor,
                         std::span<const LabeledVideo> batch, const QualityTask& task, std::uint64_t seed);

}  // namespace panoscan
