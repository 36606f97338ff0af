#pragma once

// Quality assessment of viewport sequences.
//
// Assessor is the plug-in contract. Differentiable assessors also expose a
// tape path so stage-3 training can reach the generator; a non-differentiable
// assessor still scores sequences but cannot be finetuned end to end.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "panoscan/image.hpp"
#include "panoscan/renderer.hpp"
#include "panoscan/tape.hpp"

namespace panoscan {

class Assessor {
 public:
  virtual ~Assessor() = default;

  virtual std::string name() const = 0;
  virtual double score(const ViewportSequence& seq) const = 0;
  virtual bool differentiable() const { return false; }
  /// Score of L tape frames ((h*w) x 3 each). Throws for non-differentiable assessors.
  virtual ad::Var score(ad::Tape& tape, std::span<const ad::Var> frames, int height, int width) const;
};

/// Wraps an arbitrary scoring function; never differentiable.
class ExternalAssessor final : public Assessor {
 public:
  using Fn = std::function<double(const ViewportSequence&)>;
  ExternalAssessor(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}
  std::string name() const override { return name_; }
  double score(const ViewportSequence& seq) const override { return fn_(seq); }

 private:
  std::string name_;
  Fn fn_;
};

inline constexpr int kFeatureCount = 4;
inline constexpr int kContrastBlock = 8;

/// Per-frame features: mean luminance, mean |horizontal difference|, mean
/// |vertical difference|, and mean standard deviation over 8x8 blocks.
Eigen::RowVectorXd frame_features(const Image& img);
/// Features averaged over the frames of a sequence.
Eigen::RowVectorXd sequence_features(std::span<const Image> frames);

struct ToyAssessorParams {
  int sequence_length = 7;
  int height = 224;
  int width = 224;
  int hidden = 16;
  Eigen::MatrixXd feat_shift;  // 1 x 4, fixed input standardization
  Eigen::MatrixXd feat_scale;  // 1 x 4
  Eigen::MatrixXd w1, b1, w2, b2;

  /// Trainable tensors in checkpoint order.
  std::vector<Eigen::MatrixXd*> trainable();
  std::vector<const Eigen::MatrixXd*> trainable() const;
  void validate() const;
};

ToyAssessorParams init_assessor(std::uint64_t seed, int sequence_length, int height, int width, int hidden = 16);

/// Sets the standardization to the per-feature mean and inverse std of `features` (rows = samples).
void fit_standardization(ToyAssessorParams& params, const Eigen::MatrixXd& features);

void save_assessor(const ToyAssessorParams& params, const std::filesystem::path& path);
ToyAssessorParams load_assessor(const std::filesystem::path& path);

class ToyAssessor final : public Assessor {
 public:
  explicit ToyAssessor(ToyAssessorParams params);

  std::string name() const override { return "toy"; }
  double score(const ViewportSequence& seq) const override;
  bool differentiable() const override { return true; }
  ad::Var score(ad::Tape& tape, std::span<const ad::Var> frames, int height, int width) const override;

  /// Head output for precomputed sequence features (rows = sequences).
  Eigen::VectorXd score_features(const Eigen::MatrixXd& features) const;

  const ToyAssessorParams& params() const { return params_; }
  ToyAssessorParams& params() { return params_; }

 private:
  ToyAssessorParams params_;
};

/// Arithmetic mean, summed in sorted order so the result does not depend on input order.
double aggregate(std::span<const double> scores);

namespace ad {

/// 1 x 4 features of an (h*w) x 3 image Var.
Var frame_features(const Var& image, int height, int width);

struct AssessorVars {
  Var w1, b1, w2, b2;
};

AssessorVars bind_assessor(Tape& tape, const ToyAssessorParams& params, bool trainable);

/// Head applied row-wise to raw (unstandardized) features B x 4 -> B x 1.
Var assessor_head(const AssessorVars& vars, const ToyAssessorParams& params, const Var& features);

/// Sequence score of tape frames -> 1 x 1.
Var assess_frames(const AssessorVars& vars, const ToyAssessorParams& params, std::span<const Var> frames);

/// Pearson correlation of a B x 1 prediction Var against fixed labels, with
/// an eps guard on both variances.
Var plcc(const Var& pred, std::span<const double> labels, double eps = 1e-8);

}  // namespace ad

}  // namespace panoscan
