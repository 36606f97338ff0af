#include "panoscan/assessor.hpp"

#include <algorithm>
#include <cmath>

#include "panoscan/errors.hpp"
#include "panoscan/rng.hpp"
#include "panoscan/tensor_file.hpp"

namespace panoscan {

using ad::Matrix;
using ad::Var;

namespace {

constexpr double kLuma[3] = {0.299, 0.587, 0.114};
constexpr double kContrastEps = 1e-6;

Eigen::MatrixXd luminance(const Eigen::MatrixXd& rgb, int height, int width) {
  Eigen::MatrixXd y(height, width);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      const Eigen::Index p = static_cast<Eigen::Index>(i) * width + j;
      y(i, j) = kLuma[0] * rgb(p, 0) + kLuma[1] * rgb(p, 1) + kLuma[2] * rgb(p, 2);
    }
  }
  return y;
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

struct Blocks {
  int bh, bw, rows, cols;
};

// Full blocks only; images smaller than a block form one block.
Blocks block_grid(int height, int width) {
  Blocks b;
  b.bh = std::min(kContrastBlock, height);
  b.bw = std::min(kContrastBlock, width);
  b.rows = height / b.bh;
  b.cols = width / b.bw;
  return b;
}

// Features and, when `grad` is non-null, d feature_k / d Y as four Hv x Wv maps.
Eigen::RowVectorXd luminance_features(const Eigen::MatrixXd& y, std::vector<Eigen::MatrixXd>* grad) {
  const int h = static_cast<int>(y.rows()), w = static_cast<int>(y.cols());
  Eigen::RowVectorXd f(kFeatureCount);
  if (grad != nullptr) grad->assign(kFeatureCount, Eigen::MatrixXd::Zero(h, w));

  f(0) = y.mean();
  if (grad != nullptr) (*grad)[0].setConstant(1.0 / (static_cast<double>(h) * w));

  f(1) = 0.0;
  if (w > 1) {
    const double inv = 1.0 / (static_cast<double>(h) * (w - 1));
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j + 1 < w; ++j) {
        const double d = y(i, j + 1) - y(i, j);
        f(1) += std::abs(d);
        if (grad != nullptr) {
          (*grad)[1](i, j + 1) += sign(d) * inv;
          (*grad)[1](i, j) -= sign(d) * inv;
        }
      }
    }
    f(1) *= inv;
  }

  f(2) = 0.0;
  if (h > 1) {
    const double inv = 1.0 / (static_cast<double>(h - 1) * w);
    for (int i = 0; i + 1 < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const double d = y(i + 1, j) - y(i, j);
        f(2) += std::abs(d);
        if (grad != nullptr) {
          (*grad)[2](i + 1, j) += sign(d) * inv;
          (*grad)[2](i, j) -= sign(d) * inv;
        }
      }
    }
    f(2) *= inv;
  }

  const Blocks b = block_grid(h, w);
  const double n = static_cast<double>(b.bh) * b.bw;
  const double inv_blocks = 1.0 / (static_cast<double>(b.rows) * b.cols);
  f(3) = 0.0;
  for (int br = 0; br < b.rows; ++br) {
    for (int bc = 0; bc < b.cols; ++bc) {
      const auto block = y.block(br * b.bh, bc * b.bw, b.bh, b.bw);
      const double mu = block.mean();
      const double var = (block.array() - mu).square().sum() / n;
      const double sd = std::sqrt(var + kContrastEps);
      f(3) += sd * inv_blocks;
      if (grad != nullptr) {
        // d sd / d y = (y - mu) / (n * sd)
        (*grad)[3].block(br * b.bh, bc * b.bw, b.bh, b.bw) =
            (block.array() - mu) * (inv_blocks / (n * sd));
      }
    }
  }
  return f;
}

void check_frame(const Matrix& rgb, int height, int width) {
  if (height < 1 || width < 1 || rgb.rows() != static_cast<Eigen::Index>(height) * width || rgb.cols() != 3) {
    throw ShapeError("image does not have the declared shape");
  }
}

}  // namespace

Var Assessor::score(ad::Tape&, std::span<const Var>, int, int) const {
  throw ConfigError("assessor '" + name() + "' is not differentiable");
}

Eigen::RowVectorXd frame_features(const Image& img) {
  check_frame(img.rgb, img.height, img.width);
  return luminance_features(luminance(img.rgb, img.height, img.width), nullptr);
}

Eigen::RowVectorXd sequence_features(std::span<const Image> frames) {
  if (frames.empty()) throw ShapeError("empty viewport sequence");
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(kFeatureCount);
  for (const auto& f : frames) acc += frame_features(f);
  return acc / static_cast<double>(frames.size());
}

std::vector<Eigen::MatrixXd*> ToyAssessorParams::trainable() { return {&w1, &b1, &w2, &b2}; }

std::vector<const Eigen::MatrixXd*> ToyAssessorParams::trainable() const { return {&w1, &b1, &w2, &b2}; }

void ToyAssessorParams::validate() const {
  if (sequence_length < 1 || height < 1 || width < 1 || hidden < 1) throw ConfigError("assessor dimensions must be positive");
  auto check = [](const Eigen::MatrixXd& m, Eigen::Index r, Eigen::Index c, const char* what) {
    if (m.rows() != r || m.cols() != c) throw ShapeError(std::string("assessor tensor ") + what + " has the wrong shape");
    if (!m.allFinite()) throw ConfigError(std::string("assessor tensor ") + what + " is not finite");
  };
  check(feat_shift, 1, kFeatureCount, "feat.shift");
  check(feat_scale, 1, kFeatureCount, "feat.scale");
  check(w1, kFeatureCount, hidden, "head.w1");
  check(b1, 1, hidden, "head.b1");
  check(w2, hidden, 1, "head.w2");
  check(b2, 1, 1, "head.b2");
}

ToyAssessorParams init_assessor(std::uint64_t seed, int sequence_length, int height, int width, int hidden) {
  ToyAssessorParams p;
  p.sequence_length = sequence_length;
  p.height = height;
  p.width = width;
  p.hidden = hidden;
  RngStream rng(seed, 0x7161ULL);
  auto uniform = [&](int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    }
    return m;
  };
  p.feat_shift = Eigen::MatrixXd::Zero(1, kFeatureCount);
  p.feat_scale = Eigen::MatrixXd::Ones(1, kFeatureCount);
  p.w1 = uniform(kFeatureCount, hidden);
  p.b1 = Eigen::MatrixXd::Zero(1, hidden);
  p.w2 = uniform(hidden, 1);
  p.b2 = Eigen::MatrixXd::Zero(1, 1);
  p.validate();
  return p;
}

void fit_standardization(ToyAssessorParams& params, const Eigen::MatrixXd& features) {
  if (features.rows() < 1 || features.cols() != kFeatureCount) throw ShapeError("feature matrix must be N x 4");
  const Eigen::RowVectorXd mean = features.colwise().mean();
  for (int k = 0; k < kFeatureCount; ++k) {
    const double var = (features.col(k).array() - mean(k)).square().mean();
    params.feat_shift(0, k) = mean(k);
    params.feat_scale(0, k) = 1.0 / std::sqrt(var + 1e-12);
  }
}

void save_assessor(const ToyAssessorParams& p, const std::filesystem::path& path) {
  p.validate();
  TensorFile file;
  file.meta = {{"kind", "toy_assessor"},
               {"sequence_length", p.sequence_length},
               {"height", p.height},
               {"width", p.width},
               {"hidden", p.hidden}};
  file.tensors = {{"feat.shift", p.feat_shift}, {"feat.scale", p.feat_scale}, {"head.w1", p.w1},
                  {"head.b1", p.b1},            {"head.w2", p.w2},           {"head.b2", p.b2}};
  write_tensor_file(path, kAssessorMagic, file);
}

ToyAssessorParams load_assessor(const std::filesystem::path& path) {
  TensorFile file = read_tensor_file(path, kAssessorMagic);
  ToyAssessorParams p;
  try {
    p.sequence_length = file.meta.at("sequence_length").get<int>();
    p.height = file.meta.at("height").get<int>();
    p.width = file.meta.at("width").get<int>();
    p.hidden = file.meta.at("hidden").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw HeaderError(std::string("assessor checkpoint lacks dimensions: ") + e.what());
  }
  const char* names[] = {"feat.shift", "feat.scale", "head.w1", "head.b1", "head.w2", "head.b2"};
  Eigen::MatrixXd* slots[] = {&p.feat_shift, &p.feat_scale, &p.w1, &p.b1, &p.w2, &p.b2};
  if (file.tensors.size() != 6) throw ShapeError("assessor checkpoint must hold 6 tensors");
  for (int i = 0; i < 6; ++i) {
    if (file.tensors[i].first != names[i]) throw ShapeError(std::string("expected assessor tensor ") + names[i]);
    *slots[i] = std::move(file.tensors[i].second);
  }
  p.validate();
  return p;
}

ToyAssessor::ToyAssessor(ToyAssessorParams params) : params_(std::move(params)) { params_.validate(); }

Eigen::VectorXd ToyAssessor::score_features(const Eigen::MatrixXd& features) const {
  const auto& p = params_;
  Eigen::MatrixXd x = (features.rowwise() - p.feat_shift.row(0)).array().rowwise() * p.feat_scale.row(0).array();
  Eigen::MatrixXd h = ((x * p.w1).rowwise() + p.b1.row(0)).array().tanh();
  return ((h * p.w2).array() + p.b2(0, 0)).matrix().col(0);
}

double ToyAssessor::score(const ViewportSequence& seq) const {
  if (static_cast<int>(seq.frames.size()) != params_.sequence_length) throw ShapeError("sequence length mismatch");
  for (const auto& f : seq.frames) {
    if (f.height != params_.height || f.width != params_.width) throw ShapeError("viewport size mismatch");
  }
  const Eigen::MatrixXd feats = sequence_features(seq.frames);
  return score_features(feats)(0);
}

Var ToyAssessor::score(ad::Tape& tape, std::span<const Var> frames, int height, int width) const {
  if (static_cast<int>(frames.size()) != params_.sequence_length) throw ShapeError("sequence length mismatch");
  if (height != params_.height || width != params_.width) throw ShapeError("viewport size mismatch");
  return ad::assess_frames(ad::bind_assessor(tape, params_, false), params_, frames);
}

double aggregate(std::span<const double> scores) {
  if (scores.empty()) throw ShapeError("cannot aggregate an empty score list");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double s : sorted) total += s;
  return total / static_cast<double>(sorted.size());
}

namespace ad {

Var frame_features(const Var& image, int height, int width) {
  check_frame(image.value(), height, width);
  std::vector<Eigen::MatrixXd> dy;
  const Eigen::RowVectorXd f = luminance_features(luminance(image.value(), height, width), &dy);
  const int parent = image.id();
  return image.tape()->record(Matrix(f), {parent}, [parent, width, dy = std::move(dy)](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    Eigen::MatrixXd gy = Eigen::MatrixXd::Zero(dy[0].rows(), dy[0].cols());
    for (int k = 0; k < kFeatureCount; ++k) gy += g(0, k) * dy[k];
    Matrix& gi = tp.grad_ref(parent);
    for (Eigen::Index i = 0; i < gy.rows(); ++i) {
      for (Eigen::Index j = 0; j < gy.cols(); ++j) {
        const Eigen::Index p = i * width + j;
        for (int c = 0; c < 3; ++c) gi(p, c) += kLuma[c] * gy(i, j);
      }
    }
  });
}

AssessorVars bind_assessor(Tape& tape, const ToyAssessorParams& p, bool trainable) {
  auto bind = [&](const Eigen::MatrixXd& m) { return trainable ? tape.variable(m) : tape.constant(m); };
  return {bind(p.w1), bind(p.b1), bind(p.w2), bind(p.b2)};
}

Var assessor_head(const AssessorVars& vars, const ToyAssessorParams& p, const Var& features) {
  Tape& tape = *features.tape();
  const Var shifted = add_row(features, tape.constant(-p.feat_shift));
  const Matrix scale = p.feat_scale.replicate(features.rows(), 1);
  const Var x = hadamard(shifted, tape.constant(scale));
  const Var h = tanh(add_row(matmul(x, vars.w1), vars.b1));
  return add_row(matmul(h, vars.w2), vars.b2);
}

Var assess_frames(const AssessorVars& vars, const ToyAssessorParams& p, std::span<const Var> frames) {
  if (frames.empty()) throw ShapeError("empty viewport sequence");
  std::vector<Var> rows;
  rows.reserve(frames.size());
  for (const auto& f : frames) rows.push_back(frame_features(f, p.height, p.width));
  Tape& tape = *frames.front().tape();
  const Var stacked = concat_rows(rows);
  const Matrix avg = Matrix::Constant(1, static_cast<Index>(frames.size()), 1.0 / static_cast<double>(frames.size()));
  return assessor_head(vars, p, matmul(tape.constant(avg), stacked));
}

Var plcc(const Var& pred, std::span<const double> labels, double eps) {
  const Index n = pred.rows();
  if (pred.cols() != 1 || static_cast<Index>(labels.size()) != n) throw ShapeError("plcc: prediction/label size mismatch");
  if (n < 2) throw ShapeError("plcc needs at least two samples");
  Tape& tape = *pred.tape();
  Eigen::VectorXd l = Eigen::Map<const Eigen::VectorXd>(labels.data(), n);
  l.array() -= l.mean();
  const double label_norm = std::sqrt(l.squaredNorm() + eps);
  const Var centered = add_row(pred, -mean(pred));
  const Var cov = sum(hadamard(centered, tape.constant(Matrix(l))));
  const Var inv_pred_norm = exp(-0.5 * log(add_scalar(sum(square(centered)), eps)));
  return (1.0 / label_norm) * scale_by(cov, inv_pred_norm);
}

}  // namespace ad

}  // namespace panoscan
