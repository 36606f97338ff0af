#include "panoscan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "panoscan/diff_ops.hpp"
#include "panoscan/errors.hpp"
#include "panoscan/metrics.hpp"
#include "panoscan/renderer.hpp"
#include "panoscan/rng.hpp"
#include "panoscan/scanpath_io.hpp"

namespace panoscan {

using ad::Matrix;
using ad::Var;

namespace {

constexpr int kEvalChunk = 512;
// Epoch tag of validation scanpaths, distinct from every training epoch.
constexpr int kValidationEpoch = 1 << 20;

class Stopwatch {
 public:
  explicit Stopwatch(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(seed, stream);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

// Batches of `size`; a trailing remainder smaller than `min_size` joins the previous batch.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, int size, int min_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += size) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(size));
    std::vector<std::size_t> b(order.begin() + i, order.begin() + end);
    if (static_cast<int>(b.size()) < min_size && !batches.empty()) {
      batches.back().insert(batches.back().end(), b.begin(), b.end());
    } else {
      batches.push_back(std::move(b));
    }
  }
  return batches;
}

std::vector<Eigen::MatrixXd*> tensor_ptrs(GeneratorParams& p) {
  std::vector<Eigen::MatrixXd*> out;
  for (auto& [name, m] : p.tensors) out.push_back(&m);
  return out;
}

std::vector<Eigen::MatrixXd> tensor_values(const GeneratorParams& p) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& [name, m] : p.tensors) out.push_back(m);
  return out;
}

GenerationConfig generation_config(const QualityTask& task, std::uint64_t seed) {
  GenerationConfig cfg;
  cfg.start = task.start;
  cfg.duration_s = task.duration_s;
  cfg.n_paths = task.n_paths;
  cfg.init_jitter_rad = task.init_jitter_rad;
  cfg.seed = seed;
  cfg.options = task.generation;
  return cfg;
}

double safe_pearson(std::span<const double> x, std::span<const double> y) {
  try {
    return pearson(x, y);
  } catch (const DegenerateSeries&) {
    return 0.0;
  }
}

std::vector<double> labels_of(std::span<const LabeledVideo> videos) {
  std::vector<double> out;
  for (const auto& v : videos) out.push_back(v.label);
  return out;
}

}  // namespace

std::string encode_log(std::span<const EpochLog> logs) {
  std::string out;
  for (const auto& l : logs) {
    out += "{\"stage\": " + std::to_string(l.stage) + ", \"epoch\": " + std::to_string(l.epoch) +
           ", \"train_loss\": " + format_double(l.train_loss) + ", \"val_metric\": " + format_double(l.val_metric) +
           ", \"grad_norm\": " + format_double(l.grad_norm) + ", \"wall_ms\": " + format_double(l.wall_ms) + "}\n";
  }
  return out;
}

double LrSchedule::at(int epoch) const { return initial * std::pow(decay_ratio, epoch / decay_every); }

void LrSchedule::validate() const {
  if (!(initial > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(decay_ratio > 0.0 && decay_ratio <= 1.0)) throw ConfigError("decay ratio must lie in (0, 1]");
  if (decay_every < 1) throw ConfigError("decay interval must be at least one epoch");
}

void Adam::step(std::span<Eigen::MatrixXd* const> params, std::span<const Eigen::MatrixXd> grads, double lr) {
  if (params.size() != grads.size()) throw ShapeError("optimizer parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      v_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    params[i]->array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double grad_norm(std::span<const Eigen::MatrixXd> grads) {
  double s = 0.0;
  for (const auto& g : grads) s += g.squaredNorm();
  return std::sqrt(s);
}

// ---------------------------------------------------------------- stage 1

std::vector<TrainingExample> build_examples(std::span<const Scanpath> paths, const NetHyper& hyper,
                                            const ViewportSpec& spec, int stride, const ExampleHook& hook) {
  hyper.validate();
  if (stride < 1) throw ConfigError("window stride must be positive");
  const int h = hyper.history, w = hyper.horizon;
  std::vector<TrainingExample> out;
  for (std::size_t pi = 0; pi < paths.size(); ++pi) {
    const auto& pts = paths[pi].points;
    for (int t0 = 0; t0 + h + w <= static_cast<int>(pts.size()); t0 += stride) {
      const std::span<const Viewpoint> hist(pts.data() + t0, h);
      const Matrix hist_row = encode_history(relative_scanpath_set(hist, spec), hyper);
      const Viewpoint& center = hist.back();
      std::vector<UVPoint> causal;
      for (int t = 0; t < w; ++t) {
        const Viewpoint& target = pts[t0 + h + t];
        TrainingExample ex{hist_row, encode_causal(CausalContext::from_points(causal, w), hyper),
                           sphere_to_viewport(target, center, spec, HorizonPolicy::kClamp).uv};
        if (hook) {
          ExampleInfo info;
          info.path = static_cast<int>(pi);
          info.window_start = t0;
          info.step = t;
          info.causal_viewpoints.assign(pts.begin() + t0 + h, pts.begin() + t0 + h + t);
          info.target = target;
          hook(info, ex);
        }
        causal.push_back(ex.target);
        out.push_back(std::move(ex));
      }
    }
  }
  return out;
}

std::vector<TrainingExample> shuffle_targets(std::vector<TrainingExample> examples, std::uint64_t seed) {
  const auto order = permutation(examples.size(), seed, 0x73687566ULL);
  std::vector<UVPoint> targets;
  for (const auto& e : examples) targets.push_back(e.target);
  for (std::size_t i = 0; i < examples.size(); ++i) examples[i].target = targets[order[i]];
  return examples;
}

double mean_code_length(const GeneratorParams& params, std::span<const TrainingExample> examples,
                        const QuantizerSpec& q) {
  if (examples.empty()) throw ShapeError("no examples to evaluate");
  double total = 0.0;
  for (std::size_t i = 0; i < examples.size(); i += kEvalChunk) {
    const std::size_t n = std::min<std::size_t>(kEvalChunk, examples.size() - i);
    total += batch_code_length(params, examples.subspan(i, n), q) * static_cast<double>(n);
  }
  return total / static_cast<double>(examples.size());
}

Stage1Result stage1_pretrain(const GeneratorParams& init, std::span<const TrainingExample> train,
                             std::span<const TrainingExample> val, const Stage1Config& cfg) {
  init.validate();
  cfg.lr.validate();
  if (train.empty() || val.empty()) throw ConfigError("stage 1 needs nonempty training and validation sets");
  if (cfg.batch < 1 || cfg.epochs < 0 || cfg.patience < 1) throw ConfigError("invalid stage-1 batch, epoch or patience");

  GeneratorParams params = init;
  Stage1Result res;
  res.initial_train_loss = mean_code_length(params, train, cfg.quantizer);
  res.initial_val = mean_code_length(params, val, cfg.quantizer);
  res.params = params;
  res.best_val = res.initial_val;
  res.best_epoch = 0;

  Adam adam;
  const auto ptrs = tensor_ptrs(params);
  std::vector<TrainingExample> batch;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Stopwatch clock(cfg.record_wall_time);
    const double lr = cfg.lr.at(epoch);
    double loss_sum = 0.0, norm_sum = 0.0;
    int steps = 0;
    const auto order = permutation(train.size(), cfg.seed, static_cast<std::uint64_t>(epoch));
    for (const auto& idx : make_batches(order, cfg.batch, 1)) {
      batch.clear();
      for (std::size_t i : idx) batch.push_back(train[i]);
      LossAndGrad lg = grad_code_length(params, batch, cfg.quantizer);
      if (!std::isfinite(lg.loss_bits)) {
        throw DivergenceError("stage 1 diverged at epoch " + std::to_string(epoch + 1) + ", step " +
                              std::to_string(steps) + ": loss " + format_double(lg.loss_bits));
      }
      const auto grads = tensor_values(lg.grads);
      norm_sum += grad_norm(grads);
      adam.step(ptrs, grads, lr);
      loss_sum += lg.loss_bits * static_cast<double>(idx.size());
      ++steps;
    }
    const double val_bits = mean_code_length(params, val, cfg.quantizer);
    if (!std::isfinite(val_bits)) throw DivergenceError("stage 1 validation loss is not finite at epoch " + std::to_string(epoch + 1));
    res.log.push_back({1, epoch + 1, loss_sum / static_cast<double>(train.size()), val_bits, norm_sum / steps, clock.ms()});
    if (val_bits < res.best_val) {
      res.best_val = val_bits;
      res.best_epoch = epoch + 1;
      res.params = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------- stages 2 and 3

void QualityTask::validate() const {
  generation.validate();
  render.validate();
  if (!start.valid()) throw ConfigError("start viewpoint out of range");
  if (!(duration_s > 0.0) || n_paths < 1 || sequence_length < 1 || !(init_jitter_rad >= 0.0)) {
    throw ConfigError("invalid quality task settings");
  }
}

std::uint64_t scanpath_seed(std::uint64_t seed, int epoch, int video) {
  return mix64(mix64(seed ^ 0x5CA9ULL) + static_cast<std::uint64_t>(epoch) * 0x9E3779B97F4A7C15ULL +
               static_cast<std::uint64_t>(video));
}

Eigen::MatrixXd video_features(const GeneratorParams& gen, const Video& video, const QualityTask& task,
                               std::uint64_t seed) {
  const GeneratedBatch batch = generate_batch(gen, generation_config(task, seed), 1);
  Eigen::MatrixXd feats(task.n_paths, kFeatureCount);
  for (int i = 0; i < task.n_paths; ++i) {
    const ViewportSequence seq = render_sequence(video, batch.paths[i], task.sequence_length, task.render);
    feats.row(i) = sequence_features(seq.frames);
  }
  return feats;
}

std::vector<double> predict_quality(const GeneratorParams& gen, const ToyAssessor& assessor,
                                    std::span<const LabeledVideo> videos, const QualityTask& task,
                                    std::uint64_t seed) {
  std::vector<double> out;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const Eigen::VectorXd s =
        assessor.score_features(video_features(gen, videos[i].video, task, scanpath_seed(seed, kValidationEpoch, static_cast<int>(i))));
    out.push_back(aggregate(std::span<const double>(s.data(), static_cast<std::size_t>(s.size()))));
  }
  return out;
}

double plcc_loss(std::span<const double> pred, std::span<const double> labels) {
  if (pred.size() < 3) throw ConfigError("PLCC loss needs a batch of at least 3");
  ad::Tape tape;
  const Var p = tape.constant(Eigen::Map<const Eigen::VectorXd>(pred.data(), static_cast<Eigen::Index>(pred.size())));
  return 1.0 - ad::plcc(p, labels).scalar();
}

Stage2Result stage2_warmup(const ToyAssessorParams& init, const GeneratorParams& gen,
                           std::span<const LabeledVideo> train, std::span<const LabeledVideo> val,
                           const QualityTask& task, const Stage2Config& cfg) {
  task.validate();
  cfg.lr.validate();
  if (cfg.batch < 3) throw ConfigError("stage 2 batch size must be at least 3");
  if (train.size() < 3 || val.size() < 3) throw ConfigError("stage 2 needs at least 3 training and 3 validation videos");

  ToyAssessorParams params = init;
  params.validate();
  if (params.sequence_length != task.sequence_length || params.height != task.render.height_px ||
      params.width != task.render.width_px) {
    throw ShapeError("assessor dimensions do not match the rendering settings");
  }
  const int n = task.n_paths;

  auto train_features = [&](int epoch) {
    std::vector<Eigen::MatrixXd> feats;
    for (std::size_t i = 0; i < train.size(); ++i) {
      feats.push_back(video_features(gen, train[i].video, task, scanpath_seed(cfg.seed, epoch, static_cast<int>(i))));
    }
    return feats;
  };
  std::vector<Eigen::MatrixXd> val_feats;
  for (std::size_t i = 0; i < val.size(); ++i) {
    val_feats.push_back(video_features(gen, val[i].video, task, scanpath_seed(cfg.seed, kValidationEpoch, static_cast<int>(i))));
  }
  const std::vector<double> val_labels = labels_of(val);

  auto val_plcc = [&](const ToyAssessorParams& p) {
    const ToyAssessor a(p);
    std::vector<double> pred;
    for (const auto& f : val_feats) {
      const Eigen::VectorXd s = a.score_features(f);
      pred.push_back(aggregate(std::span<const double>(s.data(), static_cast<std::size_t>(s.size()))));
    }
    return safe_pearson(pred, val_labels);
  };

  std::vector<Eigen::MatrixXd> feats = train_features(0);
  {
    Eigen::MatrixXd all(static_cast<Eigen::Index>(feats.size()) * n, kFeatureCount);
    for (std::size_t i = 0; i < feats.size(); ++i) all.middleRows(static_cast<Eigen::Index>(i) * n, n) = feats[i];
    fit_standardization(params, all);
  }

  Stage2Result res;
  res.params = params;
  res.best_val = val_plcc(params);
  Adam adam;
  const auto ptrs = params.trainable();
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Stopwatch clock(cfg.record_wall_time);
    if (cfg.regenerate && epoch > 0) feats = train_features(epoch);
    const double lr = cfg.lr.at(epoch);
    double loss_sum = 0.0, norm_sum = 0.0;
    int steps = 0;
    const auto order = permutation(train.size(), cfg.seed, 0x10000ULL + static_cast<std::uint64_t>(epoch));
    for (const auto& idx : make_batches(order, cfg.batch, 3)) {
      const auto b = static_cast<Eigen::Index>(idx.size());
      Eigen::MatrixXd x(b * n, kFeatureCount);
      std::vector<double> labels;
      for (Eigen::Index k = 0; k < b; ++k) {
        x.middleRows(k * n, n) = feats[idx[k]];
        labels.push_back(train[idx[k]].label);
      }
      ad::Tape tape;
      const ad::AssessorVars vars = ad::bind_assessor(tape, params, true);
      const Var scores = ad::assessor_head(vars, params, tape.constant(std::move(x)));
      Matrix avg = Matrix::Zero(b, b * n);
      for (Eigen::Index k = 0; k < b; ++k) avg.block(k, k * n, 1, n).setConstant(1.0 / n);
      const Var pred = ad::matmul(tape.constant(std::move(avg)), scores);
      const Var loss = ad::add_scalar(-ad::plcc(pred, labels), 1.0);
      tape.backward(loss);
      const std::vector<Eigen::MatrixXd> grads = {tape.grad(vars.w1), tape.grad(vars.b1), tape.grad(vars.w2),
                                                  tape.grad(vars.b2)};
      if (!std::isfinite(loss.scalar())) throw DivergenceError("stage 2 diverged at epoch " + std::to_string(epoch + 1));
      norm_sum += grad_norm(grads);
      adam.step(ptrs, grads, lr);
      loss_sum += loss.scalar();
      ++steps;
    }
    const double v = val_plcc(params);
    res.log.push_back({2, epoch + 1, loss_sum / steps, v, norm_sum / steps, clock.ms()});
    if (v > res.best_val) {
      res.best_val = v;
      res.params = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return res;
}

JointGrad joint_gradient(const GeneratorParams& gen, const ToyAssessorParams& assessor,
                         std::span<const LabeledVideo> batch, const QualityTask& task, std::uint64_t seed) {
  if (batch.size() < 3) throw ConfigError("stage 3 batch size must be at least 3");
  ad::Tape tape;
  const NetVars net = bind_params(tape, gen, true);
  const ad::AssessorVars head = ad::bind_assessor(tape, assessor, true);
  const int blocks = blocks_for_duration(task.duration_s, gen.hyper.history, gen.hyper.horizon);
  std::vector<Var> video_scores;
  std::vector<double> labels;
  for (std::size_t v = 0; v < batch.size(); ++v) {
    const GenerationConfig cfg = generation_config(task, scanpath_seed(seed, 0, static_cast<int>(v)));
    const auto initial = make_initial_paths(cfg, gen.hyper.history);
    std::vector<Var> path_scores;
    for (int i = 0; i < task.n_paths; ++i) {
      RngStream rng = path_rng(cfg, i, gen.hyper.history);
      const ad::DiffScanpath path = ad::generate_scanpath(tape, net, gen.hyper, initial[i], blocks, rng, task.generation);
      const std::vector<Var> frames =
          ad::render_sequence(path.points, batch[v].video, task.sequence_length, task.render);
      path_scores.push_back(ad::assess_frames(head, assessor, frames));
    }
    video_scores.push_back(ad::mean(ad::concat_rows(path_scores)));
    labels.push_back(batch[v].label);
  }
  const Var loss = ad::add_scalar(-ad::plcc(ad::concat_rows(video_scores), labels), 1.0);
  tape.backward(loss);
  JointGrad out;
  out.loss = loss.scalar();
  out.generator = gen.zeros_like();
  for (std::size_t i = 0; i < gen.tensors.size(); ++i) out.generator.tensors[i].second = tape.grad(net.at(i));
  out.assessor = {tape.grad(head.w1), tape.grad(head.b1), tape.grad(head.w2), tape.grad(head.b2)};
  return out;
}

Stage3Result stage3_finetune(const GeneratorParams& gen, const ToyAssessorParams& assessor,
                             std::span<const LabeledVideo> train, std::span<const LabeledVideo> val,
                             const QualityTask& task, const Stage3Config& cfg) {
  task.validate();
  cfg.lr.validate();
  gen.validate();
  assessor.validate();
  if (cfg.batch < 3) throw ConfigError("stage 3 batch size must be at least 3");
  if (train.size() < 3 || val.size() < 3) throw ConfigError("stage 3 needs at least 3 training and 3 validation videos");

  Stage3Result res;
  GeneratorParams g = gen;
  ToyAssessorParams a = assessor;
  const std::vector<double> val_labels = labels_of(val);
  auto val_plcc = [&] { return safe_pearson(predict_quality(g, ToyAssessor(a), val, task, cfg.seed), val_labels); };

  res.generator = g;
  res.assessor = a;
  double best = val_plcc();
  Adam gen_adam, head_adam;
  const auto gen_ptrs = tensor_ptrs(g);
  const auto head_ptrs = a.trainable();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Stopwatch clock(cfg.record_wall_time);
    const double lr = cfg.lr.at(epoch);
    double loss_sum = 0.0, norm_sum = 0.0;
    int steps = 0;
    const auto order = permutation(train.size(), cfg.seed, 0x30000ULL + static_cast<std::uint64_t>(epoch));
    for (const auto& idx : make_batches(order, cfg.batch, 3)) {
      std::vector<LabeledVideo> batch;
      for (std::size_t i : idx) batch.push_back(train[i]);
      const std::uint64_t seed = scanpath_seed(cfg.seed, epoch, steps) ^ 0x3ULL;
      JointGrad jg = joint_gradient(g, a, batch, task, seed);
      if (!std::isfinite(jg.loss)) throw DivergenceError("stage 3 diverged at epoch " + std::to_string(epoch + 1));
      const auto gen_grads = tensor_values(jg.generator);
      const double norm = grad_norm(gen_grads);
      res.generator_grad_norms.push_back(norm);
      norm_sum += norm;
      gen_adam.step(gen_ptrs, gen_grads, lr);
      head_adam.step(head_ptrs, jg.assessor, lr);
      loss_sum += jg.loss;
      ++steps;
    }
    const double v = val_plcc();
    res.log.push_back({3, epoch + 1, loss_sum / steps, v, norm_sum / steps, clock.ms()});
    if (v > best) {
      best = v;
      res.generator = g;
      res.assessor = a;
    }
  }
  return res;
}

}  // namespace panoscan
