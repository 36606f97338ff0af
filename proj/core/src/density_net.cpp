#include "panoscan/density_net.hpp"

#include <algorithm>
#include <cmath>

#include "panoscan/diff_ops.hpp"
#include "panoscan/errors.hpp"
#include "panoscan/rng.hpp"
#include "panoscan/tensor_file.hpp"

namespace panoscan {

using ad::Index;
using ad::Matrix;
using ad::Var;

namespace {

// Parameter indices in layout order.
enum Slot : std::size_t {
  kHnetW1, kHnetB1, kHnetW2, kHnetB2,
  kCnetW1, kCnetB1, kCnetW2, kCnetB2,
  kHeadWW, kHeadWB, kHeadMuW, kHeadMuB, kHeadSigmaW, kHeadSigmaB,
  kSlotCount
};

// softplus^-1(1 - sigma_floor): initial sigma of 1 px.
double initial_sigma_bias() { return std::log(std::expm1(1.0 - kSigmaFloor)); }

Matrix uniform_matrix(RngStream& rng, int rows, int cols, double bound) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = bound * (2.0 * rng.uniform() - 1.0);
  }
  return m;
}

Var dense(const Var& x, const Var& w, const Var& b) { return add_row(ad::matmul(x, w), b); }

}  // namespace

void NetHyper::validate() const {
  if (history < 1 || horizon < 1 || components < 1) throw ConfigError("H, W and K must be positive");
  if (hnet_width < 1 || cnet_width < 1) throw ConfigError("subnetwork widths must be positive");
  if (!(input_scale > 0.0) || !(mean_scale > 0.0)) throw ConfigError("network scales must be positive");
  if (components * kWeightFloor >= 1.0) throw ConfigError("too many components for the weight floor");
}

Matrix& GeneratorParams::at(const std::string& name) {
  for (auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw ShapeError("no parameter named '" + name + "'");
}

const Matrix& GeneratorParams::at(const std::string& name) const {
  return const_cast<GeneratorParams*>(this)->at(name);
}

std::size_t GeneratorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors) n += static_cast<std::size_t>(m.size());
  return n;
}

GeneratorParams GeneratorParams::zeros_like() const {
  GeneratorParams z;
  z.hyper = hyper;
  for (const auto& [name, m] : tensors) z.tensors.emplace_back(name, Matrix::Zero(m.rows(), m.cols()));
  return z;
}

void GeneratorParams::validate() const {
  hyper.validate();
  const auto layout = parameter_layout(hyper);
  if (layout.size() != tensors.size()) throw ShapeError("parameter count does not match the hyperparameters");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, shape] = layout[i];
    if (tensors[i].first != name) throw ShapeError("expected parameter '" + name + "', found '" + tensors[i].first + "'");
    if (tensors[i].second.rows() != shape.first || tensors[i].second.cols() != shape.second) {
      throw ShapeError("parameter '" + name + "' has the wrong shape");
    }
    if (!tensors[i].second.allFinite()) throw ConfigError("parameter '" + name + "' is not finite");
  }
}

CausalContext CausalContext::empty(int horizon) {
  CausalContext c;
  c.slots.resize(horizon);
  return c;
}

CausalContext CausalContext::from_points(std::span<const UVPoint> points, int horizon) {
  if (static_cast<int>(points.size()) > horizon) throw ShapeError("causal context longer than the horizon");
  CausalContext c = empty(horizon);
  for (std::size_t i = 0; i < points.size(); ++i) c.slots[i] = {points[i].u, points[i].v, true};
  return c;
}

int CausalContext::valid_count() const {
  return static_cast<int>(std::count_if(slots.begin(), slots.end(), [](const CausalSlot& s) { return s.valid; }));
}

void CausalContext::validate() const {
  bool seen_invalid = false;
  for (const auto& s : slots) {
    if (s.valid && seen_invalid) throw ShapeError("causal context valid slots must form a prefix");
    if (!s.valid) {
      seen_invalid = true;
      if (s.u != 0.0 || s.v != 0.0) throw ShapeError("masked causal slots must hold zeros");
    }
  }
}

std::vector<std::pair<std::string, std::pair<int, int>>> parameter_layout(const NetHyper& h) {
  const int k = h.components;
  const int f = h.feature_width();
  return {
      {"hnet.w1", {h.history_inputs(), h.hnet_width}},
      {"hnet.b1", {1, h.hnet_width}},
      {"hnet.w2", {h.hnet_width, h.hnet_width}},
      {"hnet.b2", {1, h.hnet_width}},
      {"cnet.w1", {h.causal_inputs(), h.cnet_width}},
      {"cnet.b1", {1, h.cnet_width}},
      {"cnet.w2", {h.cnet_width, h.cnet_width}},
      {"cnet.b2", {1, h.cnet_width}},
      {"head_weight.w", {f, k}},
      {"head_weight.b", {1, k}},
      {"head_mean.w", {f, 2 * k}},
      {"head_mean.b", {1, 2 * k}},
      {"head_sigma.w", {f, 2 * k}},
      {"head_sigma.b", {1, 2 * k}},
  };
}

GeneratorParams init_params(std::uint64_t seed, const NetHyper& hyper) {
  hyper.validate();
  RngStream rng(seed, 0x6E6574ULL);
  GeneratorParams p;
  p.hyper = hyper;
  for (const auto& [name, shape] : parameter_layout(hyper)) {
    const auto [rows, cols] = shape;
    const bool is_bias = name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2");
    const bool is_head = name.starts_with("head_");
    Matrix m;
    if (is_bias) {
      m = Matrix::Zero(rows, cols);
      if (name == "head_sigma.b") m.setConstant(initial_sigma_bias());
    } else {
      const double bound = (is_head ? 0.1 : 1.0) / std::sqrt(static_cast<double>(rows));
      m = uniform_matrix(rng, rows, cols, bound);
    }
    p.tensors.emplace_back(name, std::move(m));
  }
  return p;
}

Matrix encode_history(std::span<const RelativePath> history, const NetHyper& hyper) {
  if (static_cast<int>(history.size()) != hyper.history) throw ShapeError("history must hold exactly H relative paths");
  Matrix row(1, hyper.history_inputs());
  int col = 0;
  for (const auto& rel : history) {
    if (static_cast<int>(rel.points.size()) != hyper.history) {
      throw ShapeError("each relative path must hold exactly H points");
    }
    for (const auto& p : rel.points) {
      row(0, col++) = p.u;
      row(0, col++) = p.v;
    }
  }
  return row;
}

Matrix encode_causal(const CausalContext& causal, const NetHyper& hyper) {
  if (static_cast<int>(causal.slots.size()) != hyper.horizon) throw ShapeError("causal context must hold W slots");
  Matrix row = Matrix::Zero(1, hyper.causal_inputs());
  for (int i = 0; i < hyper.horizon; ++i) {
    const auto& s = causal.slots[i];
    if (s.valid) {
      row(0, 3 * i) = s.u;
      row(0, 3 * i + 1) = s.v;
      row(0, 3 * i + 2) = 1.0;
    }
  }
  return row;
}

NetVars bind_params(ad::Tape& tape, const GeneratorParams& params, bool trainable) {
  NetVars vars;
  vars.tensors.reserve(params.tensors.size());
  for (const auto& [name, m] : params.tensors) vars.tensors.push_back(trainable ? tape.variable(m) : tape.constant(m));
  return vars;
}

GmmVars forward(const NetVars& vars, const NetHyper& hyper, const Var& history, const Var& causal) {
  if (vars.tensors.size() != kSlotCount) throw ShapeError("parameter binding has the wrong arity");
  if (history.cols() != hyper.history_inputs() || causal.cols() != hyper.causal_inputs() ||
      history.rows() != causal.rows()) {
    throw ShapeError("forward: input shapes do not match the hyperparameters");
  }
  ad::Tape& tape = *history.tape();
  const Index batch = history.rows();

  // Zero the values of masked slots and rescale the coordinates; mask columns pass through.
  Matrix gate(batch, hyper.causal_inputs());
  for (Index b = 0; b < batch; ++b) {
    for (int i = 0; i < hyper.horizon; ++i) {
      const double m = causal.value()(b, 3 * i + 2) != 0.0 ? 1.0 : 0.0;
      gate(b, 3 * i) = m / hyper.input_scale;
      gate(b, 3 * i + 1) = m / hyper.input_scale;
      gate(b, 3 * i + 2) = 1.0;
    }
  }
  const Var causal_in = ad::hadamard(causal, tape.constant(std::move(gate)));
  const Var hist_in = (1.0 / hyper.input_scale) * history;

  const Var h1 = ad::tanh(dense(hist_in, vars.at(kHnetW1), vars.at(kHnetB1)));
  const Var h2 = ad::tanh(dense(h1, vars.at(kHnetW2), vars.at(kHnetB2)));
  const Var c1 = ad::tanh(dense(causal_in, vars.at(kCnetW1), vars.at(kCnetB1)));
  const Var c2 = ad::tanh(dense(c1, vars.at(kCnetW2), vars.at(kCnetB2)));
  const Var both[] = {h2, c2};
  const Var features = ad::concat_cols(both);

  const double k = hyper.components;
  GmmVars out;
  out.weights = ad::add_scalar((1.0 - k * kWeightFloor) *
                                   ad::softmax_rows(dense(features, vars.at(kHeadWW), vars.at(kHeadWB))),
                               kWeightFloor);
  out.means = hyper.mean_scale * dense(features, vars.at(kHeadMuW), vars.at(kHeadMuB));
  out.sigmas = ad::add_scalar(ad::softplus(dense(features, vars.at(kHeadSigmaW), vars.at(kHeadSigmaB))), kSigmaFloor);
  return out;
}

GmmParams forward(const GeneratorParams& params, std::span<const RelativePath> history, const CausalContext& causal) {
  causal.validate();
  ad::Tape tape;
  const NetVars vars = bind_params(tape, params, false);
  const Var h = tape.constant(encode_history(history, params.hyper));
  const Var c = tape.constant(encode_causal(causal, params.hyper));
  const GmmVars g = forward(vars, params.hyper, h, c);
  return ad::gmm_row(g.weights.value(), g.means.value(), g.sigmas.value(), 0);
}

namespace {

struct BatchTape {
  ad::Tape tape;
  NetVars vars;
  Var loss;
};

void build_loss(BatchTape& bt, const GeneratorParams& params, std::span<const TrainingExample> batch,
                const QuantizerSpec& q, bool trainable) {
  if (batch.empty()) throw ShapeError("empty training batch");
  const auto& h = params.hyper;
  Matrix hist(batch.size(), h.history_inputs());
  Matrix causal(batch.size(), h.causal_inputs());
  std::vector<UVPoint> targets;
  targets.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].history.cols() != h.history_inputs() || batch[i].causal.cols() != h.causal_inputs()) {
      throw ShapeError("training example does not match the hyperparameters");
    }
    hist.row(i) = batch[i].history.row(0);
    causal.row(i) = batch[i].causal.row(0);
    targets.push_back(batch[i].target);
  }
  bt.vars = bind_params(bt.tape, params, trainable);
  const GmmVars g = forward(bt.vars, h, bt.tape.constant(std::move(hist)), bt.tape.constant(std::move(causal)));
  bt.loss = ad::mean(ad::code_length_bits(g.weights, g.means, g.sigmas, targets, q));
}

}  // namespace

LossAndGrad grad_code_length(const GeneratorParams& params, std::span<const TrainingExample> batch,
                             const QuantizerSpec& q) {
  BatchTape bt;
  build_loss(bt, params, batch, q, true);
  bt.tape.backward(bt.loss);
  LossAndGrad out;
  out.loss_bits = bt.loss.scalar();
  out.grads = params.zeros_like();
  for (std::size_t i = 0; i < params.tensors.size(); ++i) out.grads.tensors[i].second = bt.tape.grad(bt.vars.at(i));
  return out;
}

double batch_code_length(const GeneratorParams& params, std::span<const TrainingExample> batch,
                         const QuantizerSpec& q) {
  BatchTape bt;
  build_loss(bt, params, batch, q, false);
  return bt.loss.scalar();
}

void save_checkpoint(const GeneratorParams& params, const std::filesystem::path& path) {
  params.validate();
  TensorFile file;
  const auto& h = params.hyper;
  file.meta = {{"kind", "generator"},
               {"history", h.history},
               {"horizon", h.horizon},
               {"components", h.components},
               {"hnet_width", h.hnet_width},
               {"cnet_width", h.cnet_width},
               {"input_scale", h.input_scale},
               {"mean_scale", h.mean_scale}};
  file.tensors = params.tensors;
  write_tensor_file(path, kGeneratorMagic, file);
}

GeneratorParams load_checkpoint(const std::filesystem::path& path) {
  TensorFile file = read_tensor_file(path, kGeneratorMagic);
  GeneratorParams p;
  try {
    const auto& m = file.meta;
    p.hyper.history = m.at("history").get<int>();
    p.hyper.horizon = m.at("horizon").get<int>();
    p.hyper.components = m.at("components").get<int>();
    p.hyper.hnet_width = m.at("hnet_width").get<int>();
    p.hyper.cnet_width = m.at("cnet_width").get<int>();
    p.hyper.input_scale = m.at("input_scale").get<double>();
    p.hyper.mean_scale = m.at("mean_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw HeaderError(std::string("generator checkpoint lacks hyperparameters: ") + e.what());
  }
  p.tensors = std::move(file.tensors);
  p.validate();
  return p;
}

}  // namespace panoscan
