#include "claws/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "claws/errors.hpp"

namespace claws {

ClawsParams ClawsParams::zeros(const ModelDims& dims) {
  if (dims.d == 0 || dims.z1 == 0 || dims.z2 == 0) {
    throw DimensionError("model dimensions must be positive");
  }
  ClawsParams p;
  p.W1 = Matrix(dims.d, dims.z1);
  p.b1 = Matrix(1, dims.z1);
  p.Wn1 = Matrix(dims.d, dims.z1);
  p.bn1 = Matrix(1, dims.z1);
  p.W2 = Matrix(dims.z1, dims.z2);
  p.b2 = Matrix(1, dims.z2);
  p.Wn2 = Matrix(dims.z1, dims.z2);
  p.bn2 = Matrix(1, dims.z2);
  p.W3 = Matrix(dims.z2, 1);
  p.b3 = Matrix(1, 1);
  return p;
}

std::array<Matrix*, ClawsParams::kTensorCount> ClawsParams::tensors() {
  return {&W1, &b1, &Wn1, &bn1, &W2, &b2, &Wn2, &bn2, &W3, &b3};
}

std::array<const Matrix*, ClawsParams::kTensorCount> ClawsParams::tensors() const {
  return {&W1, &b1, &Wn1, &bn1, &W2, &b2, &Wn2, &bn2, &W3, &b3};
}

std::size_t ClawsParams::scalar_count() const {
  std::size_t n = 0;
  for (const Matrix* t : tensors()) n += t->size();
  return n;
}

bool ClawsParams::all_finite() const {
  return std::all_of(tensors().begin(), tensors().end(),
                     [](const Matrix* t) { return t->all_finite(); });
}

void ClawsParams::validate() const {
  const ClawsParams expected = zeros(dims());
  const auto mine = tensors();
  const auto ref = expected.tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    if (!mine[i]->same_shape(*ref[i])) {
      throw DimensionError("parameter " + std::string(kNames[i]) + " is " +
                           shape_string(*mine[i]) + ", expected " + shape_string(*ref[i]));
    }
  }
}

void ModelConfig::validate() const {
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(dropout_rate));
  }
}

ClawsParams init_params(std::uint64_t seed, const ModelDims& dims) {
  ClawsParams p = ClawsParams::zeros(dims);
  Rng rng = make_rng(seed, RngStream::init);
  for (Matrix* w : {&p.W1, &p.Wn1, &p.W2, &p.Wn2, &p.W3}) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w->rows() + w->cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& v : w->values()) v = u(rng);
  }
  return p;
}

std::vector<double> ForwardTrace::score_values() const {
  const auto v = tape.value(scores).values();
  return {v.begin(), v.end()};
}

ClawsParams ForwardTrace::gradients() const {
  if (!tape.backward_done()) throw UsageError("gradients() requires a completed backward()");
  ClawsParams g;
  auto out = g.tensors();
  for (std::size_t i = 0; i < ClawsParams::kTensorCount; ++i) *out[i] = tape.grad(params.vars[i]);
  return g;
}

namespace {

// One FC module with its paired suppression module: returns (P, pre-dropout
// activation).
std::pair<Var, Var> gated_module(Tape& t, Var in, Var w, Var b, Var wn, Var bn, bool use_nsm,
                                 bool gate_after_relu) {
  const Var h = t.affine(in, w, b);
  Var p;
  if (use_nsm) {
    p = t.column_softmax(t.affine(in, wn, bn));
  } else {
    const Matrix& hv = t.value(h);
    p = t.constant(Matrix(hv.rows(), hv.cols(), 1.0));
  }
  const Var act = gate_after_relu ? t.hadamard(p, t.relu(h)) : t.relu(t.hadamard(p, h));
  return {p, act};
}

}  // namespace

ForwardTrace forward(const Matrix& features, const ClawsParams& params, const ModelConfig& cfg,
                     Rng& rng) {
  cfg.validate();
  if (features.cols() != params.W1.rows()) {
    throw DimensionError("forward: batch width " + std::to_string(features.cols()) +
                         " does not match model input " + std::to_string(params.W1.rows()));
  }
  if (features.rows() == 0) throw DimensionError("forward: empty batch");

  ForwardTrace tr;
  Tape& t = tr.tape;
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < ClawsParams::kTensorCount; ++i) {
    tr.params.vars[i] = t.parameter_ref(*tensors[i]);
  }
  const auto& pv = tr.params.vars;
  tr.input = t.constant(features);

  auto [p1, g1] = gated_module(t, tr.input, pv[0], pv[1], pv[2], pv[3], cfg.use_nsm1,
                               cfg.gate_after_relu);
  tr.p1 = p1;
  tr.r1 = g1;
  const Var a1 = t.dropout(g1, cfg.dropout_rate, cfg.mode, rng);

  auto [p2, g2] = gated_module(t, a1, pv[4], pv[5], pv[6], pv[7], cfg.use_nsm2,
                               cfg.gate_after_relu);
  tr.p2 = p2;
  const Var a2 = t.dropout(g2, cfg.dropout_rate, cfg.mode, rng);

  tr.logits = t.affine(a2, pv[8], pv[9]);
  tr.scores = t.sigmoid(tr.logits);
  return tr;
}

namespace {

template <typename Fn>
void for_each_window(const VideoFeatures& video, std::size_t batch_size, Fn&& fn) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  const std::size_t m = video.num_segments();
  for (std::size_t offset = 0; offset < m; offset += batch_size) {
    fn(video.segments.slice_rows(offset, std::min(batch_size, m - offset)));
  }
}

}  // namespace

Matrix intermediate_representation(const VideoFeatures& video, const ClawsParams& params,
                                   const ModelConfig& cfg, std::size_t batch_size) {
  ModelConfig eval_cfg = cfg;
  eval_cfg.mode = Mode::eval;
  Rng unused(0);
  std::vector<Matrix> parts;
  for_each_window(video, batch_size, [&](const Matrix& window) {
    parts.push_back(forward(window, params, eval_cfg, unused).R1());
  });
  return vstack(parts);
}

std::vector<double> score_segments(const VideoFeatures& video, const ClawsParams& params,
                                   const ModelConfig& cfg, std::size_t batch_size) {
  ModelConfig eval_cfg = cfg;
  eval_cfg.mode = Mode::eval;
  Rng unused(0);
  std::vector<double> scores;
  scores.reserve(video.num_segments());
  for_each_window(video, batch_size, [&](const Matrix& window) {
    const auto s = forward(window, params, eval_cfg, unused).score_values();
    scores.insert(scores.end(), s.begin(), s.end());
  });
  return scores;
}

}  // namespace claws
