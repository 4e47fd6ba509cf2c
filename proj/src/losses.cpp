#include "claws/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "claws/errors.hpp"

namespace claws {

void LossConfig::validate() const {
  if (!(lambda1 >= 0.0 && lambda1 <= 1.0)) throw ConfigError("lambda1 must lie in [0, 1]");
  if (!(lambda2 >= 0.0)) throw ConfigError("lambda2 must be non-negative");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
}

double mse_loss(std::span<const double> targets, std::span<const double> predictions) {
  if (targets.size() != predictions.size()) {
    throw DimensionError("mse_loss: " + std::to_string(targets.size()) + " targets vs " +
                         std::to_string(predictions.size()) + " predictions");
  }
  if (targets.empty()) throw DimensionError("mse_loss: empty input");
  double acc = 0.0;
  for (std::size_t l = 0; l < targets.size(); ++l) {
    const double e = targets[l] - predictions[l];
    acc += e * e;
  }
  return acc / static_cast<double>(targets.size());
}

std::vector<double> mse_loss_grad(std::span<const double> targets,
                                  std::span<const double> predictions) {
  if (targets.size() != predictions.size()) throw DimensionError("mse_loss_grad: length mismatch");
  std::vector<double> g(targets.size());
  const double scale = 2.0 / static_cast<double>(targets.size());
  for (std::size_t l = 0; l < g.size(); ++l) g[l] = scale * (predictions[l] - targets[l]);
  return g;
}

double clustering_loss(double distance, Label label, double alpha) {
  if (!(distance >= 0.0)) {
    throw DomainError("clustering distance must be non-negative, got " + std::to_string(distance));
  }
  if (label == Label::normal) return std::min(alpha, distance);
  return 1.0 / std::max(distance, kClusterDistanceEpsilon);
}

double clustering_loss_grad(double distance, Label label, double alpha) {
  if (!(distance >= 0.0)) throw DomainError("clustering distance must be non-negative");
  if (label == Label::normal) return distance < alpha ? 1.0 : 0.0;
  if (distance < kClusterDistanceEpsilon) return 0.0;
  return -1.0 / (distance * distance);
}

double temporal_smoothness(std::span<const double> predictions) {
  if (predictions.size() < 2) throw UsageError("temporal_smoothness needs at least 2 predictions");
  double acc = 0.0;
  for (std::size_t l = 0; l + 1 < predictions.size(); ++l) {
    const double diff = predictions[l + 1] - predictions[l];
    acc += diff * diff;
  }
  return acc;
}

std::vector<double> temporal_smoothness_grad(std::span<const double> predictions) {
  if (predictions.size() < 2) throw UsageError("temporal_smoothness needs at least 2 predictions");
  std::vector<double> g(predictions.size(), 0.0);
  for (std::size_t l = 0; l + 1 < predictions.size(); ++l) {
    const double diff = predictions[l + 1] - predictions[l];
    g[l + 1] += 2.0 * diff;
    g[l] -= 2.0 * diff;
  }
  return g;
}

double sparsity(std::span<const double> predictions) {
  double acc = 0.0;
  for (double p : predictions) acc += p;
  return acc;
}

std::vector<double> sparsity_grad(std::span<const double> predictions) {
  return std::vector<double>(predictions.size(), 1.0);
}

LossBreakdown total_loss(const LossParts& parts, const LossConfig& cfg, const LossToggles& toggles) {
  LossBreakdown out;
  out.pred = toggles.pred ? parts.pred : 0.0;
  out.cluster = toggles.cluster ? parts.cluster : 0.0;
  out.ts = toggles.smoothness_sparsity ? parts.ts : 0.0;
  out.sparsity = toggles.smoothness_sparsity ? parts.sparsity : 0.0;
  out.total = cfg.lambda1 * out.pred + (1.0 - cfg.lambda1) * out.cluster +
              cfg.lambda2 * (out.sparsity + out.ts);
  return out;
}

namespace {

std::span<const double> column_values(const Tape& tape, Var v, const char* what) {
  const Matrix& m = tape.value(v);
  if (m.cols() != 1) {
    throw DimensionError(std::string(what) + ": expected an n×1 column, got " + shape_string(m));
  }
  return m.values();
}

void add_into(Tape& t, Var v, std::span<const double> upstream_times, double scale) {
  if (Matrix* g = t.grad_slot(v)) {
    for (std::size_t i = 0; i < upstream_times.size(); ++i) g->values()[i] += scale * upstream_times[i];
  }
}

}  // namespace

Var mse_loss(Tape& tape, Var predictions, std::span<const double> targets) {
  const auto y = column_values(tape, predictions, "mse_loss");
  const double value = mse_loss(targets, y);
  std::vector<double> t(targets.begin(), targets.end());
  return tape.custom(Matrix(1, 1, value), {predictions},
                     [predictions, t = std::move(t)](Tape& tp, const Matrix& g) {
                       const auto grad = mse_loss_grad(t, tp.value(predictions).values());
                       add_into(tp, predictions, grad, g(0, 0));
                     });
}

Var clustering_loss(Tape& tape, Var distance, Label label, double alpha) {
  const Matrix& d = tape.value(distance);
  if (d.rows() != 1 || d.cols() != 1) throw DimensionError("clustering_loss: distance must be 1x1");
  const double dv = d(0, 0);
  return tape.custom(Matrix(1, 1, clustering_loss(dv, label, alpha)), {distance},
                     [distance, dv, label, alpha](Tape& tp, const Matrix& g) {
                       if (Matrix* gd = tp.grad_slot(distance)) {
                         (*gd)(0, 0) += g(0, 0) * clustering_loss_grad(dv, label, alpha);
                       }
                     });
}

Var temporal_smoothness(Tape& tape, Var predictions) {
  const auto y = column_values(tape, predictions, "temporal_smoothness");
  return tape.custom(Matrix(1, 1, temporal_smoothness(y)), {predictions},
                     [predictions](Tape& tp, const Matrix& g) {
                       const auto grad = temporal_smoothness_grad(tp.value(predictions).values());
                       add_into(tp, predictions, grad, g(0, 0));
                     });
}

Var sparsity(Tape& tape, Var predictions) {
  column_values(tape, predictions, "sparsity");
  return tape.sum(predictions);
}

}  // namespace claws
