#pragma once

#include <span>
#include <vector>

#include "claws/autodiff.hpp"
#include "claws/dataset.hpp"

namespace claws {

struct LossConfig {
  double lambda1 = 0.90;
  double lambda2 = 8.0e-5;
  double alpha = 1.0;

  void validate() const;
};

/// Per-term switches used by the ablation configurations. A disabled term
/// contributes zero to the total.
struct LossToggles {
  bool pred = true;
  bool cluster = true;
  bool smoothness_sparsity = true;
};

struct LossParts {
  double pred = 0.0;
  double cluster = 0.0;
  double ts = 0.0;
  double sparsity = 0.0;
};

struct LossBreakdown {
  double pred = 0.0;
  double cluster = 0.0;
  double ts = 0.0;
  double sparsity = 0.0;
  double total = 0.0;
};

/// Lower bound on the abnormal-branch denominator of the clustering loss.
inline constexpr double kClusterDistanceEpsilon = 1e-6;

// Scalar forms. Each *_grad returns the derivative w.r.t. the predictions
// (or w.r.t. the distance for the clustering loss).

double mse_loss(std::span<const double> targets, std::span<const double> predictions);
std::vector<double> mse_loss_grad(std::span<const double> targets,
                                  std::span<const double> predictions);

/// min(α, d) for normal videos, 1/max(d, ε) for abnormal ones.
double clustering_loss(double distance, Label label, double alpha);
double clustering_loss_grad(double distance, Label label, double alpha);

double temporal_smoothness(std::span<const double> predictions);
std::vector<double> temporal_smoothness_grad(std::span<const double> predictions);

double sparsity(std::span<const double> predictions);
std::vector<double> sparsity_grad(std::span<const double> predictions);

/// λ₁·pred + (1−λ₁)·cluster + λ₂·(sparsity + ts), with disabled terms zeroed
/// in the breakdown as well as in the total.
LossBreakdown total_loss(const LossParts& parts, const LossConfig& cfg,
                         const LossToggles& toggles = {});

// Tape forms over an n×1 prediction column; each returns a 1×1 Var.

Var mse_loss(Tape& tape, Var predictions, std::span<const double> targets);
Var clustering_loss(Tape& tape, Var distance, Label label, double alpha);
Var temporal_smoothness(Tape& tape, Var predictions);
Var sparsity(Tape& tape, Var predictions);

}  // namespace claws
