#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "claws/clustering.hpp"
#include "claws/dataset.hpp"
#include "claws/losses.hpp"
#include "claws/model.hpp"

namespace claws {

struct RmsPropConfig {
  double rho = 0.99;
  double eps = 1e-8;
};

/// Running mean of squared gradients, laid out like the parameters.
struct OptState {
  ClawsParams square_avg;
  std::uint64_t iteration = 0;

  static OptState zeros(const ModelDims& dims) { return {ClawsParams::zeros(dims), 0}; }
  friend bool operator==(const OptState&, const OptState&) = default;
};

/// Non-centered RMSProp without momentum:
///   v ← ρ·v + (1−ρ)·g²;  θ ← θ − lr·g / (√v + ε)
/// Increments state.iteration. Throws NonFiniteError naming the tensor if a
/// gradient contains NaN or infinity; nothing is updated in that case.
void rmsprop_step(ClawsParams& params, const ClawsParams& grads, OptState& state, double lr,
                  const RmsPropConfig& cfg = {});

/// How the clustering term reaches the gradient.
enum class ClusterMode {
  /// Assignments frozen per epoch; center distance recomputed from the
  /// current batch rows, so the term is differentiable.
  frozen_assignment,
  /// The epoch-start distance is used as a constant; the term is reported
  /// but carries no gradient.
  frozen_scalar,
};

struct TrainToggles {
  bool rbs = true;
  bool nsm1 = true;
  bool nsm2 = true;
  bool loss_ts_s = true;
  bool loss_c = true;
};

struct TrainConfig {
  std::uint64_t total_iters = 100000;
  double lr = 1e-4;
  std::uint64_t lr_drop_at = 80000;
  double lr_drop_factor = 0.1;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  RmsPropConfig rmsprop;
  TrainToggles toggles;
  LossConfig loss;
  double dropout_rate = 0.6;
  ModelDims dims;
  bool gate_after_relu = false;
  ClusterMode cluster_mode = ClusterMode::frozen_assignment;
  /// Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 0.0;
  std::uint64_t log_every = 100;
  /// Periodic checkpoint interval; 0 checkpoints only at the end.
  std::uint64_t checkpoint_every = 0;

  void validate() const;
  /// Model settings implied by the toggles, in the given mode.
  ModelConfig model_config(Mode mode) const;
  LossToggles loss_toggles() const;
};

double lr_at(std::uint64_t iteration, const TrainConfig& cfg);

/// Loss of one forward pass, recorded on the trace's tape.
struct StepLoss {
  Var total;
  LossBreakdown breakdown;
  /// False when the clustering term was skipped (disabled, degenerate video,
  /// or only one cluster present in the batch).
  bool cluster_applied = false;
};

StepLoss build_step_loss(ForwardTrace& trace, const Batch& batch, const ClusterState* cluster,
                         const LossConfig& loss, const LossToggles& toggles,
                         ClusterMode mode = ClusterMode::frozen_assignment);

/// One metrics log row; loss terms are averaged over the iterations since
/// the previous row.
struct MetricsRow {
  std::uint64_t iteration = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct ClusterLogRow {
  std::string video_id;
  std::uint64_t epoch = 0;
  double distance = 0.0;
  bool degenerate = false;
};

struct Checkpoint {
  ClawsParams params;
  OptState opt;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct TrainHooks {
  std::function<void(const MetricsRow&)> on_metrics;
  /// Called at every periodic checkpoint, at the end, and before aborting on a
  /// non-finite loss.
  std::function<void(const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
  Checkpoint final;
  std::vector<MetricsRow> metrics;
  std::vector<ClusterLogRow> cluster_log;
  /// Batches per epoch.
  std::size_t batches_per_epoch = 0;
};

/// Trains on already-normalized videos. Fully determined by (videos, cfg);
/// `resume` continues from a checkpoint's parameters, optimizer state and
/// iteration counter.
TrainResult train(std::span<const VideoFeatures> videos, const TrainConfig& cfg,
                  const TrainHooks& hooks = {}, std::optional<Checkpoint> resume = std::nullopt);

}  // namespace claws
