#include "claws/trainer.hpp"

#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "claws/errors.hpp"
#include "claws/rng.hpp"

namespace claws {

namespace {

double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

void rmsprop_step(ClawsParams& params, const ClawsParams& grads, OptState& state, double lr,
                  const RmsPropConfig& cfg) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto v = state.square_avg.tensors();
  for (std::size_t t = 0; t < ClawsParams::kTensorCount; ++t) {
    require_same_shape(*p[t], *g[t], "rmsprop_step");
    require_same_shape(*p[t], *v[t], "rmsprop_step");
    if (!g[t]->all_finite()) {
      std::ostringstream msg;
      msg << "non-finite gradient at iteration " << state.iteration << " in "
          << ClawsParams::kNames[t] << " (norm " << l2_norm(g[t]->values()) << ")";
      throw NonFiniteError(msg.str());
    }
  }
  for (std::size_t t = 0; t < ClawsParams::kTensorCount; ++t) {
    auto theta = p[t]->values();
    const auto grad = g[t]->values();
    auto avg = v[t]->values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      avg[i] = cfg.rho * avg[i] + (1.0 - cfg.rho) * grad[i] * grad[i];
      theta[i] -= lr * grad[i] / (std::sqrt(avg[i]) + cfg.eps);
    }
  }
  ++state.iteration;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lr_drop_factor > 0.0 && lr_drop_factor <= 1.0)) {
    throw ConfigError("lr drop factor must lie in (0, 1]");
  }
  if (lr_drop_at > total_iters) {
    throw ConfigError("lr drop iteration " + std::to_string(lr_drop_at) +
                      " exceeds total iterations " + std::to_string(total_iters));
  }
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  if (!(rmsprop.rho >= 0.0 && rmsprop.rho < 1.0)) throw ConfigError("rmsprop rho must lie in [0, 1)");
  if (!(rmsprop.eps > 0.0)) throw ConfigError("rmsprop eps must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip norm must be non-negative");
  if (log_every == 0) throw ConfigError("log interval must be positive");
  loss.validate();
  model_config(Mode::train).validate();
}

ModelConfig TrainConfig::model_config(Mode mode) const {
  ModelConfig m;
  m.use_nsm1 = toggles.nsm1;
  m.use_nsm2 = toggles.nsm2;
  m.dropout_rate = dropout_rate;
  m.mode = mode;
  m.gate_after_relu = gate_after_relu;
  return m;
}

LossToggles TrainConfig::loss_toggles() const {
  return {true, toggles.loss_c, toggles.loss_ts_s};
}

double lr_at(std::uint64_t iteration, const TrainConfig& cfg) {
  return iteration < cfg.lr_drop_at ? cfg.lr : cfg.lr * cfg.lr_drop_factor;
}

StepLoss build_step_loss(ForwardTrace& trace, const Batch& batch, const ClusterState* cluster,
                         const LossConfig& loss, const LossToggles& toggles, ClusterMode mode) {
  Tape& t = trace.tape;
  const std::vector<double> targets(batch.size(), label_value(batch.label));
  StepLoss out;
  LossParts parts;
  std::vector<std::pair<double, Var>> terms;

  if (toggles.pred) {
    const Var pred = mse_loss(t, trace.scores, targets);
    parts.pred = t.value(pred)(0, 0);
    terms.emplace_back(loss.lambda1, pred);
  }
  if (toggles.smoothness_sparsity) {
    const Var ts = temporal_smoothness(t, trace.scores);
    const Var sp = sparsity(t, trace.scores);
    parts.ts = t.value(ts)(0, 0);
    parts.sparsity = t.value(sp)(0, 0);
    terms.emplace_back(loss.lambda2, ts);
    terms.emplace_back(loss.lambda2, sp);
  }
  if (toggles.cluster && cluster != nullptr && !cluster->degenerate) {
    std::optional<Var> lc;
    if (mode == ClusterMode::frozen_assignment) {
      if (batch.segment_offset + batch.size() > cluster->assignments.size()) {
        throw DimensionError("cluster assignments do not cover batch of \"" + batch.video_id + "\"");
      }
      const std::span<const std::uint8_t> slice(
          cluster->assignments.data() + batch.segment_offset, batch.size());
      if (auto d = batch_cluster_distance(t, trace.r1, slice, batch.video_segments)) {
        lc = clustering_loss(t, *d, batch.label, loss.alpha);
      }
    } else {
      lc = t.constant(Matrix(1, 1, clustering_loss(cluster->distance, batch.label, loss.alpha)));
    }
    if (lc) {
      parts.cluster = t.value(*lc)(0, 0);
      terms.emplace_back(1.0 - loss.lambda1, *lc);
      out.cluster_applied = true;
    }
  }
  out.breakdown = total_loss(parts, loss, toggles);
  out.total = t.linear_combination(terms);
  return out;
}

namespace {

void clip_gradients(ClawsParams& grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix* g : std::as_const(grads).tensors())
    for (double v : g->values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (Matrix* g : grads.tensors())
    for (double& v : g->values()) v *= scale;
}

struct MetricsWindow {
  LossBreakdown sum;
  std::uint64_t count = 0;

  void add(const LossBreakdown& b) {
    sum.pred += b.pred;
    sum.cluster += b.cluster;
    sum.ts += b.ts;
    sum.sparsity += b.sparsity;
    sum.total += b.total;
    ++count;
  }
  LossBreakdown mean() const {
    const double n = static_cast<double>(count);
    return {sum.pred / n, sum.cluster / n, sum.ts / n, sum.sparsity / n, sum.total / n};
  }
};

}  // namespace

TrainResult train(std::span<const VideoFeatures> videos, const TrainConfig& cfg,
                  const TrainHooks& hooks, std::optional<Checkpoint> resume) {
  cfg.validate();
  TrainResult result;
  Checkpoint& state = result.final;
  if (resume) {
    resume->params.validate();
    if (resume->params.dims() != cfg.dims) {
      throw DimensionError("resume checkpoint dimensions do not match the configuration");
    }
    state = std::move(*resume);
  } else {
    state.params = init_params(cfg.seed, cfg.dims);
    state.opt = OptState::zeros(cfg.dims);
  }
  if (state.opt.iteration >= cfg.total_iters) {
    if (hooks.on_checkpoint) hooks.on_checkpoint(state);
    return result;
  }

  bool has_normal = false, has_abnormal = false;
  std::vector<Batch> batches;
  for (const auto& v : videos) {
    if (v.dim() != cfg.dims.d) {
      throw DimensionError("video \"" + v.video_id + "\" has dimension " + std::to_string(v.dim()) +
                           ", model expects " + std::to_string(cfg.dims.d));
    }
    (v.label == Label::abnormal ? has_abnormal : has_normal) = true;
    auto vb = segment_batches(v, cfg.batch_size);
    std::move(vb.begin(), vb.end(), std::back_inserter(batches));
  }
  if (batches.empty()) throw ConfigError("training set yields no batches");
  if (!(has_normal && has_abnormal)) {
    std::cerr << "warning: training set contains only one class\n";
  }
  const std::size_t K = batches.size();
  result.batches_per_epoch = K;

  const ModelConfig model_cfg = cfg.model_config(Mode::train);
  const LossToggles loss_toggles = cfg.loss_toggles();
  std::vector<std::size_t> order;
  ClusterStates clusters;
  MetricsWindow window;
  bool first = true;

  for (std::uint64_t it = state.opt.iteration; it < cfg.total_iters; ++it) {
    const std::uint64_t epoch = it / K;
    const std::size_t pos = static_cast<std::size_t>(it % K);
    if (pos == 0 || first) {
      if (cfg.toggles.rbs) {
        order = make_epoch_order(K, epoch, cfg.seed);
      } else {
        order.resize(K);
        std::iota(order.begin(), order.end(), std::size_t{0});
      }
      if (cfg.toggles.loss_c) {
        clusters = epoch_refresh(videos, state.params, cfg.model_config(Mode::eval), cfg.seed,
                                 epoch, cfg.batch_size);
        for (const auto& [id, cs] : clusters) {
          result.cluster_log.push_back({id, epoch, cs.distance, cs.degenerate});
        }
      }
      first = false;
    }

    const Batch& batch = batches[order[pos]];
    const ClusterState* cluster = nullptr;
    if (cfg.toggles.loss_c) cluster = &clusters.at(batch.video_id);

    Rng dropout_rng = make_rng(cfg.seed, RngStream::dropout, {it});
    ClawsParams grads;
    LossBreakdown breakdown;
    {
      ForwardTrace trace = forward(batch.features, state.params, model_cfg, dropout_rng);
      const StepLoss loss =
          build_step_loss(trace, batch, cluster, cfg.loss, loss_toggles, cfg.cluster_mode);
      breakdown = loss.breakdown;
      if (!std::isfinite(breakdown.total)) {
        if (hooks.on_checkpoint) hooks.on_checkpoint(state);
        throw NonFiniteError("non-finite loss at iteration " + std::to_string(it) +
                             " on video \"" + batch.video_id + "\"");
      }
      trace.tape.backward(loss.total);
      grads = trace.gradients();
    }
    if (cfg.clip_norm > 0.0) clip_gradients(grads, cfg.clip_norm);
    const double lr = lr_at(it, cfg);
    try {
      rmsprop_step(state.params, grads, state.opt, lr, cfg.rmsprop);
    } catch (const NonFiniteError&) {
      if (hooks.on_checkpoint) hooks.on_checkpoint(state);
      throw;
    }

    window.add(breakdown);
    const std::uint64_t done = it + 1;
    if (done % cfg.log_every == 0) {
      MetricsRow row{done, lr, window.mean()};
      result.metrics.push_back(row);
      if (hooks.on_metrics) hooks.on_metrics(row);
      window = {};
    }
    if (cfg.checkpoint_every != 0 && done % cfg.checkpoint_every == 0 && done != cfg.total_iters &&
        hooks.on_checkpoint) {
      hooks.on_checkpoint(state);
    }
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(state);
  return result;
}

}  // namespace claws
