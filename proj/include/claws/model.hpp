#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "claws/autodiff.hpp"
#include "claws/dataset.hpp"
#include "claws/matrix.hpp"
#include "claws/rng.hpp"

namespace claws {

struct ModelDims {
  std::size_t d = 2048;
  std::size_t z1 = 512;
  std::size_t z2 = 32;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Learnable weights of both FC modules, both normalcy suppression modules
/// and the scoring head. Biases are 1×n rows.
struct ClawsParams {
  Matrix W1, b1;    // FC module 1: d → z1
  Matrix Wn1, bn1;  // NSM-1:       d → z1
  Matrix W2, b2;    // FC module 2: z1 → z2
  Matrix Wn2, bn2;  // NSM-2:       z1 → z2
  Matrix W3, b3;    // head:        z2 → 1

  static constexpr std::size_t kTensorCount = 10;
  static constexpr std::array<std::string_view, kTensorCount> kNames = {
      "W1", "b1", "Wn1", "bn1", "W2", "b2", "Wn2", "bn2", "W3", "b3"};

  /// Zero-valued parameters of the given dimensions.
  static ClawsParams zeros(const ModelDims& dims);

  /// Tensors in serialization order (the order of kNames).
  std::array<Matrix*, kTensorCount> tensors();
  std::array<const Matrix*, kTensorCount> tensors() const;

  ModelDims dims() const { return {W1.rows(), W1.cols(), W2.cols()}; }
  std::size_t scalar_count() const;
  bool all_finite() const;
  /// Throws DimensionError unless every tensor matches dims().
  void validate() const;

  friend bool operator==(const ClawsParams&, const ClawsParams&) = default;
};

struct ModelConfig {
  bool use_nsm1 = true;
  bool use_nsm2 = true;
  double dropout_rate = 0.6;
  Mode mode = Mode::train;
  /// Gate after the ReLU instead of gating the linear FC output.
  bool gate_after_relu = false;

  void validate() const;
};

/// Fan-balanced uniform initialization, U(±√(6/(fan_in+fan_out))), zero
/// biases. Deterministic in `seed`.
ClawsParams init_params(std::uint64_t seed, const ModelDims& dims);

/// Leaf variables of one forward pass's parameters.
struct ParamVars {
  std::array<Var, ClawsParams::kTensorCount> vars;
};

struct ForwardTrace {
  Tape tape;
  ParamVars params;
  Var input;
  Var p1;      // b×z1 suppression probabilities (all ones when NSM-1 is off)
  Var p2;      // b×z2
  Var r1;      // NSM-1-gated, ReLU-activated FC module 1 output before dropout
  Var logits;  // b×1 pre-sigmoid
  Var scores;  // b×1 in (0,1)

  const Matrix& P1() const { return tape.value(p1); }
  const Matrix& P2() const { return tape.value(p2); }
  const Matrix& R1() const { return tape.value(r1); }
  std::vector<double> score_values() const;
  /// Gradient of the recorded backward pass for each tensor, in kNames order.
  ClawsParams gradients() const;
};

/// Runs the scorer on `features` (b×d, b ≥ 1). `params` are borrowed by the
/// returned tape and must stay alive and unmodified while it is used.
ForwardTrace forward(const Matrix& features, const ClawsParams& params, const ModelConfig& cfg,
                     Rng& rng);

/// Eval-mode R1 rows for every segment of `video`, computed window by window
/// (windows of `batch_size`, any tail length) and concatenated in order.
Matrix intermediate_representation(const VideoFeatures& video, const ClawsParams& params,
                                   const ModelConfig& cfg, std::size_t batch_size = 64);

/// Eval-mode segment scores for a whole video, window by window.
std::vector<double> score_segments(const VideoFeatures& video, const ClawsParams& params,
                                   const ModelConfig& cfg, std::size_t batch_size = 64);

}  // namespace claws
