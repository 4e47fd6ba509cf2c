#pragma once

// Reverse-mode differentiation over a linear tape, restricted to the dense
// operations the scorer network and its losses need.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "claws/matrix.hpp"
#include "claws/rng.hpp"

namespace claws {

/// Handle to a value recorded on a Tape. Only meaningful for the tape that
/// issued it.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

enum class Mode { train, eval };

/// Records operations in execution order and replays their adjoints in
/// reverse. A tape supports exactly one backward() call; a second call
/// throws UsageError. Build a fresh tape for every step.
class Tape {
 public:
  /// Adjoint callback of a recorded op. `out_grad` is the gradient flowing
  /// into the op's output; the callback adds into its inputs via grad_slot().
  using Backprop = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Constant leaf; never receives a gradient.
  Var constant(Matrix value);
  /// Trainable leaf that copies its value.
  Var parameter(Matrix value);
  /// Trainable leaf that borrows `value`; it must outlive the tape.
  Var parameter_ref(const Matrix& value);

  // x[b×p]·W[p×q] + bias[1×q]
  Var affine(Var x, Var weight, Var bias);
  Var relu(Var x);
  /// Inverted dropout. Eval mode and rate 0 return `x` itself.
  Var dropout(Var x, double rate, Mode mode, Rng& rng);
  Var sigmoid(Var x);
  /// Softmax down each column (over rows), with per-column max subtraction.
  Var column_softmax(Var x);
  Var hadamard(Var a, Var b);
  /// Sum of all elements as a 1×1 value.
  Var sum(Var x);
  /// Σ coeff·term over 1×1 terms.
  Var linear_combination(std::span<const std::pair<double, Var>> terms);
  Var linear_combination(std::initializer_list<std::pair<double, Var>> terms) {
    return linear_combination(std::span<const std::pair<double, Var>>(terms.begin(), terms.size()));
  }

  /// Records an op whose forward value was computed by the caller.
  Var custom(Matrix value, std::initializer_list<Var> inputs, Backprop backprop);

  const Matrix& value(Var v) const;
  /// Gradient accumulated by backward(). Zero-sized for nodes that do not
  /// require gradients.
  const Matrix& grad(Var v) const;
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient accumulator of `v` during backward, or nullptr if `v` does not
  /// take part in differentiation.
  Matrix* grad_slot(Var v);

  /// Seeds d(loss)/d(loss) = seed and propagates adjoints to every node.
  /// `loss` must be 1×1.
  void backward(Var loss, double seed = 1.0);
  bool backward_done() const { return backward_done_; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix owned;
    const Matrix* borrowed = nullptr;
    Matrix grad;
    bool requires_grad = false;
    Backprop backprop;

    const Matrix& value() const { return borrowed ? *borrowed : owned; }
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push(Matrix value, bool requires_grad, Backprop backprop);
  bool any_requires_grad(std::initializer_list<Var> inputs) const;

  std::deque<Node> nodes_;  // stable references across push_back
  bool backward_done_ = false;
};

}  // namespace claws
