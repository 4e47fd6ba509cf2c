#include "claws/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "claws/errors.hpp"

namespace claws {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw UsageError("Var does not belong to this tape");
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw UsageError("Var does not belong to this tape");
  return nodes_[v.id];
}

Var Tape::push(Matrix value, bool requires_grad, Backprop backprop) {
  if (backward_done_) throw UsageError("cannot record operations after backward()");
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

bool Tape::any_requires_grad(std::initializer_list<Var> inputs) const {
  return std::any_of(inputs.begin(), inputs.end(),
                     [this](Var v) { return node(v).requires_grad; });
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::parameter_ref(const Matrix& value) {
  Var v = push(Matrix{}, true, nullptr);
  nodes_[v.id].borrowed = &value;
  return v;
}

const Matrix& Tape::value(Var v) const { return node(v).value(); }

const Matrix& Tape::grad(Var v) const { return node(v).grad; }

Matrix* Tape::grad_slot(Var v) {
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  return &n.grad;
}

Var Tape::affine(Var x, Var weight, Var bias) {
  const Matrix& X = value(x);
  const Matrix& W = value(weight);
  const Matrix& B = value(bias);
  if (X.cols() != W.rows()) {
    throw DimensionError("affine: input " + shape_string(X) + " vs weight " + shape_string(W));
  }
  if (B.rows() != 1 || B.cols() != W.cols()) {
    throw DimensionError("affine: bias " + shape_string(B) + " vs weight " + shape_string(W));
  }
  const std::size_t n = X.rows(), p = X.cols(), q = W.cols();
  Matrix out(n, q);
  for (std::size_t i = 0; i < n; ++i) {
    auto out_row = out.row(i);
    std::copy(B.values().begin(), B.values().end(), out_row.begin());
    for (std::size_t k = 0; k < p; ++k) {
      const double xik = X(i, k);
      if (xik == 0.0) continue;
      auto w_row = W.row(k);
      for (std::size_t j = 0; j < q; ++j) out_row[j] += xik * w_row[j];
    }
  }
  return push(std::move(out), any_requires_grad({x, weight, bias}),
              [x, weight, bias, n, p, q](Tape& t, const Matrix& g) {
                const Matrix& X = t.value(x);
                const Matrix& W = t.value(weight);
                if (Matrix* gx = t.grad_slot(x)) {
                  // dX = G·Wᵀ
                  for (std::size_t i = 0; i < n; ++i) {
                    auto g_row = g.row(i);
                    for (std::size_t k = 0; k < p; ++k) {
                      auto w_row = W.row(k);
                      double acc = 0.0;
                      for (std::size_t j = 0; j < q; ++j) acc += g_row[j] * w_row[j];
                      (*gx)(i, k) += acc;
                    }
                  }
                }
                if (Matrix* gw = t.grad_slot(weight)) {
                  // dW = Xᵀ·G
                  for (std::size_t i = 0; i < n; ++i) {
                    auto g_row = g.row(i);
                    for (std::size_t k = 0; k < p; ++k) {
                      const double xik = X(i, k);
                      if (xik == 0.0) continue;
                      auto gw_row = gw->row(k);
                      for (std::size_t j = 0; j < q; ++j) gw_row[j] += xik * g_row[j];
                    }
                  }
                }
                if (Matrix* gb = t.grad_slot(bias)) {
                  for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < q; ++j) (*gb)(0, j) += g(i, j);
                  }
                }
              });
}

Var Tape::relu(Var x) {
  Matrix out = value(x);
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return push(std::move(out), any_requires_grad({x}), [x](Tape& t, const Matrix& g) {
    Matrix* gx = t.grad_slot(x);
    const auto in = t.value(x).values();
    auto dst = gx->values();
    const auto up = g.values();
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] > 0.0) dst[i] += up[i];
    }
  });
}

Var Tape::dropout(Var x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::eval || rate == 0.0) return x;
  const Matrix& X = value(x);
  Matrix mask(X.rows(), X.cols());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.values()) m = u(rng) < rate ? 0.0 : keep_scale;
  Matrix out = X;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] *= mask.values()[i];
  return push(std::move(out), any_requires_grad({x}),
              [x, mask = std::move(mask)](Tape& t, const Matrix& g) {
                auto dst = t.grad_slot(x)->values();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g.values()[i] * mask.values()[i];
              });
}

Var Tape::sigmoid(Var x) {
  Matrix out = value(x);
  for (double& v : out.values()) v = stable_sigmoid(v);
  const std::size_t self = nodes_.size();
  return push(std::move(out), any_requires_grad({x}), [x, self](Tape& t, const Matrix& g) {
    const auto s = t.value(Var{self}).values();
    auto dst = t.grad_slot(x)->values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g.values()[i] * s[i] * (1.0 - s[i]);
  });
}

Var Tape::column_softmax(Var x) {
  const Matrix& X = value(x);
  if (X.rows() == 0) throw DimensionError("column_softmax: input has no rows");
  const std::size_t rows = X.rows(), cols = X.cols();
  Matrix out(rows, cols);
  std::vector<double> col_max(cols, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) col_max[j] = std::max(col_max[j], X(i, j));
  std::vector<double> col_sum(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double e = std::exp(X(i, j) - col_max[j]);
      out(i, j) = e;
      col_sum[j] += e;
    }
  }
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) /= col_sum[j];

  const std::size_t self = nodes_.size();
  return push(std::move(out), any_requires_grad({x}),
              [x, self, rows, cols](Tape& t, const Matrix& g) {
                // dx_ij = s_ij (g_ij − Σ_k g_kj s_kj)
                const Matrix& s = t.value(Var{self});
                Matrix* gx = t.grad_slot(x);
                std::vector<double> dot(cols, 0.0);
                for (std::size_t i = 0; i < rows; ++i)
                  for (std::size_t j = 0; j < cols; ++j) dot[j] += g(i, j) * s(i, j);
                for (std::size_t i = 0; i < rows; ++i)
                  for (std::size_t j = 0; j < cols; ++j) (*gx)(i, j) += s(i, j) * (g(i, j) - dot[j]);
              });
}

Var Tape::hadamard(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require_same_shape(A, B, "hadamard");
  Matrix out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] *= B.values()[i];
  return push(std::move(out), any_requires_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    if (Matrix* ga = t.grad_slot(a)) {
      const auto other = t.value(b).values();
      for (std::size_t i = 0; i < other.size(); ++i) ga->values()[i] += g.values()[i] * other[i];
    }
    if (Matrix* gb = t.grad_slot(b)) {
      const auto other = t.value(a).values();
      for (std::size_t i = 0; i < other.size(); ++i) gb->values()[i] += g.values()[i] * other[i];
    }
  });
}

Var Tape::sum(Var x) {
  double total = 0.0;
  for (double v : value(x).values()) total += v;
  return push(Matrix(1, 1, total), any_requires_grad({x}), [x](Tape& t, const Matrix& g) {
    for (double& d : t.grad_slot(x)->values()) d += g(0, 0);
  });
}

Var Tape::linear_combination(std::span<const std::pair<double, Var>> terms) {
  double total = 0.0;
  bool needs = false;
  for (const auto& [coeff, v] : terms) {
    const Matrix& m = value(v);
    if (m.rows() != 1 || m.cols() != 1) {
      throw DimensionError("linear_combination: term is " + shape_string(m) + ", expected 1x1");
    }
    total += coeff * m(0, 0);
    needs = needs || node(v).requires_grad;
  }
  std::vector<std::pair<double, Var>> captured(terms.begin(), terms.end());
  return push(Matrix(1, 1, total), needs,
              [captured = std::move(captured)](Tape& t, const Matrix& g) {
                for (const auto& [coeff, v] : captured) {
                  if (Matrix* gv = t.grad_slot(v)) (*gv)(0, 0) += coeff * g(0, 0);
                }
              });
}

Var Tape::custom(Matrix value, std::initializer_list<Var> inputs, Backprop backprop) {
  return push(std::move(value), any_requires_grad(inputs), std::move(backprop));
}

void Tape::backward(Var loss, double seed) {
  if (backward_done_) throw UsageError("backward() already ran on this tape");
  const Node& terminal = node(loss);
  if (terminal.value().rows() != 1 || terminal.value().cols() != 1) {
    throw UsageError("backward() needs a scalar terminal, got " + shape_string(terminal.value()));
  }
  backward_done_ = true;
  for (Node& n : nodes_) {
    if (n.requires_grad) n.grad = Matrix(n.value().rows(), n.value().cols());
  }
  if (!terminal.requires_grad) return;
  nodes_[loss.id].grad(0, 0) = seed;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backprop) n.backprop(*this, n.grad);
  }
}

}  // namespace claws
