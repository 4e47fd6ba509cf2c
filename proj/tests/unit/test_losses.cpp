#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "claws/errors.hpp"
#include "claws/losses.hpp"
#include "finite_difference.hpp"

using namespace claws;
using claws::testing::max_relative_error;
using claws::testing::numeric_gradient;

namespace {

std::vector<double> as_vector(const Matrix& m) { return {m.values().begin(), m.values().end()}; }

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("mse examples") {
    const std::vector<double> y{1, 1};
    const std::vector<double> yhat{0.5, 0.5};
    CHECK(mse_loss(y, y) == 0.0);
    CHECK(mse_loss(y, yhat) == 0.25);
    CHECK(mse_loss_grad(y, yhat) == std::vector<double>{-0.5, -0.5});
    CHECK_THROWS_AS(mse_loss(y, std::vector<double>{0.5}), DimensionError);
  }

  TEST_CASE("clustering loss branches") {
    CHECK(clustering_loss(0.4, Label::normal, 1.0) == 0.4);
    CHECK(clustering_loss(3.0, Label::normal, 1.0) == 1.0);
    CHECK(clustering_loss(0.5, Label::abnormal, 1.0) == 2.0);
    CHECK(clustering_loss(0.0, Label::abnormal, 1.0) == 1.0 / kClusterDistanceEpsilon);
    CHECK(clustering_loss(1e-9, Label::abnormal, 1.0) == 1.0 / kClusterDistanceEpsilon);
    CHECK_THROWS_AS(clustering_loss(-0.1, Label::normal, 1.0), DomainError);
  }

  TEST_CASE("clustering loss monotonicity") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int i = 0; i < 1000; ++i) {
      double a = u(rng), b = u(rng);
      if (a > b) std::swap(a, b);
      CHECK(clustering_loss(a, Label::normal, 1.0) <= clustering_loss(b, Label::normal, 1.0));
      if (a > kClusterDistanceEpsilon && a < b) {
        CHECK(clustering_loss(a, Label::abnormal, 1.0) > clustering_loss(b, Label::abnormal, 1.0));
      }
    }
  }

  TEST_CASE("temporal smoothness examples") {
    CHECK(temporal_smoothness(std::vector<double>{0.3, 0.3, 0.3}) == 0.0);
    CHECK(temporal_smoothness(std::vector<double>{0, 1, 0}) == 2.0);
    CHECK(temporal_smoothness_grad(std::vector<double>{0, 1, 0})[1] == 4.0);
    CHECK_THROWS_AS(temporal_smoothness(std::vector<double>{0.5}), UsageError);
  }

  TEST_CASE("sparsity examples") {
    CHECK(sparsity(std::vector<double>{0, 0, 0}) == 0.0);
    CHECK(sparsity(std::vector<double>{0.1, 0.2}) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(sparsity_grad(std::vector<double>{0.1, 0.2}) == std::vector<double>{1, 1});
  }

  TEST_CASE("total loss combination") {
    const LossConfig cfg;
    const LossBreakdown b = total_loss({0.25, 0.4, 0.0, 0.3}, cfg);
    CHECK(std::abs(b.total - 0.265024) < 1e-12);

    const LossBreakdown pred_only = total_loss({0.25, 0.4, 0.1, 0.3}, cfg, {true, false, false});
    CHECK(std::abs(pred_only.total - 0.9 * 0.25) < 1e-12);
    CHECK(pred_only.cluster == 0.0);
    CHECK(pred_only.ts == 0.0);

    LossConfig no_cluster = cfg;
    no_cluster.lambda1 = 1.0;
    const LossBreakdown c = total_loss({0.25, 123.0, 0.0, 0.0}, no_cluster);
    CHECK(c.total == 0.25);
  }

  TEST_CASE("total loss is linear with the documented coefficients") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    std::uniform_real_distribution<double> l1(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
      LossConfig cfg;
      cfg.lambda1 = l1(rng);
      cfg.lambda2 = u(rng) * 1e-3;
      const LossParts parts{u(rng), u(rng), u(rng), u(rng)};
      const double base = total_loss(parts, cfg).total;
      const double expected[4] = {cfg.lambda1, 1.0 - cfg.lambda1, cfg.lambda2, cfg.lambda2};
      for (int k = 0; k < 4; ++k) {
        LossParts bumped = parts;
        double* field[4] = {&bumped.pred, &bumped.cluster, &bumped.ts, &bumped.sparsity};
        *field[k] += 1.0;
        CHECK(total_loss(bumped, cfg).total - base == doctest::Approx(expected[k]).epsilon(1e-10));
      }
      const LossBreakdown b = total_loss(parts, cfg);
      CHECK(std::abs(b.total - (cfg.lambda1 * b.pred + (1 - cfg.lambda1) * b.cluster +
                                cfg.lambda2 * (b.sparsity + b.ts))) < 1e-12);
    }
  }

  TEST_CASE("config validation") {
    LossConfig c;
    c.validate();
    c.lambda1 = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.alpha = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.lambda2 = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("tape losses match finite differences") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    Matrix preds(9, 1);
    for (double& v : preds.values()) v = u(rng);
    const std::vector<double> targets(9, 1.0);

    auto run = [&](auto build) {
      Tape t;
      const Var p = t.parameter(preds);
      t.backward(build(t, p));
      auto value = [&] {
        Tape f;
        return f.value(build(f, f.constant(preds)))(0, 0);
      };
      return max_relative_error(t.grad(p), numeric_gradient(preds, value));
    };
    CHECK(run([&](Tape& t, Var p) { return mse_loss(t, p, targets); }) < 1e-6);
    CHECK(run([](Tape& t, Var p) { return temporal_smoothness(t, p); }) < 1e-6);
    CHECK(run([](Tape& t, Var p) { return sparsity(t, p); }) < 1e-6);

    // Scalar gradient forms agree with the tape forms.
    Tape t;
    const Var p = t.parameter(preds);
    t.backward(temporal_smoothness(t, p));
    CHECK(as_vector(t.grad(p)) == temporal_smoothness_grad(preds.values()));
  }

  TEST_CASE("clustering loss gradient away from the clamp") {
    for (Label label : {Label::normal, Label::abnormal}) {
      for (double d : {0.05, 0.3, 0.8, 2.5}) {
        Matrix dm(1, 1, d);
        auto value = [&] {
          Tape f;
          return f.value(clustering_loss(f, f.constant(dm), label, 1.0))(0, 0);
        };
        Tape t;
        const Var dv = t.parameter(dm);
        t.backward(clustering_loss(t, dv, label, 1.0));
        CHECK(max_relative_error(t.grad(dv), numeric_gradient(dm, value)) < 1e-6);
      }
    }
  }
}
