#include <doctest.h>

#include <cmath>
#include <random>

#include "claws/errors.hpp"
#include "claws/model.hpp"
#include "finite_difference.hpp"
#include "gradient_check.hpp"

using namespace claws;
using claws::testing::random_matrix;

namespace {

double column_sum_error(const Matrix& p) {
  double worst = 0.0;
  for (std::size_t j = 0; j < p.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) s += p(i, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

VideoFeatures make_video(std::size_t m, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  VideoFeatures v;
  v.video_id = "vid";
  v.segments = random_matrix(m, d, rng);
  v.num_frames = m * kFramesPerSegment;
  return v;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("init is deterministic with zero biases and fan-balanced range") {
    const ModelDims dims{32, 16, 8};
    const ClawsParams a = init_params(42, dims);
    const ClawsParams b = init_params(42, dims);
    CHECK(a == b);
    CHECK_FALSE(a == init_params(43, dims));
    for (const Matrix* bias : {&a.b1, &a.bn1, &a.b2, &a.bn2, &a.b3}) {
      for (double v : bias->values()) CHECK(v == 0.0);
    }
    const double limit = std::sqrt(6.0 / (32.0 + 16.0));
    for (double v : a.W1.values()) CHECK(std::abs(v) <= limit);
  }

  TEST_CASE("W1 sample mean at full size is near zero") {
    const ClawsParams p = init_params(1, ModelDims{});
    double mean = 0.0;
    for (double v : p.W1.values()) mean += v;
    mean /= static_cast<double>(p.W1.size());
    CHECK(std::abs(mean) < 0.001);
  }

  TEST_CASE("zero parameters score every segment at one half") {
    const ClawsParams p = ClawsParams::zeros({8, 6, 4});
    std::mt19937_64 rng(1);
    Rng dropout(2);
    ModelConfig cfg;
    const ForwardTrace tr = forward(random_matrix(7, 8, rng), p, cfg, dropout);
    for (double s : tr.score_values()) CHECK(s == 0.5);
    for (double v : tr.R1().values()) CHECK(v == 0.0);
  }

  TEST_CASE("suppression matrices have unit column sums") {
    const ClawsParams p = init_params(5, {64, 512, 32});
    std::mt19937_64 rng(6);
    ModelConfig cfg;
    cfg.mode = Mode::eval;
    Rng unused(0);
    const ForwardTrace tr = forward(random_matrix(64, 64, rng), p, cfg, unused);
    CHECK(tr.P1().rows() == 64);
    CHECK(tr.P1().cols() == 512);
    CHECK(column_sum_error(tr.P1()) < 1e-9);
    CHECK(column_sum_error(tr.P2()) < 1e-9);
    for (double s : tr.score_values()) {
      CHECK(s > 0.0);
      CHECK(s < 1.0);
    }
  }

  TEST_CASE("disabling a suppression module equals all-ones gating") {
    const ClawsParams p = init_params(8, {10, 6, 4});
    std::mt19937_64 rng(9);
    const Matrix x = random_matrix(12, 10, rng);
    ModelConfig off;
    off.use_nsm1 = false;
    off.use_nsm2 = false;
    off.mode = Mode::eval;
    Rng unused(0);
    const ForwardTrace tr = forward(x, p, off, unused);
    CHECK(tr.P1() == Matrix(12, 6, 1.0));
    CHECK(tr.P2() == Matrix(12, 4, 1.0));

    // Plain MLP computed by hand on a fresh tape.
    Tape t;
    auto lin = [&](Var in, const Matrix& w, const Matrix& b) {
      return t.affine(in, t.constant(w), t.constant(b));
    };
    const Var h1 = t.relu(lin(t.constant(x), p.W1, p.b1));
    const Var h2 = t.relu(lin(h1, p.W2, p.b2));
    const Var s = t.sigmoid(lin(h2, p.W3, p.b3));
    CHECK(t.value(s) == tr.tape.value(tr.scores));
  }

  TEST_CASE("gating before and after ReLU agree because P is positive") {
    const ClawsParams p = init_params(10, {10, 6, 4});
    std::mt19937_64 rng(11);
    const Matrix x = random_matrix(8, 10, rng);
    ModelConfig a;
    a.mode = Mode::eval;
    ModelConfig b = a;
    b.gate_after_relu = true;
    Rng unused(0);
    CHECK(forward(x, p, a, unused).score_values() == forward(x, p, b, unused).score_values());
  }

  TEST_CASE("eval forward is bitwise deterministic; train mode uses dropout") {
    const ClawsParams p = init_params(12, {10, 6, 4});
    std::mt19937_64 rng(13);
    const Matrix x = random_matrix(9, 10, rng);
    ModelConfig eval;
    eval.mode = Mode::eval;
    Rng r1(1), r2(2);
    CHECK(forward(x, p, eval, r1).score_values() == forward(x, p, eval, r2).score_values());

    ModelConfig train;
    Rng r3(1), r4(1), r5(2);
    const auto s3 = forward(x, p, train, r3).score_values();
    CHECK(s3 == forward(x, p, train, r4).score_values());
    CHECK(s3 != forward(x, p, train, r5).score_values());
  }

  TEST_CASE("forward rejects mismatched width and bad dropout") {
    const ClawsParams p = init_params(1, {10, 6, 4});
    Rng unused(0);
    ModelConfig cfg;
    CHECK_THROWS_AS(forward(Matrix(3, 9), p, cfg, unused), DimensionError);
    cfg.dropout_rate = 1.0;
    CHECK_THROWS_AS(forward(Matrix(3, 10), p, cfg, unused), ConfigError);
  }

  TEST_CASE("intermediate representation windows and shape") {
    const ClawsParams p = init_params(3, {8, 12, 4});
    const VideoFeatures short_video = make_video(5, 8, 4);
    ModelConfig cfg;
    const Matrix r = intermediate_representation(short_video, p, cfg, 64);
    CHECK(r.rows() == 5);
    CHECK(r.cols() == 12);
    CHECK(r == intermediate_representation(short_video, p, cfg, 64));

    // Windows of 4 over 10 segments: rows equal the concatenation of per-window R1.
    const VideoFeatures v = make_video(10, 8, 5);
    const Matrix full = intermediate_representation(v, p, cfg, 4);
    CHECK(full.rows() == 10);
    ModelConfig eval = cfg;
    eval.mode = Mode::eval;
    Rng unused(0);
    const Matrix tail = forward(v.segments.slice_rows(8, 2), p, eval, unused).R1();
    CHECK(full.slice_rows(8, 2) == tail);

    const Matrix zero = intermediate_representation(v, ClawsParams::zeros({8, 12, 4}), cfg, 4);
    for (double x : zero.values()) CHECK(x == 0.0);
  }

  TEST_CASE("end-to-end gradient of the total loss matches finite differences") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      for (Label label : {Label::normal, Label::abnormal}) {
        const auto report = claws::testing::check_full_gradient(seed, label);
        CHECK(report.cluster_applied);
        for (std::size_t i = 0; i < ClawsParams::kTensorCount; ++i) {
          INFO("seed " << seed << " tensor " << ClawsParams::kNames[i]);
          CHECK(report.max_rel_error[i] < 1e-4);
        }
      }
    }
  }
}
