#include "claws/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "claws/errors.hpp"
#include "claws/rng.hpp"

namespace claws {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    acc += d * d;
  }
  return acc;
}

bool all_rows_equal(const Matrix& points) {
  for (std::size_t i = 1; i < points.rows(); ++i) {
    if (!std::equal(points.row(i).begin(), points.row(i).end(), points.row(0).begin())) return false;
  }
  return true;
}

Matrix cluster_means(const Matrix& points, std::span<const std::uint8_t> assignments) {
  Matrix centers(2, points.cols());
  std::size_t counts[2] = {0, 0};
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const std::size_t k = assignments[i] != 0 ? 1 : 0;
    ++counts[k];
    auto c = centers.row(k);
    const auto p = points.row(i);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += p[j];
  }
  for (std::size_t k = 0; k < 2; ++k) {
    if (counts[k] == 0) continue;
    for (double& v : centers.row(k)) v /= static_cast<double>(counts[k]);
  }
  return centers;
}

// Nearest-center assignment; a point equidistant from both centers keeps its
// previous cluster.
std::vector<std::uint8_t> assign(const Matrix& points, const Matrix& centers,
                                 std::span<const std::uint8_t> previous) {
  std::vector<std::uint8_t> out(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const double d0 = squared_distance(points.row(i), centers.row(0));
    const double d1 = squared_distance(points.row(i), centers.row(1));
    if (d0 < d1) {
      out[i] = 0;
    } else if (d1 < d0) {
      out[i] = 1;
    } else {
      out[i] = previous.empty() ? 0 : previous[i];
    }
  }
  return out;
}

void repair_empty_cluster(const Matrix& points, const Matrix& centers,
                          std::vector<std::uint8_t>& assignments) {
  const auto n1 = static_cast<std::size_t>(std::count(assignments.begin(), assignments.end(), 1));
  if (n1 != 0 && n1 != assignments.size()) return;
  const std::uint8_t empty = n1 == 0 ? 1 : 0;
  std::size_t farthest = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const double d = squared_distance(points.row(i), centers.row(assignments[i]));
    if (d > best) {
      best = d;
      farthest = i;
    }
  }
  assignments[farthest] = empty;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

double within_cluster_ss(const Matrix& points, std::span<const std::uint8_t> assignments,
                         const Matrix& centers) {
  double acc = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    acc += squared_distance(points.row(i), centers.row(assignments[i]));
  }
  return acc;
}

KMeansResult kmeans2(const Matrix& points, std::uint64_t seed, std::size_t max_iters) {
  if (!points.all_finite()) throw DomainError("kmeans2: non-finite points");
  KMeansResult r;
  const std::size_t m = points.rows();
  r.assignments.assign(m, 0);
  if (m < 2 || all_rows_equal(points)) {
    r.degenerate = true;
    r.converged = true;
    r.centers = Matrix(2, points.cols());
    if (m > 0) {
      const Matrix mean = cluster_means(points, r.assignments);
      for (std::size_t k = 0; k < 2; ++k)
        std::copy(mean.row(0).begin(), mean.row(0).end(), r.centers.row(k).begin());
    }
    r.wcss_history.push_back(m > 0 ? within_cluster_ss(points, r.assignments, r.centers) : 0.0);
    return r;
  }

  // k-means++: first center uniform, second proportional to squared distance.
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, m - 1);
  const std::size_t first = pick(rng);
  std::vector<double> weights(m);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    weights[i] = squared_distance(points.row(i), points.row(first));
    total += weights[i];
  }
  std::uniform_real_distribution<double> u(0.0, total);
  const double target = u(rng);
  std::size_t second = m;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    cumulative += weights[i];
    if (weights[i] > 0.0 && cumulative >= target) {
      second = i;
      break;
    }
  }
  if (second == m) {
    second = static_cast<std::size_t>(
        std::distance(weights.begin(), std::max_element(weights.begin(), weights.end())));
  }
  r.centers = Matrix(2, points.cols());
  std::copy(points.row(first).begin(), points.row(first).end(), r.centers.row(0).begin());
  std::copy(points.row(second).begin(), points.row(second).end(), r.centers.row(1).begin());

  r.assignments = assign(points, r.centers, {});
  repair_empty_cluster(points, r.centers, r.assignments);
  r.centers = cluster_means(points, r.assignments);
  r.wcss_history.push_back(within_cluster_ss(points, r.assignments, r.centers));

  for (r.iterations = 1; r.iterations <= max_iters; ++r.iterations) {
    auto next = assign(points, r.centers, r.assignments);
    repair_empty_cluster(points, r.centers, next);
    if (next == r.assignments) {
      r.converged = true;
      break;
    }
    r.assignments = std::move(next);
    r.centers = cluster_means(points, r.assignments);
    r.wcss_history.push_back(within_cluster_ss(points, r.assignments, r.centers));
  }
  r.iterations = std::min(r.iterations, max_iters);
  return r;
}

double video_distance(std::span<const double> c1, std::span<const double> c2,
                      std::size_t num_segments) {
  if (c1.size() != c2.size()) throw DimensionError("video_distance: center dimensions differ");
  if (num_segments == 0) throw DomainError("video_distance: video has no segments");
  return std::sqrt(squared_distance(c1, c2)) / static_cast<double>(num_segments);
}

ClusterStates epoch_refresh(std::span<const VideoFeatures> videos, const ClawsParams& params,
                            const ModelConfig& cfg, std::uint64_t seed, std::uint64_t epoch,
                            std::size_t batch_size) {
  ClusterStates out;
  for (const auto& video : videos) {
    const Matrix rep = intermediate_representation(video, params, cfg, batch_size);
    const KMeansResult km =
        kmeans2(rep, derive_seed(seed, RngStream::kmeans, {epoch, fnv1a(video.video_id)}));
    ClusterState s;
    s.epoch = epoch;
    s.degenerate = km.degenerate;
    s.assignments = km.assignments;
    s.centers = km.centers;
    s.distance = km.degenerate
                     ? 0.0
                     : video_distance(km.centers.row(0), km.centers.row(1), video.num_segments());
    out.emplace(video.video_id, std::move(s));
  }
  return out;
}

namespace {

struct BatchCenters {
  Matrix centers;
  std::size_t counts[2] = {0, 0};
};

std::optional<BatchCenters> batch_centers(const Matrix& rows,
                                          std::span<const std::uint8_t> assignments) {
  if (assignments.size() != rows.rows()) {
    throw DimensionError("batch_cluster_distance: " + std::to_string(assignments.size()) +
                         " assignments for " + std::to_string(rows.rows()) + " rows");
  }
  BatchCenters bc;
  for (auto a : assignments) ++bc.counts[a != 0 ? 1 : 0];
  if (bc.counts[0] == 0 || bc.counts[1] == 0) return std::nullopt;
  bc.centers = cluster_means(rows, assignments);
  return bc;
}

}  // namespace

std::optional<double> batch_cluster_distance(const Matrix& rows,
                                             std::span<const std::uint8_t> assignments,
                                             std::size_t num_segments) {
  const auto bc = batch_centers(rows, assignments);
  if (!bc) return std::nullopt;
  return video_distance(bc->centers.row(0), bc->centers.row(1), num_segments);
}

std::optional<Var> batch_cluster_distance(Tape& tape, Var rows,
                                          std::span<const std::uint8_t> assignments,
                                          std::size_t num_segments) {
  auto bc = batch_centers(tape.value(rows), assignments);
  if (!bc) return std::nullopt;
  const double value =
      video_distance(bc->centers.row(0), bc->centers.row(1), num_segments);
  std::vector<std::uint8_t> frozen(assignments.begin(), assignments.end());
  return tape.custom(
      Matrix(1, 1, value), {rows},
      [rows, frozen = std::move(frozen), bc = std::move(*bc), num_segments](Tape& t,
                                                                            const Matrix& g) {
        Matrix* gr = t.grad_slot(rows);
        if (gr == nullptr) return;
        const auto c0 = bc.centers.row(0);
        const auto c1 = bc.centers.row(1);
        const double norm = std::sqrt(squared_distance(c0, c1));
        if (norm == 0.0) return;
        // ∂/∂row = ±(c0 − c1) / (‖c0 − c1‖ · m · n_k)
        const double base = g(0, 0) / (norm * static_cast<double>(num_segments));
        for (std::size_t i = 0; i < frozen.size(); ++i) {
          const std::size_t k = frozen[i] != 0 ? 1 : 0;
          const double coeff =
              (k == 0 ? base : -base) / static_cast<double>(bc.counts[k]);
          auto row = gr->row(i);
          for (std::size_t j = 0; j < row.size(); ++j) row[j] += coeff * (c0[j] - c1[j]);
        }
      });
}

}  // namespace claws
