#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "claws/autodiff.hpp"
#include "claws/dataset.hpp"
#include "claws/matrix.hpp"
#include "claws/model.hpp"

namespace claws {

struct KMeansResult {
  std::vector<std::uint8_t> assignments;  // 0 or 1 per point
  Matrix centers;                         // 2×z, row k is center of cluster k
  std::size_t iterations = 0;
  bool converged = false;
  /// Fewer than two points, or every point identical.
  bool degenerate = false;
  /// Within-cluster sum of squares after seeding's first assignment and after
  /// every Lloyd iteration.
  std::vector<double> wcss_history;
};

/// Two-means Lloyd iteration with k-means++ seeding. Stops at an assignment
/// fixpoint or after `max_iters`. An emptied cluster is refilled with the
/// point farthest from its current center.
KMeansResult kmeans2(const Matrix& points, std::uint64_t seed, std::size_t max_iters = 100);

/// Sum over points of squared distance to the assigned center.
double within_cluster_ss(const Matrix& points, std::span<const std::uint8_t> assignments,
                         const Matrix& centers);

/// ‖c₁ − c₂‖₂ / m.
double video_distance(std::span<const double> c1, std::span<const double> c2,
                      std::size_t num_segments);

struct ClusterState {
  std::vector<std::uint8_t> assignments;
  Matrix centers;
  double distance = 0.0;
  std::uint64_t epoch = 0;
  bool degenerate = false;
};

using ClusterStates = std::map<std::string, ClusterState>;

/// Clusters every video's intermediate representation under the current
/// parameters. Deterministic in (seed, epoch, params).
ClusterStates epoch_refresh(std::span<const VideoFeatures> videos, const ClawsParams& params,
                            const ModelConfig& cfg, std::uint64_t seed, std::uint64_t epoch,
                            std::size_t batch_size = 64);

/// Center distance of the batch rows grouped by their frozen assignments,
/// ‖mean₀ − mean₁‖₂ / m, differentiable w.r.t. `rows`. Empty when the batch
/// holds only one of the two clusters.
std::optional<Var> batch_cluster_distance(Tape& tape, Var rows,
                                          std::span<const std::uint8_t> assignments,
                                          std::size_t num_segments);

/// Value-only form of batch_cluster_distance.
std::optional<double> batch_cluster_distance(const Matrix& rows,
                                             std::span<const std::uint8_t> assignments,
                                             std::size_t num_segments);

}  // namespace claws
