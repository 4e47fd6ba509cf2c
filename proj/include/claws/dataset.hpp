#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "claws/matrix.hpp"

namespace claws {

/// Video-level weak label.
enum class Label : std::uint8_t { normal = 0, abnormal = 1 };

inline double label_value(Label l) { return l == Label::abnormal ? 1.0 : 0.0; }

/// Frames covered by one segment feature vector.
inline constexpr std::size_t kFramesPerSegment = 16;

enum class Split { train, test };

struct ManifestEntry {
  std::string video_id;
  Label label = Label::normal;
  std::size_t num_frames = 0;
  /// As written in the manifest (relative paths are relative to the manifest).
  std::string feature_path;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  Split split = Split::train;
  /// Directory used to resolve relative feature paths.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestEntry& e) const;
  const ManifestEntry& find(const std::string& video_id) const;
};

/// One video's ordered segment features; row j of `segments` is f_(i,j).
struct VideoFeatures {
  std::string video_id;
  Label label = Label::normal;
  std::size_t num_frames = 0;
  Matrix segments;

  std::size_t num_segments() const { return segments.rows(); }
  std::size_t dim() const { return segments.cols(); }
};

/// A window of temporally consecutive segments cut from one video.
struct Batch {
  std::string video_id;
  Label label = Label::normal;
  Matrix features;
  std::size_t segment_offset = 0;
  /// Segment count of the parent video.
  std::size_t video_segments = 0;

  std::size_t size() const { return features.rows(); }
};

struct PreprocStats {
  std::vector<double> mean;
  /// Population standard deviation per dimension; only used when variance
  /// scaling is requested.
  std::vector<double> stddev;
  std::uint64_t computed_over = 0;

  std::size_t dim() const { return mean.size(); }
};

/// Inclusive, 0-indexed anomalous frame ranges.
struct FrameInterval {
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;
  friend bool operator==(const FrameInterval&, const FrameInterval&) = default;
};

struct FrameAnnotations {
  /// Only videos with at least one anomalous interval appear here.
  std::map<std::string, std::vector<FrameInterval>> intervals;

  bool has(const std::string& video_id) const { return intervals.count(video_id) != 0; }
};

// --- manifest ---------------------------------------------------------------

/// Parses `video_id,label,num_frames,feature_path`. Errors carry the path and
/// line number.
Manifest load_manifest(const std::filesystem::path& path, Split split = Split::train);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

// --- feature files ----------------------------------------------------------

/// Reads a CLWSFEAT file. `expected_dim` of 0 accepts any width.
Matrix read_feature_file(const std::filesystem::path& path, std::size_t expected_dim = 0);
/// Values are narrowed to 32-bit floats on write.
void write_feature_file(const std::filesystem::path& path, const Matrix& segments);

VideoFeatures load_video_features(const Manifest& manifest, const ManifestEntry& entry,
                                  std::size_t expected_dim);
std::vector<VideoFeatures> load_all(const Manifest& manifest, std::size_t expected_dim);

// --- preprocessing ----------------------------------------------------------

PreprocStats fit_stats(std::span<const VideoFeatures> train);

/// Subtracts the mean (and divides by stddev when `scale_variance`). Applying
/// it twice subtracts the mean twice.
VideoFeatures normalize(VideoFeatures video, const PreprocStats& stats,
                        bool scale_variance = false);

void write_stats(const std::filesystem::path& path, const PreprocStats& stats);
PreprocStats read_stats(const std::filesystem::path& path);

// --- batching ---------------------------------------------------------------

/// Non-overlapping windows of `batch_size` in temporal order. A trailing
/// remainder is kept when it has at least `min_tail` rows.
std::vector<Batch> segment_batches(const VideoFeatures& video, std::size_t batch_size,
                                   std::size_t min_tail = 2);

/// Random Batch Selector order for one epoch: a uniform permutation of
/// [0, num_batches) determined by (seed, epoch).
std::vector<std::size_t> make_epoch_order(std::size_t num_batches, std::uint64_t epoch,
                                          std::uint64_t seed);

// --- annotations ------------------------------------------------------------

FrameAnnotations load_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const FrameAnnotations& annotations);

/// Checks intervals against the manifest: in range, ordered, non-overlapping.
void validate_annotations(const FrameAnnotations& annotations, const Manifest& manifest);

}  // namespace claws
