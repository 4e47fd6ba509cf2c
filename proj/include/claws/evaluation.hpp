#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "claws/dataset.hpp"
#include "claws/model.hpp"

namespace claws {

struct FrameScoreSeries {
  std::string video_id;
  std::vector<double> scores;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  /// From (0,0) to (1,1), non-decreasing in both coordinates; one point per
  /// distinct score threshold.
  std::vector<RocPoint> points;
  double auc = 0.0;
  /// Rate at which FPR equals FNR, interpolated along the curve.
  double eer = 0.0;
};

/// Frame f takes the score of segment ⌊f/p⌋; frames past the last full
/// segment take the last segment's score. Requires
/// m·p ≤ num_frames < (m+2)·p.
FrameScoreSeries expand_to_frames(const std::string& video_id,
                                  std::span<const double> segment_scores, std::size_t num_frames,
                                  std::size_t frames_per_segment = kFramesPerSegment);

/// 1 inside any annotated interval of `video_id`, else 0.
std::vector<std::uint8_t> frame_labels(const FrameAnnotations& annotations,
                                       const std::string& video_id, std::size_t num_frames);

/// ROC over thresholds at every distinct score (tied scores form one step)
/// and its trapezoidal area. Throws UndefinedMetricError unless both classes
/// are present.
RocResult roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct VideoEvaluation {
  FrameScoreSeries series;
  std::vector<std::uint8_t> labels;
};

struct EvalOptions {
  std::size_t batch_size = 64;
  /// Report the mean of per-video AUCs (videos with both classes only)
  /// instead of the pooled AUC.
  bool per_video = false;
};

struct EvalResult {
  RocResult pooled;
  std::vector<VideoEvaluation> videos;
  /// Mean per-video AUC and how many videos it covers; set in per-video mode.
  std::optional<double> per_video_auc;
  std::size_t per_video_count = 0;
  std::size_t num_frames = 0;
  std::size_t num_anomalous_frames = 0;

  /// The headline metric for the selected mode.
  double auc() const { return per_video_auc.value_or(pooled.auc); }
};

/// Eval-mode scoring of every test video, expanded to frames and pooled.
/// Abnormal videos must have annotations; normal videos are all-normal.
EvalResult evaluate(std::span<const VideoFeatures> test_set, const FrameAnnotations& annotations,
                    const ClawsParams& params, const ModelConfig& cfg,
                    const EvalOptions& options = {});

/// `video_id,frame,score,label`
void write_score_csv(const std::filesystem::path& path, const VideoEvaluation& video);
/// `auc,eer,num_frames,num_anomalous_frames`
void write_summary_csv(const std::filesystem::path& path, const EvalResult& result);

}  // namespace claws
