#include "claws/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "claws/errors.hpp"

namespace claws {

FrameScoreSeries expand_to_frames(const std::string& video_id,
                                  std::span<const double> segment_scores, std::size_t num_frames,
                                  std::size_t frames_per_segment) {
  const std::size_t m = segment_scores.size();
  if (m == 0) throw DimensionError("expand_to_frames: video \"" + video_id + "\" has no segments");
  if (frames_per_segment == 0) throw ConfigError("frames per segment must be positive");
  if (num_frames < m * frames_per_segment || num_frames >= (m + 2) * frames_per_segment) {
    throw DimensionError("expand_to_frames: " + std::to_string(m) + " segments cannot cover " +
                         std::to_string(num_frames) + " frames of \"" + video_id + "\"");
  }
  FrameScoreSeries s;
  s.video_id = video_id;
  s.scores.resize(num_frames);
  for (std::size_t f = 0; f < num_frames; ++f) {
    s.scores[f] = segment_scores[std::min(f / frames_per_segment, m - 1)];
  }
  return s;
}

std::vector<std::uint8_t> frame_labels(const FrameAnnotations& annotations,
                                       const std::string& video_id, std::size_t num_frames) {
  std::vector<std::uint8_t> labels(num_frames, 0);
  const auto it = annotations.intervals.find(video_id);
  if (it == annotations.intervals.end()) return labels;
  for (const auto& iv : it->second) {
    if (iv.start_frame > iv.end_frame || iv.end_frame >= num_frames) {
      throw DimensionError("annotation [" + std::to_string(iv.start_frame) + ", " +
                           std::to_string(iv.end_frame) + "] out of range for \"" + video_id +
                           "\" with " + std::to_string(num_frames) + " frames");
    }
    std::fill(labels.begin() + static_cast<std::ptrdiff_t>(iv.start_frame),
              labels.begin() + static_cast<std::ptrdiff_t>(iv.end_frame) + 1, std::uint8_t{1});
  }
  return labels;
}

RocResult roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("roc_auc: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw DomainError("roc_auc: NaN score");
    positives += labels[i] != 0 ? 1 : 0;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("roc_auc: labels must contain both classes");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult r;
  r.points.push_back({0.0, 0.0});
  const double P = static_cast<double>(positives);
  const double N = static_cast<double>(negatives);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i) {
      (labels[order[i]] != 0 ? tp : fp) += 1;
    }
    r.points.push_back({static_cast<double>(fp) / N, static_cast<double>(tp) / P});
  }

  double area = 0.0;
  r.eer = 1.0;
  bool eer_found = false;
  for (std::size_t k = 1; k < r.points.size(); ++k) {
    const RocPoint& a = r.points[k - 1];
    const RocPoint& b = r.points[k];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    // FNR − FPR = 1 − tpr − fpr goes from ≥ 0 at (0,0) to −1 at (1,1).
    const double ga = 1.0 - a.tpr - a.fpr;
    const double gb = 1.0 - b.tpr - b.fpr;
    if (!eer_found && ga >= 0.0 && gb <= 0.0) {
      const double t = ga == gb ? 0.0 : ga / (ga - gb);
      r.eer = a.fpr + t * (b.fpr - a.fpr);
      eer_found = true;
    }
  }
  r.auc = area;
  return r;
}

EvalResult evaluate(std::span<const VideoFeatures> test_set, const FrameAnnotations& annotations,
                    const ClawsParams& params, const ModelConfig& cfg,
                    const EvalOptions& options) {
  if (test_set.empty()) throw ConfigError("evaluate: empty test set");
  EvalResult result;
  std::vector<double> all_scores;
  std::vector<std::uint8_t> all_labels;
  double per_video_sum = 0.0;
  for (const auto& video : test_set) {
    if (video.dim() != params.dims().d) {
      throw DimensionError("evaluate: video \"" + video.video_id + "\" has dimension " +
                           std::to_string(video.dim()) + ", model expects " +
                           std::to_string(params.dims().d));
    }
    if (video.label == Label::abnormal && !annotations.has(video.video_id)) {
      throw FormatError("missing frame annotations for abnormal test video \"" + video.video_id +
                        "\"");
    }
    if (video.label == Label::normal && annotations.has(video.video_id)) {
      throw FormatError("normal test video \"" + video.video_id + "\" has anomaly annotations");
    }
    const auto segment_scores = score_segments(video, params, cfg, options.batch_size);
    VideoEvaluation ve;
    ve.series = expand_to_frames(video.video_id, segment_scores, video.num_frames);
    ve.labels = frame_labels(annotations, video.video_id, video.num_frames);
    all_scores.insert(all_scores.end(), ve.series.scores.begin(), ve.series.scores.end());
    all_labels.insert(all_labels.end(), ve.labels.begin(), ve.labels.end());
    const auto anomalous =
        static_cast<std::size_t>(std::count(ve.labels.begin(), ve.labels.end(), 1));
    result.num_anomalous_frames += anomalous;
    if (options.per_video && anomalous != 0 && anomalous != ve.labels.size()) {
      per_video_sum += roc_auc(ve.series.scores, ve.labels).auc;
      ++result.per_video_count;
    }
    result.videos.push_back(std::move(ve));
  }
  result.num_frames = all_scores.size();
  result.pooled = roc_auc(all_scores, all_labels);
  if (options.per_video) {
    if (result.per_video_count == 0) {
      throw UndefinedMetricError("per-video AUC: no test video contains both classes");
    }
    result.per_video_auc = per_video_sum / static_cast<double>(result.per_video_count);
  }
  return result;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_score_csv(const std::filesystem::path& path, const VideoEvaluation& video) {
  std::ostringstream out;
  out << "video_id,frame,score,label\n";
  for (std::size_t f = 0; f < video.series.scores.size(); ++f) {
    out << video.series.video_id << ',' << f << ',' << format_double(video.series.scores[f]) << ','
        << static_cast<int>(video.labels[f]) << '\n';
  }
  io::write_text_atomic(path, out.str());
}

void write_summary_csv(const std::filesystem::path& path, const EvalResult& result) {
  std::ostringstream out;
  out << "auc,eer,num_frames,num_anomalous_frames\n"
      << format_double(result.auc()) << ',' << format_double(result.pooled.eer) << ','
      << result.num_frames << ',' << result.num_anomalous_frames << '\n';
  io::write_text_atomic(path, out.str());
}

}  // namespace claws
