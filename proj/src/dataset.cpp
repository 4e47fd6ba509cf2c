#include "claws/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "claws/errors.hpp"
#include "claws/rng.hpp"
#include "csv.hpp"

namespace claws {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kManifestHeader = "video_id,label,num_frames,feature_path";
constexpr std::string_view kAnnotationHeader = "video_id,start_frame,end_frame";
constexpr std::string_view kFeatureMagic = "CLWSFEAT";
constexpr std::string_view kStatsMagic = "CLWSSTAT";
constexpr std::uint32_t kFormatVersion = 1;

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

}  // namespace

fs::path Manifest::resolve(const ManifestEntry& e) const {
  fs::path p(e.feature_path);
  return p.is_absolute() ? p : base_dir / p;
}

const ManifestEntry& Manifest::find(const std::string& video_id) const {
  auto it = std::find_if(entries.begin(), entries.end(),
                         [&](const ManifestEntry& e) { return e.video_id == video_id; });
  if (it == entries.end()) throw FormatError("video \"" + video_id + "\" not in manifest");
  return *it;
}

Manifest load_manifest(const fs::path& path, Split split) {
  Manifest m;
  m.split = split;
  m.base_dir = path.parent_path();
  std::set<std::string> seen;
  for (const auto& row : csv::read(path, kManifestHeader)) {
    ManifestEntry e;
    e.video_id = row.fields[0];
    if (e.video_id.empty()) throw FormatError(where(path, row.line) + "empty video_id");
    if (!seen.insert(e.video_id).second) {
      throw FormatError(where(path, row.line) + "duplicate video_id \"" + e.video_id + "\"");
    }
    if (row.fields[1] == "0") {
      e.label = Label::normal;
    } else if (row.fields[1] == "1") {
      e.label = Label::abnormal;
    } else {
      throw FormatError(where(path, row.line) + "label must be 0 or 1, got \"" + row.fields[1] +
                        "\"");
    }
    e.num_frames = csv::parse_number<std::size_t>(row.fields[2], path, row.line, "num_frames");
    if (e.num_frames < kFramesPerSegment) {
      throw FormatError(where(path, row.line) + "num_frames " + std::to_string(e.num_frames) +
                        " is shorter than one segment");
    }
    e.feature_path = row.fields[3];
    if (e.feature_path.empty()) throw FormatError(where(path, row.line) + "empty feature_path");
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::ostringstream out;
  out << kManifestHeader << '\n';
  for (const auto& e : manifest.entries) {
    out << e.video_id << ',' << (e.label == Label::abnormal ? 1 : 0) << ',' << e.num_frames
        << ',' << e.feature_path << '\n';
  }
  io::write_text_atomic(path, out.str());
}

Matrix read_feature_file(const fs::path& path, std::size_t expected_dim) {
  io::Reader r(io::read_file(path), path.string());
  r.expect_magic(kFeatureMagic);
  const auto version = r.u32("version");
  if (version != kFormatVersion) {
    throw FormatError(path.string() + ": unsupported feature file version " +
                      std::to_string(version));
  }
  const std::size_t m = r.u32("segment count");
  const std::size_t d = r.u32("dimension");
  if (expected_dim != 0 && d != expected_dim) {
    throw DimensionError(path.string() + ": feature dimension " + std::to_string(d) +
                         " does not match configured " + std::to_string(expected_dim));
  }
  if (m == 0 || d == 0) throw FormatError(path.string() + ": empty feature matrix");
  if (r.remaining() < m * d * 4) {
    throw FormatError(path.string() + ": truncated payload, expected " + std::to_string(m * d) +
                      " values");
  }
  Matrix out(m, d);
  for (double& v : out.values()) {
    v = static_cast<double>(r.f32("value"));
    if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite feature value");
  }
  r.expect_end();
  return out;
}

void write_feature_file(const fs::path& path, const Matrix& segments) {
  io::Writer w;
  w.bytes(kFeatureMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(segments.rows()));
  w.u32(static_cast<std::uint32_t>(segments.cols()));
  for (double v : segments.values()) w.f32(static_cast<float>(v));
  io::write_file_atomic(path, w.buffer());
}

VideoFeatures load_video_features(const Manifest& manifest, const ManifestEntry& entry,
                                  std::size_t expected_dim) {
  VideoFeatures v;
  v.video_id = entry.video_id;
  v.label = entry.label;
  v.num_frames = entry.num_frames;
  v.segments = read_feature_file(manifest.resolve(entry), expected_dim);
  return v;
}

std::vector<VideoFeatures> load_all(const Manifest& manifest, std::size_t expected_dim) {
  std::vector<VideoFeatures> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) out.push_back(load_video_features(manifest, e, expected_dim));
  return out;
}

PreprocStats fit_stats(std::span<const VideoFeatures> train) {
  std::size_t d = 0;
  std::uint64_t count = 0;
  for (const auto& v : train) {
    if (v.num_segments() == 0) continue;
    if (d == 0) d = v.dim();
    if (v.dim() != d) throw DimensionError("fit_stats: mixed feature dimensions");
    count += v.num_segments();
  }
  if (count == 0) throw ConfigError("fit_stats: training set has no feature vectors");

  PreprocStats s;
  s.computed_over = count;
  s.mean.assign(d, 0.0);
  for (const auto& v : train)
    for (std::size_t i = 0; i < v.num_segments(); ++i)
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += v.segments(i, j);
  for (double& m : s.mean) m /= static_cast<double>(count);

  s.stddev.assign(d, 0.0);
  for (const auto& v : train)
    for (std::size_t i = 0; i < v.num_segments(); ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double dev = v.segments(i, j) - s.mean[j];
        s.stddev[j] += dev * dev;
      }
  for (double& sd : s.stddev) sd = std::sqrt(sd / static_cast<double>(count));
  return s;
}

VideoFeatures normalize(VideoFeatures video, const PreprocStats& stats, bool scale_variance) {
  if (video.dim() != stats.dim()) {
    throw DimensionError("normalize: video \"" + video.video_id + "\" has dimension " +
                         std::to_string(video.dim()) + ", stats have " +
                         std::to_string(stats.dim()));
  }
  for (std::size_t i = 0; i < video.num_segments(); ++i) {
    auto row = video.segments.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] -= stats.mean[j];
      if (scale_variance && stats.stddev[j] > 0.0) row[j] /= stats.stddev[j];
    }
  }
  return video;
}

void write_stats(const fs::path& path, const PreprocStats& stats) {
  io::Writer w;
  w.bytes(kStatsMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(stats.dim()));
  w.u64(stats.computed_over);
  for (double v : stats.mean) w.f64(v);
  for (double v : stats.stddev) w.f64(v);
  io::write_file_atomic(path, w.buffer());
}

PreprocStats read_stats(const fs::path& path) {
  io::Reader r(io::read_file(path), path.string());
  r.expect_magic(kStatsMagic);
  if (r.u32("version") != kFormatVersion) throw FormatError(path.string() + ": unsupported version");
  const std::size_t d = r.u32("dimension");
  PreprocStats s;
  s.computed_over = r.u64("count");
  s.mean.resize(d);
  s.stddev.resize(d);
  for (double& v : s.mean) v = r.f64("mean");
  for (double& v : s.stddev) v = r.f64("stddev");
  r.expect_end();
  return s;
}

std::vector<Batch> segment_batches(const VideoFeatures& video, std::size_t batch_size,
                                   std::size_t min_tail) {
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  std::vector<Batch> out;
  const std::size_t m = video.num_segments();
  for (std::size_t offset = 0; offset < m; offset += batch_size) {
    const std::size_t n = std::min(batch_size, m - offset);
    if (n < batch_size && n < min_tail) break;
    Batch b;
    b.video_id = video.video_id;
    b.label = video.label;
    b.features = video.segments.slice_rows(offset, n);
    b.segment_offset = offset;
    b.video_segments = m;
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<std::size_t> make_epoch_order(std::size_t num_batches, std::uint64_t epoch,
                                          std::uint64_t seed) {
  std::vector<std::size_t> order(num_batches);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, RngStream::epoch_order, {epoch});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

FrameAnnotations load_annotations(const fs::path& path) {
  FrameAnnotations a;
  for (const auto& row : csv::read(path, kAnnotationHeader)) {
    FrameInterval iv;
    iv.start_frame = csv::parse_number<std::size_t>(row.fields[1], path, row.line, "start_frame");
    iv.end_frame = csv::parse_number<std::size_t>(row.fields[2], path, row.line, "end_frame");
    if (iv.end_frame < iv.start_frame) {
      throw FormatError(where(path, row.line) + "end_frame precedes start_frame");
    }
    a.intervals[row.fields[0]].push_back(iv);
  }
  for (auto& [id, ivs] : a.intervals) {
    std::sort(ivs.begin(), ivs.end(),
              [](const FrameInterval& x, const FrameInterval& y) { return x.start_frame < y.start_frame; });
  }
  return a;
}

void write_annotations(const fs::path& path, const FrameAnnotations& annotations) {
  std::ostringstream out;
  out << kAnnotationHeader << '\n';
  for (const auto& [id, ivs] : annotations.intervals)
    for (const auto& iv : ivs) out << id << ',' << iv.start_frame << ',' << iv.end_frame << '\n';
  io::write_text_atomic(path, out.str());
}

void validate_annotations(const FrameAnnotations& annotations, const Manifest& manifest) {
  for (const auto& [id, ivs] : annotations.intervals) {
    const ManifestEntry& e = manifest.find(id);
    for (std::size_t k = 0; k < ivs.size(); ++k) {
      if (ivs[k].end_frame >= e.num_frames) {
        throw FormatError("annotation for \"" + id + "\" ends at frame " +
                          std::to_string(ivs[k].end_frame) + " beyond " +
                          std::to_string(e.num_frames) + " frames");
      }
      if (k > 0 && ivs[k].start_frame <= ivs[k - 1].end_frame) {
        throw FormatError("annotation intervals for \"" + id + "\" overlap");
      }
    }
  }
}

}  // namespace claws
