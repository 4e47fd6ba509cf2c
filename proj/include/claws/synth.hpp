#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "claws/dataset.hpp"

namespace claws {

/// Weakly labelled Gaussian stand-in for extracted segment features.
/// Normal segments are N(0, I_d); an abnormal video carries one contiguous
/// run of ⌈anomaly_fraction·m⌉ segments whose first four dimensions are
/// shifted by `shift_magnitude`.
struct SynthConfig {
  std::size_t n_normal = 40;
  std::size_t n_abnormal = 40;
  std::size_t min_segments = 64;
  std::size_t max_segments = 192;
  std::size_t dim = 16;
  double anomaly_fraction = 0.3;
  double shift_magnitude = 3.0;
  std::uint64_t seed = 7;

  /// Throws ConfigError on invalid combinations.
  void validate() const;
};

inline constexpr std::size_t kShiftedDims = 4;

struct SynthSplit {
  Manifest manifest;
  /// Ground-truth anomalous frames for every abnormal video.
  FrameAnnotations annotations;
  std::filesystem::path manifest_path;
  /// Empty for the train split, which carries only weak labels on disk.
  std::filesystem::path annotations_path;
};

/// Writes `<out_dir>/manifest.csv`, `<out_dir>/features/<id>.bin` and, for the
/// test split, `<out_dir>/annotations.csv`. Deterministic in (config, split).
SynthSplit synth_generate(const SynthConfig& config, Split split,
                          const std::filesystem::path& out_dir);

}  // namespace claws
