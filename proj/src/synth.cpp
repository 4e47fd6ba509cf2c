#include "claws/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "claws/errors.hpp"
#include "claws/rng.hpp"

namespace claws {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (n_normal + n_abnormal == 0) throw ConfigError("synth: need at least one video");
  if (min_segments < 1 || max_segments < min_segments) {
    throw ConfigError("synth: segment range must satisfy 1 <= min <= max");
  }
  if (dim == 0) throw ConfigError("synth: dimension must be positive");
  if (!(anomaly_fraction > 0.0 && anomaly_fraction < 1.0)) {
    throw ConfigError("synth: anomaly fraction must lie in (0, 1)");
  }
  if (!std::isfinite(shift_magnitude)) throw ConfigError("synth: shift magnitude must be finite");
}

SynthSplit synth_generate(const SynthConfig& config, Split split, const fs::path& out_dir) {
  config.validate();
  const std::uint64_t split_index = split == Split::train ? 0 : 1;
  const std::string prefix = split == Split::train ? "train" : "test";

  fs::create_directories(out_dir / "features");

  std::vector<Label> labels(config.n_normal, Label::normal);
  labels.insert(labels.end(), config.n_abnormal, Label::abnormal);
  Rng order_rng = make_rng(config.seed, RngStream::synth, {split_index});
  std::shuffle(labels.begin(), labels.end(), order_rng);

  SynthSplit result;
  result.manifest.split = split;
  result.manifest.base_dir = out_dir;
  std::size_t normal_count = 0, abnormal_count = 0;
  for (std::size_t v = 0; v < labels.size(); ++v) {
    Rng rng = make_rng(config.seed, RngStream::synth, {split_index, v + 1});
    std::uniform_int_distribution<std::size_t> len(config.min_segments, config.max_segments);
    const std::size_t m = len(rng);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix segments(m, config.dim);
    for (double& x : segments.values()) x = gauss(rng);

    const Label label = labels[v];
    const std::size_t ordinal = label == Label::abnormal ? abnormal_count++ : normal_count++;
    char name[64];
    std::snprintf(name, sizeof name, "%s_%s_%03zu", prefix.c_str(),
                  label == Label::abnormal ? "abnormal" : "normal", ordinal);
    const std::string id = name;

    if (label == Label::abnormal) {
      const auto run = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::ceil(config.anomaly_fraction * static_cast<double>(m))),
          1, m);
      std::uniform_int_distribution<std::size_t> start_dist(0, m - run);
      const std::size_t start = start_dist(rng);
      const std::size_t shifted = std::min(kShiftedDims, config.dim);
      for (std::size_t i = start; i < start + run; ++i)
        for (std::size_t j = 0; j < shifted; ++j) segments(i, j) += config.shift_magnitude;
      result.annotations.intervals[id].push_back(
          {start * kFramesPerSegment, (start + run) * kFramesPerSegment - 1});
    }

    const std::string rel = "features/" + id + ".bin";
    write_feature_file(out_dir / rel, segments);
    result.manifest.entries.push_back({id, label, m * kFramesPerSegment, rel});
  }

  result.manifest_path = out_dir / "manifest.csv";
  write_manifest(result.manifest_path, result.manifest);
  if (split == Split::test) {
    result.annotations_path = out_dir / "annotations.csv";
    write_annotations(result.annotations_path, result.annotations);
  }
  return result;
}

}  // namespace claws
