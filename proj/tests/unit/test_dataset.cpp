#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "claws/dataset.hpp"
#include "claws/errors.hpp"
#include "claws/synth.hpp"
#include "temp_dir.hpp"

using namespace claws;
using claws::testing::TempDir;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

template <class Fn>
std::string error_of(Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

VideoFeatures video_with(std::size_t m, std::size_t d = 3) {
  VideoFeatures v;
  v.video_id = "v";
  v.label = Label::abnormal;
  v.num_frames = m * kFramesPerSegment;
  v.segments = Matrix(m, d);
  for (std::size_t i = 0; i < m; ++i) v.segments(i, 0) = static_cast<double>(i);
  return v;
}

// Little-endian header for a feature file, optionally followed by values.
std::string feature_header(std::uint32_t m, std::uint32_t d) {
  std::string s = "CLWSFEAT";
  for (std::uint32_t v : {1u, m, d})
    for (int k = 0; k < 4; ++k) s.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  return s;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("manifest parsing") {
    TempDir dir;
    const auto path = dir / "manifest.csv";
    write_text(path, "video_id,label,num_frames,feature_path\na,0,32,a.bin\nb,1,160,sub/b.bin\n");
    const Manifest m = load_manifest(path);
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[1].label == Label::abnormal);
    CHECK(m.entries[1].num_frames == 160);
    CHECK(m.resolve(m.entries[1]) == dir.path() / "sub/b.bin");
    CHECK(m.find("a").num_frames == 32);
    CHECK_THROWS_AS(m.find("zzz"), FormatError);
  }

  TEST_CASE("manifest errors name the problem and line") {
    TempDir dir;
    const auto path = dir / "manifest.csv";
    write_text(path, "video_id,label,num_frames,feature_path\na,0,32,a.bin\na,1,32,b.bin\n");
    std::string msg = error_of([&] { load_manifest(path); });
    CHECK(msg.find("duplicate video_id \"a\"") != std::string::npos);
    CHECK(msg.find(":3:") != std::string::npos);

    write_text(path, "video_id,label,num_frames,feature_path\na,2,32,a.bin\n");
    msg = error_of([&] { load_manifest(path); });
    CHECK(msg.find("label must be 0 or 1") != std::string::npos);
    CHECK(msg.find(":2:") != std::string::npos);

    write_text(path, "video_id,label,num_frames,feature_path\na,0,abc,a.bin\n");
    CHECK_THROWS_AS(load_manifest(path), FormatError);
    write_text(path, "video_id,label,num_frames,feature_path\na,0,8,a.bin\n");
    CHECK_THROWS_AS(load_manifest(path), FormatError);
    write_text(path, "id,label\na,0\n");
    CHECK_THROWS_AS(load_manifest(path), FormatError);
    write_text(path, "video_id,label,num_frames,feature_path\na,0,32\n");
    CHECK_THROWS_AS(load_manifest(path), FormatError);
    CHECK_THROWS_AS(load_manifest(dir / "missing.csv"), FormatError);
  }

  TEST_CASE("feature files") {
    TempDir dir;
    const auto path = dir / "f.bin";
    Matrix m(3, 4);
    for (std::size_t i = 0; i < 12; ++i) m.values()[i] = 0.25 * static_cast<double>(i);
    write_feature_file(path, m);
    CHECK(fs::file_size(path) == 8 + 12 + 12 * 4);
    const Matrix back = read_feature_file(path, 4);
    CHECK(back == m);

    CHECK_THROWS_AS(read_feature_file(path, 2), DimensionError);

    // Truncated payload.
    std::string bytes = slurp(path);
    write_text(path, bytes.substr(0, bytes.size() - 3));
    CHECK(error_of([&] { read_feature_file(path); }).find("truncated") != std::string::npos);

    // Header only.
    write_text(path, feature_header(3, 4));
    CHECK_THROWS_AS(read_feature_file(path), FormatError);

    bytes[0] = 'X';
    write_text(path, bytes);
    CHECK_THROWS_AS(read_feature_file(path), FormatError);

    // Trailing garbage.
    write_feature_file(path, m);
    write_text(path, slurp(path) + "x");
    CHECK_THROWS_AS(read_feature_file(path), FormatError);
  }

  TEST_CASE("fit_stats examples") {
    VideoFeatures a;
    a.segments = Matrix::from_rows({{1, 3}});
    VideoFeatures b;
    b.segments = Matrix::from_rows({{3, 5}});
    const std::vector<VideoFeatures> both{a, b};
    const PreprocStats s = fit_stats(both);
    CHECK(s.mean == std::vector<double>{2, 4});
    CHECK(s.computed_over == 2);
    CHECK(s.stddev == std::vector<double>{1, 1});
    CHECK(fit_stats(std::span(&a, 1)).mean == std::vector<double>{1, 3});
    CHECK_THROWS_AS(fit_stats(std::vector<VideoFeatures>{}), ConfigError);
  }

  TEST_CASE("fit_stats matches a two-pass oracle") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(5.0, 3.0);
    std::vector<VideoFeatures> videos;
    std::size_t total = 0;
    while (total < 10000) {
      VideoFeatures v = video_with(1 + rng() % 300, 6);
      for (double& x : v.segments.values()) x = n(rng);
      total += v.num_segments();
      videos.push_back(std::move(v));
    }
    const PreprocStats s = fit_stats(videos);
    for (std::size_t j = 0; j < 6; ++j) {
      double sum = 0.0;
      for (const auto& v : videos)
        for (std::size_t i = 0; i < v.num_segments(); ++i) sum += v.segments(i, j);
      const double mean = sum / static_cast<double>(total);
      double corr = 0.0;
      for (const auto& v : videos)
        for (std::size_t i = 0; i < v.num_segments(); ++i) corr += v.segments(i, j) - mean;
      CHECK(std::abs(s.mean[j] - (mean + corr / static_cast<double>(total))) < 1e-12);
    }
  }

  TEST_CASE("normalize") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-10, 10);
    VideoFeatures v = video_with(50, 4);
    for (double& x : v.segments.values()) x = u(rng);
    const PreprocStats s = fit_stats(std::span(&v, 1));

    const VideoFeatures once = normalize(v, s);
    for (std::size_t j = 0; j < 4; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < 50; ++i) sum += once.segments(i, j);
      CHECK(std::abs(sum) < 1e-9);
    }

    // A second application subtracts the mean again.
    const VideoFeatures twice = normalize(once, s);
    CHECK(std::abs(twice.segments(7, 2) - (v.segments(7, 2) - 2 * s.mean[2])) < 1e-12);

    VideoFeatures at_mean = video_with(1, 4);
    std::copy(s.mean.begin(), s.mean.end(), at_mean.segments.row(0).begin());
    const VideoFeatures zeroed = normalize(at_mean, s);
    for (double x : zeroed.segments.values()) CHECK(x == 0.0);

    const VideoFeatures scaled = normalize(v, s, true);
    double sq = 0.0;
    for (std::size_t i = 0; i < 50; ++i) sq += scaled.segments(i, 1) * scaled.segments(i, 1);
    CHECK(std::abs(sq / 50 - 1.0) < 1e-9);

    CHECK_THROWS_AS(normalize(video_with(3, 2), s), DimensionError);
  }

  TEST_CASE("stats file round trip") {
    TempDir dir;
    VideoFeatures v = video_with(9, 3);
    v.segments(4, 2) = 0.1;
    const PreprocStats s = fit_stats(std::span(&v, 1));
    write_stats(dir / "stats.bin", s);
    const PreprocStats back = read_stats(dir / "stats.bin");
    CHECK(back.mean == s.mean);
    CHECK(back.stddev == s.stddev);
    CHECK(back.computed_over == 9);
  }

  TEST_CASE("segment batches") {
    auto sizes = [](std::size_t m) {
      std::vector<std::size_t> out;
      for (const auto& b : segment_batches(video_with(m), 64)) out.push_back(b.size());
      return out;
    };
    CHECK(sizes(130) == std::vector<std::size_t>{64, 64, 2});
    CHECK(sizes(65) == std::vector<std::size_t>{64});
    CHECK(sizes(64) == std::vector<std::size_t>{64});
    CHECK(sizes(1).empty());
    CHECK(sizes(5) == std::vector<std::size_t>{5});
    CHECK_THROWS_AS(segment_batches(video_with(10), 1), ConfigError);

    // Coverage: a prefix of the segments, each once, in order, labels inherited.
    const VideoFeatures v = video_with(200);
    std::size_t next = 0;
    for (const auto& b : segment_batches(v, 64)) {
      CHECK(b.segment_offset == next);
      CHECK(b.label == v.label);
      CHECK(b.video_id == v.video_id);
      CHECK(b.video_segments == 200);
      for (std::size_t r = 0; r < b.size(); ++r) CHECK(b.features(r, 0) == double(next + r));
      next += b.size();
    }
    CHECK(next == 200);
  }

  TEST_CASE("epoch order") {
    CHECK(make_epoch_order(1, 0, 5) == std::vector<std::size_t>{0});
    CHECK(make_epoch_order(50, 3, 9) == make_epoch_order(50, 3, 9));
    CHECK(make_epoch_order(50, 3, 9) != make_epoch_order(50, 4, 9));
    CHECK(make_epoch_order(50, 3, 9) != make_epoch_order(50, 3, 10));
    auto order = make_epoch_order(1000, 0, 1);
    std::sort(order.begin(), order.end());
    std::vector<std::size_t> iota(1000);
    std::iota(iota.begin(), iota.end(), std::size_t{0});
    CHECK(order == iota);
  }

  TEST_CASE("annotations") {
    TempDir dir;
    const auto path = dir / "ann.csv";
    write_text(path, "video_id,start_frame,end_frame\nb,40,50\nb,2,5\nc,0,0\n");
    const FrameAnnotations a = load_annotations(path);
    CHECK(a.has("b"));
    CHECK_FALSE(a.has("a"));
    CHECK(a.intervals.at("b") == std::vector<FrameInterval>{{2, 5}, {40, 50}});

    Manifest m;
    m.entries = {{"b", Label::abnormal, 64, "b.bin"}, {"c", Label::abnormal, 16, "c.bin"}};
    validate_annotations(a, m);
    m.entries[0].num_frames = 50;
    CHECK_THROWS_AS(validate_annotations(a, m), FormatError);

    write_text(path, "video_id,start_frame,end_frame\nb,10,20\nb,20,30\n");
    m.entries[0].num_frames = 64;
    CHECK_THROWS_AS(validate_annotations(load_annotations(path), m), FormatError);
    write_text(path, "video_id,start_frame,end_frame\nb,10,5\n");
    CHECK_THROWS_AS(load_annotations(path), FormatError);
  }

  TEST_CASE("synth generation") {
    TempDir dir;
    SynthConfig one;
    one.n_normal = 1;
    one.n_abnormal = 0;
    one.min_segments = one.max_segments = 10;
    const SynthSplit s = synth_generate(one, Split::train, dir / "one");
    REQUIRE(s.manifest.entries.size() == 1);
    CHECK(s.manifest.entries[0].label == Label::normal);
    CHECK(s.manifest.entries[0].num_frames == 160);
    CHECK(s.annotations.intervals.empty());
    CHECK(read_feature_file(s.manifest.resolve(s.manifest.entries[0])).rows() == 10);

    SynthConfig cfg;
    cfg.n_normal = 3;
    cfg.n_abnormal = 4;
    const SynthSplit a = synth_generate(cfg, Split::test, dir / "a");
    const SynthSplit b = synth_generate(cfg, Split::test, dir / "b");
    CHECK(slurp(a.manifest_path) == slurp(b.manifest_path));
    CHECK(slurp(a.annotations_path) == slurp(b.annotations_path));
    for (const auto& e : a.manifest.entries) {
      CHECK(slurp(a.manifest.resolve(e)) == slurp(b.manifest.resolve(e)));
    }

    // The annotated run matches the shifted segments and covers ⌈0.3·m⌉ of them.
    const Manifest loaded = load_manifest(a.manifest_path, Split::test);
    const FrameAnnotations ann = load_annotations(a.annotations_path);
    validate_annotations(ann, loaded);
    std::size_t abnormal = 0;
    for (const auto& e : loaded.entries) {
      const Matrix seg = read_feature_file(loaded.resolve(e), cfg.dim);
      CHECK(e.num_frames == seg.rows() * kFramesPerSegment);
      CHECK(seg.rows() >= cfg.min_segments);
      CHECK(seg.rows() <= cfg.max_segments);
      if (e.label == Label::normal) {
        CHECK_FALSE(ann.has(e.video_id));
        continue;
      }
      ++abnormal;
      REQUIRE(ann.intervals.at(e.video_id).size() == 1);
      const FrameInterval iv = ann.intervals.at(e.video_id)[0];
      CHECK(iv.start_frame % kFramesPerSegment == 0);
      CHECK((iv.end_frame + 1) % kFramesPerSegment == 0);
      const std::size_t run = (iv.end_frame + 1 - iv.start_frame) / kFramesPerSegment;
      CHECK(run == static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(seg.rows()))));
      double inside = 0.0, outside = 0.0;
      for (std::size_t i = 0; i < seg.rows(); ++i) {
        const bool in = i * kFramesPerSegment >= iv.start_frame && i * kFramesPerSegment <= iv.end_frame;
        (in ? inside : outside) += seg(i, 0);
      }
      CHECK(inside / double(run) > outside / double(seg.rows() - run) + 2.0);
    }
    CHECK(abnormal == 4);

    SynthConfig bad;
    bad.anomaly_fraction = 1.0;
    CHECK_THROWS_AS(synth_generate(bad, Split::train, dir / "bad"), ConfigError);
    bad = {};
    bad.min_segments = 20;
    bad.max_segments = 10;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}
