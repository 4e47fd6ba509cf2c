// Command-line driver: synth, fit-stats, train, eval, score.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "claws/checkpoint.hpp"
#include "claws/errors.hpp"
#include "claws/evaluation.hpp"
#include "claws/synth.hpp"
#include "claws/trainer.hpp"

namespace fs = std::filesystem;
using namespace claws;

namespace {

// Removes everything it tracked unless commit() is called.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = paths_.rbegin(); it != paths_.rend(); ++it) fs::remove_all(*it, ec);
  }
  // Creates `dir` if needed; a directory created here is removed wholesale.
  void directory(const fs::path& dir) {
    if (fs::exists(dir)) return;
    fs::create_directories(dir);
    paths_.push_back(dir);
  }
  const fs::path& file(const fs::path& path) {
    paths_.push_back(path);
    return path;
  }
  void commit() { committed_ = true; }
  // Stops tracking `path` so it survives a failure.
  void keep(const fs::path& path) { std::erase(paths_, path); }

 private:
  std::vector<fs::path> paths_;
  bool committed_ = false;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

TrainToggles parse_ablations(const std::vector<std::string>& items) {
  TrainToggles t;
  const std::map<std::string, bool*> keys{{"rbs", &t.rbs},
                                          {"nsm1", &t.nsm1},
                                          {"nsm2", &t.nsm2},
                                          {"loss_ts_s", &t.loss_ts_s},
                                          {"loss_c", &t.loss_c}};
  for (const auto& item : items) {
    const auto eq = item.find('=');
    const std::string key = item.substr(0, eq);
    const std::string value = eq == std::string::npos ? "" : item.substr(eq + 1);
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError("unknown ablation key \"" + key + "\"");
    if (value != "on" && value != "off") {
      throw ConfigError("ablation " + key + " must be on or off, got \"" + value + "\"");
    }
    *it->second = value == "on";
  }
  return t;
}

std::vector<VideoFeatures> load_normalized(const Manifest& manifest, std::size_t dim,
                                           const PreprocStats& stats, bool scale_variance) {
  auto videos = load_all(manifest, dim);
  for (auto& v : videos) v = normalize(std::move(v), stats, scale_variance);
  return videos;
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  fs::path out;
  SynthConfig cfg;
  std::size_t test_normal = 20;
  std::size_t test_abnormal = 20;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  app.add_option("--out", a.out, "Output directory (gets train/ and test/)")->required();
  app.add_option("--n-normal", a.cfg.n_normal, "Normal training videos")->capture_default_str();
  app.add_option("--n-abnormal", a.cfg.n_abnormal, "Abnormal training videos")->capture_default_str();
  app.add_option("--test-normal", a.test_normal, "Normal test videos")->capture_default_str();
  app.add_option("--test-abnormal", a.test_abnormal, "Abnormal test videos")->capture_default_str();
  app.add_option("--min-segments", a.cfg.min_segments)->capture_default_str();
  app.add_option("--max-segments", a.cfg.max_segments)->capture_default_str();
  app.add_option("--dim", a.cfg.dim, "Feature dimension")->capture_default_str();
  app.add_option("--anomaly-fraction", a.cfg.anomaly_fraction)->capture_default_str();
  app.add_option("--shift-magnitude", a.cfg.shift_magnitude)->capture_default_str();
  app.add_option("--seed", a.cfg.seed)->envname("CLAWS_SEED")->capture_default_str();
}

void run_synth(const SynthArgs& a) {
  SynthConfig test = a.cfg;
  test.n_normal = a.test_normal;
  test.n_abnormal = a.test_abnormal;
  a.cfg.validate();
  test.validate();
  OutputGuard guard;
  guard.directory(a.out);
  guard.directory(a.out / "train");
  guard.directory(a.out / "test");
  const SynthSplit tr = synth_generate(a.cfg, Split::train, a.out / "train");
  const SynthSplit te = synth_generate(test, Split::test, a.out / "test");
  guard.commit();
  std::cout << tr.manifest_path.string() << " (" << tr.manifest.entries.size() << " videos)\n"
            << te.manifest_path.string() << " (" << te.manifest.entries.size() << " videos)\n"
            << te.annotations_path.string() << " (" << te.annotations.intervals.size()
            << " annotated videos)\n";
}

// --- fit-stats --------------------------------------------------------------

struct FitStatsArgs {
  fs::path manifest;
  fs::path out;
  std::size_t dim = 2048;
};

void add_fit_stats(CLI::App& app, FitStatsArgs& a) {
  app.add_option("--manifest", a.manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  app.add_option("--dim", a.dim, "Feature dimension")->capture_default_str();
  app.add_option("--out", a.out, "Stats file to write")->required();
}

void run_fit_stats(const FitStatsArgs& a) {
  const Manifest manifest = load_manifest(a.manifest, Split::train);
  const PreprocStats stats = fit_stats(load_all(manifest, a.dim));
  OutputGuard guard;
  write_stats(guard.file(a.out), stats);
  guard.commit();
  std::cout << "stats over " << stats.computed_over << " segments -> " << a.out.string() << '\n';
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  fs::path manifest;
  fs::path out;
  fs::path stats;
  fs::path resume;
  TrainConfig cfg;
  std::vector<std::string> ablations;
  bool scale_variance = false;
  bool quiet = false;
  CLI::Option* lr_drop_at = nullptr;
};

void add_model_options(CLI::App& app, TrainConfig& cfg) {
  app.add_option("--dim", cfg.dims.d, "Feature dimension")->capture_default_str();
  app.add_option("--z1", cfg.dims.z1, "First hidden width")->capture_default_str();
  app.add_option("--z2", cfg.dims.z2, "Second hidden width")->capture_default_str();
}

void add_train(CLI::App& app, TrainArgs& a) {
  TrainConfig& c = a.cfg;
  app.add_option("--manifest", a.manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  app.add_option("--out", a.out, "Run directory")->required();
  app.add_option("--stats", a.stats, "Precomputed stats (fit on the training set if absent)")
      ->check(CLI::ExistingFile);
  app.add_option("--resume", a.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  add_model_options(app, c);
  app.add_option("--iters", c.total_iters, "Total iterations")->capture_default_str();
  app.add_option("--lr", c.lr, "Initial learning rate")->capture_default_str();
  a.lr_drop_at = app.add_option("--lr-drop-at", c.lr_drop_at,
                                "Iteration of the learning-rate drop (default 80% of --iters)");
  app.add_option("--lr-drop-factor", c.lr_drop_factor)->capture_default_str();
  app.add_option("--batch-size", c.batch_size)->capture_default_str();
  app.add_option("--seed", c.seed)->envname("CLAWS_SEED")->capture_default_str();
  app.add_option("--dropout", c.dropout_rate)->capture_default_str();
  app.add_option("--lambda1", c.loss.lambda1)->capture_default_str();
  app.add_option("--lambda2", c.loss.lambda2)->capture_default_str();
  app.add_option("--alpha", c.loss.alpha)->capture_default_str();
  app.add_option("--rmsprop-rho", c.rmsprop.rho)->capture_default_str();
  app.add_option("--rmsprop-eps", c.rmsprop.eps)->capture_default_str();
  app.add_option("--clip-norm", c.clip_norm, "Global gradient-norm clip, 0 = off")->capture_default_str();
  app.add_option("--cluster-mode", c.cluster_mode)
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, ClusterMode>{{"frozen-assignment", ClusterMode::frozen_assignment},
                                             {"frozen-scalar", ClusterMode::frozen_scalar}}))
      ->default_str("frozen-assignment");
  app.add_flag("--gate-after-relu", c.gate_after_relu, "Apply the suppression gate after the ReLU");
  app.add_option("--ablation", a.ablations, "key=on|off for rbs, nsm1, nsm2, loss_ts_s, loss_c");
  app.add_flag("--scale-variance", a.scale_variance, "Also divide features by their stddev");
  app.add_option("--log-every", c.log_every)->capture_default_str();
  app.add_option("--checkpoint-every", c.checkpoint_every, "0 = final checkpoint only")
      ->capture_default_str();
  app.add_flag("--quiet", a.quiet, "No progress output");
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << "iteration,lr,pred,cluster,ts,sparsity,total\n";
  for (const auto& r : rows) {
    out << r.iteration << ',' << fmt(r.lr) << ',' << fmt(r.loss.pred) << ',' << fmt(r.loss.cluster)
        << ',' << fmt(r.loss.ts) << ',' << fmt(r.loss.sparsity) << ',' << fmt(r.loss.total) << '\n';
  }
  return out.str();
}

std::string clusters_csv(const std::vector<ClusterLogRow>& rows) {
  std::ostringstream out;
  out << "video_id,epoch,d_i,degenerate\n";
  for (const auto& r : rows) {
    out << r.video_id << ',' << r.epoch << ',' << fmt(r.distance) << ',' << (r.degenerate ? 1 : 0)
        << '\n';
  }
  return out.str();
}

void run_train(TrainArgs& a) {
  TrainConfig cfg = a.cfg;
  cfg.toggles = parse_ablations(a.ablations);
  if (a.lr_drop_at->count() == 0) cfg.lr_drop_at = cfg.total_iters * 4 / 5;
  cfg.validate();

  const Manifest manifest = load_manifest(a.manifest, Split::train);
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) resume = read_checkpoint(a.resume);

  OutputGuard guard;
  guard.directory(a.out);
  PreprocStats stats;
  if (a.stats.empty()) {
    stats = fit_stats(load_all(manifest, cfg.dims.d));
    write_stats(guard.file(a.out / "stats.bin"), stats);
  } else {
    stats = read_stats(a.stats);
  }
  const auto videos = load_normalized(manifest, cfg.dims.d, stats, a.scale_variance);

  if (cfg.checkpoint_every != 0) guard.directory(a.out / "checkpoints");
  TrainHooks hooks;
  std::optional<Checkpoint> last;
  hooks.on_checkpoint = [&](const Checkpoint& c) {
    last = c;
    if (c.opt.iteration == cfg.total_iters) return;  // written below
    char name[40];
    std::snprintf(name, sizeof name, "iter_%08llu.ckpt",
                  static_cast<unsigned long long>(c.opt.iteration));
    write_checkpoint(guard.file(a.out / "checkpoints" / name), c);
  };
  if (!a.quiet) {
    hooks.on_metrics = [](const MetricsRow& r) {
      std::printf("iter %llu lr %.3g total %.6g pred %.6g cluster %.6g ts %.6g sparsity %.6g\n",
                  static_cast<unsigned long long>(r.iteration), r.lr, r.loss.total, r.loss.pred,
                  r.loss.cluster, r.loss.ts, r.loss.sparsity);
      std::fflush(stdout);
    };
  }

  TrainResult result;
  try {
    result = train(videos, cfg, hooks, std::move(resume));
  } catch (const NonFiniteError&) {
    // The last good state is the only output kept.
    if (last) {
      guard.keep(a.out);
      write_checkpoint(a.out / "aborted.ckpt", *last);
      std::cerr << "last finite state saved to " << (a.out / "aborted.ckpt").string() << '\n';
    }
    throw;
  }
  write_checkpoint(guard.file(a.out / "final.ckpt"), result.final);
  write_text(guard.file(a.out / "metrics.csv"), metrics_csv(result.metrics));
  if (cfg.toggles.loss_c) write_text(guard.file(a.out / "clusters.csv"), clusters_csv(result.cluster_log));
  guard.commit();
  if (!a.quiet) {
    std::cout << "batches per epoch " << result.batches_per_epoch << "\n"
              << (a.out / "final.ckpt").string() << '\n';
  }
}

// --- eval / score -----------------------------------------------------------

struct EvalArgs {
  fs::path manifest;
  fs::path annotations;
  fs::path checkpoint;
  fs::path stats;
  fs::path out;
  std::vector<std::string> ablations;
  std::size_t batch_size = 64;
  bool per_video = false;
  bool scale_variance = false;
};

void add_scoring_options(CLI::App& app, fs::path& checkpoint, fs::path& stats,
                         std::vector<std::string>& ablations, std::size_t& batch_size,
                         bool& scale_variance) {
  app.add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  app.add_option("--stats", stats, "Stats used for training")->required()->check(CLI::ExistingFile);
  app.add_option("--ablation", ablations, "nsm1/nsm2=on|off to match the trained model");
  app.add_option("--batch-size", batch_size, "Scoring window")->capture_default_str();
  app.add_flag("--scale-variance", scale_variance, "Also divide features by their stddev");
}

ModelConfig eval_model_config(const std::vector<std::string>& ablations) {
  const TrainToggles t = parse_ablations(ablations);
  ModelConfig m;
  m.use_nsm1 = t.nsm1;
  m.use_nsm2 = t.nsm2;
  m.mode = Mode::eval;
  return m;
}

void add_eval(CLI::App& app, EvalArgs& a) {
  app.add_option("--manifest", a.manifest, "Test manifest")->required()->check(CLI::ExistingFile);
  app.add_option("--annotations", a.annotations, "Frame annotations")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--out", a.out, "Directory for summary.csv and scores/")->required();
  app.add_flag("--per-video", a.per_video, "Report the mean per-video AUC instead of pooled");
  add_scoring_options(app, a.checkpoint, a.stats, a.ablations, a.batch_size, a.scale_variance);
}

void run_eval(const EvalArgs& a) {
  const ModelConfig model = eval_model_config(a.ablations);
  const Checkpoint ckpt = read_checkpoint(a.checkpoint);
  const PreprocStats stats = read_stats(a.stats);
  const Manifest manifest = load_manifest(a.manifest, Split::test);
  const FrameAnnotations annotations = load_annotations(a.annotations);
  validate_annotations(annotations, manifest);
  const auto videos = load_normalized(manifest, ckpt.params.dims().d, stats, a.scale_variance);

  EvalOptions options;
  options.batch_size = a.batch_size;
  options.per_video = a.per_video;
  const EvalResult r = evaluate(videos, annotations, ckpt.params, model, options);

  OutputGuard guard;
  guard.directory(a.out);
  guard.directory(a.out / "scores");
  for (const auto& v : r.videos) write_score_csv(guard.file(a.out / "scores" / (v.series.video_id + ".csv")), v);
  write_summary_csv(guard.file(a.out / "summary.csv"), r);
  guard.commit();
  std::cout << "auc " << fmt(r.auc()) << " eer " << fmt(r.pooled.eer) << " frames " << r.num_frames
            << " anomalous " << r.num_anomalous_frames << '\n';
}

struct ScoreArgs {
  fs::path checkpoint;
  fs::path stats;
  fs::path features;
  std::size_t num_frames = 0;
  std::vector<std::string> ablations;
  std::size_t batch_size = 64;
  bool scale_variance = false;
};

void add_score(CLI::App& app, ScoreArgs& a) {
  app.add_option("--features", a.features, "Feature file of one video")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--num-frames", a.num_frames, "Frame count (default: 16 per segment)");
  add_scoring_options(app, a.checkpoint, a.stats, a.ablations, a.batch_size, a.scale_variance);
}

void run_score(const ScoreArgs& a) {
  const ModelConfig model = eval_model_config(a.ablations);
  const Checkpoint ckpt = read_checkpoint(a.checkpoint);
  const PreprocStats stats = read_stats(a.stats);
  VideoFeatures v;
  v.video_id = a.features.stem().string();
  v.segments = read_feature_file(a.features, ckpt.params.dims().d);
  v.num_frames = a.num_frames != 0 ? a.num_frames : v.num_segments() * kFramesPerSegment;
  v = normalize(std::move(v), stats, a.scale_variance);
  const auto seg = score_segments(v, ckpt.params, model, a.batch_size);
  const FrameScoreSeries s = expand_to_frames(v.video_id, seg, v.num_frames);
  std::ostringstream out;
  out << "frame,score\n";
  for (std::size_t f = 0; f < s.scores.size(); ++f) out << f << ',' << fmt(s.scores[f]) << '\n';
  std::cout << out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised anomaly scoring over segment features"};
  app.set_config("--config", "", "TOML/INI file of option values; command-line flags win");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();

  SynthArgs synth_args;
  FitStatsArgs fit_args;
  TrainArgs train_args;
  EvalArgs eval_args;
  ScoreArgs score_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic train/test dataset");
  CLI::App* fit = app.add_subcommand("fit-stats", "Compute feature normalization stats");
  CLI::App* tr = app.add_subcommand("train", "Train a model");
  CLI::App* ev = app.add_subcommand("eval", "Frame-level ROC/AUC on a test set");
  CLI::App* sc = app.add_subcommand("score", "Print frame scores for one feature file");
  add_synth(*synth, synth_args);
  add_fit_stats(*fit, fit_args);
  add_train(*tr, train_args);
  add_eval(*ev, eval_args);
  add_score(*sc, score_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) run_synth(synth_args);
    if (fit->parsed()) run_fit_stats(fit_args);
    if (tr->parsed()) run_train(train_args);
    if (ev->parsed()) run_eval(eval_args);
    if (sc->parsed()) run_score(score_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
