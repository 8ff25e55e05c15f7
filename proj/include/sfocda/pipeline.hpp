#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sfocda/data.hpp"
#include "sfocda/pixel_aug.hpp"
#include "sfocda/segmodel.hpp"
#include "sfocda/style_aug.hpp"

namespace sfocda {

struct Stage1Config {
  int64_t iters = 3000;
  double base_lr = 2.5e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double power = 0.9;
  int batch = 4;
};

/// Adaptation-stage settings. Deliberately path-free: the adapt stage can
/// name hyperparameters only, never where data lives, so a config cannot
/// point the self-training loop at source files.
struct Stage2Config {
  int64_t iters = 1500;
  double base_lr = 1e-4;
  double tau = 0.9;
  double q = 50.0;
  int batch = 4;
  SamplerMode sampler = SamplerMode::random;
};

struct ExperimentConfig {
  uint64_t seed = 0;
  std::filesystem::path data_dir;
  SegNetConfig model;
  InjectionConfig inject;
  PhotometricConfig photo;
  bool photo_enabled = true;
  Stage1Config stage1;
  Stage2Config stage2;
  /// Test splits to report on; empty selects every "<domain>_test" split
  /// (the adapt stage always drops source-role domains).
  std::vector<std::string> eval_splits;

  void validate() const;  // throws ConfigError
};

/// Minutes-scale defaults.
ExperimentConfig desk_config();
/// Full-schedule profile: 150K iterations at batch size 1, same rates.
ExperimentConfig paper_config();

/// Strict key=value config. Lines are `dotted.key = value`, '#' comments and
/// blank lines allowed. Unknown keys, malformed values, and duplicate keys
/// all throw ConfigError. An optional `profile = desk|paper` line selects the
/// base defaults; every other key overrides one field.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical one-line-per-key form; equal configs serialize identically.
std::string serialize_config(const ExperimentConfig& cfg);
/// FNV-1a 64 over the canonical serialization, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// FNV-1a 64 over a checkpoint's manifest and parameter payloads.
std::string checkpoint_hash(const std::filesystem::path& dir);

/// Per-class IoU bookkeeping. Pixels whose ground truth is kIgnoreLabel are
/// skipped; a class enters the mean only when it occurs in ground truth.
class IouAccumulator {
public:
  explicit IouAccumulator(int64_t num_classes);

  /// Shapes must match; predictions must be < num_classes.
  void add(const LabelMap& gt, const LabelMap& pred);

  std::vector<std::pair<int64_t, double>> per_class() const;
  double miou() const;

private:
  std::vector<int64_t> tp_, fp_, fn_, gt_count_;
};

struct SplitMetrics {
  std::string name;
  std::vector<std::pair<int64_t, double>> per_class;
  double miou = 0.0;
};

struct MetricsReport {
  std::vector<SplitMetrics> splits;
  double compound_miou = 0.0;       // mean over compound test splits (C)
  double compound_open_miou = 0.0;  // compound plus open (C+O)
  double open_miou = 0.0;
  double pl_coverage = -1.0;        // set by the adapt stage, else negative
  double runtime_seconds = 0.0;     // never serialized into metrics files
  std::string config_hash;

  const SplitMetrics* find(const std::string& name) const;
};

/// metrics.csv (`split,class,iou` rows) and metrics.json. Runtime is written
/// separately by the run drivers so metrics files stay seed-deterministic.
void write_metrics(const MetricsReport& r, const std::filesystem::path& dir);

/// Argmax over channels, ties to the lowest class index.
LabelMap argmax_labels(const Tensor& logits);

MetricsReport evaluate_model(const SegNet& model, const DatasetManifest& manifest,
                             const std::filesystem::path& root,
                             const std::vector<std::string>& splits);

struct RunOptions {
  std::ostream* log = nullptr;
  int64_t log_every = 500;
};

struct RunResult {
  std::filesystem::path checkpoint;
  MetricsReport report;
};

/// Stage I: supervised training on the labeled source split under
/// photometric + style-swap augmentation, then evaluation on the test splits.
/// Writes checkpoint/, metrics.csv, metrics.json, config.txt, runtime.txt.
RunResult train_source(const ExperimentConfig& cfg,
                       const std::filesystem::path& out_dir,
                       const RunOptions& opts = {});

/// Stage II: loads the frozen source checkpoint, pseudo-labels the compound
/// training images once (cached under <out>/plcache by checkpoint hash, tau
/// and q), clones the model and self-trains on confident pixels. Saves the
/// adapted checkpoint, metrics, and an audit log of every tensor file read.
RunResult adapt_target(const ExperimentConfig& cfg,
                       const std::filesystem::path& checkpoint_dir,
                       const std::filesystem::path& out_dir,
                       const RunOptions& opts = {});

/// Standalone evaluation of a saved checkpoint on labeled test splits.
MetricsReport evaluate(const std::filesystem::path& checkpoint_dir,
                       const std::filesystem::path& data_dir,
                       const std::vector<std::string>& splits);

struct StylizeOptions {
  int grid_h = 2;
  int grid_w = 4;
  StyleVariant variant = StyleVariant::inter;
  uint64_t seed = 0;
  bool identity = false;  // force the identity assignment
  bool write_png = true;  // skipped silently when zlib is absent
};

/// Image-level patch style swap over a batch of equally sized tensor images.
/// Writes styled_NNNN.sfot (and .png) plus stats.json with the donor
/// assignment and per-patch pre/post channel statistics.
std::vector<std::filesystem::path> stylize(
    const std::vector<std::filesystem::path>& images,
    const std::filesystem::path& out_dir, const StylizeOptions& opt);

/// Style embeddings of the compound training split plus k-means cluster ids,
/// as CSV rows `index,image,domain,cluster,e0..`. k <= 0 selects one cluster
/// per compound domain.
void style_embed(const std::filesystem::path& checkpoint_dir,
                 const std::filesystem::path& data_dir,
                 const std::filesystem::path& out_csv, int k, uint64_t seed);

enum class SweepAxis { patches, beta, block };

SweepAxis parse_sweep_axis(const std::string& name);
std::string sweep_axis_name(SweepAxis a);

struct SweepRow {
  double value = 0.0;
  int seeds = 0;
  double open_mean = 0.0, open_std = 0.0;
  double c_mean = 0.0, c_std = 0.0;
  double co_mean = 0.0, co_std = 0.0;
};

/// Stage-I training per (value, seed) with seeds base.seed + i, aggregated
/// as mean and population std. Writes sweep.csv plus one run directory per
/// point. Patch value 0 disables style swap entirely (the baseline row).
std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepAxis axis,
                            const std::vector<double>& values, int seeds,
                            const std::filesystem::path& out_dir,
                            const RunOptions& opts = {});

void write_sweep_csv(const std::vector<SweepRow>& rows, SweepAxis axis,
                     const std::filesystem::path& path);

}  // namespace sfocda
