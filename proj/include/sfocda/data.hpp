#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sfocda/labels.hpp"
#include "sfocda/rng.hpp"
#include "sfocda/segmodel.hpp"
#include "sfocda/tensor.hpp"

namespace sfocda {

/// Color transform separating the domains: per-channel affine map, then
/// optional Gaussian blur, then additive Gaussian noise, clamped to [0,1].
/// Two styles with equal parameters produce bit-identical images for the
/// same scene seed; the noise stream never depends on the style name.
struct DomainStyle {
  std::string name;
  std::array<double, 3> gain{1.0, 1.0, 1.0};
  std::array<double, 3> bias{0.0, 0.0, 0.0};
  double noise = 0.0;
  double blur_sigma = 0.0;
};

struct DomainSpec {
  DomainStyle style;
  std::string role;  // "source" | "compound" | "open"
};

/// One source domain, three compound weathers, one held-out open domain.
std::vector<DomainSpec> default_domains();

/// Scene family: class-colored layered regions (background, road band, sky
/// band, ellipse blobs, rectangle blobs, one stripe) on a square canvas.
struct SceneSpec {
  int64_t size = 64;
  int64_t classes = 6;
  int max_ellipses = 3;
  int max_rects = 3;
  double color_jitter = 0.06;  // per-scene, per-class color wobble
};

struct Scene {
  Tensor image;    // [1,3,S,S], base colors in [0,1], no domain style
  LabelMap labels; // [1,S,S]
};

/// Deterministic in scene_seed; every pixel belongs to exactly one class.
Scene render_scene(const SceneSpec& spec, uint64_t scene_seed);

/// Apply `style` to a rendered image. The noise realization is a pure
/// function of scene_seed, so styles that share parameters collide exactly.
Tensor apply_domain_style(const Tensor& img, const DomainStyle& style,
                          uint64_t scene_seed);

struct SampleRef {
  std::string image;  // path relative to the dataset root
  std::string label;  // empty when unlabeled
  std::string domain;
  std::string role;   // "source" | "compound" | "open"
  std::string split;  // "train" | "test" (derived from the path layout)
};

struct DatasetManifest {
  int version = 1;
  int64_t classes = 6;
  std::vector<SampleRef> samples;

  /// Indices whose "<domain>_<split>" equals `name`.
  std::vector<size_t> split(const std::string& name) const;
  /// Indices with the given role and split.
  std::vector<size_t> role_split(const std::string& role,
                                 const std::string& split) const;
  std::vector<std::string> domains() const;
};

struct GenerationCounts {
  int train_per_domain = 200;
  int test_per_domain = 50;
};

/// Render and write every domain listed in `domains` under `out_dir`
/// (<domain>/<split>/NNNN_img.sfot + NNNN_lab.sfot) plus manifest.json.
/// Compound and open training samples are written without label files.
DatasetManifest generate_domains(const SceneSpec& spec,
                                 const std::vector<DomainSpec>& domains,
                                 const GenerationCounts& counts, uint64_t seed,
                                 const std::filesystem::path& out_dir);

void save_manifest(const DatasetManifest& m, const std::filesystem::path& dir);
DatasetManifest load_manifest(const std::filesystem::path& dir);

Tensor load_image(const std::filesystem::path& root, const SampleRef& s);
LabelMap load_label(const std::filesystem::path& root, const SampleRef& s);

/// Per-channel mean then std of the block-1 feature map, length 2 * width.
std::vector<float> extract_style_embedding(const SegNet& model,
                                           const Tensor& img);

/// Seeded k-means++ with Lloyd iterations (100 max, 1e-6 movement stop);
/// empty clusters are re-seeded from the farthest point. Returns one hard
/// assignment per input row.
std::vector<int> cluster_latent_domains(
    const std::vector<std::vector<float>>& points, int k, uint64_t seed);

enum class SamplerMode { random, oracle, clustering };
SamplerMode parse_sampler_mode(const std::string& name);
std::string sampler_mode_name(SamplerMode m);

/// Batch index stream over a dataset split. `uniform` draws i.i.d.;
/// `balanced` forces at least one index per distinct group id into every
/// batch, cycling a per-group seeded shuffle.
class BatchSampler {
public:
  static BatchSampler uniform(size_t n, int batch, const Rng& rng);
  static BatchSampler balanced(std::vector<int> group_ids, int batch,
                               const Rng& rng);

  std::vector<size_t> next();
  int batch() const { return batch_; }

private:
  BatchSampler() = default;
  bool balanced_ = false;
  int batch_ = 0;
  size_t n_ = 0;
  Rng rng_{0, 0};
  // balanced mode
  std::vector<std::vector<size_t>> groups_;   // indices per group
  std::vector<std::vector<uint32_t>> order_;  // shuffled cursor order
  std::vector<size_t> cursor_;
};

}  // namespace sfocda
