#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfocda/rng.hpp"
#include "sfocda/tensor.hpp"

namespace sfocda {

/// Rectangular partition of an HxW plane into n_h x n_w patches. Uniform
/// splits use floor division; the last row/column absorbs the remainder.
struct PatchGrid {
  int n_h = 1;
  int n_w = 1;
  std::vector<int64_t> row_splits;  // size n_h + 1, row_splits[0] = 0, back() = H
  std::vector<int64_t> col_splits;

  static PatchGrid uniform(int n_h, int n_w, int64_t H, int64_t W);

  int patches() const { return n_h * n_w; }
  int64_t height() const { return row_splits.back(); }
  int64_t width() const { return col_splits.back(); }

  struct Rect {
    int64_t r0, r1, c0, c1;
    int64_t area() const { return (r1 - r0) * (c1 - c0); }
  };
  Rect rect(int p) const;
};

/// Map a patch count to a grid: the tallest n_h x n_w factorization with
/// n_h <= n_w (4 -> 2x2, 8 -> 2x4, 2 -> 1x2).
PatchGrid grid_for(int patches, int64_t H, int64_t W);

/// Per (sample, patch, channel) first and second moments. std is the
/// population value clamped to at least kStyleEps; `clamped` records where
/// the raw std fell below the clamp.
struct PatchStyle {
  int64_t samples = 0;
  int patches = 0;
  int64_t channels = 0;
  std::vector<float> mean;
  std::vector<float> stddev;
  std::vector<uint8_t> clamped;

  size_t index(int64_t k, int p, int64_t c) const {
    return static_cast<size_t>((k * patches + p) * channels + c);
  }
};

inline constexpr double kStyleEps = 1e-5;

PatchStyle compute_patch_style(const Tensor& feat, const PatchGrid& grid);

/// Donor assignment over patch slots. Slot i of the output takes its style
/// from slot assignment[i]; slots are numbered sample-major (k * patches + p).
struct SwapPlan {
  enum class Scope { intra, inter };
  Scope scope = Scope::inter;
  int64_t samples = 0;
  int patches = 0;
  std::vector<uint32_t> assignment;

  static SwapPlan identity(int64_t samples, int patches);
  /// Independent permutation of each sample's own patches.
  static SwapPlan intra_random(int64_t samples, int patches, Rng& rng);
  /// One permutation over all samples * patches slots.
  static SwapPlan inter_random(int64_t samples, int patches, Rng& rng);

  SwapPlan inverse() const;
  void validate() const;  // throws ContractError if not a permutation in scope
};

enum class StyleVariant { off, intra, inter, mixstyle, crossnorm };

StyleVariant parse_style_variant(const std::string& name);
std::string style_variant_name(StyleVariant v);

/// Feature-level style injection settings. `sites` are encoder positions:
/// 0 applies at the input image, l >= 1 after block l (before its pooling).
struct InjectionConfig {
  double beta = 0.3;
  std::vector<int> sites = {1, 2};
  StyleVariant variant = StyleVariant::inter;
  double mix_alpha = 0.1;
  int patches = 4;
  /// When positive, every training step forwards a pool of this many images
  /// so styles can swap across the whole pool, but the loss reads only the
  /// first image. 0 keeps the full batch in the loss.
  int style_pool_size = 0;
};

/// Re-style `content` per patch with `style` statistics: for matching slots,
/// out = std(donor) * (x - mean(x)) / std(x) + mean(donor). Gradients flow
/// into both the content and the donor tensors.
///
/// adain: whole-plane stats, sample i of content takes sample i of style.
Tensor adain(const Tensor& content, const Tensor& style);

/// Deterministic core of the patch swap; the plan picks each slot's donor.
Tensor cpss_apply(const Tensor& feat, const PatchGrid& grid,
                  const SwapPlan& plan);

Tensor cpss_intra(const Tensor& feat, const PatchGrid& grid, Rng& rng);
Tensor cpss_inter(const Tensor& feat, const PatchGrid& grid, Rng& rng);

/// MixStyle with explicit pairing and per-sample lambda: donor stats are
/// lambda * own + (1 - lambda) * paired.
Tensor mixstyle_apply(const Tensor& feats, const std::vector<uint32_t>& pairing,
                      const std::vector<double>& lambdas);

Tensor mixstyle(const Tensor& feats, Rng& rng, double alpha);

/// Whole-plane stats swapped across the batch; equals cpss_inter on a 1x1
/// grid by construction.
Tensor crossnorm(const Tensor& feats, Rng& rng);

/// Training-time entry point: with probability beta applies the configured
/// variant, otherwise passes through. Eval mode never draws or applies.
Tensor inject(const Tensor& feat, const InjectionConfig& cfg, Rng& rng,
              bool training);

}  // namespace sfocda
