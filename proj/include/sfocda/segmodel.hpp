#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sfocda/labels.hpp"
#include "sfocda/rng.hpp"
#include "sfocda/style_aug.hpp"
#include "sfocda/tensor.hpp"

namespace sfocda {

struct SegNetConfig {
  int64_t in_channels = 3;
  int64_t num_classes = 6;
  std::vector<int64_t> widths = {16, 32, 64};

  int blocks() const { return static_cast<int>(widths.size()); }
  int64_t pool_factor() const { return int64_t{1} << widths.size(); }
  void validate() const;  // throws ConfigError
};

/// Encoder-decoder segmentation net: per block two 3x3 conv+ReLU then 2x
/// maxpool; head is a 1x1 conv followed by nearest upsampling back to the
/// input resolution. Style injection sites: 0 = the input image, l >= 1 =
/// after block l's convolutions, before its pooling.
class SegNet {
public:
  SegNet(const SegNetConfig& cfg, Rng& rng);

  const SegNetConfig& config() const { return cfg_; }

  /// Training forward. Injection fires per `inj` (sites, variant, beta);
  /// eval mode (`training == false`) never draws from `rng`.
  Tensor forward(const Tensor& img, bool training, const InjectionConfig& inj,
                 Rng& rng);

  /// Eval forward, no injection, no randomness.
  Tensor forward(const Tensor& img) const;

  /// Feature map after `block`'s convolutions (1-based), eval mode.
  Tensor features(const Tensor& img, int block) const;

  /// Name/tensor pairs in a fixed order; tensors share the model's storage.
  const std::vector<std::pair<std::string, Tensor>>& parameters() const {
    return params_;
  }

  void zero_grad();

  /// Deep copy with independent parameter storage.
  SegNet clone() const;

  /// Checkpoint directory: manifest.txt plus one .sfot file per parameter.
  void save(const std::filesystem::path& dir) const;
  static SegNet load(const std::filesystem::path& dir);

private:
  SegNet() = default;
  void collect_params();
  Tensor run(const Tensor& img, bool training, const InjectionConfig* inj,
             Rng* rng, int stop_after_block) const;

  SegNetConfig cfg_;
  struct Conv {
    Tensor w;
    Tensor b;
  };
  std::vector<std::array<Conv, 2>> blocks_;
  Conv head_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

/// Mean of -log softmax(logits)[label] over pixels whose label is not
/// kIgnoreLabel; exactly 0 (with zero gradient) when every pixel is ignored.
Tensor cross_entropy_masked(const Tensor& logits, const LabelMap& labels);

inline Tensor source_loss(const Tensor& logits, const LabelMap& labels) {
  return cross_entropy_masked(logits, labels);
}

/// SGD with momentum, weight decay, and polynomial learning-rate decay:
/// lr(i) = base_lr * (1 - i/total)^power.
struct SgdPolyConfig {
  double base_lr = 2.5e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double power = 0.9;
  int64_t total_iters = 1;
};

class SgdPoly {
public:
  SgdPoly(const SgdPolyConfig& cfg,
          std::vector<std::pair<std::string, Tensor>> params);

  double lr() const { return lr_at(iter_); }
  double lr_at(int64_t iter) const;
  int64_t iter() const { return iter_; }

  /// v <- momentum*v + grad + wd*param; param <- param - lr(iter)*v.
  /// Throws ContractError if any parameter has no gradient buffer.
  void step();

private:
  SgdPolyConfig cfg_;
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> velocity_;
  int64_t iter_ = 0;
};

}  // namespace sfocda
