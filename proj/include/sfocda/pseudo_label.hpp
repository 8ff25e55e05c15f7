#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sfocda/labels.hpp"
#include "sfocda/rng.hpp"
#include "sfocda/segmodel.hpp"
#include "sfocda/tensor.hpp"

namespace sfocda {

/// Per-class confidence cutoffs. t[c] = min(tau, value at the top-q%
/// boundary of the descending-sorted max-probabilities of pixels argmaxed
/// to c); classes with no pixels get tau.
struct ClassThresholds {
  std::vector<double> t;
  double tau = 0.9;
  double q = 50.0;
};

struct PseudoLabelMap {
  LabelMap labels;
  double coverage = 0.0;  // assigned pixels / total pixels
};

/// Streaming threshold estimation over softmax maps. Per-class collections
/// are exact until `cap` values, then switch to uniform reservoir sampling.
class MptAccumulator {
public:
  MptAccumulator(int64_t num_classes, double tau, double q,
                 int64_t cap = 1000000, uint64_t seed = 0);

  /// probs: [N,C,H,W] softmax maps; C must equal num_classes.
  void add(const Tensor& probs);

  /// Throws ContractError if no pixels were accumulated.
  ClassThresholds thresholds() const;

  int64_t seen(int64_t c) const { return seen_[static_cast<size_t>(c)]; }
  int64_t total_seen() const;

private:
  double tau_;
  double q_;
  int64_t cap_;
  std::vector<std::vector<float>> values_;
  std::vector<int64_t> seen_;
  Rng rng_;
};

/// One-shot thresholds over a single probability tensor.
ClassThresholds mpt_thresholds(const Tensor& probs, double tau, double q);

/// Pixel gets its argmax class (ties to the lowest index) when its max
/// probability is >= the class threshold, else kIgnoreLabel.
PseudoLabelMap assign_pseudo_labels(const Tensor& probs,
                                    const ClassThresholds& th);

/// Self-training loss: masked cross-entropy against the pseudo-labels.
inline Tensor ssl_loss(const Tensor& logits, const PseudoLabelMap& pseudo) {
  return cross_entropy_masked(logits, pseudo.labels);
}

void save_thresholds_json(const ClassThresholds& th,
                          const std::filesystem::path& path);
ClassThresholds load_thresholds_json(const std::filesystem::path& path);

/// Label maps persist as rank-3 [n,h,w] u8 tensors.
void save_label_map(const LabelMap& m, const std::filesystem::path& path);
LabelMap load_label_map(const std::filesystem::path& path);

}  // namespace sfocda
