#pragma once

#include <cstdint>
#include <vector>

#include "sfocda/errors.hpp"

namespace sfocda {

/// Sentinel for pixels excluded from losses and metrics.
inline constexpr uint8_t kIgnoreLabel = 255;

/// Dense per-pixel class ids, row-major [n][h][w]. Values are class indices
/// in {0..C-1} or kIgnoreLabel.
struct LabelMap {
  int64_t n = 0;
  int64_t h = 0;
  int64_t w = 0;
  std::vector<uint8_t> labels;

  static LabelMap full(int64_t n, int64_t h, int64_t w, uint8_t v) {
    if (n <= 0 || h <= 0 || w <= 0) throw ShapeError("LabelMap dims must be positive");
    LabelMap m;
    m.n = n;
    m.h = h;
    m.w = w;
    m.labels.assign(static_cast<size_t>(n * h * w), v);
    return m;
  }

  int64_t numel() const { return n * h * w; }

  uint8_t at(int64_t i, int64_t y, int64_t x) const {
    return labels[static_cast<size_t>((i * h + y) * w + x)];
  }
  uint8_t& at(int64_t i, int64_t y, int64_t x) {
    return labels[static_cast<size_t>((i * h + y) * w + x)];
  }
};

}  // namespace sfocda
