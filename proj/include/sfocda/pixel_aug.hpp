#pragma once

#include "sfocda/rng.hpp"
#include "sfocda/tensor.hpp"

namespace sfocda {

/// Photometric augmentation for RGB images in [0,1]. Each jitter op fires
/// independently with `jitter_prob`; strengths are the half-widths of the
/// factor ranges.
struct PhotometricConfig {
  double jitter_prob = 0.8;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
  double blur_prob = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  double grayscale_prob = 0.2;
};

/// Apply brightness/contrast/saturation/hue jitter, Gaussian blur and random
/// grayscale per sample, in that order, clamping to [0,1] after each op.
/// The rng draw count per sample is fixed, so call sequences are replayable.
/// Returns a fresh leaf tensor; gradients do not flow through augmentation.
Tensor photometric(const Tensor& img, const PhotometricConfig& cfg, Rng& rng);

/// In-place separable Gaussian blur of one plane. Kernel radius ceil(3*sigma),
/// reflected borders; a no-op when the radius rounds to zero.
void gaussian_blur(float* chan, int64_t h, int64_t w, double sigma,
                   std::vector<float>& tmp);

}  // namespace sfocda
