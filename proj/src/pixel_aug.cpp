#include "sfocda/pixel_aug.hpp"

#include <algorithm>
#include <cmath>

namespace sfocda {

namespace {

inline float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

inline float luma(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float d = mx - mn;
  v = mx;
  s = mx > 0.0f ? d / mx : 0.0f;
  if (d <= 0.0f) {
    h = 0.0f;
    return;
  }
  if (mx == r)
    h = (g - b) / d;
  else if (mx == g)
    h = 2.0f + (b - r) / d;
  else
    h = 4.0f + (r - g) / d;
  h /= 6.0f;
  if (h < 0.0f) h += 1.0f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  if (s <= 0.0f) {
    r = g = b = v;
    return;
  }
  h = h - std::floor(h);
  const float hh = h * 6.0f;
  const int i = std::min(5, static_cast<int>(hh));
  const float f = hh - i;
  const float p = v * (1.0f - s);
  const float q = v * (1.0f - s * f);
  const float t = v * (1.0f - s * (1.0f - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

// reflect index into [0, n) without repeating the border sample
int64_t reflect(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

}  // namespace

void gaussian_blur(float* chan, int64_t h, int64_t w, double sigma,
                   std::vector<float>& tmp) {
  const int64_t radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
  if (radius < 1) return;
  std::vector<float> kernel(2 * radius + 1);
  double total = 0.0;
  for (int64_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[i + radius] = static_cast<float>(v);
    total += v;
  }
  const float inv = static_cast<float>(1.0 / total);
  for (auto& v : kernel) v *= inv;

  tmp.resize(static_cast<size_t>(h) * w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int64_t i = -radius; i <= radius; ++i)
        acc += static_cast<double>(kernel[i + radius]) *
               chan[y * w + reflect(x + i, w)];
      tmp[y * w + x] = static_cast<float>(acc);
    }
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int64_t i = -radius; i <= radius; ++i)
        acc += static_cast<double>(kernel[i + radius]) *
               tmp[reflect(y + i, h) * w + x];
      chan[y * w + x] = static_cast<float>(acc);
    }
}

Tensor photometric(const Tensor& img, const PhotometricConfig& cfg, Rng& rng) {
  const Shape4& s = img.shape();
  if (s.c != 3) throw ShapeError("photometric: expected 3 channels, got " +
                                 s.str());
  std::vector<float> out = img.data();
  const int64_t plane = s.h * s.w;
  std::vector<float> tmp;

  for (int64_t k = 0; k < s.n; ++k) {
    float* r = out.data() + (k * 3 + 0) * plane;
    float* g = out.data() + (k * 3 + 1) * plane;
    float* b = out.data() + (k * 3 + 2) * plane;

    // draws are unconditional so every sample consumes the same count
    const bool do_bri = rng.bernoulli(cfg.jitter_prob);
    const double f_bri =
        rng.uniform(std::max(0.0, 1.0 - cfg.brightness), 1.0 + cfg.brightness);
    const bool do_con = rng.bernoulli(cfg.jitter_prob);
    const double f_con =
        rng.uniform(std::max(0.0, 1.0 - cfg.contrast), 1.0 + cfg.contrast);
    const bool do_sat = rng.bernoulli(cfg.jitter_prob);
    const double f_sat =
        rng.uniform(std::max(0.0, 1.0 - cfg.saturation), 1.0 + cfg.saturation);
    const bool do_hue = rng.bernoulli(cfg.jitter_prob);
    const double d_hue = rng.uniform(-cfg.hue, cfg.hue);
    const bool do_blur = rng.bernoulli(cfg.blur_prob);
    const double sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
    const bool do_gray = rng.bernoulli(cfg.grayscale_prob);

    if (do_bri) {
      const float f = static_cast<float>(f_bri);
      for (int64_t i = 0; i < plane; ++i) {
        r[i] = clamp01(r[i] * f);
        g[i] = clamp01(g[i] * f);
        b[i] = clamp01(b[i] * f);
      }
    }
    if (do_con) {
      double m = 0.0;
      for (int64_t i = 0; i < plane; ++i) m += luma(r[i], g[i], b[i]);
      const float mean = static_cast<float>(m / plane);
      const float f = static_cast<float>(f_con);
      for (int64_t i = 0; i < plane; ++i) {
        r[i] = clamp01((r[i] - mean) * f + mean);
        g[i] = clamp01((g[i] - mean) * f + mean);
        b[i] = clamp01((b[i] - mean) * f + mean);
      }
    }
    if (do_sat) {
      const float f = static_cast<float>(f_sat);
      for (int64_t i = 0; i < plane; ++i) {
        const float l = luma(r[i], g[i], b[i]);
        r[i] = clamp01((r[i] - l) * f + l);
        g[i] = clamp01((g[i] - l) * f + l);
        b[i] = clamp01((b[i] - l) * f + l);
      }
    }
    if (do_hue) {
      const float d = static_cast<float>(d_hue);
      for (int64_t i = 0; i < plane; ++i) {
        float h, sat, val;
        rgb_to_hsv(r[i], g[i], b[i], h, sat, val);
        hsv_to_rgb(h + d, sat, val, r[i], g[i], b[i]);
        r[i] = clamp01(r[i]);
        g[i] = clamp01(g[i]);
        b[i] = clamp01(b[i]);
      }
    }
    if (do_blur) {
      gaussian_blur(r, s.h, s.w, sigma, tmp);
      gaussian_blur(g, s.h, s.w, sigma, tmp);
      gaussian_blur(b, s.h, s.w, sigma, tmp);
      for (int64_t i = 0; i < plane; ++i) {
        r[i] = clamp01(r[i]);
        g[i] = clamp01(g[i]);
        b[i] = clamp01(b[i]);
      }
    }
    if (do_gray) {
      for (int64_t i = 0; i < plane; ++i) {
        const float l = clamp01(luma(r[i], g[i], b[i]));
        r[i] = g[i] = b[i] = l;
      }
    }
  }

  return Tensor::from_data(s, std::move(out));
}

}  // namespace sfocda
