#pragma once

// Slow reference implementations the tests trust. Everything here is written
// for readability, not speed, and stays independent of the library kernels.
// The double-precision forwards also serve the finite-difference harness:
// displaced evaluations in f64 keep the numerics far above rounding noise.

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "sfocda/labels.hpp"
#include "sfocda/rng.hpp"
#include "sfocda/style_aug.hpp"
#include "sfocda/tensor.hpp"

namespace oracle {

using DVec = std::vector<double>;

inline DVec to_double(const std::vector<float>& v) {
  return DVec(v.begin(), v.end());
}

struct ConvSpec {
  int64_t n, ci, hi, wi, co, kh, kw;
  int stride, pad;
  int64_t ho() const { return (hi + 2 * pad - kh) / stride + 1; }
  int64_t wo() const { return (wi + 2 * pad - kw) / stride + 1; }
};

inline DVec conv2d_d(const ConvSpec& s, const DVec& x, const DVec& w,
                     const DVec& b) {
  const int64_t ho = s.ho(), wo = s.wo();
  DVec out(s.n * s.co * ho * wo);
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t co = 0; co < s.co; ++co)
      for (int64_t oh = 0; oh < ho; ++oh)
        for (int64_t ow = 0; ow < wo; ++ow) {
          double acc = b.empty() ? 0.0 : b[co];
          for (int64_t ci = 0; ci < s.ci; ++ci)
            for (int64_t kh = 0; kh < s.kh; ++kh)
              for (int64_t kw = 0; kw < s.kw; ++kw) {
                const int64_t ih = oh * s.stride - s.pad + kh;
                const int64_t iw = ow * s.stride - s.pad + kw;
                if (ih < 0 || ih >= s.hi || iw < 0 || iw >= s.wi) continue;
                acc += x[((n * s.ci + ci) * s.hi + ih) * s.wi + iw] *
                       w[((co * s.ci + ci) * s.kh + kh) * s.kw + kw];
              }
          out[((n * s.co + co) * ho + oh) * wo + ow] = acc;
        }
  return out;
}

inline std::vector<float> naive_conv2d(const ConvSpec& s,
                                       const std::vector<float>& x,
                                       const std::vector<float>& w,
                                       const std::vector<float>& b) {
  const DVec out = conv2d_d(s, to_double(x), to_double(w), to_double(b));
  return std::vector<float>(out.begin(), out.end());
}

inline DVec maxpool2d_d(const sfocda::Shape4& s, int factor, const DVec& x) {
  const int64_t ho = s.h / factor, wo = s.w / factor;
  DVec out(s.n * s.c * ho * wo);
  for (int64_t nc = 0; nc < s.n * s.c; ++nc)
    for (int64_t oh = 0; oh < ho; ++oh)
      for (int64_t ow = 0; ow < wo; ++ow) {
        double best = x[nc * s.h * s.w + (oh * factor) * s.w + ow * factor];
        for (int64_t dh = 0; dh < factor; ++dh)
          for (int64_t dw = 0; dw < factor; ++dw)
            best = std::max(best, x[nc * s.h * s.w +
                                    (oh * factor + dh) * s.w +
                                    (ow * factor + dw)]);
        out[nc * ho * wo + oh * wo + ow] = best;
      }
  return out;
}

inline DVec softmax_channels_d(const sfocda::Shape4& s, const DVec& x) {
  DVec out(x.size());
  const int64_t plane = s.h * s.w;
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t i = 0; i < plane; ++i) {
      double mx = x[n * s.c * plane + i];
      for (int64_t c = 1; c < s.c; ++c)
        mx = std::max(mx, x[(n * s.c + c) * plane + i]);
      double denom = 0.0;
      for (int64_t c = 0; c < s.c; ++c) {
        const double e = std::exp(x[(n * s.c + c) * plane + i] - mx);
        out[(n * s.c + c) * plane + i] = e;
        denom += e;
      }
      for (int64_t c = 0; c < s.c; ++c)
        out[(n * s.c + c) * plane + i] /= denom;
    }
  return out;
}

/// Donor mix per content slot: list of (style slot, weight).
using DonorList = std::vector<std::vector<std::pair<uint32_t, double>>>;

/// Patchwise restyle straight from the definition: per slot and channel,
/// out = sd_mix * (x - mean) / sd + mean_mix, population moments, std
/// clamped at kStyleEps.
inline DVec style_transfer_d(const sfocda::Shape4& cs,
                             const sfocda::PatchGrid& cgrid,
                             const sfocda::Shape4& ss,
                             const sfocda::PatchGrid& sgrid,
                             const DonorList& donors, const DVec& content,
                             const DVec& style) {
  const int P = cgrid.patches();
  const int SP = sgrid.patches();

  auto stats = [](const DVec& v, const sfocda::Shape4& s,
                  const sfocda::PatchGrid& grid, int64_t k, int p, int64_t c) {
    const auto r = grid.rect(p);
    double sx = 0.0, sxx = 0.0;
    for (int64_t row = r.r0; row < r.r1; ++row)
      for (int64_t col = r.c0; col < r.c1; ++col) {
        const double x = v[((k * s.c + c) * s.h + row) * s.w + col];
        sx += x;
        sxx += x * x;
      }
    const double m = static_cast<double>(r.area());
    const double mu = sx / m;
    const double sd = std::max(
        std::sqrt(std::max(0.0, sxx / m - mu * mu)), sfocda::kStyleEps);
    return std::pair<double, double>{mu, sd};
  };

  DVec out(content.size());
  for (int64_t k = 0; k < cs.n; ++k)
    for (int p = 0; p < P; ++p) {
      const auto r = cgrid.rect(p);
      for (int64_t c = 0; c < cs.c; ++c) {
        const auto [mu, sd] = stats(content, cs, cgrid, k, p, c);
        double mu_d = 0.0, sd_d = 0.0;
        for (const auto& [slot, w] : donors[k * P + p]) {
          const auto [smu, ssd] =
              stats(style, ss, sgrid, slot / SP, static_cast<int>(slot % SP),
                    c);
          mu_d += w * smu;
          sd_d += w * ssd;
        }
        for (int64_t row = r.r0; row < r.r1; ++row)
          for (int64_t col = r.c0; col < r.c1; ++col) {
            const int64_t i = ((k * cs.c + c) * cs.h + row) * cs.w + col;
            out[i] = sd_d * (content[i] - mu) / sd + mu_d;
          }
      }
    }
  return out;
}

inline DVec cross_entropy_masked_d(const sfocda::Shape4& s, const DVec& z,
                                   const std::vector<uint8_t>& labels) {
  const int64_t C = s.c, hw = s.h * s.w, chw = C * hw;
  double total = 0.0;
  int64_t counted = 0;
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t i = 0; i < hw; ++i) {
      const uint8_t lab = labels[n * hw + i];
      if (lab == sfocda::kIgnoreLabel) continue;
      const double* site = z.data() + n * chw + i;
      double zmax = site[0];
      for (int64_t c = 1; c < C; ++c) zmax = std::max(zmax, site[c * hw]);
      double denom = 0.0;
      for (int64_t c = 0; c < C; ++c) denom += std::exp(site[c * hw] - zmax);
      total += std::log(denom) + zmax - site[lab * hw];
      ++counted;
    }
  return {counted ? total / counted : 0.0};
}

/// Brute-force MPT reference: gather every max-probability under its argmax
/// class (ties to the lowest index), fully sort each class descending, take
/// the value at index ceil(m*q/100) - 1, cap at tau; empty classes get tau.
inline std::vector<double> mpt_thresholds_bf(const sfocda::Shape4& s,
                                             const std::vector<float>& p,
                                             double tau, double q) {
  const int64_t C = s.c, hw = s.h * s.w, chw = C * hw;
  std::vector<std::vector<float>> per_class(C);
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t i = 0; i < hw; ++i) {
      const float* site = p.data() + n * chw + i;
      int64_t best = 0;
      for (int64_t c = 1; c < C; ++c)
        if (site[c * hw] > site[best * hw]) best = c;
      per_class[best].push_back(site[best * hw]);
    }
  std::vector<double> t(C, tau);
  for (int64_t c = 0; c < C; ++c) {
    auto& v = per_class[c];
    if (v.empty()) continue;
    std::sort(v.rbegin(), v.rend());
    int64_t k = static_cast<int64_t>(
        std::ceil(static_cast<double>(v.size()) * q / 100.0));
    if (k < 1) k = 1;
    if (k > static_cast<int64_t>(v.size())) k = static_cast<int64_t>(v.size());
    t[c] = std::min(tau, static_cast<double>(v[k - 1]));
  }
  return t;
}

inline std::vector<uint8_t> assign_bf(const sfocda::Shape4& s,
                                      const std::vector<float>& p,
                                      const std::vector<double>& t) {
  const int64_t C = s.c, hw = s.h * s.w, chw = C * hw;
  std::vector<uint8_t> out(s.n * hw, sfocda::kIgnoreLabel);
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t i = 0; i < hw; ++i) {
      const float* site = p.data() + n * chw + i;
      int64_t best = 0;
      for (int64_t c = 1; c < C; ++c)
        if (site[c * hw] > site[best * hw]) best = c;
      if (static_cast<double>(site[best * hw]) >= t[best])
        out[n * hw + i] = static_cast<uint8_t>(best);
    }
  return out;
}

/// Central-difference gradient checks of d(sum(weights * op(x))) / dx on
/// random coordinates. The analytic side runs the library graph; the
/// displaced evaluations run `fwd_d`, the op's double-precision reference.
/// The two forwards are cross-checked first so the oracle cannot drift.
struct FdResult {
  int64_t coord;
  double analytic;
  double numeric;
  double rel;
};

inline std::vector<FdResult> fd_check_many(
    const std::function<sfocda::Tensor(const sfocda::Tensor&)>& build_graph,
    const std::function<DVec(const DVec&)>& fwd_d,
    const std::vector<float>& x0, const sfocda::Shape4& xshape,
    const std::vector<float>& weights, int count, sfocda::Rng& rng,
    double h) {
  using sfocda::Tensor;

  Tensor leaf = Tensor::from_data(xshape, x0, true);
  Tensor out = build_graph(leaf);
  Tensor wt = Tensor::from_data(out.shape(), weights);
  Tensor loss = sfocda::sum(sfocda::mul(out, wt));
  sfocda::backward(loss);
  const std::vector<float>& grad = *leaf.grad();

  const DVec x0d = to_double(x0);
  {
    const DVec ref = fwd_d(x0d);
    double worst = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
      const double denom = std::max(1.0, std::fabs(ref[i]));
      worst = std::max(worst, std::fabs(ref[i] - out.data()[i]) / denom);
    }
    if (worst > 1e-4)
      throw std::runtime_error("fd_check_many: oracle forward disagrees");
  }

  auto weighted = [&weights](const DVec& v) {
    double acc = 0.0;
    for (size_t i = 0; i < v.size(); ++i) acc += weights[i] * v[i];
    return acc;
  };

  std::vector<FdResult> results;
  for (int t = 0; t < count; ++t) {
    const int64_t coord =
        static_cast<int64_t>(rng.uniform_int(xshape.numel()));
    DVec xp = x0d;
    xp[coord] += h;
    DVec xm = x0d;
    xm[coord] -= h;
    const double numeric = (weighted(fwd_d(xp)) - weighted(fwd_d(xm))) /
                           (2.0 * h);
    const double analytic = grad[coord];
    const double denom =
        std::max({std::fabs(analytic), std::fabs(numeric), 1e-4});
    results.push_back(
        {coord, analytic, numeric, std::fabs(analytic - numeric) / denom});
  }
  return results;
}

}  // namespace oracle
