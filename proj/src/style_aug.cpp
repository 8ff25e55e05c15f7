#include "sfocda/style_aug.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace sfocda {

// ---- grids ----

PatchGrid PatchGrid::uniform(int n_h, int n_w, int64_t H, int64_t W) {
  if (n_h < 1 || n_w < 1)
    throw ShapeError("PatchGrid: patch counts must be >= 1");
  if (H < n_h || W < n_w)
    throw ShapeError("PatchGrid: " + std::to_string(n_h) + "x" +
                     std::to_string(n_w) + " grid does not fit " +
                     std::to_string(H) + "x" + std::to_string(W));
  PatchGrid g;
  g.n_h = n_h;
  g.n_w = n_w;
  const int64_t bh = H / n_h;
  const int64_t bw = W / n_w;
  for (int i = 0; i < n_h; ++i) g.row_splits.push_back(i * bh);
  g.row_splits.push_back(H);
  for (int i = 0; i < n_w; ++i) g.col_splits.push_back(i * bw);
  g.col_splits.push_back(W);
  return g;
}

PatchGrid::Rect PatchGrid::rect(int p) const {
  const int pr = p / n_w;
  const int pc = p % n_w;
  return Rect{row_splits[pr], row_splits[pr + 1], col_splits[pc],
              col_splits[pc + 1]};
}

PatchGrid grid_for(int patches, int64_t H, int64_t W) {
  if (patches < 1) throw ShapeError("grid_for: patches must be >= 1");
  int best = 1;
  for (int d = 1; d * d <= patches; ++d)
    if (patches % d == 0) best = d;
  return PatchGrid::uniform(best, patches / best, H, W);
}

// ---- style variant names ----

StyleVariant parse_style_variant(const std::string& name) {
  if (name == "off") return StyleVariant::off;
  if (name == "intra") return StyleVariant::intra;
  if (name == "inter") return StyleVariant::inter;
  if (name == "mixstyle") return StyleVariant::mixstyle;
  if (name == "crossnorm") return StyleVariant::crossnorm;
  throw ConfigError("unknown style variant '" + name + "'");
}

std::string style_variant_name(StyleVariant v) {
  switch (v) {
    case StyleVariant::off: return "off";
    case StyleVariant::intra: return "intra";
    case StyleVariant::inter: return "inter";
    case StyleVariant::mixstyle: return "mixstyle";
    case StyleVariant::crossnorm: return "crossnorm";
  }
  return "off";
}

// ---- stats ----

namespace {

struct StatsD {
  int64_t samples = 0;
  int patches = 0;
  int64_t channels = 0;
  std::vector<double> mean, sd;
  std::vector<uint8_t> clamped;

  size_t index(int64_t k, int p, int64_t c) const {
    return static_cast<size_t>((k * patches + p) * channels + c);
  }
};

StatsD compute_stats_d(const std::vector<float>& v, const Shape4& s,
                       const PatchGrid& grid) {
  StatsD st;
  st.samples = s.n;
  st.patches = grid.patches();
  st.channels = s.c;
  const size_t total = static_cast<size_t>(s.n) * st.patches * s.c;
  st.mean.resize(total);
  st.sd.resize(total);
  st.clamped.resize(total);
  for (int64_t k = 0; k < s.n; ++k)
    for (int p = 0; p < st.patches; ++p) {
      const auto r = grid.rect(p);
      const double inv_m = 1.0 / static_cast<double>(r.area());
      for (int64_t c = 0; c < s.c; ++c) {
        const float* plane = v.data() + (k * s.c + c) * s.h * s.w;
        double sx = 0.0, sxx = 0.0;
        for (int64_t row = r.r0; row < r.r1; ++row) {
          const float* px = plane + row * s.w;
          for (int64_t col = r.c0; col < r.c1; ++col) {
            const double x = px[col];
            sx += x;
            sxx += x * x;
          }
        }
        const double mu = sx * inv_m;
        const double var = std::max(0.0, sxx * inv_m - mu * mu);
        const double raw = std::sqrt(var);
        const size_t i = st.index(k, p, c);
        st.mean[i] = mu;
        st.clamped[i] = raw < kStyleEps ? 1 : 0;
        st.sd[i] = std::max(raw, kStyleEps);
      }
    }
  return st;
}

void check_grid(const Tensor& t, const PatchGrid& g, const char* what) {
  if (t.shape().h != g.height() || t.shape().w != g.width())
    throw ShapeError(std::string(what) + ": grid built for " +
                     std::to_string(g.height()) + "x" +
                     std::to_string(g.width()) + " but tensor is " +
                     t.shape().str());
}

struct DonorTerm {
  uint32_t slot;
  double w;
};
using DonorTable = std::vector<std::vector<DonorTerm>>;

/// Shared node for every restyling op. Content slot i is renormalized to the
/// weighted donor statistics; gradients flow through both the content pixels
/// and the donor statistics.
Tensor style_transfer_node(const Tensor& content, const PatchGrid& cgrid,
                           const Tensor& style, const PatchGrid& sgrid,
                           std::shared_ptr<DonorTable> donors) {
  check_grid(content, cgrid, "style transfer (content)");
  check_grid(style, sgrid, "style transfer (style)");
  if (content.shape().c != style.shape().c)
    throw ShapeError("style transfer: channel mismatch " +
                     content.shape().str() + " vs " + style.shape().str());

  const Shape4 cs = content.shape();
  const Shape4 ss = style.shape();
  const int P = cgrid.patches();
  const int64_t nslots = cs.n * P;
  const int64_t sslots = ss.n * sgrid.patches();
  if (static_cast<int64_t>(donors->size()) != nslots)
    throw ContractError("style transfer: donor table size mismatch");
  for (const auto& terms : *donors)
    for (const auto& t : terms)
      if (t.slot >= sslots)
        throw ContractError("style transfer: donor slot out of range");

  const bool same_source =
      content.node() == style.node() && cgrid.row_splits == sgrid.row_splits &&
      cgrid.col_splits == sgrid.col_splits;

  auto cstats =
      std::make_shared<StatsD>(compute_stats_d(content.data(), cs, cgrid));
  auto sstats = same_source
                    ? cstats
                    : std::make_shared<StatsD>(
                          compute_stats_d(style.data(), ss, sgrid));

  const auto& x = content.data();
  std::vector<float> out(x.size());
  for (int64_t k = 0; k < cs.n; ++k)
    for (int p = 0; p < P; ++p) {
      const auto r = cgrid.rect(p);
      const auto& terms = (*donors)[k * P + p];
      for (int64_t c = 0; c < cs.c; ++c) {
        const size_t ci = cstats->index(k, p, c);
        double mu_d = 0.0, sd_d = 0.0;
        for (const auto& t : terms) {
          const size_t si = t.slot * ss.c + c;
          mu_d += t.w * sstats->mean[si];
          sd_d += t.w * sstats->sd[si];
        }
        const double a = sd_d / cstats->sd[ci];
        const double b = mu_d - a * cstats->mean[ci];
        const float* src = x.data() + (k * cs.c + c) * cs.h * cs.w;
        float* dst = out.data() + (k * cs.c + c) * cs.h * cs.w;
        for (int64_t row = r.r0; row < r.r1; ++row)
          for (int64_t col = r.c0; col < r.c1; ++col) {
            const int64_t i = row * cs.w + col;
            dst[i] = static_cast<float>(a * src[i] + b);
          }
      }
    }

  auto backward_fn = [cgrid, sgrid, donors, cstats, sstats,
                      same_source](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pt = *self.parents[1];
    const Shape4& cs = px.shape;
    const Shape4& ss = pt.shape;
    const int P = cgrid.patches();
    const int SP = sgrid.patches();

    // per content slot/channel: sums of g and g * r over the patch
    const size_t nslotc = static_cast<size_t>(cs.n) * P * cs.c;
    std::vector<double> sg(nslotc, 0.0), sgr(nslotc, 0.0);
    for (int64_t k = 0; k < cs.n; ++k)
      for (int p = 0; p < P; ++p) {
        const auto r = cgrid.rect(p);
        for (int64_t c = 0; c < cs.c; ++c) {
          const size_t ci = cstats->index(k, p, c);
          const double mu = cstats->mean[ci];
          const double inv_sd = 1.0 / cstats->sd[ci];
          const float* xv = px.value.data() + (k * cs.c + c) * cs.h * cs.w;
          const float* gv = self.grad.data() + (k * cs.c + c) * cs.h * cs.w;
          double a = 0.0, b = 0.0;
          for (int64_t row = r.r0; row < r.r1; ++row)
            for (int64_t col = r.c0; col < r.c1; ++col) {
              const int64_t i = row * cs.w + col;
              const double g = gv[i];
              a += g;
              b += g * (xv[i] - mu) * inv_sd;
            }
          sg[ci] = a;
          sgr[ci] = b;
        }
      }

    if (px.requires_grad) {
      px.ensure_grad();
      for (int64_t k = 0; k < cs.n; ++k)
        for (int p = 0; p < P; ++p) {
          const auto r = cgrid.rect(p);
          const double inv_m = 1.0 / static_cast<double>(r.area());
          const auto& terms = (*donors)[k * P + p];
          for (int64_t c = 0; c < cs.c; ++c) {
            const size_t ci = cstats->index(k, p, c);
            double sd_d = 0.0;
            for (const auto& t : terms)
              sd_d += t.w * sstats->sd[t.slot * ss.c + c];
            const double mu = cstats->mean[ci];
            const double inv_sd = 1.0 / cstats->sd[ci];
            const double a = sd_d * inv_sd;
            const double mean_g = sg[ci] * inv_m;
            const double mean_gr = cstats->clamped[ci] ? 0.0 : sgr[ci] * inv_m;
            const float* xv = px.value.data() + (k * cs.c + c) * cs.h * cs.w;
            const float* gv = self.grad.data() + (k * cs.c + c) * cs.h * cs.w;
            float* dx = px.grad.data() + (k * cs.c + c) * cs.h * cs.w;
            for (int64_t row = r.r0; row < r.r1; ++row)
              for (int64_t col = r.c0; col < r.c1; ++col) {
                const int64_t i = row * cs.w + col;
                const double rr = (xv[i] - mu) * inv_sd;
                dx[i] += static_cast<float>(
                    a * (gv[i] - mean_g - rr * mean_gr));
              }
          }
        }
    }

    if (pt.requires_grad) {
      pt.ensure_grad();
      // fold every user of each donor slot into two coefficients
      const size_t sslotc = static_cast<size_t>(ss.n) * SP * ss.c;
      std::vector<double> acoef(sslotc, 0.0), bcoef(sslotc, 0.0);
      for (int64_t k = 0; k < cs.n; ++k)
        for (int p = 0; p < P; ++p) {
          const auto& terms = (*donors)[k * P + p];
          for (int64_t c = 0; c < cs.c; ++c) {
            const size_t ci = cstats->index(k, p, c);
            for (const auto& t : terms) {
              const size_t si = t.slot * ss.c + c;
              if (!sstats->clamped[si]) acoef[si] += t.w * sgr[ci];
              bcoef[si] += t.w * sg[ci];
            }
          }
        }
      for (int64_t u = 0; u < ss.n * SP; ++u) {
        const auto r = sgrid.rect(static_cast<int>(u % SP));
        const int64_t k = u / SP;
        const double inv_m = 1.0 / static_cast<double>(r.area());
        for (int64_t c = 0; c < ss.c; ++c) {
          const size_t si = u * ss.c + c;
          const double ac = acoef[si];
          const double bc = bcoef[si];
          if (ac == 0.0 && bc == 0.0) continue;
          const double mu = sstats->mean[si];
          const double inv_sd = 1.0 / sstats->sd[si];
          const float* tv = pt.value.data() + (k * ss.c + c) * ss.h * ss.w;
          float* dt = pt.grad.data() + (k * ss.c + c) * ss.h * ss.w;
          for (int64_t row = r.r0; row < r.r1; ++row)
            for (int64_t col = r.c0; col < r.c1; ++col) {
              const int64_t i = row * ss.w + col;
              const double rr = (tv[i] - mu) * inv_sd;
              dt[i] += static_cast<float>((ac * rr + bc) * inv_m);
            }
        }
      }
    }
  };

  return make_op_node(cs, std::move(out), {content, style}, backward_fn);
}

}  // namespace

PatchStyle compute_patch_style(const Tensor& feat, const PatchGrid& grid) {
  check_grid(feat, grid, "compute_patch_style");
  const StatsD st = compute_stats_d(feat.data(), feat.shape(), grid);
  PatchStyle ps;
  ps.samples = st.samples;
  ps.patches = st.patches;
  ps.channels = st.channels;
  ps.mean.assign(st.mean.begin(), st.mean.end());
  ps.stddev.assign(st.sd.begin(), st.sd.end());
  ps.clamped = st.clamped;
  return ps;
}

// ---- swap plans ----

SwapPlan SwapPlan::identity(int64_t samples, int patches) {
  SwapPlan plan;
  plan.scope = Scope::intra;
  plan.samples = samples;
  plan.patches = patches;
  plan.assignment.resize(static_cast<size_t>(samples) * patches);
  for (size_t i = 0; i < plan.assignment.size(); ++i)
    plan.assignment[i] = static_cast<uint32_t>(i);
  return plan;
}

SwapPlan SwapPlan::intra_random(int64_t samples, int patches, Rng& rng) {
  SwapPlan plan;
  plan.scope = Scope::intra;
  plan.samples = samples;
  plan.patches = patches;
  plan.assignment.reserve(static_cast<size_t>(samples) * patches);
  for (int64_t k = 0; k < samples; ++k) {
    auto perm = rng.permutation(static_cast<uint32_t>(patches));
    for (int p = 0; p < patches; ++p)
      plan.assignment.push_back(static_cast<uint32_t>(k * patches) + perm[p]);
  }
  return plan;
}

SwapPlan SwapPlan::inter_random(int64_t samples, int patches, Rng& rng) {
  SwapPlan plan;
  plan.scope = Scope::inter;
  plan.samples = samples;
  plan.patches = patches;
  plan.assignment =
      rng.permutation(static_cast<uint32_t>(samples * patches));
  return plan;
}

SwapPlan SwapPlan::inverse() const {
  SwapPlan inv = *this;
  for (size_t i = 0; i < assignment.size(); ++i)
    inv.assignment[assignment[i]] = static_cast<uint32_t>(i);
  return inv;
}

void SwapPlan::validate() const {
  const size_t n = static_cast<size_t>(samples) * patches;
  if (assignment.size() != n)
    throw ContractError("SwapPlan: assignment size mismatch");
  std::vector<uint8_t> hit(n, 0);
  for (size_t i = 0; i < n; ++i) {
    const uint32_t j = assignment[i];
    if (j >= n || hit[j]) throw ContractError("SwapPlan: not a permutation");
    hit[j] = 1;
    if (scope == Scope::intra && j / patches != i / patches)
      throw ContractError("SwapPlan: intra plan crosses sample boundary");
  }
}

// ---- public ops ----

Tensor adain(const Tensor& content, const Tensor& style) {
  const Shape4& cs = content.shape();
  const Shape4& ss = style.shape();
  if (cs.n != ss.n || cs.c != ss.c)
    throw ShapeError("adain: batch/channel mismatch " + cs.str() + " vs " +
                     ss.str());
  auto donors = std::make_shared<DonorTable>(cs.n);
  for (int64_t k = 0; k < cs.n; ++k)
    (*donors)[k] = {DonorTerm{static_cast<uint32_t>(k), 1.0}};
  return style_transfer_node(content, PatchGrid::uniform(1, 1, cs.h, cs.w),
                             style, PatchGrid::uniform(1, 1, ss.h, ss.w),
                             donors);
}

Tensor cpss_apply(const Tensor& feat, const PatchGrid& grid,
                  const SwapPlan& plan) {
  plan.validate();
  if (plan.samples != feat.shape().n || plan.patches != grid.patches())
    throw ContractError("cpss_apply: plan does not match tensor/grid");
  auto donors = std::make_shared<DonorTable>(plan.assignment.size());
  for (size_t i = 0; i < plan.assignment.size(); ++i)
    (*donors)[i] = {DonorTerm{plan.assignment[i], 1.0}};
  return style_transfer_node(feat, grid, feat, grid, donors);
}

Tensor cpss_intra(const Tensor& feat, const PatchGrid& grid, Rng& rng) {
  return cpss_apply(
      feat, grid,
      SwapPlan::intra_random(feat.shape().n, grid.patches(), rng));
}

Tensor cpss_inter(const Tensor& feat, const PatchGrid& grid, Rng& rng) {
  return cpss_apply(
      feat, grid,
      SwapPlan::inter_random(feat.shape().n, grid.patches(), rng));
}

Tensor mixstyle_apply(const Tensor& feats, const std::vector<uint32_t>& pairing,
                      const std::vector<double>& lambdas) {
  const Shape4& s = feats.shape();
  if (static_cast<int64_t>(pairing.size()) != s.n ||
      static_cast<int64_t>(lambdas.size()) != s.n)
    throw ContractError("mixstyle_apply: pairing/lambda size mismatch");
  auto donors = std::make_shared<DonorTable>(s.n);
  for (int64_t k = 0; k < s.n; ++k) {
    if (pairing[k] >= s.n)
      throw ContractError("mixstyle_apply: pairing index out of range");
    (*donors)[k] = {DonorTerm{static_cast<uint32_t>(k), lambdas[k]},
                    DonorTerm{pairing[k], 1.0 - lambdas[k]}};
  }
  const PatchGrid g = PatchGrid::uniform(1, 1, s.h, s.w);
  return style_transfer_node(feats, g, feats, g, donors);
}

Tensor mixstyle(const Tensor& feats, Rng& rng, double alpha) {
  const int64_t n = feats.shape().n;
  const auto perm = rng.permutation(static_cast<uint32_t>(n));
  std::vector<double> lambdas(n);
  for (int64_t k = 0; k < n; ++k) lambdas[k] = rng.beta(alpha);
  return mixstyle_apply(feats, perm, lambdas);
}

Tensor crossnorm(const Tensor& feats, Rng& rng) {
  const Shape4& s = feats.shape();
  return cpss_inter(feats, PatchGrid::uniform(1, 1, s.h, s.w), rng);
}

Tensor inject(const Tensor& feat, const InjectionConfig& cfg, Rng& rng,
              bool training) {
  if (!training || cfg.variant == StyleVariant::off) return feat;
  if (!rng.bernoulli(cfg.beta)) return feat;
  const Shape4& s = feat.shape();
  switch (cfg.variant) {
    case StyleVariant::intra:
      return cpss_intra(feat, grid_for(cfg.patches, s.h, s.w), rng);
    case StyleVariant::inter:
      return cpss_inter(feat, grid_for(cfg.patches, s.h, s.w), rng);
    case StyleVariant::mixstyle:
      return mixstyle(feat, rng, cfg.mix_alpha);
    case StyleVariant::crossnorm:
      return crossnorm(feat, rng);
    case StyleVariant::off:
      break;
  }
  return feat;
}

}  // namespace sfocda
