#include "sfocda/segmodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "sfocda/sfot.hpp"

namespace sfocda {

void SegNetConfig::validate() const {
  if (in_channels <= 0) throw ConfigError("in_channels must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (widths.empty()) throw ConfigError("widths must be non-empty");
  for (int64_t w : widths)
    if (w <= 0) throw ConfigError("block widths must be positive");
}

namespace {

Tensor he_conv_weight(int64_t co, int64_t ci, int64_t k, Rng& rng) {
  Shape4 s{co, ci, k, k};
  std::vector<float> w(static_cast<size_t>(s.numel()));
  const double std = std::sqrt(2.0 / static_cast<double>(ci * k * k));
  for (float& v : w) v = static_cast<float>(rng.normal() * std);
  return Tensor::from_data(s, std::move(w), true);
}

Tensor zero_bias(int64_t co) {
  return Tensor::zeros(Shape4{1, co, 1, 1}, true);
}

bool has_site(const std::vector<int>& sites, int s) {
  return std::find(sites.begin(), sites.end(), s) != sites.end();
}

}  // namespace

SegNet::SegNet(const SegNetConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  int64_t ci = cfg_.in_channels;
  for (int64_t width : cfg_.widths) {
    std::array<Conv, 2> block;
    block[0] = {he_conv_weight(width, ci, 3, rng), zero_bias(width)};
    block[1] = {he_conv_weight(width, width, 3, rng), zero_bias(width)};
    blocks_.push_back(std::move(block));
    ci = width;
  }
  head_ = {he_conv_weight(cfg_.num_classes, ci, 1, rng),
           zero_bias(cfg_.num_classes)};
  collect_params();
}

void SegNet::collect_params() {
  params_.clear();
  for (size_t b = 0; b < blocks_.size(); ++b) {
    for (int c = 0; c < 2; ++c) {
      std::string base =
          "block" + std::to_string(b + 1) + ".conv" + std::to_string(c + 1);
      params_.emplace_back(base + ".weight", blocks_[b][c].w);
      params_.emplace_back(base + ".bias", blocks_[b][c].b);
    }
  }
  params_.emplace_back("head.weight", head_.w);
  params_.emplace_back("head.bias", head_.b);
}

Tensor SegNet::run(const Tensor& img, bool training, const InjectionConfig* inj,
                   Rng* rng, int stop_after_block) const {
  const Shape4& s = img.shape();
  if (s.c != cfg_.in_channels)
    throw ShapeError("input has " + std::to_string(s.c) + " channels, model expects " +
                     std::to_string(cfg_.in_channels));
  const int64_t pf = cfg_.pool_factor();
  if (s.h % pf != 0 || s.w % pf != 0)
    throw ShapeError("input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " not divisible by pooling factor " + std::to_string(pf));
  const bool injecting = training && inj != nullptr;
  if (injecting) {
    for (int site : inj->sites)
      if (site < 0 || site > cfg_.blocks())
        throw ConfigError("injection site " + std::to_string(site) +
                          " outside [0, " + std::to_string(cfg_.blocks()) + "]");
  }

  Tensor x = img;
  if (injecting && has_site(inj->sites, 0)) x = inject(x, *inj, *rng, true);
  for (int l = 1; l <= cfg_.blocks(); ++l) {
    const auto& blk = blocks_[static_cast<size_t>(l - 1)];
    x = relu(conv2d(x, blk[0].w, blk[0].b, 1, 1));
    x = relu(conv2d(x, blk[1].w, blk[1].b, 1, 1));
    if (injecting && has_site(inj->sites, l)) x = inject(x, *inj, *rng, true);
    if (stop_after_block == l) return x;
    x = maxpool2d(x, 2);
  }
  Tensor logits = conv2d(x, head_.w, head_.b, 1, 0);
  return upsample_nearest(logits, static_cast<int>(pf));
}

Tensor SegNet::forward(const Tensor& img, bool training,
                       const InjectionConfig& inj, Rng& rng) {
  return run(img, training, &inj, &rng, 0);
}

Tensor SegNet::forward(const Tensor& img) const {
  return run(img, false, nullptr, nullptr, 0);
}

Tensor SegNet::features(const Tensor& img, int block) const {
  if (block < 1 || block > cfg_.blocks())
    throw ConfigError("feature block " + std::to_string(block) + " outside [1, " +
                      std::to_string(cfg_.blocks()) + "]");
  return run(img, false, nullptr, nullptr, block);
}

void SegNet::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

SegNet SegNet::clone() const {
  SegNet out;
  out.cfg_ = cfg_;
  for (const auto& blk : blocks_)
    out.blocks_.push_back({Conv{blk[0].w.clone(), blk[0].b.clone()},
                           Conv{blk[1].w.clone(), blk[1].b.clone()}});
  out.head_ = {head_.w.clone(), head_.b.clone()};
  out.collect_params();
  return out;
}

void SegNet::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream mf(dir / "manifest.txt");
  if (!mf) throw DataError("cannot write checkpoint manifest in " + dir.string());
  mf << "segnet v1\n";
  mf << "in_channels " << cfg_.in_channels << "\n";
  mf << "num_classes " << cfg_.num_classes << "\n";
  mf << "widths";
  for (int64_t w : cfg_.widths) mf << " " << w;
  mf << "\n";
  mf << "params " << params_.size() << "\n";
  for (const auto& [name, p] : params_) {
    const Shape4& s = p.shape();
    mf << name << " " << s.n << " " << s.c << " " << s.h << " " << s.w << "\n";
    sfot::write_f32((dir / (name + ".sfot")).string(),
                    {static_cast<uint32_t>(s.n), static_cast<uint32_t>(s.c),
                     static_cast<uint32_t>(s.h), static_cast<uint32_t>(s.w)},
                    p.data());
  }
  if (!mf) throw DataError("failed writing checkpoint manifest in " + dir.string());
}

SegNet SegNet::load(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.txt");
  if (!mf) throw DataError("cannot open checkpoint manifest in " + dir.string());
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(mf, line)) throw DataError("truncated checkpoint manifest");
    return line;
  };
  if (next_line() != "segnet v1") throw DataError("unrecognized checkpoint format");

  SegNetConfig cfg;
  cfg.widths.clear();
  std::string key;
  {
    std::istringstream is(next_line());
    if (!(is >> key >> cfg.in_channels) || key != "in_channels")
      throw DataError("bad manifest in_channels line");
  }
  {
    std::istringstream is(next_line());
    if (!(is >> key >> cfg.num_classes) || key != "num_classes")
      throw DataError("bad manifest num_classes line");
  }
  {
    std::istringstream is(next_line());
    is >> key;
    if (key != "widths") throw DataError("bad manifest widths line");
    int64_t w;
    while (is >> w) cfg.widths.push_back(w);
  }
  size_t n_params = 0;
  {
    std::istringstream is(next_line());
    if (!(is >> key >> n_params) || key != "params")
      throw DataError("bad manifest params line");
  }
  cfg.validate();

  Rng scratch(0, 0);
  SegNet net(cfg, scratch);
  if (n_params != net.params_.size())
    throw DataError("manifest lists " + std::to_string(n_params) +
                    " params, architecture has " + std::to_string(net.params_.size()));
  for (auto& [name, p] : net.params_) {
    std::istringstream is(next_line());
    std::string mname;
    Shape4 ms;
    if (!(is >> mname >> ms.n >> ms.c >> ms.h >> ms.w) || mname != name)
      throw DataError("manifest param order mismatch at " + name);
    if (!(ms == p.shape()))
      throw DataError("manifest shape mismatch for " + name);
    sfot::Array a = sfot::read((dir / (name + ".sfot")).string());
    if (a.dtype != sfot::Dtype::f32 || a.numel() != static_cast<size_t>(p.numel()))
      throw DataError("checkpoint tensor mismatch for " + name);
    p.mutable_data() = std::move(a.f32);
  }
  return net;
}

Tensor cross_entropy_masked(const Tensor& logits, const LabelMap& labels) {
  const Shape4 s = logits.shape();
  if (labels.n != s.n || labels.h != s.h || labels.w != s.w)
    throw ShapeError("label map " + std::to_string(labels.n) + "x" +
                     std::to_string(labels.h) + "x" + std::to_string(labels.w) +
                     " does not match logits " + s.str());
  const int64_t C = s.c;
  for (uint8_t v : labels.labels)
    if (v != kIgnoreLabel && v >= C)
      throw DataError("label " + std::to_string(v) + " out of range for " +
                      std::to_string(C) + " classes");

  const auto& z = logits.data();
  const int64_t hw = s.h * s.w;
  const int64_t chw = C * hw;
  double total = 0.0;
  int64_t counted = 0;
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t i = 0; i < hw; ++i) {
      const uint8_t lab = labels.labels[static_cast<size_t>(n * hw + i)];
      if (lab == kIgnoreLabel) continue;
      const float* site = z.data() + n * chw + i;
      double zmax = site[0];
      for (int64_t c = 1; c < C; ++c)
        zmax = std::max(zmax, static_cast<double>(site[c * hw]));
      double denom = 0.0;
      for (int64_t c = 0; c < C; ++c)
        denom += std::exp(static_cast<double>(site[c * hw]) - zmax);
      total += std::log(denom) + zmax - static_cast<double>(site[lab * hw]);
      ++counted;
    }
  }
  const float value = counted ? static_cast<float>(total / counted) : 0.0f;

  auto labs = std::make_shared<std::vector<uint8_t>>(labels.labels);
  const int64_t m = counted;
  return make_op_node(
      Shape4{1, 1, 1, 1}, {value}, {logits},
      [labs, s, m](detail::Node& node) {
        auto& parent = *node.parents[0];
        if (!parent.requires_grad) return;
        parent.ensure_grad();
        if (m == 0) return;
        const double g0 = static_cast<double>(node.grad[0]) / static_cast<double>(m);
        const int64_t C = s.c;
        const int64_t hw = s.h * s.w;
        const int64_t chw = C * hw;
        const float* z = parent.value.data();
        float* dz = parent.grad.data();
        for (int64_t n = 0; n < s.n; ++n) {
          for (int64_t i = 0; i < hw; ++i) {
            const uint8_t lab = (*labs)[static_cast<size_t>(n * hw + i)];
            if (lab == kIgnoreLabel) continue;
            const float* site = z + n * chw + i;
            float* dsite = dz + n * chw + i;
            double zmax = site[0];
            for (int64_t c = 1; c < C; ++c)
              zmax = std::max(zmax, static_cast<double>(site[c * hw]));
            double denom = 0.0;
            for (int64_t c = 0; c < C; ++c)
              denom += std::exp(static_cast<double>(site[c * hw]) - zmax);
            for (int64_t c = 0; c < C; ++c) {
              const double p = std::exp(static_cast<double>(site[c * hw]) - zmax) / denom;
              const double delta = (c == lab) ? 1.0 : 0.0;
              dsite[c * hw] += static_cast<float>(g0 * (p - delta));
            }
          }
        }
      });
}

SgdPoly::SgdPoly(const SgdPolyConfig& cfg,
                 std::vector<std::pair<std::string, Tensor>> params)
    : cfg_(cfg) {
  if (cfg_.total_iters < 1) throw ConfigError("total_iters must be at least 1");
  if (cfg_.base_lr < 0 || cfg_.momentum < 0 || cfg_.weight_decay < 0 ||
      cfg_.power < 0)
    throw ConfigError("optimizer hyperparameters must be non-negative");
  for (auto& [name, p] : params) {
    params_.push_back(p);
    velocity_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
  }
}

double SgdPoly::lr_at(int64_t iter) const {
  double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(cfg_.total_iters);
  if (frac < 0.0) frac = 0.0;
  return cfg_.base_lr * std::pow(frac, cfg_.power);
}

void SgdPoly::step() {
  const float lr = static_cast<float>(lr_at(iter_));
  const float m = static_cast<float>(cfg_.momentum);
  const float wd = static_cast<float>(cfg_.weight_decay);
  for (size_t i = 0; i < params_.size(); ++i) {
    const std::vector<float>* g = params_[i].grad();
    if (!g)
      throw ContractError("sgd_step: parameter " + std::to_string(i) +
                          " has no gradient");
    auto& p = params_[i].mutable_data();
    auto& v = velocity_[i];
    for (size_t j = 0; j < p.size(); ++j) {
      v[j] = std::fma(m, v[j], std::fma(wd, p[j], (*g)[j]));
      p[j] = std::fma(-lr, v[j], p[j]);
    }
  }
  ++iter_;
}

}  // namespace sfocda
