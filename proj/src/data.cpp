#include "sfocda/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "json.hpp"
#include "sfocda/pixel_aug.hpp"
#include "sfocda/sfot.hpp"

namespace sfocda {

std::vector<DomainSpec> default_domains() {
  std::vector<DomainSpec> d;
  d.push_back({{"source", {1.00, 1.00, 1.00}, {0.00, 0.00, 0.00}, 0.02, 0.0},
               "source"});
  d.push_back({{"rainy", {0.45, 0.50, 0.70}, {0.02, 0.04, 0.12}, 0.06, 1.2},
               "compound"});
  d.push_back({{"snowy", {0.55, 0.55, 0.60}, {0.32, 0.32, 0.36}, 0.07, 0.6},
               "compound"});
  d.push_back({{"cloudy", {0.50, 0.55, 0.45}, {0.10, 0.12, 0.08}, 0.05, 0.4},
               "compound"});
  d.push_back({{"overcast", {0.60, 0.45, 0.33}, {0.16, 0.08, 0.03}, 0.06, 0.8},
               "open"});
  return d;
}

namespace {

constexpr std::array<std::array<float, 3>, 6> kBaseColors = {{
    {0.38f, 0.46f, 0.30f},  // background
    {0.25f, 0.25f, 0.27f},  // road band
    {0.55f, 0.70f, 0.90f},  // sky band
    {0.75f, 0.25f, 0.20f},  // ellipse blobs
    {0.80f, 0.70f, 0.25f},  // rectangle blobs
    {0.55f, 0.30f, 0.65f},  // stripe
}};

float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

}  // namespace

Scene render_scene(const SceneSpec& spec, uint64_t scene_seed) {
  if (spec.size < 16) throw ConfigError("scene size must be at least 16");
  if (spec.classes != 6) throw ConfigError("scene family is six-class");
  const int64_t S = spec.size;
  Rng rng(scene_seed, 0);

  std::array<std::array<float, 3>, 6> colors = kBaseColors;
  for (auto& col : colors)
    for (auto& ch : col)
      ch = clamp01(ch + static_cast<float>(
                            rng.uniform(-spec.color_jitter, spec.color_jitter)));

  // Region edges snap to a coarse grid so every class stays resolvable by a
  // downsample-8 segmenter; unit halves below 32 px to keep small scenes
  // usable for fast tests.
  const int64_t B = S >= 32 ? 8 : 4;
  const int64_t nu = S / B;

  Scene out;
  out.labels = LabelMap::full(1, S, S, 0);
  auto paint_rows = [&](int64_t r0, int64_t r1, uint8_t cls) {
    for (int64_t y = std::max<int64_t>(0, r0); y < std::min(S, r1); ++y)
      for (int64_t x = 0; x < S; ++x) out.labels.at(0, y, x) = cls;
  };
  auto band_units = [&](int64_t umax) {
    const auto want =
        static_cast<int64_t>(std::llround(rng.uniform(0.2, 0.4) * nu));
    return std::clamp<int64_t>(want, 1, std::max<int64_t>(1, umax));
  };

  const int64_t sky_u = band_units(nu / 2 - 1);
  const int64_t road_u = band_units(std::min(nu / 2 - 1, nu - sky_u - 2));
  paint_rows(0, sky_u * B, 2);
  paint_rows(S - road_u * B, S, 1);
  const int64_t mid0 = sky_u * B;
  const int64_t mid1 = S - road_u * B;

  const int n_ell = 1 + static_cast<int>(rng.uniform_int(spec.max_ellipses));
  for (int e = 0; e < n_ell; ++e) {
    const double ry = rng.uniform(0.10, 0.16) * S;
    const double rx = rng.uniform(0.10, 0.16) * S;
    const double cy =
        rng.uniform(mid0 + ry, std::max<double>(mid0 + ry + 1, mid1 - ry));
    const double cx = rng.uniform(rx, S - rx);
    for (int64_t y = 0; y < S; ++y)
      for (int64_t x = 0; x < S; ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        if (dy * dy + dx * dx <= 1.0) out.labels.at(0, y, x) = 3;
      }
  }

  const int n_rect = 1 + static_cast<int>(rng.uniform_int(spec.max_rects));
  for (int r = 0; r < n_rect; ++r) {
    const int64_t hu = std::min<int64_t>(2 + rng.uniform_int(2),
                                         nu - sky_u - road_u);
    const int64_t wu = 2 + static_cast<int64_t>(rng.uniform_int(2));
    const int64_t y0 =
        (sky_u + rng.uniform_int(std::max<int64_t>(
                     1, nu - road_u - sky_u - hu + 1))) * B;
    const int64_t x0 = rng.uniform_int(nu - wu + 1) * B;
    for (int64_t y = y0; y < std::min(S, y0 + hu * B); ++y)
      for (int64_t x = x0; x < std::min(S, x0 + wu * B); ++x)
        out.labels.at(0, y, x) = 4;
  }

  // One unit-wide stripe, painted last so it always survives intact.
  {
    const bool vertical = rng.bernoulli(0.5);
    if (vertical) {
      const int64_t x0 = rng.uniform_int(nu) * B;
      for (int64_t y = 0; y < S; ++y)
        for (int64_t x = x0; x < x0 + B; ++x) out.labels.at(0, y, x) = 5;
    } else {
      const int64_t y0 = (sky_u + rng.uniform_int(nu - road_u - sky_u)) * B;
      paint_rows(y0, y0 + B, 5);
    }
  }

  std::vector<float> img(static_cast<size_t>(3 * S * S));
  for (int64_t y = 0; y < S; ++y)
    for (int64_t x = 0; x < S; ++x) {
      const uint8_t cls = out.labels.at(0, y, x);
      for (int64_t c = 0; c < 3; ++c)
        img[static_cast<size_t>(c * S * S + y * S + x)] = colors[cls][c];
    }
  out.image = Tensor::from_data({1, 3, S, S}, std::move(img));
  return out;
}

Tensor apply_domain_style(const Tensor& img, const DomainStyle& style,
                          uint64_t scene_seed) {
  const Shape4& s = img.shape();
  if (s.n != 1 || s.c != 3)
    throw ShapeError("apply_domain_style expects [1,3,H,W], got " + s.str());
  std::vector<float> out = img.data();
  const int64_t plane = s.h * s.w;
  for (int64_t c = 0; c < 3; ++c) {
    const float gain = static_cast<float>(style.gain[c]);
    const float bias = static_cast<float>(style.bias[c]);
    float* ch = out.data() + c * plane;
    for (int64_t i = 0; i < plane; ++i) ch[i] = gain * ch[i] + bias;
  }
  if (style.blur_sigma > 0.0) {
    std::vector<float> tmp;
    for (int64_t c = 0; c < 3; ++c)
      gaussian_blur(out.data() + c * plane, s.h, s.w, style.blur_sigma, tmp);
  }
  if (style.noise > 0.0) {
    Rng noise(scene_seed, 1);
    const float level = static_cast<float>(style.noise);
    for (auto& v : out) v += level * static_cast<float>(noise.normal());
  }
  for (auto& v : out) v = clamp01(v);
  return Tensor::from_data(s, std::move(out));
}

std::vector<size_t> DatasetManifest::split(const std::string& name) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < samples.size(); ++i)
    if (samples[i].domain + "_" + samples[i].split == name) out.push_back(i);
  return out;
}

std::vector<size_t> DatasetManifest::role_split(const std::string& role,
                                                const std::string& split) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < samples.size(); ++i)
    if (samples[i].role == role && samples[i].split == split) out.push_back(i);
  return out;
}

std::vector<std::string> DatasetManifest::domains() const {
  std::vector<std::string> out;
  for (const auto& s : samples)
    if (std::find(out.begin(), out.end(), s.domain) == out.end())
      out.push_back(s.domain);
  return out;
}

DatasetManifest generate_domains(const SceneSpec& spec,
                                 const std::vector<DomainSpec>& domains,
                                 const GenerationCounts& counts, uint64_t seed,
                                 const std::filesystem::path& out_dir) {
  if (counts.train_per_domain < 1 || counts.test_per_domain < 1)
    throw ConfigError("per-domain counts must be at least 1");
  int compound = 0;
  std::set<std::string> names;
  for (const auto& d : domains) {
    if (d.role != "source" && d.role != "compound" && d.role != "open")
      throw ConfigError("unknown domain role " + d.role);
    if (!names.insert(d.style.name).second)
      throw ConfigError("duplicate domain name " + d.style.name);
    if (d.role == "compound") ++compound;
  }
  if (compound < 2) throw ConfigError("need at least 2 compound sub-domains");

  DatasetManifest manifest;
  manifest.classes = spec.classes;
  char buf[32];
  for (size_t di = 0; di < domains.size(); ++di) {
    const auto& dom = domains[di];
    for (int split_id = 0; split_id < 2; ++split_id) {
      const std::string split = split_id == 0 ? "train" : "test";
      const int count =
          split_id == 0 ? counts.train_per_domain : counts.test_per_domain;
      const auto dir = out_dir / dom.style.name / split;
      std::filesystem::create_directories(dir);
      for (int i = 0; i < count; ++i) {
        const uint64_t scene_seed = derive_seed(
            seed, {di, static_cast<uint64_t>(split_id), static_cast<uint64_t>(i)});
        Scene sc = render_scene(spec, scene_seed);
        Tensor styled = apply_domain_style(sc.image, dom.style, scene_seed);

        std::snprintf(buf, sizeof buf, "%04d", i);
        SampleRef ref;
        ref.image = dom.style.name + "/" + split + "/" + buf + "_img.sfot";
        ref.domain = dom.style.name;
        ref.role = dom.role;
        ref.split = split;
        sfot::write_f32((out_dir / ref.image).string(),
                        {3, static_cast<uint32_t>(spec.size),
                         static_cast<uint32_t>(spec.size)},
                        styled.data());
        const bool labeled = dom.role == "source" || split == "test";
        if (labeled) {
          ref.label = dom.style.name + "/" + split + "/" + buf + "_lab.sfot";
          sfot::write_u8((out_dir / ref.label).string(),
                         {1, static_cast<uint32_t>(spec.size),
                          static_cast<uint32_t>(spec.size)},
                         sc.labels.labels);
        }
        manifest.samples.push_back(std::move(ref));
      }
    }
  }
  save_manifest(manifest, out_dir);
  return manifest;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& dir) {
  nlohmann::ordered_json j;
  j["version"] = m.version;
  j["classes"] = m.classes;
  j["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : m.samples) {
    nlohmann::ordered_json e;
    e["image"] = s.image;
    if (s.label.empty())
      e["label"] = nullptr;
    else
      e["label"] = s.label;
    e["domain"] = s.domain;
    e["role"] = s.role;
    j["samples"].push_back(std::move(e));
  }
  std::ofstream f(dir / "manifest.json");
  if (!f) throw DataError("cannot write manifest in " + dir.string());
  f << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw DataError("cannot open manifest in " + dir.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    m.classes = j.at("classes").get<int64_t>();
    for (const auto& e : j.at("samples")) {
      SampleRef ref;
      ref.image = e.at("image").get<std::string>();
      if (!e.at("label").is_null()) ref.label = e.at("label").get<std::string>();
      ref.domain = e.at("domain").get<std::string>();
      ref.role = e.at("role").get<std::string>();
      const auto slash = ref.image.find('/');
      const auto slash2 = ref.image.find('/', slash + 1);
      if (slash == std::string::npos || slash2 == std::string::npos)
        throw DataError("sample path lacks <domain>/<split>/ layout: " + ref.image);
      ref.split = ref.image.substr(slash + 1, slash2 - slash - 1);
      if (ref.split != "train" && ref.split != "test")
        throw DataError("unknown split folder in " + ref.image);
      m.samples.push_back(std::move(ref));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest missing fields in " + dir.string() + ": " + e.what());
  }
  if (m.version != 1)
    throw DataError("unsupported manifest version " + std::to_string(m.version));
  return m;
}

Tensor load_image(const std::filesystem::path& root, const SampleRef& s) {
  sfot::Array a = sfot::read((root / s.image).string());
  if (a.dtype != sfot::Dtype::f32 || a.dims.size() != 3 || a.dims[0] != 3)
    throw DataError("image must be f32 [3,H,W]: " + s.image);
  return Tensor::from_data(
      {1, 3, static_cast<int64_t>(a.dims[1]), static_cast<int64_t>(a.dims[2])},
      std::move(a.f32));
}

LabelMap load_label(const std::filesystem::path& root, const SampleRef& s) {
  if (s.label.empty())
    throw ContractError("sample " + s.image + " has no label file");
  sfot::Array a = sfot::read((root / s.label).string());
  if (a.dtype != sfot::Dtype::u8 || a.dims.size() != 3 || a.dims[0] != 1)
    throw DataError("label must be u8 [1,H,W]: " + s.label);
  LabelMap m;
  m.n = 1;
  m.h = a.dims[1];
  m.w = a.dims[2];
  m.labels = std::move(a.u8);
  return m;
}

std::vector<float> extract_style_embedding(const SegNet& model,
                                           const Tensor& img) {
  if (img.shape().n != 1)
    throw ShapeError("style embeddings are per-image; got batch " +
                     std::to_string(img.shape().n));
  Tensor f = model.features(img, 1);
  const Shape4& s = f.shape();
  const int64_t plane = s.h * s.w;
  std::vector<float> emb(static_cast<size_t>(2 * s.c));
  const auto& v = f.data();
  for (int64_t c = 0; c < s.c; ++c) {
    double sum = 0.0, sq = 0.0;
    const float* ch = v.data() + c * plane;
    for (int64_t i = 0; i < plane; ++i) {
      sum += ch[i];
      sq += static_cast<double>(ch[i]) * ch[i];
    }
    const double mean = sum / plane;
    const double var = std::max(0.0, sq / plane - mean * mean);
    emb[static_cast<size_t>(c)] = static_cast<float>(mean);
    emb[static_cast<size_t>(s.c + c)] = static_cast<float>(std::sqrt(var));
  }
  return emb;
}

namespace {

double dist2(const std::vector<float>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

std::vector<int> cluster_latent_domains(
    const std::vector<std::vector<float>>& points, int k, uint64_t seed) {
  const size_t n = points.size();
  if (k < 1) throw ConfigError("k must be at least 1");
  if (n < static_cast<size_t>(k))
    throw ConfigError("need at least k points to form k clusters");
  const size_t dim = points[0].size();
  if (dim == 0) throw ConfigError("empty embeddings");
  for (const auto& p : points) {
    if (p.size() != dim) throw ShapeError("embedding lengths differ");
    for (float v : p)
      if (!std::isfinite(v)) throw DataError("non-finite embedding value");
  }
  std::vector<int> assign(n, 0);
  if (k == 1) return assign;

  Rng rng(seed, 0);
  std::vector<std::vector<double>> centroids;
  centroids.reserve(static_cast<size_t>(k));
  auto as_centroid = [&](size_t idx) {
    return std::vector<double>(points[idx].begin(), points[idx].end());
  };
  centroids.push_back(as_centroid(rng.uniform_int(n)));
  std::vector<double> d2(n);
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, dist2(points[i], c));
      d2[i] = best;
      total += best;
    }
    size_t pick;
    if (total <= 0.0) {
      pick = rng.uniform_int(n);
    } else {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(as_centroid(pick));
  }

  for (int iter = 0; iter < 100; ++iter) {
    for (size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int c = 0; c < k; ++c) {
        const double d = dist2(points[i], centroids[static_cast<size_t>(c)]);
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      assign[i] = arg;
    }

    std::vector<std::vector<double>> next(
        static_cast<size_t>(k), std::vector<double>(dim, 0.0));
    std::vector<int64_t> sizes(static_cast<size_t>(k), 0);
    for (size_t i = 0; i < n; ++i) {
      auto& acc = next[static_cast<size_t>(assign[i])];
      for (size_t d = 0; d < dim; ++d) acc[d] += points[i][d];
      ++sizes[static_cast<size_t>(assign[i])];
    }
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<size_t>(c)] == 0) {
        // Re-seed the empty cluster from the point farthest from its centroid.
        double worst = -1.0;
        size_t far = 0;
        for (size_t i = 0; i < n; ++i) {
          const double d =
              dist2(points[i], centroids[static_cast<size_t>(assign[i])]);
          if (d > worst) {
            worst = d;
            far = i;
          }
        }
        next[static_cast<size_t>(c)] = as_centroid(far);
      } else {
        for (size_t d = 0; d < dim; ++d)
          next[static_cast<size_t>(c)][d] /= sizes[static_cast<size_t>(c)];
      }
    }

    double movement = 0.0;
    for (int c = 0; c < k; ++c) {
      double d = 0.0;
      for (size_t i = 0; i < dim; ++i) {
        const double diff =
            next[static_cast<size_t>(c)][i] - centroids[static_cast<size_t>(c)][i];
        d += diff * diff;
      }
      movement = std::max(movement, std::sqrt(d));
    }
    centroids = std::move(next);
    if (movement < 1e-6) break;
  }

  for (size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int c = 0; c < k; ++c) {
      const double d = dist2(points[i], centroids[static_cast<size_t>(c)]);
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    assign[i] = arg;
  }
  return assign;
}

SamplerMode parse_sampler_mode(const std::string& name) {
  if (name == "random") return SamplerMode::random;
  if (name == "oracle") return SamplerMode::oracle;
  if (name == "clustering") return SamplerMode::clustering;
  throw ConfigError("unknown sampler mode " + name);
}

std::string sampler_mode_name(SamplerMode m) {
  switch (m) {
    case SamplerMode::random: return "random";
    case SamplerMode::oracle: return "oracle";
    case SamplerMode::clustering: return "clustering";
  }
  throw ContractError("invalid sampler mode value");
}

BatchSampler BatchSampler::uniform(size_t n, int batch, const Rng& rng) {
  if (n == 0) throw ConfigError("sampler over an empty split");
  if (batch < 1) throw ConfigError("batch size must be at least 1");
  BatchSampler s;
  s.balanced_ = false;
  s.batch_ = batch;
  s.n_ = n;
  s.rng_ = rng;
  return s;
}

BatchSampler BatchSampler::balanced(std::vector<int> group_ids, int batch,
                                    const Rng& rng) {
  if (group_ids.empty()) throw ConfigError("sampler over an empty split");
  std::vector<int> distinct = group_ids;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (batch < static_cast<int>(distinct.size()))
    throw ConfigError("batch size " + std::to_string(batch) +
                      " cannot cover " + std::to_string(distinct.size()) +
                      " groups");
  BatchSampler s;
  s.balanced_ = true;
  s.batch_ = batch;
  s.n_ = group_ids.size();
  s.rng_ = rng;
  s.groups_.resize(distinct.size());
  for (size_t i = 0; i < group_ids.size(); ++i) {
    const auto g = std::lower_bound(distinct.begin(), distinct.end(),
                                    group_ids[i]) -
                   distinct.begin();
    s.groups_[static_cast<size_t>(g)].push_back(i);
  }
  s.order_.resize(s.groups_.size());
  s.cursor_.assign(s.groups_.size(), 0);
  for (size_t g = 0; g < s.groups_.size(); ++g)
    s.order_[g] = s.rng_.permutation(static_cast<uint32_t>(s.groups_[g].size()));
  return s;
}

std::vector<size_t> BatchSampler::next() {
  std::vector<size_t> batch;
  batch.reserve(static_cast<size_t>(batch_));
  if (!balanced_) {
    for (int i = 0; i < batch_; ++i)
      batch.push_back(rng_.uniform_int(n_));
    return batch;
  }
  auto take = [this](size_t g) {
    if (cursor_[g] == order_[g].size()) {
      order_[g] = rng_.permutation(static_cast<uint32_t>(groups_[g].size()));
      cursor_[g] = 0;
    }
    return groups_[g][order_[g][cursor_[g]++]];
  };
  for (size_t g = 0; g < groups_.size(); ++g) batch.push_back(take(g));
  for (int i = static_cast<int>(groups_.size()); i < batch_; ++i)
    batch.push_back(take(rng_.uniform_int(groups_.size())));
  return batch;
}

}  // namespace sfocda
