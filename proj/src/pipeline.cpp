#include "sfocda/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sfocda/png_io.hpp"
#include "sfocda/pseudo_label.hpp"
#include "sfocda/sfot.hpp"

namespace sfocda {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// Stream ids keep every random consumer independent; stage II gets its own
// block so the two stages never share draw sequences.
constexpr uint64_t kStreamInit = 1;
constexpr uint64_t kStreamSampler = 2;
constexpr uint64_t kStreamPhoto = 3;
constexpr uint64_t kStreamCpss = 4;
constexpr uint64_t kStreamPlReservoir = 5;
constexpr uint64_t kStreamCluster = 6;
constexpr uint64_t kStreamStylize = 7;
constexpr uint64_t kStreamSampler2 = 12;
constexpr uint64_t kStreamPhoto2 = 13;
constexpr uint64_t kStreamCpss2 = 14;

uint64_t fnv1a(const void* data, size_t n, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}
constexpr uint64_t kFnvSeed = 14695981039346656037ull;

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9f", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

int64_t parse_i64(const std::string& s) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError("not an integer: '" + s + "'");
  return v;
}

uint64_t parse_u64(const std::string& s) {
  uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError("not a non-negative integer: '" + s + "'");
  return v;
}

double parse_f64(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError("not a number: '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("not a boolean: '" + s + "'");
}

int parse_int(const std::string& s) {
  int64_t v = parse_i64(s);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("out of range: " + s);
  return static_cast<int>(v);
}

std::string join_i64(const std::vector<int64_t>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i)
    s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join_int(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i)
    s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join_str(const std::vector<std::string>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + p.string());
  f << content;
  if (!f) throw DataError("write failed: " + p.string());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Serialization used both for config.txt and for hashing; the hash variant
// drops the dataset location so runs on relocated copies of the same data
// report the same identity.
std::string serialize_config_impl(const ExperimentConfig& c, bool with_paths) {
  std::string s;
  auto put = [&](const std::string& k, const std::string& v) {
    s += k + " = " + v + "\n";
  };
  put("seed", std::to_string(c.seed));
  if (with_paths) put("data.dir", c.data_dir.generic_string());
  put("model.in_channels", std::to_string(c.model.in_channels));
  put("model.num_classes", std::to_string(c.model.num_classes));
  put("model.widths", join_i64(c.model.widths));
  put("inject.beta", fmt_double(c.inject.beta));
  put("inject.sites", join_int(c.inject.sites));
  put("inject.variant", style_variant_name(c.inject.variant));
  put("inject.mix_alpha", fmt_double(c.inject.mix_alpha));
  put("inject.patches", std::to_string(c.inject.patches));
  put("inject.style_pool_size", std::to_string(c.inject.style_pool_size));
  put("photo.enabled", c.photo_enabled ? "true" : "false");
  put("photo.jitter_prob", fmt_double(c.photo.jitter_prob));
  put("photo.brightness", fmt_double(c.photo.brightness));
  put("photo.contrast", fmt_double(c.photo.contrast));
  put("photo.saturation", fmt_double(c.photo.saturation));
  put("photo.hue", fmt_double(c.photo.hue));
  put("photo.blur_prob", fmt_double(c.photo.blur_prob));
  put("photo.blur_sigma_min", fmt_double(c.photo.blur_sigma_min));
  put("photo.blur_sigma_max", fmt_double(c.photo.blur_sigma_max));
  put("photo.grayscale_prob", fmt_double(c.photo.grayscale_prob));
  put("stage1.iters", std::to_string(c.stage1.iters));
  put("stage1.base_lr", fmt_double(c.stage1.base_lr));
  put("stage1.momentum", fmt_double(c.stage1.momentum));
  put("stage1.weight_decay", fmt_double(c.stage1.weight_decay));
  put("stage1.power", fmt_double(c.stage1.power));
  put("stage1.batch", std::to_string(c.stage1.batch));
  put("stage2.iters", std::to_string(c.stage2.iters));
  put("stage2.base_lr", fmt_double(c.stage2.base_lr));
  put("stage2.tau", fmt_double(c.stage2.tau));
  put("stage2.q", fmt_double(c.stage2.q));
  put("stage2.batch", std::to_string(c.stage2.batch));
  put("stage2.sampler", sampler_mode_name(c.stage2.sampler));
  put("eval.splits", join_str(c.eval_splits));
  return s;
}

using KeyHandler = void (*)(ExperimentConfig&, const std::string&);

const std::map<std::string, KeyHandler>& key_handlers() {
  static const std::map<std::string, KeyHandler> h = {
      {"seed", [](ExperimentConfig& c, const std::string& v) { c.seed = parse_u64(v); }},
      {"data.dir", [](ExperimentConfig& c, const std::string& v) { c.data_dir = v; }},
      {"model.in_channels",
       [](ExperimentConfig& c, const std::string& v) { c.model.in_channels = parse_i64(v); }},
      {"model.num_classes",
       [](ExperimentConfig& c, const std::string& v) { c.model.num_classes = parse_i64(v); }},
      {"model.widths",
       [](ExperimentConfig& c, const std::string& v) {
         c.model.widths.clear();
         for (const auto& item : split_list(v)) c.model.widths.push_back(parse_i64(item));
       }},
      {"inject.beta",
       [](ExperimentConfig& c, const std::string& v) { c.inject.beta = parse_f64(v); }},
      {"inject.sites",
       [](ExperimentConfig& c, const std::string& v) {
         c.inject.sites.clear();
         for (const auto& item : split_list(v)) c.inject.sites.push_back(parse_int(item));
       }},
      {"inject.variant",
       [](ExperimentConfig& c, const std::string& v) { c.inject.variant = parse_style_variant(v); }},
      {"inject.mix_alpha",
       [](ExperimentConfig& c, const std::string& v) { c.inject.mix_alpha = parse_f64(v); }},
      {"inject.patches",
       [](ExperimentConfig& c, const std::string& v) { c.inject.patches = parse_int(v); }},
      {"inject.style_pool_size",
       [](ExperimentConfig& c, const std::string& v) {
         c.inject.style_pool_size = parse_int(v);
       }},
      {"photo.enabled",
       [](ExperimentConfig& c, const std::string& v) { c.photo_enabled = parse_bool(v); }},
      {"photo.jitter_prob",
       [](ExperimentConfig& c, const std::string& v) { c.photo.jitter_prob = parse_f64(v); }},
      {"photo.brightness",
       [](ExperimentConfig& c, const std::string& v) { c.photo.brightness = parse_f64(v); }},
      {"photo.contrast",
       [](ExperimentConfig& c, const std::string& v) { c.photo.contrast = parse_f64(v); }},
      {"photo.saturation",
       [](ExperimentConfig& c, const std::string& v) { c.photo.saturation = parse_f64(v); }},
      {"photo.hue",
       [](ExperimentConfig& c, const std::string& v) { c.photo.hue = parse_f64(v); }},
      {"photo.blur_prob",
       [](ExperimentConfig& c, const std::string& v) { c.photo.blur_prob = parse_f64(v); }},
      {"photo.blur_sigma_min",
       [](ExperimentConfig& c, const std::string& v) { c.photo.blur_sigma_min = parse_f64(v); }},
      {"photo.blur_sigma_max",
       [](ExperimentConfig& c, const std::string& v) { c.photo.blur_sigma_max = parse_f64(v); }},
      {"photo.grayscale_prob",
       [](ExperimentConfig& c, const std::string& v) { c.photo.grayscale_prob = parse_f64(v); }},
      {"stage1.iters",
       [](ExperimentConfig& c, const std::string& v) { c.stage1.iters = parse_i64(v); }},
      {"stage1.base_lr",
       [](ExperimentConfig& c, const std::string& v) { c.stage1.base_lr = parse_f64(v); }},
      {"stage1.momentum",
       [](ExperimentConfig& c, const std::string& v) { c.stage1.momentum = parse_f64(v); }},
      {"stage1.weight_decay",
       [](ExperimentConfig& c, const std::string& v) { c.stage1.weight_decay = parse_f64(v); }},
      {"stage1.power",
       [](ExperimentConfig& c, const std::string& v) { c.stage1.power = parse_f64(v); }},
      {"stage1.batch",
       [](ExperimentConfig& c, const std::string& v) { c.stage1.batch = parse_int(v); }},
      {"stage2.iters",
       [](ExperimentConfig& c, const std::string& v) { c.stage2.iters = parse_i64(v); }},
      {"stage2.base_lr",
       [](ExperimentConfig& c, const std::string& v) { c.stage2.base_lr = parse_f64(v); }},
      {"stage2.tau",
       [](ExperimentConfig& c, const std::string& v) { c.stage2.tau = parse_f64(v); }},
      {"stage2.q",
       [](ExperimentConfig& c, const std::string& v) { c.stage2.q = parse_f64(v); }},
      {"stage2.batch",
       [](ExperimentConfig& c, const std::string& v) { c.stage2.batch = parse_int(v); }},
      {"stage2.sampler",
       [](ExperimentConfig& c, const std::string& v) { c.stage2.sampler = parse_sampler_mode(v); }},
      {"eval.splits",
       [](ExperimentConfig& c, const std::string& v) { c.eval_splits = split_list(v); }},
  };
  return h;
}

void require(bool ok, const char* msg) {
  if (!ok) throw ConfigError(msg);
}

// ---- batching -------------------------------------------------------------

Tensor stack_batch(const std::vector<Tensor>& pool,
                   const std::vector<size_t>& idx) {
  if (idx.empty()) throw ContractError("empty batch");
  const Shape4 s0 = pool[idx[0]].shape();
  Shape4 out_s{static_cast<int64_t>(idx.size()), s0.c, s0.h, s0.w};
  std::vector<float> out(static_cast<size_t>(out_s.numel()));
  const size_t stride = static_cast<size_t>(s0.c * s0.h * s0.w);
  for (size_t j = 0; j < idx.size(); ++j) {
    const Tensor& t = pool[idx[j]];
    if (t.shape() != s0) throw ShapeError("batch images must share a shape");
    std::memcpy(out.data() + j * stride, t.data().data(),
                stride * sizeof(float));
  }
  return Tensor::from_data(out_s, std::move(out));
}

LabelMap gather_labels(const LabelMap& pool, const std::vector<size_t>& idx) {
  LabelMap out = LabelMap::full(static_cast<int64_t>(idx.size()), pool.h,
                                pool.w, 0);
  const size_t stride = static_cast<size_t>(pool.h * pool.w);
  for (size_t j = 0; j < idx.size(); ++j)
    std::memcpy(out.labels.data() + j * stride,
                pool.labels.data() + idx[j] * stride, stride);
  return out;
}

LabelMap stack_labels(const std::vector<LabelMap>& pool,
                      const std::vector<size_t>& idx) {
  const LabelMap& l0 = pool[idx[0]];
  LabelMap out =
      LabelMap::full(static_cast<int64_t>(idx.size()), l0.h, l0.w, 0);
  const size_t stride = static_cast<size_t>(l0.h * l0.w);
  for (size_t j = 0; j < idx.size(); ++j) {
    const LabelMap& l = pool[idx[j]];
    if (l.n != 1 || l.h != l0.h || l.w != l0.w)
      throw ShapeError("batch labels must share a shape");
    std::memcpy(out.labels.data() + j * stride, l.labels.data(), stride);
  }
  return out;
}

bool any_assigned(const LabelMap& m) {
  return std::any_of(m.labels.begin(), m.labels.end(),
                     [](uint8_t v) { return v != kIgnoreLabel; });
}

// Style-pool trick: the whole pool feeds the swap, the loss reads only the
// first image.
void mask_to_first_sample(LabelMap& m) {
  std::fill(m.labels.begin() + m.h * m.w, m.labels.end(), kIgnoreLabel);
}

// ---- manifest helpers -------------------------------------------------------

std::map<std::string, std::string> domain_roles(const DatasetManifest& m) {
  std::map<std::string, std::string> roles;
  for (const auto& s : m.samples) roles.emplace(s.domain, s.role);
  return roles;
}

std::vector<std::string> resolve_eval_splits(const ExperimentConfig& cfg,
                                             const DatasetManifest& m,
                                             bool adapt_stage) {
  const auto roles = domain_roles(m);
  std::vector<std::string> out;
  if (cfg.eval_splits.empty()) {
    for (const auto& d : m.domains()) {
      if (adapt_stage && roles.at(d) == "source") continue;
      std::string name = d + "_test";
      if (!m.split(name).empty()) out.push_back(name);
    }
    return out;
  }
  for (const auto& name : cfg.eval_splits) {
    const auto idx = m.split(name);
    if (idx.empty()) throw ConfigError("unknown split: " + name);
    if (adapt_stage && m.samples[idx[0]].role == "source")
      throw ConfigError("the adapt stage cannot touch source split " + name);
    out.push_back(name);
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  if (v.empty()) return {m, std::nan("")};
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return {m, std::sqrt(acc / static_cast<double>(v.size()))};
}

void log_line(const RunOptions& opts, const std::string& line) {
  if (opts.log) (*opts.log) << line << "\n";
}

}  // namespace

// ---- config -----------------------------------------------------------------

void ExperimentConfig::validate() const {
  model.validate();
  require(inject.beta >= 0.0 && inject.beta <= 1.0,
          "inject.beta must lie in [0,1]");
  require(inject.patches >= 1, "inject.patches must be positive");
  require(inject.style_pool_size == 0 || inject.style_pool_size >= 2,
          "inject.style_pool_size must be 0 (off) or at least 2");
  for (int s : inject.sites)
    require(s >= 0, "inject.sites entries must be non-negative");
  if (inject.variant == StyleVariant::mixstyle)
    require(inject.mix_alpha > 0.0, "inject.mix_alpha must be positive");
  require(photo.jitter_prob >= 0.0 && photo.jitter_prob <= 1.0,
          "photo.jitter_prob must lie in [0,1]");
  require(photo.blur_prob >= 0.0 && photo.blur_prob <= 1.0,
          "photo.blur_prob must lie in [0,1]");
  require(photo.grayscale_prob >= 0.0 && photo.grayscale_prob <= 1.0,
          "photo.grayscale_prob must lie in [0,1]");
  require(photo.brightness >= 0.0 && photo.contrast >= 0.0 &&
              photo.saturation >= 0.0 && photo.hue >= 0.0,
          "photometric strengths must be non-negative");
  require(photo.blur_sigma_min >= 0.0 &&
              photo.blur_sigma_max >= photo.blur_sigma_min,
          "photo blur sigma range is inverted");
  require(stage1.iters >= 0, "stage1.iters must be non-negative");
  require(stage1.base_lr > 0.0, "stage1.base_lr must be positive");
  require(stage1.momentum >= 0.0 && stage1.momentum < 1.0,
          "stage1.momentum must lie in [0,1)");
  require(stage1.weight_decay >= 0.0, "stage1.weight_decay must be non-negative");
  require(stage1.power >= 0.0, "stage1.power must be non-negative");
  require(stage1.batch >= 1, "stage1.batch must be positive");
  require(stage2.iters >= 0, "stage2.iters must be non-negative");
  require(stage2.base_lr > 0.0, "stage2.base_lr must be positive");
  require(stage2.tau > 0.0 && stage2.tau <= 1.0,
          "stage2.tau must lie in (0,1]");
  require(stage2.q > 0.0 && stage2.q <= 100.0,
          "stage2.q must lie in (0,100]");
  require(stage2.batch >= 1, "stage2.batch must be positive");
}

ExperimentConfig desk_config() { return ExperimentConfig{}; }

ExperimentConfig paper_config() {
  ExperimentConfig c;
  c.stage1.iters = 150000;
  c.stage1.batch = 1;
  c.stage2.iters = 150000;
  c.stage2.batch = 1;
  c.inject.style_pool_size = 4;
  return c;
}

ExperimentConfig parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::set<std::string> seen;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto pos = line.find('#'); pos != std::string::npos)
      line = line.substr(0, pos);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!seen.insert(key).second)
      throw ConfigError("duplicate key: " + key);
    entries.emplace_back(std::move(key), std::move(value));
  }

  ExperimentConfig cfg = desk_config();
  for (const auto& [key, value] : entries) {
    if (key != "profile") continue;
    if (value == "desk")
      cfg = desk_config();
    else if (value == "paper")
      cfg = paper_config();
    else
      throw ConfigError("unknown profile: " + value);
  }
  const auto& handlers = key_handlers();
  for (const auto& [key, value] : entries) {
    if (key == "profile") continue;
    auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError("unknown key: " + key);
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config_text(read_file(path));
}

std::string serialize_config(const ExperimentConfig& cfg) {
  return serialize_config_impl(cfg, true);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string s = serialize_config_impl(cfg, false);
  return hex64(fnv1a(s.data(), s.size(), kFnvSeed));
}

std::string checkpoint_hash(const std::filesystem::path& dir) {
  if (!fs::is_directory(dir))
    throw DataError("checkpoint directory missing: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) {
              return a.filename().string() < b.filename().string();
            });
  uint64_t h = kFnvSeed;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    h = fnv1a(name.data(), name.size() + 1, h);
    const std::string bytes = read_file(f);
    h = fnv1a(bytes.data(), bytes.size(), h);
  }
  return hex64(h);
}

// ---- metrics ----------------------------------------------------------------

IouAccumulator::IouAccumulator(int64_t num_classes) {
  if (num_classes < 1) throw ConfigError("need at least one class");
  tp_.assign(static_cast<size_t>(num_classes), 0);
  fp_.assign(static_cast<size_t>(num_classes), 0);
  fn_.assign(static_cast<size_t>(num_classes), 0);
  gt_count_.assign(static_cast<size_t>(num_classes), 0);
}

void IouAccumulator::add(const LabelMap& gt, const LabelMap& pred) {
  if (gt.n != pred.n || gt.h != pred.h || gt.w != pred.w)
    throw ShapeError("label maps must share a shape");
  const int64_t C = static_cast<int64_t>(tp_.size());
  for (size_t i = 0; i < gt.labels.size(); ++i) {
    const uint8_t g = gt.labels[i];
    if (g == kIgnoreLabel) continue;
    if (g >= C) throw DataError("ground-truth class out of range");
    const uint8_t p = pred.labels[i];
    if (p >= C) throw ContractError("prediction class out of range");
    ++gt_count_[g];
    if (p == g) {
      ++tp_[g];
    } else {
      ++fp_[p];
      ++fn_[g];
    }
  }
}

std::vector<std::pair<int64_t, double>> IouAccumulator::per_class() const {
  std::vector<std::pair<int64_t, double>> out;
  for (size_t c = 0; c < tp_.size(); ++c) {
    if (gt_count_[c] == 0) continue;
    const double denom =
        static_cast<double>(tp_[c] + fp_[c] + fn_[c]);
    out.emplace_back(static_cast<int64_t>(c),
                     static_cast<double>(tp_[c]) / denom);
  }
  return out;
}

double IouAccumulator::miou() const {
  const auto pc = per_class();
  double acc = 0.0;
  for (const auto& [c, iou] : pc) acc += iou;
  return pc.empty() ? std::nan("") : acc / static_cast<double>(pc.size());
}

const SplitMetrics* MetricsReport::find(const std::string& name) const {
  for (const auto& s : splits)
    if (s.name == name) return &s;
  return nullptr;
}

LabelMap argmax_labels(const Tensor& logits) {
  const Shape4 s = logits.shape();
  if (s.c > 255) throw ShapeError("too many classes for u8 labels");
  LabelMap out = LabelMap::full(s.n, s.h, s.w, 0);
  const auto& v = logits.data();
  const int64_t hw = s.h * s.w;
  for (int64_t n = 0; n < s.n; ++n) {
    const float* base = v.data() + n * s.c * hw;
    uint8_t* dst = out.labels.data() + n * hw;
    for (int64_t i = 0; i < hw; ++i) {
      int best = 0;
      float bv = base[i];
      for (int64_t c = 1; c < s.c; ++c) {
        const float cv = base[c * hw + i];
        if (cv > bv) {
          bv = cv;
          best = static_cast<int>(c);
        }
      }
      dst[i] = static_cast<uint8_t>(best);
    }
  }
  return out;
}

MetricsReport evaluate_model(const SegNet& model,
                             const DatasetManifest& manifest,
                             const std::filesystem::path& root,
                             const std::vector<std::string>& splits) {
  const auto roles = domain_roles(manifest);
  MetricsReport rep;
  std::vector<double> compound, with_open, open_only;
  for (const auto& name : splits) {
    const auto idx = manifest.split(name);
    if (idx.empty()) throw ConfigError("unknown split: " + name);
    IouAccumulator acc(model.config().num_classes);
    for (size_t i : idx) {
      const SampleRef& s = manifest.samples[i];
      if (s.label.empty())
        throw ContractError("split " + name + " has no labels");
      const Tensor img = load_image(root, s);
      const LabelMap gt = load_label(root, s);
      acc.add(gt, argmax_labels(model.forward(img)));
    }
    SplitMetrics sm;
    sm.name = name;
    sm.per_class = acc.per_class();
    sm.miou = acc.miou();
    const std::string& role = roles.at(manifest.samples[idx[0]].domain);
    const bool is_test = manifest.samples[idx[0]].split == "test";
    if (is_test && role == "compound") {
      compound.push_back(sm.miou);
      with_open.push_back(sm.miou);
    } else if (is_test && role == "open") {
      open_only.push_back(sm.miou);
      with_open.push_back(sm.miou);
    }
    rep.splits.push_back(std::move(sm));
  }
  rep.compound_miou = mean_of(compound);
  rep.compound_open_miou = mean_of(with_open);
  rep.open_miou = mean_of(open_only);
  return rep;
}

void write_metrics(const MetricsReport& r, const std::filesystem::path& dir) {
  fs::create_directories(dir);
  std::string csv = "split,class,iou\n";
  for (const auto& s : r.splits)
    for (const auto& [c, iou] : s.per_class)
      csv += s.name + "," + std::to_string(c) + "," + fmt_metric(iou) + "\n";
  write_text(dir / "metrics.csv", csv);

  ordered_json j;
  j["config_hash"] = r.config_hash;
  ordered_json js = ordered_json::object();
  for (const auto& s : r.splits) {
    ordered_json one;
    one["miou"] = s.miou;
    ordered_json iou = ordered_json::object();
    for (const auto& [c, v] : s.per_class) iou[std::to_string(c)] = v;
    one["iou"] = std::move(iou);
    js[s.name] = std::move(one);
  }
  j["splits"] = std::move(js);
  j["compound_miou"] = r.compound_miou;
  j["compound_open_miou"] = r.compound_open_miou;
  j["open_miou"] = r.open_miou;
  if (r.pl_coverage >= 0.0) j["pl_coverage"] = r.pl_coverage;
  write_text(dir / "metrics.json", j.dump(2) + "\n");
}

// ---- stage I ----------------------------------------------------------------

RunResult train_source(const ExperimentConfig& cfg,
                       const std::filesystem::path& out_dir,
                       const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  if (cfg.data_dir.empty()) throw ConfigError("data.dir is required");
  const DatasetManifest manifest = load_manifest(cfg.data_dir);
  if (manifest.classes != cfg.model.num_classes)
    throw ConfigError("model.num_classes does not match the dataset");

  const auto src = manifest.role_split("source", "train");
  if (src.empty()) throw DataError("no source training samples");
  std::vector<Tensor> images;
  std::vector<LabelMap> labels;
  images.reserve(src.size());
  labels.reserve(src.size());
  for (size_t i : src) {
    const SampleRef& s = manifest.samples[i];
    if (s.label.empty()) throw DataError("unlabeled source sample " + s.image);
    images.push_back(load_image(cfg.data_dir, s));
    labels.push_back(load_label(cfg.data_dir, s));
  }

  Rng init_rng(cfg.seed, kStreamInit);
  SegNet model(cfg.model, init_rng);
  SgdPolyConfig oc{cfg.stage1.base_lr, cfg.stage1.momentum,
                   cfg.stage1.weight_decay, cfg.stage1.power,
                   std::max<int64_t>(cfg.stage1.iters, 1)};
  SgdPoly opt(oc, model.parameters());
  const int pool = cfg.inject.style_pool_size;
  BatchSampler sampler = BatchSampler::uniform(
      images.size(), pool > 0 ? pool : cfg.stage1.batch,
      Rng(cfg.seed, kStreamSampler));
  Rng photo_rng(cfg.seed, kStreamPhoto);
  Rng cpss_rng(cfg.seed, kStreamCpss);

  for (int64_t it = 0; it < cfg.stage1.iters; ++it) {
    const auto idx = sampler.next();
    Tensor x = stack_batch(images, idx);
    if (cfg.photo_enabled) x = photometric(x, cfg.photo, photo_rng);
    LabelMap y = stack_labels(labels, idx);
    if (pool > 0) mask_to_first_sample(y);
    Tensor logits = model.forward(x, true, cfg.inject, cpss_rng);
    Tensor loss = cross_entropy_masked(logits, y);
    model.zero_grad();
    backward(loss);
    opt.step();
    if (opts.log && opts.log_every > 0 &&
        ((it + 1) % opts.log_every == 0 || it + 1 == cfg.stage1.iters))
      log_line(opts, "stage1 iter " + std::to_string(it + 1) + "/" +
                         std::to_string(cfg.stage1.iters) +
                         " loss " + fmt_metric(loss.item()) + " lr " +
                         fmt_double(opt.lr()));
  }

  fs::create_directories(out_dir);
  const fs::path ckpt = out_dir / "checkpoint";
  model.save(ckpt);

  MetricsReport rep = evaluate_model(
      model, manifest, cfg.data_dir, resolve_eval_splits(cfg, manifest, false));
  rep.config_hash = config_hash(cfg);
  rep.runtime_seconds = seconds_since(t0);
  write_metrics(rep, out_dir);
  write_text(out_dir / "config.txt", serialize_config(cfg));
  write_text(out_dir / "runtime.txt", fmt_metric(rep.runtime_seconds) + "\n");
  return {ckpt, std::move(rep)};
}

// ---- stage II ---------------------------------------------------------------

namespace {

struct PseudoLabels {
  LabelMap labels{};   // one row per compound training sample
  ClassThresholds thresholds;
  double coverage = 0.0;
};

double coverage_of(const LabelMap& m) {
  int64_t assigned = 0;
  for (uint8_t v : m.labels) assigned += v != kIgnoreLabel;
  return static_cast<double>(assigned) / static_cast<double>(m.labels.size());
}

bool load_pl_cache(const fs::path& dir, const std::string& ck_hash, double tau,
                   double q, const std::vector<std::string>& rel_paths,
                   PseudoLabels& out) {
  try {
    ordered_json meta = ordered_json::parse(read_file(dir / "meta.json"));
    if (meta.at("checkpoint").get<std::string>() != ck_hash) return false;
    if (meta.at("tau").get<double>() != tau) return false;
    if (meta.at("q").get<double>() != q) return false;
    const auto imgs = meta.at("images").get<std::vector<std::string>>();
    if (imgs != rel_paths) return false;
    out.labels = load_label_map(dir / "labels.sfot");
    if (out.labels.n != static_cast<int64_t>(rel_paths.size())) return false;
    out.thresholds = load_thresholds_json(dir / "thresholds.json");
    out.coverage = meta.at("coverage").get<double>();
    return true;
  } catch (...) {
    return false;
  }
}

void save_pl_cache(const fs::path& dir, const std::string& ck_hash, double tau,
                   double q, const std::vector<std::string>& rel_paths,
                   const PseudoLabels& pl) {
  fs::create_directories(dir);
  save_label_map(pl.labels, dir / "labels.sfot");
  save_thresholds_json(pl.thresholds, dir / "thresholds.json");
  ordered_json meta;
  meta["checkpoint"] = ck_hash;
  meta["tau"] = tau;
  meta["q"] = q;
  meta["coverage"] = pl.coverage;
  meta["images"] = rel_paths;
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

PseudoLabels make_pseudo_labels(const SegNet& source,
                                const std::vector<Tensor>& images,
                                const ExperimentConfig& cfg) {
  const int64_t C = source.config().num_classes;
  MptAccumulator acc(C, cfg.stage2.tau, cfg.stage2.q, 1000000,
                     derive_seed(cfg.seed, {kStreamPlReservoir}));
  std::vector<Tensor> probs;
  probs.reserve(images.size());
  for (const Tensor& img : images) {
    // clone() drops the forward graph so only the map itself stays resident
    Tensor p = softmax_channels(source.forward(img)).clone();
    acc.add(p);
    probs.push_back(std::move(p));
  }
  PseudoLabels pl;
  pl.thresholds = acc.thresholds();
  const Shape4 s0 = probs.front().shape();
  pl.labels =
      LabelMap::full(static_cast<int64_t>(probs.size()), s0.h, s0.w, 0);
  const size_t stride = static_cast<size_t>(s0.h * s0.w);
  for (size_t i = 0; i < probs.size(); ++i) {
    const PseudoLabelMap one = assign_pseudo_labels(probs[i], pl.thresholds);
    std::memcpy(pl.labels.labels.data() + i * stride, one.labels.labels.data(),
                stride);
  }
  pl.coverage = coverage_of(pl.labels);
  return pl;
}

struct AuditScope {
  explicit AuditScope(std::vector<std::string>& sink) {
    sfot::set_audit_sink([&sink](const std::string& p) { sink.push_back(p); });
  }
  ~AuditScope() { sfot::clear_audit_sink(); }
};

}  // namespace

RunResult adapt_target(const ExperimentConfig& cfg,
                       const std::filesystem::path& checkpoint_dir,
                       const std::filesystem::path& out_dir,
                       const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  if (cfg.data_dir.empty()) throw ConfigError("data.dir is required");

  std::vector<std::string> audit;
  AuditScope audit_scope(audit);

  const DatasetManifest manifest = load_manifest(cfg.data_dir);
  if (manifest.classes != cfg.model.num_classes)
    throw ConfigError("model.num_classes does not match the dataset");
  SegNet source = SegNet::load(checkpoint_dir);
  if (source.config().num_classes != cfg.model.num_classes)
    throw ConfigError("checkpoint class count does not match the config");

  const auto tgt = manifest.role_split("compound", "train");
  if (tgt.empty()) throw DataError("no compound training samples");
  std::vector<Tensor> images;
  std::vector<std::string> rel_paths, domains_of;
  images.reserve(tgt.size());
  for (size_t i : tgt) {
    const SampleRef& s = manifest.samples[i];
    images.push_back(load_image(cfg.data_dir, s));
    rel_paths.push_back(s.image);
    domains_of.push_back(s.domain);
  }

  const std::string ck_hash = checkpoint_hash(checkpoint_dir);
  char keybuf[64];
  std::snprintf(keybuf, sizeof(keybuf), "_t%.6g_q%.6g", cfg.stage2.tau,
                cfg.stage2.q);
  const fs::path cache_dir = out_dir / "plcache" / (ck_hash + keybuf);
  PseudoLabels pl;
  if (load_pl_cache(cache_dir, ck_hash, cfg.stage2.tau, cfg.stage2.q,
                    rel_paths, pl)) {
    log_line(opts, "pseudo-labels: cache hit (" + cache_dir.string() + ")");
  } else {
    pl = make_pseudo_labels(source, images, cfg);
    save_pl_cache(cache_dir, ck_hash, cfg.stage2.tau, cfg.stage2.q, rel_paths,
                  pl);
    log_line(opts, "pseudo-labels: coverage " + fmt_metric(pl.coverage));
  }
  save_thresholds_json(pl.thresholds, out_dir / "thresholds.json");

  SegNet target = source.clone();
  if (cfg.stage2.iters > 0) {
    SgdPolyConfig oc{cfg.stage2.base_lr, cfg.stage1.momentum,
                     cfg.stage1.weight_decay, cfg.stage1.power,
                     cfg.stage2.iters};
    SgdPoly opt(oc, target.parameters());

    const int pool = cfg.inject.style_pool_size;
    const int step_batch = pool > 0 ? pool : cfg.stage2.batch;
    BatchSampler sampler = [&] {
      const Rng srng(cfg.seed, kStreamSampler2);
      switch (cfg.stage2.sampler) {
        case SamplerMode::random:
          return BatchSampler::uniform(images.size(), step_batch, srng);
        case SamplerMode::oracle: {
          std::map<std::string, int> ids;
          std::vector<int> groups;
          for (const auto& d : domains_of)
            groups.push_back(
                ids.emplace(d, static_cast<int>(ids.size())).first->second);
          return BatchSampler::balanced(groups, step_batch, srng);
        }
        case SamplerMode::clustering: {
          std::vector<std::vector<float>> emb;
          emb.reserve(images.size());
          for (const Tensor& img : images)
            emb.push_back(extract_style_embedding(source, img));
          const int k = static_cast<int>(
              std::set<std::string>(domains_of.begin(), domains_of.end())
                  .size());
          const auto groups = cluster_latent_domains(
              emb, k, derive_seed(cfg.seed, {kStreamCluster}));
          return BatchSampler::balanced(groups, step_batch, srng);
        }
      }
      throw ContractError("unhandled sampler mode");
    }();

    Rng photo_rng(cfg.seed, kStreamPhoto2);
    Rng cpss_rng(cfg.seed, kStreamCpss2);
    for (int64_t it = 0; it < cfg.stage2.iters; ++it) {
      const auto idx = sampler.next();
      Tensor x = stack_batch(images, idx);
      if (cfg.photo_enabled) x = photometric(x, cfg.photo, photo_rng);
      LabelMap y = gather_labels(pl.labels, idx);
      if (pool > 0) mask_to_first_sample(y);
      Tensor logits = target.forward(x, true, cfg.inject, cpss_rng);
      Tensor loss = cross_entropy_masked(logits, y);
      target.zero_grad();
      backward(loss);
      // a batch with nothing above threshold must leave the weights alone,
      // so the step (and its weight decay) is skipped outright
      if (any_assigned(y)) opt.step();
      if (opts.log && opts.log_every > 0 &&
          ((it + 1) % opts.log_every == 0 || it + 1 == cfg.stage2.iters))
        log_line(opts, "stage2 iter " + std::to_string(it + 1) + "/" +
                           std::to_string(cfg.stage2.iters) + " loss " +
                           fmt_metric(loss.item()));
    }
  }

  fs::create_directories(out_dir);
  const fs::path ckpt = out_dir / "checkpoint";
  target.save(ckpt);

  MetricsReport rep = evaluate_model(
      target, manifest, cfg.data_dir, resolve_eval_splits(cfg, manifest, true));
  rep.config_hash = config_hash(cfg);
  rep.pl_coverage = pl.coverage;
  rep.runtime_seconds = seconds_since(t0);
  write_metrics(rep, out_dir);
  write_text(out_dir / "config.txt", serialize_config(cfg));
  write_text(out_dir / "runtime.txt", fmt_metric(rep.runtime_seconds) + "\n");

  std::sort(audit.begin(), audit.end());
  audit.erase(std::unique(audit.begin(), audit.end()), audit.end());
  std::string log;
  for (const auto& p : audit) log += p + "\n";
  write_text(out_dir / "audit.log", log);
  return {ckpt, std::move(rep)};
}

// ---- standalone evaluation ----------------------------------------------------

MetricsReport evaluate(const std::filesystem::path& checkpoint_dir,
                       const std::filesystem::path& data_dir,
                       const std::vector<std::string>& splits) {
  const DatasetManifest manifest = load_manifest(data_dir);
  const SegNet model = SegNet::load(checkpoint_dir);
  std::vector<std::string> names = splits;
  if (names.empty())
    for (const auto& d : manifest.domains()) {
      std::string n = d + "_test";
      if (!manifest.split(n).empty()) names.push_back(n);
    }
  MetricsReport rep = evaluate_model(model, manifest, data_dir, names);
  rep.config_hash = checkpoint_hash(checkpoint_dir);
  return rep;
}

// ---- stylize ------------------------------------------------------------------

std::vector<std::filesystem::path> stylize(
    const std::vector<std::filesystem::path>& images,
    const std::filesystem::path& out_dir, const StylizeOptions& opt) {
  if (images.empty()) throw ConfigError("stylize needs at least one image");
  if (opt.grid_h < 1 || opt.grid_w < 1)
    throw ConfigError("grid dimensions must be positive");
  if (opt.variant != StyleVariant::intra && opt.variant != StyleVariant::inter)
    throw ConfigError("stylize swaps patch styles: variant must be intra or inter");
  if (opt.variant == StyleVariant::inter && images.size() < 2 && !opt.identity)
    throw ConfigError("inter variant needs at least two images");

  std::vector<sfot::Array> raw;
  raw.reserve(images.size());
  for (const auto& p : images) {
    sfot::Array a = sfot::read(p.string());
    if (a.dtype != sfot::Dtype::f32 || a.dims.size() != 3)
      throw DataError("expected a rank-3 float image: " + p.string());
    if (!raw.empty() && a.dims != raw.front().dims)
      throw ShapeError("stylize inputs must share a shape");
    raw.push_back(std::move(a));
  }
  const int64_t B = static_cast<int64_t>(raw.size());
  const int64_t C = raw[0].dims[0], H = raw[0].dims[1], W = raw[0].dims[2];

  std::vector<float> stacked;
  stacked.reserve(static_cast<size_t>(B * C * H * W));
  for (const auto& a : raw)
    stacked.insert(stacked.end(), a.f32.begin(), a.f32.end());
  const Tensor batch = Tensor::from_data({B, C, H, W}, std::move(stacked));

  const PatchGrid grid = PatchGrid::uniform(opt.grid_h, opt.grid_w, H, W);
  Rng rng(opt.seed, kStreamStylize);
  SwapPlan plan;
  if (opt.identity)
    plan = SwapPlan::identity(B, grid.patches());
  else if (opt.variant == StyleVariant::intra)
    plan = SwapPlan::intra_random(B, grid.patches(), rng);
  else
    plan = SwapPlan::inter_random(B, grid.patches(), rng);

  const PatchStyle pre = compute_patch_style(batch, grid);
  const Tensor styled = cpss_apply(batch, grid, plan);
  const PatchStyle post = compute_patch_style(styled, grid);

  fs::create_directories(out_dir);
  std::vector<fs::path> outputs;
  const size_t plane = static_cast<size_t>(C * H * W);
  for (int64_t k = 0; k < B; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "styled_%04lld.sfot",
                  static_cast<long long>(k));
    const fs::path out = out_dir / name;
    std::vector<float> img(styled.data().begin() + k * plane,
                           styled.data().begin() + (k + 1) * plane);
    sfot::write_f32(out.string(),
                    {static_cast<uint32_t>(C), static_cast<uint32_t>(H),
                     static_cast<uint32_t>(W)},
                    img);
    outputs.push_back(out);
    if (opt.write_png && png_supported() && C == 3) {
      std::vector<uint8_t> rgb(static_cast<size_t>(H * W * 3));
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
          for (int64_t c = 0; c < 3; ++c) {
            const float v = img[static_cast<size_t>((c * H + y) * W + x)];
            rgb[static_cast<size_t>((y * W + x) * 3 + c)] =
                static_cast<uint8_t>(std::lround(
                    std::min(1.0f, std::max(0.0f, v)) * 255.0f));
          }
      char png_name[32];
      std::snprintf(png_name, sizeof(png_name), "styled_%04lld.png",
                    static_cast<long long>(k));
      write_png_rgb8(out_dir / png_name, H, W, rgb);
    }
  }

  auto style_json = [&](const PatchStyle& st, int64_t k) {
    ordered_json mean = ordered_json::array();
    ordered_json stddev = ordered_json::array();
    for (int p = 0; p < st.patches; ++p) {
      ordered_json mrow = ordered_json::array();
      ordered_json srow = ordered_json::array();
      for (int64_t c = 0; c < st.channels; ++c) {
        mrow.push_back(st.mean[st.index(k, p, c)]);
        srow.push_back(st.stddev[st.index(k, p, c)]);
      }
      mean.push_back(std::move(mrow));
      stddev.push_back(std::move(srow));
    }
    ordered_json out;
    out["mean"] = std::move(mean);
    out["std"] = std::move(stddev);
    return out;
  };

  ordered_json stats;
  stats["grid"] = {opt.grid_h, opt.grid_w};
  stats["variant"] = opt.identity ? std::string("identity")
                                  : style_variant_name(opt.variant);
  stats["seed"] = opt.seed;
  stats["assignment"] = plan.assignment;
  ordered_json imgs = ordered_json::array();
  for (int64_t k = 0; k < B; ++k) {
    ordered_json one;
    one["input"] = images[static_cast<size_t>(k)].string();
    one["output"] = outputs[static_cast<size_t>(k)].string();
    one["pre"] = style_json(pre, k);
    one["post"] = style_json(post, k);
    imgs.push_back(std::move(one));
  }
  stats["images"] = std::move(imgs);
  write_text(out_dir / "stats.json", stats.dump(2) + "\n");
  return outputs;
}

// ---- style embeddings -----------------------------------------------------------

void style_embed(const std::filesystem::path& checkpoint_dir,
                 const std::filesystem::path& data_dir,
                 const std::filesystem::path& out_csv, int k, uint64_t seed) {
  const DatasetManifest manifest = load_manifest(data_dir);
  const SegNet model = SegNet::load(checkpoint_dir);
  const auto tgt = manifest.role_split("compound", "train");
  if (tgt.empty()) throw DataError("no compound training samples");

  std::vector<std::vector<float>> emb;
  std::set<std::string> domains;
  emb.reserve(tgt.size());
  for (size_t i : tgt) {
    const SampleRef& s = manifest.samples[i];
    emb.push_back(extract_style_embedding(model, load_image(data_dir, s)));
    domains.insert(s.domain);
  }
  const int k0 = k > 0 ? k : static_cast<int>(domains.size());
  const auto clusters = cluster_latent_domains(emb, k0, seed);

  std::string csv = "index,image,domain,cluster";
  for (size_t d = 0; d < emb[0].size(); ++d)
    csv += ",e" + std::to_string(d);
  csv += "\n";
  for (size_t j = 0; j < tgt.size(); ++j) {
    const SampleRef& s = manifest.samples[tgt[j]];
    csv += std::to_string(j) + "," + s.image + "," + s.domain + "," +
           std::to_string(clusters[j]);
    for (float v : emb[j]) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), ",%.9g", static_cast<double>(v));
      csv += buf;
    }
    csv += "\n";
  }
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  write_text(out_csv, csv);
}

// ---- sweeps ---------------------------------------------------------------------

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "patches") return SweepAxis::patches;
  if (name == "beta") return SweepAxis::beta;
  if (name == "block") return SweepAxis::block;
  throw ConfigError("unknown sweep axis: " + name);
}

std::string sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::patches: return "patches";
    case SweepAxis::beta: return "beta";
    case SweepAxis::block: return "block";
  }
  throw ContractError("unhandled sweep axis");
}

namespace {

ExperimentConfig apply_axis(const ExperimentConfig& base, SweepAxis axis,
                            double value) {
  ExperimentConfig cfg = base;
  switch (axis) {
    case SweepAxis::patches: {
      if (value < 0 || value != std::floor(value))
        throw ConfigError("patch counts must be non-negative integers");
      if (value == 0)
        cfg.inject.variant = StyleVariant::off;
      else
        cfg.inject.patches = static_cast<int>(value);
      break;
    }
    case SweepAxis::beta: {
      if (value < 0.0 || value > 1.0)
        throw ConfigError("beta values must lie in [0,1]");
      cfg.inject.beta = value;
      break;
    }
    case SweepAxis::block: {
      if (value < 0 || value != std::floor(value) ||
          value > static_cast<double>(base.model.blocks()))
        throw ConfigError("block values must be integers in [0, blocks]");
      cfg.inject.sites = {static_cast<int>(value)};
      break;
    }
  }
  return cfg;
}

}  // namespace

std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepAxis axis,
                            const std::vector<double>& values, int seeds,
                            const std::filesystem::path& out_dir,
                            const RunOptions& opts) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (seeds < 1) throw ConfigError("sweep needs at least one seed");
  fs::create_directories(out_dir);

  std::vector<SweepRow> rows;
  for (double value : values) {
    const ExperimentConfig point = apply_axis(base, axis, value);
    std::vector<double> open_v, c_v, co_v;
    for (int s = 0; s < seeds; ++s) {
      ExperimentConfig cfg = point;
      cfg.seed = base.seed + static_cast<uint64_t>(s);
      char sub[64];
      std::snprintf(sub, sizeof(sub), "%s_%g/seed%d",
                    sweep_axis_name(axis).c_str(), value, s);
      log_line(opts, std::string("sweep point ") + sub);
      const RunResult r = train_source(cfg, out_dir / sub, opts);
      open_v.push_back(r.report.open_miou);
      c_v.push_back(r.report.compound_miou);
      co_v.push_back(r.report.compound_open_miou);
    }
    SweepRow row;
    row.value = value;
    row.seeds = seeds;
    std::tie(row.open_mean, row.open_std) = mean_std(open_v);
    std::tie(row.c_mean, row.c_std) = mean_std(c_v);
    std::tie(row.co_mean, row.co_std) = mean_std(co_v);
    rows.push_back(row);
  }
  write_sweep_csv(rows, axis, out_dir / "sweep.csv");
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, SweepAxis axis,
                     const std::filesystem::path& path) {
  std::string csv =
      "axis,value,seeds,open_mean,open_std,c_mean,c_std,co_mean,co_std\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%g,%d,%s,%s,%s,%s,%s,%s\n",
                  sweep_axis_name(axis).c_str(), r.value, r.seeds,
                  fmt_metric(r.open_mean).c_str(), fmt_metric(r.open_std).c_str(),
                  fmt_metric(r.c_mean).c_str(), fmt_metric(r.c_std).c_str(),
                  fmt_metric(r.co_mean).c_str(), fmt_metric(r.co_std).c_str());
    csv += buf;
  }
  write_text(path, csv);
}

}  // namespace sfocda
