#include "sfocda/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "sfocda/sfot.hpp"

namespace sfocda {

namespace {

/// Argmax over channels at one (n, i) site, lowest index on ties.
int64_t site_argmax(const float* site, int64_t C, int64_t hw, float* maxp) {
  int64_t best = 0;
  float bv = site[0];
  for (int64_t c = 1; c < C; ++c) {
    const float v = site[c * hw];
    if (v > bv) {
      bv = v;
      best = c;
    }
  }
  *maxp = bv;
  return best;
}

}  // namespace

MptAccumulator::MptAccumulator(int64_t num_classes, double tau, double q,
                               int64_t cap, uint64_t seed)
    : tau_(tau), q_(q), cap_(cap), rng_(seed, 0) {
  if (num_classes < 2) throw ContractError("num_classes must be at least 2");
  if (!(tau > 0.0 && tau <= 1.0)) throw ContractError("tau must be in (0, 1]");
  if (!(q > 0.0 && q <= 100.0)) throw ContractError("q must be in (0, 100]");
  if (cap < 1) throw ContractError("reservoir cap must be positive");
  values_.resize(static_cast<size_t>(num_classes));
  seen_.assign(static_cast<size_t>(num_classes), 0);
}

void MptAccumulator::add(const Tensor& probs) {
  const Shape4& s = probs.shape();
  if (s.c != static_cast<int64_t>(values_.size()))
    throw ShapeError("probability map has " + std::to_string(s.c) +
                     " classes, accumulator expects " +
                     std::to_string(values_.size()));
  const auto& p = probs.data();
  const int64_t hw = s.h * s.w;
  const int64_t chw = s.c * hw;
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t i = 0; i < hw; ++i) {
      float maxp;
      const int64_t c = site_argmax(p.data() + n * chw + i, s.c, hw, &maxp);
      auto& pool = values_[static_cast<size_t>(c)];
      const int64_t k = ++seen_[static_cast<size_t>(c)];
      if (static_cast<int64_t>(pool.size()) < cap_) {
        pool.push_back(maxp);
      } else {
        const uint64_t j = rng_.uniform_int(static_cast<uint64_t>(k));
        if (j < static_cast<uint64_t>(cap_)) pool[j] = maxp;
      }
    }
  }
}

ClassThresholds MptAccumulator::thresholds() const {
  if (total_seen() == 0)
    throw ContractError("threshold estimation over an empty pixel set");
  ClassThresholds th;
  th.tau = tau_;
  th.q = q_;
  th.t.resize(values_.size());
  for (size_t c = 0; c < values_.size(); ++c) {
    if (values_[c].empty()) {
      th.t[c] = tau_;
      continue;
    }
    std::vector<float> v = values_[c];
    std::sort(v.begin(), v.end(), std::greater<float>());
    const int64_t m = static_cast<int64_t>(v.size());
    int64_t k = static_cast<int64_t>(
        std::ceil(static_cast<double>(m) * q_ / 100.0));
    k = std::clamp<int64_t>(k, 1, m);
    th.t[c] = std::min(tau_, static_cast<double>(v[static_cast<size_t>(k - 1)]));
  }
  return th;
}

int64_t MptAccumulator::total_seen() const {
  int64_t total = 0;
  for (int64_t s : seen_) total += s;
  return total;
}

ClassThresholds mpt_thresholds(const Tensor& probs, double tau, double q) {
  MptAccumulator acc(probs.shape().c, tau, q);
  acc.add(probs);
  return acc.thresholds();
}

PseudoLabelMap assign_pseudo_labels(const Tensor& probs,
                                    const ClassThresholds& th) {
  const Shape4& s = probs.shape();
  if (s.c != static_cast<int64_t>(th.t.size()))
    throw ShapeError("probability map has " + std::to_string(s.c) +
                     " classes, thresholds cover " + std::to_string(th.t.size()));
  PseudoLabelMap out;
  out.labels = LabelMap::full(s.n, s.h, s.w, kIgnoreLabel);
  const auto& p = probs.data();
  const int64_t hw = s.h * s.w;
  const int64_t chw = s.c * hw;
  int64_t assigned = 0;
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t i = 0; i < hw; ++i) {
      float maxp;
      const int64_t c = site_argmax(p.data() + n * chw + i, s.c, hw, &maxp);
      if (static_cast<double>(maxp) >= th.t[static_cast<size_t>(c)]) {
        out.labels.labels[static_cast<size_t>(n * hw + i)] =
            static_cast<uint8_t>(c);
        ++assigned;
      }
    }
  }
  out.coverage =
      static_cast<double>(assigned) / static_cast<double>(s.n * hw);
  return out;
}

void save_thresholds_json(const ClassThresholds& th,
                          const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  for (size_t c = 0; c < th.t.size(); ++c) j[std::to_string(c)] = th.t[c];
  j["tau"] = th.tau;
  j["q"] = th.q;
  std::ofstream f(path);
  if (!f) throw DataError("cannot write thresholds to " + path.string());
  f << j.dump(2) << "\n";
}

ClassThresholds load_thresholds_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open thresholds file " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed thresholds file " + path.string() + ": " + e.what());
  }
  if (!j.contains("tau") || !j.contains("q"))
    throw DataError("thresholds file missing tau/q: " + path.string());
  ClassThresholds th;
  th.tau = j["tau"].get<double>();
  th.q = j["q"].get<double>();
  for (int64_t c = 0;; ++c) {
    auto it = j.find(std::to_string(c));
    if (it == j.end()) break;
    th.t.push_back(it->get<double>());
  }
  if (th.t.empty()) throw DataError("thresholds file lists no classes: " + path.string());
  return th;
}

void save_label_map(const LabelMap& m, const std::filesystem::path& path) {
  sfot::write_u8(path.string(),
                 {static_cast<uint32_t>(m.n), static_cast<uint32_t>(m.h),
                  static_cast<uint32_t>(m.w)},
                 m.labels);
}

LabelMap load_label_map(const std::filesystem::path& path) {
  sfot::Array a = sfot::read(path.string());
  if (a.dtype != sfot::Dtype::u8 || a.dims.size() != 3)
    throw DataError("label map file must be a rank-3 u8 tensor: " + path.string());
  LabelMap m;
  m.n = a.dims[0];
  m.h = a.dims[1];
  m.w = a.dims[2];
  m.labels = std::move(a.u8);
  return m;
}

}  // namespace sfocda
