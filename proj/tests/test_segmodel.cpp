#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "sfocda/segmodel.hpp"

using namespace sfocda;

namespace {

std::vector<float> randu(Rng& rng, int64_t n, float lo = -1.0f,
                         float hi = 1.0f) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

SegNetConfig tiny_cfg() {
  SegNetConfig cfg;
  cfg.in_channels = 3;
  cfg.num_classes = 4;
  cfg.widths = {6, 8};
  return cfg;
}

bool same_bytes(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config validation") {
  Rng rng(1, 0);
  SegNetConfig bad = tiny_cfg();
  bad.num_classes = 1;
  CHECK_THROWS_AS(SegNet(bad, rng), ConfigError);
  bad = tiny_cfg();
  bad.widths = {};
  CHECK_THROWS_AS(SegNet(bad, rng), ConfigError);
  bad = tiny_cfg();
  bad.widths = {8, 0};
  CHECK_THROWS_AS(SegNet(bad, rng), ConfigError);
  bad = tiny_cfg();
  bad.in_channels = 0;
  CHECK_THROWS_AS(SegNet(bad, rng), ConfigError);
}

TEST_CASE("output shape and input validation") {
  Rng rng(2, 0);
  SegNet net(tiny_cfg(), rng);
  Tensor img = Tensor::from_data({2, 3, 16, 24}, randu(rng, 2 * 3 * 16 * 24));
  Tensor logits = net.forward(img);
  CHECK(logits.shape() == Shape4{2, 4, 16, 24});

  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 2, 16, 16})), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 3, 18, 16})), ShapeError);

  SegNetConfig deep = tiny_cfg();
  deep.widths = {4, 4, 4};
  SegNet net3(deep, rng);
  Tensor img3 = Tensor::from_data({1, 3, 24, 16}, randu(rng, 3 * 24 * 16));
  CHECK(net3.forward(img3).shape() == Shape4{1, 4, 24, 16});
  CHECK_THROWS_AS(net3.forward(Tensor::zeros({1, 3, 20, 16})), ShapeError);
}

TEST_CASE("eval forward is deterministic and matches beta-zero training") {
  Rng rng(3, 0);
  SegNet net(tiny_cfg(), rng);
  Tensor img = Tensor::from_data({2, 3, 16, 16}, randu(rng, 2 * 3 * 16 * 16));

  Tensor a = net.forward(img);
  Tensor b = net.forward(img);
  CHECK(same_bytes(a.data(), b.data()));

  InjectionConfig inj;
  inj.beta = 0.0;
  inj.sites = {1, 2};
  Rng draw(77, 0);
  Tensor c = net.forward(img, true, inj, draw);
  CHECK(same_bytes(a.data(), c.data()));
  CHECK(draw.counter() == 2);  // one gate draw per site, none applied
}

TEST_CASE("injection fires in training mode only") {
  Rng rng(4, 0);
  SegNet net(tiny_cfg(), rng);
  Tensor img = Tensor::from_data({2, 3, 16, 16}, randu(rng, 2 * 3 * 16 * 16, 0.0f, 1.0f));
  Tensor base = net.forward(img);

  InjectionConfig inj;
  inj.beta = 1.0;
  inj.variant = StyleVariant::inter;
  inj.sites = {1};
  Rng draw(5, 0);
  Tensor swapped = net.forward(img, true, inj, draw);
  CHECK(draw.counter() > 2);
  CHECK_FALSE(same_bytes(base.data(), swapped.data()));

  // Empty site list never draws and never alters the output.
  inj.sites = {};
  Rng draw2(5, 0);
  Tensor plain = net.forward(img, true, inj, draw2);
  CHECK(draw2.counter() == 0);
  CHECK(same_bytes(base.data(), plain.data()));

  // Image-level site restyles before any convolution.
  inj.sites = {0};
  Rng draw3(5, 0);
  Tensor img_level = net.forward(img, true, inj, draw3);
  CHECK_FALSE(same_bytes(base.data(), img_level.data()));

  inj.sites = {3};
  Rng draw4(5, 0);
  CHECK_THROWS_AS(net.forward(img, true, inj, draw4), ConfigError);
}

TEST_CASE("features composes back into the full forward") {
  Rng rng(6, 0);
  SegNet net(tiny_cfg(), rng);
  Tensor img = Tensor::from_data({1, 3, 16, 16}, randu(rng, 3 * 16 * 16));

  Tensor f1 = net.features(img, 1);
  CHECK(f1.shape() == Shape4{1, 6, 16, 16});
  Tensor f2 = net.features(img, 2);
  CHECK(f2.shape() == Shape4{1, 8, 8, 8});

  Tensor head_w, head_b;
  for (const auto& [name, p] : net.parameters()) {
    if (name == "head.weight") head_w = p;
    if (name == "head.bias") head_b = p;
  }
  Tensor manual = upsample_nearest(
      conv2d(maxpool2d(f2, 2), head_w, head_b, 1, 0), 4);
  CHECK(same_bytes(manual.data(), net.forward(img).data()));

  CHECK_THROWS_AS(net.features(img, 0), ConfigError);
  CHECK_THROWS_AS(net.features(img, 3), ConfigError);
}

TEST_CASE("parameter init statistics") {
  SegNetConfig cfg;
  cfg.in_channels = 3;
  cfg.num_classes = 6;
  cfg.widths = {16, 32, 64};
  Rng rng(7, 0);
  SegNet net(cfg, rng);
  CHECK(net.parameters().size() == 14);
  for (const auto& [name, p] : net.parameters()) {
    CHECK(p.requires_grad());
    if (name.ends_with(".bias")) {
      for (float v : p.data()) CHECK(v == 0.0f);
    }
  }
  // He scale on the largest weight: std should be near sqrt(2 / fan_in).
  for (const auto& [name, p] : net.parameters()) {
    if (name != "block3.conv2.weight") continue;
    const auto& w = p.data();
    double sum = 0.0, sq = 0.0;
    for (float v : w) {
      sum += v;
      sq += static_cast<double>(v) * v;
    }
    const double mean = sum / w.size();
    const double var = sq / w.size() - mean * mean;
    const double expect = 2.0 / (64 * 3 * 3);
    CHECK(std::fabs(mean) < 0.002);
    CHECK(var == doctest::Approx(expect).epsilon(0.1));
  }
}

TEST_CASE("cross entropy closed forms") {
  // Uniform logits: loss = ln C.
  Tensor logits = Tensor::zeros({1, 4, 2, 2});
  LabelMap labels = LabelMap::full(1, 2, 2, 0);
  labels.at(0, 1, 1) = 3;
  CHECK(cross_entropy_masked(logits, labels).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-6));

  // Near one-hot logits: loss tends to zero.
  std::vector<float> z(4 * 4, 0.0f);
  Shape4 s{1, 4, 2, 2};
  LabelMap hard = LabelMap::full(1, 2, 2, 2);
  for (int64_t i = 0; i < 4; ++i) z[2 * 4 + i] = 30.0f;  // class-2 plane
  CHECK(cross_entropy_masked(Tensor::from_data(s, z), hard).item() ==
        doctest::Approx(0.0).epsilon(1e-6));

  // All ignored: exact zero, zero gradients.
  Rng rng(8, 0);
  Tensor x = Tensor::from_data(s, randu(rng, 16), true);
  LabelMap ign = LabelMap::full(1, 2, 2, kIgnoreLabel);
  Tensor loss = cross_entropy_masked(x, ign);
  CHECK(loss.item() == 0.0f);
  backward(loss);
  REQUIRE(x.grad() != nullptr);
  for (float g : *x.grad()) CHECK(g == 0.0f);
}

TEST_CASE("cross entropy validation and mean semantics") {
  Shape4 s{1, 3, 1, 2};
  Tensor x = Tensor::from_data(s, {0.3f, -0.1f, 1.2f, 0.5f, -0.7f, 0.2f});
  LabelMap bad = LabelMap::full(1, 1, 2, 3);
  CHECK_THROWS_AS(cross_entropy_masked(x, bad), DataError);
  LabelMap wrong = LabelMap::full(1, 2, 2, 0);
  CHECK_THROWS_AS(cross_entropy_masked(x, wrong), ShapeError);

  // Mean over counted pixels: one of two pixels ignored equals the
  // single-pixel loss, and the f64 oracle agrees.
  LabelMap half = LabelMap::full(1, 1, 2, 0);
  half.at(0, 0, 1) = kIgnoreLabel;
  const float got = cross_entropy_masked(x, half).item();
  const auto ref = oracle::cross_entropy_masked_d(
      s, oracle::to_double(x.data()), half.labels);
  CHECK(got == doctest::Approx(ref[0]).epsilon(1e-6));
}

TEST_CASE("cross entropy agrees with f64 oracle on random batches") {
  Rng rng(9, 0);
  for (int trial = 0; trial < 20; ++trial) {
    Shape4 s{2, 5, 3, 4};
    std::vector<float> z = randu(rng, s.numel(), -4.0f, 4.0f);
    LabelMap labels = LabelMap::full(2, 3, 4, 0);
    for (auto& v : labels.labels) {
      const uint64_t r = rng.uniform_int(6);
      v = r == 5 ? kIgnoreLabel : static_cast<uint8_t>(r);
    }
    const float got = cross_entropy_masked(Tensor::from_data(s, z), labels).item();
    const auto ref =
        oracle::cross_entropy_masked_d(s, oracle::to_double(z), labels.labels);
    CHECK(got == doctest::Approx(ref[0]).epsilon(1e-5));
  }
}

TEST_CASE("ignored pixels contribute exactly zero gradient") {
  Rng rng(10, 0);
  Shape4 s{1, 3, 2, 2};
  std::vector<float> z = randu(rng, s.numel());
  LabelMap labels = LabelMap::full(1, 2, 2, 1);
  labels.at(0, 0, 1) = kIgnoreLabel;
  labels.at(0, 1, 0) = kIgnoreLabel;

  Tensor x = Tensor::from_data(s, z, true);
  Tensor loss = cross_entropy_masked(x, labels);
  backward(loss);
  const auto& g = *x.grad();
  const int64_t hw = 4;
  for (int64_t c = 0; c < 3; ++c) {
    CHECK(g[c * hw + 1] == 0.0f);
    CHECK(g[c * hw + 2] == 0.0f);
    CHECK(g[c * hw + 0] != 0.0f);
  }

  // Perturbing an ignored pixel's logits never moves the loss.
  std::vector<float> z2 = z;
  for (int64_t c = 0; c < 3; ++c) z2[c * hw + 1] += 3.0f;
  CHECK(cross_entropy_masked(Tensor::from_data(s, z2), labels).item() ==
        loss.item());
}

TEST_CASE("cross entropy finite differences against f64 oracle") {
  Rng rng(11, 0);
  Shape4 s{2, 4, 3, 3};
  std::vector<float> x0 = randu(rng, s.numel(), -2.0f, 2.0f);
  LabelMap labels = LabelMap::full(2, 3, 3, 0);
  for (auto& v : labels.labels) {
    const uint64_t r = rng.uniform_int(5);
    v = r == 4 ? kIgnoreLabel : static_cast<uint8_t>(r);
  }
  auto results = oracle::fd_check_many(
      [&labels](const Tensor& x) { return cross_entropy_masked(x, labels); },
      [&s, &labels](const oracle::DVec& xd) {
        return oracle::cross_entropy_masked_d(s, xd, labels.labels);
      },
      x0, s, {1.0f}, 12, rng, 1e-3);
  for (const auto& r : results) CHECK(r.rel < 1e-3);
}

TEST_CASE("losses are non-negative") {
  Rng rng(12, 0);
  for (int trial = 0; trial < 10; ++trial) {
    Shape4 s{1, 3, 2, 2};
    Tensor x = Tensor::from_data(s, randu(rng, s.numel(), -5.0f, 5.0f));
    LabelMap labels = LabelMap::full(1, 2, 2, 0);
    for (auto& v : labels.labels) v = static_cast<uint8_t>(rng.uniform_int(3));
    CHECK(cross_entropy_masked(x, labels).item() >= 0.0f);
  }
}

TEST_CASE("sgd hand-computed trajectories") {
  // Spec of the update rule: w=1, g=1, no momentum, no decay, lr 0.1 -> 0.9.
  Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0f}, true);
  w.grad_buffer()[0] = 1.0f;
  SgdPolyConfig cfg;
  cfg.base_lr = 0.1;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.power = 0.9;
  cfg.total_iters = 100;
  SgdPoly opt(cfg, {{"w", w}});
  CHECK(opt.lr() == doctest::Approx(0.1));
  opt.step();
  CHECK(w.data()[0] == doctest::Approx(0.9));
  CHECK(opt.iter() == 1);

  // Momentum accumulates: second step uses v = 0.9*1 + 1 = 1.9.
  Tensor w2 = Tensor::from_data({1, 1, 1, 1}, {1.0f}, true);
  w2.grad_buffer()[0] = 1.0f;
  SgdPolyConfig m;
  m.base_lr = 0.1;
  m.momentum = 0.9;
  m.weight_decay = 0.0;
  m.power = 0.0;  // constant lr isolates the momentum arithmetic
  m.total_iters = 100;
  SgdPoly opt2(m, {{"w", w2}});
  opt2.step();
  CHECK(w2.data()[0] == doctest::Approx(0.9));
  w2.zero_grad();
  w2.grad_buffer()[0] = 1.0f;
  opt2.step();
  CHECK(w2.data()[0] == doctest::Approx(0.9 - 0.1 * 1.9));

  // Weight decay alone: v = wd * w = 0.5, w <- 1 - 0.05.
  Tensor w3 = Tensor::from_data({1, 1, 1, 1}, {1.0f}, true);
  w3.zero_grad();
  SgdPolyConfig d;
  d.base_lr = 0.1;
  d.momentum = 0.0;
  d.weight_decay = 0.5;
  d.power = 0.0;
  d.total_iters = 10;
  SgdPoly opt3(d, {{"w", w3}});
  opt3.step();
  CHECK(w3.data()[0] == doctest::Approx(0.95));
}

TEST_CASE("sgd guards and lr schedule") {
  Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0f}, true);
  SgdPolyConfig cfg;
  cfg.base_lr = 2.5e-4;
  cfg.total_iters = 1000;
  SgdPoly opt(cfg, {{"w", w}});
  CHECK(opt.lr() == doctest::Approx(2.5e-4));
  CHECK_THROWS_AS(opt.step(), ContractError);  // no gradient populated

  // Strictly decreasing for power > 0, and zero at the end.
  double prev = opt.lr_at(0);
  for (int64_t i = 1; i <= 1000; i += 111) {
    const double cur = opt.lr_at(i);
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK(opt.lr_at(1000) == 0.0);
  CHECK(opt.lr_at(1200) == 0.0);

  // Zero grad, zero velocity, zero decay: parameters never move.
  Tensor w2 = Tensor::from_data({1, 1, 1, 1}, {0.75f}, true);
  w2.zero_grad();
  SgdPolyConfig z;
  z.base_lr = 0.5;
  z.momentum = 0.9;
  z.weight_decay = 0.0;
  z.total_iters = 10;
  SgdPoly opt2(z, {{"w", w2}});
  opt2.step();
  opt2.step();
  CHECK(w2.data()[0] == 0.75f);

  SgdPolyConfig bad;
  bad.total_iters = 0;
  CHECK_THROWS_AS(SgdPoly(bad, {}), ConfigError);
}

TEST_CASE("one small step decreases the loss on a single example") {
  Rng rng(13, 0);
  SegNet net(tiny_cfg(), rng);
  Tensor img = Tensor::from_data({1, 3, 16, 16}, randu(rng, 3 * 16 * 16, 0.0f, 1.0f));
  LabelMap labels = LabelMap::full(1, 16, 16, 0);
  for (int64_t y = 0; y < 16; ++y)
    for (int64_t x = 0; x < 16; ++x)
      labels.at(0, y, x) = static_cast<uint8_t>((y / 4 + x / 4) % 4);

  const float before = cross_entropy_masked(net.forward(img), labels).item();

  SgdPolyConfig cfg;
  cfg.base_lr = 1e-5;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.total_iters = 1;
  SgdPoly opt(cfg, net.parameters());
  net.zero_grad();
  Tensor loss = source_loss(net.forward(img), labels);
  backward(loss);
  opt.step();

  const float after = cross_entropy_masked(net.forward(img), labels).item();
  CHECK(after < before);
}

TEST_CASE("training is bit-deterministic") {
  auto train = [](uint64_t seed) {
    Rng init(seed, 1);
    SegNet net(tiny_cfg(), init);
    Rng data(seed, 2);
    Rng aug(seed, 4);
    InjectionConfig inj;
    inj.beta = 0.5;
    inj.sites = {1};
    SgdPolyConfig cfg;
    cfg.base_lr = 1e-3;
    cfg.total_iters = 5;
    SgdPoly opt(cfg, net.parameters());
    for (int it = 0; it < 5; ++it) {
      Tensor img = Tensor::from_data(
          {2, 3, 16, 16},
          [&data]() {
            std::vector<float> v(2 * 3 * 16 * 16);
            for (auto& x : v) x = static_cast<float>(data.uniform());
            return v;
          }());
      LabelMap labels = LabelMap::full(2, 16, 16, 0);
      for (auto& v : labels.labels)
        v = static_cast<uint8_t>(data.uniform_int(4));
      net.zero_grad();
      Tensor loss = source_loss(net.forward(img, true, inj, aug), labels);
      backward(loss);
      opt.step();
    }
    return net;
  };
  SegNet a = train(42);
  SegNet b = train(42);
  for (size_t i = 0; i < a.parameters().size(); ++i)
    CHECK(same_bytes(a.parameters()[i].second.data(),
                     b.parameters()[i].second.data()));
}

TEST_CASE("checkpoint round trip") {
  Rng rng(14, 0);
  SegNetConfig cfg;
  cfg.in_channels = 3;
  cfg.num_classes = 5;
  cfg.widths = {4, 6};
  SegNet net(cfg, rng);
  auto dir = fresh_dir("sfocda_ckpt_rt");
  net.save(dir);

  SegNet back = SegNet::load(dir);
  CHECK(back.config().num_classes == 5);
  CHECK(back.config().widths == std::vector<int64_t>{4, 6});
  REQUIRE(back.parameters().size() == net.parameters().size());
  for (size_t i = 0; i < net.parameters().size(); ++i) {
    CHECK(back.parameters()[i].first == net.parameters()[i].first);
    CHECK(same_bytes(back.parameters()[i].second.data(),
                     net.parameters()[i].second.data()));
  }

  Tensor img = Tensor::from_data({1, 3, 8, 8}, randu(rng, 3 * 8 * 8));
  CHECK(same_bytes(net.forward(img).data(), back.forward(img).data()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint corruption is rejected") {
  CHECK_THROWS_AS(SegNet::load("/nonexistent/ckpt"), DataError);

  Rng rng(15, 0);
  SegNet net(tiny_cfg(), rng);
  auto dir = fresh_dir("sfocda_ckpt_bad");
  net.save(dir);
  std::filesystem::remove(dir / "block1.conv1.weight.sfot");
  CHECK_THROWS_AS(SegNet::load(dir), DataError);

  net.save(dir);
  std::ofstream(dir / "manifest.txt") << "garbage\n";
  CHECK_THROWS_AS(SegNet::load(dir), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("clone is deep") {
  Rng rng(16, 0);
  SegNet net(tiny_cfg(), rng);
  SegNet copy = net.clone();
  Tensor img = Tensor::from_data({1, 3, 8, 8}, randu(rng, 3 * 8 * 8));
  CHECK(same_bytes(net.forward(img).data(), copy.forward(img).data()));

  Tensor first = copy.parameters()[0].second;
  first.mutable_data()[0] += 1.0f;
  CHECK_FALSE(same_bytes(net.parameters()[0].second.data(),
                         copy.parameters()[0].second.data()));
}
