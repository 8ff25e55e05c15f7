#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sfocda/pipeline.hpp"
#include "sfocda/pseudo_label.hpp"
#include "sfocda/sfot.hpp"

using namespace sfocda;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

bool dirs_equal(const fs::path& a, const fs::path& b) {
  std::vector<std::string> na, nb;
  for (const auto& e : fs::directory_iterator(a))
    na.push_back(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b))
    nb.push_back(e.path().filename().string());
  std::sort(na.begin(), na.end());
  std::sort(nb.begin(), nb.end());
  if (na != nb) return false;
  for (const auto& n : na)
    if (slurp(a / n) != slurp(b / n)) return false;
  return true;
}

/// Shared toy benchmark plus one trained stage-I run.
struct World {
  fs::path data_dir;
  DatasetManifest manifest;
  ExperimentConfig cfg;
  RunResult stage1;
  fs::path stage1_dir;
};

const World& world() {
  static World w = [] {
    World v;
    v.data_dir = fresh_dir("sfocda_pipe_data");
    SceneSpec spec;
    spec.size = 32;
    GenerationCounts counts;
    counts.train_per_domain = 12;
    counts.test_per_domain = 6;
    v.manifest =
        generate_domains(spec, default_domains(), counts, 99, v.data_dir);

    ExperimentConfig cfg;
    cfg.seed = 7;
    cfg.data_dir = v.data_dir;
    cfg.model.widths = {8, 12};
    cfg.stage1.iters = 30;
    cfg.stage1.batch = 2;
    cfg.stage2.iters = 20;
    cfg.stage2.batch = 3;
    v.cfg = cfg;

    v.stage1_dir = fresh_dir("sfocda_pipe_s1");
    v.stage1 = train_source(cfg, v.stage1_dir);
    return v;
  }();
  return w;
}

}  // namespace

TEST_CASE("config text round-trips through the parser") {
  ExperimentConfig d = parse_config_text("");
  CHECK(d.stage1.iters == 3000);
  CHECK(d.stage1.base_lr == 2.5e-4);
  CHECK(d.stage2.base_lr == 1e-4);
  CHECK(d.stage2.tau == 0.9);
  CHECK(d.stage2.q == 50.0);
  CHECK(d.inject.beta == 0.3);
  CHECK(d.inject.patches == 4);
  CHECK(d.inject.sites == std::vector<int>{1, 2});
  CHECK(d.inject.variant == StyleVariant::inter);
  CHECK(d.photo_enabled);

  const std::string text = serialize_config(d);
  ExperimentConfig back = parse_config_text(text);
  CHECK(serialize_config(back) == text);

  ExperimentConfig p = parse_config_text("profile = paper");
  CHECK(p.stage1.iters == 150000);
  CHECK(p.stage1.batch == 1);

  ExperimentConfig o = parse_config_text(
      "# comment\n"
      "seed = 11\n"
      "stage2.tau = 0.75   # trailing comment\n"
      "inject.variant = intra\n"
      "model.widths = 8, 12\n"
      "stage1.iters = 10\n"
      "eval.splits = rainy_test,snowy_test\n"
      "photo.enabled = false\n"
      "stage2.sampler = clustering\n");
  CHECK(o.seed == 11);
  CHECK(o.stage2.tau == 0.75);
  CHECK(o.inject.variant == StyleVariant::intra);
  CHECK(o.model.widths == std::vector<int64_t>{8, 12});
  CHECK(o.stage1.iters == 10);
  CHECK(o.eval_splits == std::vector<std::string>{"rainy_test", "snowy_test"});
  CHECK_FALSE(o.photo_enabled);
  CHECK(o.stage2.sampler == SamplerMode::clustering);
}

TEST_CASE("config parser rejects malformed input") {
  CHECK_THROWS_AS(parse_config_text("bogus.key = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("seed = 1\nseed = 2"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("stage1.iters = uh"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("just a line"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("photo.enabled = yes"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("profile = fast"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("stage2.tau = 0"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("stage2.q = 101"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("inject.beta = 1.5"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("stage1.batch = 0"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/sfocda.cfg"), DataError);
}

TEST_CASE("config hash tracks settings, not data location") {
  ExperimentConfig a;
  a.data_dir = "/tmp/one";
  ExperimentConfig b;
  b.data_dir = "/tmp/two";
  CHECK(config_hash(a) == config_hash(b));
  CHECK(serialize_config(a) != serialize_config(b));

  b.stage2.tau = 0.8;
  CHECK(config_hash(a) != config_hash(b));
  ExperimentConfig c;
  c.seed = 1;
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("iou accumulator matches hand counts") {
  // gt [0,0,1,1] vs pred [0,1,1,1] on a 2x2 canvas
  LabelMap gt = LabelMap::full(1, 2, 2, 0);
  gt.labels = {0, 0, 1, 1};
  LabelMap pred = LabelMap::full(1, 2, 2, 0);
  pred.labels = {0, 1, 1, 1};
  IouAccumulator acc(2);
  acc.add(gt, pred);
  const auto pc = acc.per_class();
  REQUIRE(pc.size() == 2);
  CHECK(pc[0].second == 0.5);
  CHECK(pc[1].second == 2.0 / 3.0);
  CHECK(acc.miou() == (0.5 + 2.0 / 3.0) / 2.0);
  CHECK(acc.miou() == doctest::Approx(7.0 / 12.0).epsilon(1e-15));

  // perfect prediction
  IouAccumulator perfect(2);
  perfect.add(gt, gt);
  CHECK(perfect.miou() == 1.0);
  for (const auto& [c, iou] : perfect.per_class()) CHECK(iou == 1.0);

  // single-class gt, disjoint prediction: the hallucinated class never
  // occurs in gt so only class 0 (at IoU 0) enters the mean
  LabelMap zeros = LabelMap::full(1, 2, 2, 0);
  LabelMap ones = LabelMap::full(1, 2, 2, 1);
  IouAccumulator disjoint(2);
  disjoint.add(zeros, ones);
  REQUIRE(disjoint.per_class().size() == 1);
  CHECK(disjoint.per_class()[0].first == 0);
  CHECK(disjoint.miou() == 0.0);

  // ignored pixels drop out entirely
  LabelMap ig = LabelMap::full(1, 2, 2, kIgnoreLabel);
  IouAccumulator empty(2);
  empty.add(ig, ones);
  CHECK(empty.per_class().empty());
  CHECK(std::isnan(empty.miou()));

  LabelMap half = LabelMap::full(1, 2, 2, kIgnoreLabel);
  half.labels = {0, kIgnoreLabel, kIgnoreLabel, 1};
  IouAccumulator masked(2);
  masked.add(half, pred);
  CHECK(masked.miou() == 1.0);  // the two counted pixels are both right

  LabelMap wide = LabelMap::full(1, 2, 3, 0);
  CHECK_THROWS_AS(masked.add(wide, pred), ShapeError);
  LabelMap bad = LabelMap::full(1, 2, 2, 7);
  IouAccumulator two(2);
  CHECK_THROWS_AS(two.add(bad, pred), DataError);
}

TEST_CASE("argmax breaks ties toward the lower class") {
  Tensor logits = Tensor::zeros({1, 3, 1, 2});
  auto& v = logits.mutable_data();
  // site 0: classes tie at 1.0; site 1: class 2 wins
  v[0] = 1.0f; v[2] = 1.0f; v[4] = 1.0f;  // layout [c][w]
  v[1] = 0.0f; v[3] = 0.5f; v[5] = 2.0f;
  LabelMap lab = argmax_labels(logits);
  CHECK(lab.labels[0] == 0);
  CHECK(lab.labels[1] == 2);
}

TEST_CASE("stage one trains, evaluates, and reproduces byte for byte") {
  const World& w = world();
  const MetricsReport& rep = w.stage1.report;

  REQUIRE(rep.splits.size() == 5);
  CHECK(rep.find("source_test") != nullptr);
  CHECK(rep.find("rainy_test") != nullptr);
  CHECK(rep.find("overcast_test") != nullptr);

  // report arithmetic recomputes exactly
  const double c_mean = (rep.find("rainy_test")->miou +
                         rep.find("snowy_test")->miou +
                         rep.find("cloudy_test")->miou) / 3.0;
  CHECK(std::fabs(rep.compound_miou - c_mean) < 1e-12);
  const double co_mean =
      (c_mean * 3.0 + rep.find("overcast_test")->miou) / 4.0;
  CHECK(std::fabs(rep.compound_open_miou - co_mean) < 1e-12);
  CHECK(rep.open_miou == rep.find("overcast_test")->miou);
  CHECK(rep.config_hash == config_hash(w.cfg));
  CHECK(rep.pl_coverage < 0.0);

  for (const auto& s : rep.splits) {
    CHECK(s.miou >= 0.0);
    CHECK(s.miou <= 1.0);
    CHECK_FALSE(s.per_class.empty());
  }

  CHECK(fs::exists(w.stage1_dir / "checkpoint" / "manifest.txt"));
  CHECK(fs::exists(w.stage1_dir / "metrics.csv"));
  CHECK(fs::exists(w.stage1_dir / "metrics.json"));
  CHECK(fs::exists(w.stage1_dir / "config.txt"));
  CHECK(fs::exists(w.stage1_dir / "runtime.txt"));
  CHECK(slurp(w.stage1_dir / "metrics.csv").starts_with("split,class,iou\n"));

  auto j = nlohmann::json::parse(slurp(w.stage1_dir / "metrics.json"));
  CHECK(j["config_hash"] == rep.config_hash);
  CHECK(j["splits"].size() == 5);

  // a second run with the same seed is byte-identical
  auto again_dir = fresh_dir("sfocda_pipe_s1b");
  RunResult again = train_source(w.cfg, again_dir);
  CHECK(slurp(again_dir / "metrics.csv") == slurp(w.stage1_dir / "metrics.csv"));
  CHECK(slurp(again_dir / "metrics.json") ==
        slurp(w.stage1_dir / "metrics.json"));
  CHECK(dirs_equal(again_dir / "checkpoint", w.stage1_dir / "checkpoint"));
  fs::remove_all(again_dir);
}

TEST_CASE("training validates data and splits") {
  const World& w = world();

  ExperimentConfig bad = w.cfg;
  bad.data_dir = fs::temp_directory_path() / "sfocda_nonexistent";
  CHECK_THROWS_AS(train_source(bad, fresh_dir("sfocda_pipe_x1")), DataError);

  ExperimentConfig wrong = w.cfg;
  wrong.model.num_classes = 5;
  CHECK_THROWS_AS(train_source(wrong, fresh_dir("sfocda_pipe_x2")),
                  ConfigError);

  ExperimentConfig unknown = w.cfg;
  unknown.stage1.iters = 1;
  unknown.eval_splits = {"foggy_test"};
  CHECK_THROWS_AS(train_source(unknown, fresh_dir("sfocda_pipe_x3")),
                  ConfigError);

  ExperimentConfig unlabeled = w.cfg;
  unlabeled.stage1.iters = 1;
  unlabeled.eval_splits = {"rainy_train"};
  CHECK_THROWS_AS(train_source(unlabeled, fresh_dir("sfocda_pipe_x4")),
                  ContractError);

  ExperimentConfig narrow = w.cfg;
  narrow.stage1.iters = 2;
  narrow.eval_splits = {"source_test"};
  auto dir = fresh_dir("sfocda_pipe_x5");
  RunResult r = train_source(narrow, dir);
  CHECK(r.report.splits.size() == 1);
  CHECK(std::isnan(r.report.compound_miou));
  CHECK(std::isnan(r.report.open_miou));
  fs::remove_all(dir);
}

TEST_CASE("adaptation is source-free end to end") {
  const World& w = world();
  auto out = fresh_dir("sfocda_pipe_s2");
  RunResult r = adapt_target(w.cfg, w.stage1.checkpoint, out);

  REQUIRE(r.report.splits.size() == 4);  // compound tests + open test
  CHECK(r.report.find("source_test") == nullptr);
  CHECK(r.report.pl_coverage > 0.0);
  CHECK(r.report.pl_coverage <= 1.0);
  CHECK(fs::exists(out / "thresholds.json"));
  CHECK(fs::exists(out / "checkpoint" / "manifest.txt"));

  const std::string audit = slurp(out / "audit.log");
  CHECK_FALSE(audit.empty());
  std::stringstream ss(audit);
  std::string line;
  int entries = 0;
  while (std::getline(ss, line)) {
    ++entries;
    CHECK(line.find("/source/") == std::string::npos);
  }
  CHECK(entries > 0);

  // metrics.json carries the coverage; rerunning into the same directory
  // hits the cache and reproduces every byte
  auto j = nlohmann::json::parse(slurp(out / "metrics.json"));
  CHECK(j["pl_coverage"] == r.report.pl_coverage);
  const std::string metrics = slurp(out / "metrics.json");
  RunResult r2 = adapt_target(w.cfg, w.stage1.checkpoint, out);
  CHECK(slurp(out / "metrics.json") == metrics);

  // explicit source split request is refused outright
  ExperimentConfig bad = w.cfg;
  bad.eval_splits = {"source_test"};
  CHECK_THROWS_AS(adapt_target(bad, w.stage1.checkpoint,
                               fresh_dir("sfocda_pipe_s2x")),
                  ConfigError);
  fs::remove_all(out);
}

TEST_CASE("zero-iteration adaptation reproduces the stage-one report") {
  const World& w = world();
  ExperimentConfig cfg = w.cfg;
  cfg.stage2.iters = 0;
  auto out = fresh_dir("sfocda_pipe_noop");
  RunResult r = adapt_target(cfg, w.stage1.checkpoint, out);
  for (const auto& s : r.report.splits) {
    const SplitMetrics* ref = w.stage1.report.find(s.name);
    REQUIRE(ref != nullptr);
    CHECK(s.miou == ref->miou);
    CHECK(s.per_class == ref->per_class);
  }
  CHECK(r.report.compound_miou == w.stage1.report.compound_miou);
  fs::remove_all(out);
}

TEST_CASE("empty pseudo-label masks leave the parameters alone") {
  const World& w = world();
  auto out = fresh_dir("sfocda_pipe_empty");

  // plant a cache entry whose labels are entirely ignored
  const std::string ck = checkpoint_hash(w.stage1.checkpoint);
  const fs::path cache = out / "plcache" / (ck + "_t0.9_q50");
  fs::create_directories(cache);
  const auto tgt = w.manifest.role_split("compound", "train");
  std::vector<std::string> rel;
  for (size_t i : tgt) rel.push_back(w.manifest.samples[i].image);
  save_label_map(LabelMap::full(static_cast<int64_t>(rel.size()), 32, 32,
                                kIgnoreLabel),
                 cache / "labels.sfot");
  ClassThresholds th;
  th.t.assign(6, 1.0);
  th.tau = 0.9;
  th.q = 50.0;
  save_thresholds_json(th, cache / "thresholds.json");
  nlohmann::ordered_json meta;
  meta["checkpoint"] = ck;
  meta["tau"] = 0.9;
  meta["q"] = 50.0;
  meta["coverage"] = 0.0;
  meta["images"] = rel;
  std::ofstream(cache / "meta.json") << meta.dump(2) << "\n";

  ExperimentConfig cfg = w.cfg;
  cfg.stage2.iters = 10;
  RunResult r = adapt_target(cfg, w.stage1.checkpoint, out);
  CHECK(r.report.pl_coverage == 0.0);
  CHECK(dirs_equal(out / "checkpoint", w.stage1.checkpoint));
  CHECK(r.report.compound_miou == w.stage1.report.compound_miou);
  fs::remove_all(out);
}

TEST_CASE("adaptation rejects mismatched checkpoints") {
  const World& w = world();
  SegNetConfig five;
  five.widths = {8, 12};
  five.num_classes = 5;
  Rng rng(3, 0);
  SegNet other(five, rng);
  auto ckpt = fresh_dir("sfocda_pipe_ck5");
  other.save(ckpt);
  CHECK_THROWS_AS(
      adapt_target(w.cfg, ckpt, fresh_dir("sfocda_pipe_ck5_out")),
      ConfigError);
  fs::remove_all(ckpt);
}

TEST_CASE("oracle and clustering samplers run the full loop") {
  const World& w = world();
  for (SamplerMode mode : {SamplerMode::oracle, SamplerMode::clustering}) {
    ExperimentConfig cfg = w.cfg;
    cfg.stage2.iters = 6;
    cfg.stage2.sampler = mode;
    auto out = fresh_dir("sfocda_pipe_mode_" + sampler_mode_name(mode));
    RunResult r = adapt_target(cfg, w.stage1.checkpoint, out);
    CHECK(r.report.splits.size() == 4);
    CHECK(r.report.pl_coverage > 0.0);
    fs::remove_all(out);
  }
}

TEST_CASE("standalone evaluation is pure and consistent") {
  const World& w = world();
  std::map<std::string, std::string> before;
  for (const auto& e : fs::directory_iterator(w.stage1.checkpoint))
    before[e.path().filename().string()] = slurp(e.path());

  MetricsReport rep =
      evaluate(w.stage1.checkpoint, w.data_dir, {"rainy_test", "overcast_test"});
  REQUIRE(rep.splits.size() == 2);
  CHECK(rep.find("rainy_test")->miou == w.stage1.report.find("rainy_test")->miou);
  CHECK(rep.find("overcast_test")->per_class ==
        w.stage1.report.find("overcast_test")->per_class);
  CHECK(rep.config_hash == checkpoint_hash(w.stage1.checkpoint));

  for (const auto& e : fs::directory_iterator(w.stage1.checkpoint))
    CHECK(before.at(e.path().filename().string()) == slurp(e.path()));

  MetricsReport all = evaluate(w.stage1.checkpoint, w.data_dir, {});
  CHECK(all.splits.size() == 5);

  CHECK_THROWS_AS(evaluate(w.stage1.checkpoint, w.data_dir, {"foggy_test"}),
                  ConfigError);
  CHECK_THROWS_AS(evaluate(w.stage1.checkpoint, w.data_dir, {"rainy_train"}),
                  ContractError);
}

TEST_CASE("stylize swaps image patches and reports donor stats") {
  const World& w = world();
  const auto src = w.manifest.split("source_test");
  REQUIRE(src.size() >= 2);
  std::vector<fs::path> inputs = {
      w.data_dir / w.manifest.samples[src[0]].image,
      w.data_dir / w.manifest.samples[src[1]].image};

  StylizeOptions opt;
  opt.grid_h = 2;
  opt.grid_w = 2;
  opt.variant = StyleVariant::inter;
  opt.seed = 3;
  auto out = fresh_dir("sfocda_pipe_sty");
  auto files = stylize(inputs, out, opt);
  REQUIRE(files.size() == 2);
  CHECK(fs::exists(files[0]));
  CHECK(fs::exists(out / "stats.json"));

  auto stats = nlohmann::json::parse(slurp(out / "stats.json"));
  const auto assign = stats["assignment"].get<std::vector<uint32_t>>();
  REQUIRE(assign.size() == 8);
  std::vector<uint32_t> sorted = assign;
  std::sort(sorted.begin(), sorted.end());
  for (uint32_t i = 0; i < 8; ++i) CHECK(sorted[i] == i);

  // post stats of slot s equal pre stats of its donor
  auto pre_of = [&](uint32_t slot, int c, const char* field) {
    return stats["images"][slot / 4]["pre"][field][slot % 4][c].get<double>();
  };
  auto post_of = [&](uint32_t slot, int c, const char* field) {
    return stats["images"][slot / 4]["post"][field][slot % 4][c].get<double>();
  };
  for (uint32_t s = 0; s < 8; ++s)
    for (int c = 0; c < 3; ++c) {
      CHECK(post_of(s, c, "mean") ==
            doctest::Approx(pre_of(assign[s], c, "mean")).epsilon(1e-4));
      CHECK(post_of(s, c, "std") ==
            doctest::Approx(pre_of(assign[s], c, "std")).epsilon(1e-4));
    }

  // same seed, fresh directory: byte-identical outputs
  auto out2 = fresh_dir("sfocda_pipe_sty2");
  auto files2 = stylize(inputs, out2, opt);
  CHECK(slurp(files[0]) == slurp(files2[0]));
  CHECK(slurp(files[1]) == slurp(files2[1]));

  // identity override returns the inputs untouched
  StylizeOptions id = opt;
  id.identity = true;
  auto out3 = fresh_dir("sfocda_pipe_sty3");
  auto files3 = stylize(inputs, out3, id);
  for (size_t i = 0; i < 2; ++i) {
    sfot::Array in = sfot::read(inputs[i].string());
    sfot::Array got = sfot::read(files3[i].string());
    CHECK(in.f32 == got.f32);
  }

  StylizeOptions lonely = opt;
  CHECK_THROWS_AS(stylize({inputs[0]}, fresh_dir("sfocda_pipe_sty4"), lonely),
                  ConfigError);
  StylizeOptions wrong = opt;
  wrong.variant = StyleVariant::mixstyle;
  CHECK_THROWS_AS(stylize(inputs, fresh_dir("sfocda_pipe_sty5"), wrong),
                  ConfigError);
  fs::remove_all(out);
  fs::remove_all(out2);
  fs::remove_all(out3);
}

TEST_CASE("style embeddings export with cluster ids") {
  const World& w = world();
  auto csv_path = fs::temp_directory_path() / "sfocda_pipe_embed.csv";
  style_embed(w.stage1.checkpoint, w.data_dir, csv_path, 0, 5);
  const std::string csv = slurp(csv_path);
  std::stringstream ss(csv);
  std::string line;
  REQUIRE(std::getline(ss, line));
  CHECK(line.starts_with("index,image,domain,cluster,e0"));
  int rows = 0;
  while (std::getline(ss, line)) {
    ++rows;
    CHECK(line.find("/train/") != std::string::npos);
  }
  CHECK(rows == 36);  // 3 compound domains x 12 training scenes
  fs::remove(csv_path);
}

TEST_CASE("sweep aggregates runs and validates axis values") {
  const World& w = world();
  ExperimentConfig base = w.cfg;
  base.stage1.iters = 8;
  base.eval_splits = {"rainy_test", "snowy_test", "cloudy_test",
                      "overcast_test"};

  auto out = fresh_dir("sfocda_pipe_sweep");
  auto rows = sweep(base, SweepAxis::beta, {0.0, 0.3}, 1, out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].value == 0.0);
  CHECK(rows[1].value == 0.3);
  CHECK(rows[0].seeds == 1);
  CHECK(rows[0].c_std == 0.0);
  const std::string csv = slurp(out / "sweep.csv");
  CHECK(csv.starts_with(
      "axis,value,seeds,open_mean,open_std,c_mean,c_std,co_mean,co_std\n"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  // a zero patch count reproduces the style-swap-free baseline exactly
  auto out2 = fresh_dir("sfocda_pipe_sweep0");
  auto zero = sweep(base, SweepAxis::patches, {0.0}, 1, out2);
  ExperimentConfig off = base;
  off.inject.variant = StyleVariant::off;
  auto out3 = fresh_dir("sfocda_pipe_sweep0b");
  RunResult ref = train_source(off, out3);
  CHECK(zero[0].c_mean == ref.report.compound_miou);
  CHECK(zero[0].open_mean == ref.report.open_miou);

  CHECK_THROWS_AS(sweep(base, SweepAxis::beta, {1.5}, 1,
                        fresh_dir("sfocda_pipe_sweepx")),
                  ConfigError);
  CHECK_THROWS_AS(sweep(base, SweepAxis::patches, {2.5}, 1,
                        fresh_dir("sfocda_pipe_sweepy")),
                  ConfigError);
  CHECK_THROWS_AS(sweep(base, SweepAxis::block, {9.0}, 1,
                        fresh_dir("sfocda_pipe_sweepz")),
                  ConfigError);
  CHECK_THROWS_AS(sweep(base, SweepAxis::beta, {}, 1,
                        fresh_dir("sfocda_pipe_sweepw")),
                  ConfigError);
  fs::remove_all(out);
  fs::remove_all(out2);
  fs::remove_all(out3);
}
