#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sfocda/data.hpp"
#include "sfocda/pipeline.hpp"

namespace fs = std::filesystem;
using namespace sfocda;

namespace {

std::string pct(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
  return buf;
}

void print_report(const MetricsReport& r) {
  for (const auto& s : r.splits)
    std::printf("%-16s miou %s\n", s.name.c_str(), pct(s.miou).c_str());
  std::printf("compound %s  compound+open %s  open %s\n",
              pct(r.compound_miou).c_str(), pct(r.compound_open_miou).c_str(),
              pct(r.open_miou).c_str());
  if (r.pl_coverage >= 0.0)
    std::printf("pseudo-label coverage %s\n", pct(r.pl_coverage).c_str());
}

std::pair<int, int> parse_grid(const std::string& s) {
  int h = 0, w = 0;
  char extra = 0;
  if (std::sscanf(s.c_str(), "%dx%d%c", &h, &w, &extra) != 2 || h < 1 || w < 1)
    throw ConfigError("grid must look like 2x4, got: " + s);
  return {h, w};
}

struct Cli {
  std::string config, checkpoint, data, out;
  std::vector<std::string> splits;
  std::vector<std::string> images;
  std::vector<double> values;
  std::string axis = "beta";
  std::string variant = "inter";
  std::string grid = "2x4";
  uint64_t seed = 0;
  int seeds = 3;
  int k = 0;
  int train_per_domain = 200;
  int test_per_domain = 50;
  int size = 64;
  bool identity = false;
  bool no_png = false;
  bool quiet = false;
};

ExperimentConfig load_run_config(const Cli& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (!c.data.empty()) cfg.data_dir = c.data;
  return cfg;
}

int run(int argc, char** argv) {
  Cli c;
  CLI::App app{"Source-free open compound domain adaptation on a synthetic "
               "segmentation benchmark"};
  app.require_subcommand(1);
  app.add_flag("-q,--quiet", c.quiet, "suppress progress logging");

  auto* gen = app.add_subcommand("gen-data", "render the multi-domain dataset");
  gen->add_option("--out", c.out, "output dataset directory")->required();
  gen->add_option("--seed", c.seed, "generation seed");
  gen->add_option("--train", c.train_per_domain, "training scenes per domain");
  gen->add_option("--test", c.test_per_domain, "test scenes per domain");
  gen->add_option("--size", c.size, "square image side in pixels");

  auto* train = app.add_subcommand("train-source",
                                   "stage I: supervised source training");
  train->add_option("--config", c.config, "experiment config file")->required();
  train->add_option("--out", c.out, "run output directory")->required();
  train->add_option("--data", c.data, "override data.dir from the config");

  auto* adapt = app.add_subcommand(
      "adapt-target", "stage II: source-free self-training on compound data");
  adapt->add_option("--config", c.config, "experiment config file")->required();
  adapt->add_option("--checkpoint", c.checkpoint, "stage-I checkpoint directory")
      ->required();
  adapt->add_option("--out", c.out, "run output directory")->required();
  adapt->add_option("--data", c.data, "override data.dir from the config");

  auto* eval = app.add_subcommand("evaluate",
                                  "score a checkpoint on labeled test splits");
  eval->add_option("--checkpoint", c.checkpoint, "checkpoint directory")
      ->required();
  eval->add_option("--data", c.data, "dataset directory")->required();
  eval->add_option("--splits", c.splits, "comma-separated split names")
      ->delimiter(',');
  eval->add_option("--out", c.out, "also write metrics files here");

  auto* sty = app.add_subcommand("stylize",
                                 "patch-style-swap images and dump statistics");
  sty->add_option("images", c.images, "input .sfot image tensors")
      ->required()
      ->expected(-1);
  sty->add_option("--out", c.out, "output directory")->required();
  sty->add_option("--grid", c.grid, "patch grid as HxW (default 2x4)");
  sty->add_option("--variant", c.variant, "intra or inter (default inter)");
  sty->add_option("--seed", c.seed, "assignment seed");
  sty->add_flag("--identity", c.identity, "keep every patch's own style");
  sty->add_flag("--no-png", c.no_png, "skip PNG previews");

  auto* emb = app.add_subcommand(
      "style-embed", "export style embeddings of the compound training split");
  emb->add_option("--checkpoint", c.checkpoint, "checkpoint directory")
      ->required();
  emb->add_option("--data", c.data, "dataset directory")->required();
  emb->add_option("--out", c.out, "output CSV path")->required();
  emb->add_option("--k", c.k, "cluster count (0: one per compound domain)");
  emb->add_option("--seed", c.seed, "clustering seed");

  auto* swp = app.add_subcommand("sweep",
                                 "train stage I across one hyperparameter axis");
  swp->add_option("--config", c.config, "base experiment config file")
      ->required();
  swp->add_option("--axis", c.axis, "patches, beta, or block");
  swp->add_option("--values", c.values, "comma-separated axis values")
      ->required()
      ->delimiter(',');
  swp->add_option("--seeds", c.seeds, "seeds per value (default 3)");
  swp->add_option("--out", c.out, "sweep output directory")->required();
  swp->add_option("--data", c.data, "override data.dir from the config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  RunOptions opts;
  if (!c.quiet) opts.log = &std::cerr;

  if (gen->parsed()) {
    SceneSpec spec;
    spec.size = c.size;
    GenerationCounts counts;
    counts.train_per_domain = c.train_per_domain;
    counts.test_per_domain = c.test_per_domain;
    DatasetManifest m =
        generate_domains(spec, default_domains(), counts, c.seed, c.out);
    std::printf("wrote %zu samples across %zu domains to %s\n",
                m.samples.size(), m.domains().size(), c.out.c_str());
  } else if (train->parsed()) {
    RunResult r = train_source(load_run_config(c), c.out, opts);
    print_report(r.report);
    std::printf("runtime %.1fs  checkpoint %s\n", r.report.runtime_seconds,
                r.checkpoint.string().c_str());
  } else if (adapt->parsed()) {
    RunResult r = adapt_target(load_run_config(c), c.checkpoint, c.out, opts);
    print_report(r.report);
    std::printf("runtime %.1fs  checkpoint %s\n", r.report.runtime_seconds,
                r.checkpoint.string().c_str());
  } else if (eval->parsed()) {
    MetricsReport r = evaluate(c.checkpoint, c.data, c.splits);
    print_report(r);
    if (!c.out.empty()) {
      write_metrics(r, c.out);
      std::printf("metrics written to %s\n", c.out.c_str());
    }
  } else if (sty->parsed()) {
    StylizeOptions opt;
    std::tie(opt.grid_h, opt.grid_w) = parse_grid(c.grid);
    opt.variant = parse_style_variant(c.variant);
    opt.seed = c.seed;
    opt.identity = c.identity;
    opt.write_png = !c.no_png;
    std::vector<fs::path> inputs(c.images.begin(), c.images.end());
    auto files = stylize(inputs, c.out, opt);
    std::printf("stylized %zu images into %s\n", files.size(), c.out.c_str());
  } else if (emb->parsed()) {
    style_embed(c.checkpoint, c.data, c.out, c.k, c.seed);
    std::printf("embeddings written to %s\n", c.out.c_str());
  } else if (swp->parsed()) {
    ExperimentConfig base = load_run_config(c);
    auto rows =
        sweep(base, parse_sweep_axis(c.axis), c.values, c.seeds, c.out, opts);
    std::printf("%s,value,open,c,c+o\n", c.axis.c_str());
    for (const auto& r : rows)
      std::printf("%s,%g,%s,%s,%s\n", c.axis.c_str(), r.value,
                  pct(r.open_mean).c_str(), pct(r.c_mean).c_str(),
                  pct(r.co_mean).c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
