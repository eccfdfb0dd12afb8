#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "umfl/batching.hpp"
#include "umfl/config.hpp"
#include "umfl/errors.hpp"
#include "umfl/experiment.hpp"
#include "umfl/gradcheck.hpp"
#include "umfl/ppm.hpp"
#include "umfl/synth.hpp"

namespace fs = std::filesystem;
using namespace umfl;

namespace {

struct CommonFlags {
  std::string config;
  std::string seed;
  std::string out;
  std::string mode;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "key = value config file");
  cmd->add_option("--seed", flags.seed, "run seed (decimal or 0x hex)");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--mode", flags.mode, "umfl | baseline");
  cmd->add_option("--set", flags.overrides, "override a config key (key=value)");
}

RunConfig resolve(const CommonFlags& flags) {
  KeyValues kv;
  if (!flags.config.empty()) kv = read_key_values(flags.config);
  for (const auto& item : flags.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError(item + ": expected key=value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    kv[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
  }
  if (!flags.seed.empty()) kv["seed"] = flags.seed;
  if (!flags.out.empty()) kv["out"] = flags.out;
  if (!flags.mode.empty()) kv["train.mode"] = flags.mode;
  return apply_key_values(RunConfig{}, kv);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void print_eval(const EvalReport& r) {
  std::cout << "mAP " << fmt(r.map) << "  rank-1 " << fmt(r.rank(1)) << "  rank-5 " << fmt(r.rank(5))
            << "  queries " << r.num_queries << '\n';
}

void erase_demo(const RunConfig& cfg, const std::string& mode, int count, bool dump_batch) {
  RunStreams streams = RunStreams::from_seed(cfg.seed);
  const Dataset data = cfg.manifest.empty() ? gen_synthetic_dataset(cfg.synth, streams.data) : read_dataset(cfg.manifest);
  const Eigen::VectorXd fill = mean_pixel(data);
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  auto csv = open_out(dir / "regions.csv");
  csv << "sample_id,mode,top,left,height,width,s,stripe_index\n";

  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(count), data.samples.size());
  std::vector<Image> before;
  for (std::size_t i = 0; i < n; ++i) before.push_back(data.samples[i].image);

  auto dump = [&](std::size_t i, const Image& after) {
    const std::string id = std::to_string(data.samples[i].sample_id);
    save_ppm(before[i], dir / ("before_" + id + ".ppm"));
    save_ppm(after, dir / ("after_" + id + ".ppm"));
  };

  if (mode == "re") {
    for (std::size_t i = 0; i < n; ++i) {
      auto [after, region] = apply_re(before[i], streams.train, cfg.re, fill);
      csv << data.samples[i].sample_id << ",re,";
      if (region) {
        csv << region->top << ',' << region->left << ',' << region->height << ',' << region->width << ",,\n";
      } else {
        csv << ",,,,,\n";
      }
      dump(i, after);
    }
  } else if (mode == "bce") {
    const BceResult r = apply_bce_subbatch(before, streams.train, cfg.bce, fill);
    for (std::size_t i = 0; i < n; ++i) {
      csv << data.samples[i].sample_id << ",bce," << r.band.begin << ",0," << r.band.rows() << ','
          << before[i].width() << ',' << r.s << ',' << r.stripe_index << '\n';
      dump(i, r.images[i]);
    }
  } else {
    throw ConfigError("--mode: expected re or bce, got '" + mode + "'");
  }

  if (dump_batch) {
    const RawBatch raw = sample_pk(data, streams.train, cfg.pk);
    const HierBatch batch = build_hier_batch(raw, streams.train, cfg.re, cfg.bce, fill);
    const fs::path bdir = dir / "batch";
    fs::create_directories(bdir);
    auto bcsv = open_out(bdir / "batch.csv");
    bcsv << "position,view,sample_id,identity,s,stripe_index\n";
    const auto images = batch.full_images();
    const std::size_t b = batch.sub_batch_size();
    for (std::size_t i = 0; i < images.size(); ++i) {
      const bool second = i >= b;
      bcsv << i << ',' << (second ? "bce" : "re") << ',' << batch.source_ids[i % b] << ',' << batch.labels[i % b]
           << ',' << (second ? std::to_string(batch.bce->s) : "") << ','
           << (second ? std::to_string(batch.bce->stripe_index) : "") << '\n';
      save_ppm(images[i], bdir / ("item_" + std::to_string(i) + ".ppm"));
    }
  }
}

void attribution(const RunConfig& cfg, const fs::path& checkpoint, bool overlays) {
  RunStreams streams = RunStreams::from_seed(cfg.seed);
  const DataSplit split = prepare_data(cfg, streams);
  EmbeddingModel<double> model(model_config(cfg, split));
  load_checkpoint(model, checkpoint);
  SplitMix64 rng = RunStreams::from_seed(cfg.seed).eval.fork();
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  auto csv = open_out(dir / "attribution.csv");
  csv << "sample_id";
  for (int k = 0; k < cfg.attribution_stripes; ++k) csv << ",sigma_" << k;
  csv << ",entropy\n";
  std::vector<double> entropies;
  for (std::size_t i = 0; i < split.test_images.size(); ++i) {
    const AttributionMap map =
        occlusion_attribution(model, split.test_images[i], cfg.attribution_stripes, cfg.bce.fill, split.fill_value, rng);
    csv << split.test_ids[i];
    for (double v : map.sensitivity) csv << ',' << fmt(v);
    csv << ',' << fmt(map.entropy) << '\n';
    entropies.push_back(map.entropy);
    if (overlays) {
      fs::create_directories(dir / "overlays");
      save_ppm(attribution_overlay(split.test_images[i], map),
               dir / "overlays" / ("attr_" + std::to_string(split.test_ids[i]) + ".ppm"));
    }
  }
  std::cout << "median attribution entropy " << fmt(median(entropies)) << " over " << entropies.size()
            << " images\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UMFL desk-scale training and evaluation"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset to OUT/dataset");
  auto* train = app.add_subcommand("train", "train a model and write metrics and a checkpoint");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the held-out split");
  auto* ablate = app.add_subcommand("ablate", "run the ablation ladder over a seed list");
  auto* demo = app.add_subcommand("erase-demo", "dump before/after erased images");
  auto* attr = app.add_subcommand("attribution", "occlusion attribution of a checkpoint");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  for (auto* cmd : {gen, train, eval, ablate, demo, attr, grad}) add_common(cmd, flags);

  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  attr->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  bool overlays = false;
  attr->add_flag("--overlays", overlays, "also write shaded overlay PPMs");
  std::string erase_mode = "re";
  int count = 8;
  bool dump_batch = false;
  // erase-demo reuses --mode for the erasing kind, so it gets its own option set.
  demo->remove_option(demo->get_option("--mode"));
  demo->add_option("--mode", erase_mode, "re | bce");
  demo->add_option("--count", count, "number of images");
  demo->add_flag("--batch", dump_batch, "also dump one hierarchical batch");
  int points = 50;
  grad->add_option("--points", points, "random points per case");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = resolve(flags);
    if (gen->parsed()) {
      cmd_gen_data(cfg);
      std::cout << "wrote " << (fs::path(cfg.out) / "dataset" / "manifest.csv").string() << '\n';
    } else if (train->parsed()) {
      const ExperimentRecord rec = cmd_train(cfg);
      if (!rec.steps.empty()) {
        std::cout << "step 1 loss " << fmt(rec.steps.front().loss.total) << ", final loss "
                  << fmt(rec.steps.back().loss.total) << '\n';
      }
      if (rec.final_eval) print_eval(*rec.final_eval);
      std::cout << "checkpoint " << rec.checkpoint.string() << '\n';
    } else if (eval->parsed()) {
      print_eval(cmd_eval(cfg, checkpoint));
    } else if (ablate->parsed()) {
      for (const auto& row : cmd_ablate(cfg)) {
        std::cout << row.variant << ' ' << row.name << "  median mAP " << fmt(median(row.maps)) << "  median rank-1 "
                  << fmt(median(row.rank1)) << '\n';
      }
    } else if (demo->parsed()) {
      erase_demo(cfg, erase_mode, count, dump_batch);
    } else if (attr->parsed()) {
      attribution(cfg, checkpoint, overlays);
    } else if (grad->parsed()) {
      bool ok = true;
      for (const auto& r : run_gradient_suite(cfg.seed, points)) {
        std::printf("%-24s points=%-3d max_rel_error=%.3e %s\n", r.name.c_str(), r.points, r.max_error,
                    r.passed ? "ok" : "FAIL");
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
