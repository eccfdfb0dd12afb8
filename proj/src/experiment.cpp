#include "umfl/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "umfl/batching.hpp"
#include "umfl/errors.hpp"
#include "umfl/losses.hpp"
#include "umfl/synth.hpp"

namespace umfl {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_csv(path);
  out << text;
}

std::string eval_row(const EvalReport& r) {
  return fmt(r.map) + "," + fmt(r.rank(1)) + "," + fmt(r.rank(5)) + "," + fmt(r.rank(10));
}

}  // namespace

TrainVariant ablation_variant(int id) {
  TrainVariant v;
  v.id = id;
  switch (id) {
    case 1:
      v.name = "base+hard_triplet";
      v.use_bce = false;
      v.use_re = false;
      v.weights = {0.0, 1.0, 0.0, 1.0};
      break;
    case 2:
      v.name = "base+re+hard_triplet";
      v.use_bce = false;
      v.weights = {0.0, 1.0, 0.0, 1.0};
      break;
    case 3:
      v.name = "re_bce+l_sub";
      v.weights = {1.0, 0.0, 0.0, 1.0};
      break;
    case 4:
      v.name = "re_bce+l_sub+l_full";
      v.weights = {1.0, 1.0, 0.0, 1.0};
      break;
    case 5:
      v.name = "re_bce+l_sub+l_full+l_f";
      v.weights = {1.0, 1.0, 1.0, 1.0};
      break;
    default:
      throw ConfigError("ablate.variants: variant " + std::to_string(id) + " outside 1..5");
  }
  return v;
}

TrainVariant variant_for_mode(const RunConfig& cfg) {
  if (cfg.mode == TrainMode::umfl) {
    TrainVariant v = ablation_variant(5);
    v.name = "umfl";
    v.weights = cfg.loss.weights;
    return v;
  }
  TrainVariant v = ablation_variant(2);
  v.name = "baseline";
  v.weights.sht_full = cfg.loss.weights.sht_full;
  v.weights.classification = cfg.loss.weights.classification;
  return v;
}

RunStreams RunStreams::from_seed(std::uint64_t seed) {
  SplitMix64 root(seed);
  SplitMix64 data = root.fork();
  SplitMix64 init = root.fork();
  SplitMix64 train = root.fork();
  SplitMix64 eval = root.fork();
  return {data, init, train, eval};
}

DataSplit prepare_data(const RunConfig& cfg, RunStreams& streams) {
  const Dataset all = cfg.manifest.empty() ? gen_synthetic_dataset(cfg.synth, streams.data)
                                           : read_dataset(cfg.manifest);
  all.validate();
  const int n_train = static_cast<int>(std::lround(cfg.train_fraction * all.num_identities));
  if (n_train < cfg.pk.identities_per_batch) {
    throw PreconditionError("prepare_data: " + std::to_string(n_train) + " training identities, batch needs " +
                            std::to_string(cfg.pk.identities_per_batch));
  }
  if (n_train >= all.num_identities) throw PreconditionError("prepare_data: no test identities left");

  DataSplit split;
  split.train.num_identities = n_train;
  std::map<int, int> seen;
  for (const auto& s : all.samples) {
    if (s.identity < n_train) {
      split.train.samples.push_back(s);
      continue;
    }
    split.test_images.push_back(s.image);
    split.test_ids.push_back(s.sample_id);
    if (seen[s.identity]++ < cfg.queries_per_identity) {
      split.query.push_back(s.image);
      split.query_labels.push_back(s.identity);
      split.query_ids.push_back(s.sample_id);
    } else {
      split.gallery.push_back(s.image);
      split.gallery_labels.push_back(s.identity);
      split.gallery_ids.push_back(s.sample_id);
    }
  }
  for (const auto& [identity, count] : seen) {
    if (count <= cfg.queries_per_identity) {
      throw PreconditionError("prepare_data: test identity " + std::to_string(identity) +
                              " has no gallery samples after taking queries");
    }
  }
  split.fill_value = mean_pixel(split.train);
  if (cfg.occlude_queries) {
    for (Image& q : split.query) {
      const int stripes = std::min(cfg.occlusion_stripes, q.height());
      const int index = static_cast<int>(uniform_int(streams.eval, 0, stripes - 1));
      erase_rows(q, stripe_band(q.height(), stripes, index), cfg.bce.fill, split.fill_value, streams.eval);
    }
  }
  return split;
}

ModelConfig model_config(const RunConfig& cfg, const DataSplit& split) {
  const Image& sample = split.train.samples.front().image;
  ModelConfig m;
  m.arch = cfg.arch;
  m.embedding_dim = cfg.embedding_dim;
  m.num_classes = split.train.num_identities;
  m.height = sample.height();
  m.width = sample.width();
  m.channels = sample.channels();
  return m;
}

EvalReport evaluate_model(const EmbeddingModel<double>& model, const DataSplit& split) {
  return evaluate(model.embed_images(split.query), split.query_labels, model.embed_images(split.gallery),
                  split.gallery_labels);
}

double test_attribution_entropy(const EmbeddingModel<double>& model, const DataSplit& split, const RunConfig& cfg) {
  SplitMix64 rng = RunStreams::from_seed(cfg.seed).eval.fork();
  return attribution_entropy_summary([&model](std::span<const Image> imgs) { return model.embed_images(imgs); },
                                     split.test_images, cfg.attribution_stripes, cfg.bce.fill, split.fill_value, rng);
}

void write_metrics_csv(const std::vector<StepRecord>& steps, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "step,l_sht_sub,l_sht_full,l_f,l_c,total\n";
  for (const auto& s : steps) {
    out << s.step << ',' << fmt(s.loss.l_sht_sub) << ',' << fmt(s.loss.l_sht_full) << ',' << fmt(s.loss.l_f) << ','
        << fmt(s.loss.l_c) << ',' << fmt(s.loss.total) << '\n';
  }
}

void write_eval_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "map,cmc_1,cmc_5,cmc_10,num_queries\n" << eval_row(report) << ',' << report.num_queries << '\n';
}

TrainOutcome run_training(const RunConfig& cfg, const TrainVariant& variant,
                          const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  RunStreams streams = RunStreams::from_seed(cfg.seed);
  DataSplit split = prepare_data(cfg, streams);
  EmbeddingModel<double> model(model_config(cfg, split));
  model.init_he_uniform(streams.init);

  AdamState<double> adam;
  adam.learning_rate = cfg.learning_rate;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.epsilon = cfg.adam_epsilon;

  LossConfig loss_cfg = cfg.loss;
  loss_cfg.weights = variant.weights;
  ReConfig re_cfg = cfg.re;
  if (!variant.use_re) re_cfg.probability = 0.0;

  ExperimentRecord record;
  record.config_snapshot = to_config_text(cfg);
  record.variant = variant;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(*out_dir / "config.txt", record.config_snapshot + "variant = " + variant.name + "\n");
  }

  int step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int k = 0; k < cfg.steps_per_epoch; ++k) {
      ++step;
      const RawBatch raw = sample_pk(split.train, streams.train, cfg.pk);
      const HierBatch batch = variant.use_bce
                                  ? build_hier_batch(raw, streams.train, re_cfg, cfg.bce, split.fill_value)
                                  : build_re_pair_batch(raw, streams.train, re_cfg, split.fill_value);
      Tape<double> tape;
      const auto params = model.bind(tape, true);
      const auto full = batch.full_images();
      const auto z = model.embed(params, tape.constant(images_to_tensor<double>(full)));
      const auto logits = model.classify(params, z);
      TotalLoss<double> loss;
      try {
        loss = total_loss(z, logits, batch.labels, loss_cfg);
        if (!std::isfinite(loss.report.total)) throw NumericError("non-finite total loss");
        tape.backward(loss.total);
      } catch (const NumericError& e) {
        throw NumericError("training step " + std::to_string(step) + ": " + e.what());
      }
      std::vector<Tensor<double>::Array> grads;
      for (const auto& v : params.vars) grads.push_back(tape.grad(v));
      adam_step(model.parameters(), grads, adam);
      record.steps.push_back({step, loss.report});
    }
    if (cfg.eval_every_epoch) record.epochs.push_back({epoch, evaluate_model(model, split)});
  }

  record.final_eval = record.epochs.empty() || record.epochs.back().epoch != cfg.epochs
                          ? evaluate_model(model, split)
                          : record.epochs.back().eval;
  if (out_dir) {
    write_eval_report_csv(*record.final_eval, *out_dir / "eval_report.csv");
    write_metrics_csv(record.steps, *out_dir / "metrics.csv");
    auto out = open_csv(*out_dir / "epoch_eval.csv");
    out << "epoch,map,cmc_1,cmc_5,cmc_10\n";
    for (const auto& e : record.epochs) out << e.epoch << ',' << eval_row(e.eval) << '\n';
    record.checkpoint = *out_dir / "checkpoint.umfl";
    save_checkpoint(model, record.checkpoint);
  }
  return {std::move(record), std::move(model), std::move(split)};
}

ExperimentRecord cmd_train(const RunConfig& cfg) {
  auto outcome = run_training(cfg, variant_for_mode(cfg), std::filesystem::path(cfg.out));
  return std::move(outcome.record);
}

EvalReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint) {
  cfg.validate();
  RunStreams streams = RunStreams::from_seed(cfg.seed);
  const DataSplit split = prepare_data(cfg, streams);
  EmbeddingModel<double> model(model_config(cfg, split));
  load_checkpoint(model, checkpoint);
  const EvalReport report = evaluate_model(model, split);
  std::filesystem::create_directories(cfg.out);
  write_eval_report_csv(report, std::filesystem::path(cfg.out) / "eval_report.csv");
  return report;
}

void cmd_gen_data(const RunConfig& cfg) {
  cfg.synth.validate();
  RunStreams streams = RunStreams::from_seed(cfg.seed);
  write_dataset(gen_synthetic_dataset(cfg.synth, streams.data), std::filesystem::path(cfg.out) / "dataset");
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg) {
  cfg.validate();
  const std::filesystem::path root(cfg.out);
  std::filesystem::create_directories(root);
  std::vector<AblationRow> rows;
  auto runs = open_csv(root / "ablation_runs.csv");
  runs << "variant,name,seed,map,cmc_1,attribution_entropy\n";
  for (int id : cfg.ablate_variants) {
    const TrainVariant variant = ablation_variant(id);
    AblationRow row{id, variant.name, {}, {}, {}};
    for (std::uint64_t seed : cfg.ablate_seeds) {
      RunConfig run_cfg = cfg;
      run_cfg.seed = seed;
      run_cfg.eval_every_epoch = false;
      const auto dir = root / ("v" + std::to_string(id) + "_s" + std::to_string(seed));
      auto outcome = run_training(run_cfg, variant, dir);
      const EvalReport report = *outcome.record.final_eval;
      const double entropy =
          cfg.ablate_attribution ? test_attribution_entropy(outcome.model, outcome.split, run_cfg) : std::nan("");
      row.maps.push_back(report.map);
      row.rank1.push_back(report.rank(1));
      row.entropies.push_back(entropy);
      runs << id << ',' << variant.name << ',' << seed << ',' << fmt(report.map) << ',' << fmt(report.rank(1)) << ','
           << (cfg.ablate_attribution ? fmt(entropy) : std::string()) << '\n';
    }
    rows.push_back(std::move(row));
  }
  auto summary = open_csv(root / "ablation.csv");
  summary << "variant,name,num_seeds,median_map,median_rank1,median_attribution_entropy\n";
  for (const auto& r : rows) {
    summary << r.variant << ',' << r.name << ',' << r.maps.size() << ',' << fmt(median(r.maps)) << ','
            << fmt(median(r.rank1)) << ',' << (cfg.ablate_attribution ? fmt(median(r.entropies)) : std::string())
            << '\n';
  }
  return rows;
}

}  // namespace umfl
