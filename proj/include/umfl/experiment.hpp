#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "umfl/config.hpp"
#include "umfl/eval.hpp"
#include "umfl/model.hpp"

namespace umfl {

/// One rung of the ablation ladder: which batch is built and which terms train.
struct TrainVariant {
  int id = 5;
  std::string name;
  bool use_bce = true;        ///< second view gets batch-constant erasing
  bool use_re = true;         ///< random erasing enabled (probability from config)
  LossWeights weights;
};

/// 1 base + hard-triplet, 2 base + RE + hard-triplet, 3 RE(.)BcE + L_sub,
/// 4 ... + L_full, 5 ... + L_f (full model).
TrainVariant ablation_variant(int id);

/// The variant trained by `train --mode`: umfl uses the configured term weights,
/// baseline is rung 2 with the configured triplet/classification weights.
TrainVariant variant_for_mode(const RunConfig& cfg);

/// Identity-disjoint train / query / gallery partition of a dataset.
struct DataSplit {
  Dataset train;
  std::vector<Image> query;
  std::vector<int> query_labels;
  std::vector<std::int64_t> query_ids;
  std::vector<Image> gallery;
  std::vector<int> gallery_labels;
  std::vector<std::int64_t> gallery_ids;
  std::vector<Image> test_images;  ///< unoccluded test images (query + gallery sources)
  std::vector<std::int64_t> test_ids;
  Eigen::VectorXd fill_value;      ///< mean pixel of the training images
};

/// Independent generator streams forked from the run seed in a fixed order.
struct RunStreams {
  SplitMix64 data;
  SplitMix64 init;
  SplitMix64 train;
  SplitMix64 eval;
  static RunStreams from_seed(std::uint64_t seed);
};

/// Generates (or loads) the dataset and splits it. The first round(fraction * N)
/// identities train; each remaining identity contributes its first
/// queries_per_identity samples as queries and the rest as gallery. Queries get
/// one uniformly drawn stripe erased when occlusion is enabled.
DataSplit prepare_data(const RunConfig& cfg, RunStreams& streams);

ModelConfig model_config(const RunConfig& cfg, const DataSplit& split);

EvalReport evaluate_model(const EmbeddingModel<double>& model, const DataSplit& split);

struct StepRecord {
  int step = 0;
  LossReport loss;
};

struct EpochRecord {
  int epoch = 0;
  EvalReport eval;
};

struct ExperimentRecord {
  std::string config_snapshot;
  TrainVariant variant;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::optional<EvalReport> final_eval;
  std::filesystem::path checkpoint;
};

struct TrainOutcome {
  ExperimentRecord record;
  EmbeddingModel<double> model;
  DataSplit split;
};

/// Full training run. When `out_dir` is set, writes config.txt, metrics.csv,
/// epoch_eval.csv and checkpoint.umfl there.
TrainOutcome run_training(const RunConfig& cfg, const TrainVariant& variant,
                          const std::optional<std::filesystem::path>& out_dir);

// CSV writers (fixed formatting so reruns are byte-identical)
void write_metrics_csv(const std::vector<StepRecord>& steps, const std::filesystem::path& path);
void write_eval_report_csv(const EvalReport& report, const std::filesystem::path& path);

/// Median occlusion-attribution entropy of the model over the split's test images.
double test_attribution_entropy(const EmbeddingModel<double>& model, const DataSplit& split, const RunConfig& cfg);

// Commands
ExperimentRecord cmd_train(const RunConfig& cfg);
EvalReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint);
void cmd_gen_data(const RunConfig& cfg);

struct AblationRow {
  int variant = 0;
  std::string name;
  std::vector<double> maps;
  std::vector<double> rank1;
  std::vector<double> entropies;
};
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg);

}  // namespace umfl
