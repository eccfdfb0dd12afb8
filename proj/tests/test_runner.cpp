#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "umfl/config.hpp"
#include "umfl/errors.hpp"
#include "umfl/experiment.hpp"

using namespace umfl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("umfl_test_" + name);
  fs::remove_all(dir);
  return dir;
}

RunConfig tiny(const std::string& out) {
  return apply_key_values(RunConfig{}, parse_key_values(R"(
synth.num_identities = 12
synth.samples_per_identity = 4
synth.height = 16
synth.width = 8
synth.num_parts = 4
pk.p = 4
pk.k = 2
train.epochs = 2
train.steps_per_epoch = 3
eval.occlusion_stripes = 4
attribution.stripes = 4
model.embedding_dim = 8
out = )" + out));
}

}  // namespace

TEST_CASE("key-value parsing") {
  const auto kv = parse_key_values("# header\n a.b = 1 \n\nseed=0x10 # trailing\na.b = 2\n");
  CHECK(kv.at("a.b") == "2");
  CHECK(kv.at("seed") == "0x10");
  CHECK_THROWS_AS(parse_key_values("novalue\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values(" = 3\n"), ConfigError);
}

TEST_CASE("applying config keys") {
  const RunConfig cfg = apply_key_values(RunConfig{}, {{"seed", "0xff"},
                                                       {"re.fill", "zero"},
                                                       {"loss.w_f", "0"},
                                                       {"ablate.seeds", "3, 4"},
                                                       {"model.arch", "mlp"},
                                                       {"train.mode", "baseline"}});
  CHECK(cfg.seed == 255);
  CHECK(cfg.re.fill == FillPolicy::zero);
  CHECK(cfg.loss.weights.focal == 0.0);
  CHECK(cfg.ablate_seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(cfg.arch == Arch::mlp);
  CHECK(cfg.mode == TrainMode::baseline);
  CHECK(message_of([] { apply_key_values(RunConfig{}, {{"re.nope", "1"}}); }).find("re.nope") != std::string::npos);
  CHECK(message_of([] { apply_key_values(RunConfig{}, {{"loss.margin", "abc"}}); }).find("loss.margin") !=
        std::string::npos);
  CHECK(message_of([] { apply_key_values(RunConfig{}, {{"synth.num_parts", "1"}}); }).find("synth.num_parts") !=
        std::string::npos);
  CHECK_THROWS_AS(apply_key_values(RunConfig{}, {{"train.mode", "fancy"}}), ConfigError);
  CHECK_THROWS_AS(apply_key_values(RunConfig{}, {{"ablate.variants", "6"}}), ConfigError);
}

TEST_CASE("config snapshot round trips") {
  RunConfig cfg = tiny("x");
  cfg.loss.alpha = 0.1;
  const std::string text = to_config_text(cfg);
  CHECK(to_config_text(apply_key_values(RunConfig{}, parse_key_values(text))) == text);
  std::vector<std::string> keys;
  for (const auto& [k, v] : parse_key_values(text)) keys.push_back(k);
  CHECK(std::is_sorted(keys.begin(), keys.end()));
}

TEST_CASE("ablation ladder") {
  CHECK_FALSE(ablation_variant(1).use_re);
  CHECK_FALSE(ablation_variant(1).use_bce);
  CHECK(ablation_variant(2).use_re);
  CHECK_FALSE(ablation_variant(2).use_bce);
  for (int id = 3; id <= 5; ++id) CHECK(ablation_variant(id).use_bce);
  CHECK(ablation_variant(3).weights.sht_full == 0.0);
  CHECK(ablation_variant(4).weights.focal == 0.0);
  CHECK(ablation_variant(5).weights.focal == 1.0);
  CHECK_THROWS_AS(ablation_variant(6), ConfigError);
  RunConfig cfg;
  CHECK(variant_for_mode(cfg).use_bce);
  cfg.mode = TrainMode::baseline;
  const TrainVariant b = variant_for_mode(cfg);
  CHECK_FALSE(b.use_bce);
  CHECK(b.weights.sht_sub == 0.0);
  CHECK(b.weights.focal == 0.0);
}

TEST_CASE("desk-scale split") {
  RunConfig cfg;
  RunStreams streams = RunStreams::from_seed(cfg.seed);
  const DataSplit split = prepare_data(cfg, streams);
  CHECK(split.train.num_identities == 40);
  CHECK(split.train.samples.size() == 320);
  CHECK(split.query.size() == 40);
  CHECK(split.gallery.size() == 120);
  std::set<int> train_ids, test_ids(split.query_labels.begin(), split.query_labels.end());
  for (const auto& s : split.train.samples) train_ids.insert(s.identity);
  for (int g : split.gallery_labels) test_ids.insert(g);
  for (int t : test_ids) CHECK_FALSE(train_ids.contains(t));
  CHECK(test_ids.size() == 20);
  // Each query differs from its source image in exactly one stripe band.
  for (std::size_t q = 0; q < split.query.size(); ++q) {
    const auto it = std::find(split.test_ids.begin(), split.test_ids.end(), split.query_ids[q]);
    const Image& src = split.test_images[static_cast<std::size_t>(it - split.test_ids.begin())];
    std::set<int> bands;
    for (int r = 0; r < src.height(); ++r)
      for (int c = 0; c < src.width(); ++c)
        if (src.at(r, c, 0) != split.query[q].at(r, c, 0) || src.at(r, c, 1) != split.query[q].at(r, c, 1))
          for (int k = 0; k < 6; ++k) {
            const RowBand b = stripe_band(src.height(), 6, k);
            if (r >= b.begin && r < b.end) bands.insert(k);
          }
    CHECK(bands.size() == 1);
  }
}

TEST_CASE("too few training identities for P") {
  RunConfig cfg = tiny(scratch("small").string());
  cfg.pk.identities_per_batch = 9;
  RunStreams streams = RunStreams::from_seed(0);
  CHECK_THROWS_AS(prepare_data(cfg, streams), PreconditionError);
}

TEST_CASE("zero epochs gives an initialization-only checkpoint") {
  RunConfig cfg = tiny(scratch("zero").string());
  cfg.epochs = 0;
  const ExperimentRecord rec = cmd_train(cfg);
  CHECK(rec.steps.empty());
  CHECK(rec.epochs.empty());
  CHECK(fs::exists(rec.checkpoint));
  CHECK(slurp(fs::path(cfg.out) / "metrics.csv") == "step,l_sht_sub,l_sht_full,l_f,l_c,total\n");
}

TEST_CASE("training and evaluation are byte-reproducible") {
  RunConfig a = tiny(scratch("det_a").string());
  RunConfig b = tiny(scratch("det_b").string());
  const auto ra = cmd_train(a);
  cmd_train(b);
  CHECK(ra.steps.size() == 6);
  CHECK(ra.epochs.size() == 2);
  for (const char* f : {"metrics.csv", "epoch_eval.csv", "eval_report.csv", "checkpoint.umfl"}) {
    CHECK_MESSAGE(slurp(fs::path(a.out) / f) == slurp(fs::path(b.out) / f), f);
  }
  // Snapshots differ only in the output directory line.
  auto without_out = [](std::string s) {
    const auto at = s.find("\nout = ");
    REQUIRE(at != std::string::npos);
    return s.erase(at, s.find('\n', at + 1) - at);
  };
  CHECK(without_out(slurp(fs::path(a.out) / "config.txt")) == without_out(slurp(fs::path(b.out) / "config.txt")));
  // Reloading the checkpoint reproduces the final report.
  const EvalReport e1 = cmd_eval(a, ra.checkpoint);
  const std::string first = slurp(fs::path(a.out) / "eval_report.csv");
  const EvalReport e2 = cmd_eval(a, ra.checkpoint);
  CHECK(e1.map == e2.map);
  CHECK(e1.map == ra.final_eval->map);
  CHECK(e1.cmc == ra.final_eval->cmc);
  CHECK(slurp(fs::path(a.out) / "eval_report.csv") == first);

  RunConfig wrong = a;
  wrong.embedding_dim = 4;
  CHECK_THROWS_AS(cmd_eval(wrong, ra.checkpoint), FormatError);
}

TEST_CASE("random-init model beats the label-permutation baseline") {
  RunConfig cfg;
  RunStreams streams = RunStreams::from_seed(cfg.seed);
  const DataSplit split = prepare_data(cfg, streams);
  EmbeddingModel<double> model(model_config(cfg, split));
  model.init_he_uniform(streams.init);
  const auto q = model.embed_images(split.query);
  const auto g = model.embed_images(split.gallery);
  const double real = evaluate(q, split.query_labels, g, split.gallery_labels).map;
  SplitMix64 rng(5);
  double shuffled = 0.0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    std::vector<int> labels = split.gallery_labels;
    for (std::size_t i = labels.size(); i > 1; --i)
      std::swap(labels[i - 1], labels[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1))]);
    shuffled += evaluate(q, split.query_labels, g, labels).map / trials;
  }
  CHECK(real > shuffled);
}

TEST_CASE("umfl training lowers the total loss") {
  RunConfig cfg;
  cfg.eval_every_epoch = false;
  const auto out = run_training(cfg, variant_for_mode(cfg), std::nullopt);
  CHECK(out.record.steps.back().loss.total < out.record.steps.front().loss.total);
}

TEST_CASE("gen-data writes the dataset") {
  RunConfig cfg;
  cfg.synth.num_identities = 40;
  cfg.out = scratch("gen").string();
  cmd_gen_data(cfg);
  const fs::path dir = fs::path(cfg.out) / "dataset";
  int ppm = 0;
  for (const auto& e : fs::directory_iterator(dir)) ppm += e.path().extension() == ".ppm";
  CHECK(ppm == 320);
  const std::string manifest = slurp(dir / "manifest.csv");
  CHECK(std::count(manifest.begin(), manifest.end(), '\n') == 321);
  const std::string first = slurp(dir / "img_17.ppm");
  cmd_gen_data(cfg);
  CHECK(slurp(dir / "img_17.ppm") == first);
}

TEST_CASE("ablate with one seed and two variants") {
  RunConfig cfg = tiny(scratch("ablate").string());
  cfg.ablate_seeds = {3};
  cfg.ablate_variants = {1, 5};
  const auto rows = cmd_ablate(cfg);
  CHECK(rows.size() == 2);
  const std::string csv = slurp(fs::path(cfg.out) / "ablation.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv.starts_with("variant,name,num_seeds,median_map,median_rank1,median_attribution_entropy\n"));
}
