// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "support.hpp"
#include "umfl/batching.hpp"
#include "umfl/erasing.hpp"
#include "umfl/eval.hpp"
#include "umfl/experiment.hpp"
#include "umfl/gradcheck.hpp"
#include "umfl/losses.hpp"

using namespace umfl;
using namespace umfl::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Image noise_image(int h, int w, int c, RandomSource& rng) {
  Image img(h, w, c);
  for (auto& v : img.data()) v = uniform_f64(rng, 0.0, 1.0);
  return img;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto results = run_gradient_suite(2024, 50);
  const double secs = seconds_since(t0);
  bool ok = secs < 60.0;
  double worst = 0.0;
  std::string failed;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_error);
    if (!r.passed || r.points != 50) {
      ok = false;
      failed += " " + r.name;
    }
  }
  return {ok, std::to_string(results.size()) + " cases x 50 points, max rel error " + fmt("%.2e", worst) + ", " +
                  fmt("%.1f", secs) + " s" + (failed.empty() ? "" : ", failing:" + failed)};
}

Outcome mining_oracle() {
  SplitMix64 rng(7);
  double worst = 0.0;
  for (int b = 0; b < 200; ++b) {
    const int ids = static_cast<int>(uniform_int(rng, 2, 4));
    const int max_per = 16 / ids;
    std::vector<int> labels;
    for (int id = 0; id < ids; ++id) {
      const int k = static_cast<int>(uniform_int(rng, 2, max_per));
      for (int j = 0; j < k; ++j) labels.push_back(id);
    }
    for (std::size_t i = labels.size(); i > 1; --i)
      std::swap(labels[i - 1], labels[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1))]);
    const int d = static_cast<int>(uniform_int(rng, 1, 8));
    Points z(labels.size(), std::vector<double>(static_cast<std::size_t>(d)));
    Tensor<double> t(Shape{static_cast<Index>(labels.size()), d});
    for (std::size_t i = 0; i < z.size(); ++i)
      for (int k = 0; k < d; ++k) t.matrix()(static_cast<Index>(i), k) = z[i][static_cast<std::size_t>(k)] = uniform_f64(rng, -2, 2);
    const double margin = uniform_f64(rng, 0.0, 1.0);
    Tape<double> tape;
    const auto dist = pairwise_distances(tape.constant(t));
    worst = std::max(worst, std::abs(batch_hard_hinge(dist, labels, margin).item() - oracle_hinge(z, labels, margin)));
    worst = std::max(worst, std::abs(batch_hard_softplus(dist, labels).item() - oracle_soft(z, labels)));
  }
  return {worst <= 1e-12, "200 batches, max |loss - brute force| = " + fmt("%.2e", worst)};
}

Outcome erasing_invariants() {
  SplitMix64 rng(99);
  const Eigen::VectorXd fill = Eigen::VectorXd::Constant(3, 0.5);
  int violations = 0;
  int regions = 0;
  for (int i = 0; i < 1000; ++i) {
    const int h = static_cast<int>(uniform_int(rng, 16, 64));
    const int w = static_cast<int>(uniform_int(rng, 8, 48));
    ReConfig cfg;
    cfg.probability = 1.0;
    cfg.fill = i % 2 ? FillPolicy::zero : FillPolicy::random_uniform;
    const Image img = noise_image(h, w, 3, rng);
    const auto [out, region] = apply_re(img, rng, cfg, fill);
    if (!region) {
      violations += !(out == img);
      continue;
    }
    ++regions;
    const double area = region->area_ratio * h * w;
    if (area < cfg.s_l * h * w || area > cfg.s_h * h * w) ++violations;
    if (region->top < 0 || region->left < 0 || region->top + region->height > h || region->left + region->width > w)
      ++violations;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        for (int ch = 0; ch < 3; ++ch)
          if (!region->contains(r, c) && out.at(r, c, ch) != img.at(r, c, ch)) ++violations;
  }
  int bce_violations = 0;
  for (int i = 0; i < 200; ++i) {
    const int h = static_cast<int>(uniform_int(rng, 16, 64));
    const int n = static_cast<int>(uniform_int(rng, 2, 8));
    std::vector<Image> imgs;
    for (int k = 0; k < n; ++k) imgs.push_back(noise_image(h, 6, 3, rng));
    const BceResult res = apply_bce_subbatch(imgs, rng, BceConfig{6, 8, FillPolicy::zero}, fill);
    const int base = h / res.s;
    const bool last = res.stripe_index == res.s - 1;
    if (res.band.begin != res.stripe_index * base) ++bce_violations;
    if (last ? res.band.end != h : res.band.rows() != base) ++bce_violations;
    for (int k = 0; k < n; ++k)
      for (int r = 0; r < h; ++r) {
        const bool inside = r >= res.band.begin && r < res.band.end;
        for (int c = 0; c < 6; ++c)
          for (int ch = 0; ch < 3; ++ch) {
            const double v = res.images[static_cast<std::size_t>(k)].at(r, c, ch);
            if (inside ? v != 0.0 : v != imgs[static_cast<std::size_t>(k)].at(r, c, ch)) ++bce_violations;
          }
      }
  }
  return {violations == 0 && bce_violations == 0 && regions > 900,
          "1000 RE (" + std::to_string(regions) + " regions, " + std::to_string(violations) +
              " violations), 200 BcE sub-batches (" + std::to_string(bce_violations) + " violations)"};
}

Outcome focal_properties() {
  bool ok = focal_prob(0.0, 1.0) == 0.0;
  const double at_ln3 = focal_prob(std::log(3.0), 1.0);
  ok = ok && std::abs(at_ln3 - 0.5) <= 1e-12;
  // Grid over [0, 1000]: p is strictly increasing and below 1 exactly when
  // log(1 - p) is finite and strictly decreasing.
  const int n = 10000;
  double prev_p = -1.0, prev_lc = 1.0;
  int non_monotone = 0, not_below_one = 0;
  for (int i = 0; i <= n; ++i) {
    const double d = 1000.0 * i / n;
    const double p = focal_prob(d, 1.0);
    const double lc = focal_log_complement(d, 1.0);
    if (!(lc < prev_lc) || p < prev_p) ++non_monotone;
    if (!std::isfinite(lc) || !(lc < 0.0 || d == 0.0)) ++not_below_one;
    prev_p = p;
    prev_lc = lc;
  }
  ok = ok && non_monotone == 0 && not_below_one == 0;
  return {ok, "p(0)=0, |p(ln 3)-0.5|=" + fmt("%.1e", std::abs(at_ln3 - 0.5)) + ", grid of 10^4 points on [0,1000]: " +
                  std::to_string(non_monotone) + " monotonicity and " + std::to_string(not_below_one) +
                  " bound failures (log(1-p) at d=1000: " + fmt("%.1f", focal_log_complement(1000.0, 1.0)) + ")"};
}

Outcome eval_fixtures() {
  using M = RowMatrix<double>;
  auto column = [](std::vector<double> xs) {
    M m(static_cast<Index>(xs.size()), 1);
    for (std::size_t i = 0; i < xs.size(); ++i) m(static_cast<Index>(i), 0) = xs[i];
    return m;
  };
  bool ok = true;
  const auto perfect = evaluate(column({0}), std::vector<int>{1}, column({0.1, 5, 9}), std::vector<int>{1, 2, 3});
  ok = ok && std::abs(perfect.map - 1.0) <= 1e-12 && perfect.rank(1) == 1.0;
  const auto r13 = evaluate(column({0}), std::vector<int>{1}, column({1, 2, 3, 4, 5}), std::vector<int>{1, 2, 1, 3, 4});
  ok = ok && std::abs(r13.map - 5.0 / 6.0) <= 1e-12 && r13.rank(1) == 1.0;
  const auto tie = evaluate(column({0}), std::vector<int>{1}, column({-1, 1}), std::vector<int>{2, 1});
  ok = ok && tie.rank(1) == 0.0 && tie.rank(2) == 1.0;
  SplitMix64 rng(4);
  int non_monotone = 0;
  for (int t = 0; t < 200; ++t) {
    M q(6, 4), g(15, 4);
    for (Index i = 0; i < q.size(); ++i) q.data()[i] = uniform_f64(rng, -1, 1);
    for (Index i = 0; i < g.size(); ++i) g.data()[i] = uniform_f64(rng, -1, 1);
    std::vector<int> ql, gl;
    for (int i = 0; i < 6; ++i) ql.push_back(static_cast<int>(uniform_int(rng, 0, 4)));
    for (int i = 0; i < 15; ++i) gl.push_back(i % 5);
    const auto r = evaluate(q, ql, g, gl);
    for (std::size_t k = 1; k < r.cmc.size(); ++k) non_monotone += r.cmc[k] < r.cmc[k - 1];
  }
  ok = ok && non_monotone == 0;
  return {ok, "AP fixtures (1, 0.8333.., tie) match; " + std::to_string(non_monotone) +
                  " CMC decreases over 200 random inputs"};
}

struct SeedResult {
  double map = 0, rank1 = 0, entropy = 0;
};

std::map<std::string, std::vector<SeedResult>> g_runs;
std::map<std::string, double> g_seconds;

void run_directional() {
  for (TrainMode mode : {TrainMode::umfl, TrainMode::baseline}) {
    const auto t0 = Clock::now();
    for (std::uint64_t seed : RunConfig{}.ablate_seeds) {
      RunConfig cfg;
      cfg.seed = seed;
      cfg.mode = mode;
      cfg.eval_every_epoch = false;
      const auto out = run_training(cfg, variant_for_mode(cfg), std::nullopt);
      const EvalReport r = *out.record.final_eval;
      g_runs[to_string(mode)].push_back({r.map, r.rank(1), test_attribution_entropy(out.model, out.split, cfg)});
      std::printf("  seed %llu %-8s mAP %.4f rank-1 %.4f entropy %.4f\n", static_cast<unsigned long long>(seed),
                  to_string(mode).c_str(), r.map, r.rank(1), g_runs[to_string(mode)].back().entropy);
      std::fflush(stdout);
    }
    g_seconds[to_string(mode)] = seconds_since(t0);
  }
}

Outcome directional() {
  std::vector<double> um, ur, bm, br;
  for (const auto& s : g_runs["umfl"]) um.push_back(s.map), ur.push_back(s.rank1);
  for (const auto& s : g_runs["baseline"]) bm.push_back(s.map), br.push_back(s.rank1);
  const double mu = median(um), mb = median(bm), ru = median(ur), rb = median(br);
  const bool fast = g_seconds["umfl"] < 900 && g_seconds["baseline"] < 900;
  return {mu >= mb && ru >= rb && fast,
          "median mAP umfl " + fmt("%.4f", mu) + " vs baseline " + fmt("%.4f", mb) + ", median rank-1 " +
              fmt("%.4f", ru) + " vs " + fmt("%.4f", rb) + ", " + fmt("%.0f", g_seconds["umfl"]) + " s / " +
              fmt("%.0f", g_seconds["baseline"]) + " s per variant"};
}

Outcome attribution_diversity() {
  const auto& u = g_runs["umfl"];
  const auto& b = g_runs["baseline"];
  int wins = 0;
  std::string per_seed;
  for (std::size_t i = 0; i < u.size(); ++i) {
    wins += u[i].entropy >= b[i].entropy;
    per_seed += (i ? " " : "") + fmt("%+.4f", u[i].entropy - b[i].entropy);
  }
  return {wins >= 3, std::to_string(wins) + "/5 seeds with umfl entropy >= baseline (differences: " + per_seed + ")"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism(const std::string& cli) {
  const fs::path root = fs::temp_directory_path() / "umfl_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream cfg(root / "tiny.cfg");
    cfg << "synth.num_identities = 12\nsynth.samples_per_identity = 4\nsynth.height = 16\nsynth.width = 8\n"
           "synth.num_parts = 4\npk.p = 4\npk.k = 2\ntrain.epochs = 2\ntrain.steps_per_epoch = 3\n"
           "eval.occlusion_stripes = 4\nattribution.stripes = 4\nmodel.embedding_dim = 8\n"
           "ablate.seeds = 1,2\nablate.variants = 1,5\n";
  }
  const std::string cfg = " --config " + (root / "tiny.cfg").string() + " --seed 0x2a";
  int failures = 0;
  // The same command lines run twice into the same directory; the first run's
  // output is moved aside before the second.
  const fs::path out = root / "out";
  for (const char* run : {"a", "b"}) {
    const std::vector<std::string> cmds = {
        "gen-data --out " + (out / "gen").string(),
        "train --out " + (out / "train").string(),
        "train --mode baseline --out " + (out / "baseline").string(),
        "eval --checkpoint " + (out / "train" / "checkpoint.umfl").string() + " --out " + (out / "eval").string(),
        "attribution --overlays --checkpoint " + (out / "train" / "checkpoint.umfl").string() + " --out " +
            (out / "attr").string(),
        "erase-demo --mode re --out " + (out / "re").string(),
        "erase-demo --mode bce --batch --out " + (out / "bce").string(),
        "ablate --out " + (out / "ablate").string(),
    };
    for (const auto& c : cmds) {
      const std::string line = cli + " " + c + cfg + " > /dev/null";
      if (std::system(line.c_str()) != 0) {
        std::printf("  command failed: %s\n", line.c_str());
        ++failures;
      }
    }
    fs::rename(out, root / run);
  }
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), root / "a");
    if (slurp(e.path()) != slurp(root / "b" / rel)) {
      std::printf("  differs: %s\n", rel.string().c_str());
      ++failures;
    }
  }
  return {failures == 0 && files > 0,
          std::to_string(files) + " output files (CSV, PPM, checkpoints) compared across reruns, " +
              std::to_string(failures) + " mismatches or failures"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : UMFL_CLI_PATH;
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"mining oracle", mining_oracle},
      {"erasing invariants", erasing_invariants},
      {"distance-to-probability map", focal_properties},
      {"evaluation kit", eval_fixtures},
      {"directional umfl vs baseline",
       [] {
         run_directional();
         return directional();
       }},
      {"attribution diversity", attribution_diversity},
      {"determinism", [&] { return determinism(cli); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
