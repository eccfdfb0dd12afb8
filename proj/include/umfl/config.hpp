#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "umfl/batching.hpp"
#include "umfl/erasing.hpp"
#include "umfl/losses.hpp"
#include "umfl/model.hpp"
#include "umfl/synth.hpp"

namespace umfl {

enum class TrainMode { umfl, baseline };

TrainMode parse_train_mode(const std::string& name);
std::string to_string(TrainMode mode);

/// Everything that determines a run. Serialized as flat `key = value` lines
/// with dotted section keys.
struct RunConfig {
  std::uint64_t seed = 0;
  /// When non-empty, data is read from this manifest instead of generated.
  std::string manifest;
  SynthConfig synth;
  PkConfig pk{8, 4};
  ReConfig re;
  BceConfig bce;
  LossConfig loss;
  Arch arch = Arch::conv_small;
  int embedding_dim = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int epochs = 12;
  int steps_per_epoch = 10;
  TrainMode mode = TrainMode::umfl;
  bool eval_every_epoch = true;
  double train_fraction = 2.0 / 3.0;
  int queries_per_identity = 2;
  bool occlude_queries = true;
  int occlusion_stripes = 6;
  int attribution_stripes = 6;
  std::vector<std::uint64_t> ablate_seeds{1, 2, 3, 4, 5};
  std::vector<int> ablate_variants{1, 2, 3, 4, 5};
  bool ablate_attribution = true;
  std::string out = "run";

  void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines; '#' starts a comment. Duplicate keys keep the last value.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

/// Applies the given keys on top of `base`; unknown keys or malformed values
/// raise ConfigError naming the key.
RunConfig apply_key_values(RunConfig base, const KeyValues& kv);

/// Resolved snapshot, one `key = value` line per setting in sorted key order.
std::string to_config_text(const RunConfig& cfg);

}  // namespace umfl
