#include "umfl/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "umfl/errors.hpp"

namespace umfl {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> items;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) s += (i ? "," : "") + std::to_string(items[i]);
  return s;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

template <typename T>
Field number_field(T RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            if constexpr (std::is_same_v<T, int>) c.*member = to_int(k, v);
            else c.*member = to_double(k, v);
          },
          [member](const RunConfig& c) {
            if constexpr (std::is_same_v<T, int>) return std::to_string(c.*member);
            else return fmt(c.*member);
          }};
}

template <typename S, typename T>
Field nested_field(S RunConfig::*section, T S::*member) {
  return {[section, member](RunConfig& c, const std::string& k, const std::string& v) {
            if constexpr (std::is_same_v<T, int>) (c.*section).*member = to_int(k, v);
            else (c.*section).*member = to_double(k, v);
          },
          [section, member](const RunConfig& c) {
            if constexpr (std::is_same_v<T, int>) return std::to_string((c.*section).*member);
            else return fmt((c.*section).*member);
          }};
}

Field bool_field(bool RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = to_bool(k, v); },
          [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field weight_field(double LossWeights::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.loss.weights.*member = to_double(k, v); },
          [member](const RunConfig& c) { return fmt(c.loss.weights.*member); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["seed"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.seed = parse_seed(v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }};
    t["data.manifest"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.manifest = v; },
                          [](const RunConfig& c) { return c.manifest; }};
    t["out"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.out = v; },
                [](const RunConfig& c) { return c.out; }};

    t["synth.num_identities"] = nested_field(&RunConfig::synth, &SynthConfig::num_identities);
    t["synth.samples_per_identity"] = nested_field(&RunConfig::synth, &SynthConfig::samples_per_identity);
    t["synth.height"] = nested_field(&RunConfig::synth, &SynthConfig::height);
    t["synth.width"] = nested_field(&RunConfig::synth, &SynthConfig::width);
    t["synth.channels"] = nested_field(&RunConfig::synth, &SynthConfig::channels);
    t["synth.num_parts"] = nested_field(&RunConfig::synth, &SynthConfig::num_parts);
    t["synth.confusable_fraction"] = nested_field(&RunConfig::synth, &SynthConfig::confusable_fraction);
    t["synth.noise_sigma"] = nested_field(&RunConfig::synth, &SynthConfig::noise_sigma);
    t["synth.max_shift"] = nested_field(&RunConfig::synth, &SynthConfig::max_shift);
    t["synth.palette_size"] = nested_field(&RunConfig::synth, &SynthConfig::palette_size);
    t["synth.brightness_jitter"] = nested_field(&RunConfig::synth, &SynthConfig::brightness_jitter);

    t["pk.p"] = nested_field(&RunConfig::pk, &PkConfig::identities_per_batch);
    t["pk.k"] = nested_field(&RunConfig::pk, &PkConfig::samples_per_identity);

    t["re.probability"] = nested_field(&RunConfig::re, &ReConfig::probability);
    t["re.s_l"] = nested_field(&RunConfig::re, &ReConfig::s_l);
    t["re.s_h"] = nested_field(&RunConfig::re, &ReConfig::s_h);
    t["re.r_1"] = nested_field(&RunConfig::re, &ReConfig::r_1);
    t["re.r_2"] = nested_field(&RunConfig::re, &ReConfig::r_2);
    t["re.max_attempts"] = nested_field(&RunConfig::re, &ReConfig::max_attempts);
    t["re.fill"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.re.fill = parse_fill_policy(v); },
                    [](const RunConfig& c) { return to_string(c.re.fill); }};
    t["bce.s_min"] = nested_field(&RunConfig::bce, &BceConfig::s_min);
    t["bce.s_max"] = nested_field(&RunConfig::bce, &BceConfig::s_max);
    t["bce.fill"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.bce.fill = parse_fill_policy(v); },
                     [](const RunConfig& c) { return to_string(c.bce.fill); }};

    t["loss.margin"] = nested_field(&RunConfig::loss, &LossConfig::margin);
    t["loss.alpha"] = nested_field(&RunConfig::loss, &LossConfig::alpha);
    t["loss.gamma"] = nested_field(&RunConfig::loss, &LossConfig::gamma);
    t["loss.distance_epsilon"] = nested_field(&RunConfig::loss, &LossConfig::distance_epsilon);
    t["loss.w_sub"] = weight_field(&LossWeights::sht_sub);
    t["loss.w_full"] = weight_field(&LossWeights::sht_full);
    t["loss.w_f"] = weight_field(&LossWeights::focal);
    t["loss.w_c"] = weight_field(&LossWeights::classification);

    t["model.arch"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.arch = parse_arch(v); },
                       [](const RunConfig& c) { return to_string(c.arch); }};
    t["model.embedding_dim"] = number_field(&RunConfig::embedding_dim);
    t["optim.lr"] = number_field(&RunConfig::learning_rate);
    t["optim.beta1"] = number_field(&RunConfig::beta1);
    t["optim.beta2"] = number_field(&RunConfig::beta2);
    t["optim.epsilon"] = number_field(&RunConfig::adam_epsilon);

    t["train.epochs"] = number_field(&RunConfig::epochs);
    t["train.steps_per_epoch"] = number_field(&RunConfig::steps_per_epoch);
    t["train.mode"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.mode = parse_train_mode(v); },
                       [](const RunConfig& c) { return to_string(c.mode); }};
    t["train.eval_every_epoch"] = bool_field(&RunConfig::eval_every_epoch);

    t["split.train_fraction"] = number_field(&RunConfig::train_fraction);
    t["split.queries_per_identity"] = number_field(&RunConfig::queries_per_identity);
    t["eval.occlude_queries"] = bool_field(&RunConfig::occlude_queries);
    t["eval.occlusion_stripes"] = number_field(&RunConfig::occlusion_stripes);
    t["attribution.stripes"] = number_field(&RunConfig::attribution_stripes);

    t["ablate.seeds"] = {[](RunConfig& c, const std::string&, const std::string& v) {
                           c.ablate_seeds.clear();
                           for (const auto& s : split_list(v)) c.ablate_seeds.push_back(parse_seed(s));
                         },
                         [](const RunConfig& c) { return join(c.ablate_seeds); }};
    t["ablate.variants"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                              c.ablate_variants.clear();
                              for (const auto& s : split_list(v)) c.ablate_variants.push_back(to_int(k, s));
                            },
                            [](const RunConfig& c) { return join(c.ablate_variants); }};
    t["ablate.attribution"] = bool_field(&RunConfig::ablate_attribution);
    return t;
  }();
  return table;
}

}  // namespace

TrainMode parse_train_mode(const std::string& name) {
  if (name == "umfl") return TrainMode::umfl;
  if (name == "baseline") return TrainMode::baseline;
  throw ConfigError("train.mode: unknown mode '" + name + "' (umfl|baseline)");
}

std::string to_string(TrainMode mode) { return mode == TrainMode::umfl ? "umfl" : "baseline"; }

void RunConfig::validate() const {
  synth.validate();
  pk.validate();
  re.validate();
  bce.validate();
  loss.validate();
  if (embedding_dim < 2) throw ConfigError("model.embedding_dim: must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("optim.lr: must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("optim.beta1: must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optim.beta2: must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("optim.epsilon: must be > 0");
  if (epochs < 0) throw ConfigError("train.epochs: must be >= 0");
  if (steps_per_epoch < 1) throw ConfigError("train.steps_per_epoch: must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("split.train_fraction: must lie in (0, 1)");
  if (queries_per_identity < 1) throw ConfigError("split.queries_per_identity: must be >= 1");
  if (occlusion_stripes < 2) throw ConfigError("eval.occlusion_stripes: must be >= 2");
  if (attribution_stripes < 2) throw ConfigError("attribution.stripes: must be >= 2");
  if (ablate_seeds.empty()) throw ConfigError("ablate.seeds: need at least one seed");
  for (int v : ablate_variants) {
    if (v < 1 || v > 5) throw ConfigError("ablate.variants: variant " + std::to_string(v) + " outside 1..5");
  }
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

RunConfig apply_key_values(RunConfig base, const KeyValues& kv) {
  const auto& table = fields();
  for (const auto& [key, value] : kv) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(key + ": unknown config key");
    try {
      it->second.set(base, key, value);
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      throw ConfigError(what.starts_with(key) ? what : key + ": " + what);
    }
  }
  base.validate();
  return base;
}

std::string to_config_text(const RunConfig& cfg) {
  std::string text;
  for (const auto& [key, field] : fields()) text += key + " = " + field.get(cfg) + "\n";
  return text;
}

}  // namespace umfl
