#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "umfl/autodiff.hpp"
#include "umfl/image.hpp"
#include "umfl/rng.hpp"

namespace umfl {

enum class Arch { conv_small, mlp };

Arch parse_arch(const std::string& name);
std::string to_string(Arch arch);

struct ModelConfig {
  Arch arch = Arch::conv_small;
  int embedding_dim = 32;
  int num_classes = 2;
  int height = 48;
  int width = 24;
  int channels = 3;

  void validate() const;
};

template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
};

/// Stacks equally shaped images into an (N, H, W, C) tensor.
template <typename Scalar>
Tensor<Scalar> images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw PreconditionError("images_to_tensor: empty batch");
  const Image& first = images.front();
  const Index per = first.size();
  Tensor<Scalar> t(Shape{static_cast<Index>(images.size()), first.height(), first.width(), first.channels()});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i].same_shape(first)) throw PreconditionError("images_to_tensor: mismatched image shapes");
    t.values().segment(static_cast<Index>(i) * per, per) = images[i].data().template cast<Scalar>();
  }
  return t;
}

/// Embedding network phi plus a linear classifier head.
///
/// conv_small: conv(C->8) relu pool conv(8->16) relu pool flatten linear(->D)
/// mlp:        flatten linear(->64) relu linear(->64) relu linear(->D)
template <typename Scalar>
class EmbeddingModel {
 public:
  /// Parameter handles on one tape, in parameter order.
  struct Bound {
    std::vector<Var<Scalar>> vars;
    const Var<Scalar>& operator[](std::size_t i) const { return vars[i]; }
  };

  explicit EmbeddingModel(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const Index c = cfg_.channels, d = cfg_.embedding_dim;
    if (cfg_.arch == Arch::conv_small) {
      add("conv1.weight", {3, 3, c, 8});
      add("conv1.bias", {8});
      add("conv2.weight", {3, 3, 8, 16});
      add("conv2.bias", {16});
      add("embed.weight", {flat_features(), d});
      add("embed.bias", {d});
    } else {
      add("fc1.weight", {static_cast<Index>(cfg_.height) * cfg_.width * c, 64});
      add("fc1.bias", {64});
      add("fc2.weight", {64, 64});
      add("fc2.bias", {64});
      add("embed.weight", {64, d});
      add("embed.bias", {d});
    }
    add("classifier.weight", {d, cfg_.num_classes});
    add("classifier.bias", {cfg_.num_classes});
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  std::vector<Parameter<Scalar>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<Scalar>>& parameters() const noexcept { return params_; }

  /// Width of the flattened feature map feeding the embedding layer.
  Index flat_features() const {
    if (cfg_.arch == Arch::mlp) return 64;
    return static_cast<Index>(cfg_.height / 2 / 2) * (cfg_.width / 2 / 2) * 16;
  }

  /// He-uniform weights (limit sqrt(6 / fan_in)) drawn in parameter order,
  /// row-major within each tensor; biases zero.
  void init_he_uniform(RandomSource& rng) {
    for (auto& p : params_) {
      if (p.value.rank() == 1) {
        p.value.values().setZero();
        continue;
      }
      const Index fan_in = p.value.size() / p.value.shape().back();
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (Index i = 0; i < p.value.size(); ++i) p.value.values()[i] = static_cast<Scalar>(uniform_f64(rng, -limit, limit));
    }
  }

  void set_zero() {
    for (auto& p : params_) p.value.values().setZero();
  }

  /// Records every parameter on `tape`, as variables when `trainable`.
  Bound bind(Tape<Scalar>& tape, bool trainable) const {
    Bound b;
    for (const auto& p : params_) b.vars.push_back(trainable ? tape.variable(p.value) : tape.constant(p.value));
    return b;
  }

  /// images: (N, H, W, C) -> (N, D).
  Var<Scalar> embed(const Bound& p, const Var<Scalar>& images) const {
    const Shape& s = images.shape();
    if (s.size() != 4 || s[1] != cfg_.height || s[2] != cfg_.width || s[3] != cfg_.channels) {
      throw PreconditionError("embed: input " + shape_string(s) + " does not match model input (N," +
                              std::to_string(cfg_.height) + "," + std::to_string(cfg_.width) + "," +
                              std::to_string(cfg_.channels) + ")");
    }
    if (cfg_.arch == Arch::conv_small) {
      auto h = avgpool2d(relu(add_bias(conv2d(images, p[0]), p[1])));
      h = avgpool2d(relu(add_bias(conv2d(h, p[2]), p[3])));
      return add_bias(matmul(flatten(h), p[4]), p[5]);
    }
    auto h = relu(add_bias(matmul(flatten(images), p[0]), p[1]));
    h = relu(add_bias(matmul(h, p[2]), p[3]));
    return add_bias(matmul(h, p[4]), p[5]);
  }

  /// embeddings: (N, D) -> logits (N, num_classes).
  Var<Scalar> classify(const Bound& p, const Var<Scalar>& embeddings) const {
    if (embeddings.value().rank() != 2 || embeddings.shape()[1] != cfg_.embedding_dim) {
      throw PreconditionError("classify: embeddings " + shape_string(embeddings.shape()) + " need width " +
                              std::to_string(cfg_.embedding_dim));
    }
    return add_bias(matmul(embeddings, p[6]), p[7]);
  }

  /// Inference-only embedding of images, in chunks.
  RowMatrix<Scalar> embed_images(std::span<const Image> images, std::size_t chunk = 64) const {
    RowMatrix<Scalar> out(static_cast<Index>(images.size()), cfg_.embedding_dim);
    for (std::size_t start = 0; start < images.size(); start += chunk) {
      const std::size_t n = std::min(chunk, images.size() - start);
      Tape<Scalar> tape;
      const Bound b = bind(tape, false);
      const auto z = embed(b, tape.constant(images_to_tensor<Scalar>(images.subspan(start, n))));
      out.middleRows(static_cast<Index>(start), static_cast<Index>(n)) = z.value().matrix();
    }
    return out;
  }

 private:
  void add(std::string name, Shape shape) { params_.push_back({std::move(name), Tensor<Scalar>(std::move(shape))}); }

  ModelConfig cfg_;
  std::vector<Parameter<Scalar>> params_;
};

/// Adam optimizer state; accumulators are created on the first step.
template <typename Scalar>
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<typename Tensor<Scalar>::Array> m;
  std::vector<typename Tensor<Scalar>::Array> v;
};

/// Bias-corrected Adam update; increments the step count.
template <typename Scalar>
void adam_step(std::vector<Parameter<Scalar>>& params, const std::vector<typename Tensor<Scalar>::Array>& grads,
               AdamState<Scalar>& state) {
  if (grads.size() != params.size()) {
    throw PreconditionError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                            std::to_string(params.size()) + " parameters");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Tensor<Scalar>::Array::Zero(p.value.size()));
      state.v.push_back(Tensor<Scalar>::Array::Zero(p.value.size()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].value.size() || state.m[i].size() != grads[i].size()) {
      throw PreconditionError("adam_step: gradient/accumulator shape mismatch for " + params[i].name);
    }
  }
  ++state.step;
  const Scalar b1 = static_cast<Scalar>(state.beta1), b2 = static_cast<Scalar>(state.beta2);
  const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(state.beta1, static_cast<double>(state.step)));
  const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(state.beta2, static_cast<double>(state.step)));
  const Scalar lr = static_cast<Scalar>(state.learning_rate), eps = static_cast<Scalar>(state.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * grads[i].square();
    params[i].value.values() -= lr * (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + eps);
  }
}

// Checkpoint layout (little-endian): "UMFL", u32 version, then per parameter: u32 name length, UTF-8 name, u32 rank, u64 dims, f64 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char first = 0;
  std::memcpy(&first, &probe, 1);
  return first == 1;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if (!host_is_little_endian()) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const char* field) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw FormatError(std::string("checkpoint: truncated at ") + field);
  }
  if (!host_is_little_endian()) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace detail

template <typename Scalar>
void save_checkpoint(const EmbeddingModel<Scalar>& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot write " + path.string());
  out.write("UMFL", 4);
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& p : model.parameters()) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (Index d : p.value.shape()) detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (Index i = 0; i < p.value.size(); ++i) detail::write_le<double>(out, static_cast<double>(p.value.values()[i]));
  }
  if (!out) throw FormatError("checkpoint: write failed for " + path.string());
}

/// Loads parameter values into a model built from the matching config.
template <typename Scalar>
void load_checkpoint(EmbeddingModel<Scalar>& model, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "UMFL") throw FormatError("checkpoint: bad magic");
  const auto version = detail::read_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  for (auto& p : model.parameters()) {
    if (in.peek() == std::char_traits<char>::eof()) throw FormatError("checkpoint: missing parameter '" + p.name + "'");
    const auto len = detail::read_le<std::uint32_t>(in, "name length");
    if (len > 4096) throw FormatError("checkpoint: implausible name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("checkpoint: truncated at name");
    if (name != p.name) throw FormatError("checkpoint: expected parameter '" + p.name + "', found '" + name + "'");
    const auto rank = detail::read_le<std::uint32_t>(in, "rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank && i < 16; ++i) {
      shape.push_back(static_cast<Index>(detail::read_le<std::uint64_t>(in, "dims")));
    }
    if (rank != shape.size() || shape != p.value.shape()) {
      throw FormatError("checkpoint: dimension mismatch for " + name + ": file " + shape_string(shape) + ", model " +
                        shape_string(p.value.shape()));
    }
    for (Index i = 0; i < p.value.size(); ++i) p.value.values()[i] = static_cast<Scalar>(detail::read_le<double>(in, "values"));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: more parameters than the model has");
}

}  // namespace umfl
