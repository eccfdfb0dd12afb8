#include "umfl/model.hpp"

namespace umfl {

Arch parse_arch(const std::string& name) {
  if (name == "conv_small") return Arch::conv_small;
  if (name == "mlp") return Arch::mlp;
  throw ConfigError("model.arch: unknown architecture '" + name + "' (conv_small|mlp)");
}

std::string to_string(Arch arch) { return arch == Arch::conv_small ? "conv_small" : "mlp"; }

void ModelConfig::validate() const {
  if (embedding_dim < 2) throw ConfigError("model.embedding_dim: must be >= 2");
  if (num_classes < 1) throw ConfigError("model.num_classes: must be >= 1");
  if (channels != 1 && channels != 3) throw ConfigError("model.channels: must be 1 or 3");
  if (arch == Arch::conv_small && (height < 4 || width < 4)) {
    throw ConfigError("model.height/model.width: conv_small needs at least 4x4 input");
  }
  if (height < 1 || width < 1) throw ConfigError("model.height/model.width: must be positive");
}

}  // namespace umfl
