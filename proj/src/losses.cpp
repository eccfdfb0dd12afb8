#include "umfl/losses.hpp"

namespace umfl {

void LossConfig::validate() const {
  if (!std::isfinite(margin)) throw ConfigError("loss.margin: must be finite");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("loss.alpha: must be > 0");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("loss.gamma: must be >= 0");
  if (!(distance_epsilon > 0.0)) throw ConfigError("loss.distance_epsilon: must be > 0");
  for (double w : {weights.sht_sub, weights.sht_full, weights.focal, weights.classification}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss.w_*: term weights must be finite and >= 0");
  }
}

}  // namespace umfl
