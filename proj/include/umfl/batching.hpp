#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "umfl/erasing.hpp"
#include "umfl/image.hpp"
#include "umfl/rng.hpp"

namespace umfl {

/// P identities x K samples per batch.
struct PkConfig {
  int identities_per_batch = 16;
  int samples_per_identity = 4;

  int batch_size() const noexcept { return identities_per_batch * samples_per_identity; }
  void validate() const;
};

struct RawBatch {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<std::int64_t> source_ids;
};

/// Two views of the same raw images. The full batch is [images_re; images_bce]
/// with labels repeated twice. When `bce` is empty the second view holds an
/// independent RE draw instead of batch-constant erasing (baseline training).
struct HierBatch {
  struct Stripe {
    int s = 0;
    int stripe_index = 0;
    RowBand band;
  };

  std::vector<Image> images_re;
  std::vector<Image> images_bce;
  std::vector<int> labels;
  std::vector<std::int64_t> source_ids;
  std::optional<Stripe> bce;

  std::size_t sub_batch_size() const noexcept { return labels.size(); }
  std::vector<Image> full_images() const;
  std::vector<int> full_labels() const;
};

/// P distinct identities without replacement; K samples each, without replacement
/// when the identity has >= K samples and with replacement otherwise.
RawBatch sample_pk(const Dataset& dataset, RandomSource& rng, const PkConfig& cfg);

/// RE on copy one (image order), then BcE on copy two.
HierBatch build_hier_batch(const RawBatch& raw, RandomSource& rng, const ReConfig& re_cfg,
                           const BceConfig& bce_cfg, const Eigen::VectorXd& fill_value);

/// Both copies receive independent RE draws (copy one first).
HierBatch build_re_pair_batch(const RawBatch& raw, RandomSource& rng, const ReConfig& re_cfg,
                              const Eigen::VectorXd& fill_value);

}  // namespace umfl
