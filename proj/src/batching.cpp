#include "umfl/batching.hpp"

#include <map>
#include <numeric>

#include "umfl/errors.hpp"

namespace umfl {
namespace {

// First `count` entries of a uniform random permutation of `items`.
template <typename T>
std::vector<T> draw_without_replacement(std::vector<T> items, int count, RandomSource& rng) {
  const auto n = static_cast<std::int64_t>(items.size());
  for (std::int64_t i = 0; i < count; ++i) {
    const auto j = uniform_int(rng, i, n - 1);
    std::swap(items[static_cast<std::size_t>(i)], items[static_cast<std::size_t>(j)]);
  }
  items.resize(static_cast<std::size_t>(count));
  return items;
}

}  // namespace

void PkConfig::validate() const {
  if (identities_per_batch < 2) throw ConfigError("pk.p: must be >= 2");
  if (samples_per_identity < 2) throw ConfigError("pk.k: must be >= 2");
}

std::vector<Image> HierBatch::full_images() const {
  std::vector<Image> all = images_re;
  all.insert(all.end(), images_bce.begin(), images_bce.end());
  return all;
}

std::vector<int> HierBatch::full_labels() const {
  std::vector<int> all = labels;
  all.insert(all.end(), labels.begin(), labels.end());
  return all;
}

RawBatch sample_pk(const Dataset& dataset, RandomSource& rng, const PkConfig& cfg) {
  cfg.validate();
  std::map<int, std::vector<std::size_t>> by_identity;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    by_identity[dataset.samples[i].identity].push_back(i);
  }
  if (static_cast<int>(by_identity.size()) < cfg.identities_per_batch) {
    throw PreconditionError("sample_pk: dataset has " + std::to_string(by_identity.size()) +
                            " identities, batch needs " + std::to_string(cfg.identities_per_batch));
  }
  std::vector<int> identities;
  for (const auto& entry : by_identity) identities.push_back(entry.first);
  identities = draw_without_replacement(std::move(identities), cfg.identities_per_batch, rng);

  RawBatch batch;
  const int k = cfg.samples_per_identity;
  for (int id : identities) {
    const auto& pool = by_identity.at(id);
    std::vector<std::size_t> picks;
    if (static_cast<int>(pool.size()) >= k) {
      picks = draw_without_replacement(pool, k, rng);
    } else {
      for (int j = 0; j < k; ++j) {
        picks.push_back(pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(pool.size()) - 1))]);
      }
    }
    for (std::size_t idx : picks) {
      const auto& s = dataset.samples[idx];
      batch.images.push_back(s.image);
      batch.labels.push_back(s.identity);
      batch.source_ids.push_back(s.sample_id);
    }
  }
  return batch;
}

HierBatch build_hier_batch(const RawBatch& raw, RandomSource& rng, const ReConfig& re_cfg,
                           const BceConfig& bce_cfg, const Eigen::VectorXd& fill_value) {
  HierBatch batch;
  batch.labels = raw.labels;
  batch.source_ids = raw.source_ids;
  batch.images_re.reserve(raw.images.size());
  for (const Image& img : raw.images) batch.images_re.push_back(apply_re(img, rng, re_cfg, fill_value).first);
  BceResult bce = apply_bce_subbatch(raw.images, rng, bce_cfg, fill_value);
  batch.images_bce = std::move(bce.images);
  batch.bce = HierBatch::Stripe{bce.s, bce.stripe_index, bce.band};
  return batch;
}

HierBatch build_re_pair_batch(const RawBatch& raw, RandomSource& rng, const ReConfig& re_cfg,
                              const Eigen::VectorXd& fill_value) {
  HierBatch batch;
  batch.labels = raw.labels;
  batch.source_ids = raw.source_ids;
  for (const Image& img : raw.images) batch.images_re.push_back(apply_re(img, rng, re_cfg, fill_value).first);
  for (const Image& img : raw.images) batch.images_bce.push_back(apply_re(img, rng, re_cfg, fill_value).first);
  return batch;
}

}  // namespace umfl
