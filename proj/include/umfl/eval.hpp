#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "umfl/erasing.hpp"
#include "umfl/image.hpp"
#include "umfl/model.hpp"

namespace umfl {

struct EvalReport {
  double map = 0.0;
  /// cmc[k] = fraction of queries with a relevant item within the top k + 1.
  std::vector<double> cmc;
  int num_queries = 0;

  double rank(int k) const { return cmc.empty() ? 0.0 : cmc[static_cast<std::size_t>(std::min<int>(k, static_cast<int>(cmc.size())) - 1)]; }
};

/// Gallery order for one query: ascending Euclidean distance, ties by gallery index.
std::vector<Index> rank_gallery(const Eigen::Ref<const Eigen::RowVectorXd>& query,
                                const Eigen::Ref<const RowMatrix<double>>& gallery);

/// Average precision of a ranked relevance list: mean of precision@k over hits.
double average_precision(const std::vector<bool>& relevant_in_rank_order);

/// Retrieval mAP and CMC without re-ranking.
EvalReport evaluate(const Eigen::Ref<const RowMatrix<double>>& query, std::span<const int> query_labels,
                    const Eigen::Ref<const RowMatrix<double>>& gallery, std::span<const int> gallery_labels);

/// Maps a batch of images to an (N x D) embedding matrix.
using EmbedFn = std::function<RowMatrix<double>(std::span<const Image>)>;

struct AttributionMap {
  /// Raw embedding shift per occluded stripe.
  std::vector<double> sensitivity;
  /// Normalized distribution over stripes (all zero when flagged).
  std::vector<double> normalized;
  bool all_zero = false;
  double entropy = 0.0;  ///< nats
};

/// Entropy (nats) of non-negative weights after normalization; 0 for a
/// (near-)zero vector, which is reported through `all_zero`.
AttributionMap attribution_from_sensitivity(std::vector<double> sensitivity);

/// Embedding shift when each of `stripes` horizontal bands is erased in turn.
/// random_uniform fill draws from `rng`.
AttributionMap occlusion_attribution(const EmbedFn& embed, const Image& image, int stripes, FillPolicy fill,
                                     const Eigen::VectorXd& fill_value, RandomSource& rng);
AttributionMap occlusion_attribution(const EmbeddingModel<double>& model, const Image& image, int stripes,
                                     FillPolicy fill, const Eigen::VectorXd& fill_value, RandomSource& rng);

/// Median (even count: mean of the middle two).
double median(std::vector<double> values);

/// Median per-image attribution entropy.
double attribution_entropy_summary(const EmbedFn& embed, std::span<const Image> images, int stripes, FillPolicy fill,
                                   const Eigen::VectorXd& fill_value, RandomSource& rng);

/// Shades each stripe of a copy of the image toward red by its normalized sensitivity.
Image attribution_overlay(const Image& image, const AttributionMap& map);

}  // namespace umfl
