#include "umfl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace umfl {

std::vector<Index> rank_gallery(const Eigen::Ref<const Eigen::RowVectorXd>& query,
                                const Eigen::Ref<const RowMatrix<double>>& gallery) {
  if (query.size() != gallery.cols()) throw PreconditionError("rank_gallery: embedding width mismatch");
  const Eigen::VectorXd dist = (gallery.rowwise() - query).rowwise().squaredNorm();
  std::vector<Index> order(static_cast<std::size_t>(gallery.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return dist[a] < dist[b]; });
  return order;
}

double average_precision(const std::vector<bool>& relevant_in_rank_order) {
  double hits = 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < relevant_in_rank_order.size(); ++k) {
    if (!relevant_in_rank_order[k]) continue;
    hits += 1.0;
    sum += hits / static_cast<double>(k + 1);
  }
  return hits > 0.0 ? sum / hits : 0.0;
}

EvalReport evaluate(const Eigen::Ref<const RowMatrix<double>>& query, std::span<const int> query_labels,
                    const Eigen::Ref<const RowMatrix<double>>& gallery, std::span<const int> gallery_labels) {
  if (static_cast<Index>(query_labels.size()) != query.rows() ||
      static_cast<Index>(gallery_labels.size()) != gallery.rows()) {
    throw PreconditionError("evaluate: label count does not match embedding rows");
  }
  if (query.rows() == 0 || gallery.rows() == 0) throw PreconditionError("evaluate: empty query or gallery");
  std::map<int, int> gallery_count;
  for (int g : gallery_labels) ++gallery_count[g];
  for (int q : query_labels) {
    if (!gallery_count.contains(q)) {
      throw PreconditionError("evaluate: query identity " + std::to_string(q) + " absent from gallery");
    }
  }

  EvalReport report;
  report.num_queries = static_cast<int>(query.rows());
  report.cmc.assign(static_cast<std::size_t>(gallery.rows()), 0.0);
  double ap_sum = 0.0;
  for (Index qi = 0; qi < query.rows(); ++qi) {
    const auto order = rank_gallery(query.row(qi), gallery);
    std::vector<bool> relevant(order.size());
    std::size_t first_hit = order.size();
    for (std::size_t k = 0; k < order.size(); ++k) {
      relevant[k] = gallery_labels[static_cast<std::size_t>(order[k])] == query_labels[static_cast<std::size_t>(qi)];
      if (relevant[k] && first_hit == order.size()) first_hit = k;
    }
    ap_sum += average_precision(relevant);
    for (std::size_t k = first_hit; k < report.cmc.size(); ++k) report.cmc[k] += 1.0;
  }
  const double nq = static_cast<double>(query.rows());
  report.map = ap_sum / nq;
  for (double& c : report.cmc) c /= nq;
  return report;
}

AttributionMap attribution_from_sensitivity(std::vector<double> sensitivity) {
  AttributionMap map;
  map.sensitivity = std::move(sensitivity);
  map.normalized.assign(map.sensitivity.size(), 0.0);
  double total = 0.0;
  for (double s : map.sensitivity) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw NumericError("attribution: sensitivity must be finite and >= 0");
    total += s;
  }
  if (total < 1e-9) {
    map.all_zero = true;
    return map;
  }
  for (std::size_t i = 0; i < map.sensitivity.size(); ++i) {
    const double q = map.sensitivity[i] / total;
    map.normalized[i] = q;
    if (q > 0.0) map.entropy -= q * std::log(q);
  }
  return map;
}

AttributionMap occlusion_attribution(const EmbedFn& embed, const Image& image, int stripes, FillPolicy fill,
                                     const Eigen::VectorXd& fill_value, RandomSource& rng) {
  if (stripes < 2 || stripes > image.height()) {
    throw PreconditionError("occlusion_attribution: stripe count " + std::to_string(stripes) + " invalid for height " +
                            std::to_string(image.height()));
  }
  std::vector<Image> batch;
  batch.reserve(static_cast<std::size_t>(stripes) + 1);
  batch.push_back(image);
  for (int i = 0; i < stripes; ++i) {
    Image occluded = image;
    erase_rows(occluded, stripe_band(image.height(), stripes, i), fill, fill_value, rng);
    batch.push_back(std::move(occluded));
  }
  const RowMatrix<double> z = embed(batch);
  if (z.rows() != static_cast<Index>(batch.size())) throw PreconditionError("occlusion_attribution: embed returned wrong row count");
  std::vector<double> sensitivity;
  for (int i = 0; i < stripes; ++i) sensitivity.push_back((z.row(0) - z.row(i + 1)).norm());
  return attribution_from_sensitivity(std::move(sensitivity));
}

AttributionMap occlusion_attribution(const EmbeddingModel<double>& model, const Image& image, int stripes,
                                     FillPolicy fill, const Eigen::VectorXd& fill_value, RandomSource& rng) {
  return occlusion_attribution([&model](std::span<const Image> imgs) { return model.embed_images(imgs); }, image,
                               stripes, fill, fill_value, rng);
}

double median(std::vector<double> values) {
  if (values.empty()) throw PreconditionError("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

double attribution_entropy_summary(const EmbedFn& embed, std::span<const Image> images, int stripes, FillPolicy fill,
                                   const Eigen::VectorXd& fill_value, RandomSource& rng) {
  if (images.empty()) throw PreconditionError("attribution_entropy_summary: empty image set");
  std::vector<double> entropies;
  for (const Image& img : images) entropies.push_back(occlusion_attribution(embed, img, stripes, fill, fill_value, rng).entropy);
  return median(std::move(entropies));
}

Image attribution_overlay(const Image& image, const AttributionMap& map) {
  Image out = image;
  const int stripes = static_cast<int>(map.normalized.size());
  double peak = 0.0;
  for (double q : map.normalized) peak = std::max(peak, q);
  for (int i = 0; i < stripes; ++i) {
    const double w = peak > 0.0 ? 0.6 * map.normalized[static_cast<std::size_t>(i)] / peak : 0.0;
    const RowBand band = stripe_band(image.height(), stripes, i);
    for (int r = band.begin; r < band.end; ++r)
      for (int c = 0; c < image.width(); ++c)
        for (int ch = 0; ch < image.channels(); ++ch) {
          const double target = (ch == 0) ? 1.0 : 0.0;
          out.at(r, c, ch) = (1.0 - w) * image.at(r, c, ch) + w * target;
        }
  }
  return out;
}

}  // namespace umfl
