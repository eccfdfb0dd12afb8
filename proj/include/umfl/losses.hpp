#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "umfl/autodiff.hpp"

namespace umfl {

struct LossWeights {
  double sht_sub = 1.0;
  double sht_full = 1.0;
  double focal = 1.0;
  double classification = 1.0;
};

struct LossConfig {
  double margin = 0.3;  ///< hinge variant only
  double alpha = 1.0;   ///< distance-to-probability scale
  double gamma = 2.0;   ///< focal modulating exponent
  double distance_epsilon = 1e-12;
  LossWeights weights;

  void validate() const;
};

struct LossReport {
  double l_sht_sub = 0.0;
  double l_sht_full = 0.0;
  double l_f = 0.0;
  double l_c = 0.0;
  double total = 0.0;
};

/// Floor applied to p inside the focal log.
inline constexpr double kFocalLogFloor = 1e-12;

/// Euclidean distances between the rows of z (N x D). Forward values are exact
/// (zero diagonal, zero for coincident rows); the backward pass divides by
/// sqrt(max(|zi - zj|^2, eps)) so coincident rows receive zero gradient.
template <typename Scalar>
Var<Scalar> pairwise_distances(const Var<Scalar>& z, double eps = 1e-12) {
  if (z.value().rank() != 2 || z.shape()[0] < 1) {
    throw PreconditionError("pairwise_distances: need an N x D matrix with N >= 1, got " + shape_string(z.shape()));
  }
  const Index n = z.shape()[0];
  const auto zm = z.value().matrix();
  Tensor<Scalar> out(Shape{n, n});
  auto d = out.matrix();
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const Scalar v = std::sqrt((zm.row(i) - zm.row(j)).squaredNorm());
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  const Scalar floor = static_cast<Scalar>(eps);
  return z.tape().record("pairwise_distances", std::move(out), {z}, [z, n, floor](Tape<Scalar>& t, const auto& up) {
    const auto zm = z.value().matrix();
    const auto g = Eigen::Map<const RowMatrix<Scalar>>(up.data(), n, n);
    RowMatrix<Scalar> dz = RowMatrix<Scalar>::Zero(n, zm.cols());
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        const auto diff = (zm.row(i) - zm.row(j)).eval();
        const Scalar denom = std::sqrt(std::max(diff.squaredNorm(), floor));
        const Scalar coeff = (g(i, j) + g(j, i)) / denom;
        dz.row(i) += coeff * diff;
        dz.row(j) -= coeff * diff;
      }
    }
    detail::accumulate(t, z, Eigen::Map<const typename Tensor<Scalar>::Array>(dz.data(), dz.size()).eval());
  });
}

/// Hardest positive / negative per anchor, as column indices into the distance matrix.
struct HardestSelection {
  std::vector<Index> positive;
  std::vector<Index> negative;
};

/// Batch-hard mining over the block [offset, offset + labels.size()) of a distance
/// matrix. Ties resolve to the lowest index.
template <typename Derived>
HardestSelection mine_hardest(const Eigen::MatrixBase<Derived>& dist, std::span<const int> labels, Index offset = 0) {
  const Index n = static_cast<Index>(labels.size());
  if (offset < 0 || offset + n > dist.rows() || dist.rows() != dist.cols()) {
    throw PreconditionError("mine_hardest: label block exceeds distance matrix");
  }
  HardestSelection sel;
  for (Index a = 0; a < n; ++a) {
    Index pos = -1, neg = -1;
    for (Index j = 0; j < n; ++j) {
      if (j == a) continue;
      const auto v = dist(offset + a, offset + j);
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(a)]) {
        if (pos < 0 || v > dist(offset + a, pos)) pos = offset + j;
      } else if (neg < 0 || v < dist(offset + a, neg)) {
        neg = offset + j;
      }
    }
    const std::string label = std::to_string(labels[static_cast<std::size_t>(a)]);
    if (pos < 0) throw PreconditionError("batch-hard mining: label " + label + " has no positive in the batch");
    if (neg < 0) throw PreconditionError("batch-hard mining: label " + label + " has no negative in the batch");
    sel.positive.push_back(pos);
    sel.negative.push_back(neg);
  }
  return sel;
}

namespace detail {

/// Per-anchor (hardest positive distance - hardest negative distance), shape (n).
template <typename Scalar>
Var<Scalar> hardest_gaps(const Var<Scalar>& dist, std::span<const int> labels, Index offset) {
  if (dist.value().rank() != 2) throw PreconditionError("batch-hard loss: distance matrix must be square");
  const Index n = dist.shape()[0];
  const HardestSelection sel = mine_hardest(dist.value().matrix(), labels, offset);
  std::vector<Index> pos_idx, neg_idx;
  for (std::size_t a = 0; a < sel.positive.size(); ++a) {
    const Index row = offset + static_cast<Index>(a);
    pos_idx.push_back(row * n + sel.positive[a]);
    neg_idx.push_back(row * n + sel.negative[a]);
  }
  return gather(dist, std::move(pos_idx)) - gather(dist, std::move(neg_idx));
}

template <typename Scalar>
std::span<const int> block_labels(const Var<Scalar>& dist, std::span<const int> labels, Index offset) {
  if (offset == 0 && static_cast<Index>(labels.size()) != dist.shape()[0]) {
    throw PreconditionError("batch-hard loss: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(dist.shape()[0]) + " items");
  }
  return labels;
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& x);

namespace detail {

/// Batch-hard softplus over the block of rows [offset, offset + labels.size()).
template <typename Scalar>
Var<Scalar> block_softplus(const Var<Scalar>& dist, std::span<const int> labels, Index offset) {
  return reduce_mean(softplus(hardest_gaps(dist, labels, offset)));
}

}  // namespace detail

/// log(1 + exp(x)) elementwise, evaluated as max(x, 0) + log1p(exp(-|x|)).
template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& x) {
  return detail::unary(
      "softplus", x, [](Scalar v) { return std::max(v, Scalar(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](Scalar v, Scalar) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
}

/// Single-triplet hinge: max(d_ap - d_an + m, 0).
template <typename Scalar>
Var<Scalar> triplet_vanilla(const Var<Scalar>& d_ap, const Var<Scalar>& d_an, Scalar margin) {
  return relu(d_ap - d_an + margin);
}

/// Mean over anchors of max(hardest_pos - hardest_neg + m, 0).
/// `labels` covers rows [offset, offset + labels.size()) of `dist`.
template <typename Scalar>
Var<Scalar> batch_hard_hinge(const Var<Scalar>& dist, std::span<const int> labels, Scalar margin, Index offset = 0) {
  detail::block_labels(dist, labels, offset);
  return reduce_mean(relu(detail::hardest_gaps(dist, labels, offset) + margin));
}

/// Mean over anchors of softplus(hardest_pos - hardest_neg).
template <typename Scalar>
Var<Scalar> batch_hard_softplus(const Var<Scalar>& dist, std::span<const int> labels, Index offset = 0) {
  detail::block_labels(dist, labels, offset);
  return detail::block_softplus(dist, labels, offset);
}

/// Sub-batch term: each view mined on its own.
template <typename Scalar>
Var<Scalar> l_sht_sub(const Var<Scalar>& z_re, const Var<Scalar>& z_bce, std::span<const int> labels,
                      double eps = 1e-12) {
  return batch_hard_softplus(pairwise_distances(z_re, eps), labels) +
         batch_hard_softplus(pairwise_distances(z_bce, eps), labels);
}

/// Full-batch term: mining crosses views, so an item's erased twin is a positive.
template <typename Scalar>
Var<Scalar> l_sht_full(const Var<Scalar>& z_full, std::span<const int> labels_full, double eps = 1e-12) {
  return batch_hard_softplus(pairwise_distances(z_full, eps), labels_full);
}

/// p = 2 / (1 + exp(-alpha d)) - 1, in [0, 1).
inline double focal_prob(double d, double alpha) { return 2.0 / (1.0 + std::exp(-alpha * d)) - 1.0; }

/// log(1 - p) for the same p, exact where p itself rounds to 1:
/// 1 - p = 2 / (1 + exp(alpha d)).
inline double focal_log_complement(double d, double alpha) {
  const double x = alpha * d;
  // log 2 - log(1 + e^x) = log 2 - (x + log1p(e^-x))
  return std::log(2.0) - (x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)));
}

/// Elementwise -(1 - p)^gamma * log(max(p, floor)) with p = focal_prob(d, alpha).
template <typename Scalar>
Var<Scalar> focal_terms(const Var<Scalar>& d, double alpha, double gamma) {
  const auto term = [alpha, gamma](Scalar dv) {
    const double x = static_cast<double>(dv);
    const double p = std::tanh(0.5 * alpha * x);  // == focal_prob, without cancellation near 0
    const double q_gamma = std::exp(gamma * focal_log_complement(x, alpha));
    return static_cast<Scalar>(-q_gamma * std::log(std::max(p, kFocalLogFloor)));
  };
  const auto dterm = [alpha, gamma](Scalar dv, Scalar) {
    const double x = static_cast<double>(dv);
    const double p = std::tanh(0.5 * alpha * x);
    const double log_q = focal_log_complement(x, alpha);
    const double q = std::exp(log_q);
    const double dp = 0.5 * alpha * q * (1.0 + p);  // dp/dd
    const bool floored = p < kFocalLogFloor;
    const double log_p = std::log(std::max(p, kFocalLogFloor));
    // d/dp [-(1-p)^g log p] = g (1-p)^(g-1) log p - (1-p)^g / p
    double df = 0.0;
    if (gamma != 0.0 && q > 0.0) df += gamma * std::exp((gamma - 1.0) * log_q) * log_p;
    if (!floored) df -= std::exp(gamma * log_q) / p;
    return static_cast<Scalar>(df * dp);
  };
  return detail::unary("focal_terms", d, term, dterm);
}

/// Mean focal term over unordered negative pairs (i < j, different labels),
/// reading distances from `dist`.
template <typename Scalar>
Var<Scalar> focal_loss(const Var<Scalar>& dist, std::span<const int> labels_full, double alpha, double gamma) {
  const Index n = dist.shape()[0];
  if (dist.value().rank() != 2 || static_cast<Index>(labels_full.size()) != n) {
    throw PreconditionError("focal_loss: " + std::to_string(labels_full.size()) + " labels for distance matrix " +
                            shape_string(dist.shape()));
  }
  std::vector<Index> pairs;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (labels_full[static_cast<std::size_t>(i)] != labels_full[static_cast<std::size_t>(j)]) pairs.push_back(i * n + j);
  if (pairs.empty()) throw PreconditionError("focal_loss: batch has no negative pairs");
  return reduce_mean(focal_terms(gather(dist, std::move(pairs)), alpha, gamma));
}

/// Mean softmax cross-entropy over the full batch.
template <typename Scalar>
Var<Scalar> classification_loss(const Var<Scalar>& logits, std::span<const int> labels_full) {
  return softmax_cross_entropy(logits, labels_full);
}

template <typename Scalar>
struct TotalLoss {
  LossReport report;
  Var<Scalar> total;
};

/// Weighted sum of the four terms over a full batch laid out as [re view; second view].
/// The distance matrix of the full batch is computed once; sub-batch mining reads
/// its diagonal blocks. A zero weight skips its term (reported as 0).
template <typename Scalar>
TotalLoss<Scalar> total_loss(const Var<Scalar>& z_full, const Var<Scalar>& logits, std::span<const int> labels,
                             const LossConfig& cfg) {
  cfg.validate();
  const Index b = static_cast<Index>(labels.size());
  if (z_full.value().rank() != 2 || z_full.shape()[0] != 2 * b) {
    throw PreconditionError("total_loss: embeddings " + shape_string(z_full.shape()) + " must have 2 x " +
                            std::to_string(b) + " rows");
  }
  std::vector<int> labels_full(labels.begin(), labels.end());
  labels_full.insert(labels_full.end(), labels.begin(), labels.end());

  Tape<Scalar>& tape = z_full.tape();
  const Var<Scalar> dist = pairwise_distances(z_full, cfg.distance_epsilon);
  TotalLoss<Scalar> out;
  Var<Scalar> total = tape.constant(Tensor<Scalar>::scalar(Scalar(0)));
  auto add_term = [&](double weight, double& slot, auto&& make) {
    if (weight == 0.0) return;
    const Var<Scalar> term = make();
    slot = static_cast<double>(term.item());
    total = total + term * static_cast<Scalar>(weight);
  };
  add_term(cfg.weights.sht_sub, out.report.l_sht_sub, [&] {
    return detail::block_softplus(dist, labels, 0) + detail::block_softplus(dist, labels, b);
  });
  add_term(cfg.weights.sht_full, out.report.l_sht_full, [&] { return batch_hard_softplus<Scalar>(dist, labels_full); });
  add_term(cfg.weights.focal, out.report.l_f, [&] { return focal_loss<Scalar>(dist, labels_full, cfg.alpha, cfg.gamma); });
  add_term(cfg.weights.classification, out.report.l_c, [&] { return classification_loss<Scalar>(logits, labels_full); });
  out.report.total = static_cast<double>(total.item());
  out.total = total;
  return out;
}

}  // namespace umfl
