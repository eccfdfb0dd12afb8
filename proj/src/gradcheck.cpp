#include "umfl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "umfl/losses.hpp"
#include "umfl/model.hpp"
#include "umfl/rng.hpp"

namespace umfl {
namespace {

using T = Tensor<double>;
using V = Var<double>;
using Inputs = std::vector<T>;

T random_tensor(RandomSource& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  T t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.values()[i] = uniform_f64(rng, lo, hi);
  return t;
}

// Fixed random projection so non-scalar outputs reduce to a scalar.
V project(const V& out) {
  SplitMix64 w(0xC0FFEE);
  T weights(out.shape());
  for (Index i = 0; i < weights.size(); ++i) weights.values()[i] = uniform_f64(w, -1.0, 1.0);
  return reduce_sum(out * out.tape().constant(std::move(weights)));
}

std::vector<int> random_labels(RandomSource& rng, int& identities) {
  identities = static_cast<int>(uniform_int(rng, 2, 4));
  const int per = static_cast<int>(uniform_int(rng, 2, 4));
  std::vector<int> labels;
  for (int id = 0; id < identities; ++id)
    for (int k = 0; k < per; ++k) labels.push_back(id);
  // Shuffle so identity blocks are not contiguous.
  for (std::size_t i = labels.size(); i > 1; --i) {
    std::swap(labels[i - 1], labels[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1))]);
  }
  return labels;
}

RowMatrix<double> distances_of(const T& z) {
  const auto m = z.matrix();
  RowMatrix<double> d(m.rows(), m.rows());
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.rows(); ++j) d(i, j) = (m.row(i) - m.row(j)).norm();
  return d;
}

// Smallest separation between the selected hardest positive/negative and the
// runner-up, and the smallest off-diagonal distance, over a label block.
double mining_gap(const RowMatrix<double>& d, std::span<const int> labels, Index offset) {
  const Index n = static_cast<Index>(labels.size());
  double gap = 1e300;
  for (Index a = 0; a < n; ++a) {
    std::vector<double> pos, neg;
    for (Index j = 0; j < n; ++j) {
      if (j == a) continue;
      const double v = d(offset + a, offset + j);
      gap = std::min(gap, v);
      (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(a)] ? pos : neg).push_back(v);
    }
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    if (pos.size() > 1) gap = std::min(gap, pos[pos.size() - 1] - pos[pos.size() - 2]);
    if (neg.size() > 1) gap = std::min(gap, neg[1] - neg[0]);
  }
  return gap;
}

double min_abs(const T& t) { return t.values().abs().minCoeff(); }

struct Case {
  std::string name;
  std::function<Inputs(RandomSource&)> sample;
  std::function<V(Tape<double>&, const std::vector<V>&)> fn;
  std::function<bool(const Inputs&)> accept = [](const Inputs&) { return true; };
};

std::vector<Case> make_cases() {
  std::vector<Case> cases;
  const double margin = 0.3;

  // Loss cases share labels drawn once per suite so the function is fixed per point.
  auto labels_store = std::make_shared<std::vector<int>>();
  auto focal_params = std::make_shared<std::pair<double, double>>(1.0, 2.0);

  cases.push_back({"matmul", [](RandomSource& r) { return Inputs{random_tensor(r, {3, 4}), random_tensor(r, {4, 2})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(matmul(v[0], v[1])); }});
  cases.push_back({"add_bias", [](RandomSource& r) { return Inputs{random_tensor(r, {2, 3, 4}), random_tensor(r, {4})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(add_bias(v[0], v[1])); }});
  cases.push_back({"relu", [](RandomSource& r) { return Inputs{random_tensor(r, {12})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(relu(v[0])); },
                   [](const Inputs& in) { return min_abs(in[0]) > 1e-3; }});
  cases.push_back({"conv2d", [](RandomSource& r) { return Inputs{random_tensor(r, {2, 5, 4, 3}), random_tensor(r, {3, 3, 3, 2})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(conv2d(v[0], v[1])); }});
  cases.push_back({"avgpool2d", [](RandomSource& r) { return Inputs{random_tensor(r, {2, 5, 4, 2})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(avgpool2d(v[0])); }});
  cases.push_back({"flatten", [](RandomSource& r) { return Inputs{random_tensor(r, {2, 3, 2})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(flatten(v[0])); }});
  cases.push_back({"concat_rows", [](RandomSource& r) { return Inputs{random_tensor(r, {2, 3}), random_tensor(r, {3, 3})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(concat_rows(v[0], v[1])); }});
  cases.push_back({"add", [](RandomSource& r) { return Inputs{random_tensor(r, {6}), random_tensor(r, {6})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(v[0] + v[1]); }});
  cases.push_back({"sub", [](RandomSource& r) { return Inputs{random_tensor(r, {6}), random_tensor(r, {6})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(v[0] - v[1]); }});
  cases.push_back({"mul", [](RandomSource& r) { return Inputs{random_tensor(r, {6}), random_tensor(r, {6})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(v[0] * v[1]); }});
  cases.push_back({"scalar_add_mul", [](RandomSource& r) { return Inputs{random_tensor(r, {6})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(2.5 * (v[0] + 0.7) - 1.0); }});
  cases.push_back({"exp", [](RandomSource& r) { return Inputs{random_tensor(r, {6}, -2.0, 2.0)}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(exp(v[0])); }});
  cases.push_back({"log", [](RandomSource& r) { return Inputs{random_tensor(r, {6}, 0.1, 3.0)}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(log(v[0])); }});
  cases.push_back({"sqrt", [](RandomSource& r) { return Inputs{random_tensor(r, {6}, 0.1, 3.0)}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(sqrt(v[0])); }});
  cases.push_back({"max", [](RandomSource& r) { return Inputs{random_tensor(r, {8}), random_tensor(r, {8})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(max(v[0], v[1])); },
                   [](const Inputs& in) { return (in[0].values() - in[1].values()).abs().minCoeff() > 1e-3; }});
  cases.push_back({"max_scalar", [](RandomSource& r) { return Inputs{random_tensor(r, {8})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(max(v[0], 0.3)); },
                   [](const Inputs& in) { return (in[0].values() - 0.3).abs().minCoeff() > 1e-3; }});
  cases.push_back({"reduce_sum", [](RandomSource& r) { return Inputs{random_tensor(r, {3, 4})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return reduce_sum(v[0] * v[0]); }});
  cases.push_back({"reduce_mean", [](RandomSource& r) { return Inputs{random_tensor(r, {3, 4})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return reduce_mean(v[0] * v[0]); }});
  cases.push_back({"softmax_cross_entropy", [](RandomSource& r) { return Inputs{random_tensor(r, {5, 4}, -3.0, 3.0)}; },
                   [](Tape<double>&, const std::vector<V>& v) {
                     const std::vector<int> y{0, 3, 1, 1, 2};
                     return softmax_cross_entropy(v[0], y);
                   }});
  cases.push_back({"softplus", [](RandomSource& r) { return Inputs{random_tensor(r, {8}, -4.0, 4.0)}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(softplus(v[0])); }});
  cases.push_back({"gather", [](RandomSource& r) { return Inputs{random_tensor(r, {3, 3})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(gather(v[0], {0, 4, 4, 8, 2})); }});

  // Losses. Each sample() draws the labels for that point into labels_store.
  cases.push_back({"pairwise_distances", [](RandomSource& r) { return Inputs{random_tensor(r, {5, 3})}; },
                   [](Tape<double>&, const std::vector<V>& v) { return project(pairwise_distances(v[0])); },
                   [](const Inputs& in) {
                     const auto d = distances_of(in[0]);
                     return (d + RowMatrix<double>::Identity(d.rows(), d.rows())).minCoeff() > 1e-3;
                   }});
  cases.push_back({"triplet_vanilla", [](RandomSource& r) { return Inputs{random_tensor(r, {1}, 0.0, 2.0), random_tensor(r, {1}, 0.0, 2.0)}; },
                   [margin](Tape<double>&, const std::vector<V>& v) { return reduce_sum(triplet_vanilla(v[0], v[1], margin)); },
                   [margin](const Inputs& in) { return std::abs(in[0].item() - in[1].item() + margin) > 1e-3; }});

  auto embedding_sample = [labels_store](RandomSource& r) {
    int ids = 0;
    *labels_store = random_labels(r, ids);
    const Index d = uniform_int(r, 2, 8);
    return Inputs{random_tensor(r, {static_cast<Index>(labels_store->size()), d})};
  };
  auto mining_ok = [labels_store](const Inputs& in) { return mining_gap(distances_of(in[0]), *labels_store, 0) > 1e-3; };

  cases.push_back({"batch_hard_hinge", embedding_sample,
                   [labels_store, margin](Tape<double>&, const std::vector<V>& v) {
                     return batch_hard_hinge(pairwise_distances(v[0]), *labels_store, margin);
                   },
                   [labels_store, mining_ok, margin](const Inputs& in) {
                     if (!mining_ok(in)) return false;
                     const auto d = distances_of(in[0]);
                     const auto sel = mine_hardest(d, *labels_store);
                     for (std::size_t a = 0; a < sel.positive.size(); ++a) {
                       const Index i = static_cast<Index>(a);
                       if (std::abs(d(i, sel.positive[a]) - d(i, sel.negative[a]) + margin) < 1e-3) return false;
                     }
                     return true;
                   }});
  cases.push_back({"batch_hard_softplus", embedding_sample,
                   [labels_store](Tape<double>&, const std::vector<V>& v) {
                     return batch_hard_softplus(pairwise_distances(v[0]), *labels_store);
                   },
                   mining_ok});
  cases.push_back({"l_sht_sub",
                   [embedding_sample](RandomSource& r) {
                     Inputs in = embedding_sample(r);
                     in.push_back(random_tensor(r, in[0].shape()));
                     return in;
                   },
                   [labels_store](Tape<double>&, const std::vector<V>& v) { return l_sht_sub(v[0], v[1], *labels_store); },
                   [labels_store](const Inputs& in) {
                     return mining_gap(distances_of(in[0]), *labels_store, 0) > 1e-3 &&
                            mining_gap(distances_of(in[1]), *labels_store, 0) > 1e-3;
                   }});

  auto full_sample = [labels_store](RandomSource& r) {
    int ids = 0;
    std::vector<int> sub = random_labels(r, ids);
    *labels_store = sub;
    labels_store->insert(labels_store->end(), sub.begin(), sub.end());
    const Index d = uniform_int(r, 2, 8);
    return Inputs{random_tensor(r, {static_cast<Index>(labels_store->size()), d})};
  };
  auto full_ok = [labels_store](const Inputs& in) {
    const auto d = distances_of(in[0]);
    const std::size_t b = labels_store->size() / 2;
    const std::span<const int> sub(labels_store->data(), b);
    return mining_gap(d, *labels_store, 0) > 1e-3 && mining_gap(d, sub, 0) > 1e-3 &&
           mining_gap(d, sub, static_cast<Index>(b)) > 1e-3;
  };
  cases.push_back({"l_sht_full", full_sample,
                   [labels_store](Tape<double>&, const std::vector<V>& v) { return l_sht_full(v[0], *labels_store); },
                   full_ok});
  cases.push_back({"focal_loss",
                   [full_sample, focal_params](RandomSource& r) {
                     Inputs in = full_sample(r);
                     const double gammas[] = {0.0, 0.5, 1.0, 2.0, 3.0};
                     *focal_params = {uniform_f64(r, 0.5, 2.0), gammas[uniform_int(r, 0, 4)]};
                     return in;
                   },
                   [labels_store, focal_params](Tape<double>&, const std::vector<V>& v) {
                     return focal_loss(pairwise_distances(v[0]), *labels_store, focal_params->first, focal_params->second);
                   },
                   [](const Inputs& in) {
                     const auto d = distances_of(in[0]);
                     return (d + RowMatrix<double>::Identity(d.rows(), d.rows())).minCoeff() > 1e-3;
                   }});
  cases.push_back({"classification_loss",
                   [labels_store](RandomSource& r) {
                     int ids = 0;
                     *labels_store = random_labels(r, ids);
                     return Inputs{random_tensor(r, {static_cast<Index>(labels_store->size()), ids + 1}, -3.0, 3.0)};
                   },
                   [labels_store](Tape<double>&, const std::vector<V>& v) { return classification_loss(v[0], *labels_store); }});
  cases.push_back({"total_loss",
                   [full_sample](RandomSource& r) {
                     Inputs in = full_sample(r);
                     in.push_back(random_tensor(r, {in[0].shape()[0], 5}, -3.0, 3.0));
                     return in;
                   },
                   [labels_store](Tape<double>&, const std::vector<V>& v) {
                     const std::span<const int> sub(labels_store->data(), labels_store->size() / 2);
                     return total_loss(v[0], v[1], sub, LossConfig{}).total;
                   },
                   full_ok});

  // Tiny end-to-end model: every parameter against finite differences.
  auto model = std::make_shared<EmbeddingModel<double>>(ModelConfig{Arch::conv_small, 4, 3, 4, 4, 1});
  auto images = std::make_shared<T>();
  const std::vector<int> sub_labels{0, 0, 1, 1, 2, 2};
  auto model_loss = [model, images, sub_labels](Tape<double>& tape, const std::vector<V>& v) {
    const typename EmbeddingModel<double>::Bound bound{v};
    const V z = model->embed(bound, tape.constant(*images));
    return total_loss(z, model->classify(bound, z), sub_labels, LossConfig{}).total;
  };
  cases.push_back({"full_model",
                   [model, images](RandomSource& r) {
                     *images = random_tensor(r, {12, 4, 4, 1}, 0.0, 1.0);
                     model->init_he_uniform(r);
                     Inputs in;
                     for (const auto& p : model->parameters()) {
                       in.push_back(p.value.rank() == 1 ? random_tensor(r, p.value.shape(), -0.1, 0.1) : p.value);
                     }
                     return in;
                   },
                   model_loss,
                   [model, images, sub_labels](const Inputs& in) {
                     Tape<double> tape;
                     std::vector<V> vars;
                     for (const auto& t : in) vars.push_back(tape.constant(t));
                     const V z = model->embed({vars}, tape.constant(*images));
                     for (std::size_t id = 1; id < tape.size(); ++id) {
                       if (std::string(tape.op_name(id)) == "relu" && min_abs(tape.value_at(id - 1)) <= 1e-4) return false;
                     }
                     std::vector<int> full = sub_labels;
                     full.insert(full.end(), sub_labels.begin(), sub_labels.end());
                     const auto d = distances_of(z.value());
                     return mining_gap(d, full, 0) > 1e-3 && mining_gap(d, sub_labels, 0) > 1e-3 &&
                            mining_gap(d, sub_labels, 6) > 1e-3;
                   }});
  return cases;
}

}  // namespace

double gradient_error(const TapeFunction& f, const std::vector<Tensor<double>>& inputs) {
  std::vector<Tensor<double>::Array> analytic;
  {
    Tape<double> tape;
    std::vector<V> vars;
    for (const auto& in : inputs) vars.push_back(tape.variable(in));
    const V out = f(tape, vars);
    tape.backward(out);
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }
  auto evaluate = [&](const std::vector<Tensor<double>>& point) {
    Tape<double> tape;
    std::vector<V> vars;
    for (const auto& in : point) vars.push_back(tape.constant(in));
    return f(tape, vars).item();
  };

  double worst = 0.0;
  std::vector<Tensor<double>> point = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    double max_diff = 0.0, scale = 0.0;
    for (Index i = 0; i < inputs[k].size(); ++i) {
      const double theta = inputs[k].values()[i];
      const double h = 1e-5 * std::max(1.0, std::abs(theta));
      point[k].values()[i] = theta + h;
      const double up = evaluate(point);
      point[k].values()[i] = theta - h;
      const double down = evaluate(point);
      point[k].values()[i] = theta;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      max_diff = std::max(max_diff, std::abs(a - numeric));
      scale = std::max({scale, std::abs(a), std::abs(numeric)});
    }
    if (scale > 0.0) worst = std::max(worst, max_diff / scale);
  }
  return worst;
}

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, int points) {
  SplitMix64 rng(seed);
  std::vector<GradCheckResult> results;
  for (const Case& c : make_cases()) {
    GradCheckResult r{c.name, 0, 0.0, true};
    int attempts = 0;
    while (r.points < points) {
      if (++attempts > 100 * points) {
        r.passed = false;  // could not find enough non-degenerate points
        break;
      }
      const Inputs in = c.sample(rng);
      if (!c.accept(in)) continue;
      const double err = gradient_error(c.fn, in);
      r.max_error = std::max(r.max_error, err);
      ++r.points;
    }
    r.passed = r.passed && r.max_error < kGradTolerance;
    results.push_back(r);
  }
  return results;
}

}  // namespace umfl
