#pragma once

// Penalized two-centroid clustering of class embeddings.
//
// Two softmax distributions over classes, p_train and p_test, are induced by
// learnable centroids:  p(i) ∝ exp(-||phi_i - mu||^2).  The objective is
//
//   J = -sum_i log(0.5 * (p_train(i) + p_test(i))) + lambda * (D(p_train || p_test) - R)^2
//
// where D is KL or symmetrized KL. Minimizing J with SGD + momentum pulls the
// two distributions to a prescribed divergence R while still explaining the
// class embeddings; classes are then split by log(p_train / p_test).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "taskgen/divergence.hpp"
#include "taskgen/embeddings.hpp"
#include "taskgen/error.hpp"
#include "taskgen/rng.hpp"

namespace taskgen {

enum class AssignmentRule { Fraction, Ratio };

struct AtgConfig {
  double target_divergence = 0.0;  // R, in nats
  double penalty_weight = 1.0;     // lambda
  double learning_rate = 0.1;
  double momentum = 0.9;
  std::size_t iterations = 7000;
  std::uint64_t seed = 0;
  DivergenceKind divergence = DivergenceKind::SymmetrizedKL;
  double train_fraction = 0.6;
  AssignmentRule rule = AssignmentRule::Fraction;
  std::size_t trace_stride = 1;

  void validate() const {
    if (!(target_divergence >= 0.0) || !std::isfinite(target_divergence))
      throw InvalidArgument("target divergence must be a finite non-negative number");
    if (!(penalty_weight >= 0.0) || !std::isfinite(penalty_weight))
      throw InvalidArgument("penalty weight must be a finite non-negative number");
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
    if (iterations == 0) throw InvalidArgument("iterations must be positive");
    if (divergence != DivergenceKind::KullbackLeibler && divergence != DivergenceKind::SymmetrizedKL)
      throw InvalidArgument("the objective supports only kl and symkl divergences");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train fraction must lie in (0, 1)");
    if (trace_stride == 0) throw InvalidArgument("trace stride must be positive");
  }
};

/// Learnable centroids plus their momentum buffers.
struct CentroidPair {
  Eigen::VectorXd mu_train;
  Eigen::VectorXd mu_test;
  Eigen::VectorXd velocity_train;
  Eigen::VectorXd velocity_test;

  static CentroidPair at(Eigen::VectorXd train, Eigen::VectorXd test) {
    CentroidPair c;
    c.velocity_train = Eigen::VectorXd::Zero(train.size());
    c.velocity_test = Eigen::VectorXd::Zero(test.size());
    c.mu_train = std::move(train);
    c.mu_test = std::move(test);
    return c;
  }
};

struct ObjectiveValue {
  double total = 0.0;
  double nll = 0.0;
  double penalty = 0.0;
  double divergence = 0.0;  // achieved D
};

struct CentroidGradient {
  Eigen::VectorXd mu_train;
  Eigen::VectorXd mu_test;
};

struct AssignmentScores {
  std::vector<ClassId> class_ids;
  Eigen::VectorXd scores;  // log p_train - log p_test
};

struct PartitionMeta {
  double target_divergence = 0.0;
  double achieved_divergence = 0.0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  DivergenceKind divergence_kind = DivergenceKind::SymmetrizedKL;
  double train_fraction = 0.0;
};

struct Partition {
  std::vector<ClassId> train;
  std::vector<ClassId> validation;
  std::vector<ClassId> test;
  PartitionMeta meta;
};

namespace detail {

struct ObjectiveState {
  ObjectiveValue value;
  Eigen::VectorXd logit_grad_train;  // dJ/ds_train where s = -||phi - mu||^2
  Eigen::VectorXd logit_grad_test;
};

inline void check_dims(const ClassEmbeddingSet& set, const CentroidPair& c) {
  if (set.size() == 0) throw InvalidArgument("objective: empty class set");
  if (static_cast<std::size_t>(c.mu_train.size()) != set.dim() ||
      static_cast<std::size_t>(c.mu_test.size()) != set.dim()) {
    throw InvalidArgument("centroid dimension does not match embedding dimension " + std::to_string(set.dim()));
  }
}

inline ObjectiveState evaluate(const ClassEmbeddingSet& set, const CentroidPair& c, const AtgConfig& config,
                               bool with_gradient) {
  check_dims(set, c);
  const Eigen::ArrayXd log_a = log_softmax(-squared_distances(set, c.mu_train)).array();
  const Eigen::ArrayXd log_b = log_softmax(-squared_distances(set, c.mu_test)).array();
  const Eigen::ArrayXd a = log_a.exp();
  const Eigen::ArrayXd b = log_b.exp();

  // log(a_i + b_i), computed stably.
  const Eigen::ArrayXd hi = log_a.max(log_b);
  const Eigen::ArrayXd log_sum = hi + ((log_a - hi).exp() + (log_b - hi).exp()).log();

  ObjectiveState s;
  const auto m = static_cast<double>(set.size());
  s.value.nll = -(log_sum.sum() - m * std::log(2.0));

  const Eigen::ArrayXd log_ratio = log_a - log_b;
  const double kl_ab = (a * log_ratio).sum();
  const double kl_ba = -(b * log_ratio).sum();
  const bool symmetric = config.divergence == DivergenceKind::SymmetrizedKL;
  s.value.divergence = symmetric ? kl_ab + kl_ba : kl_ab;
  const double gap = s.value.divergence - config.target_divergence;
  s.value.penalty = config.penalty_weight * gap * gap;
  s.value.total = s.value.nll + s.value.penalty;
  if (!with_gradient) return s;

  // Mixture responsibilities r_i = a_i / (a_i + b_i).
  const Eigen::ArrayXd r = (log_a - log_sum).exp();
  const Eigen::ArrayXd q = (log_b - log_sum).exp();
  Eigen::ArrayXd g_a = -(r - a * r.sum());
  Eigen::ArrayXd g_b = -(q - b * q.sum());

  const double coeff = 2.0 * config.penalty_weight * gap;
  if (coeff != 0.0) {
    Eigen::ArrayXd d_a = a * (log_ratio - kl_ab);
    Eigen::ArrayXd d_b = b - a;
    if (symmetric) {
      d_a += a - b;
      d_b += b * (-log_ratio - kl_ba);
    }
    g_a += coeff * d_a;
    g_b += coeff * d_b;
  }
  s.logit_grad_train = g_a.matrix();
  s.logit_grad_test = g_b.matrix();
  return s;
}

/// Chain rule through s_i = -||phi_i - mu||^2:  ds_i/dmu = 2 (phi_i - mu).
inline Eigen::VectorXd centroid_gradient(const ClassEmbeddingSet& set, const Eigen::VectorXd& mu,
                                         const Eigen::VectorXd& logit_grad) {
  const double total = logit_grad.sum();
  return 2.0 * (set.means.transpose() * logit_grad - total * mu);
}

}  // namespace detail

inline ObjectiveValue objective(const ClassEmbeddingSet& set, const CentroidPair& centroids, const AtgConfig& config) {
  return detail::evaluate(set, centroids, config, false).value;
}

/// Analytic gradient of the objective with respect to both centroids.
inline CentroidGradient gradient(const ClassEmbeddingSet& set, const CentroidPair& centroids,
                                 const AtgConfig& config) {
  const auto s = detail::evaluate(set, centroids, config, true);
  return {detail::centroid_gradient(set, centroids.mu_train, s.logit_grad_train),
          detail::centroid_gradient(set, centroids.mu_test, s.logit_grad_test)};
}

/// mu_train starts at a uniformly drawn class embedding and mu_test at the
/// class farthest from it (lowest index on ties); both get N(0, 1e-3^2)
/// jitter per coordinate.
inline CentroidPair initial_centroids(const ClassEmbeddingSet& set, std::uint64_t seed) {
  if (set.size() == 0) throw InvalidArgument("initial_centroids: empty class set");
  Rng rng(seed);
  const auto first = static_cast<Eigen::Index>(rng.below(set.size()));
  Eigen::VectorXd train = set.means.row(first).transpose();
  Eigen::Index farthest = 0;
  squared_distances(set, train).maxCoeff(&farthest);
  Eigen::VectorXd test = set.means.row(farthest).transpose();
  for (Eigen::Index j = 0; j < train.size(); ++j) train(j) += 1e-3 * rng.normal();
  for (Eigen::Index j = 0; j < test.size(); ++j) test(j) += 1e-3 * rng.normal();
  return CentroidPair::at(std::move(train), std::move(test));
}

struct OptimizeResult {
  CentroidPair centroids;
  std::vector<ObjectiveValue> trace;  // value after each recorded step
};

/// Full-batch SGD with heavy-ball momentum:
///   v <- momentum * v - lr * grad;  mu <- mu + v
/// for exactly config.iterations steps.
inline OptimizeResult optimize(const ClassEmbeddingSet& set, const AtgConfig& config) {
  config.validate();
  if (!set.normalized) throw InvalidArgument("optimize: class embeddings must be unit-normalized");
  if (set.size() < 2) throw InvalidArgument("optimize: need at least two classes");

  OptimizeResult result;
  result.centroids = initial_centroids(set, config.seed);
  auto& c = result.centroids;
  result.trace.reserve(config.iterations / config.trace_stride + 1);

  auto record = [&](std::size_t step, const ObjectiveValue& v) {
    if (!std::isfinite(v.total) || !std::isfinite(v.divergence)) {
      throw NumericError("non-finite objective after iteration " + std::to_string(step));
    }
    if (step % config.trace_stride == 0 || step == config.iterations) result.trace.push_back(v);
  };

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto s = detail::evaluate(set, c, config, true);
    if (it > 0) record(it, s.value);
    else if (!std::isfinite(s.value.total)) throw NumericError("non-finite objective at initialization");
    const Eigen::VectorXd g_train = detail::centroid_gradient(set, c.mu_train, s.logit_grad_train);
    const Eigen::VectorXd g_test = detail::centroid_gradient(set, c.mu_test, s.logit_grad_test);
    c.velocity_train = config.momentum * c.velocity_train - config.learning_rate * g_train;
    c.velocity_test = config.momentum * c.velocity_test - config.learning_rate * g_test;
    c.mu_train += c.velocity_train;
    c.mu_test += c.velocity_test;
  }
  record(config.iterations, objective(set, c, config));
  return result;
}

/// Per-class log(p_train / p_test). The softmax normalizers are shared by all
/// classes, so the ranking equals that of ||phi - mu_test||^2 - ||phi - mu_train||^2.
inline AssignmentScores scores(const ClassEmbeddingSet& set, const CentroidPair& centroids) {
  detail::check_dims(set, centroids);
  AssignmentScores out;
  out.class_ids = set.class_ids;
  out.scores = log_softmax(-squared_distances(set, centroids.mu_train)) -
               log_softmax(-squared_distances(set, centroids.mu_test));
  return out;
}

namespace detail {

/// Class positions ordered by score descending; equal scores are ordered by
/// seeded random keys.
inline std::vector<std::size_t> rank_descending(const AssignmentScores& s, std::uint64_t seed) {
  const std::size_t m = s.class_ids.size();
  Rng rng(seed);
  std::vector<std::uint64_t> keys(m);
  for (auto& k : keys) k = rng();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const double sx = s.scores(static_cast<Eigen::Index>(x));
    const double sy = s.scores(static_cast<Eigen::Index>(y));
    if (sx != sy) return sx > sy;
    if (keys[x] != keys[y]) return keys[x] < keys[y];
    return x < y;
  });
  return order;
}

/// Assigns `remaining` (ascending score) alternately to test then validation.
inline void alternate_tail(const AssignmentScores& s, const std::vector<std::size_t>& ascending, Partition& p) {
  for (std::size_t k = 0; k < ascending.size(); ++k) {
    (k % 2 == 0 ? p.test : p.validation).push_back(s.class_ids[ascending[k]]);
  }
}

inline void sort_lists(Partition& p) {
  std::sort(p.train.begin(), p.train.end());
  std::sort(p.validation.begin(), p.validation.end());
  std::sort(p.test.begin(), p.test.end());
}

}  // namespace detail

/// Number of training classes for M classes: floor(train_fraction * M).
/// The small offset keeps exact products such as 0.6 * 100 from rounding down.
inline std::size_t train_count(std::size_t num_classes, double train_fraction) {
  return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(num_classes) + 1e-9));
}

/// Top floor(train_fraction * M) classes by score go to train; the rest,
/// from the lowest score upward, alternate test, validation, test, ...
inline Partition assign(const AssignmentScores& s, double train_fraction, std::uint64_t seed) {
  const std::size_t m = s.class_ids.size();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train fraction must lie in (0, 1)");
  if (static_cast<std::size_t>(s.scores.size()) != m) throw InvalidArgument("assign: score/id length mismatch");
  const std::size_t n_train = train_count(m, train_fraction);
  if (m < 5 || n_train == 0 || m - n_train < 2) {
    throw InvalidArgument("assign: " + std::to_string(m) + " classes with train fraction " +
                          std::to_string(train_fraction) + " cannot form train/validation/test splits");
  }
  for (Eigen::Index i = 0; i < s.scores.size(); ++i) {
    if (!std::isfinite(s.scores(i))) throw InvalidArgument("assign: non-finite score");
  }
  const auto order = detail::rank_descending(s, seed);
  Partition p;
  p.meta.train_fraction = train_fraction;
  p.meta.seed = seed;
  for (std::size_t k = 0; k < n_train; ++k) p.train.push_back(s.class_ids[order[k]]);
  detail::alternate_tail(s, std::vector<std::size_t>(order.rbegin(), order.rend() - static_cast<std::ptrdiff_t>(n_train)), p);
  detail::sort_lists(p);
  return p;
}

/// Ratio rule: score > 0 goes to train, score < 0 to the held-out side, exact
/// zeros by a seeded coin flip. Held-out classes alternate test/validation as
/// in assign().
inline Partition assign_by_ratio(const AssignmentScores& s, std::uint64_t seed) {
  const std::size_t m = s.class_ids.size();
  const auto order = detail::rank_descending(s, seed);
  Rng coin(mix_seed(seed, 0x7261746fULL));
  std::vector<std::size_t> train;
  std::vector<std::size_t> held_out;
  for (const std::size_t i : order) {
    const double v = s.scores(static_cast<Eigen::Index>(i));
    const bool to_train = v > 0.0 || (v == 0.0 && (coin() >> 63) != 0);
    (to_train ? train : held_out).push_back(i);
  }
  if (train.empty() || held_out.size() < 2) {
    throw InvalidArgument("assign_by_ratio: degenerate split (" + std::to_string(train.size()) + " train, " +
                          std::to_string(held_out.size()) + " held out)");
  }
  Partition p;
  p.meta.seed = seed;
  p.meta.train_fraction = static_cast<double>(train.size()) / static_cast<double>(m);
  for (const std::size_t i : train) p.train.push_back(s.class_ids[i]);
  std::sort(held_out.begin(), held_out.end(), [&](std::size_t x, std::size_t y) {
    const double sx = s.scores(static_cast<Eigen::Index>(x));
    const double sy = s.scores(static_cast<Eigen::Index>(y));
    return sx != sy ? sx < sy : x < y;
  });
  detail::alternate_tail(s, held_out, p);
  detail::sort_lists(p);
  return p;
}

struct GenerationResult {
  Partition partition;
  CentroidPair centroids;
  ObjectiveValue final_value;
};

/// normalize -> optimize -> score -> assign.
inline GenerationResult generate(const ClassEmbeddingSet& set, const AtgConfig& config) {
  config.validate();
  const ClassEmbeddingSet unit = set.normalized ? set : normalize_unit(set);
  auto opt = optimize(unit, config);
  const auto s = scores(unit, opt.centroids);
  const std::uint64_t assign_seed = mix_seed(config.seed, 1);
  GenerationResult out;
  out.partition = config.rule == AssignmentRule::Fraction ? assign(s, config.train_fraction, assign_seed)
                                                          : assign_by_ratio(s, assign_seed);
  out.final_value = opt.trace.back();
  auto& meta = out.partition.meta;
  meta.target_divergence = config.target_divergence;
  meta.achieved_divergence = out.final_value.divergence;
  meta.lambda = config.penalty_weight;
  meta.seed = config.seed;
  meta.iterations = config.iterations;
  meta.divergence_kind = config.divergence;
  if (config.rule == AssignmentRule::Fraction) meta.train_fraction = config.train_fraction;
  out.centroids = std::move(opt.centroids);
  return out;
}

inline Partition generate_partition(const ClassEmbeddingSet& set, const AtgConfig& config) {
  return generate(set, config).partition;
}

}  // namespace taskgen
