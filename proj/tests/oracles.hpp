#pragma once

// Independent reference computations used only by tests. Nothing here calls
// into the code paths it checks beyond plain data types.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <vector>

#include "taskgen/taskgen.hpp"

namespace oracle {

using taskgen::ClassEmbeddingSet;
using taskgen::ClassId;
using taskgen::RowMatrix;

/// Softmax of -||phi_i - mu||^2 by direct exponentiation in long double.
inline std::vector<long double> softmax_probs(const ClassEmbeddingSet& set, const Eigen::VectorXd& mu) {
  std::vector<long double> w(set.size());
  long double z = 0.0L;
  for (std::size_t i = 0; i < set.size(); ++i) {
    long double d = 0.0L;
    for (std::size_t j = 0; j < set.dim(); ++j) {
      const long double diff = static_cast<long double>(set.means(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) -
                               static_cast<long double>(mu(static_cast<Eigen::Index>(j)));
      d += diff * diff;
    }
    w[i] = std::exp(-d);
    z += w[i];
  }
  for (auto& v : w) v /= z;
  return w;
}

inline long double kl(const std::vector<long double>& p, const std::vector<long double>& q) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

struct Objective {
  long double total, nll, penalty, divergence;
};

/// Straight-line evaluation of the penalized objective.
inline Objective objective(const ClassEmbeddingSet& set, const Eigen::VectorXd& mu_train,
                           const Eigen::VectorXd& mu_test, double target, double lambda, bool symmetric) {
  const auto a = softmax_probs(set, mu_train);
  const auto b = softmax_probs(set, mu_test);
  Objective o{};
  for (std::size_t i = 0; i < a.size(); ++i) o.nll -= std::log(0.5L * (a[i] + b[i]));
  o.divergence = symmetric ? kl(a, b) + kl(b, a) : kl(a, b);
  o.penalty = lambda * (o.divergence - target) * (o.divergence - target);
  o.total = o.nll + o.penalty;
  return o;
}

/// Central finite differences of the objective, h = 1e-5.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> finite_difference_gradient(const ClassEmbeddingSet& set,
                                                                               const taskgen::CentroidPair& c,
                                                                               const taskgen::AtgConfig& config,
                                                                               double h = 1e-5) {
  Eigen::VectorXd g_train(c.mu_train.size()), g_test(c.mu_test.size());
  for (Eigen::Index j = 0; j < c.mu_train.size(); ++j) {
    auto plus = c, minus = c;
    plus.mu_train(j) += h;
    minus.mu_train(j) -= h;
    g_train(j) = (taskgen::objective(set, plus, config).total - taskgen::objective(set, minus, config).total) / (2 * h);
    plus = c;
    minus = c;
    plus.mu_test(j) += h;
    minus.mu_test(j) -= h;
    g_test(j) = (taskgen::objective(set, plus, config).total - taskgen::objective(set, minus, config).total) / (2 * h);
  }
  return {g_train, g_test};
}

/// Worst gradient error relative to the largest finite-difference component,
/// over both centroids.
inline double max_relative_error(const taskgen::CentroidGradient& g,
                                 const std::pair<Eigen::VectorXd, Eigen::VectorXd>& fd) {
  const double scale = std::max({fd.first.cwiseAbs().maxCoeff(), fd.second.cwiseAbs().maxCoeff(), 1e-8});
  const double err = std::max((g.mu_train - fd.first).cwiseAbs().maxCoeff(), (g.mu_test - fd.second).cwiseAbs().maxCoeff());
  return err / scale;
}

/// Two-pass mean then covariance (1/n), plus damping on the diagonal.
inline Eigen::MatrixXd covariance(const RowMatrix& x, double damping) {
  const auto n = x.rows();
  const auto d = x.cols();
  std::vector<long double> mean(static_cast<std::size_t>(d), 0.0L);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += x(i, j);
  for (auto& m : mean) m /= static_cast<long double>(n);
  Eigen::MatrixXd cov(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      long double s = 0.0L;
      for (Eigen::Index i = 0; i < n; ++i)
        s += (x(i, a) - mean[static_cast<std::size_t>(a)]) * (x(i, b) - mean[static_cast<std::size_t>(b)]);
      cov(a, b) = static_cast<double>(s / static_cast<long double>(n)) + (a == b ? damping : 0.0);
    }
  }
  return cov;
}

/// Ward clustering by recomputing every pairwise merge cost from cluster
/// members at each step: O(n^3) pair scans with direct centroid arithmetic.
inline std::vector<taskgen::Merge> brute_force_ward(const RowMatrix& points) {
  const auto n = static_cast<std::size_t>(points.rows());
  struct Cluster {
    std::size_t node;
    std::vector<Eigen::Index> members;
  };
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters.push_back({i, {static_cast<Eigen::Index>(i)}});
  auto centroid = [&](const Cluster& c) {
    Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(points.cols());
    for (auto m : c.members) s += points.row(m);
    return Eigen::RowVectorXd(s / static_cast<double>(c.members.size()));
  };
  std::vector<taskgen::Merge> merges;
  std::size_t next = n;
  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    std::pair<std::size_t, std::size_t> best_key{std::numeric_limits<std::size_t>::max(), 0};
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        const double na = static_cast<double>(clusters[i].members.size());
        const double nb = static_cast<double>(clusters[j].members.size());
        const double cost = na * nb / (na + nb) * (centroid(clusters[i]) - centroid(clusters[j])).squaredNorm();
        const std::pair key{std::min(clusters[i].node, clusters[j].node), std::max(clusters[i].node, clusters[j].node)};
        if (cost < best || (cost == best && key < best_key)) {
          best = cost;
          best_key = key;
          bi = i;
          bj = j;
        }
      }
    }
    merges.push_back({best_key.first, best_key.second, best});
    Cluster merged{next++, clusters[bi].members};
    merged.members.insert(merged.members.end(), clusters[bj].members.begin(), clusters[bj].members.end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
    clusters[bi] = std::move(merged);
  }
  return merges;
}

/// A ClassEmbeddingSet over ids 0..M-1 from explicit rows.
inline ClassEmbeddingSet make_set(const RowMatrix& rows, bool normalized = false) {
  ClassEmbeddingSet set;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) set.class_ids.push_back(static_cast<ClassId>(i));
  set.means = rows;
  set.normalized = normalized;
  return set;
}

inline RowMatrix random_rows(taskgen::Rng& rng, std::size_t m, std::size_t d, double scale = 1.0) {
  RowMatrix r(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    for (Eigen::Index j = 0; j < r.cols(); ++j) r(i, j) = scale * rng.normal();
  return r;
}

inline RowMatrix unit_rows(RowMatrix r) {
  for (Eigen::Index i = 0; i < r.rows(); ++i) r.row(i).normalize();
  return r;
}

}  // namespace oracle
