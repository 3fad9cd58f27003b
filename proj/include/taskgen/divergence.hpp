#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "taskgen/embeddings.hpp"
#include "taskgen/error.hpp"

namespace taskgen {

/// Probabilities below this are floored before taking logarithms.
inline constexpr double kProbabilityFloor = 1e-300;

/// Damping added to Gaussian covariances by default.
inline constexpr double kDefaultDamping = 1e-3;

enum class DivergenceKind { EuclideanBetweenMeans, Wasserstein2, KullbackLeibler, SymmetrizedKL };

inline std::string_view to_string(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::EuclideanBetweenMeans: return "euclidean";
    case DivergenceKind::Wasserstein2: return "w2";
    case DivergenceKind::KullbackLeibler: return "kl";
    case DivergenceKind::SymmetrizedKL: return "symkl";
  }
  return "unknown";
}

inline DivergenceKind parse_divergence_kind(std::string_view name) {
  for (auto kind : {DivergenceKind::EuclideanBetweenMeans, DivergenceKind::Wasserstein2,
                    DivergenceKind::KullbackLeibler, DivergenceKind::SymmetrizedKL}) {
    if (to_string(kind) == name) return kind;
  }
  throw InvalidArgument("unknown divergence kind '" + std::string(name) + "'");
}

/// A strictly positive distribution over an ordered list of classes.
struct ClassDistribution {
  std::vector<ClassId> class_ids;
  Eigen::VectorXd probs;
  Eigen::VectorXd log_probs;  // kept alongside probs so KL never takes log of an underflowed value
};

/// Squared distance from every class embedding to `centroid`.
inline Eigen::VectorXd squared_distances(const ClassEmbeddingSet& set, const Eigen::VectorXd& centroid) {
  if (static_cast<std::size_t>(centroid.size()) != set.dim()) {
    throw InvalidArgument("centroid has dimension " + std::to_string(centroid.size()) + ", embeddings have " +
                          std::to_string(set.dim()));
  }
  return (set.means.rowwise() - centroid.transpose()).rowwise().squaredNorm();
}

/// Log-softmax of `logits` with max subtraction.
inline Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return logits.array() - lse;
}

/// p(i) proportional to exp(-||phi_i - centroid||^2).
inline ClassDistribution class_distribution(const ClassEmbeddingSet& set, const Eigen::VectorXd& centroid) {
  ClassDistribution dist;
  dist.class_ids = set.class_ids;
  dist.log_probs = log_softmax(-squared_distances(set, centroid));
  dist.probs = dist.log_probs.array().exp().max(kProbabilityFloor);
  return dist;
}

namespace detail {

inline void check_aligned(const ClassDistribution& p, const ClassDistribution& q) {
  if (p.class_ids != q.class_ids) throw InvalidArgument("distributions are over different class lists");
}

inline double clamped_log(const ClassDistribution& d, Eigen::Index i) {
  return std::max(d.log_probs.size() ? d.log_probs(i) : std::log(d.probs(i)), std::log(kProbabilityFloor));
}

}  // namespace detail

/// KL(p || q) in nats.
inline double kl(const ClassDistribution& p, const ClassDistribution& q) {
  detail::check_aligned(p, q);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.probs.size(); ++i) {
    sum += p.probs(i) * (detail::clamped_log(p, i) - detail::clamped_log(q, i));
  }
  return std::max(sum, 0.0);
}

/// KL(p || q) + KL(q || p).
inline double sym_kl(const ClassDistribution& p, const ClassDistribution& q) { return kl(p, q) + kl(q, p); }

/// Mean and damped covariance of a set of vectors.
struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // includes damping * I
  double damping = 0.0;
};

/// Rows of `vectors` are observations. Covariance uses the 1/n normalization.
inline GaussianSummary gaussian_summary(const RowMatrix& vectors, double damping = kDefaultDamping) {
  if (vectors.rows() == 0) throw InvalidArgument("gaussian_summary: no vectors");
  if (damping < 0.0) throw InvalidArgument("gaussian_summary: negative damping");
  GaussianSummary g;
  g.damping = damping;
  g.mean = vectors.colwise().mean().transpose();
  const RowMatrix centered = vectors.rowwise() - g.mean.transpose();
  g.covariance = (centered.transpose() * centered) / static_cast<double>(vectors.rows());
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose());
  g.covariance.diagonal().array() += damping;
  return g;
}

namespace detail {

/// Principal square root of a symmetric PSD matrix; negative eigenvalues from
/// rounding are clamped to zero.
inline Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

inline double gaussian_kl(const GaussianSummary& a, const GaussianSummary& b) {
  const Eigen::LLT<Eigen::MatrixXd> chol_a(a.covariance);
  const Eigen::LLT<Eigen::MatrixXd> chol_b(b.covariance);
  if (chol_a.info() != Eigen::Success || chol_b.info() != Eigen::Success) {
    throw NumericError("gaussian KL: covariance is not positive definite (increase damping)");
  }
  const auto dim = static_cast<double>(a.mean.size());
  const Eigen::VectorXd diff = b.mean - a.mean;
  const double trace_term = chol_b.solve(a.covariance).trace();
  const double mahalanobis = diff.dot(chol_b.solve(diff));
  const double logdet_a = 2.0 * chol_a.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet_b = 2.0 * chol_b.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return std::max(0.0, 0.5 * (trace_term + mahalanobis - dim + logdet_b - logdet_a));
}

}  // namespace detail

/// Divergence between two Gaussian summaries. Wasserstein2 returns the
/// squared distance; KullbackLeibler is KL(a || b).
inline double gaussian_divergence(const GaussianSummary& a, const GaussianSummary& b, DivergenceKind kind) {
  if (a.mean.size() != b.mean.size()) throw InvalidArgument("gaussian_divergence: dimension mismatch");
  switch (kind) {
    case DivergenceKind::EuclideanBetweenMeans:
      return (a.mean - b.mean).norm();
    case DivergenceKind::Wasserstein2: {
      const Eigen::MatrixXd root_b = detail::sqrt_psd(b.covariance);
      const Eigen::MatrixXd cross = detail::sqrt_psd(root_b * a.covariance * root_b);
      const double w2 = (a.mean - b.mean).squaredNorm() +
                        (a.covariance + b.covariance - 2.0 * cross).trace();
      return std::max(w2, 0.0);
    }
    case DivergenceKind::KullbackLeibler:
      return detail::gaussian_kl(a, b);
    case DivergenceKind::SymmetrizedKL:
      return detail::gaussian_kl(a, b) + detail::gaussian_kl(b, a);
  }
  throw InvalidArgument("gaussian_divergence: unknown kind");
}

}  // namespace taskgen
