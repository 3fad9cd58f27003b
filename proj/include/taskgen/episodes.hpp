#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "taskgen/atg.hpp"
#include "taskgen/embeddings.hpp"
#include "taskgen/error.hpp"
#include "taskgen/parallel.hpp"
#include "taskgen/rng.hpp"

namespace taskgen {

inline constexpr std::size_t kDefaultQueryCount = 15;

/// An N-way K-shot task. Labels are episode-local class indices 0..N-1.
struct Episode {
  std::size_t way = 0;
  std::size_t shot = 0;
  std::size_t query = 0;
  std::vector<ClassId> classes;  // classes[k] is the dataset id of local class k
  std::vector<std::size_t> support_labels;
  RowMatrix support;
  std::vector<std::size_t> query_labels;
  RowMatrix query_set;
  std::vector<std::size_t> support_rows;  // source rows in the sample table
  std::vector<std::size_t> query_rows;
};

/// Draws N classes from `allowed_classes` without replacement, then K + Q
/// distinct samples per class; the first K become support.
inline Episode sample_episode(const EmbeddingTable& table, const std::vector<ClassId>& allowed_classes,
                              std::size_t way, std::size_t shot, std::size_t query, std::uint64_t seed) {
  if (way == 0 || shot == 0 || query == 0) throw InvalidArgument("sample_episode: way, shot and query must be positive");
  if (std::set<ClassId>(allowed_classes.begin(), allowed_classes.end()).size() != allowed_classes.size()) {
    throw InvalidArgument("sample_episode: duplicate class ids");
  }
  if (allowed_classes.size() < way) {
    throw InvalidArgument("sample_episode: " + std::to_string(way) + "-way episode needs " + std::to_string(way) +
                          " classes, only " + std::to_string(allowed_classes.size()) + " available");
  }
  Rng rng(seed);
  const auto picked = rng.sample_indices(allowed_classes.size(), way);

  std::map<ClassId, std::vector<std::size_t>> rows_of;
  for (const auto k : picked) rows_of[allowed_classes[k]];
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (auto it = rows_of.find(table.labels[i]); it != rows_of.end()) it->second.push_back(i);
  }

  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.query = query;
  const auto dim = static_cast<Eigen::Index>(table.dim());
  ep.support.resize(static_cast<Eigen::Index>(way * shot), dim);
  ep.query_set.resize(static_cast<Eigen::Index>(way * query), dim);
  for (std::size_t local = 0; local < way; ++local) {
    const ClassId id = allowed_classes[picked[local]];
    const auto& rows = rows_of[id];
    if (rows.size() < shot + query) {
      throw InvalidArgument("sample_episode: class " + std::to_string(id) + " has " + std::to_string(rows.size()) +
                            " samples, needs " + std::to_string(shot + query));
    }
    ep.classes.push_back(id);
    const auto chosen = rng.sample_indices(rows.size(), shot + query);
    for (std::size_t j = 0; j < chosen.size(); ++j) {
      const std::size_t row = rows[chosen[j]];
      if (j < shot) {
        ep.support.row(static_cast<Eigen::Index>(ep.support_rows.size())) = table.vectors.row(static_cast<Eigen::Index>(row));
        ep.support_rows.push_back(row);
        ep.support_labels.push_back(local);
      } else {
        ep.query_set.row(static_cast<Eigen::Index>(ep.query_rows.size())) = table.vectors.row(static_cast<Eigen::Index>(row));
        ep.query_rows.push_back(row);
        ep.query_labels.push_back(local);
      }
    }
  }
  return ep;
}

/// Class prototypes: mean support vector per local class.
inline RowMatrix prototypes(const Episode& ep) {
  RowMatrix protos = RowMatrix::Zero(static_cast<Eigen::Index>(ep.way), ep.support.cols());
  std::vector<std::size_t> counts(ep.way, 0);
  for (std::size_t i = 0; i < ep.support_labels.size(); ++i) {
    protos.row(static_cast<Eigen::Index>(ep.support_labels[i])) += ep.support.row(static_cast<Eigen::Index>(i));
    ++counts[ep.support_labels[i]];
  }
  for (std::size_t k = 0; k < ep.way; ++k) {
    if (counts[k] == 0) throw InvalidArgument("prototypes: class index " + std::to_string(k) + " has no support");
    protos.row(static_cast<Eigen::Index>(k)) /= static_cast<double>(counts[k]);
  }
  return protos;
}

/// Nearest-prototype accuracy under squared Euclidean distance. Equal
/// distances resolve to the lowest class index.
inline double prototype_classify(const Episode& ep) {
  if (ep.query_labels.empty()) throw InvalidArgument("prototype_classify: empty query set");
  const RowMatrix protos = prototypes(ep);
  std::size_t correct = 0;
  for (Eigen::Index q = 0; q < ep.query_set.rows(); ++q) {
    std::size_t best = 0;
    double best_dist = (protos.row(0) - ep.query_set.row(q)).squaredNorm();
    for (Eigen::Index k = 1; k < protos.rows(); ++k) {
      const double d = (protos.row(k) - ep.query_set.row(q)).squaredNorm();
      if (d < best_dist) {
        best_dist = d;
        best = static_cast<std::size_t>(k);
      }
    }
    if (best == ep.query_labels[static_cast<std::size_t>(q)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ep.query_labels.size());
}

struct EpisodeStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (0 for a single episode)
  std::size_t count = 0;
};

inline EpisodeStats summarize(const std::vector<double>& values) {
  EpisodeStats s;
  s.count = values.size();
  if (values.empty()) return s;
  for (const double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (const double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

/// Mean prototype accuracy over `episodes` tasks drawn from `classes`.
/// Episode e uses seed mix_seed(seed, stream, e), so results do not depend on
/// the number of threads.
inline std::vector<double> evaluate_episodes(const EmbeddingTable& table, const std::vector<ClassId>& classes,
                                             std::size_t episodes, std::size_t way, std::size_t shot,
                                             std::size_t query, std::uint64_t seed, std::uint64_t stream = 0,
                                             std::size_t threads = 1) {
  std::vector<double> acc(episodes);
  parallel_for(episodes, threads, [&](std::size_t e) {
    acc[e] = prototype_classify(sample_episode(table, classes, way, shot, query, mix_seed(seed, stream, e)));
  });
  return acc;
}

struct SweepOptions {
  std::vector<double> r_grid{0.04, 0.32, 0.64, 0.96};
  std::size_t episodes_per_r = 200;
  std::size_t way = 5;
  std::size_t shot = 5;
  std::size_t query = kDefaultQueryCount;
  std::size_t num_seeds = 5;
  std::size_t threads = 1;
};

struct SweepRow {
  double target_r = 0.0;
  double achieved_d = 0.0;  // mean over seeds
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::size_t episodes_evaluated = 0;
};

/// For each target R and each seed s in [0, num_seeds): generate a partition
/// with seed base.seed + s, then evaluate episodes_per_r nearest-prototype
/// episodes on its test classes using the raw embeddings.
inline std::vector<SweepRow> difficulty_sweep(const EmbeddingTable& table, const AtgConfig& base,
                                              const SweepOptions& opts) {
  if (opts.r_grid.empty()) throw InvalidArgument("difficulty_sweep: empty R grid");
  if (opts.episodes_per_r == 0 || opts.num_seeds == 0)
    throw InvalidArgument("difficulty_sweep: episodes and seeds must be positive");
  for (const double r : opts.r_grid) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw InvalidArgument("difficulty_sweep: R values must be non-negative");
  }
  const ClassEmbeddingSet set = normalize_unit(class_means(table, opts.threads));

  std::vector<SweepRow> rows;
  for (std::size_t ri = 0; ri < opts.r_grid.size(); ++ri) {
    std::vector<double> accuracies;
    double achieved = 0.0;
    for (std::size_t si = 0; si < opts.num_seeds; ++si) {
      AtgConfig config = base;
      config.target_divergence = opts.r_grid[ri];
      config.seed = base.seed + si;
      const Partition p = generate_partition(set, config);
      achieved += p.meta.achieved_divergence;
      const auto acc = evaluate_episodes(table, p.test, opts.episodes_per_r, opts.way, opts.shot, opts.query,
                                         base.seed, ri * opts.num_seeds + si, opts.threads);
      accuracies.insert(accuracies.end(), acc.begin(), acc.end());
    }
    const auto stats = summarize(accuracies);
    rows.push_back({opts.r_grid[ri], achieved / static_cast<double>(opts.num_seeds), stats.mean, stats.std,
                    stats.count});
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "target_R,achieved_D,mean_accuracy,std_accuracy,episodes\n";
  const auto old_precision = out.precision(17);
  for (const auto& r : rows) {
    out << r.target_r << ',' << r.achieved_d << ',' << r.mean_accuracy << ',' << r.std_accuracy << ','
        << r.episodes_evaluated << '\n';
  }
  out.precision(old_precision);
}

}  // namespace taskgen
