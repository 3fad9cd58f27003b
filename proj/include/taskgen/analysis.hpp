#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "taskgen/embeddings.hpp"
#include "taskgen/error.hpp"

namespace taskgen {

// ---------------------------------------------------------------------------
// Ward clustering

struct Merge {
  std::size_t node_a = 0;  // node_a < node_b
  std::size_t node_b = 0;
  double height = 0.0;
};

/// Agglomerative tree. Nodes 0..M-1 are leaves (in `leaves` order); merge k
/// creates node M + k.
struct MergeTree {
  std::vector<ClassId> leaves;
  std::vector<Merge> merges;
};

/// Ward linkage with Lance-Williams updates. Heights are merge costs
///   |A||B| / (|A| + |B|) * ||c_A - c_B||^2,
/// i.e. the increase in within-cluster sum of squares. Equal costs resolve to
/// the lexicographically smallest (node_a, node_b).
inline MergeTree ward_cluster(const ClassEmbeddingSet& set) {
  const std::size_t m = set.size();
  if (m < 2) throw InvalidArgument("ward_cluster: need at least two classes");
  MergeTree tree;
  tree.leaves = set.class_ids;

  // cost[i][j] over slot indices; slot i holds node ids[i].
  std::vector<std::vector<double>> cost(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double d = 0.5 * (set.means.row(static_cast<Eigen::Index>(i)) - set.means.row(static_cast<Eigen::Index>(j)))
                                 .squaredNorm();
      cost[i][j] = cost[j][i] = d;
    }
  }
  std::vector<std::size_t> node(m);
  std::iota(node.begin(), node.end(), std::size_t{0});
  std::vector<double> size(m, 1.0);
  std::vector<bool> active(m, true);

  for (std::size_t step = 0; step + 1 < m; ++step) {
    std::size_t bi = 0, bj = 0;
    double best = std::numeric_limits<double>::infinity();
    std::pair<std::size_t, std::size_t> best_key{std::numeric_limits<std::size_t>::max(), 0};
    for (std::size_t i = 0; i < m; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < m; ++j) {
        if (!active[j]) continue;
        const std::pair key{std::min(node[i], node[j]), std::max(node[i], node[j])};
        if (cost[i][j] < best || (cost[i][j] == best && key < best_key)) {
          best = cost[i][j];
          best_key = key;
          bi = i;
          bj = j;
        }
      }
    }
    tree.merges.push_back({best_key.first, best_key.second, best});

    const double ni = size[bi], nj = size[bj];
    for (std::size_t k = 0; k < m; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double nk = size[k];
      double updated = ((ni + nk) * cost[bi][k] + (nj + nk) * cost[bj][k] - nk * best) / (ni + nj + nk);
      // Ward is reducible: the merged cluster is never closer than `best`.
      updated = std::max(updated, best);
      cost[bi][k] = cost[k][bi] = updated;
    }
    active[bj] = false;
    size[bi] = ni + nj;
    node[bi] = m + step;
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Graphs

/// Simple undirected graph with named nodes; `class_node` maps the class ids
/// being compared onto node indices.
struct ClassGraph {
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> adjacency;
  std::map<ClassId, std::size_t> class_node;

  std::size_t add_node(const std::string& name) {
    if (auto it = index_.find(name); it != index_.end()) return it->second;
    names.push_back(name);
    adjacency.emplace_back();
    index_.emplace(name, names.size() - 1);
    return names.size() - 1;
  }

  /// Self loops and repeated edges are ignored.
  void add_edge(std::size_t a, std::size_t b) {
    if (a == b) return;
    auto& na = adjacency[a];
    if (std::find(na.begin(), na.end(), b) != na.end()) return;
    na.push_back(b);
    adjacency[b].push_back(a);
  }

  std::size_t node_count() const noexcept { return names.size(); }

  std::size_t edge_count() const noexcept {
    std::size_t twice = 0;
    for (const auto& n : adjacency) twice += n.size();
    return twice / 2;
  }

  const std::size_t* find(const std::string& name) const {
    const auto it = index_.find(name);
    return it == index_.end() ? nullptr : &it->second;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parses `node_a<TAB>node_b` lines. Blank lines and lines starting with '#'
/// are skipped.
inline ClassGraph read_edge_list(std::istream& in) {
  ClassGraph g;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos || tab == 0 ||
        tab + 1 == line.size()) {
      throw ParseError(ParseError::Kind::Malformed, line_no,
                       "line " + std::to_string(line_no) + ": expected 'node_a<TAB>node_b'");
    }
    const auto a = g.add_node(line.substr(0, tab));
    const auto b = g.add_node(line.substr(tab + 1));
    g.add_edge(a, b);
  }
  if (g.node_count() == 0) throw ParseError(ParseError::Kind::Empty, line_no, "edge list has no edges");
  return g;
}

/// Binds class ids to node names; every name must exist in the graph.
inline void bind_classes(ClassGraph& g, const std::map<ClassId, std::string>& names) {
  for (const auto& [id, name] : names) {
    const auto* idx = g.find(name);
    if (!idx) throw InvalidArgument("class " + std::to_string(id) + " maps to unknown node '" + name + "'");
    g.class_node[id] = *idx;
  }
}

/// Leaves become nodes named by their class id; merge k becomes internal
/// node "#k". Edges join each child to its parent.
inline ClassGraph tree_to_graph(const MergeTree& tree) {
  ClassGraph g;
  const std::size_t m = tree.leaves.size();
  for (const ClassId id : tree.leaves) g.class_node[id] = g.add_node(std::to_string(id));
  for (std::size_t k = 0; k < tree.merges.size(); ++k) g.add_node("#" + std::to_string(k));
  for (std::size_t k = 0; k < tree.merges.size(); ++k) {
    g.add_edge(tree.merges[k].node_a, m + k);
    g.add_edge(tree.merges[k].node_b, m + k);
  }
  return g;
}

namespace detail {

inline std::vector<std::size_t> bfs_hops(const ClassGraph& g, std::size_t source) {
  constexpr auto unreached = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(g.node_count(), unreached);
  std::deque<std::size_t> frontier{source};
  dist[source] = 0;
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop_front();
    for (const std::size_t v : g.adjacency[u]) {
      if (dist[v] == unreached) {
        dist[v] = dist[u] + 1;
        frontier.push_back(v);
      }
    }
  }
  return dist;
}

}  // namespace detail

/// Shortest-path edge counts between target classes.
inline Eigen::MatrixXd graph_raw_hops(const ClassGraph& g, const std::vector<ClassId>& targets) {
  const std::size_t n = targets.size();
  std::vector<std::size_t> nodes;
  for (const ClassId id : targets) {
    const auto it = g.class_node.find(id);
    if (it == g.class_node.end()) throw InvalidArgument("class " + std::to_string(id) + " is not in the graph");
    nodes.push_back(it->second);
  }
  Eigen::MatrixXd hops = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t a = 0; a < n; ++a) {
    const auto dist = detail::bfs_hops(g, nodes[a]);
    for (std::size_t b = 0; b < n; ++b) {
      if (dist[nodes[b]] == std::numeric_limits<std::size_t>::max()) {
        throw InvalidArgument("classes " + std::to_string(targets[a]) + " and " + std::to_string(targets[b]) +
                              " are not connected");
      }
      hops(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = static_cast<double>(dist[nodes[b]]);
    }
  }
  return hops;
}

/// Hop counts divided by the largest hop count among the targets.
inline Eigen::MatrixXd graph_hop_matrix(const ClassGraph& g, const std::vector<ClassId>& targets) {
  Eigen::MatrixXd hops = graph_raw_hops(g, targets);
  const double diameter = hops.size() ? hops.maxCoeff() : 0.0;
  if (diameter > 0.0) hops /= diameter;
  return hops;
}

struct HopComparison {
  Eigen::MatrixXd a;  // normalized hops in the first graph
  Eigen::MatrixXd b;
  double mean = 0.0;  // over unordered target pairs
  std::size_t pairs = 0;
};

inline HopComparison compare_hops(const ClassGraph& ga, const ClassGraph& gb, const std::vector<ClassId>& targets) {
  if (targets.size() < 2) throw InvalidArgument("hop_distance: need at least two targets");
  HopComparison out;
  out.a = graph_hop_matrix(ga, targets);
  out.b = graph_hop_matrix(gb, targets);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < out.a.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < out.a.cols(); ++j) {
      sum += std::abs(out.a(i, j) - out.b(i, j));
      ++out.pairs;
    }
  }
  out.mean = sum / static_cast<double>(out.pairs);
  return out;
}

/// Mean absolute difference of normalized hop counts over target pairs.
inline double hop_distance(const ClassGraph& ga, const ClassGraph& gb, const std::vector<ClassId>& targets) {
  return compare_hops(ga, gb, targets).mean;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // dim x k, orthonormal columns
  Eigen::VectorXd explained_variance;
  double total_variance = 0.0;

  Eigen::VectorXd transform(const Eigen::VectorXd& x) const { return components.transpose() * (x - mean); }
};

struct ProjectedPoints {
  std::vector<ClassId> class_ids;
  RowMatrix coords;  // M x k
  Eigen::VectorXd explained_variance;
};

/// Top-k principal axes of the class embeddings. Variances use the 1/(M-1)
/// normalization; each axis is signed so its largest-magnitude entry is
/// positive.
inline PcaModel pca_fit(const ClassEmbeddingSet& set, std::size_t k) {
  const std::size_t m = set.size();
  if (k == 0 || k > std::min(m, set.dim())) {
    throw InvalidArgument("pca: k=" + std::to_string(k) + " must lie in [1, " + std::to_string(std::min(m, set.dim())) +
                          "]");
  }
  if (m < 2) throw InvalidArgument("pca: need at least two points");
  PcaModel model;
  model.mean = set.means.colwise().mean().transpose();
  const RowMatrix centered = set.means.rowwise() - model.mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(m - 1);
  cov = 0.5 * (cov + cov.transpose());
  model.total_variance = cov.trace();

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index d = cov.rows();
  const auto kk = static_cast<Eigen::Index>(k);
  model.components.resize(d, kk);
  model.explained_variance.resize(kk);
  for (Eigen::Index c = 0; c < kk; ++c) {
    Eigen::VectorXd axis = eig.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    model.components.col(c) = axis;
    model.explained_variance(c) = std::max(eig.eigenvalues()(d - 1 - c), 0.0);
  }
  return model;
}

inline ProjectedPoints pca_project(const ClassEmbeddingSet& set, std::size_t k) {
  const PcaModel model = pca_fit(set, k);
  ProjectedPoints out;
  out.class_ids = set.class_ids;
  out.coords = (set.means.rowwise() - model.mean.transpose()) * model.components;
  out.explained_variance = model.explained_variance;
  return out;
}

// ---------------------------------------------------------------------------
// Correlation

inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("pearson: length mismatch");
  if (xs.size() < 2) throw InvalidArgument("pearson: need at least two points");
  const auto n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw InvalidArgument("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("spearman: length mismatch");
  return pearson(average_ranks(xs), average_ranks(ys));
}

}  // namespace taskgen
