// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "taskgen/taskgen.hpp"
#include "taskgen_cli.hpp"

using namespace taskgen;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (elapsed > budget_s) {
    o.pass = false;
    o.detail += " [over time budget " + std::to_string(budget_s) + "s]";
  }
  if (!o.pass) ++failures;
  std::printf("%s [%d] %s: %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), elapsed);
  std::fflush(stdout);
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

Outcome split_sizes() {
  Rng rng(1);
  std::string detail;
  bool ok = true;
  const std::size_t cases[3][4] = {{62, 37, 12, 13}, {100, 60, 20, 20}, {158, 94, 32, 32}};
  for (const auto& c : cases) {
    AssignmentScores s;
    s.scores.resize(static_cast<Eigen::Index>(c[0]));
    for (std::size_t i = 0; i < c[0]; ++i) {
      s.class_ids.push_back(static_cast<ClassId>(i));
      s.scores(static_cast<Eigen::Index>(i)) = static_cast<double>(i) + rng.uniform() * 0.5;
    }
    const auto p = assign(s, 0.6, 7);
    ok &= p.train.size() == c[1] && p.validation.size() == c[2] && p.test.size() == c[3];
    detail += "M=" + std::to_string(c[0]) + "->(" + std::to_string(p.train.size()) + "," +
              std::to_string(p.validation.size()) + "," + std::to_string(p.test.size()) + ") ";
  }
  return {ok, detail};
}

Outcome gradient_check() {
  Rng rng(2);
  double worst = 0.0;
  const int instances = 120;
  for (int t = 0; t < instances; ++t) {
    const auto m = 2 + rng.below(29);
    const auto d = 1 + rng.below(16);
    const auto set = oracle::make_set(oracle::unit_rows(oracle::random_rows(rng, m, d)), true);
    Eigen::VectorXd a(static_cast<Eigen::Index>(d)), b(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < a.size(); ++j) {
      a(j) = 0.5 * rng.normal();
      b(j) = 0.5 * rng.normal();
    }
    AtgConfig config;
    config.target_divergence = 1.28 * rng.uniform();
    config.penalty_weight = t % 2;
    const auto c = CentroidPair::at(a, b);
    worst = std::max(worst, oracle::max_relative_error(gradient(set, c, config),
                                                       oracle::finite_difference_gradient(set, c, config, 1e-5)));
  }
  return {worst <= 1e-4, std::to_string(instances) + " instances, max relative error " + fmt(worst) + " (limit 1e-4)"};
}

// Two superclusters, 100 classes in 32 dimensions, class centers spread
// wider than the supercluster centers.
SynthSpec targeting_data(std::uint64_t seed) {
  SynthSpec spec;
  spec.num_classes = 100;
  spec.dim = 32;
  spec.samples_per_class = 10;
  spec.num_superclusters = 2;
  spec.within_spread = 2.0;
  spec.between_spread = 1.0;
  spec.seed = seed;
  return spec;
}

Outcome divergence_targeting() {
  const std::vector<double> grid{0.04, 0.32, 0.64, 0.96};
  bool ok = true;
  double worst = 0.0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto set = normalize_unit(class_means(generate(targeting_data(seed)).table));
    double previous = -1.0;
    detail += "seed " + std::to_string(seed) + ":";
    for (const double r : grid) {
      AtgConfig config;  // lr 0.1, momentum 0.9, 7000 iterations, symkl, lambda 1
      config.target_divergence = r;
      config.seed = seed;
      config.trace_stride = config.iterations;
      const double d = optimize(set, config).trace.back().divergence;
      ok &= d >= previous && std::abs(d - r) <= 0.15;
      worst = std::max(worst, std::abs(d - r));
      previous = d;
      detail += " " + fmt(d);
    }
    detail += "; ";
  }
  return {ok, detail + "max |D-R| " + fmt(worst) + " (limit 0.15)"};
}

// Ten superclusters in 4 dimensions: episodes are hard enough that accuracy
// is not pinned at 1.0. lr 0.1 diverges on this geometry, so the sweep
// optimizes with lr 0.01.
Outcome difficulty_trend() {
  SynthSpec spec;
  spec.num_classes = 100;
  spec.dim = 4;
  spec.samples_per_class = 30;
  spec.num_superclusters = 10;
  spec.within_spread = 1.0;
  spec.between_spread = 3.0;
  spec.seed = 0;
  const auto data = generate(spec);
  AtgConfig base;
  base.learning_rate = 0.01;
  SweepOptions opts;  // grid 0.04/0.32/0.64/0.96, 5-way 5-shot, 15 queries, 200 episodes, 5 seeds
  const auto rows = difficulty_sweep(data.table, base, opts);
  std::vector<double> r, acc;
  std::string detail = "accuracy by R:";
  for (const auto& row : rows) {
    r.push_back(row.target_r);
    acc.push_back(row.mean_accuracy);
    detail += " " + fmt(row.target_r) + "->" + fmt(row.mean_accuracy);
  }
  double rho = 0.0;
  try {
    rho = spearman(r, acc);
  } catch (const InvalidArgument&) {
    return {false, detail + "; accuracy constant across R, Spearman undefined (limit <= -0.8)"};
  }
  return {rho <= -0.8, detail + "; Spearman " + fmt(rho) + " (limit <= -0.8)"};
}

ClassDistribution from_probs(std::vector<double> p) {
  ClassDistribution d;
  d.probs = Eigen::Map<Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) d.class_ids.push_back(static_cast<ClassId>(i));
  return d;
}

Outcome divergence_oracles() {
  const auto p = from_probs({0.5, 0.5}), q = from_probs({0.25, 0.75});
  const double kl_direct = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  const double kl_back = 0.25 * std::log(0.25 / 0.5) + 0.75 * std::log(0.75 / 0.5);
  double worst = std::max({std::abs(kl(p, q) - kl_direct), std::abs(kl(p, q) - 0.143841036225890),
                           std::abs(sym_kl(p, q) - (kl_direct + kl_back)), std::abs(sym_kl(p, q) - 0.274653072167027)});
  Rng rng(5);
  for (int t = 0; t < 1000; ++t) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(8));
    GaussianSummary a, b;
    a.mean.resize(d);
    b.mean.resize(d);
    Eigen::VectorXd va(d), vb(d);
    double w2 = 0.0, kl_ab = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      a.mean(j) = 6 * rng.uniform() - 3;
      b.mean(j) = 6 * rng.uniform() - 3;
      va(j) = 0.1 + 9.9 * rng.uniform();
      vb(j) = 0.1 + 9.9 * rng.uniform();
      const double dm = a.mean(j) - b.mean(j);
      w2 += dm * dm + std::pow(std::sqrt(va(j)) - std::sqrt(vb(j)), 2);
      kl_ab += 0.5 * (va(j) / vb(j) + dm * dm / vb(j) - 1 + std::log(vb(j) / va(j)));
    }
    a.covariance = va.asDiagonal();
    b.covariance = vb.asDiagonal();
    worst = std::max({worst, std::abs(gaussian_divergence(a, b, DivergenceKind::Wasserstein2) - w2),
                      std::abs(gaussian_divergence(a, b, DivergenceKind::KullbackLeibler) - kl_ab)});
  }
  return {worst <= 1e-9, "KL " + fmt(kl(p, q)) + ", symKL " + fmt(sym_kl(p, q)) +
                             ", 1000 diagonal Gaussian cases; max abs error " + fmt(worst) + " (limit 1e-9)"};
}

Outcome ward_oracle() {
  std::size_t trees = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    for (std::size_t n = 2; n <= 10; ++n) {
      const auto pts = oracle::random_rows(rng, n, 1 + rng.below(4));
      const auto tree = ward_cluster(oracle::make_set(pts));
      const auto ref = oracle::brute_force_ward(pts);
      for (std::size_t k = 0; k < ref.size(); ++k) {
        const auto& m = tree.merges[k];
        if (m.node_a != ref[k].node_a || m.node_b != ref[k].node_b)
          return {false, "seed " + std::to_string(seed) + " n=" + std::to_string(n) + ": merge " + std::to_string(k) +
                             " differs from brute force"};
        if (k > 0 && m.height < tree.merges[k - 1].height)
          return {false, "seed " + std::to_string(seed) + " n=" + std::to_string(n) + ": heights decrease"};
      }
      ++trees;
    }
  }
  return {true, std::to_string(trees) + " trees identical to brute force, heights nondecreasing"};
}

ClassGraph make_graph(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  ClassGraph g;
  for (std::size_t i = 0; i < n; ++i) g.class_node[static_cast<ClassId>(i)] = g.add_node("n" + std::to_string(i));
  for (const auto& [a, b] : edges) g.add_edge(a, b);
  return g;
}

Outcome hop_sanity() {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    const auto n = 3 + rng.below(12);
    std::vector<std::pair<std::size_t, std::size_t>> ea, eb;
    for (std::size_t i = 1; i < n; ++i) {
      ea.emplace_back(rng.below(i), i);
      eb.emplace_back(rng.below(i), i);
    }
    for (std::size_t e = 0; e < n / 2; ++e) ea.emplace_back(rng.below(n), rng.below(n));
    const auto a = make_graph(n, ea), b = make_graph(n, eb);
    std::vector<ClassId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<ClassId>(i);
    if (hop_distance(a, a, ids) != 0.0) return {false, "identical graphs gave nonzero distance"};
    if (hop_distance(a, b, ids) != hop_distance(b, a, ids)) return {false, "asymmetric distance"};
  }
  const double pt = hop_distance(make_graph(3, {{0, 1}, {1, 2}}), make_graph(3, {{0, 1}, {1, 2}, {0, 2}}), {0, 1, 2});
  return {std::abs(pt - 1.0 / 3.0) <= 1e-12,
          "identity 0 and symmetry on 100 random pairs; path vs triangle " + fmt(pt) + " (expect 1/3 within 1e-12)"};
}

Outcome pca_properties() {
  Rng rng(8);
  double ortho = 0.0, iso = 0.0;
  bool ordered = true;
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 1 + rng.below(4), d = k + 1 + rng.below(10), m = k + 2 + rng.below(30);
    const auto full = pca_fit(oracle::make_set(oracle::random_rows(rng, m, d)), std::min(m, d));
    const auto kk = full.components.cols();
    ortho = std::max(ortho, (full.components.transpose() * full.components - Eigen::MatrixXd::Identity(kk, kk))
                                .cwiseAbs()
                                .maxCoeff());
    for (Eigen::Index c = 1; c < full.explained_variance.size(); ++c)
      ordered &= full.explained_variance(c - 1) >= full.explained_variance(c);
    const RowMatrix pts = oracle::random_rows(rng, m, k) * oracle::random_rows(rng, k, d);
    const auto proj = pca_project(oracle::make_set(pts), k);
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      for (Eigen::Index j = i + 1; j < pts.rows(); ++j)
        iso = std::max(iso, std::abs((proj.coords.row(i) - proj.coords.row(j)).norm() - (pts.row(i) - pts.row(j)).norm()));
  }
  return {ortho <= 1e-9 && iso <= 1e-9 && ordered, "orthonormality error " + fmt(ortho) + ", isometry error " +
                                                       fmt(iso) + " (limits 1e-9), variance order " +
                                                       (ordered ? "nonincreasing" : "violated")};
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "taskgen_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SynthSpec spec = targeting_data(3);
  spec.num_classes = 40;
  spec.samples_per_class = 30;
  const auto data = generate(spec);
  {
    std::ofstream f(dir / "emb.bin", std::ios::binary);
    save_samples(f, data.table, SampleFormat::Binary);
  }
  auto run = [&](const std::string& out, const std::string& threads) {
    const std::string emb = (dir / "emb.bin").string(), dest = (dir / out).string();
    const char* argv[] = {"taskgen", "--threads", threads.c_str(), "partition", "--embeddings", emb.c_str(),
                          "--target-divergence", "0.64", "--seed", "11", "--out", dest.c_str()};
    std::ostringstream sink;
    return cli::run(12, argv, sink, sink);
  };
  if (run("a.json", "1") != 0 || run("b.json", "1") != 0 || run("c.json", "4") != 0)
    return {false, "partition command failed"};
  const auto a = read_file(dir / "a.json"), b = read_file(dir / "b.json"), c = read_file(dir / "c.json");
  fs::remove_all(dir);
  const bool same_runs = a == b;
  const bool same_threads = a == c;

  // Thread-parallel stages are reduction-order fixed, so the documented
  // cross-thread tolerance is zero.
  const auto m1 = class_means(data.table, 1), m4 = class_means(data.table, 4);
  SweepOptions opts;
  opts.r_grid = {0.32};
  opts.num_seeds = 1;
  opts.episodes_per_r = 40;
  AtgConfig base;
  base.iterations = 500;
  const auto s1 = difficulty_sweep(data.table, base, opts);
  opts.threads = 4;
  const auto s4 = difficulty_sweep(data.table, base, opts);
  const bool threads_ok = m1.means == m4.means && s1[0].mean_accuracy == s4[0].mean_accuracy &&
                          s1[0].std_accuracy == s4[0].std_accuracy;
  return {same_runs && same_threads && threads_ok,
          std::string("repeat runs ") + (same_runs ? "byte-identical" : "differ") + ", 1 vs 4 threads " +
              (same_threads && threads_ok ? "identical (tolerance 0)" : "differ")};
}

}  // namespace

int main() {
  criterion(1, "split sizes 62/100/158", 1.0, split_sizes);
  criterion(2, "gradient vs finite differences", 30.0, gradient_check);
  criterion(3, "divergence targeting", 120.0, divergence_targeting);
  criterion(4, "accuracy decreases with target divergence", 180.0, difficulty_trend);
  criterion(5, "divergence oracles", 5.0, divergence_oracles);
  criterion(6, "Ward matches brute force", 10.0, ward_oracle);
  criterion(7, "hop distance sanity", 5.0, hop_sanity);
  criterion(8, "PCA properties", 5.0, pca_properties);
  criterion(9, "determinism", 60.0, determinism);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
