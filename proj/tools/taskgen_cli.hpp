#pragma once

// Command-line front end. Exit codes:
//   0 success, 1 I/O failure on output, 2 bad arguments or unusable input
//   shape, 3 input parse error, 4 numeric failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "taskgen/taskgen.hpp"

namespace taskgen::cli {

enum ExitCode : int { kOk = 0, kIoFailure = 1, kBadArgs = 2, kParseFailure = 3, kNumericFailure = 4 };

namespace detail {

inline EmbeddingTable load_embeddings(const std::string& path) {
  std::istringstream in(read_file(path));
  return load_samples(in);
}

inline ClassEmbeddingSet prepare_set(const EmbeddingTable& table, bool normalize, std::size_t threads) {
  ClassEmbeddingSet set = class_means(table, threads);
  return normalize ? normalize_unit(std::move(set)) : set;
}

struct AtgFlags {
  double lambda = 1.0;
  double lr = 0.1;
  double momentum = 0.9;
  std::size_t iterations = 7000;
  std::string divergence = "symkl";
  double train_fraction = 0.6;
  std::string rule = "fraction";
  std::uint64_t seed = 0;

  void attach(CLI::App& app) {
    app.add_option("--lambda", lambda, "Penalty weight")->capture_default_str()->check(CLI::NonNegativeNumber);
    app.add_option("--lr", lr, "SGD learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--momentum", momentum, "SGD momentum in [0, 1)")->capture_default_str()->check(CLI::Range(0.0, 0.999999999));
    app.add_option("--iterations", iterations, "Full-batch SGD steps")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--divergence", divergence, "Penalty divergence (multinomial, nats)")
        ->capture_default_str()
        ->check(CLI::IsMember({"symkl", "kl"}));
    app.add_option("--train-fraction", train_fraction, "Fraction of classes assigned to train")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    app.add_option("--rule", rule, "Assignment rule")->capture_default_str()->check(CLI::IsMember({"fraction", "ratio"}));
    app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();
  }

  AtgConfig config(double target) const {
    AtgConfig c;
    c.target_divergence = target;
    c.penalty_weight = lambda;
    c.learning_rate = lr;
    c.momentum = momentum;
    c.iterations = iterations;
    c.seed = seed;
    c.divergence = parse_divergence_kind(divergence);
    c.train_fraction = train_fraction;
    c.rule = rule == "ratio" ? AssignmentRule::Ratio : AssignmentRule::Fraction;
    return c;
  }

  OrderedJson describe() const {
    OrderedJson j;
    j["lambda"] = lambda;
    j["lr"] = lr;
    j["momentum"] = momentum;
    j["iterations"] = iterations;
    j["divergence"] = divergence;
    j["train_fraction"] = train_fraction;
    j["rule"] = rule;
    j["seed"] = seed;
    return j;
  }
};

inline std::size_t resolve_threads(std::size_t flag) { return flag > 0 ? flag : default_threads(); }

template <typename T>
std::string csv_number(T v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace detail

/// Runs one invocation. `out` receives normal output, `err` diagnostics.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Generate few-shot class partitions of controllable difficulty from embeddings", "taskgen"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: TASKGEN_THREADS or 1)");

  // partition
  auto* part = app.add_subcommand("partition", "Optimize centroids and write a train/validation/test partition");
  std::string embeddings_path, out_path, centroids_out;
  double target = 0.0;
  detail::AtgFlags atg;
  part->add_option("--embeddings", embeddings_path, "Sample embeddings (CSV or ATGE binary)")->required();
  part->add_option("--target-divergence", target, "Target divergence R in nats")->required()->check(CLI::NonNegativeNumber);
  atg.attach(*part);
  part->add_option("--out", out_path, "Partition JSON output")->required();
  part->add_option("--centroids-out", centroids_out, "Optional centroid JSON output");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Evaluate prototype accuracy across target divergences");
  SweepOptions sweep_opts;
  detail::AtgFlags sweep_atg;
  std::string sweep_embeddings, sweep_out;
  sweep->add_option("--embeddings", sweep_embeddings, "Sample embeddings")->required();
  sweep->add_option("--grid", sweep_opts.r_grid, "Comma-separated target divergences")
      ->delimiter(',')
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sweep->add_option("--episodes", sweep_opts.episodes_per_r, "Episodes per R and seed")->capture_default_str()->check(CLI::PositiveNumber);
  sweep->add_option("--way", sweep_opts.way, "Classes per episode")->capture_default_str()->check(CLI::PositiveNumber);
  sweep->add_option("--shot", sweep_opts.shot, "Support samples per class")->capture_default_str()->check(CLI::PositiveNumber);
  sweep->add_option("--query", sweep_opts.query, "Query samples per class")->capture_default_str()->check(CLI::PositiveNumber);
  sweep->add_option("--seeds", sweep_opts.num_seeds, "Partition seeds per R")->capture_default_str()->check(CLI::PositiveNumber);
  sweep_atg.attach(*sweep);
  sweep->add_option("--out", sweep_out, "Sweep CSV output")->required();

  // analyze-tree
  auto* tree_cmd = app.add_subcommand("analyze-tree", "Compare a Ward tree of class embeddings with a reference graph");
  std::string tree_embeddings, graph_path, targets_path, tree_out;
  bool tree_normalize = false;
  tree_cmd->add_option("--embeddings", tree_embeddings, "Sample embeddings")->required();
  tree_cmd->add_option("--graph", graph_path, "Edge list, one 'a<TAB>b' per line")->required();
  tree_cmd->add_option("--targets", targets_path, "JSON map class id -> graph node name")->required();
  tree_cmd->add_flag("--normalize", tree_normalize, "Unit-normalize class embeddings before clustering");
  tree_cmd->add_option("--out", tree_out, "Report JSON output")->required();

  // project
  auto* project = app.add_subcommand("project", "PCA projection of class embeddings (plus centroids)");
  std::string proj_embeddings, proj_centroids, proj_out;
  std::size_t proj_k = 2;
  bool proj_raw = false;
  project->add_option("--embeddings", proj_embeddings, "Sample embeddings")->required();
  project->add_option("--centroids", proj_centroids, "Centroid JSON from 'partition --centroids-out'");
  project->add_option("-k", proj_k, "Number of components")->capture_default_str()->check(CLI::PositiveNumber);
  project->add_flag("--raw", proj_raw, "Skip unit normalization of class embeddings");
  project->add_option("--out", proj_out, "Points CSV output")->required();

  // episode-eval
  auto* eval = app.add_subcommand("episode-eval", "Nearest-prototype accuracy on one split of a partition");
  std::string eval_embeddings, eval_partition, eval_split = "test", eval_out;
  std::size_t eval_way = 5, eval_shot = 5, eval_query = kDefaultQueryCount, eval_episodes = 200;
  std::uint64_t eval_seed = 0;
  eval->add_option("--embeddings", eval_embeddings, "Sample embeddings")->required();
  eval->add_option("--partition", eval_partition, "Partition JSON")->required();
  eval->add_option("--split", eval_split, "Split to evaluate")->capture_default_str()->check(CLI::IsMember({"train", "validation", "test"}));
  eval->add_option("--way", eval_way)->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--shot", eval_shot)->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--query", eval_query)->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--episodes", eval_episodes)->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed)->capture_default_str();
  eval->add_option("--out", eval_out, "Optional result JSON");

  // divergence
  auto* div = app.add_subcommand("divergence", "Gaussian divergences between train and test class embeddings");
  std::string div_embeddings, div_partition, div_out;
  double damping = kDefaultDamping;
  bool div_raw = false;
  div->add_option("--embeddings", div_embeddings, "Sample embeddings")->required();
  div->add_option("--partition", div_partition, "Partition JSON")->required();
  div->add_option("--damping", damping, "Diagonal covariance damping")->capture_default_str()->check(CLI::NonNegativeNumber);
  div->add_flag("--raw", div_raw, "Skip unit normalization of class embeddings");
  div->add_option("--out", div_out, "Optional result JSON");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic embedding table");
  SynthSpec spec;
  std::string synth_out, synth_format = "csv", synth_truth;
  synth->add_option("--classes", spec.num_classes)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--dim", spec.dim)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--samples", spec.samples_per_class, "Samples per class")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--superclusters", spec.num_superclusters)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--within", spec.within_spread, "Class-center spread around its supercluster")->capture_default_str();
  synth->add_option("--between", spec.between_spread, "Supercluster-center spread")->capture_default_str();
  synth->add_option("--seed", spec.seed)->capture_default_str();
  synth->add_option("--format", synth_format)->capture_default_str()->check(CLI::IsMember({"csv", "binary"}));
  synth->add_option("--out", synth_out, "Sample table output")->required();
  synth->add_option("--truth", synth_truth, "Optional ground-truth JSON (class id -> supercluster)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kBadArgs;
  }

  const std::size_t workers = detail::resolve_threads(threads);
  try {
    if (*part) {
      const AtgConfig config = atg.config(target);
      OrderedJson resolved = atg.describe();
      resolved["command"] = "partition";
      resolved["embeddings"] = embeddings_path;
      resolved["target_divergence"] = target;
      resolved["threads"] = workers;
      out << "config: " << resolved.dump() << '\n';
      const auto set = detail::prepare_set(detail::load_embeddings(embeddings_path), true, workers);
      const auto result = generate(set, config);
      write_file_atomic(out_path, to_json(result.partition));
      if (!centroids_out.empty()) write_file_atomic(centroids_out, centroids_to_json(result.centroids));
      const auto& p = result.partition;
      out << "achieved_divergence: " << p.meta.achieved_divergence << '\n';
      out << "split: train=" << p.train.size() << " validation=" << p.validation.size() << " test=" << p.test.size()
          << '\n';
      return kOk;
    }
    if (*sweep) {
      sweep_opts.threads = workers;
      const AtgConfig base = sweep_atg.config(0.0);
      OrderedJson resolved = sweep_atg.describe();
      resolved["command"] = "sweep";
      resolved["embeddings"] = sweep_embeddings;
      resolved["grid"] = sweep_opts.r_grid;
      resolved["episodes"] = sweep_opts.episodes_per_r;
      resolved["way"] = sweep_opts.way;
      resolved["shot"] = sweep_opts.shot;
      resolved["query"] = sweep_opts.query;
      resolved["seeds"] = sweep_opts.num_seeds;
      resolved["threads"] = workers;
      out << "config: " << resolved.dump() << '\n';
      const auto rows = difficulty_sweep(detail::load_embeddings(sweep_embeddings), base, sweep_opts);
      std::ostringstream csv;
      write_sweep_csv(csv, rows);
      write_file_atomic(sweep_out, csv.str());
      out << csv.str();
      return kOk;
    }
    if (*tree_cmd) {
      OrderedJson resolved{{"command", "analyze-tree"}, {"embeddings", tree_embeddings}, {"graph", graph_path},
                           {"targets", targets_path}, {"normalize", tree_normalize}};
      out << "config: " << resolved.dump() << '\n';
      const auto set = detail::prepare_set(detail::load_embeddings(tree_embeddings), tree_normalize, workers);
      std::istringstream graph_text(read_file(graph_path));
      ClassGraph reference = read_edge_list(graph_text);
      const auto names = class_names_from_json(read_file(targets_path));
      bind_classes(reference, names);
      std::vector<ClassId> targets;
      for (const auto& [id, name] : names) {
        if (set.index_of(id) == set.size()) {
          throw InvalidArgument("target class " + std::to_string(id) + " has no embeddings");
        }
        targets.push_back(id);
      }
      const MergeTree tree = ward_cluster(set);
      const auto cmp = compare_hops(tree_to_graph(tree), reference, targets);
      OrderedJson pairs = OrderedJson::array();
      for (std::size_t a = 0; a < targets.size(); ++a) {
        for (std::size_t b = a + 1; b < targets.size(); ++b) {
          const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
          pairs.push_back(OrderedJson{{"a", targets[a]},
                                      {"b", targets[b]},
                                      {"tree", cmp.a(ia, ib)},
                                      {"graph", cmp.b(ia, ib)},
                                      {"difference", std::abs(cmp.a(ia, ib) - cmp.b(ia, ib))}});
        }
      }
      OrderedJson report;
      report["mean_hop_distance"] = cmp.mean;
      report["num_pairs"] = cmp.pairs;
      report["pairs"] = std::move(pairs);
      report["tree"] = merge_tree_json(tree);
      write_file_atomic(tree_out, report.dump(2) + "\n");
      out << "mean_hop_distance: " << cmp.mean << " over " << cmp.pairs << " pairs\n";
      return kOk;
    }
    if (*project) {
      OrderedJson resolved{{"command", "project"}, {"embeddings", proj_embeddings}, {"centroids", proj_centroids},
                           {"k", proj_k}, {"normalize", !proj_raw}};
      out << "config: " << resolved.dump() << '\n';
      const auto set = detail::prepare_set(detail::load_embeddings(proj_embeddings), !proj_raw, workers);
      const PcaModel model = pca_fit(set, proj_k);
      std::ostringstream csv;
      csv << "# explained_variance";
      for (Eigen::Index c = 0; c < model.explained_variance.size(); ++c) {
        csv << ',' << detail::csv_number(model.explained_variance(c));
      }
      csv << "\nlabel";
      for (std::size_t c = 0; c < proj_k; ++c) csv << ",pc" << (c + 1);
      csv << '\n';
      auto emit = [&](const std::string& label, const Eigen::VectorXd& x) {
        const Eigen::VectorXd p = model.transform(x);
        csv << label;
        for (Eigen::Index c = 0; c < p.size(); ++c) csv << ',' << detail::csv_number(p(c));
        csv << '\n';
      };
      for (std::size_t i = 0; i < set.size(); ++i) {
        emit(std::to_string(set.class_ids[i]), set.means.row(static_cast<Eigen::Index>(i)).transpose());
      }
      if (!proj_centroids.empty()) {
        const auto c = centroids_from_json(read_file(proj_centroids));
        if (static_cast<std::size_t>(c.mu_train.size()) != set.dim() ||
            static_cast<std::size_t>(c.mu_test.size()) != set.dim()) {
          throw InvalidArgument("centroid dimension does not match embeddings");
        }
        emit("mu_train", c.mu_train);
        emit("mu_test", c.mu_test);
      }
      write_file_atomic(proj_out, csv.str());
      return kOk;
    }
    if (*eval) {
      OrderedJson resolved{{"command", "episode-eval"}, {"embeddings", eval_embeddings}, {"partition", eval_partition},
                           {"split", eval_split}, {"way", eval_way}, {"shot", eval_shot}, {"query", eval_query},
                           {"episodes", eval_episodes}, {"seed", eval_seed}, {"threads", workers}};
      out << "config: " << resolved.dump() << '\n';
      const auto table = detail::load_embeddings(eval_embeddings);
      const Partition p = partition_from_json(read_file(eval_partition));
      const auto& classes = eval_split == "train" ? p.train : eval_split == "validation" ? p.validation : p.test;
      const auto stats = summarize(
          evaluate_episodes(table, classes, eval_episodes, eval_way, eval_shot, eval_query, eval_seed, 0, workers));
      OrderedJson result{{"split", eval_split},
                         {"episodes", stats.count},
                         {"mean_accuracy", stats.mean},
                         {"std_accuracy", stats.std}};
      if (!eval_out.empty()) write_file_atomic(eval_out, result.dump() + "\n");
      out << "mean_accuracy: " << stats.mean << " std: " << stats.std << " episodes: " << stats.count << '\n';
      return kOk;
    }
    if (*div) {
      OrderedJson resolved{{"command", "divergence"}, {"embeddings", div_embeddings}, {"partition", div_partition},
                           {"damping", damping}, {"normalize", !div_raw}};
      out << "config: " << resolved.dump() << '\n';
      const auto set = detail::prepare_set(detail::load_embeddings(div_embeddings), !div_raw, workers);
      const Partition p = partition_from_json(read_file(div_partition));
      auto rows_of = [&](const std::vector<ClassId>& ids) {
        RowMatrix rows(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(set.dim()));
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const std::size_t at = set.index_of(ids[i]);
          if (at == set.size()) throw InvalidArgument("class " + std::to_string(ids[i]) + " has no embeddings");
          rows.row(static_cast<Eigen::Index>(i)) = set.means.row(static_cast<Eigen::Index>(at));
        }
        return rows;
      };
      const auto train = gaussian_summary(rows_of(p.train), damping);
      const auto test = gaussian_summary(rows_of(p.test), damping);
      OrderedJson result;
      result["euclidean"] = gaussian_divergence(train, test, DivergenceKind::EuclideanBetweenMeans);
      result["w2_squared"] = gaussian_divergence(train, test, DivergenceKind::Wasserstein2);
      result["kl_train_test"] = gaussian_divergence(train, test, DivergenceKind::KullbackLeibler);
      result["kl_test_train"] = gaussian_divergence(test, train, DivergenceKind::KullbackLeibler);
      result["symkl"] = gaussian_divergence(train, test, DivergenceKind::SymmetrizedKL);
      if (!div_out.empty()) write_file_atomic(div_out, result.dump() + "\n");
      out << result.dump() << '\n';
      return kOk;
    }
    if (*synth) {
      OrderedJson resolved{{"command", "synth"}, {"classes", spec.num_classes}, {"dim", spec.dim},
                           {"samples", spec.samples_per_class}, {"superclusters", spec.num_superclusters},
                           {"within", spec.within_spread}, {"between", spec.between_spread}, {"seed", spec.seed},
                           {"format", synth_format}};
      out << "config: " << resolved.dump() << '\n';
      const SynthData data = generate(spec);
      std::ostringstream bytes;
      save_samples(bytes, data.table, synth_format == "binary" ? SampleFormat::Binary : SampleFormat::Csv);
      write_file_atomic(synth_out, bytes.str());
      if (!synth_truth.empty()) write_file_atomic(synth_truth, ground_truth_json(data.supercluster));
      out << "wrote " << data.table.size() << " samples of " << spec.num_classes << " classes\n";
      return kOk;
    }
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kParseFailure;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const InvalidArgument& e) {
    err << "invalid input: " << e.what() << '\n';
    return kBadArgs;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kIoFailure;
  }
  return kBadArgs;
}

}  // namespace taskgen::cli
