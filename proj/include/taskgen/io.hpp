#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "taskgen/analysis.hpp"
#include "taskgen/atg.hpp"
#include "taskgen/error.hpp"

namespace taskgen {

using OrderedJson = nlohmann::ordered_json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::Io, 0, "cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot move output into place at '" + path.string() + "': " + ec.message());
  }
}

inline std::string to_json(const Partition& p) {
  OrderedJson meta;
  meta["target_divergence"] = p.meta.target_divergence;
  meta["achieved_divergence"] = p.meta.achieved_divergence;
  meta["lambda"] = p.meta.lambda;
  meta["seed"] = p.meta.seed;
  meta["iterations"] = p.meta.iterations;
  meta["divergence_kind"] = std::string(to_string(p.meta.divergence_kind));
  meta["train_fraction"] = p.meta.train_fraction;
  OrderedJson j;
  j["train"] = p.train;
  j["validation"] = p.validation;
  j["test"] = p.test;
  j["meta"] = std::move(meta);
  return j.dump() + "\n";
}

inline Partition partition_from_json(const std::string& text) {
  try {
    const auto j = OrderedJson::parse(text);
    Partition p;
    p.train = j.at("train").get<std::vector<ClassId>>();
    p.validation = j.at("validation").get<std::vector<ClassId>>();
    p.test = j.at("test").get<std::vector<ClassId>>();
    if (j.contains("meta")) {
      const auto& m = j.at("meta");
      p.meta.target_divergence = m.value("target_divergence", 0.0);
      p.meta.achieved_divergence = m.value("achieved_divergence", 0.0);
      p.meta.lambda = m.value("lambda", 0.0);
      p.meta.seed = m.value("seed", std::uint64_t{0});
      p.meta.iterations = m.value("iterations", std::size_t{0});
      p.meta.divergence_kind = parse_divergence_kind(m.value("divergence_kind", std::string("symkl")));
      p.meta.train_fraction = m.value("train_fraction", 0.0);
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::Malformed, 0, std::string("partition JSON: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(ParseError::Kind::Malformed, 0, std::string("partition JSON: ") + e.what());
  }
}

inline std::string centroids_to_json(const CentroidPair& c) {
  OrderedJson j;
  j["mu_train"] = std::vector<double>(c.mu_train.data(), c.mu_train.data() + c.mu_train.size());
  j["mu_test"] = std::vector<double>(c.mu_test.data(), c.mu_test.data() + c.mu_test.size());
  return j.dump() + "\n";
}

inline CentroidPair centroids_from_json(const std::string& text) {
  try {
    const auto j = OrderedJson::parse(text);
    const auto train = j.at("mu_train").get<std::vector<double>>();
    const auto test = j.at("mu_test").get<std::vector<double>>();
    return CentroidPair::at(Eigen::Map<const Eigen::VectorXd>(train.data(), static_cast<Eigen::Index>(train.size())),
                            Eigen::Map<const Eigen::VectorXd>(test.data(), static_cast<Eigen::Index>(test.size())));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::Malformed, 0, std::string("centroid JSON: ") + e.what());
  }
}

inline OrderedJson merge_tree_json(const MergeTree& tree) {
  OrderedJson j;
  j["leaves"] = tree.leaves;
  OrderedJson merges = OrderedJson::array();
  for (const auto& m : tree.merges) merges.push_back(OrderedJson::array({m.node_a, m.node_b, m.height}));
  j["merges"] = std::move(merges);
  return j;
}

/// {"<class id>": "<node name>", ...}
inline std::map<ClassId, std::string> class_names_from_json(const std::string& text) {
  try {
    const auto j = OrderedJson::parse(text);
    if (!j.is_object()) throw ParseError(ParseError::Kind::Malformed, 0, "target map must be a JSON object");
    std::map<ClassId, std::string> out;
    for (const auto& [key, value] : j.items()) {
      std::size_t used = 0;
      const unsigned long id = std::stoul(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
      out[static_cast<ClassId>(id)] = value.get<std::string>();
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::Malformed, 0, std::string("target map: ") + e.what());
  } catch (const std::logic_error& e) {
    throw ParseError(ParseError::Kind::Malformed, 0, std::string("target map: invalid class id '") + e.what() + "'");
  }
}

inline std::string ground_truth_json(const std::map<ClassId, std::size_t>& truth) {
  OrderedJson j = OrderedJson::object();
  for (const auto& [id, g] : truth) j[std::to_string(id)] = g;
  return j.dump() + "\n";
}

}  // namespace taskgen
