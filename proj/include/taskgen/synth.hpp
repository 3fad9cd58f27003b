#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "taskgen/embeddings.hpp"
#include "taskgen/error.hpp"
#include "taskgen/rng.hpp"

namespace taskgen {

/// Shape of a synthetic two-level (supercluster -> class -> sample) dataset.
struct SynthSpec {
  std::size_t num_classes = 100;
  std::size_t dim = 32;
  std::size_t samples_per_class = 30;
  std::size_t num_superclusters = 2;
  double within_spread = 0.3;
  double between_spread = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_superclusters < 1 || num_classes < num_superclusters)
      throw InvalidArgument("synth: need num_classes >= num_superclusters >= 1");
    if (dim == 0 || samples_per_class == 0) throw InvalidArgument("synth: dim and samples_per_class must be positive");
    if (!(within_spread > 0.0) || !(between_spread > 0.0)) throw InvalidArgument("synth: spreads must be positive");
  }
};

struct SynthData {
  EmbeddingTable table;
  std::map<ClassId, std::size_t> supercluster;  // ground truth
};

/// Draws supercluster centers ~ N(0, between^2 I), assigns class c to
/// supercluster c mod G with center offset ~ N(0, within^2 I), then draws
/// samples around each class center with scale within / 2. Samples are laid
/// out class by class. The stream comes from Rng (xoshiro256**), so a seed
/// reproduces the table exactly.
inline SynthData generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto dim = static_cast<Eigen::Index>(spec.dim);
  auto gaussian = [&](double scale) {
    Eigen::RowVectorXd v(dim);
    for (Eigen::Index j = 0; j < dim; ++j) v(j) = scale * rng.normal();
    return v;
  };

  std::vector<Eigen::RowVectorXd> centers;
  for (std::size_t g = 0; g < spec.num_superclusters; ++g) centers.push_back(gaussian(spec.between_spread));

  SynthData out;
  out.table.vectors.resize(static_cast<Eigen::Index>(spec.num_classes * spec.samples_per_class), dim);
  out.table.labels.reserve(spec.num_classes * spec.samples_per_class);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const std::size_t g = c % spec.num_superclusters;
    out.supercluster[static_cast<ClassId>(c)] = g;
    const Eigen::RowVectorXd class_center = centers[g] + gaussian(spec.within_spread);
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      out.table.labels.push_back(static_cast<ClassId>(c));
      out.table.vectors.row(row++) = class_center + gaussian(spec.within_spread / 2.0);
    }
  }
  return out;
}

}  // namespace taskgen
