#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <vector>

namespace ummec {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A sample position inside an episode matrix together with its
/// episode-local class (0-based).
struct LabeledIndex {
  Index index = 0;
  Index cls = 0;
};

/// Label knowledge available while optimizing one episode. Row i of the
/// embedding matrix has `known[i]` set iff its class is visible (support).
struct EpisodeLabels {
  Index n_samples = 0;
  Index n_classes = 0;
  std::vector<LabeledIndex> labeled;
  std::vector<std::optional<Index>> known;

  static EpisodeLabels from_labeled(Index n_samples, Index n_classes,
                                    std::vector<LabeledIndex> labeled);
};

} // namespace ummec
