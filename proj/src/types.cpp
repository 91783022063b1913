#include "ummec/types.hpp"

#include "ummec/errors.hpp"

#include <string>

namespace ummec {

EpisodeLabels EpisodeLabels::from_labeled(Index n_samples, Index n_classes,
                                          std::vector<LabeledIndex> labeled) {
  if (n_samples < 0 || n_classes < 1) throw InvalidEpisode("episode needs at least one class");
  EpisodeLabels out;
  out.n_samples = n_samples;
  out.n_classes = n_classes;
  out.known.assign(static_cast<std::size_t>(n_samples), std::nullopt);
  for (const auto& l : labeled) {
    if (l.index < 0 || l.index >= n_samples)
      throw InvalidEpisode("labeled index " + std::to_string(l.index) + " out of range");
    if (l.cls < 0 || l.cls >= n_classes)
      throw InvalidEpisode("class " + std::to_string(l.cls) + " out of range");
    out.known[static_cast<std::size_t>(l.index)] = l.cls;
  }
  out.labeled = std::move(labeled);
  return out;
}

} // namespace ummec
