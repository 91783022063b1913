#pragma once

#include "ummec/losses.hpp"
#include "ummec/types.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace ummec {

/// n embeddings on the unit sphere, one per row.
struct EmbeddingState {
  Matrix z;
};

struct OptimConfig {
  int steps = 150;
  double learning_rate = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0; ///< echoed for reproducibility; the update itself draws no randomness
  bool learn_mu = false;  ///< co-optimize the sigmoid scale with the embeddings

  void validate() const;
};

/// Row-normalizes features onto the unit sphere.
EmbeddingState init_embeddings(const Matrix& x);

/// Called after every update with the 1-based step index, the loss at the
/// iterate that was just left, and the new state.
using StepCallback = std::function<void(int step, const LossValue& loss, const EmbeddingState& state)>;

struct OptimResult {
  EmbeddingState state;
  double mu = 1.0;
  /// trace[k] is the loss at iterate k, for k = 0..steps.
  std::vector<LossValue> trace;
};

/// Adam on dL_total/dz followed by projection of each row back onto the
/// sphere. Throws Diverged when the loss or gradient stops being finite.
OptimResult optimize_episode(const EmbeddingState& z0, const EpisodeLabels& labels,
                             const LossParams& loss_params, const OptimConfig& config,
                             LossTerms terms = {}, const StepCallback& on_step = {});

void write_trace_csv(std::ostream& os, const std::vector<LossValue>& trace);

} // namespace ummec
