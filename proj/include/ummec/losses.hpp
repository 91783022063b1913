#pragma once

// Embedding losses: prototype uniformity and classification in decov space,
// the adaptively weighted local alignment on the sphere, and their mixes.

#include "ummec/decov.hpp"
#include "ummec/types.hpp"

#include <span>

namespace ummec {

enum class PairScope { all_pairs, same_class_pairs };

struct LossParams {
  double alpha = 0.5;    ///< uniformity vs classification mix
  double eta = 0.5;      ///< local vs global mix
  double gamma = 1.0;    ///< uniformity bandwidth
  double lambda_w = 5.0; ///< adaptive weighting temperature
  double mu = 1.0;       ///< sigmoid scale
  PairScope pair_scope = PairScope::all_pairs;
  Index norm_factor = 0; ///< centering divisor; 0 means the episode size n

  void validate() const;
};

/// Which loss families participate. A disabled family contributes nothing
/// and the mix weight moves entirely to the other one.
struct LossTerms {
  bool local = true;
  bool global = true;

  bool any() const noexcept { return local || global; }
};

enum LossWarning : unsigned {
  kNoWarning = 0,
  kSingleClass = 1u << 0,    ///< fewer than two prototypes, uniformity is 0
  kEmptyPairScope = 1u << 1, ///< some adaptive weight row had no partners
};

struct Prototypes {
  Matrix p; ///< N x n, one decov-space prototype per row
};

struct LossValue {
  double total = 0.0;
  double local = 0.0;
  double global = 0.0;
  double uniformity = 0.0;
  double classification = 0.0;
  unsigned warnings = kNoWarning;
};

Prototypes prototypes(const DecovMatrix& decov, std::span<const LabeledIndex> support,
                      Index n_classes);

double uniformity_loss(const Prototypes& p, double gamma, unsigned* warnings = nullptr);

double classification_loss(const DecovMatrix& decov, const Prototypes& p,
                           std::span<const LabeledIndex> labeled);

double global_loss(double uniformity, double classification, double alpha);

/// Cosine similarity z_i^T z_j; rows must be unit norm within 1e-6.
Matrix pairwise_similarity(const Matrix& z);

/// Row-wise softmax of lambda_w * p over the active pairs. Self pairs are
/// never active; under same_class_pairs only pairs with equal known labels
/// are. Rows without active pairs are zero.
Matrix adaptive_weights(const Matrix& p, double lambda_w, PairScope scope,
                        const EpisodeLabels& labels, unsigned* warnings = nullptr);

double psi(double s, double mu);

double local_loss(const Matrix& z, const LossParams& params, const EpisodeLabels& labels,
                  unsigned* warnings = nullptr);

LossValue total_loss(const Matrix& z, const EpisodeLabels& labels, const LossParams& params,
                     LossTerms terms = {});

/// dL_total/dz in the ambient space (no tangent projection).
Matrix total_loss_gradient(const Matrix& z, const EpisodeLabels& labels,
                           const LossParams& params, LossTerms terms = {});

/// The combined loss as a smooth function on all of R^{n x d}. Unlike the
/// free functions above it does not insist on unit-norm rows, which lets
/// finite differences probe it off the sphere.
class Objective {
public:
  Objective(EpisodeLabels labels, LossParams params, LossTerms terms = {});

  const EpisodeLabels& labels() const noexcept { return labels_; }
  const LossParams& params() const noexcept { return params_; }
  const LossTerms& terms() const noexcept { return terms_; }

  /// Weight of the local term in the total after applying `terms`.
  double local_weight() const noexcept;

  LossValue value(const Matrix& z) const { return evaluate(z, params_.mu, nullptr, nullptr); }

  /// Evaluates at sigmoid scale `mu`, optionally filling dL/dz and dL/dmu.
  LossValue evaluate(const Matrix& z, double mu, Matrix* grad_z, double* grad_mu) const;

private:
  EpisodeLabels labels_;
  LossParams params_;
  LossTerms terms_;
};

} // namespace ummec
