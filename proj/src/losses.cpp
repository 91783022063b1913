#include "ummec/losses.hpp"

#include "ummec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace ummec {

void LossParams::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0,1)");
  if (!(eta > 0.0 && eta < 1.0)) throw InvalidInput("eta must lie in (0,1)");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidInput("gamma must be positive");
  if (!(lambda_w >= 0.0) || !std::isfinite(lambda_w)) throw InvalidInput("lambda_w must be >= 0");
  if (!std::isfinite(mu)) throw InvalidInput("mu must be finite");
  if (norm_factor < 0) throw InvalidInput("norm_factor must be >= 0");
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool pair_active(Index i, Index j, PairScope scope, const EpisodeLabels& labels) {
  if (i == j) return false;
  if (scope == PairScope::all_pairs) return true;
  const auto& a = labels.known[static_cast<std::size_t>(i)];
  const auto& b = labels.known[static_cast<std::size_t>(j)];
  return a && b && *a == *b;
}

std::vector<Index> class_counts(std::span<const LabeledIndex> support, Index n_classes) {
  std::vector<Index> counts(static_cast<std::size_t>(n_classes), 0);
  for (const auto& s : support) {
    if (s.cls < 0 || s.cls >= n_classes)
      throw InvalidEpisode("support class " + std::to_string(s.cls) + " out of range");
    ++counts[static_cast<std::size_t>(s.cls)];
  }
  for (Index k = 0; k < n_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0)
      throw InvalidEpisode("class " + std::to_string(k) + " has no support samples");
  }
  return counts;
}

// Uniformity value; accumulates dU/dP into grad when given.
double uniformity_impl(const Matrix& p, double gamma, Matrix* grad) {
  const Index n_cls = p.rows();
  if (n_cls < 2) return 0.0;
  const double g2 = gamma * gamma;
  const double norm = 1.0 / static_cast<double>(n_cls * (n_cls - 1));
  double sum = 0.0;
  for (Index c = 0; c < n_cls; ++c) {
    for (Index j = c + 1; j < n_cls; ++j) {
      const Eigen::RowVectorXd diff = p.row(c) - p.row(j);
      const double w = std::exp(-diff.squaredNorm() / g2);
      sum += 2.0 * w; // (c,j) and (j,c)
      if (grad) {
        const Eigen::RowVectorXd g = (-4.0 * norm * w / g2) * diff;
        grad->row(c) += g;
        grad->row(j) -= g;
      }
    }
  }
  return norm * sum;
}

// Classification value; accumulates gradients w.r.t. the prototypes and
// the decov rows of the labeled samples.
double classification_impl(const Matrix& decov, const Matrix& p,
                           std::span<const LabeledIndex> labeled, Matrix* grad_p,
                           Matrix* grad_decov) {
  if (labeled.empty()) throw InvalidInput("classification_loss: empty labeled set");
  const Index n_cls = p.rows();
  const double inv = 1.0 / static_cast<double>(labeled.size());
  Vector logits(n_cls);
  double total = 0.0;
  for (const auto& s : labeled) {
    if (s.cls < 0 || s.cls >= n_cls)
      throw InvalidInput("classification_loss: class " + std::to_string(s.cls) + " out of range");
    const auto row = decov.row(s.index);
    for (Index c = 0; c < n_cls; ++c) logits(c) = -(row - p.row(c)).squaredNorm();
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    total += lse - logits(s.cls);
    if (grad_p || grad_decov) {
      const Vector q = (logits.array() - lse).exp();
      for (Index c = 0; c < n_cls; ++c) {
        const double coeff = q(c) - (c == s.cls ? 1.0 : 0.0);
        const Eigen::RowVectorXd diff = row - p.row(c);
        if (grad_p) grad_p->row(c) += (2.0 * inv * coeff) * diff;
        if (grad_decov) grad_decov->row(s.index) -= (2.0 * inv * coeff) * diff;
      }
    }
  }
  return total * inv;
}

// Local alignment value; fills dL/dp (n x n) and dL/dmu when requested.
double local_impl(const Matrix& sim, double lambda_w, double mu, PairScope scope,
                  const EpisodeLabels& labels, Matrix* grad_sim, double* grad_mu,
                  unsigned* warnings) {
  const Index n = sim.rows();
  double total = 0.0;
  std::vector<double> weights(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j) {
      if (pair_active(i, j, scope, labels)) mx = std::max(mx, lambda_w * sim(i, j));
    }
    if (!std::isfinite(mx)) {
      if (warnings) *warnings |= kEmptyPairScope;
      continue;
    }
    double z = 0.0;
    for (Index j = 0; j < n; ++j) {
      auto& w = weights[static_cast<std::size_t>(j)];
      w = pair_active(i, j, scope, labels) ? std::exp(lambda_w * sim(i, j) - mx) : 0.0;
      z += w;
    }
    double row_sum = 0.0; // sum_j beta_ij f_ij
    for (Index j = 0; j < n; ++j) {
      auto& w = weights[static_cast<std::size_t>(j)];
      w /= z;
      if (w == 0.0) continue;
      const double s = sim(i, j);
      row_sum += w * s * sigmoid(mu * s);
    }
    total -= row_sum;
    if (!grad_sim && !grad_mu) continue;
    for (Index j = 0; j < n; ++j) {
      const double w = weights[static_cast<std::size_t>(j)];
      if (w == 0.0) continue;
      const double s = sim(i, j);
      const double sg = sigmoid(mu * s);
      const double f = s * sg;
      const double df = sg + s * mu * sg * (1.0 - sg);
      if (grad_sim) (*grad_sim)(i, j) -= w * (df + lambda_w * (f - row_sum));
      if (grad_mu) *grad_mu -= w * s * s * sg * (1.0 - sg);
    }
  }
  return total;
}

Matrix prototypes_impl(const Matrix& decov, std::span<const LabeledIndex> support, Index n_classes) {
  const auto counts = class_counts(support, n_classes);
  Matrix p = Matrix::Zero(n_classes, decov.cols());
  for (const auto& s : support) {
    if (s.index < 0 || s.index >= decov.rows())
      throw InvalidEpisode("support index " + std::to_string(s.index) + " out of range");
    p.row(s.cls) += decov.row(s.index);
  }
  for (Index k = 0; k < n_classes; ++k) p.row(k) /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
  return p;
}

void require_unit_rows(const Matrix& z) {
  for (Index i = 0; i < z.rows(); ++i) {
    const double nrm = z.row(i).norm();
    if (!(std::abs(nrm - 1.0) <= 1e-6))
      throw InvalidState("row " + std::to_string(i) + " has norm " + std::to_string(nrm) +
                         ", expected unit norm");
  }
}

} // namespace

Prototypes prototypes(const DecovMatrix& decov, std::span<const LabeledIndex> support,
                      Index n_classes) {
  return {prototypes_impl(decov.d, support, n_classes)};
}

double uniformity_loss(const Prototypes& p, double gamma, unsigned* warnings) {
  if (!(gamma > 0.0)) throw InvalidInput("gamma must be positive");
  if (p.p.rows() < 2 && warnings) *warnings |= kSingleClass;
  return uniformity_impl(p.p, gamma, nullptr);
}

double classification_loss(const DecovMatrix& decov, const Prototypes& p,
                           std::span<const LabeledIndex> labeled) {
  return classification_impl(decov.d, p.p, labeled, nullptr, nullptr);
}

double global_loss(double uniformity, double classification, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0,1)");
  return alpha * uniformity + (1.0 - alpha) * classification;
}

Matrix pairwise_similarity(const Matrix& z) {
  require_unit_rows(z);
  Matrix p = z * z.transpose();
  p.diagonal().setOnes();
  return p;
}

Matrix adaptive_weights(const Matrix& p, double lambda_w, PairScope scope,
                        const EpisodeLabels& labels, unsigned* warnings) {
  if (!(lambda_w >= 0.0)) throw InvalidInput("lambda_w must be >= 0");
  const Index n = p.rows();
  if (p.cols() != n || static_cast<Index>(labels.known.size()) != n)
    throw InvalidInput("adaptive_weights: shape mismatch");
  Matrix beta = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j) {
      if (pair_active(i, j, scope, labels)) mx = std::max(mx, lambda_w * p(i, j));
    }
    if (!std::isfinite(mx)) {
      if (warnings) *warnings |= kEmptyPairScope;
      continue;
    }
    for (Index j = 0; j < n; ++j) {
      if (pair_active(i, j, scope, labels)) beta(i, j) = std::exp(lambda_w * p(i, j) - mx);
    }
    beta.row(i) /= beta.row(i).sum();
  }
  return beta;
}

double psi(double s, double mu) { return sigmoid(mu * s); }

double local_loss(const Matrix& z, const LossParams& params, const EpisodeLabels& labels,
                  unsigned* warnings) {
  params.validate();
  if (static_cast<Index>(labels.known.size()) != z.rows())
    throw InvalidInput("local_loss: labels do not match embedding rows");
  const Matrix sim = pairwise_similarity(z);
  return local_impl(sim, params.lambda_w, params.mu, params.pair_scope, labels, nullptr, nullptr,
                    warnings);
}

Objective::Objective(EpisodeLabels labels, LossParams params, LossTerms terms)
    : labels_(std::move(labels)), params_(params), terms_(terms) {
  params_.validate();
  if (!terms_.any()) throw InvalidInput("at least one loss term must be enabled");
  if (labels_.labeled.empty()) throw InvalidEpisode("episode has no labeled samples");
  class_counts(labels_.labeled, labels_.n_classes);
}

double Objective::local_weight() const noexcept {
  if (!terms_.global) return 1.0;
  if (!terms_.local) return 0.0;
  return params_.eta;
}

LossValue Objective::evaluate(const Matrix& z, double mu, Matrix* grad_z, double* grad_mu) const {
  const Index n = z.rows();
  if (n != labels_.n_samples)
    throw InvalidInput("embedding has " + std::to_string(n) + " rows, episode has " +
                       std::to_string(labels_.n_samples));
  const double w_local = local_weight();
  const double w_global = 1.0 - w_local;
  const double m = static_cast<double>(params_.norm_factor == 0 ? n : params_.norm_factor);

  LossValue v;
  if (grad_z) *grad_z = Matrix::Zero(n, z.cols());
  if (grad_mu) *grad_mu = 0.0;

  // Global family, in decov space.
  const DistanceMatrices dist = distance_matrices(z);
  const Matrix decov = detail::center(dist.delta_b, m);
  const Matrix proto = prototypes_impl(decov, labels_.labeled, labels_.n_classes);
  const bool global_grad = grad_z && terms_.global;
  Matrix g_unif, g_cls_p, g_decov;
  if (global_grad) {
    g_unif = Matrix::Zero(proto.rows(), proto.cols());
    g_cls_p = Matrix::Zero(proto.rows(), proto.cols());
    g_decov = Matrix::Zero(n, n);
  }
  if (proto.rows() < 2) v.warnings |= kSingleClass;
  v.uniformity = uniformity_impl(proto, params_.gamma, global_grad ? &g_unif : nullptr);
  v.classification = classification_impl(decov, proto, labels_.labeled,
                                         global_grad ? &g_cls_p : nullptr,
                                         global_grad ? &g_decov : nullptr);
  v.global = params_.alpha * v.uniformity + (1.0 - params_.alpha) * v.classification;

  if (global_grad) {
    const Matrix g_proto =
        w_global * (params_.alpha * g_unif + (1.0 - params_.alpha) * g_cls_p);
    g_decov *= w_global * (1.0 - params_.alpha);
    std::vector<double> counts(static_cast<std::size_t>(labels_.n_classes), 0.0);
    for (const auto& s : labels_.labeled) counts[static_cast<std::size_t>(s.cls)] += 1.0;
    for (const auto& s : labels_.labeled)
      g_decov.row(s.index) += g_proto.row(s.cls) / counts[static_cast<std::size_t>(s.cls)];
    *grad_z += detail::decov_backward(z, dist, g_decov, m);
  }

  // Local family, on the sphere.
  Matrix sim = z * z.transpose();
  const bool local_grad = terms_.local && (grad_z || grad_mu);
  Matrix g_sim;
  if (local_grad) g_sim = Matrix::Zero(n, n);
  double g_mu = 0.0;
  v.local = local_impl(sim, params_.lambda_w, mu, params_.pair_scope, labels_,
                       local_grad && grad_z ? &g_sim : nullptr,
                       local_grad && grad_mu ? &g_mu : nullptr, &v.warnings);
  if (local_grad && grad_z) *grad_z += w_local * (g_sim + g_sim.transpose()) * z;
  if (local_grad && grad_mu) *grad_mu = w_local * g_mu;

  v.total = w_local * v.local + w_global * v.global;
  return v;
}

LossValue total_loss(const Matrix& z, const EpisodeLabels& labels, const LossParams& params,
                     LossTerms terms) {
  require_unit_rows(z);
  return Objective(labels, params, terms).value(z);
}

Matrix total_loss_gradient(const Matrix& z, const EpisodeLabels& labels,
                           const LossParams& params, LossTerms terms) {
  require_unit_rows(z);
  const Objective obj(labels, params, terms);
  Matrix g;
  obj.evaluate(z, params.mu, &g, nullptr);
  if (!g.allFinite()) throw InvalidState("loss gradient is not finite");
  return g;
}

} // namespace ummec
