#include "ummec/optimizer.hpp"

#include "ummec/errors.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <string>

namespace ummec {

void OptimConfig::validate() const {
  if (steps < 1) throw InvalidInput("steps must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw InvalidInput("learning_rate must be a finite value >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw InvalidInput("adam_beta1 must lie in [0,1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw InvalidInput("adam_beta2 must lie in [0,1)");
  if (!(adam_eps > 0.0)) throw InvalidInput("adam_eps must be positive");
}

EmbeddingState init_embeddings(const Matrix& x) {
  if (!x.allFinite()) throw InvalidInput("init_embeddings: non-finite feature");
  EmbeddingState s{x};
  for (Index i = 0; i < x.rows(); ++i) {
    const double nrm = x.row(i).norm();
    if (nrm == 0.0) throw InvalidInput("init_embeddings: sample " + std::to_string(i) + " has zero norm");
    s.z.row(i) /= nrm;
  }
  return s;
}

namespace {

class Adam {
public:
  Adam(Index rows, Index cols, const OptimConfig& cfg)
      : cfg_(cfg), m_(Matrix::Zero(rows, cols)), v_(Matrix::Zero(rows, cols)) {}

  // Returns the update to add to the parameters.
  Matrix step(const Matrix& grad) {
    ++t_;
    m_ = cfg_.adam_beta1 * m_ + (1.0 - cfg_.adam_beta1) * grad;
    v_ = cfg_.adam_beta2 * v_ + (1.0 - cfg_.adam_beta2) * grad.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, t_);
    const double lr = cfg_.learning_rate;
    return ((-lr / bc1) * m_.array() / ((v_.array() / bc2).sqrt() + cfg_.adam_eps)).matrix();
  }

private:
  OptimConfig cfg_;
  Matrix m_, v_;
  int t_ = 0;
};

// Rows already on the sphere to within a few ulps are left untouched so
// that a null update is an exact identity.
void retract(Matrix& z, int step) {
  for (Index i = 0; i < z.rows(); ++i) {
    const double nrm = z.row(i).norm();
    if (!(nrm > 0.0) || !std::isfinite(nrm))
      throw Diverged(step, "row " + std::to_string(i) + " cannot be projected onto the sphere");
    if (std::abs(nrm - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) z.row(i) /= nrm;
  }
}

bool finite(const LossValue& v) {
  return std::isfinite(v.total) && std::isfinite(v.local) && std::isfinite(v.global);
}

} // namespace

OptimResult optimize_episode(const EmbeddingState& z0, const EpisodeLabels& labels,
                             const LossParams& loss_params, const OptimConfig& config,
                             LossTerms terms, const StepCallback& on_step) {
  config.validate();
  for (Index i = 0; i < z0.z.rows(); ++i) {
    if (!(std::abs(z0.z.row(i).norm() - 1.0) <= 1e-9))
      throw InvalidState("initial embedding row " + std::to_string(i) + " is not unit norm");
  }
  const Objective objective(labels, loss_params, terms);

  OptimResult out{z0, loss_params.mu, {}};
  out.trace.reserve(static_cast<std::size_t>(config.steps) + 1);
  Adam adam_z(z0.z.rows(), z0.z.cols(), config);
  Adam adam_mu(1, 1, config);
  Matrix grad;
  double grad_mu = 0.0;

  for (int step = 1; step <= config.steps; ++step) {
    const LossValue loss =
        objective.evaluate(out.state.z, out.mu, &grad, config.learn_mu ? &grad_mu : nullptr);
    if (!finite(loss)) throw Diverged(step, "loss is not finite");
    if (!grad.allFinite() || !std::isfinite(grad_mu)) throw Diverged(step, "gradient is not finite");
    out.trace.push_back(loss);

    out.state.z += adam_z.step(grad);
    retract(out.state.z, step);
    if (config.learn_mu) out.mu += adam_mu.step(Matrix::Constant(1, 1, grad_mu))(0, 0);
    if (!out.state.z.allFinite()) throw Diverged(step, "embedding is not finite");
    if (on_step) on_step(step, loss, out.state);
  }
  const LossValue last = objective.evaluate(out.state.z, out.mu, nullptr, nullptr);
  if (!finite(last)) throw Diverged(config.steps, "final loss is not finite");
  out.trace.push_back(last);
  return out;
}

void write_trace_csv(std::ostream& os, const std::vector<LossValue>& trace) {
  const auto old_prec = os.precision(17);
  os << "step,total,local,global,uniformity,classification\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& v = trace[k];
    os << k << ',' << v.total << ',' << v.local << ',' << v.global << ',' << v.uniformity << ','
       << v.classification << '\n';
  }
  os.precision(old_prec);
}

} // namespace ummec
