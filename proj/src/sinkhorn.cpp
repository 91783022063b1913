#include "ummec/sinkhorn.hpp"

#include "ummec/errors.hpp"

#include <cmath>
#include <ostream>
#include <string>

namespace ummec {

void SinkhornConfig::validate() const {
  if (!(lambda_ot > 0.0) || !std::isfinite(lambda_ot)) throw InvalidInput("lambda_ot must be positive");
  if (!(step_size >= 0.0 && step_size <= 1.0)) throw InvalidInput("step_size must lie in [0,1]");
  if (outer_iters < 1) throw InvalidInput("outer_iters must be >= 1");
  if (!(inner_tol > 0.0)) throw InvalidInput("inner_tol must be positive");
  if (inner_max_iters < 1) throw InvalidInput("inner_max_iters must be >= 1");
}

namespace {

constexpr double kDegenerateNorm = 1e-12;

std::vector<bool> flag_degenerate(const Matrix& c) {
  std::vector<bool> out(static_cast<std::size_t>(c.rows()));
  for (Index k = 0; k < c.rows(); ++k) out[static_cast<std::size_t>(k)] = c.row(k).norm() < kDegenerateNorm;
  return out;
}

void require_distribution(const Vector& v, const char* name) {
  if (v.size() == 0 || (v.array() <= 0.0).any() || !v.allFinite())
    throw InvalidInput(std::string(name) + " must be strictly positive");
  if (std::abs(v.sum() - 1.0) > 1e-9) throw InvalidInput(std::string(name) + " must sum to 1");
}

} // namespace

ClassCenters init_centers(const Matrix& z, std::span<const LabeledIndex> support, Index n_classes) {
  if (n_classes < 1) throw InvalidEpisode("need at least one class");
  Matrix c = Matrix::Zero(n_classes, z.cols());
  std::vector<Index> counts(static_cast<std::size_t>(n_classes), 0);
  for (const auto& s : support) {
    if (s.cls < 0 || s.cls >= n_classes || s.index < 0 || s.index >= z.rows())
      throw InvalidEpisode("support entry out of range");
    c.row(s.cls) += z.row(s.index);
    ++counts[static_cast<std::size_t>(s.cls)];
  }
  for (Index k = 0; k < n_classes; ++k) {
    const auto cnt = counts[static_cast<std::size_t>(k)];
    if (cnt == 0) throw InvalidEpisode("class " + std::to_string(k) + " has no support samples");
    c.row(k) /= static_cast<double>(cnt);
  }
  return {c, flag_degenerate(c)};
}

Matrix cost_matrix(const Matrix& z, const ClassCenters& centers) {
  if (z.cols() != centers.c.cols())
    throw InvalidInput("cost_matrix: embedding dim " + std::to_string(z.cols()) +
                       " != center dim " + std::to_string(centers.c.cols()));
  Matrix m(z.rows(), centers.c.rows());
  for (Index k = 0; k < centers.c.rows(); ++k) {
    for (Index i = 0; i < z.rows(); ++i) m(i, k) = (z.row(i) - centers.c.row(k)).squaredNorm();
  }
  return m;
}

Vector uniform_marginal(Index n) {
  if (n < 1) throw InvalidInput("marginal length must be >= 1");
  return Vector::Constant(n, 1.0 / static_cast<double>(n));
}

TransportPlan sinkhorn_plan(const Matrix& cost, const Vector& r, const Vector& c_marg,
                            const SinkhornConfig& config) {
  config.validate();
  if (cost.rows() != r.size() || cost.cols() != c_marg.size())
    throw InvalidInput("sinkhorn_plan: marginal sizes do not match the cost matrix");
  if (!cost.allFinite()) throw InvalidInput("sinkhorn_plan: non-finite cost");
  require_distribution(r, "r");
  require_distribution(c_marg, "c_marg");

  // Shifting each cost row by its minimum rescales kernel rows, which the
  // u scaling absorbs; the resulting plan is unchanged.
  const Vector row_min = cost.rowwise().minCoeff();
  Matrix kernel = (-config.lambda_ot * (cost.colwise() - row_min).array()).exp().matrix();
  for (Index k = 0; k < kernel.cols(); ++k) {
    if (!(kernel.col(k).maxCoeff() > 0.0))
      throw NumericalUnderflow("Gibbs kernel column " + std::to_string(k) +
                               " underflowed to zero; reduce lambda_ot");
  }

  Vector u = Vector::Ones(cost.rows());
  Vector v = Vector::Ones(cost.cols());
  TransportPlan plan;
  plan.r = r;
  plan.c_marg = c_marg;
  for (int it = 1; it <= config.inner_max_iters; ++it) {
    u = r.cwiseQuotient(kernel * v);
    v = c_marg.cwiseQuotient(kernel.transpose() * u);
    if (!u.allFinite() || !v.allFinite())
      throw NumericalUnderflow("Sinkhorn scaling overflowed; reduce lambda_ot");
    const double row_res = (u.cwiseProduct(kernel * v) - r).cwiseAbs().maxCoeff();
    const double col_res = (v.cwiseProduct(kernel.transpose() * u) - c_marg).cwiseAbs().maxCoeff();
    plan.iterations = it;
    plan.residual = std::max(row_res, col_res);
    if (plan.residual < config.inner_tol) {
      plan.converged = true;
      break;
    }
  }
  plan.p = u.asDiagonal() * kernel * v.asDiagonal();
  return plan;
}

ClassCenters update_centers(const TransportPlan& plan, const Matrix& z, const ClassCenters& centers,
                            double step_size) {
  if (plan.p.rows() != z.rows() || plan.p.cols() != centers.c.rows())
    throw InvalidInput("update_centers: shape mismatch");
  const Vector mass = plan.p.colwise().sum().transpose();
  for (Index k = 0; k < mass.size(); ++k) {
    if (!(mass(k) > 0.0))
      throw DegenerateClass(static_cast<std::size_t>(k),
                            "class " + std::to_string(k) + " received no transport mass");
  }
  const Matrix barycenters = (plan.p.transpose() * z).array().colwise() / mass.array();
  Matrix c = centers.c + step_size * (barycenters - centers.c);
  return {c, flag_degenerate(c)};
}

double transport_objective(const TransportPlan& plan, const Matrix& cost, double lambda_ot) {
  double linear = 0.0;
  double kl = 0.0;
  for (Index k = 0; k < plan.p.cols(); ++k) {
    for (Index i = 0; i < plan.p.rows(); ++i) {
      const double p = plan.p(i, k);
      linear += p * cost(i, k);
      if (p > 0.0) kl += p * std::log(p / (plan.r(i) * plan.c_marg(k)));
    }
  }
  return linear + kl / lambda_ot;
}

VariationalResult variational_sinkhorn(const Matrix& z, const ClassCenters& centers0,
                                       const SinkhornConfig& config, const Vector& r,
                                       const Vector& c_marg) {
  config.validate();
  VariationalResult out{centers0, {}, {}};
  for (int t = 1; t <= config.outer_iters; ++t) {
    const Matrix cost = cost_matrix(z, out.centers);
    out.plan = sinkhorn_plan(cost, r, c_marg, config);
    ClassCenters next = update_centers(out.plan, z, out.centers, config.step_size);

    OuterIterationStats s;
    s.iteration = t;
    s.objective = transport_objective(out.plan, cost, config.lambda_ot);
    s.marginal_residual = out.plan.residual;
    s.inner_iterations = out.plan.iterations;
    for (Index k = 0; k < next.c.rows(); ++k)
      s.center_displacement = std::max(s.center_displacement, (next.c.row(k) - out.centers.c.row(k)).norm());
    out.stats.push_back(s);
    out.centers = std::move(next);
    if (s.center_displacement < 1e-8) break;
  }
  return out;
}

std::vector<Index> classify_queries(const Matrix& z_query, const ClassCenters& centers) {
  if (z_query.rows() > 0 && z_query.cols() != centers.c.cols())
    throw InvalidInput("classify_queries: dimension mismatch");
  std::vector<Index> out(static_cast<std::size_t>(z_query.rows()));
  for (Index q = 0; q < z_query.rows(); ++q) {
    Index best = 0;
    double best_d = (z_query.row(q) - centers.c.row(0)).squaredNorm();
    for (Index k = 1; k < centers.c.rows(); ++k) {
      const double d = (z_query.row(q) - centers.c.row(k)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    out[static_cast<std::size_t>(q)] = best;
  }
  return out;
}

std::vector<Index> classify_by_plan(const TransportPlan& plan, std::span<const Index> query_rows) {
  std::vector<Index> out;
  out.reserve(query_rows.size());
  for (const Index row : query_rows) {
    if (row < 0 || row >= plan.p.rows()) throw InvalidInput("classify_by_plan: row out of range");
    Index best = 0;
    for (Index k = 1; k < plan.p.cols(); ++k) {
      if (plan.p(row, k) > plan.p(row, best)) best = k;
    }
    out.push_back(best);
  }
  return out;
}

void write_sinkhorn_stats_csv(std::ostream& os, const std::vector<OuterIterationStats>& stats) {
  const auto old_prec = os.precision(17);
  os << "iteration,objective,marginal_residual,center_displacement,inner_iterations\n";
  for (const auto& s : stats) {
    os << s.iteration << ',' << s.objective << ',' << s.marginal_residual << ','
       << s.center_displacement << ',' << s.inner_iterations << '\n';
  }
  os.precision(old_prec);
}

} // namespace ummec
