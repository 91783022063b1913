#pragma once

// Entropic optimal transport between the embedded episode samples and the
// class centers, with iterative barycentric refinement of the centers.

#include "ummec/types.hpp"

#include <iosfwd>
#include <span>
#include <vector>

namespace ummec {

struct ClassCenters {
  Matrix c; ///< K x d
  /// Centers whose norm collapsed below 1e-12 (e.g. mean of antipodes).
  std::vector<bool> degenerate;
};

struct TransportPlan {
  Matrix p;     ///< n x K
  Vector r;     ///< source marginal
  Vector c_marg;
  int iterations = 0;
  double residual = 0.0; ///< max-norm marginal violation at exit
  bool converged = false;
};

struct SinkhornConfig {
  double lambda_ot = 10.0; ///< inverse entropic regularization
  double step_size = 0.3;  ///< fraction of the way each center moves per outer iteration
  int outer_iters = 10;
  double inner_tol = 1e-6;
  int inner_max_iters = 200;

  void validate() const;
};

struct OuterIterationStats {
  int iteration = 0;
  double objective = 0.0; ///< <P,M> + KL(P || r c^T) / lambda_ot
  double marginal_residual = 0.0;
  double center_displacement = 0.0;
  int inner_iterations = 0;
};

struct VariationalResult {
  ClassCenters centers;
  TransportPlan plan;
  std::vector<OuterIterationStats> stats;
};

ClassCenters init_centers(const Matrix& z, std::span<const LabeledIndex> support, Index n_classes);

/// M(i,k) = ||z_i - c_k||^2.
Matrix cost_matrix(const Matrix& z, const ClassCenters& centers);

/// Uniform probability vector of length n.
Vector uniform_marginal(Index n);

/// Sinkhorn scaling of the Gibbs kernel exp(-lambda_ot * M) until both
/// marginals are met within inner_tol or inner_max_iters is exhausted.
/// Throws NumericalUnderflow when the kernel loses a whole row or column.
TransportPlan sinkhorn_plan(const Matrix& cost, const Vector& r, const Vector& c_marg,
                            const SinkhornConfig& config);

/// Moves each center `step_size` of the way toward its plan-weighted
/// barycenter sum_i P(i,k) z_i / sum_i P(i,k).
ClassCenters update_centers(const TransportPlan& plan, const Matrix& z, const ClassCenters& centers,
                            double step_size);

/// <P,M> + KL(P || r c^T) / lambda_ot.
double transport_objective(const TransportPlan& plan, const Matrix& cost, double lambda_ot);

VariationalResult variational_sinkhorn(const Matrix& z, const ClassCenters& centers0,
                                       const SinkhornConfig& config, const Vector& r,
                                       const Vector& c_marg);

/// Nearest center by squared distance; ties go to the lower class index.
std::vector<Index> classify_queries(const Matrix& z_query, const ClassCenters& centers);

/// Largest plan entry in each listed row; ties go to the lower class index.
std::vector<Index> classify_by_plan(const TransportPlan& plan, std::span<const Index> query_rows);

void write_sinkhorn_stats_csv(std::ostream& os, const std::vector<OuterIterationStats>& stats);

} // namespace ummec
