#include "ummec/decov.hpp"

#include "ummec/errors.hpp"

#include <cmath>
#include <string>

namespace ummec {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidInput(std::string(what) + " contains non-finite entries");
}

} // namespace

Matrix pairwise_sq_dists(const Matrix& z) {
  if (z.rows() < 1 || z.cols() < 1) throw InvalidInput("pairwise_sq_dists: empty input");
  require_finite(z, "pairwise_sq_dists input");

  const Matrix gram = z * z.transpose();
  const Vector sq = gram.diagonal();
  Matrix out = (sq.replicate(1, z.rows()) + sq.transpose().replicate(z.rows(), 1)) - 2.0 * gram;
  for (Index j = 0; j < out.cols(); ++j) {
    for (Index i = 0; i < out.rows(); ++i) {
      if (out(i, j) < 0.0) out(i, j) = 0.0;
    }
    out(j, j) = 0.0;
  }
  // The expansion is symmetric only up to round-off.
  return (out + out.transpose()) * 0.5;
}

Matrix elementwise_sqrt(const Matrix& delta_e) {
  Matrix out(delta_e.rows(), delta_e.cols());
  for (Index j = 0; j < delta_e.cols(); ++j) {
    for (Index i = 0; i < delta_e.rows(); ++i) {
      const double v = delta_e(i, j);
      if (!std::isfinite(v)) throw InvalidInput("elementwise_sqrt: non-finite entry");
      if (v < -kSqrtEpsilon)
        throw InvalidInput("elementwise_sqrt: negative entry " + std::to_string(v) + " at (" +
                           std::to_string(i) + "," + std::to_string(j) + ")");
      out(i, j) = v < kSqrtEpsilon ? 0.0 : std::sqrt(v);
    }
  }
  return out;
}

DistanceMatrices distance_matrices(const Matrix& z) {
  DistanceMatrices dm;
  dm.delta_e = pairwise_sq_dists(z);
  dm.delta_b = elementwise_sqrt(dm.delta_e);
  return dm;
}

namespace detail {

Matrix center(const Matrix& a, double norm_factor) {
  const Vector row_sums = a.rowwise().sum();
  const Eigen::RowVectorXd col_sums = a.colwise().sum();
  const double total = a.sum();
  Matrix out = a;
  out.colwise() -= row_sums / norm_factor;
  out.rowwise() -= col_sums / norm_factor;
  out.array() += total / (norm_factor * norm_factor);
  return out;
}

Matrix decov_backward(const Matrix& z, const DistanceMatrices& dist, const Matrix& grad_decov,
                      double norm_factor) {
  const Index n = z.rows();
  const Matrix grad_b = center(grad_decov, norm_factor);
  Matrix grad_e = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (dist.delta_e(i, j) >= kSqrtEpsilon) grad_e(i, j) = grad_b(i, j) / (2.0 * dist.delta_b(i, j));
    }
  }
  // d||z_i - z_j||^2 = 2 (z_i - z_j)^T (dz_i - dz_j)
  const Matrix s = grad_e + grad_e.transpose();
  const Vector deg = s.rowwise().sum();
  return 2.0 * (deg.asDiagonal() * z - s * z);
}

} // namespace detail

DecovMatrix double_center(const Matrix& delta_b, Index norm_factor) {
  if (delta_b.rows() != delta_b.cols())
    throw InvalidInput("double_center: matrix is " + std::to_string(delta_b.rows()) + "x" +
                       std::to_string(delta_b.cols()) + ", expected square");
  if (norm_factor < 1) throw InvalidInput("double_center: norm_factor must be >= 1");
  require_finite(delta_b, "double_center input");
  return {detail::center(delta_b, static_cast<double>(norm_factor)), norm_factor};
}

DecovMatrix decov_rows(const Matrix& z, Index norm_factor) {
  const Index m = norm_factor == 0 ? z.rows() : norm_factor;
  return double_center(elementwise_sqrt(pairwise_sq_dists(z)), m);
}

} // namespace ummec
