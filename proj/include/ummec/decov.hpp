#pragma once

// Pairwise distances and the double-centered ("decentralized covariance")
// distance matrix used as the per-sample representation by the losses.

#include "ummec/types.hpp"

namespace ummec {

/// Squared distances below this value are treated as exact zeros by the
/// square root, with zero derivative.
inline constexpr double kSqrtEpsilon = 1e-12;

struct DistanceMatrices {
  Matrix delta_e; ///< squared Euclidean distances
  Matrix delta_b; ///< Euclidean distances
};

struct DecovMatrix {
  Matrix d;
  Index norm_factor = 1;
};

/// ||z_i - z_j||^2 over the rows of `z`, via the Gram expansion. Negative
/// round-off is clamped to zero and the diagonal is exactly zero.
Matrix pairwise_sq_dists(const Matrix& z);

Matrix elementwise_sqrt(const Matrix& delta_e);

DistanceMatrices distance_matrices(const Matrix& z);

/// Removes row means, column means and the grand mean, all with divisor
/// `norm_factor`. With norm_factor == n this is J * delta_b * J for the
/// centering matrix J = I - 11^T / n.
DecovMatrix double_center(const Matrix& delta_b, Index norm_factor);

/// pairwise_sq_dists -> elementwise_sqrt -> double_center. A norm_factor of
/// 0 selects n.
DecovMatrix decov_rows(const Matrix& z, Index norm_factor = 0);

namespace detail {

// The centering map is self-adjoint, so this also pulls gradients back
// from the centered matrix to delta_b. No validation.
Matrix center(const Matrix& a, double norm_factor);

// Given dL/d(decov), returns dL/dz for the same z.
Matrix decov_backward(const Matrix& z, const DistanceMatrices& dist, const Matrix& grad_decov,
                      double norm_factor);

} // namespace detail

} // namespace ummec
