#pragma once

#include <Eigen/Dense>
#include <utility>

namespace mcms {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Number of elements in the half-vectorization of a p x p symmetric matrix.
inline int vech_size(int p) { return p * (p + 1) / 2; }

/// Half-vectorization: lower triangle (including diagonal) stacked by column,
/// i.e. (0,0),(1,0),..,(p-1,0),(1,1),(2,1),..
Vector vech(const Matrix& m);

/// Inverse of vech: rebuild the symmetric matrix.
Matrix unvech(const Vector& v);

/// (row, col) of the k-th vech element of a p x p matrix, row >= col.
std::pair<int, int> vech_indices(int p, int k);

/// Duplication matrix D (p^2 x p(p+1)/2) with vec(M) = D vech(M) for symmetric M.
Matrix duplication_matrix(int p);

/// Kronecker product A (x) B.
Matrix kronecker(const Matrix& a, const Matrix& b);

/// log|M| for symmetric positive definite M; returns false if M is not PD.
bool logdet_spd(const Matrix& m, double& out);

}  // namespace mcms
