#include "mcms/linalg.hpp"

#include <cassert>
#include <cmath>

namespace mcms {

Vector vech(const Matrix& m) {
  const int p = static_cast<int>(m.rows());
  assert(m.cols() == p);
  Vector v(vech_size(p));
  int k = 0;
  for (int j = 0; j < p; ++j)
    for (int i = j; i < p; ++i) v[k++] = m(i, j);
  return v;
}

Matrix unvech(const Vector& v) {
  // solve p(p+1)/2 = n for p
  const int n = static_cast<int>(v.size());
  const int p = static_cast<int>(std::lround((std::sqrt(8.0 * n + 1.0) - 1.0) / 2.0));
  assert(vech_size(p) == n);
  Matrix m(p, p);
  int k = 0;
  for (int j = 0; j < p; ++j)
    for (int i = j; i < p; ++i) {
      m(i, j) = v[k];
      m(j, i) = v[k];
      ++k;
    }
  return m;
}

std::pair<int, int> vech_indices(int p, int k) {
  for (int j = 0; j < p; ++j) {
    const int col_len = p - j;
    if (k < col_len) return {j + k, j};
    k -= col_len;
  }
  assert(false && "vech index out of range");
  return {-1, -1};
}

Matrix duplication_matrix(int p) {
  Matrix d = Matrix::Zero(p * p, vech_size(p));
  int k = 0;
  for (int j = 0; j < p; ++j)
    for (int i = j; i < p; ++i) {
      d(j * p + i, k) = 1.0;  // vec index of (i,j)
      d(i * p + j, k) = 1.0;  // vec index of (j,i)
      ++k;
    }
  return d;
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

bool logdet_spd(const Matrix& m, double& out) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) return false;
  out = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return std::isfinite(out);
}

}  // namespace mcms
