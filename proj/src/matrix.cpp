#include "hgnn/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace hgnn {

namespace {
void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}
}  // namespace

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix<T> out(a.rows(), b.cols());
  std::vector<double> acc(b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) acc[j] += aik * brow[j];
    }
    auto orow = out.row(i);
    for (std::size_t j = 0; j < b.cols(); ++j) orow[j] = static_cast<T>(acc[j]);
  }
  return out;
}

template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.rows() == b.rows(), "matmul_tn: row count mismatch");
  std::vector<double> acc(a.cols() * b.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto arow = a.row(r);
    auto brow = b.row(r);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ai = arow[i];
      if (ai == 0.0) continue;
      double* dst = acc.data() + i * b.cols();
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += ai * brow[j];
    }
  }
  Matrix<T> out(a.cols(), b.cols());
  for (std::size_t i = 0; i < acc.size(); ++i) out.storage()[i] = static_cast<T>(acc[i]);
  return out;
}

template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.cols() == b.cols(), "matmul_nt: column count mismatch");
  Matrix<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<double>(arow[k]) * brow[k];
      out(i, j) = static_cast<T>(s);
    }
  }
  return out;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename T>
double frobenius_norm(const Matrix<T>& a) {
  double s = 0.0;
  for (T v : a.storage()) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

template <typename T>
double max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.storage()[i]) - b.storage()[i]));
  return m;
}

#define HGNN_INSTANTIATE(T)                                             \
  template Matrix<T> matmul(const Matrix<T>&, const Matrix<T>&);        \
  template Matrix<T> matmul_tn(const Matrix<T>&, const Matrix<T>&);     \
  template Matrix<T> matmul_nt(const Matrix<T>&, const Matrix<T>&);     \
  template Matrix<T> transpose(const Matrix<T>&);                       \
  template double frobenius_norm(const Matrix<T>&);                     \
  template double max_abs_diff(const Matrix<T>&, const Matrix<T>&);

HGNN_INSTANTIATE(float)
HGNN_INSTANTIATE(double)
#undef HGNN_INSTANTIATE

}  // namespace hgnn
