#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgnn {

/// Dense row-major matrix. Used for features, layer embeddings, gradients
/// and weights. Training runs use float storage; tests use double.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw std::invalid_argument("Matrix: data size " + std::to_string(data_.size()) +
                                  " != rows*cols " + std::to_string(rows_ * cols_));
    }
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Grows or shrinks the row count, keeping existing rows.
  void resize_rows(std::size_t rows) {
    data_.resize(rows * cols_, T{0});
    rows_ = rows;
  }

  template <typename U>
  [[nodiscard]] Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.storage()[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using EmbMatrix = Matrix<float>;

// Basic products; all accumulate in double.
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);
/// aᵀ·b
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b);
/// a·bᵀ
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b);
template <typename T>
Matrix<T> transpose(const Matrix<T>& a);

template <typename T>
double frobenius_norm(const Matrix<T>& a);
template <typename T>
double max_abs_diff(const Matrix<T>& a, const Matrix<T>& b);

/// Gathers the given rows of `src` into a new matrix.
template <typename T, typename Index>
Matrix<T> gather_rows(const Matrix<T>& src, std::span<const Index> rows) {
  Matrix<T> out(rows.size(), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto s = src.row(static_cast<std::size_t>(rows[i]));
    std::copy(s.begin(), s.end(), out.row(i).begin());
  }
  return out;
}

/// FNV-1a over the raw bytes; used for bit-exact trace comparisons.
template <typename T>
std::uint64_t checksum(const Matrix<T>& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto bytes = reinterpret_cast<const unsigned char*>(m.storage().data());
  for (std::size_t i = 0; i < m.size() * sizeof(T); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace hgnn
