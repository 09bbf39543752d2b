// Copyright 2026 The tafenet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TAFE_TENSOR_HPP
#define TAFE_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tafe {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ')';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

/// Dense row-major tensor. Extents are strictly positive; a scalar is shape {1}.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(shape_numel(shape_), T(0));
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != shape_numel(shape_)) {
      throw std::invalid_argument("tensor: data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  static Tensor vector(std::vector<T> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }

  static Tensor matrix(std::size_t r, std::size_t c, std::vector<T> v) {
    return Tensor({r, c}, std::move(v));
  }

  /// Identity matrix n x n.
  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = T(1);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const { require_rank(2); return shape_[0]; }
  std::size_t cols() const { require_rank(2); return shape_[1]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  void fill(T v) {
    for (T& x : data_) x = v;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (T x : data_)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  void check_shape() const {
    if (shape_.empty()) throw std::invalid_argument("tensor: empty shape");
    for (std::size_t e : shape_) {
      if (e == 0)
        throw std::invalid_argument("tensor: shape must have positive extents, got " +
                                    shape_str(shape_));
    }
  }

  void require_rank(std::size_t r) const {
    if (shape_.size() != r)
      throw std::invalid_argument("tensor: expected rank " + std::to_string(r) + ", got shape " +
                                  shape_str(shape_));
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Copy of row i of a rank-2 tensor, as a rank-1 tensor.
template <typename T>
Tensor<T> row_of(const Tensor<T>& m, std::size_t i) {
  if (i >= m.rows())
    throw std::out_of_range("row_of: row " + std::to_string(i) + " out of range for " +
                            shape_str(m.shape()));
  std::vector<T> v(m.data() + i * m.cols(), m.data() + (i + 1) * m.cols());
  return Tensor<T>::vector(std::move(v));
}

/// Copy of column j of a rank-2 tensor, as a rank-1 tensor.
template <typename T>
Tensor<T> col_of(const Tensor<T>& m, std::size_t j) {
  if (j >= m.cols())
    throw std::out_of_range("col_of: column " + std::to_string(j) + " out of range for " +
                            shape_str(m.shape()));
  std::vector<T> v(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m(i, j);
  return Tensor<T>::vector(std::move(v));
}

// Norm floor used wherever a cosine denominator could degenerate.
inline constexpr double kCosineNormFloor = 1e-8;

namespace kernels {

// C(m x n) += A(m x k) * B(k x n)
template <typename T>
void matmul_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA(m x k) += G(m x n) * B(k x n)^T
template <typename T>
void matmul_nt_acc(const T* g, const T* b, T* da, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T s = T(0);
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      da[i * k + p] += s;
    }
  }
}

// dB(k x n) += A(m x k)^T * G(m x n)
template <typename T>
void matmul_tn_acc(const T* a, const T* g, T* db, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      T* dbrow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
    }
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  Tensor<T> c({a.rows(), b.cols()});
  matmul_acc(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

template <typename T>
T dot(const T* p, const T* q, std::size_t n) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += p[i] * q[i];
  return s;
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (T& v : x.vec())
    if (v < T(0)) v = T(0);
}

// out[i, j] = m[i, j] * v[j]
template <typename T>
void mul_rows_inplace(Tensor<T>& m, const Tensor<T>& v) {
  if (v.rank() != 1 || v.size() != m.cols())
    throw std::invalid_argument("mul_rows: vector " + shape_str(v.shape()) +
                                " does not match matrix " + shape_str(m.shape()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) *= v[j];
}

// out[i, j] = m[i, j] + v[j]
template <typename T>
void add_rows_inplace(Tensor<T>& m, const Tensor<T>& v) {
  if (v.rank() != 1 || v.size() != m.cols())
    throw std::invalid_argument("add_rows: vector " + shape_str(v.shape()) +
                                " does not match matrix " + shape_str(m.shape()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += v[j];
}

// Row-wise max-shifted log-softmax; safe for entries up to ~1e4.
template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& z) {
  if (z.rank() != 2)
    throw std::invalid_argument("log_softmax_rows: expected a matrix, got " +
                                shape_str(z.shape()));
  Tensor<T> out(z.shape());
  const std::size_t n = z.cols();
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const T* row = z.data() + i * n;
    T mx = row[0];
    for (std::size_t j = 1; j < n; ++j)
      if (row[j] > mx) mx = row[j];
    T sum = T(0);
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
    const T lse = mx + std::log(sum);
    T* orow = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) orow[j] = row[j] - lse;
  }
  return out;
}

template <typename T>
T cosine(const T* p, const T* q, std::size_t n) {
  const T s = dot(p, q, n);
  const T np = std::sqrt(dot(p, p, n));
  const T nq = std::sqrt(dot(q, q, n));
  T denom = np * nq;
  const T floor = static_cast<T>(kCosineNormFloor);
  if (!(denom > floor)) denom = floor;
  return s / denom;
}

}  // namespace kernels

}  // namespace tafe

#endif  // TAFE_TENSOR_HPP
