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

#ifndef TAFE_GRAPH_HPP
#define TAFE_GRAPH_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tafe/tensor.hpp"

namespace tafe {

/// Eagerly evaluated computation record with reverse-mode differentiation.
///
/// Every operation appends a node holding its forward value and a closure
/// that scatters the node's gradient into its operands. Nodes are created
/// in topological order by construction, so backward() is a reverse scan.
/// Gradients are tracked only for nodes reachable from a parameter leaf;
/// plain input leaves receive none.
template <typename T>
class Graph {
 public:
  struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const { return id != static_cast<std::size_t>(-1); }
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Constant leaf; no gradient is accumulated into it.
  Var input(Tensor<T> v) { return push_leaf(std::move(v), false); }

  /// Trainable leaf; backward() fills its gradient accumulator.
  Var param(Tensor<T> v) { return push_leaf(std::move(v), true); }

  const Tensor<T>& value(Var v) const { return node(v).value; }

  const Tensor<T>& grad(Var v) const {
    const Node& n = node(v);
    if (!n.needs_grad)
      throw std::logic_error("graph: no gradient is tracked for this node");
    return n.grad;
  }

  bool is_param(Var v) const { return node(v).is_param; }
  std::size_t node_count() const { return nodes_.size(); }

  // ---- operations ------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
      throw std::invalid_argument("matmul: incompatible shapes " + shape_str(A.shape()) +
                                  " and " + shape_str(B.shape()));
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor<T> c({m, n});
    kernels::matmul_acc(A.data(), B.data(), c.data(), m, k, n);
    const std::size_t ai = a.id, bi = b.id;
    return push_op(std::move(c), {a, b}, [ai, bi, m, k, n](Graph& g, std::size_t self) {
      const T* go = g.nodes_[self].grad.data();
      if (T* da = g.grad_ptr(ai))
        kernels::matmul_nt_acc(go, g.nodes_[bi].value.data(), da, m, n, k);
      if (T* db = g.grad_ptr(bi))
        kernels::matmul_tn_acc(g.nodes_[ai].value.data(), go, db, m, k, n);
    });
  }

  Var add(Var a, Var b) { return elementwise_binary(a, b, Binary::add); }
  Var sub(Var a, Var b) { return elementwise_binary(a, b, Binary::sub); }
  Var mul(Var a, Var b) { return elementwise_binary(a, b, Binary::mul); }

  Var relu(Var a) {
    const Tensor<T>& x = value(a);
    Tensor<T> y = x;
    kernels::relu_inplace(y);
    const std::size_t ai = a.id;
    return push_op(std::move(y), {a}, [ai](Graph& g, std::size_t self) {
      T* da = g.grad_ptr(ai);
      if (!da) return;
      const Tensor<T>& x = g.nodes_[ai].value;
      const T* go = g.nodes_[self].grad.data();
      // Subgradient at 0 taken as 0 (the clamp's left derivative).
      for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] > T(0)) da[i] += go[i];
    });
  }

  Var scale(Var a, T c) {
    const Tensor<T>& x = value(a);
    Tensor<T> y = x;
    for (T& v : y.vec()) v *= c;
    const std::size_t ai = a.id;
    return push_op(std::move(y), {a}, [ai, c](Graph& g, std::size_t self) {
      T* da = g.grad_ptr(ai);
      if (!da) return;
      const T* go = g.nodes_[self].grad.data();
      for (std::size_t i = 0; i < g.nodes_[self].grad.size(); ++i) da[i] += c * go[i];
    });
  }

  /// out[i, j] = m[i, j] + v[j]
  Var add_rows(Var mv, Var vv) {
    const Tensor<T>& m = value(mv);
    const Tensor<T>& v = value(vv);
    Tensor<T> y = m;
    kernels::add_rows_inplace(y, v);
    const std::size_t mi = mv.id, vi = vv.id;
    return push_op(std::move(y), {mv, vv}, [mi, vi](Graph& g, std::size_t self) {
      const Tensor<T>& go = g.nodes_[self].grad;
      const std::size_t rows = go.rows(), cols = go.cols();
      if (T* dm = g.grad_ptr(mi))
        for (std::size_t i = 0; i < rows * cols; ++i) dm[i] += go[i];
      if (T* dv = g.grad_ptr(vi))
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) dv[j] += go(i, j);
    });
  }

  /// out[i, j] = m[i, j] * v[j]
  Var mul_rows(Var mv, Var vv) {
    const Tensor<T>& m = value(mv);
    const Tensor<T>& v = value(vv);
    Tensor<T> y = m;
    kernels::mul_rows_inplace(y, v);
    const std::size_t mi = mv.id, vi = vv.id;
    return push_op(std::move(y), {mv, vv}, [mi, vi](Graph& g, std::size_t self) {
      const Tensor<T>& go = g.nodes_[self].grad;
      const Tensor<T>& m = g.nodes_[mi].value;
      const Tensor<T>& v = g.nodes_[vi].value;
      const std::size_t rows = go.rows(), cols = go.cols();
      if (T* dm = g.grad_ptr(mi))
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) dm[i * cols + j] += go(i, j) * v[j];
      if (T* dv = g.grad_ptr(vi))
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) dv[j] += go(i, j) * m(i, j);
    });
  }

  Var log_softmax_rows(Var zv) {
    Tensor<T> y = kernels::log_softmax_rows(value(zv));
    const std::size_t zi = zv.id;
    return push_op(std::move(y), {zv}, [zi](Graph& g, std::size_t self) {
      T* dz = g.grad_ptr(zi);
      if (!dz) return;
      const Tensor<T>& out = g.nodes_[self].value;
      const Tensor<T>& go = g.nodes_[self].grad;
      const std::size_t rows = out.rows(), cols = out.cols();
      for (std::size_t i = 0; i < rows; ++i) {
        T s = T(0);
        for (std::size_t j = 0; j < cols; ++j) s += go(i, j);
        for (std::size_t j = 0; j < cols; ++j)
          dz[i * cols + j] += go(i, j) - std::exp(out(i, j)) * s;
      }
    });
  }

  /// p . q / max(|p| |q|, 1e-8), a scalar in [-1, 1].
  Var cosine_similarity(Var pv, Var qv) {
    const Tensor<T>& p = value(pv);
    const Tensor<T>& q = value(qv);
    if (p.rank() != 1 || q.rank() != 1 || p.size() != q.size())
      throw std::invalid_argument("cosine_similarity: expected equal-length vectors, got " +
                                  shape_str(p.shape()) + " and " + shape_str(q.shape()));
    const std::size_t n = p.size();
    Tensor<T> y = Tensor<T>::scalar(kernels::cosine(p.data(), q.data(), n));
    const std::size_t pi = pv.id, qi = qv.id;
    return push_op(std::move(y), {pv, qv}, [pi, qi, n](Graph& g, std::size_t self) {
      const T go = g.nodes_[self].grad[0];
      const T* p = g.nodes_[pi].value.data();
      const T* q = g.nodes_[qi].value.data();
      cosine_backward(go, p, q, n, g.grad_ptr(pi), g.grad_ptr(qi));
    });
  }

  /// Per-row cosine between the rows of m (N x d) and v (d); returns N values.
  Var row_cosine(Var mv, Var vv) {
    const Tensor<T>& m = value(mv);
    const Tensor<T>& v = value(vv);
    if (m.rank() != 2 || v.rank() != 1 || m.cols() != v.size())
      throw std::invalid_argument("row_cosine: incompatible shapes " + shape_str(m.shape()) +
                                  " and " + shape_str(v.shape()));
    const std::size_t rows = m.rows(), d = m.cols();
    Tensor<T> y({rows});
    for (std::size_t i = 0; i < rows; ++i)
      y[i] = kernels::cosine(m.data() + i * d, v.data(), d);
    const std::size_t mi = mv.id, vi = vv.id;
    return push_op(std::move(y), {mv, vv}, [mi, vi, rows, d](Graph& g, std::size_t self) {
      const Tensor<T>& go = g.nodes_[self].grad;
      const Tensor<T>& m = g.nodes_[mi].value;
      const T* v = g.nodes_[vi].value.data();
      T* dm = g.grad_ptr(mi);
      T* dv = g.grad_ptr(vi);
      for (std::size_t i = 0; i < rows; ++i)
        cosine_backward(go[i], m.data() + i * d, v, d, dm ? dm + i * d : nullptr, dv);
    });
  }

  /// Stack N-vectors as the columns of an N x T matrix.
  Var concat_cols(const std::vector<Var>& cols) {
    if (cols.empty()) throw std::invalid_argument("concat_cols: no columns");
    const std::size_t n = value(cols[0]).size();
    for (const Var& c : cols) {
      const Tensor<T>& t = value(c);
      if (t.rank() != 1 || t.size() != n)
        throw std::invalid_argument("concat_cols: column shape " + shape_str(t.shape()) +
                                    " does not match length " + std::to_string(n));
    }
    const std::size_t tcols = cols.size();
    Tensor<T> y({n, tcols});
    for (std::size_t j = 0; j < tcols; ++j) {
      const Tensor<T>& c = value(cols[j]);
      for (std::size_t i = 0; i < n; ++i) y(i, j) = c[i];
    }
    std::vector<std::size_t> ids(tcols);
    for (std::size_t j = 0; j < tcols; ++j) ids[j] = cols[j].id;
    bool ng = false;
    for (const Var& c : cols) ng = ng || node(c).needs_grad;
    return push_op_ids(std::move(y), std::move(ids), ng,
                       [n, tcols](Graph& g, std::size_t self) {
                         const Tensor<T>& go = g.nodes_[self].grad;
                         const std::vector<std::size_t>& ids = g.nodes_[self].parent_ids;
                         for (std::size_t j = 0; j < tcols; ++j) {
                           if (T* dc = g.grad_ptr(ids[j]))
                             for (std::size_t i = 0; i < n; ++i) dc[i] += go(i, j);
                         }
                       });
  }

  /// Row i of a matrix as a vector.
  Var slice_row(Var mv, std::size_t row) {
    const Tensor<T>& m = value(mv);
    if (m.rank() != 2 || row >= m.rows())
      throw std::out_of_range("slice_row: row " + std::to_string(row) + " out of range for " +
                              shape_str(m.shape()));
    Tensor<T> y = row_of(m, row);
    const std::size_t mi = mv.id, cols = m.cols();
    return push_op(std::move(y), {mv}, [mi, row, cols](Graph& g, std::size_t self) {
      if (T* dm = g.grad_ptr(mi)) {
        const T* go = g.nodes_[self].grad.data();
        for (std::size_t j = 0; j < cols; ++j) dm[row * cols + j] += go[j];
      }
    });
  }

  /// Sum of all entries, a scalar.
  Var sum(Var a) {
    const Tensor<T>& x = value(a);
    T s = T(0);
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
    const std::size_t ai = a.id;
    return push_op(Tensor<T>::scalar(s), {a}, [ai](Graph& g, std::size_t self) {
      if (T* da = g.grad_ptr(ai)) {
        const T go = g.nodes_[self].grad[0];
        for (std::size_t i = 0; i < g.nodes_[ai].value.size(); ++i) da[i] += go;
      }
    });
  }

  Var reshape(Var a, Shape shape) {
    const Tensor<T>& x = value(a);
    if (shape_numel(shape) != x.size())
      throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                  shape_str(shape));
    Tensor<T> y(std::move(shape), x.vec());
    const std::size_t ai = a.id;
    return push_op(std::move(y), {a}, [ai](Graph& g, std::size_t self) {
      if (T* da = g.grad_ptr(ai)) {
        const T* go = g.nodes_[self].grad.data();
        for (std::size_t i = 0; i < g.nodes_[self].grad.size(); ++i) da[i] += go[i];
      }
    });
  }

  // ---- backward --------------------------------------------------------

  /// Reverse pass from a scalar root. Zeroes every gradient accumulator
  /// first, then visits nodes in exact reverse creation (topological) order.
  void backward(Var root) {
    const Node& r = node(root);
    if (r.value.size() != 1)
      throw std::invalid_argument("backward: root must be a scalar, got shape " +
                                  shape_str(r.value.shape()));
    for (Node& n : nodes_)
      if (n.needs_grad) n.grad.fill(T(0));
    if (!r.needs_grad) return;  // root does not depend on any parameter
    nodes_[root.id].grad[0] = T(1);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.needs_grad && n.back) n.back(*this, i);
    }
  }

 private:
  enum class Binary { add, sub, mul };

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool is_param = false;
    bool needs_grad = false;
    std::vector<std::size_t> parent_ids;
    std::function<void(Graph&, std::size_t)> back;
  };

  const Node& node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size())
      throw std::out_of_range("graph: invalid node handle");
    return nodes_[v.id];
  }

  T* grad_ptr(std::size_t id) {
    Node& n = nodes_[id];
    return n.needs_grad ? n.grad.data() : nullptr;
  }

  Var push_leaf(Tensor<T> v, bool is_param) {
    Node n;
    n.value = std::move(v);
    n.is_param = is_param;
    n.needs_grad = is_param;
    if (n.needs_grad) n.grad = Tensor<T>(n.value.shape());
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var push_op(Tensor<T> v, std::initializer_list<Var> parents,
              std::function<void(Graph&, std::size_t)> back) {
    bool ng = false;
    std::vector<std::size_t> ids;
    ids.reserve(parents.size());
    for (Var p : parents) {
      ng = ng || node(p).needs_grad;
      ids.push_back(p.id);
    }
    return push_op_ids(std::move(v), std::move(ids), ng, std::move(back));
  }

  Var push_op_ids(Tensor<T> v, std::vector<std::size_t> ids, bool needs_grad,
                  std::function<void(Graph&, std::size_t)> back) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    n.parent_ids = std::move(ids);
    if (needs_grad) {
      n.grad = Tensor<T>(n.value.shape());
      n.back = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var elementwise_binary(Var a, Var b, Binary op) {
    const Tensor<T>& x = value(a);
    const Tensor<T>& y = value(b);
    if (!x.same_shape(y))
      throw std::invalid_argument(std::string("elementwise ") + binary_name(op) +
                                  ": shapes differ " + shape_str(x.shape()) + " vs " +
                                  shape_str(y.shape()));
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      switch (op) {
        case Binary::add: out[i] = x[i] + y[i]; break;
        case Binary::sub: out[i] = x[i] - y[i]; break;
        case Binary::mul: out[i] = x[i] * y[i]; break;
      }
    }
    const std::size_t ai = a.id, bi = b.id;
    return push_op(std::move(out), {a, b}, [ai, bi, op](Graph& g, std::size_t self) {
      const Tensor<T>& go = g.nodes_[self].grad;
      T* da = g.grad_ptr(ai);
      T* db = g.grad_ptr(bi);
      const std::size_t sz = go.size();
      switch (op) {
        case Binary::add:
          if (da) for (std::size_t i = 0; i < sz; ++i) da[i] += go[i];
          if (db) for (std::size_t i = 0; i < sz; ++i) db[i] += go[i];
          break;
        case Binary::sub:
          if (da) for (std::size_t i = 0; i < sz; ++i) da[i] += go[i];
          if (db) for (std::size_t i = 0; i < sz; ++i) db[i] -= go[i];
          break;
        case Binary::mul: {
          const Tensor<T>& xv = g.nodes_[ai].value;
          const Tensor<T>& yv = g.nodes_[bi].value;
          if (da) for (std::size_t i = 0; i < sz; ++i) da[i] += go[i] * yv[i];
          if (db) for (std::size_t i = 0; i < sz; ++i) db[i] += go[i] * xv[i];
          break;
        }
      }
    });
  }

  static const char* binary_name(Binary op) {
    switch (op) {
      case Binary::add: return "add";
      case Binary::sub: return "sub";
      case Binary::mul: return "mul";
    }
    return "?";
  }

  // Shared by cosine_similarity and row_cosine. In the floored region the
  // denominator is constant, so only the inner product contributes.
  static void cosine_backward(T go, const T* p, const T* q, std::size_t n, T* dp, T* dq) {
    if (!dp && !dq) return;
    const T s = kernels::dot(p, q, n);
    const T np2 = kernels::dot(p, p, n);
    const T nq2 = kernels::dot(q, q, n);
    const T np = std::sqrt(np2), nq = std::sqrt(nq2);
    const T floor = static_cast<T>(kCosineNormFloor);
    const T denom = np * nq;
    if (denom > floor) {
      const T c = s / denom;
      if (dp)
        for (std::size_t i = 0; i < n; ++i) dp[i] += go * (q[i] / denom - c * p[i] / np2);
      if (dq)
        for (std::size_t i = 0; i < n; ++i) dq[i] += go * (p[i] / denom - c * q[i] / nq2);
    } else {
      if (dp)
        for (std::size_t i = 0; i < n; ++i) dp[i] += go * q[i] / floor;
      if (dq)
        for (std::size_t i = 0; i < n; ++i) dq[i] += go * p[i] / floor;
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace tafe

#endif  // TAFE_GRAPH_HPP
