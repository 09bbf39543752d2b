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

#ifndef TAFE_LOSSES_HPP
#define TAFE_LOSSES_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tafe/graph.hpp"
#include "tafe/tensor.hpp"

namespace tafe {

/// Which tasks enter the per-sample softmax and the embedding pairs:
/// the tasks present in the minibatch, or every training task.
enum class TaskScope { minibatch, whole_dataset };

struct LossConfig {
  double beta = 0.1;
  TaskScope scope = TaskScope::minibatch;

  void validate() const {
    if (!std::isfinite(beta) || beta < 0.0)
      throw std::invalid_argument("loss config: beta must be finite and >= 0, got " +
                                  std::to_string(beta));
  }
};

/// Checks a one-hot assignment matrix: entries in {0,1}, each row exactly one 1.
template <typename T>
void validate_label_matrix(const Tensor<T>& y) {
  if (y.rank() != 2)
    throw std::invalid_argument("label matrix: expected a matrix, got " + shape_str(y.shape()));
  for (std::size_t i = 0; i < y.rows(); ++i) {
    int ones = 0;
    for (std::size_t j = 0; j < y.cols(); ++j) {
      const T v = y(i, j);
      if (v != T(0) && v != T(1))
        throw std::invalid_argument("label matrix: entry (" + std::to_string(i) + "," +
                                    std::to_string(j) + ") is not 0/1");
      if (v == T(1)) ++ones;
    }
    if (ones != 1)
      throw std::invalid_argument("label matrix: row " + std::to_string(i) + " has " +
                                  std::to_string(ones) + " positives (expected exactly one)");
  }
}

/// Softmax cross-entropy over tasks against the true task, averaged over samples.
template <typename T>
typename Graph<T>::Var classification_loss(Graph<T>& g, typename Graph<T>::Var logits,
                                           const Tensor<T>& labels) {
  // Note: value() references are invalidated by the op pushes below, so all
  // shape facts are captured first.
  const Shape z_shape = g.value(logits).shape();
  if (z_shape.size() != 2 || z_shape != labels.shape())
    throw std::invalid_argument("classification_loss: logits " + shape_str(z_shape) +
                                " vs labels " + shape_str(labels.shape()));
  validate_label_matrix(labels);
  const T n = static_cast<T>(z_shape[0]);
  auto ls = g.log_softmax_rows(logits);
  auto picked = g.mul(ls, g.input(labels));
  return g.scale(g.sum(picked), T(-1) / n);
}

/// max(cosine_similarity(p, q), 0); gradient is zero in the clamped region.
template <typename T>
typename Graph<T>::Var hinged_cosine(Graph<T>& g, typename Graph<T>::Var p,
                                     typename Graph<T>::Var q) {
  return g.relu(g.cosine_similarity(p, q));
}

/// Mean squared gap between the hinged cosine and the 0/1 label over all
/// (sample, task) pairs. tafes_by_task[t] is the N x d batch of embeddings
/// computed under task t's gains; task_embeddings is the T x d matrix of e_t.
template <typename T>
typename Graph<T>::Var embedding_loss(Graph<T>& g,
                                      const std::vector<typename Graph<T>::Var>& tafes_by_task,
                                      typename Graph<T>::Var task_embeddings,
                                      const Tensor<T>& labels) {
  validate_label_matrix(labels);
  const Shape e_shape = g.value(task_embeddings).shape();
  const std::size_t n = labels.rows();
  const std::size_t t_count = labels.cols();
  if (tafes_by_task.size() != t_count)
    throw std::invalid_argument("embedding_loss: " + std::to_string(tafes_by_task.size()) +
                                " TAFE batches vs " + std::to_string(t_count) + " label columns");
  if (e_shape.size() != 2 || e_shape[0] != t_count)
    throw std::invalid_argument("embedding_loss: task embeddings " + shape_str(e_shape) +
                                " do not match " + std::to_string(t_count) + " tasks");
  for (const auto& tv : tafes_by_task) {
    const Shape m_shape = g.value(tv).shape();
    if (m_shape.size() != 2 || m_shape[0] != n || m_shape[1] != e_shape[1])
      throw std::invalid_argument("embedding_loss: TAFE batch " + shape_str(m_shape) +
                                  " does not match labels " + shape_str(labels.shape()) +
                                  " and embedding dim " + std::to_string(e_shape[1]));
  }

  typename Graph<T>::Var acc;
  for (std::size_t t = 0; t < t_count; ++t) {
    auto e_t = g.slice_row(task_embeddings, t);
    auto phi = g.relu(g.row_cosine(tafes_by_task[t], e_t));
    auto diff = g.sub(phi, g.input(col_of(labels, t)));
    auto sq = g.mul(diff, diff);
    auto part = g.sum(sq);
    acc = (t == 0) ? part : g.add(acc, part);
  }
  return g.scale(acc, T(1) / static_cast<T>(n * t_count));
}

/// cls + beta * emb. Rejects non-finite terms, naming the offender.
template <typename T>
typename Graph<T>::Var total_loss(Graph<T>& g, typename Graph<T>::Var cls,
                                  typename Graph<T>::Var emb, const LossConfig& cfg) {
  cfg.validate();
  const Tensor<T>& c = g.value(cls);
  const Tensor<T>& e = g.value(emb);
  if (c.size() != 1 || e.size() != 1)
    throw std::invalid_argument("total_loss: both terms must be scalars");
  if (!std::isfinite(static_cast<double>(c[0])))
    throw std::runtime_error("total_loss: classification term is non-finite");
  if (!std::isfinite(static_cast<double>(e[0])))
    throw std::runtime_error("total_loss: embedding term is non-finite");
  return g.add(cls, g.scale(emb, static_cast<T>(cfg.beta)));
}

// ---- value-level conveniences (no gradients) ----------------------------

template <typename T>
T classification_loss_value(const Tensor<T>& logits, const Tensor<T>& labels) {
  Graph<T> g;
  return g.value(classification_loss(g, g.input(logits), labels))[0];
}

template <typename T>
T hinged_cosine_value(const Tensor<T>& p, const Tensor<T>& q) {
  Graph<T> g;
  return g.value(hinged_cosine(g, g.input(p), g.input(q)))[0];
}

template <typename T>
T embedding_loss_value(const std::vector<Tensor<T>>& tafes_by_task,
                       const Tensor<T>& task_embeddings, const Tensor<T>& labels) {
  Graph<T> g;
  std::vector<typename Graph<T>::Var> tv;
  tv.reserve(tafes_by_task.size());
  for (const auto& t : tafes_by_task) tv.push_back(g.input(t));
  return g.value(embedding_loss(g, tv, g.input(task_embeddings), labels))[0];
}

template <typename T>
T total_loss_value(T cls, T emb, const LossConfig& cfg) {
  Graph<T> g;
  return g.value(
      total_loss(g, g.input(Tensor<T>::scalar(cls)), g.input(Tensor<T>::scalar(emb)), cfg))[0];
}

}  // namespace tafe

#endif  // TAFE_LOSSES_HPP
