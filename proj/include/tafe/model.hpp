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

#ifndef TAFE_MODEL_HPP
#define TAFE_MODEL_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tafe/graph.hpp"
#include "tafe/rng.hpp"
#include "tafe/tensor.hpp"

namespace tafe {

// Learning-rate groups: the prediction network, weight generators and
// classifier train at one rate, the task embedding network at another.
inline constexpr int kGroupMain = 0;
inline constexpr int kGroupTaskEmbed = 1;
inline constexpr int kGroupCount = 2;

/// Named handle onto one trainable tensor.
template <typename T>
struct ParamRef {
  std::string name;
  int group = kGroupMain;
  Tensor<T>* value = nullptr;
};

struct ModelConfig {
  std::size_t input_dim = 0;   // generic feature width (from the feature store)
  std::size_t task_dim = 0;    // task description width
  std::size_t embed_dim = 2048;  // task embedding and TAFE width
  std::vector<std::size_t> widths = {2048, 2048, 2048};  // dynamic layer outputs
  std::size_t task_hidden = 2048;  // hidden width of the task embedding network
  std::size_t task_depth = 3;      // affine layers in the task embedding network

  std::size_t dynamic_layers() const { return widths.size(); }

  void validate() const {
    if (input_dim == 0) throw std::invalid_argument("model config: input_dim must be positive");
    if (task_dim == 0) throw std::invalid_argument("model config: task_dim must be positive");
    if (embed_dim == 0) throw std::invalid_argument("model config: embed_dim must be positive");
    if (widths.empty()) throw std::invalid_argument("model config: need at least one dynamic layer");
    for (std::size_t w : widths)
      if (w == 0) throw std::invalid_argument("model config: zero layer width");
    if (widths.back() != embed_dim)
      throw std::invalid_argument("model config: last dynamic width " +
                                  std::to_string(widths.back()) +
                                  " must equal embed_dim " + std::to_string(embed_dim) +
                                  " (the TAFE and task embedding share a space)");
    if (task_depth == 0) throw std::invalid_argument("model config: task_depth must be positive");
    if (task_hidden == 0) throw std::invalid_argument("model config: task_hidden must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Fully-connected layer factorized into shared weights and a per-task gain
/// vector. The effective weight is weight * diag(gains); the forward pass
/// uses the equivalent modulated form (x * W) .* gains + bias.
template <typename T>
struct FactorizedFc {
  Tensor<T> weight;  // in x out, shared across tasks
  Tensor<T> bias;    // out, shared across tasks
  std::optional<Tensor<T>> gains;  // out, generated per task; never a trained leaf

  FactorizedFc() = default;
  FactorizedFc(Tensor<T> w, Tensor<T> b) : weight(std::move(w)), bias(std::move(b)) {
    if (weight.rank() != 2 || bias.rank() != 1 || bias.size() != weight.cols())
      throw std::invalid_argument("factorized fc: weight " + shape_str(weight.shape()) +
                                  " incompatible with bias " + shape_str(bias.shape()));
  }

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  void install_gains(Tensor<T> g) {
    if (g.rank() != 1 || g.size() != out_dim())
      throw std::invalid_argument("factorized fc: gains " + shape_str(g.shape()) +
                                  " do not match output width " + std::to_string(out_dim()));
    gains = std::move(g);
  }

  void clear_gains() { gains.reset(); }

  /// (x * W) .* gains + bias for a single input vector. Requires installed
  /// gains so a stale task can never leak across calls.
  Tensor<T> forward(const Tensor<T>& x) const {
    if (!gains)
      throw std::logic_error("factorized fc: no task gains installed");
    if (x.rank() != 1 || x.size() != in_dim())
      throw std::invalid_argument("factorized fc: input " + shape_str(x.shape()) +
                                  " does not match weight " + shape_str(weight.shape()));
    const std::size_t m = in_dim(), n = out_dim();
    Tensor<T> y({n});
    for (std::size_t i = 0; i < m; ++i) {
      const T xv = x[i];
      const T* wrow = weight.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) y[j] += xv * wrow[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] = y[j] * (*gains)[j] + bias[j];
    return y;
  }
};

/// Convolutional layer factorized into a shared filter bank and a per-task
/// per-output-channel gain. Stride 1, zero padding preserving spatial extent,
/// odd filter support, no bias.
template <typename T>
struct FactorizedConv {
  Tensor<T> weight;  // k x k x c_in x c_out, shared across tasks
  std::optional<Tensor<T>> gains;  // c_out, generated per task

  FactorizedConv() = default;
  explicit FactorizedConv(Tensor<T> w) : weight(std::move(w)) {
    if (weight.rank() != 4 || weight.shape()[0] != weight.shape()[1])
      throw std::invalid_argument("factorized conv: weight must be k x k x c_in x c_out, got " +
                                  shape_str(weight.shape()));
    if (weight.shape()[0] % 2 == 0)
      throw std::invalid_argument("factorized conv: filter support must be odd, got " +
                                  std::to_string(weight.shape()[0]));
  }

  std::size_t support() const { return weight.shape()[0]; }
  std::size_t in_channels() const { return weight.shape()[2]; }
  std::size_t out_channels() const { return weight.shape()[3]; }

  void install_gains(Tensor<T> g) {
    if (g.rank() != 1 || g.size() != out_channels())
      throw std::invalid_argument("factorized conv: gains " + shape_str(g.shape()) +
                                  " do not match " + std::to_string(out_channels()) +
                                  " output channels");
    gains = std::move(g);
  }

  void clear_gains() { gains.reset(); }

  /// x is h x w x c_in; returns h x w x c_out with channel j scaled by gains[j].
  Tensor<T> forward(const Tensor<T>& x) const {
    if (!gains)
      throw std::logic_error("factorized conv: no task gains installed");
    if (x.rank() != 3 || x.shape()[2] != in_channels())
      throw std::invalid_argument("factorized conv: input " + shape_str(x.shape()) +
                                  " does not match " + std::to_string(in_channels()) +
                                  " input channels");
    const std::size_t h = x.shape()[0], w = x.shape()[1];
    const std::size_t k = support(), ci = in_channels(), co = out_channels();
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    Tensor<T> y({h, w, co});
    for (std::size_t oy = 0; oy < h; ++oy)
      for (std::size_t ox = 0; ox < w; ++ox)
        for (std::size_t c = 0; c < co; ++c) {
          T acc = T(0);
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const T* xp = x.data() + (static_cast<std::size_t>(iy) * w +
                                        static_cast<std::size_t>(ix)) * ci;
              const T* wp = weight.data() + ((ky * k + kx) * ci) * co + c;
              for (std::size_t ic = 0; ic < ci; ++ic) acc += xp[ic] * wp[ic * co];
            }
          }
          y.data()[(oy * w + ox) * co + c] = acc * (*gains)[c];
        }
    return y;
  }
};

/// The full network: a task embedding stack T, one affine gain generator per
/// dynamic layer, the factorized dynamic feature layers, and a single binary
/// classifier shared across all tasks.
template <typename T>
class TafeNet {
 public:
  using Var = typename Graph<T>::Var;

  TafeNet(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    const std::size_t depth = cfg_.task_depth;
    const std::size_t k = cfg_.dynamic_layers();

    // Task embedding network: task_dim -> hidden ... -> embed_dim.
    std::size_t in = cfg_.task_dim;
    for (std::size_t l = 0; l < depth; ++l) {
      const std::size_t out = (l + 1 == depth) ? cfg_.embed_dim : cfg_.task_hidden;
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      task_w_.push_back(rng.uniform_tensor<T>({in, out}, -bound, bound));
      task_b_.push_back(Tensor<T>({out}));
      in = out;
    }

    // Gain generators: near-zero weights, unit bias, so initial gains are
    // close to 1 and the initial model behaves like a plain network.
    for (std::size_t l = 0; l < k; ++l) {
      const double bound = 0.01 / std::sqrt(static_cast<double>(cfg_.embed_dim));
      gen_w_.push_back(rng.uniform_tensor<T>({cfg_.embed_dim, cfg_.widths[l]}, -bound, bound));
      gen_b_.push_back(Tensor<T>::full({cfg_.widths[l]}, T(1)));
    }

    // Dynamic feature layers.
    in = cfg_.input_dim;
    for (std::size_t l = 0; l < k; ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      dyn_.emplace_back(rng.uniform_tensor<T>({in, cfg_.widths[l]}, -bound, bound),
                        Tensor<T>({cfg_.widths[l]}));
      in = cfg_.widths[l];
    }

    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.embed_dim));
    cls_w_ = rng.uniform_tensor<T>({cfg_.embed_dim, 1}, -bound, bound);
    cls_b_ = Tensor<T>({1});
  }

  const ModelConfig& config() const { return cfg_; }

  FactorizedFc<T>& dynamic_layer(std::size_t i) { return dyn_.at(i); }
  const FactorizedFc<T>& dynamic_layer(std::size_t i) const { return dyn_.at(i); }

  /// Stable-order handles onto every trainable tensor. Gains are excluded:
  /// they are generated, not trained.
  std::vector<ParamRef<T>> parameters() {
    std::vector<ParamRef<T>> out;
    for (std::size_t l = 0; l < task_w_.size(); ++l) {
      out.push_back({"task_net." + std::to_string(l) + ".weight", kGroupTaskEmbed, &task_w_[l]});
      out.push_back({"task_net." + std::to_string(l) + ".bias", kGroupTaskEmbed, &task_b_[l]});
    }
    for (std::size_t l = 0; l < gen_w_.size(); ++l) {
      out.push_back({"gen." + std::to_string(l) + ".weight", kGroupMain, &gen_w_[l]});
      out.push_back({"gen." + std::to_string(l) + ".bias", kGroupMain, &gen_b_[l]});
    }
    for (std::size_t l = 0; l < dyn_.size(); ++l) {
      out.push_back({"dyn." + std::to_string(l) + ".weight", kGroupMain, &dyn_[l].weight});
      out.push_back({"dyn." + std::to_string(l) + ".bias", kGroupMain, &dyn_[l].bias});
    }
    out.push_back({"cls.weight", kGroupMain, &cls_w_});
    out.push_back({"cls.bias", kGroupMain, &cls_b_});
    return out;
  }

  // ---- tensor paths (evaluation) ---------------------------------------

  /// e_t = T(t): the task description through the FC stack, relu between
  /// layers, none after the last.
  Tensor<T> embed_task(const Tensor<T>& t) const {
    if (t.rank() != 1 || t.size() != cfg_.task_dim)
      throw std::invalid_argument("embed_task: description " + shape_str(t.shape()) +
                                  " does not match task_dim " + std::to_string(cfg_.task_dim));
    Tensor<T> h = t;
    for (std::size_t l = 0; l < task_w_.size(); ++l) {
      h = affine(h, task_w_[l], task_b_[l]);
      if (l + 1 < task_w_.size()) kernels::relu_inplace(h);
    }
    return h;
  }

  /// W_t for dynamic layer `layer`: a raw affine map of the task embedding.
  Tensor<T> generate_gains(const Tensor<T>& e, std::size_t layer) const {
    if (layer >= gen_w_.size())
      throw std::out_of_range("generate_gains: layer " + std::to_string(layer) +
                              " out of range (have " + std::to_string(gen_w_.size()) + ")");
    if (e.rank() != 1 || e.size() != cfg_.embed_dim)
      throw std::invalid_argument("generate_gains: embedding " + shape_str(e.shape()) +
                                  " does not match embed_dim " +
                                  std::to_string(cfg_.embed_dim));
    return affine(e, gen_w_[layer], gen_b_[layer]);
  }

  /// Installs the task's gains into every dynamic layer and runs one feature
  /// vector through them. The TAFE is the output of the last layer, post-relu.
  Tensor<T> compute_tafe(const Tensor<T>& x, const Tensor<T>& t) {
    const Tensor<T> e = embed_task(t);
    for (std::size_t l = 0; l < dyn_.size(); ++l) dyn_[l].install_gains(generate_gains(e, l));
    Tensor<T> h = x;
    for (std::size_t l = 0; l < dyn_.size(); ++l) {
      h = dyn_[l].forward(h);
      kernels::relu_inplace(h);
    }
    return h;
  }

  /// One scalar compatibility logit: w_cls . TAFE(x, t) + b_cls.
  T predict_logit(const Tensor<T>& x, const Tensor<T>& t) {
    const Tensor<T> tafe = compute_tafe(x, t);
    T s = cls_b_[0];
    for (std::size_t i = 0; i < tafe.size(); ++i) s += tafe[i] * cls_w_[i];
    return s;
  }

  /// N x T logits. Each task's gains are computed once and the whole batch
  /// is streamed through them; tasks may be striped across threads since the
  /// model is read-only here and columns are disjoint.
  Tensor<T> score_matrix(const Tensor<T>& features, const Tensor<T>& tasks,
                         int threads = 1) const {
    if (features.rank() != 2 || features.cols() != cfg_.input_dim)
      throw std::invalid_argument("score_matrix: features " + shape_str(features.shape()) +
                                  " do not match input_dim " + std::to_string(cfg_.input_dim));
    if (tasks.rank() != 2 || tasks.cols() != cfg_.task_dim)
      throw std::invalid_argument("score_matrix: tasks " + shape_str(tasks.shape()) +
                                  " do not match task_dim " + std::to_string(cfg_.task_dim));
    const std::size_t n = features.rows(), t_count = tasks.rows();
    Tensor<T> out({n, t_count});

    auto fill_columns = [&](std::size_t lo, std::size_t hi) {
      for (std::size_t j = lo; j < hi; ++j) {
        const Tensor<T> tafes = tafe_batch_for_task(features, row_of(tasks, j));
        for (std::size_t i = 0; i < n; ++i) {
          T s = cls_b_[0];
          const T* r = tafes.data() + i * cfg_.embed_dim;
          for (std::size_t d = 0; d < cfg_.embed_dim; ++d) s += r[d] * cls_w_[d];
          out(i, j) = s;
        }
      }
    };

    const std::size_t workers =
        std::min<std::size_t>(threads < 1 ? 1 : static_cast<std::size_t>(threads), t_count);
    if (workers <= 1) {
      fill_columns(0, t_count);
    } else {
      std::vector<std::thread> pool;
      const std::size_t chunk = (t_count + workers - 1) / workers;
      for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(t_count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(fill_columns, lo, hi);
      }
      for (auto& th : pool) th.join();
    }
    return out;
  }

  /// TAFEs for a whole batch under one task, N x embed_dim.
  Tensor<T> tafe_batch_for_task(const Tensor<T>& features, const Tensor<T>& task) const {
    const Tensor<T> e = embed_task(task);
    Tensor<T> h = features;
    for (std::size_t l = 0; l < dyn_.size(); ++l) {
      const Tensor<T> gains = generate_gains(e, l);
      h = kernels::matmul(h, dyn_[l].weight);
      kernels::mul_rows_inplace(h, gains);
      kernels::add_rows_inplace(h, dyn_[l].bias);
      kernels::relu_inplace(h);
    }
    return h;
  }

  // ---- graph path (training) -------------------------------------------

  /// Parameter leaves bound into a graph, in parameters() order.
  struct BoundParams {
    std::vector<Var> vars;
    std::size_t task_depth = 0;
    std::size_t dynamic = 0;

    Var task_w(std::size_t l) const { return vars[2 * l]; }
    Var task_b(std::size_t l) const { return vars[2 * l + 1]; }
    Var gen_w(std::size_t l) const { return vars[2 * task_depth + 2 * l]; }
    Var gen_b(std::size_t l) const { return vars[2 * task_depth + 2 * l + 1]; }
    Var dyn_w(std::size_t l) const { return vars[2 * task_depth + 2 * dynamic + 2 * l]; }
    Var dyn_b(std::size_t l) const { return vars[2 * task_depth + 2 * dynamic + 2 * l + 1]; }
    Var cls_w() const { return vars[2 * task_depth + 4 * dynamic]; }
    Var cls_b() const { return vars[2 * task_depth + 4 * dynamic + 1]; }
  };

  BoundParams bind(Graph<T>& g) {
    BoundParams b;
    b.task_depth = task_w_.size();
    b.dynamic = dyn_.size();
    for (const ParamRef<T>& p : parameters()) b.vars.push_back(g.param(*p.value));
    return b;
  }

  struct BatchForward {
    Var task_embeddings;      // T x embed_dim
    std::vector<Var> tafes;   // per task, N x embed_dim
    Var logits;               // N x T
  };

  /// Builds the full differentiable forward pass for a batch of features
  /// against a set of task descriptions.
  BatchForward forward_graph(Graph<T>& g, const BoundParams& b, const Tensor<T>& features,
                             const Tensor<T>& tasks) const {
    if (features.rank() != 2 || features.cols() != cfg_.input_dim)
      throw std::invalid_argument("forward_graph: features " + shape_str(features.shape()) +
                                  " do not match input_dim " + std::to_string(cfg_.input_dim));
    if (tasks.rank() != 2 || tasks.cols() != cfg_.task_dim)
      throw std::invalid_argument("forward_graph: tasks " + shape_str(tasks.shape()) +
                                  " do not match task_dim " + std::to_string(cfg_.task_dim));
    const std::size_t t_count = tasks.rows();

    BatchForward out;
    Var e = g.input(tasks);
    for (std::size_t l = 0; l < task_w_.size(); ++l) {
      e = g.add_rows(g.matmul(e, b.task_w(l)), b.task_b(l));
      if (l + 1 < task_w_.size()) e = g.relu(e);
    }
    out.task_embeddings = e;

    Var x = g.input(features);
    std::vector<Var> cols;
    cols.reserve(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      Var e_row = g.reshape(g.slice_row(e, t), {1, cfg_.embed_dim});
      Var h = x;
      for (std::size_t l = 0; l < dyn_.size(); ++l) {
        Var gain = g.reshape(g.add_rows(g.matmul(e_row, b.gen_w(l)), b.gen_b(l)),
                             {cfg_.widths[l]});
        h = g.relu(g.add_rows(g.mul_rows(g.matmul(h, b.dyn_w(l)), gain), b.dyn_b(l)));
      }
      out.tafes.push_back(h);
      Var col = g.add_rows(g.matmul(h, b.cls_w()), b.cls_b());
      cols.push_back(g.reshape(col, {features.rows()}));
    }
    out.logits = g.concat_cols(cols);
    return out;
  }

 private:
  static Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    const std::size_t m = w.rows(), n = w.cols();
    if (x.rank() != 1 || x.size() != m)
      throw std::invalid_argument("affine: input " + shape_str(x.shape()) +
                                  " does not match weight " + shape_str(w.shape()));
    Tensor<T> y = b;
    for (std::size_t i = 0; i < m; ++i) {
      const T xv = x[i];
      const T* wrow = w.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) y[j] += xv * wrow[j];
    }
    return y;
  }

  ModelConfig cfg_;
  std::vector<Tensor<T>> task_w_, task_b_;
  std::vector<Tensor<T>> gen_w_, gen_b_;
  std::vector<FactorizedFc<T>> dyn_;
  Tensor<T> cls_w_, cls_b_;
};

}  // namespace tafe

#endif  // TAFE_MODEL_HPP
