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

#ifndef TAFE_OPTIM_HPP
#define TAFE_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tafe/model.hpp"
#include "tafe/tensor.hpp"

namespace tafe {

enum class OptKind { adam, sgd_momentum };

inline const char* opt_kind_name(OptKind k) {
  return k == OptKind::adam ? "adam" : "sgd-momentum";
}

struct OptimizerConfig {
  OptKind kind = OptKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
};

/// Adam / SGD-with-momentum over a fixed parameter list, with one learning
/// rate per parameter group. A step is atomic: if any gradient is non-finite
/// the whole update is rejected and the offending parameter is named.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, std::vector<double> group_lrs)
      : cfg_(cfg), group_lrs_(std::move(group_lrs)) {
    if (group_lrs_.empty())
      throw std::invalid_argument("optimizer: need at least one learning-rate group");
    for (double lr : group_lrs_)
      if (!(lr > 0.0) || !std::isfinite(lr))
        throw std::invalid_argument("optimizer: learning rates must be positive and finite");
  }

  OptKind kind() const { return cfg_.kind; }
  long step_count() const { return step_; }
  const std::vector<double>& group_lrs() const { return group_lrs_; }

  void set_group_lr(std::size_t g, double lr) {
    if (g >= group_lrs_.size())
      throw std::out_of_range("optimizer: group " + std::to_string(g) + " out of range");
    group_lrs_[g] = lr;
  }

  void step(const std::vector<ParamRef<T>>& params, const std::vector<Tensor<T>>& grads) {
    if (params.size() != grads.size())
      throw std::invalid_argument("optimizer: " + std::to_string(params.size()) +
                                  " parameters vs " + std::to_string(grads.size()) +
                                  " gradients");
    ensure_state(params);
    // Validate everything before touching any buffer so a rejected step
    // leaves parameters and moments untouched.
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].value->same_shape(grads[i]))
        throw std::invalid_argument("optimizer: gradient shape " + shape_str(grads[i].shape()) +
                                    " does not match parameter '" + params[i].name + "' " +
                                    shape_str(params[i].value->shape()));
      if (static_cast<std::size_t>(params[i].group) >= group_lrs_.size())
        throw std::invalid_argument("optimizer: parameter '" + params[i].name +
                                    "' references unknown group " +
                                    std::to_string(params[i].group));
      if (!grads[i].all_finite())
        throw std::runtime_error("optimizer: non-finite gradient for parameter '" +
                                 params[i].name + "'; step rejected");
    }

    ++step_;
    if (cfg_.kind == OptKind::adam) {
      const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
      const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double lr = group_lrs_[static_cast<std::size_t>(params[i].group)];
        Tensor<T>& p = *params[i].value;
        Tensor<T>& m = m1_[i];
        Tensor<T>& v = m2_[i];
        const Tensor<T>& gr = grads[i];
        for (std::size_t c = 0; c < p.size(); ++c) {
          const double gd = static_cast<double>(gr[c]);
          const double md = cfg_.beta1 * static_cast<double>(m[c]) + (1.0 - cfg_.beta1) * gd;
          const double vd = cfg_.beta2 * static_cast<double>(v[c]) + (1.0 - cfg_.beta2) * gd * gd;
          m[c] = static_cast<T>(md);
          v[c] = static_cast<T>(vd);
          const double mhat = md / bc1;
          const double vhat = vd / bc2;
          p[c] = static_cast<T>(static_cast<double>(p[c]) -
                                lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
      }
    } else {
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double lr = group_lrs_[static_cast<std::size_t>(params[i].group)];
        Tensor<T>& p = *params[i].value;
        Tensor<T>& vel = m1_[i];
        const Tensor<T>& gr = grads[i];
        for (std::size_t c = 0; c < p.size(); ++c) {
          const double vd =
              cfg_.momentum * static_cast<double>(vel[c]) + static_cast<double>(gr[c]);
          vel[c] = static_cast<T>(vd);
          p[c] = static_cast<T>(static_cast<double>(p[c]) - lr * vd);
        }
      }
    }
  }

  // State access for checkpointing.
  const std::vector<Tensor<T>>& moment1() const { return m1_; }
  const std::vector<Tensor<T>>& moment2() const { return m2_; }

  void restore(long step, std::vector<Tensor<T>> m1, std::vector<Tensor<T>> m2,
               std::vector<double> lrs) {
    if (lrs.size() != group_lrs_.size())
      throw std::invalid_argument("optimizer: restored group count mismatch");
    step_ = step;
    m1_ = std::move(m1);
    m2_ = std::move(m2);
    group_lrs_ = std::move(lrs);
    initialized_ = !m1_.empty();
  }

 private:
  void ensure_state(const std::vector<ParamRef<T>>& params) {
    if (!initialized_) {
      m1_.clear();
      m2_.clear();
      for (const ParamRef<T>& p : params) {
        m1_.emplace_back(p.value->shape());
        if (cfg_.kind == OptKind::adam) m2_.emplace_back(p.value->shape());
      }
      initialized_ = true;
      return;
    }
    if (m1_.size() != params.size())
      throw std::invalid_argument("optimizer: parameter count changed from " +
                                  std::to_string(m1_.size()) + " to " +
                                  std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i)
      if (!m1_[i].same_shape(*params[i].value))
        throw std::invalid_argument("optimizer: buffer shape " + shape_str(m1_[i].shape()) +
                                    " does not mirror parameter '" + params[i].name + "' " +
                                    shape_str(params[i].value->shape()));
  }

  OptimizerConfig cfg_;
  std::vector<double> group_lrs_;
  std::vector<Tensor<T>> m1_, m2_;
  long step_ = 0;
  bool initialized_ = false;
};

/// Milestone schedule: crossing each milestone divides every group learning
/// rate by `decay` exactly once, no matter how often apply() is called.
class LrSchedule {
 public:
  LrSchedule() = default;
  LrSchedule(std::vector<long> milestones, double decay = 10.0)
      : milestones_(std::move(milestones)), decay_(decay) {
    for (std::size_t i = 1; i < milestones_.size(); ++i)
      if (milestones_[i] <= milestones_[i - 1])
        throw std::invalid_argument("schedule: milestones must be strictly increasing");
    if (!(decay_ > 0.0))
      throw std::invalid_argument("schedule: decay factor must be positive");
  }

  template <typename T>
  void apply(Optimizer<T>& opt, long time) {
    if (time < last_time_)
      throw std::invalid_argument("schedule: time moved backwards (" + std::to_string(time) +
                                  " after " + std::to_string(last_time_) + ")");
    for (long m : milestones_) {
      if (m > last_time_ && m <= time)
        for (std::size_t g = 0; g < opt.group_lrs().size(); ++g)
          opt.set_group_lr(g, opt.group_lrs()[g] / decay_);
    }
    last_time_ = time;
  }

  long last_time() const { return last_time_; }
  const std::vector<long>& milestones() const { return milestones_; }
  double decay() const { return decay_; }

 private:
  std::vector<long> milestones_;
  double decay_ = 10.0;
  long last_time_ = -1;
};

}  // namespace tafe

#endif  // TAFE_OPTIM_HPP
