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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "tafe/optim.hpp"

using namespace tafe;

namespace {

struct Holder {
  Tensor<double> value;
  std::string name;
  int group;
  ParamRef<double> ref() { return {name, group, &value}; }
};

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged, advances the step") {
  Holder p{Tensor<double>::vector({1.0, -2.0}), "p", kGroupMain};
  Optimizer<double> opt({}, {0.1, 0.01});
  opt.step({p.ref()}, {Tensor<double>({2})});
  CHECK(p.value[0] == 1.0);
  CHECK(p.value[1] == -2.0);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam: first-step magnitude is the learning rate (hand recurrence)") {
  // m = 0.1, v = 0.001; bias-corrected both become ~1, so the update is
  // -lr * 1 / (1 + eps) ~ -lr.
  Holder p{Tensor<double>::scalar(0.0), "p", kGroupMain};
  Optimizer<double> opt({}, {0.1, 0.01});
  opt.step({p.ref()}, {Tensor<double>::scalar(1.0)});
  CHECK(p.value[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam: per-group learning rates scale updates 10:1") {
  Holder a{Tensor<double>::scalar(0.0), "a", kGroupMain};
  Holder b{Tensor<double>::scalar(0.0), "b", kGroupTaskEmbed};
  Optimizer<double> opt({}, {1e-4, 1e-5});
  opt.step({a.ref(), b.ref()}, {Tensor<double>::scalar(1.0), Tensor<double>::scalar(1.0)});
  CHECK(a.value[0] / b.value[0] == doctest::Approx(10.0).epsilon(1e-10));
}

TEST_CASE("sgd with momentum: hand recurrence") {
  OptimizerConfig cfg;
  cfg.kind = OptKind::sgd_momentum;

  {  // zero gradient, zero velocity
    Holder p{Tensor<double>::scalar(3.0), "p", kGroupMain};
    Optimizer<double> opt(cfg, {1.0, 1.0});
    opt.step({p.ref()}, {Tensor<double>::scalar(0.0)});
    CHECK(p.value[0] == 3.0);
  }

  {  // g = 1 constant, lr = 1: steps move by -1 then -1.9
    Holder p{Tensor<double>::scalar(0.0), "p", kGroupMain};
    Optimizer<double> opt(cfg, {1.0, 1.0});
    opt.step({p.ref()}, {Tensor<double>::scalar(1.0)});
    CHECK(p.value[0] == doctest::Approx(-1.0).epsilon(1e-12));
    opt.step({p.ref()}, {Tensor<double>::scalar(1.0)});
    CHECK(p.value[0] == doctest::Approx(-2.9).epsilon(1e-12));
  }

  {  // momentum 0 degenerates to plain gradient descent
    OptimizerConfig plain = cfg;
    plain.momentum = 0.0;
    Holder p{Tensor<double>::scalar(1.0), "p", kGroupMain};
    Optimizer<double> opt(plain, {0.5, 0.5});
    opt.step({p.ref()}, {Tensor<double>::scalar(2.0)});
    CHECK(p.value[0] == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("optimizer rejects non-finite gradients atomically, naming the parameter") {
  Holder a{Tensor<double>::scalar(1.0), "alpha", kGroupMain};
  Holder b{Tensor<double>::scalar(2.0), "beta", kGroupMain};
  Optimizer<double> opt({}, {0.1, 0.1});
  Tensor<double> bad = Tensor<double>::scalar(std::nan(""));
  try {
    opt.step({a.ref(), b.ref()}, {Tensor<double>::scalar(1.0), bad});
    FAIL("expected rejection");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("beta") != std::string::npos);
  }
  // The whole step was rejected: nothing moved, the count did not advance.
  CHECK(a.value[0] == 1.0);
  CHECK(b.value[0] == 2.0);
  CHECK(opt.step_count() == 0);
}

TEST_CASE("optimizer state buffers mirror parameter shapes") {
  Holder p{Tensor<double>::vector({1.0, 2.0}), "p", kGroupMain};
  Optimizer<double> opt({}, {0.1, 0.1});
  opt.step({p.ref()}, {Tensor<double>::vector({0.1, 0.2})});
  Holder q{Tensor<double>::vector({1.0, 2.0, 3.0}), "q", kGroupMain};
  CHECK_THROWS_AS(opt.step({q.ref()}, {Tensor<double>::vector({0.1, 0.2, 0.3})}),
                  std::invalid_argument);
}

TEST_CASE("schedule: milestone examples") {
  {  // {30, 45} from 1e-4
    Optimizer<double> opt({}, {1e-4, 1e-5});
    LrSchedule sched({30, 45});
    sched.apply(opt, 0);
    CHECK(opt.group_lrs()[0] == doctest::Approx(1e-4).epsilon(1e-12));
    sched.apply(opt, 30);
    CHECK(opt.group_lrs()[0] == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(opt.group_lrs()[1] == doctest::Approx(1e-6).epsilon(1e-12));
    sched.apply(opt, 45);
    CHECK(opt.group_lrs()[0] == doctest::Approx(1e-6).epsilon(1e-12));
  }

  {  // no milestones: constant
    Optimizer<double> opt({}, {1e-4, 1e-5});
    LrSchedule sched(std::vector<long>{});
    for (long e = 0; e < 100; ++e) sched.apply(opt, e);
    CHECK(opt.group_lrs()[0] == doctest::Approx(1e-4).epsilon(1e-12));
  }

  {  // {5} over a 10-epoch run: exactly one reduction
    Optimizer<double> opt({}, {1e-4, 1e-5});
    LrSchedule sched({5});
    for (long e = 0; e < 10; ++e) sched.apply(opt, e);
    CHECK(opt.group_lrs()[0] == doctest::Approx(1e-5).epsilon(1e-12));
  }
}

TEST_CASE("schedule: repeated application within an epoch reduces once; time cannot reverse") {
  Optimizer<double> opt({}, {1e-2, 1e-2});
  LrSchedule sched({3});
  sched.apply(opt, 3);
  sched.apply(opt, 3);
  sched.apply(opt, 3);
  CHECK(opt.group_lrs()[0] == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK_THROWS_AS(sched.apply(opt, 2), std::invalid_argument);
  CHECK_THROWS_AS(LrSchedule({5, 5}), std::invalid_argument);
}

TEST_CASE("determinism: identical inputs give identical updates") {
  for (int run = 0; run < 2; ++run) {
    Holder p{Tensor<double>::vector({0.3, -0.7}), "p", kGroupMain};
    Optimizer<double> opt({}, {0.05, 0.05});
    for (int i = 0; i < 10; ++i)
      opt.step({p.ref()}, {Tensor<double>::vector({0.5, -0.25})});
    static Tensor<double> first;
    if (run == 0)
      first = p.value;
    else
      for (std::size_t i = 0; i < 2; ++i) CHECK(p.value[i] == first[i]);
  }
}

TEST_CASE("sanity descent: adam reaches f < 1e-3 on a convex quadratic") {
  // f(theta) = |theta|^2, gradient 2 theta, 200 steps at lr 1e-2 from (1,1).
  Holder p{Tensor<double>::vector({1.0, 1.0}), "p", kGroupMain};
  Optimizer<double> opt({}, {1e-2, 1e-2});
  for (int i = 0; i < 200; ++i) {
    Tensor<double> grad = p.value;
    for (double& g : grad.vec()) g *= 2.0;
    opt.step({p.ref()}, {grad});
  }
  const double f = p.value[0] * p.value[0] + p.value[1] * p.value[1];
  CHECK(f < 1e-3);
}
