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
#include <map>
#include <string>
#include <vector>

#include "tafe/grad_check.hpp"
#include "tafe/model.hpp"
#include "tafe/rng.hpp"

using namespace tafe;

namespace {

template <typename T>
std::map<std::string, Tensor<T>*> param_map(TafeNet<T>& net) {
  std::map<std::string, Tensor<T>*> m;
  for (const ParamRef<T>& p : net.parameters()) m[p.name] = p.value;
  return m;
}

/// Brute-force convolution oracle: materialize a zero-padded input, then
/// direct nested loops, then per-channel scaling.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                           const Tensor<double>& gains) {
  const std::size_t h = x.shape()[0], wd = x.shape()[1], ci = x.shape()[2];
  const std::size_t k = w.shape()[0], co = w.shape()[3];
  const std::size_t pad = k / 2;
  Tensor<double> padded({h + 2 * pad, wd + 2 * pad, ci});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < wd; ++xx)
      for (std::size_t c = 0; c < ci; ++c)
        padded.data()[((y + pad) * (wd + 2 * pad) + (xx + pad)) * ci + c] =
            x.data()[(y * wd + xx) * ci + c];
  Tensor<double> out({h, wd, co});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < wd; ++xx)
      for (std::size_t o = 0; o < co; ++o) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx)
            for (std::size_t c = 0; c < ci; ++c)
              acc += w.data()[((ky * k + kx) * ci + c) * co + o] *
                     padded.data()[((y + ky) * (wd + 2 * pad) + (xx + kx)) * ci + c];
        out.data()[(y * wd + xx) * co + o] = acc * gains[o];
      }
  return out;
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.input_dim = 5;
  cfg.task_dim = 4;
  cfg.embed_dim = 6;
  cfg.widths = {7, 6};
  cfg.task_hidden = 5;
  cfg.task_depth = 2;
  return cfg;
}

}  // namespace

TEST_CASE("model config: TAFE and task embedding must share a space") {
  ModelConfig bad = small_config();
  bad.widths = {7, 8};  // last width != embed_dim
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("embed_task: zero weights give a zero embedding") {
  TafeNet<double> net(small_config(), 1);
  for (auto& [name, value] : param_map(net))
    if (name.rfind("task_net.", 0) == 0) value->fill(0.0);
  Tensor<double> e = net.embed_task(Tensor<double>::vector({1, -2, 3, 4}));
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i] == 0.0);
}

TEST_CASE("embed_task: identity single-layer stack is the identity") {
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.task_dim = 4;
  cfg.embed_dim = 4;
  cfg.widths = {4};
  cfg.task_depth = 1;
  cfg.task_hidden = 4;
  TafeNet<double> net(cfg, 2);
  auto params = param_map(net);
  *params["task_net.0.weight"] = Tensor<double>::identity(4);
  params["task_net.0.bias"]->fill(0.0);
  Tensor<double> t = Tensor<double>::vector({0.5, -1.5, 2.0, 0.0});
  Tensor<double> e = net.embed_task(t);
  for (std::size_t i = 0; i < 4; ++i) CHECK(e[i] == t[i]);
}

TEST_CASE("embed_task: matches a straight-line re-implementation (64->32->32)") {
  ModelConfig cfg;
  cfg.input_dim = 8;
  cfg.task_dim = 64;
  cfg.embed_dim = 32;
  cfg.widths = {32};
  cfg.task_hidden = 32;
  cfg.task_depth = 2;
  TafeNet<double> net(cfg, 42);
  auto params = param_map(net);
  Rng rng(17);
  Tensor<double> t = rng.uniform_tensor<double>({64}, -1.0, 1.0);

  // Independent re-implementation of the affine+relu chain.
  std::vector<double> h(t.vec());
  for (std::size_t layer = 0; layer < 2; ++layer) {
    const Tensor<double>& w = *params["task_net." + std::to_string(layer) + ".weight"];
    const Tensor<double>& b = *params["task_net." + std::to_string(layer) + ".bias"];
    std::vector<double> next(w.cols(), 0.0);
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double s = b[j];
      for (std::size_t i = 0; i < w.rows(); ++i) s += h[i] * w(i, j);
      next[j] = s;
    }
    if (layer == 0)
      for (double& v : next) v = std::max(v, 0.0);
    h = std::move(next);
  }

  Tensor<double> e = net.embed_task(t);
  REQUIRE(e.size() == h.size());
  for (std::size_t i = 0; i < h.size(); ++i)
    CHECK(e[i] == doctest::Approx(h[i]).epsilon(1e-12));

  CHECK_THROWS_AS(net.embed_task(Tensor<double>::vector({1, 2, 3})), std::invalid_argument);
}

TEST_CASE("generate_gains: constant generator, distinctness, range check") {
  TafeNet<double> net(small_config(), 3);
  auto params = param_map(net);
  params["gen.0.weight"]->fill(0.0);
  Tensor<double> b({7});
  for (std::size_t i = 0; i < 7; ++i) b[i] = 0.1 * static_cast<double>(i + 1);
  *params["gen.0.bias"] = b;
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor<double> e = rng.uniform_tensor<double>({6}, -2.0, 2.0);
    Tensor<double> g = net.generate_gains(e, 0);
    for (std::size_t i = 0; i < 7; ++i) CHECK(g[i] == b[i]);
  }

  // Distinct embeddings give distinct gains under a random generator.
  TafeNet<double> net2(small_config(), 4);
  Tensor<double> e1 = rng.uniform_tensor<double>({6}, -1.0, 1.0);
  Tensor<double> e2 = rng.uniform_tensor<double>({6}, -1.0, 1.0);
  Tensor<double> g1 = net2.generate_gains(e1, 1);
  Tensor<double> g2 = net2.generate_gains(e2, 1);
  bool any_diff = false;
  for (std::size_t i = 0; i < g1.size(); ++i) any_diff = any_diff || g1[i] != g2[i];
  CHECK(any_diff);

  CHECK_THROWS_AS(net2.generate_gains(e1, 2), std::out_of_range);
}

TEST_CASE("generated parameter economy: conv gains are c_out, not the full bank") {
  Rng rng(6);
  FactorizedConv<double> conv(rng.uniform_tensor<double>({3, 3, 64, 128}, -0.1, 0.1));
  CHECK(conv.out_channels() == 128);
  CHECK(conv.weight.size() == std::size_t(3 * 3 * 64 * 128));
  CHECK(conv.weight.size() == 73728);
  conv.install_gains(Tensor<double>({128}));
  CHECK(conv.gains->size() == 128);  // 128 generated values per task
  CHECK_THROWS_AS(conv.install_gains(Tensor<double>({73728})), std::invalid_argument);
}

TEST_CASE("fc_dynamic_forward: identity gains, zero gains, materialized oracle") {
  Rng rng(7);
  FactorizedFc<double> fc(rng.uniform_tensor<double>({3, 2}, -1.0, 1.0),
                          rng.uniform_tensor<double>({2}, -1.0, 1.0));
  Tensor<double> x = rng.uniform_tensor<double>({3}, -1.0, 1.0);

  CHECK_THROWS_AS(fc.forward(x), std::logic_error);  // gains not installed

  fc.install_gains(Tensor<double>::full({2}, 1.0));
  Tensor<double> plain = fc.forward(x);
  for (std::size_t j = 0; j < 2; ++j) {
    double s = fc.bias[j];
    for (std::size_t i = 0; i < 3; ++i) s += x[i] * fc.weight(i, j);
    CHECK(plain[j] == doctest::Approx(s).epsilon(1e-15));
  }

  fc.install_gains(Tensor<double>({2}));  // zero gains: output is the bias
  Tensor<double> biased = fc.forward(x);
  for (std::size_t j = 0; j < 2; ++j) CHECK(biased[j] == fc.bias[j]);

  // Modulated form vs materialized weight * diag(gains).
  Tensor<double> gains = rng.uniform_tensor<double>({2}, -2.0, 2.0);
  fc.install_gains(gains);
  Tensor<double> modulated = fc.forward(x);
  for (std::size_t j = 0; j < 2; ++j) {
    double s = fc.bias[j];
    for (std::size_t i = 0; i < 3; ++i) s += x[i] * (fc.weight(i, j) * gains[j]);
    CHECK(modulated[j] == doctest::Approx(s).epsilon(1e-12));
  }

  fc.clear_gains();
  CHECK_THROWS_AS(fc.forward(x), std::logic_error);
}

TEST_CASE("factorization identity property: modulated == materialized, 64-bit") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.below(64), n = 1 + rng.below(64);
    Tensor<double> w = rng.uniform_tensor<double>({m, n}, -1.0, 1.0);
    Tensor<double> gains = rng.uniform_tensor<double>({n}, -1.0, 1.0);
    Tensor<double> x = rng.uniform_tensor<double>({m}, -1.0, 1.0);
    FactorizedFc<double> fc(w, Tensor<double>({n}));
    fc.install_gains(gains);
    const Tensor<double> got = fc.forward(x);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += x[i] * (w(i, j) * gains[j]);
      CHECK(std::abs(got[j] - s) <= 1e-12);
    }
  }
}

TEST_CASE("conv_dynamic_forward: identity gains, FC degeneracy, brute-force oracle") {
  Rng rng(9);

  {  // identity gains reduce to the plain convolution
    FactorizedConv<double> conv(rng.uniform_tensor<double>({3, 3, 2, 3}, -1.0, 1.0));
    Tensor<double> x = rng.uniform_tensor<double>({4, 5, 2}, -1.0, 1.0);
    conv.install_gains(Tensor<double>::full({3}, 1.0));
    Tensor<double> got = conv.forward(x);
    Tensor<double> want = conv_oracle(x, conv.weight, Tensor<double>::full({3}, 1.0));
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }

  {  // 1x1 spatial input with k=1 equals fc_dynamic_forward without bias
    const std::size_t ci = 4, co = 3;
    Tensor<double> w = rng.uniform_tensor<double>({1, 1, ci, co}, -1.0, 1.0);
    Tensor<double> gains = rng.uniform_tensor<double>({co}, -1.0, 1.0);
    Tensor<double> xvec = rng.uniform_tensor<double>({ci}, -1.0, 1.0);
    FactorizedConv<double> conv(w);
    conv.install_gains(gains);
    Tensor<double> ximg({1, 1, ci}, xvec.vec());
    Tensor<double> conv_out = conv.forward(ximg);

    FactorizedFc<double> fc(Tensor<double>({ci, co}, w.vec()), Tensor<double>({co}));
    fc.install_gains(gains);
    Tensor<double> fc_out = fc.forward(xvec);
    for (std::size_t j = 0; j < co; ++j)
      CHECK(conv_out[j] == doctest::Approx(fc_out[j]).epsilon(1e-13));
  }

  {  // random instances vs the oracle
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t h = 1 + rng.below(6), wd = 1 + rng.below(6);
      const std::size_t ci = 1 + rng.below(8), co = 1 + rng.below(8);
      const std::size_t k = rng.below(2) == 0 ? 1 : 3;
      FactorizedConv<double> conv(rng.uniform_tensor<double>({k, k, ci, co}, -1.0, 1.0));
      Tensor<double> gains = rng.uniform_tensor<double>({co}, -1.0, 1.0);
      conv.install_gains(gains);
      Tensor<double> x = rng.uniform_tensor<double>({h, wd, ci}, -1.0, 1.0);
      Tensor<double> got = conv.forward(x);
      Tensor<double> want = conv_oracle(x, conv.weight, gains);
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-10);
    }
  }

  {  // channel mismatch rejected; even support rejected
    FactorizedConv<double> conv(rng.uniform_tensor<double>({3, 3, 2, 2}, -1.0, 1.0));
    conv.install_gains(Tensor<double>::full({2}, 1.0));
    CHECK_THROWS_AS(conv.forward(Tensor<double>({4, 4, 3})), std::invalid_argument);
    CHECK_THROWS_AS(FactorizedConv<double>(Tensor<double>({2, 2, 1, 1})),
                    std::invalid_argument);
  }
}

TEST_CASE("compute_tafe: task sensitivity, identity gains, zero input") {
  ModelConfig cfg = small_config();
  TafeNet<double> net(cfg, 11);
  Rng rng(12);
  Tensor<double> x = rng.uniform_tensor<double>({5}, -1.0, 1.0);
  Tensor<double> t1 = rng.uniform_tensor<double>({4}, -1.0, 1.0);
  Tensor<double> t2 = rng.uniform_tensor<double>({4}, -1.0, 1.0);
  Tensor<double> a = net.compute_tafe(x, t1);
  Tensor<double> b = net.compute_tafe(x, t2);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) any_diff = any_diff || a[i] != b[i];
  CHECK(any_diff);

  // Force identity gains: the TAFE equals a plain stacked-FC forward.
  TafeNet<double> plain_net(cfg, 13);
  auto params = param_map(plain_net);
  for (auto& [name, value] : params)
    if (name.rfind("gen.", 0) == 0)
      value->fill(name.find("bias") != std::string::npos ? 1.0 : 0.0);
  Tensor<double> tafe = plain_net.compute_tafe(x, t1);
  Tensor<double> h = x;
  for (std::size_t l = 0; l < 2; ++l) {
    const Tensor<double>& w = *params["dyn." + std::to_string(l) + ".weight"];
    const Tensor<double>& bb = *params["dyn." + std::to_string(l) + ".bias"];
    Tensor<double> next({w.cols()});
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double s = bb[j];
      for (std::size_t i = 0; i < w.rows(); ++i) s += h[i] * w(i, j);
      next[j] = std::max(s, 0.0);
    }
    h = next;
  }
  REQUIRE(tafe.size() == h.size());
  for (std::size_t i = 0; i < h.size(); ++i)
    CHECK(tafe[i] == doctest::Approx(h[i]).epsilon(1e-12));

  // Zero input with zero biases gives a zero TAFE.
  Tensor<double> zero_tafe = net.compute_tafe(Tensor<double>({5}), t1);
  for (std::size_t i = 0; i < zero_tafe.size(); ++i) CHECK(zero_tafe[i] == 0.0);
}

TEST_CASE("predict_logit: constant classifier, task sensitivity, self-alignment") {
  ModelConfig cfg = small_config();
  TafeNet<double> net(cfg, 21);
  auto params = param_map(net);
  Rng rng(22);
  Tensor<double> x = rng.uniform_tensor<double>({5}, -1.0, 1.0);
  Tensor<double> t1 = rng.uniform_tensor<double>({4}, -1.0, 1.0);
  Tensor<double> t2 = rng.uniform_tensor<double>({4}, -1.0, 1.0);

  {  // w_cls = 0, b_cls = c
    TafeNet<double> constant_net(cfg, 23);
    auto cp = param_map(constant_net);
    cp["cls.weight"]->fill(0.0);
    (*cp["cls.bias"])[0] = 2.5;
    CHECK(constant_net.predict_logit(x, t1) == 2.5);
    CHECK(constant_net.predict_logit(x, t2) == 2.5);
  }

  CHECK(net.predict_logit(x, t1) != net.predict_logit(x, t2));

  {  // classifier aligned with a fixed TAFE gives its squared norm
    Tensor<double> tafe = net.compute_tafe(x, t1);
    for (std::size_t i = 0; i < tafe.size(); ++i) (*params["cls.weight"])[i] = tafe[i];
    (*params["cls.bias"])[0] = 0.0;
    double norm2 = 0.0;
    for (std::size_t i = 0; i < tafe.size(); ++i) norm2 += tafe[i] * tafe[i];
    CHECK(net.predict_logit(x, t1) == doctest::Approx(norm2).epsilon(1e-12));
  }
}

TEST_CASE("score_matrix: consistency with predict_logit, duplicated columns, threads") {
  ModelConfig cfg = small_config();
  TafeNet<double> net(cfg, 31);
  Rng rng(32);
  Tensor<double> features = rng.uniform_tensor<double>({4, 5}, -1.0, 1.0);
  Tensor<double> tasks = rng.uniform_tensor<double>({2, 4}, -1.0, 1.0);

  Tensor<double> scores = net.score_matrix(features, tasks);
  REQUIRE(scores.rows() == 4);
  REQUIRE(scores.cols() == 2);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(scores(i, j) ==
            doctest::Approx(net.predict_logit(row_of(features, i), row_of(tasks, j)))
                .epsilon(1e-12));

  {  // single task column
    Tensor<double> one_task({1, 4}, row_of(tasks, 0).vec());
    Tensor<double> col = net.score_matrix(features, one_task);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(col(i, 0) == doctest::Approx(scores(i, 0)).epsilon(1e-12));
  }

  {  // duplicated task descriptions give identical columns
    std::vector<double> dup = row_of(tasks, 0).vec();
    std::vector<double> t0 = dup;
    dup.insert(dup.end(), t0.begin(), t0.end());
    Tensor<double> scores2 = net.score_matrix(features, Tensor<double>({2, 4}, dup));
    for (std::size_t i = 0; i < 4; ++i) CHECK(scores2(i, 0) == scores2(i, 1));
  }

  {  // threaded evaluation is bit-identical to serial
    Tensor<double> many_tasks = rng.uniform_tensor<double>({5, 4}, -1.0, 1.0);
    Tensor<double> serial = net.score_matrix(features, many_tasks, 1);
    Tensor<double> threaded = net.score_matrix(features, many_tasks, 3);
    for (std::size_t i = 0; i < serial.size(); ++i) CHECK(serial[i] == threaded[i]);
  }
}

TEST_CASE("graph forward equals the tensor path") {
  ModelConfig cfg = small_config();
  TafeNet<double> net(cfg, 41);
  Rng rng(42);
  Tensor<double> features = rng.uniform_tensor<double>({3, 5}, -1.0, 1.0);
  Tensor<double> tasks = rng.uniform_tensor<double>({2, 4}, -1.0, 1.0);

  Graph<double> g;
  auto bound = net.bind(g);
  auto fwd = net.forward_graph(g, bound, features, tasks);
  Tensor<double> scores = net.score_matrix(features, tasks);
  for (std::size_t i = 0; i < scores.size(); ++i)
    CHECK(g.value(fwd.logits)[i] == doctest::Approx(scores[i]).epsilon(1e-12));

  for (std::size_t t = 0; t < 2; ++t) {
    Tensor<double> tafes = net.tafe_batch_for_task(features, row_of(tasks, t));
    for (std::size_t i = 0; i < tafes.size(); ++i)
      CHECK(g.value(fwd.tafes[t])[i] == doctest::Approx(tafes[i]).epsilon(1e-12));
  }

  for (std::size_t t = 0; t < 2; ++t) {
    Tensor<double> e = net.embed_task(row_of(tasks, t));
    for (std::size_t d = 0; d < e.size(); ++d)
      CHECK(g.value(fwd.task_embeddings)(t, d) == doctest::Approx(e[d]).epsilon(1e-12));
  }
}

TEST_CASE("classifier sharing: exactly one classifier block") {
  TafeNet<double> net(small_config(), 51);
  std::size_t cls_weights = 0;
  for (const ParamRef<double>& p : net.parameters())
    if (p.name == "cls.weight") ++cls_weights;
  CHECK(cls_weights == 1);
}

TEST_CASE("parameter economy: per task, generated values per layer equal its width") {
  ModelConfig cfg = small_config();
  TafeNet<double> net(cfg, 61);
  Rng rng(62);
  Tensor<double> e = net.embed_task(rng.uniform_tensor<double>({4}, -1.0, 1.0));
  std::size_t generated = 0;
  for (std::size_t l = 0; l < cfg.widths.size(); ++l) {
    Tensor<double> gains = net.generate_gains(e, l);
    CHECK(gains.size() == cfg.widths[l]);
    generated += gains.size();
  }
  std::size_t full = 0;
  for (const ParamRef<double>& p : net.parameters())
    if (p.name.rfind("dyn.", 0) == 0 && p.name.find("weight") != std::string::npos)
      full += p.value->size();
  CHECK(generated == 13);  // 7 + 6
  CHECK(full == 5 * 7 + 7 * 6);
  CHECK(generated < full);
}

TEST_CASE("end-to-end gradients of predict_logit pass the finite-difference check") {
  ModelConfig cfg = small_config();
  TafeNet<double> net(cfg, 71);
  Rng rng(72);
  Tensor<double> features = rng.uniform_tensor<double>({1, 5}, -1.0, 1.0);
  Tensor<double> task = rng.uniform_tensor<double>({1, 4}, -1.0, 1.0);

  std::vector<Tensor<double>> init;
  for (const ParamRef<double>& p : net.parameters()) init.push_back(*p.value);

  auto rep = grad_check(
      [&](Graph<double>& g, const std::vector<Graph<double>::Var>& p) {
        typename TafeNet<double>::BoundParams bound;
        bound.vars = p;
        bound.task_depth = cfg.task_depth;
        bound.dynamic = cfg.widths.size();
        auto fwd = net.forward_graph(g, bound, features, task);
        return g.sum(fwd.logits);
      },
      init, 1e-5);
  CHECK(rep.max_rel_error < 1e-4);
}
