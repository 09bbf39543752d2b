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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tafe/data.hpp"
#include "tafe/model.hpp"
#include "tafe/rng.hpp"

#include "linear_probe.hpp"

using namespace tafe;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "tafe_data_tests";
  fs::create_directories(dir);
  return dir;
}

FeatureStore random_store(Rng& rng, std::size_t n, std::size_t d) {
  FeatureStore s;
  s.features = rng.uniform_tensor<float>({n, d}, -2.0, 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    s.sample_ids.push_back(static_cast<std::int64_t>(i * 3 + 1));
    s.labels.push_back(static_cast<std::int64_t>(rng.below(4)));
  }
  return s;
}

}  // namespace

TEST_CASE("feature file: binary round trip is lossless") {
  Rng rng(1);
  const FeatureStore store = random_store(rng, 10, 8);
  const std::string path = (temp_dir() / "roundtrip.bin").string();
  save_features(store, path);
  const FeatureStore loaded = load_features(path);
  CHECK(loaded.sample_ids == store.sample_ids);
  CHECK(loaded.labels == store.labels);
  REQUIRE(loaded.features.shape() == store.features.shape());
  for (std::size_t i = 0; i < store.features.size(); ++i)
    CHECK(loaded.features[i] == store.features[i]);
}

TEST_CASE("feature file: plain-text fallback round trip") {
  Rng rng(2);
  const FeatureStore store = random_store(rng, 6, 5);
  const std::string path = (temp_dir() / "roundtrip.txt").string();
  save_features(store, path, /*binary=*/false);
  const FeatureStore loaded = load_features(path);
  CHECK(loaded.sample_ids == store.sample_ids);
  CHECK(loaded.labels == store.labels);
  for (std::size_t i = 0; i < store.features.size(); ++i)
    CHECK(loaded.features[i] == store.features[i]);
}

TEST_CASE("feature file: truncation, bad magic and non-finite values are rejected") {
  Rng rng(3);
  const FeatureStore store = random_store(rng, 2, 2);
  const std::string path = (temp_dir() / "broken.bin").string();
  save_features(store, path);

  {  // truncate the payload
    const auto full = fs::file_size(path);
    fs::resize_file(path, full - 5);
    try {
      load_features(path);
      FAIL("expected truncation error");
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("truncated") != std::string::npos);
      CHECK(msg.find("expected") != std::string::npos);
    }
  }

  {  // bad magic
    save_features(store, path);
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("NOTAFILE", 8);
    f.close();
    try {
      load_features(path);
      // Without the magic the file is treated as text and must fail there.
      FAIL("expected parse failure");
    } catch (const std::runtime_error&) {
    }
  }

  {  // NaN payload: header(29) + ids(16) + labels(16) -> features at byte 61
    save_features(store, path);
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(61);
    const unsigned char nan_bits[4] = {0x00, 0x00, 0xc0, 0x7f};
    f.write(reinterpret_cast<const char*>(nan_bits), 4);
    f.close();
    try {
      load_features(path);
      FAIL("expected non-finite rejection");
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("non-finite") != std::string::npos);
      CHECK(msg.find("byte offset 61") != std::string::npos);
    }
  }
}

TEST_CASE("feature file: a 2048-wide header loads and feeds the model") {
  FeatureStore store;
  store.features = Tensor<float>({2, 2048});
  store.features(0, 0) = 1.0f;
  store.features(1, 2047) = -1.0f;
  store.sample_ids = {0, 1};
  store.labels = {0, 1};
  const std::string path = (temp_dir() / "resnet_width.bin").string();
  save_features(store, path);
  const FeatureStore loaded = load_features(path);
  CHECK(loaded.dim() == 2048);

  ModelConfig cfg;
  cfg.input_dim = loaded.dim();
  cfg.task_dim = 4;
  cfg.embed_dim = 4;
  cfg.widths = {4};
  cfg.task_depth = 1;
  cfg.task_hidden = 4;
  TafeNet<float> net(cfg, 1);
  CHECK(net.score_matrix(loaded.features, Tensor<float>({1, 4})).rows() == 2);
}

TEST_CASE("task file: one-hot synthesis gives identity rows") {
  const std::string path = (temp_dir() / "onehot.txt").string();
  {
    std::ofstream out(path);
    out << "tafe-tasks v1\nkind one-hot\nclasses 3\n";
    out << "class 0 cat\nclass 1 dog\nclass 2 bird\n";
  }
  const TaskTable t = load_tasks(path, TaskKind::one_hot);
  CHECK(t.dim() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(t.descriptions(i, j) == (i == j ? 1.0f : 0.0f));

  // Exactly one nonzero entry equal to 1 per row.
  const Tensor<float> v = encode_task(2, t);
  CHECK(v[0] == 0.0f);
  CHECK(v[1] == 0.0f);
  CHECK(v[2] == 1.0f);
}

TEST_CASE("task file: pair descriptions concatenate attribute and object embeddings") {
  {  // 300 + 300 = 600, mirroring word2vec-sized embeddings
    const std::string path = (temp_dir() / "pairs300.txt").string();
    std::ofstream out(path);
    out << "tafe-tasks v1\nkind word-concat\nattr_dim 300\nobj_dim 300\n";
    out << "attr 0 red";
    for (int i = 0; i < 300; ++i) out << " 0.5";
    out << "\nobj 0 car";
    for (int i = 0; i < 300; ++i) out << " -0.25";
    out << "\npair 7 red_car 0 0\n";
    out.close();
    const TaskTable t = load_tasks(path, TaskKind::word_concat);
    CHECK(t.dim() == 600);
    CHECK(t.class_ids == std::vector<std::int64_t>{7});
  }

  {  // value-level check on a small case
    const std::string path = (temp_dir() / "pairs_small.txt").string();
    std::ofstream out(path);
    out << "tafe-tasks v1\nkind word-concat\nattr_dim 2\nobj_dim 3\n";
    out << "attr 0 shiny 1 2\n";
    out << "obj 5 ball 3 4 5\n";
    out << "pair 1 shiny_ball 0 5\n";
    out.close();
    const TaskTable t = load_tasks(path, TaskKind::word_concat);
    const Tensor<float> v = encode_task(1, t);
    REQUIRE(v.size() == 5);
    CHECK(v[0] == 1.0f);
    CHECK(v[1] == 2.0f);
    CHECK(v[2] == 3.0f);
    CHECK(v[3] == 4.0f);
    CHECK(v[4] == 5.0f);
  }

  {  // dangling pair reference
    const std::string path = (temp_dir() / "pairs_bad.txt").string();
    std::ofstream out(path);
    out << "tafe-tasks v1\nkind word-concat\nattr_dim 1\nobj_dim 1\n";
    out << "attr 0 a 1\npair 0 broken 0 9\n";
    out.close();
    CHECK_THROWS_AS(load_tasks(path, TaskKind::word_concat), std::runtime_error);
  }
}

TEST_CASE("task file: ragged rows and kind mismatches are rejected") {
  const std::string path = (temp_dir() / "ragged.txt").string();
  {
    std::ofstream out(path);
    out << "tafe-tasks v1\nkind attribute-vector\ndim 3\n";
    out << "class 0 a 1 0 1\nclass 1 b 1 0\n";
  }
  CHECK_THROWS_AS(load_tasks(path, TaskKind::attribute_vector), std::runtime_error);
  {
    std::ofstream out(path);
    out << "tafe-tasks v1\nkind one-hot\nclasses 1\nclass 0 a\n";
  }
  CHECK_THROWS_AS(load_tasks(path, TaskKind::attribute_vector), std::runtime_error);
}

TEST_CASE("task table round trips through save/load") {
  Rng rng(4);
  TaskTable t;
  t.kind = TaskKind::attribute_vector;
  t.class_ids = {0, 3, 7};
  t.names = {"a", "b", "c"};
  t.descriptions = rng.uniform_tensor<float>({3, 5}, -1.0, 1.0);
  const std::string path = (temp_dir() / "tasks_rt.txt").string();
  save_tasks(t, path);
  const TaskTable loaded = load_tasks(path, TaskKind::attribute_vector);
  CHECK(loaded.class_ids == t.class_ids);
  CHECK(loaded.names == t.names);
  for (std::size_t i = 0; i < t.descriptions.size(); ++i)
    CHECK(loaded.descriptions[i] == t.descriptions[i]);
}

TEST_CASE("split file: aPY-shaped split is accepted, overlaps are rejected") {
  const std::string path = (temp_dir() / "split.txt").string();
  {
    std::ofstream out(path);
    out << "tafe-split v1\nseen";
    for (int c = 0; c < 20; ++c) out << ' ' << c;
    out << "\nunseen";
    for (int c = 20; c < 32; ++c) out << ' ' << c;
    out << "\ntrain 0 1 2\ntest 3 4 5\n";
  }
  const SplitSpec s = load_split(path);
  CHECK(s.seen.size() == 20);
  CHECK(s.unseen.size() == 12);

  {  // a class in both lists
    std::ofstream out(path);
    out << "tafe-split v1\nseen 0 1 2\nunseen 2 3\n";
  }
  CHECK_THROWS_AS(load_split(path), std::runtime_error);

  {  // empty unseen list: accepted (zero-shot evaluation later disabled)
    std::ofstream out(path);
    out << "tafe-split v1\nseen 0 1 2\ntrain 0\ntest 1\n";
  }
  CHECK(load_split(path).unseen.empty());
}

TEST_CASE("split disjointness holds after every load (adversarial property)") {
  Rng rng(5);
  const std::string path = (temp_dir() / "adversarial.txt").string();
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n_seen = 1 + rng.below(6);
    const std::size_t n_unseen = 1 + rng.below(6);
    std::set<std::int64_t> seen, unseen;
    while (seen.size() < n_seen) seen.insert(static_cast<std::int64_t>(rng.below(12)));
    while (unseen.size() < n_unseen) unseen.insert(static_cast<std::int64_t>(rng.below(12)));
    {
      std::ofstream out(path);
      out << "tafe-split v1\nseen";
      for (auto c : seen) out << ' ' << c;
      out << "\nunseen";
      for (auto c : unseen) out << ' ' << c;
      out << '\n';
    }
    bool overlap = false;
    for (auto c : unseen) overlap = overlap || seen.count(c);
    if (overlap) {
      CHECK_THROWS_AS(load_split(path), std::runtime_error);
    } else {
      const SplitSpec s = load_split(path);
      for (auto c : s.unseen) CHECK_FALSE(s.is_seen(c));
    }
  }
}

TEST_CASE("split round trips with hierarchy and base/novel lists") {
  SplitSpec s;
  s.seen = {0, 1, 2};
  s.unseen = {3, 4};
  s.train_samples = {0, 1, 2, 3};
  s.test_samples = {4, 5};
  s.base = {0, 1, 2};
  s.novel = {3, 4};
  s.group_of = {{0, 0}, {1, 0}, {2, 1}, {3, 1}, {4, 0}};
  const std::string path = (temp_dir() / "split_rt.txt").string();
  save_split(s, path);
  const SplitSpec loaded = load_split(path);
  CHECK(loaded.seen == s.seen);
  CHECK(loaded.unseen == s.unseen);
  CHECK(loaded.train_samples == s.train_samples);
  CHECK(loaded.test_samples == s.test_samples);
  CHECK(loaded.base == s.base);
  CHECK(loaded.novel == s.novel);
  CHECK(loaded.group_of == s.group_of);
}

TEST_CASE("cross-checks: split classes must exist in the task table") {
  TaskTable t;
  t.kind = TaskKind::attribute_vector;
  t.class_ids = {0, 1};
  t.names = {"a", "b"};
  t.descriptions = Tensor<float>({2, 2});
  SplitSpec s;
  s.seen = {0, 1};
  s.unseen = {7};
  try {
    validate_against(t, s);
    FAIL("expected missing-class error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("7") != std::string::npos);
  }
}

TEST_CASE("encode_task: stored vectors and exemplar means") {
  TaskTable t;
  t.kind = TaskKind::one_hot;
  t.class_ids = {0, 1, 2, 3};
  t.names = {"a", "b", "c", "d"};
  t.descriptions = Tensor<float>::identity(4).cast<float>();
  const Tensor<float> v = encode_task(2, t);
  CHECK(v[2] == 1.0f);
  CHECK_THROWS_AS(encode_task(9, t), std::runtime_error);

  const Tensor<float> single = Tensor<float>::vector({1.0f, 2.0f});
  const Tensor<float> mean1 = exemplar_description({single});
  CHECK(mean1[0] == 1.0f);
  CHECK(mean1[1] == 2.0f);

  const Tensor<float> other = Tensor<float>::vector({3.0f, 6.0f});
  const Tensor<float> mean2 = exemplar_description({single, other});
  CHECK(mean2[0] == 2.0f);
  CHECK(mean2[1] == 4.0f);
}

TEST_CASE("synthetic: noiseless classes collapse onto their mean") {
  SyntheticConfig cfg;
  cfg.noise = 0.0;
  cfg.n_seen = 4;
  cfg.n_unseen = 2;
  cfg.samples_per_class = 5;
  cfg.feature_dim = 8;
  cfg.n_groups = 2;
  cfg.prefix_len = 4;
  const SyntheticData d = generate_synthetic(cfg);
  for (std::int64_t cls = 0; cls < 6; ++cls) {
    const auto rows = d.store.rows_for_class(cls);
    REQUIRE(rows.size() == 5);
    for (std::size_t r : rows)
      for (std::size_t j = 0; j < 8; ++j)
        CHECK(d.store.features(r, j) == d.store.features(rows[0], j));
  }
}

TEST_CASE("synthetic: pure function of its config") {
  SyntheticConfig cfg;
  cfg.seed = 77;
  const SyntheticData a = generate_synthetic(cfg);
  const SyntheticData b = generate_synthetic(cfg);
  CHECK(a.store.features.vec() == b.store.features.vec());
  CHECK(a.store.labels == b.store.labels);
  CHECK(a.tasks.descriptions.vec() == b.tasks.descriptions.vec());
  CHECK(a.split.train_samples == b.split.train_samples);
  CHECK(a.split.group_of == b.split.group_of);

  SyntheticConfig other = cfg;
  other.seed = 78;
  const SyntheticData c = generate_synthetic(other);
  CHECK(a.store.features.vec() != c.store.features.vec());
}

TEST_CASE("synthetic: structure invariants") {
  SyntheticConfig cfg;
  const SyntheticData d = generate_synthetic(cfg);
  CHECK(d.store.size() == 30 * 50);
  CHECK(d.store.dim() == 64);
  CHECK(d.tasks.size() == 30);
  CHECK(d.split.seen.size() == 20);
  CHECK(d.split.unseen.size() == 10);

  // Attribute vectors are binary and globally distinct.
  std::set<std::vector<float>> rows;
  for (std::size_t c = 0; c < 30; ++c) {
    std::vector<float> row;
    for (std::size_t j = 0; j < 16; ++j) {
      const float v = d.tasks.descriptions(c, j);
      CHECK((v == 0.0f || v == 1.0f));
      row.push_back(v);
    }
    CHECK(rows.insert(row).second);
  }

  // The hierarchy covers every class and no group is a singleton.
  std::map<std::int64_t, int> group_count;
  for (std::size_t c = 0; c < 30; ++c) {
    REQUIRE(d.split.group_of.count(static_cast<std::int64_t>(c)) == 1);
    ++group_count[d.split.group_of.at(static_cast<std::int64_t>(c))];
  }
  CHECK(group_count.size() == 4);
  for (const auto& [g, n] : group_count) CHECK(n >= 2);

  // Train/test sample partition: seen classes split 80/20, unseen all test.
  std::set<std::int64_t> train(d.split.train_samples.begin(), d.split.train_samples.end());
  std::set<std::int64_t> test(d.split.test_samples.begin(), d.split.test_samples.end());
  CHECK(train.size() + test.size() == d.store.size());
  for (std::int64_t id : d.split.train_samples) CHECK_FALSE(test.count(id));
  for (std::int64_t cls : d.split.unseen)
    for (std::size_t r : d.store.rows_for_class(cls))
      CHECK(test.count(d.store.sample_ids[r]));
  validate_against(d.tasks, d.split);
  validate_against(d.store, d.split);
}

TEST_CASE("synthetic: a linear probe scores unseen classes above chance") {
  SyntheticConfig cfg;  // the default desk-scale dataset
  const SyntheticData d = generate_synthetic(cfg);
  const double acc = tafe::testing::linear_probe_unseen_top1(d);
  // Chance is 1/10; the linear structure should make this far higher.
  CHECK(acc > 0.2);
  MESSAGE("linear probe unseen per-class top-1: ", acc);
}

TEST_CASE("gen-synth byte determinism through the file formats") {
  SyntheticConfig cfg;
  cfg.n_seen = 4;
  cfg.n_unseen = 2;
  cfg.samples_per_class = 6;
  cfg.feature_dim = 8;
  cfg.n_groups = 2;
  cfg.prefix_len = 4;
  const fs::path dir = temp_dir();
  auto write_all = [&](const std::string& tag) {
    const SyntheticData d = generate_synthetic(cfg);
    save_features(d.store, (dir / ("f_" + tag)).string());
    save_tasks(d.tasks, (dir / ("t_" + tag)).string());
    save_split(d.split, (dir / ("s_" + tag)).string());
  };
  auto slurp = [&](const std::string& name) {
    std::ifstream in(dir / name, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  write_all("a");
  write_all("b");
  CHECK(slurp("f_a") == slurp("f_b"));
  CHECK(slurp("t_a") == slurp("t_b"));
  CHECK(slurp("s_a") == slurp("s_b"));
}
