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

#include "tafe/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tafe/bytes.hpp"
#include "tafe/rng.hpp"

namespace tafe {

namespace {

constexpr char kFeatureMagic[9] = "TAFEFEAT";
constexpr std::uint32_t kFeatureVersion = 1;
constexpr const char* kTasksHeader = "tafe-tasks v1";
constexpr const char* kSplitHeader = "tafe-split v1";

std::vector<std::string> tokens_of(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::int64_t parse_i64(const std::string& s, const std::string& ctx) {
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::runtime_error(ctx + ": expected an integer, got '" + s + "'");
  return v;
}

double parse_f64(const std::string& s, const std::string& ctx) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::runtime_error(ctx + ": expected a number, got '" + s + "'");
  return v;
}

std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

/// Reads non-empty, non-comment lines.
std::vector<std::string> content_lines(std::istream& is) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;
    if (line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

void check_sorted_unique(const std::vector<std::int64_t>& v, const std::string& what) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] <= v[i - 1])
      throw std::runtime_error(what + ": duplicate id " + std::to_string(v[i]));
}

}  // namespace

// ---- FeatureStore ----------------------------------------------------------

std::vector<std::size_t> FeatureStore::rows_for_class(std::int64_t cls) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == cls) out.push_back(i);
  return out;
}

void FeatureStore::validate() const {
  if (sample_ids.size() != labels.size() ||
      (features.rank() == 2 && features.rows() != sample_ids.size()))
    throw std::runtime_error("feature store: inconsistent sizes");
  std::set<std::int64_t> seen;
  for (std::int64_t id : sample_ids)
    if (!seen.insert(id).second)
      throw std::runtime_error("feature store: duplicate sample id " + std::to_string(id));
  if (!features.all_finite())
    throw std::runtime_error("feature store: non-finite feature value");
}

// ---- TaskTable -------------------------------------------------------------

const char* task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::attribute_vector: return "attribute-vector";
    case TaskKind::word_concat: return "word-concat";
    case TaskKind::one_hot: return "one-hot";
    case TaskKind::exemplar_feature: return "exemplar-feature";
  }
  return "?";
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "attribute-vector") return TaskKind::attribute_vector;
  if (name == "word-concat") return TaskKind::word_concat;
  if (name == "one-hot") return TaskKind::one_hot;
  if (name == "exemplar-feature") return TaskKind::exemplar_feature;
  throw std::runtime_error("unknown task kind '" + name + "'");
}

bool TaskTable::has(std::int64_t id) const {
  return std::binary_search(class_ids.begin(), class_ids.end(), id);
}

std::size_t TaskTable::index_of(std::int64_t id) const {
  const auto it = std::lower_bound(class_ids.begin(), class_ids.end(), id);
  if (it == class_ids.end() || *it != id)
    throw std::runtime_error("task table: unknown class " + std::to_string(id));
  return static_cast<std::size_t>(it - class_ids.begin());
}

Tensor<float> TaskTable::rows_for(const std::vector<std::int64_t>& ids) const {
  if (ids.empty()) throw std::invalid_argument("task table: empty id list");
  Tensor<float> out({ids.size(), dim()});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t r = index_of(ids[i]);
    for (std::size_t j = 0; j < dim(); ++j) out(i, j) = descriptions(r, j);
  }
  return out;
}

Tensor<float> encode_task(std::int64_t id, const TaskTable& table) {
  return row_of(table.descriptions, table.index_of(id));
}

Tensor<float> exemplar_description(const std::vector<Tensor<float>>& exemplars) {
  if (exemplars.empty())
    throw std::invalid_argument("exemplar description: need at least one exemplar");
  Tensor<float> mean(exemplars[0].shape());
  for (const Tensor<float>& e : exemplars) {
    if (!e.same_shape(mean))
      throw std::invalid_argument("exemplar description: mixed shapes " +
                                  shape_str(mean.shape()) + " vs " + shape_str(e.shape()));
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += e[i];
  }
  const float inv = 1.0f / static_cast<float>(exemplars.size());
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] *= inv;
  return mean;
}

// ---- SplitSpec -------------------------------------------------------------

void SplitSpec::validate() const {
  std::set<std::int64_t> s(seen.begin(), seen.end());
  if (s.size() != seen.size()) throw std::runtime_error("split: duplicate seen class");
  std::set<std::int64_t> u(unseen.begin(), unseen.end());
  if (u.size() != unseen.size()) throw std::runtime_error("split: duplicate unseen class");
  for (std::int64_t c : unseen)
    if (s.count(c))
      throw std::runtime_error("split: class " + std::to_string(c) +
                               " appears in both seen and unseen");
  if (seen.empty()) throw std::runtime_error("split: no seen classes");
}

bool SplitSpec::is_seen(std::int64_t cls) const {
  return std::find(seen.begin(), seen.end(), cls) != seen.end();
}

bool SplitSpec::is_unseen(std::int64_t cls) const {
  return std::find(unseen.begin(), unseen.end(), cls) != unseen.end();
}

// ---- synthetic data --------------------------------------------------------

void SyntheticConfig::validate() const {
  if (n_attributes == 0 || n_seen == 0 || samples_per_class == 0 || feature_dim == 0)
    throw std::invalid_argument("synthetic config: counts must be positive");
  if (!(noise >= 0.0) || !std::isfinite(noise))
    throw std::invalid_argument("synthetic config: noise must be finite and >= 0");
  if (n_groups == 0 || prefix_len == 0 || prefix_len > n_attributes)
    throw std::invalid_argument("synthetic config: invalid hierarchy (groups " +
                                std::to_string(n_groups) + ", prefix " +
                                std::to_string(prefix_len) + " of " +
                                std::to_string(n_attributes) + " attributes)");
  if (prefix_len < 64 && (1ull << prefix_len) < n_groups)
    throw std::invalid_argument("synthetic config: prefix too short for " +
                                std::to_string(n_groups) + " distinct groups");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("synthetic config: train_fraction must be in (0, 1)");
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t n_classes = cfg.n_seen + cfg.n_unseen;
  constexpr int kMaxRetries = 1000;

  // Distinct group prefixes.
  std::vector<std::vector<float>> prefixes;
  for (std::size_t g = 0; g < cfg.n_groups; ++g) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= kMaxRetries)
        throw std::runtime_error("synthetic: could not draw distinct group prefixes");
      std::vector<float> p(cfg.prefix_len);
      for (float& b : p) b = rng.uniform() < 0.5 ? 0.0f : 1.0f;
      if (std::find(prefixes.begin(), prefixes.end(), p) == prefixes.end()) {
        prefixes.push_back(std::move(p));
        break;
      }
    }
  }

  // Class attribute vectors: shared group prefix, random suffix, globally
  // distinct (unseen combinations must differ from every seen one).
  Tensor<float> attrs({n_classes, cfg.n_attributes});
  std::vector<std::vector<float>> used;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::size_t group = c % cfg.n_groups;
    for (int attempt = 0;; ++attempt) {
      if (attempt >= kMaxRetries)
        throw std::runtime_error("synthetic: could not draw distinct attribute vectors for class " +
                                 std::to_string(c));
      std::vector<float> a(cfg.n_attributes);
      for (std::size_t j = 0; j < cfg.prefix_len; ++j) a[j] = prefixes[group][j];
      for (std::size_t j = cfg.prefix_len; j < cfg.n_attributes; ++j)
        a[j] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
      if (std::find(used.begin(), used.end(), a) == used.end()) {
        for (std::size_t j = 0; j < cfg.n_attributes; ++j) attrs(c, j) = a[j];
        used.push_back(std::move(a));
        break;
      }
    }
  }

  // Mixing matrix and per-class means.
  Tensor<double> mix = rng.gaussian_tensor<double>({cfg.feature_dim, cfg.n_attributes}, 1.0);
  Tensor<double> means({n_classes, cfg.feature_dim});
  for (std::size_t c = 0; c < n_classes; ++c)
    for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
      double s = 0.0;
      for (std::size_t j = 0; j < cfg.n_attributes; ++j)
        s += mix(d, j) * static_cast<double>(attrs(c, j));
      means(c, d) = s;
    }

  const std::size_t n_samples = n_classes * cfg.samples_per_class;
  SyntheticData out;
  out.store.features = Tensor<float>({n_samples, cfg.feature_dim});
  out.store.sample_ids.resize(n_samples);
  out.store.labels.resize(n_samples);
  std::size_t row = 0;
  for (std::size_t c = 0; c < n_classes; ++c)
    for (std::size_t s = 0; s < cfg.samples_per_class; ++s, ++row) {
      out.store.sample_ids[row] = static_cast<std::int64_t>(row);
      out.store.labels[row] = static_cast<std::int64_t>(c);
      for (std::size_t d = 0; d < cfg.feature_dim; ++d)
        out.store.features(row, d) =
            static_cast<float>(means(c, d) + cfg.noise * rng.gaussian());
    }

  out.tasks.kind = TaskKind::attribute_vector;
  out.tasks.descriptions = attrs;
  for (std::size_t c = 0; c < n_classes; ++c) {
    out.tasks.class_ids.push_back(static_cast<std::int64_t>(c));
    out.tasks.names.push_back("class_" + std::to_string(c));
  }

  for (std::size_t c = 0; c < cfg.n_seen; ++c)
    out.split.seen.push_back(static_cast<std::int64_t>(c));
  for (std::size_t c = cfg.n_seen; c < n_classes; ++c)
    out.split.unseen.push_back(static_cast<std::int64_t>(c));
  out.split.base = out.split.seen;
  out.split.novel = out.split.unseen;
  for (std::size_t c = 0; c < n_classes; ++c)
    out.split.group_of[static_cast<std::int64_t>(c)] =
        static_cast<std::int64_t>(c % cfg.n_groups);

  // Seen classes: seeded train/test partition. Unseen classes: all test.
  for (std::size_t c = 0; c < cfg.n_seen; ++c) {
    std::vector<std::int64_t> ids;
    for (std::size_t s = 0; s < cfg.samples_per_class; ++s)
      ids.push_back(static_cast<std::int64_t>(c * cfg.samples_per_class + s));
    rng.shuffle(ids);
    const std::size_t n_train = static_cast<std::size_t>(
        std::ceil(cfg.train_fraction * static_cast<double>(cfg.samples_per_class)));
    for (std::size_t s = 0; s < ids.size(); ++s)
      (s < n_train ? out.split.train_samples : out.split.test_samples).push_back(ids[s]);
  }
  for (std::size_t c = cfg.n_seen; c < n_classes; ++c)
    for (std::size_t s = 0; s < cfg.samples_per_class; ++s)
      out.split.test_samples.push_back(static_cast<std::int64_t>(c * cfg.samples_per_class + s));
  std::sort(out.split.train_samples.begin(), out.split.train_samples.end());
  std::sort(out.split.test_samples.begin(), out.split.test_samples.end());

  out.split.validate();
  return out;
}

// ---- feature files ---------------------------------------------------------

namespace {

FeatureStore load_features_binary(std::ifstream& in, const std::string& path) {
  bytes::Reader r(in, "feature file '" + path + "'");
  char magic[8];
  r.read_raw(magic, 8);
  if (std::string(magic, 8) != kFeatureMagic)
    throw std::runtime_error("feature file '" + path + "': bad magic at byte 0");
  const std::uint32_t version = r.u32();
  if (version != kFeatureVersion)
    throw std::runtime_error("feature file '" + path + "': unsupported version " +
                             std::to_string(version));
  const std::uint64_t n = r.u64();
  const std::uint64_t d = r.u64();
  const std::uint8_t precision = r.u8();
  if (precision > 1)
    throw std::runtime_error("feature file '" + path + "': unknown precision tag " +
                             std::to_string(precision));
  if (n == 0 || d == 0)
    throw std::runtime_error("feature file '" + path + "': empty store");

  FeatureStore store;
  store.sample_ids.resize(n);
  store.labels.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) store.sample_ids[i] = r.i64();
  for (std::uint64_t i = 0; i < n; ++i) store.labels[i] = r.i64();
  store.features = Tensor<float>({n, d});
  for (std::uint64_t i = 0; i < n * d; ++i) {
    const std::size_t at = r.offset();
    const float v = precision == 0 ? r.f32() : static_cast<float>(r.f64());
    if (!std::isfinite(v))
      throw std::runtime_error("feature file '" + path + "': non-finite value at byte offset " +
                               std::to_string(at) + " (sample " + std::to_string(i / d) +
                               ", dim " + std::to_string(i % d) + ")");
    store.features[i] = v;
  }
  r.expect_eof();
  store.validate();
  return store;
}

FeatureStore load_features_text(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> lines = content_lines(in);
  if (lines.empty()) throw std::runtime_error("feature file '" + path + "': empty");
  FeatureStore store;
  std::vector<float> values;
  std::size_t dim = 0;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string ctx = "feature file '" + path + "' line " + std::to_string(ln + 1);
    std::vector<std::string> tok = tokens_of(lines[ln]);
    if (tok.size() < 3) throw std::runtime_error(ctx + ": expected 'id label v...'");
    store.sample_ids.push_back(parse_i64(tok[0], ctx));
    store.labels.push_back(parse_i64(tok[1], ctx));
    if (dim == 0)
      dim = tok.size() - 2;
    else if (tok.size() - 2 != dim)
      throw std::runtime_error(ctx + ": expected " + std::to_string(dim) + " values, got " +
                               std::to_string(tok.size() - 2));
    for (std::size_t j = 2; j < tok.size(); ++j) {
      const double v = parse_f64(tok[j], ctx);
      if (!std::isfinite(v)) throw std::runtime_error(ctx + ": non-finite value");
      values.push_back(static_cast<float>(v));
    }
  }
  store.features = Tensor<float>({store.sample_ids.size(), dim}, std::move(values));
  store.validate();
  return store;
}

}  // namespace

FeatureStore load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("feature file '" + path + "': cannot open");
  char head[8] = {0};
  in.read(head, 8);
  const bool binary = in.gcount() == 8 && std::string(head, 8) == kFeatureMagic;
  in.clear();
  in.seekg(0);
  if (binary) return load_features_binary(in, path);
  in.close();
  return load_features_text(path);
}

void save_features(const FeatureStore& store, const std::string& path, bool binary) {
  store.validate();
  if (binary) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("feature file '" + path + "': cannot write");
    out.write(kFeatureMagic, 8);
    bytes::put_u32(out, kFeatureVersion);
    bytes::put_u64(out, store.size());
    bytes::put_u64(out, store.dim());
    bytes::put_u8(out, 0);  // f32
    for (std::int64_t id : store.sample_ids) bytes::put_i64(out, id);
    for (std::int64_t l : store.labels) bytes::put_i64(out, l);
    for (std::size_t i = 0; i < store.features.size(); ++i)
      bytes::put_f32(out, store.features[i]);
    if (!out) throw std::runtime_error("feature file '" + path + "': write failed");
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("feature file '" + path + "': cannot write");
  out << "# id label values[" << store.dim() << "]\n";
  for (std::size_t i = 0; i < store.size(); ++i) {
    out << store.sample_ids[i] << ' ' << store.labels[i];
    for (std::size_t j = 0; j < store.dim(); ++j)
      out << ' ' << fmt_float(store.features(i, j));
    out << '\n';
  }
  if (!out) throw std::runtime_error("feature file '" + path + "': write failed");
}

// ---- task files ------------------------------------------------------------

namespace {

struct NamedRow {
  std::int64_t id;
  std::string name;
  std::vector<float> values;
};

TaskTable finalize_rows(TaskKind kind, std::vector<NamedRow> rows, std::size_t dim,
                        const std::string& path) {
  if (rows.empty()) throw std::runtime_error("task file '" + path + "': no classes");
  std::sort(rows.begin(), rows.end(),
            [](const NamedRow& a, const NamedRow& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].id == rows[i - 1].id)
      throw std::runtime_error("task file '" + path + "': duplicate class " +
                               std::to_string(rows[i].id));
  TaskTable t;
  t.kind = kind;
  t.descriptions = Tensor<float>({rows.size(), dim});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t.class_ids.push_back(rows[i].id);
    t.names.push_back(rows[i].name);
    for (std::size_t j = 0; j < dim; ++j) t.descriptions(i, j) = rows[i].values[j];
  }
  return t;
}

}  // namespace

TaskTable load_tasks(const std::string& path, TaskKind expected) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("task file '" + path + "': cannot open");
  std::vector<std::string> lines = content_lines(in);
  if (lines.empty() || lines[0] != kTasksHeader)
    throw std::runtime_error("task file '" + path + "': missing header '" +
                             std::string(kTasksHeader) + "'");
  if (lines.size() < 2 || tokens_of(lines[1]).size() != 2 || tokens_of(lines[1])[0] != "kind")
    throw std::runtime_error("task file '" + path + "': expected 'kind <name>' after header");
  const TaskKind kind = task_kind_from_name(tokens_of(lines[1])[1]);
  if (kind != expected)
    throw std::runtime_error("task file '" + path + "': kind '" + task_kind_name(kind) +
                             "' does not match requested '" + task_kind_name(expected) + "'");

  if (kind == TaskKind::one_hot) {
    std::vector<NamedRow> rows;
    std::size_t declared = 0;
    for (std::size_t ln = 2; ln < lines.size(); ++ln) {
      const std::string ctx = "task file '" + path + "' line " + std::to_string(ln + 1);
      std::vector<std::string> tok = tokens_of(lines[ln]);
      if (tok[0] == "classes" && tok.size() == 2) {
        declared = static_cast<std::size_t>(parse_i64(tok[1], ctx));
      } else if (tok[0] == "class" && tok.size() == 3) {
        rows.push_back({parse_i64(tok[1], ctx), tok[2], {}});
      } else {
        throw std::runtime_error(ctx + ": expected 'classes <n>' or 'class <id> <name>'");
      }
    }
    if (declared != rows.size())
      throw std::runtime_error("task file '" + path + "': declared " + std::to_string(declared) +
                               " classes but listed " + std::to_string(rows.size()));
    // One-hot descriptions are synthesized from the class ids.
    const std::size_t n = rows.size();
    for (std::size_t i = 0; i < n; ++i) rows[i].values.assign(n, 0.0f);
    TaskTable t = finalize_rows(kind, std::move(rows), n, path);
    for (std::size_t i = 0; i < t.size(); ++i) t.descriptions(i, i) = 1.0f;
    return t;
  }

  if (kind == TaskKind::word_concat) {
    std::size_t attr_dim = 0, obj_dim = 0;
    std::map<std::int64_t, std::vector<float>> attr_vecs, obj_vecs;
    struct PairDef { std::int64_t id, attr, obj; std::string name; };
    std::vector<PairDef> pairs;
    for (std::size_t ln = 2; ln < lines.size(); ++ln) {
      const std::string ctx = "task file '" + path + "' line " + std::to_string(ln + 1);
      std::vector<std::string> tok = tokens_of(lines[ln]);
      if (tok[0] == "attr_dim" && tok.size() == 2) {
        attr_dim = static_cast<std::size_t>(parse_i64(tok[1], ctx));
      } else if (tok[0] == "obj_dim" && tok.size() == 2) {
        obj_dim = static_cast<std::size_t>(parse_i64(tok[1], ctx));
      } else if ((tok[0] == "attr" || tok[0] == "obj") && tok.size() >= 3) {
        const std::size_t want = tok[0] == "attr" ? attr_dim : obj_dim;
        if (want == 0) throw std::runtime_error(ctx + ": dimension not declared yet");
        if (tok.size() != 3 + want)
          throw std::runtime_error(ctx + ": expected " + std::to_string(want) +
                                   " values, got " + std::to_string(tok.size() - 3));
        std::vector<float> v(want);
        for (std::size_t j = 0; j < want; ++j)
          v[j] = static_cast<float>(parse_f64(tok[3 + j], ctx));
        (tok[0] == "attr" ? attr_vecs : obj_vecs)[parse_i64(tok[1], ctx)] = std::move(v);
      } else if (tok[0] == "pair" && tok.size() == 5) {
        pairs.push_back({parse_i64(tok[1], ctx), parse_i64(tok[3], ctx),
                         parse_i64(tok[4], ctx), tok[2]});
      } else {
        throw std::runtime_error(ctx + ": unrecognized record '" + tok[0] + "'");
      }
    }
    if (pairs.empty()) throw std::runtime_error("task file '" + path + "': no pairs");
    std::vector<NamedRow> rows;
    for (const PairDef& p : pairs) {
      const auto a = attr_vecs.find(p.attr);
      if (a == attr_vecs.end())
        throw std::runtime_error("task file '" + path + "': pair " + std::to_string(p.id) +
                                 " references unknown attribute " + std::to_string(p.attr));
      const auto o = obj_vecs.find(p.obj);
      if (o == obj_vecs.end())
        throw std::runtime_error("task file '" + path + "': pair " + std::to_string(p.id) +
                                 " references unknown object " + std::to_string(p.obj));
      // A pair description is the attribute embedding followed by the
      // object embedding.
      std::vector<float> v = a->second;
      v.insert(v.end(), o->second.begin(), o->second.end());
      rows.push_back({p.id, p.name, std::move(v)});
    }
    return finalize_rows(kind, std::move(rows), attr_dim + obj_dim, path);
  }

  // attribute-vector / exemplar-feature: explicit per-class rows.
  std::size_t dim = 0;
  std::vector<NamedRow> rows;
  for (std::size_t ln = 2; ln < lines.size(); ++ln) {
    const std::string ctx = "task file '" + path + "' line " + std::to_string(ln + 1);
    std::vector<std::string> tok = tokens_of(lines[ln]);
    if (tok[0] == "dim" && tok.size() == 2) {
      dim = static_cast<std::size_t>(parse_i64(tok[1], ctx));
    } else if (tok[0] == "class" && tok.size() >= 3) {
      if (dim == 0) throw std::runtime_error(ctx + ": 'dim' not declared yet");
      if (tok.size() != 3 + dim)
        throw std::runtime_error(ctx + ": expected " + std::to_string(dim) + " values, got " +
                                 std::to_string(tok.size() - 3));
      NamedRow row{parse_i64(tok[1], ctx), tok[2], {}};
      for (std::size_t j = 0; j < dim; ++j)
        row.values.push_back(static_cast<float>(parse_f64(tok[3 + j], ctx)));
      rows.push_back(std::move(row));
    } else {
      throw std::runtime_error(ctx + ": expected 'dim <d>' or 'class <id> <name> <values>'");
    }
  }
  return finalize_rows(kind, std::move(rows), dim, path);
}

void save_tasks(const TaskTable& table, const std::string& path) {
  if (table.kind == TaskKind::word_concat)
    throw std::runtime_error("task table: saving word-concat tables is not supported");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("task file '" + path + "': cannot write");
  out << kTasksHeader << '\n';
  out << "kind " << task_kind_name(table.kind) << '\n';
  if (table.kind == TaskKind::one_hot) {
    out << "classes " << table.size() << '\n';
    for (std::size_t i = 0; i < table.size(); ++i)
      out << "class " << table.class_ids[i] << ' ' << table.names[i] << '\n';
  } else {
    out << "dim " << table.dim() << '\n';
    for (std::size_t i = 0; i < table.size(); ++i) {
      out << "class " << table.class_ids[i] << ' ' << table.names[i];
      for (std::size_t j = 0; j < table.dim(); ++j)
        out << ' ' << fmt_float(table.descriptions(i, j));
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("task file '" + path + "': write failed");
}

// ---- split files -----------------------------------------------------------

SplitSpec load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("split file '" + path + "': cannot open");
  std::vector<std::string> lines = content_lines(in);
  if (lines.empty() || lines[0] != kSplitHeader)
    throw std::runtime_error("split file '" + path + "': missing header '" +
                             std::string(kSplitHeader) + "'");
  SplitSpec s;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string ctx = "split file '" + path + "' line " + std::to_string(ln + 1);
    std::vector<std::string> tok = tokens_of(lines[ln]);
    auto append_ids = [&](std::vector<std::int64_t>& dst, std::size_t from) {
      for (std::size_t i = from; i < tok.size(); ++i) dst.push_back(parse_i64(tok[i], ctx));
    };
    if (tok[0] == "seen") append_ids(s.seen, 1);
    else if (tok[0] == "unseen") append_ids(s.unseen, 1);
    else if (tok[0] == "train") append_ids(s.train_samples, 1);
    else if (tok[0] == "test") append_ids(s.test_samples, 1);
    else if (tok[0] == "base") append_ids(s.base, 1);
    else if (tok[0] == "novel") append_ids(s.novel, 1);
    else if (tok[0] == "group") {
      if (tok.size() < 3) throw std::runtime_error(ctx + ": expected 'group <gid> <classes>'");
      const std::int64_t gid = parse_i64(tok[1], ctx);
      for (std::size_t i = 2; i < tok.size(); ++i)
        s.group_of[parse_i64(tok[i], ctx)] = gid;
    } else {
      throw std::runtime_error(ctx + ": unrecognized record '" + tok[0] + "'");
    }
  }
  std::sort(s.seen.begin(), s.seen.end());
  std::sort(s.unseen.begin(), s.unseen.end());
  check_sorted_unique(s.seen, "split file '" + path + "' seen");
  check_sorted_unique(s.unseen, "split file '" + path + "' unseen");
  s.validate();
  return s;
}

void save_split(const SplitSpec& split, const std::string& path) {
  split.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("split file '" + path + "': cannot write");
  out << kSplitHeader << '\n';
  auto write_ids = [&](const char* key, const std::vector<std::int64_t>& ids) {
    if (ids.empty()) return;
    out << key;
    for (std::int64_t id : ids) out << ' ' << id;
    out << '\n';
  };
  write_ids("seen", split.seen);
  write_ids("unseen", split.unseen);
  write_ids("train", split.train_samples);
  write_ids("test", split.test_samples);
  write_ids("base", split.base);
  write_ids("novel", split.novel);
  if (!split.group_of.empty()) {
    std::map<std::int64_t, std::vector<std::int64_t>> by_group;
    for (const auto& [cls, gid] : split.group_of) by_group[gid].push_back(cls);
    for (const auto& [gid, classes] : by_group) {
      out << "group " << gid;
      for (std::int64_t c : classes) out << ' ' << c;
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("split file '" + path + "': write failed");
}

// ---- cross-checks ----------------------------------------------------------

void validate_against(const TaskTable& table, const SplitSpec& split) {
  auto check = [&](const std::vector<std::int64_t>& ids, const char* what) {
    for (std::int64_t c : ids)
      if (!table.has(c))
        throw std::runtime_error(std::string("split ") + what + " class " + std::to_string(c) +
                                 " is missing from the task table");
  };
  check(split.seen, "seen");
  check(split.unseen, "unseen");
  check(split.base, "base");
  check(split.novel, "novel");
}

void validate_against(const FeatureStore& store, const SplitSpec& split) {
  std::map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < store.size(); ++i) index[store.sample_ids[i]] = i;
  auto find = [&](std::int64_t id, const char* what) {
    const auto it = index.find(id);
    if (it == index.end())
      throw std::runtime_error(std::string("split ") + what + " references unknown sample id " +
                               std::to_string(id));
    return it->second;
  };
  for (std::int64_t id : split.train_samples) find(id, "train");
  for (std::int64_t id : split.test_samples) {
    const std::size_t i = find(id, "test");
    const std::int64_t cls = store.labels[i];
    if (!split.is_seen(cls) && !split.is_unseen(cls))
      throw std::runtime_error("test sample " + std::to_string(id) + " has class " +
                               std::to_string(cls) + " outside seen/unseen");
  }
}

void l2_normalize_rows(Tensor<float>& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += double(m(i, j)) * double(m(i, j));
    const double norm = std::sqrt(s);
    if (norm > kCosineNormFloor)
      for (std::size_t j = 0; j < m.cols(); ++j)
        m(i, j) = static_cast<float>(m(i, j) / norm);
  }
}

}  // namespace tafe
