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

#include "tafe/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "tafe/checkpoint.hpp"
#include "tafe/eval.hpp"
#include "tafe/train.hpp"

namespace tafe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kKnownProtocols = {"zsl", "gzsl", "composition", "fewshot",
                                               "shuffle"};

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw std::runtime_error("config: unknown field '" +
                               (where.empty() ? key : where + "." + key) + "'");
  }
}

SyntheticConfig parse_synthetic(const json& j) {
  check_keys(j, "data.synthetic",
             {"n_attributes", "n_seen", "n_unseen", "samples_per_class", "feature_dim", "noise",
              "seed", "n_groups", "prefix_len", "train_fraction"});
  SyntheticConfig s;
  if (j.contains("n_attributes")) s.n_attributes = j["n_attributes"].get<std::size_t>();
  if (j.contains("n_seen")) s.n_seen = j["n_seen"].get<std::size_t>();
  if (j.contains("n_unseen")) s.n_unseen = j["n_unseen"].get<std::size_t>();
  if (j.contains("samples_per_class"))
    s.samples_per_class = j["samples_per_class"].get<std::size_t>();
  if (j.contains("feature_dim")) s.feature_dim = j["feature_dim"].get<std::size_t>();
  if (j.contains("noise")) s.noise = j["noise"].get<double>();
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("n_groups")) s.n_groups = j["n_groups"].get<std::size_t>();
  if (j.contains("prefix_len")) s.prefix_len = j["prefix_len"].get<std::size_t>();
  if (j.contains("train_fraction")) s.train_fraction = j["train_fraction"].get<double>();
  return s;
}

}  // namespace

void RunConfig::validate() const {
  if (!has_seed)
    throw std::runtime_error("config: field 'seed' is required (no wall-clock seeding)");
  const bool has_files = !features_path.empty() || !tasks_path.empty() || !split_path.empty();
  if (synthetic.has_value() && has_files)
    throw std::runtime_error("config: 'data.synthetic' and dataset files are mutually exclusive");
  if (!synthetic.has_value()) {
    if (features_path.empty() || tasks_path.empty() || split_path.empty())
      throw std::runtime_error(
          "config: need either 'data.synthetic' or all of 'data.features', 'data.tasks', "
          "'data.split'");
    for (const std::string* p : {&features_path, &tasks_path, &split_path})
      if (!fs::exists(*p))
        throw std::runtime_error("config: referenced path does not exist: '" + *p + "'");
  } else {
    synthetic->validate();
  }
  if (widths.empty()) throw std::runtime_error("config: 'model.widths' must not be empty");
  if (widths.back() != embed_dim)
    throw std::runtime_error("config: last entry of 'model.widths' must equal 'model.embed_dim'");
  loss.validate();
  if (epochs < 1) throw std::runtime_error("config: 'optimizer.epochs' must be >= 1");
  if (batch_size == 0) throw std::runtime_error("config: 'optimizer.batch_size' must be >= 1");
  if (!(lr_main > 0.0) || !(lr_task_embed > 0.0))
    throw std::runtime_error("config: learning rates must be positive");
  if (threads < 1) throw std::runtime_error("config: 'threads' must be >= 1");
  for (const std::string& p : protocols)
    if (!kKnownProtocols.count(p))
      throw std::runtime_error("config: unknown protocol '" + p + "'");
  if (out_dir.empty()) throw std::runtime_error("config: 'out' must not be empty");
  if (fewshot_shots.empty()) throw std::runtime_error("config: 'fewshot.shots' must not be empty");
  if (fewshot_trials == 0) throw std::runtime_error("config: 'fewshot.trials' must be >= 1");
  if (shuffle_repeats == 0) throw std::runtime_error("config: 'shuffle.repeats' must be >= 1");
}

RunConfig load_run_config(const std::string& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config '" + path + "': " + e.what());
  }
  check_keys(j, "",
             {"seed", "out", "deterministic", "threads", "protocols", "data", "model", "loss",
              "optimizer", "embed", "fewshot", "shuffle"});

  RunConfig cfg;
  if (j.contains("seed")) {
    cfg.seed = j["seed"].get<std::uint64_t>();
    cfg.has_seed = true;
  }
  if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
  if (j.contains("deterministic")) cfg.deterministic = j["deterministic"].get<bool>();
  if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
  if (j.contains("protocols")) cfg.protocols = j["protocols"].get<std::vector<std::string>>();

  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, "data",
               {"synthetic", "features", "tasks", "split", "task_kind", "normalize_features"});
    if (d.contains("synthetic")) cfg.synthetic = parse_synthetic(d["synthetic"]);
    if (d.contains("features")) cfg.features_path = d["features"].get<std::string>();
    if (d.contains("tasks")) cfg.tasks_path = d["tasks"].get<std::string>();
    if (d.contains("split")) cfg.split_path = d["split"].get<std::string>();
    if (d.contains("task_kind"))
      cfg.task_kind = task_kind_from_name(d["task_kind"].get<std::string>());
    if (d.contains("normalize_features"))
      cfg.normalize_features = d["normalize_features"].get<bool>();
  }

  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, "model", {"embed_dim", "widths", "task_hidden", "task_depth"});
    if (m.contains("embed_dim")) cfg.embed_dim = m["embed_dim"].get<std::size_t>();
    if (m.contains("widths")) cfg.widths = m["widths"].get<std::vector<std::size_t>>();
    if (m.contains("task_hidden")) cfg.task_hidden = m["task_hidden"].get<std::size_t>();
    if (m.contains("task_depth")) cfg.task_depth = m["task_depth"].get<std::size_t>();
  }

  if (j.contains("loss")) {
    const json& l = j["loss"];
    check_keys(l, "loss", {"beta", "task_scope"});
    if (l.contains("beta")) cfg.loss.beta = l["beta"].get<double>();
    if (l.contains("task_scope")) {
      const std::string s = l["task_scope"].get<std::string>();
      if (s == "minibatch")
        cfg.loss.scope = TaskScope::minibatch;
      else if (s == "whole-dataset")
        cfg.loss.scope = TaskScope::whole_dataset;
      else
        throw std::runtime_error("config: loss.task_scope must be 'minibatch' or 'whole-dataset'");
    }
  }

  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    check_keys(o, "optimizer",
               {"kind", "lr_main", "lr_task_embed", "milestones", "decay", "batch_size",
                "epochs", "momentum", "beta1", "beta2", "eps"});
    if (o.contains("kind")) {
      const std::string k = o["kind"].get<std::string>();
      if (k == "adam")
        cfg.opt_kind = OptKind::adam;
      else if (k == "sgd-momentum")
        cfg.opt_kind = OptKind::sgd_momentum;
      else
        throw std::runtime_error("config: optimizer.kind must be 'adam' or 'sgd-momentum'");
    }
    if (o.contains("lr_main")) cfg.lr_main = o["lr_main"].get<double>();
    if (o.contains("lr_task_embed")) cfg.lr_task_embed = o["lr_task_embed"].get<double>();
    if (o.contains("milestones")) cfg.milestones = o["milestones"].get<std::vector<long>>();
    if (o.contains("decay")) cfg.decay = o["decay"].get<double>();
    if (o.contains("batch_size")) cfg.batch_size = o["batch_size"].get<std::size_t>();
    if (o.contains("epochs")) cfg.epochs = o["epochs"].get<long>();
    if (o.contains("momentum")) cfg.momentum = o["momentum"].get<double>();
    if (o.contains("beta1")) cfg.adam_beta1 = o["beta1"].get<double>();
    if (o.contains("beta2")) cfg.adam_beta2 = o["beta2"].get<double>();
    if (o.contains("eps")) cfg.adam_eps = o["eps"].get<double>();
  }

  if (j.contains("embed")) {
    const json& e = j["embed"];
    check_keys(e, "embed", {"samples", "tasks"});
    if (e.contains("samples"))
      cfg.embed_samples = e["samples"].get<std::vector<std::int64_t>>();
    if (e.contains("tasks")) cfg.embed_tasks = e["tasks"].get<std::vector<std::int64_t>>();
  }

  if (j.contains("fewshot")) {
    const json& f = j["fewshot"];
    check_keys(f, "fewshot", {"shots", "trials"});
    if (f.contains("shots")) cfg.fewshot_shots = f["shots"].get<std::vector<std::size_t>>();
    if (f.contains("trials")) cfg.fewshot_trials = f["trials"].get<std::size_t>();
  }

  if (j.contains("shuffle")) {
    const json& s = j["shuffle"];
    check_keys(s, "shuffle", {"repeats"});
    if (s.contains("repeats")) cfg.shuffle_repeats = s["repeats"].get<std::size_t>();
  }

  // Flags win over config fields.
  if (overrides.seed) {
    cfg.seed = *overrides.seed;
    cfg.has_seed = true;
  }
  if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
  if (overrides.protocols) cfg.protocols = *overrides.protocols;
  if (overrides.deterministic) cfg.deterministic = *overrides.deterministic;
  if (overrides.threads) cfg.threads = *overrides.threads;

  cfg.validate();
  return cfg;
}

Dataset load_dataset(const RunConfig& cfg) {
  Dataset data;
  if (cfg.synthetic.has_value()) {
    SyntheticData s = generate_synthetic(*cfg.synthetic);
    data.store = std::move(s.store);
    data.tasks = std::move(s.tasks);
    data.split = std::move(s.split);
  } else {
    data.store = load_features(cfg.features_path);
    data.tasks = load_tasks(cfg.tasks_path, cfg.task_kind);
    data.split = load_split(cfg.split_path);
  }
  if (cfg.normalize_features) l2_normalize_rows(data.store.features);
  validate_against(data.tasks, data.split);
  validate_against(data.store, data.split);
  return data;
}

ModelConfig derive_model_config(const RunConfig& cfg, const Dataset& data) {
  ModelConfig m;
  m.input_dim = data.store.dim();
  m.task_dim = data.tasks.dim();
  m.embed_dim = cfg.embed_dim;
  m.widths = cfg.widths;
  m.task_hidden = cfg.task_hidden;
  // Shallower task embedding stack when few training tasks are available.
  m.task_depth = cfg.task_depth != 0 ? cfg.task_depth : (data.split.seen.size() < 32 ? 2 : 3);
  m.validate();
  return m;
}

namespace {

std::string current_task_kind(const RunConfig& cfg) {
  return cfg.synthetic.has_value() ? task_kind_name(TaskKind::attribute_vector)
                                   : task_kind_name(cfg.task_kind);
}

/// Runs the configured protocols and writes report_<protocol>.json files.
void run_protocols(const RunConfig& cfg, TafeNet<float>& model, const Dataset& data) {
  const int threads = cfg.eval_threads();
  for (const std::string& protocol : cfg.protocols) {
    nlohmann::ordered_json report;
    if (protocol == "zsl") {
      report = zsl_report(model, data.store, data.tasks, data.split, threads);
    } else if (protocol == "gzsl") {
      report = gzsl_report(model, data.store, data.tasks, data.split, threads);
    } else if (protocol == "composition") {
      report = composition_report(model, data.store, data.tasks, data.split, threads);
    } else if (protocol == "fewshot") {
      report = fewshot_report(model, data.store, data.split, cfg.fewshot_shots,
                              cfg.fewshot_trials, cfg.seed, threads);
    } else if (protocol == "shuffle") {
      report = shuffle_report(model, data.store, data.tasks, data.split, cfg.shuffle_repeats,
                              cfg.seed, threads);
    }
    const fs::path path = fs::path(cfg.out_dir) / ("report_" + protocol + ".json");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write report '" + path.string() + "'");
    out << report.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing report '" + path.string() + "'");
    std::cout << "[" << protocol << "] -> " << path.string() << "\n";
    print_report(report, std::cout);
  }
}

TrainConfig make_train_config(const RunConfig& cfg) {
  TrainConfig tc;
  tc.loss = cfg.loss;
  tc.optimizer.kind = cfg.opt_kind;
  tc.optimizer.beta1 = cfg.adam_beta1;
  tc.optimizer.beta2 = cfg.adam_beta2;
  tc.optimizer.eps = cfg.adam_eps;
  tc.optimizer.momentum = cfg.momentum;
  tc.group_lrs = {cfg.lr_main, cfg.lr_task_embed};
  tc.milestones = cfg.milestones;
  tc.decay = cfg.decay;
  tc.batch_size = cfg.batch_size;
  tc.epochs = cfg.epochs;
  tc.seed = cfg.seed;
  tc.out_dir = cfg.out_dir;
  tc.task_kind = current_task_kind(cfg);
  return tc;
}

/// Architecture gate for eval/embed: the checkpoint must describe exactly
/// the model the config would build.
void check_manifest(const RunConfig& cfg, const Dataset& data, const LoadedCheckpoint& ckpt) {
  CheckpointMeta expected{derive_model_config(cfg, data), current_task_kind(cfg), ckpt.meta.seed};
  if (expected.model != ckpt.meta.model || expected.task_kind != ckpt.meta.task_kind)
    throw std::runtime_error("checkpoint architecture does not match the config.\n  config:     " +
                             manifest_json(expected) + "\n  checkpoint: " +
                             manifest_json(ckpt.meta));
}

}  // namespace

int cmd_train(const RunConfig& cfg) {
  Dataset data = load_dataset(cfg);
  fs::create_directories(cfg.out_dir);
  const ModelConfig mcfg = derive_model_config(cfg, data);
  TafeNet<float> model(mcfg, cfg.seed);

  const TrainResult result = train_model(model, data.store, data.tasks, data.split,
                                         make_train_config(cfg));
  if (result.aborted_non_finite) {
    std::cerr << "training aborted: " << result.abort_reason
              << " (last good checkpoints retained at " << result.best_path << ", "
              << result.final_path << ")\n";
    return 1;
  }
  std::cout << "trained " << result.history.size() << " epochs; best epoch "
            << result.best_epoch << "\n  final: " << result.final_path
            << "\n  best:  " << result.best_path << "\n  log:   " << result.log_path << "\n";

  if (!cfg.protocols.empty()) {
    LoadedCheckpoint best = load_checkpoint(result.best_path);
    run_protocols(cfg, best.model, data);
  }
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path) {
  Dataset data = load_dataset(cfg);
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
  check_manifest(cfg, data, ckpt);
  fs::create_directories(cfg.out_dir);
  run_protocols(cfg, ckpt.model, data);
  return 0;
}

int cmd_embed(const RunConfig& cfg, const std::string& checkpoint_path) {
  Dataset data = load_dataset(cfg);
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
  check_manifest(cfg, data, ckpt);
  fs::create_directories(cfg.out_dir);

  std::vector<std::int64_t> samples = cfg.embed_samples;
  if (samples.empty()) samples = data.split.test_samples;
  std::vector<std::int64_t> tasks = cfg.embed_tasks;
  if (tasks.empty()) tasks = data.tasks.class_ids;

  const fs::path path = fs::path(cfg.out_dir) / "embeddings.txt";
  dump_embeddings(ckpt.model, data.store, data.tasks, samples, tasks, path.string());
  std::cout << "wrote " << samples.size() * tasks.size() << " TAFE rows and " << tasks.size()
            << " task embeddings to " << path.string() << "\n";
  return 0;
}

int cmd_gensynth(const RunConfig& cfg) {
  if (!cfg.synthetic.has_value())
    throw std::runtime_error("gen-synth: config must provide 'data.synthetic'");
  SyntheticData data = generate_synthetic(*cfg.synthetic);
  fs::create_directories(cfg.out_dir);
  const fs::path dir(cfg.out_dir);
  save_features(data.store, (dir / "features.bin").string());
  save_tasks(data.tasks, (dir / "tasks.txt").string());
  save_split(data.split, (dir / "split.txt").string());
  std::cout << "wrote " << (dir / "features.bin").string() << ", " << (dir / "tasks.txt").string()
            << ", " << (dir / "split.txt").string() << "\n";
  return 0;
}

}  // namespace tafe::cli
