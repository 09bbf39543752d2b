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

#include "tafe/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "tafe/checkpoint.hpp"
#include "tafe/graph.hpp"
#include "tafe/rng.hpp"

namespace tafe {

namespace {

struct BatchLoss {
  double cls = 0.0;
  double emb = 0.0;
  double total = 0.0;
};

/// One-hot labels for a batch against an ordered task list.
Tensor<float> batch_labels(const std::vector<std::int64_t>& labels,
                           const std::vector<std::int64_t>& task_ids) {
  Tensor<float> y({labels.size(), task_ids.size()});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = std::lower_bound(task_ids.begin(), task_ids.end(), labels[i]);
    if (it == task_ids.end() || *it != labels[i])
      throw std::runtime_error("training: sample class " + std::to_string(labels[i]) +
                               " missing from the task scope");
    y(i, static_cast<std::size_t>(it - task_ids.begin())) = 1.0f;
  }
  return y;
}

/// Builds the joint objective for one batch. When `grads` is non-null the
/// backward pass runs and per-parameter gradients are copied out.
BatchLoss batch_loss(TafeNet<float>& model, const Tensor<float>& features,
                     const std::vector<std::int64_t>& labels,
                     const std::vector<std::int64_t>& task_ids, const Tensor<float>& task_rows,
                     const LossConfig& loss_cfg, std::vector<Tensor<float>>* grads) {
  Graph<float> g;
  auto bound = model.bind(g);
  auto fwd = model.forward_graph(g, bound, features, task_rows);
  const Tensor<float> y = batch_labels(labels, task_ids);
  auto cls = classification_loss(g, fwd.logits, y);
  auto emb = embedding_loss(g, fwd.tafes, fwd.task_embeddings, y);
  BatchLoss out;
  out.cls = g.value(cls)[0];
  out.emb = g.value(emb)[0];
  if (!std::isfinite(out.cls) || !std::isfinite(out.emb)) {
    out.total = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  auto total = total_loss(g, cls, emb, loss_cfg);
  out.total = g.value(total)[0];
  if (grads != nullptr && std::isfinite(out.total)) {
    g.backward(total);
    grads->clear();
    for (auto v : bound.vars) grads->push_back(g.grad(v));
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  loss.validate();
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (group_lrs.size() != kGroupCount)
    throw std::invalid_argument("train config: expected " + std::to_string(kGroupCount) +
                                " learning-rate groups");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("train config: val_fraction must be in [0, 1)");
  if (out_dir.empty()) throw std::invalid_argument("train config: out_dir is required");
}

TrainResult train_model(TafeNet<float>& model, const FeatureStore& store,
                        const TaskTable& table, const SplitSpec& split,
                        const TrainConfig& cfg) {
  cfg.validate();
  validate_against(table, split);
  validate_against(store, split);

  std::filesystem::create_directories(cfg.out_dir);
  TrainResult result;
  result.final_path = (std::filesystem::path(cfg.out_dir) / "final.ckpt").string();
  result.best_path = (std::filesystem::path(cfg.out_dir) / "best.ckpt").string();
  result.log_path = (std::filesystem::path(cfg.out_dir) / "train_log.jsonl").string();

  // Train rows come from the split; a seeded slice is held out to pick the
  // best checkpoint.
  std::map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < store.size(); ++i) index[store.sample_ids[i]] = i;
  std::vector<std::size_t> all_rows;
  for (std::int64_t id : split.train_samples) all_rows.push_back(index.at(id));
  if (all_rows.empty()) throw std::runtime_error("training: split has no train samples");

  Rng rng(cfg.seed);
  rng.shuffle(all_rows);
  const std::size_t n_val =
      static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(all_rows.size()));
  std::vector<std::size_t> val_rows(all_rows.begin(), all_rows.begin() + n_val);
  std::vector<std::size_t> train_rows(all_rows.begin() + n_val, all_rows.end());
  if (train_rows.empty()) throw std::runtime_error("training: no samples left after the split");
  std::sort(val_rows.begin(), val_rows.end());
  std::sort(train_rows.begin(), train_rows.end());

  const std::vector<std::int64_t> all_tasks = split.seen;  // sorted
  const Tensor<float> all_task_rows = table.rows_for(all_tasks);

  auto gather = [&](const std::vector<std::size_t>& rows, std::size_t lo, std::size_t hi,
                    Tensor<float>& feats, std::vector<std::int64_t>& labels) {
    feats = Tensor<float>({hi - lo, store.dim()});
    labels.clear();
    for (std::size_t i = lo; i < hi; ++i) {
      for (std::size_t j = 0; j < store.dim(); ++j)
        feats(i - lo, j) = store.features(rows[i], j);
      labels.push_back(store.labels[rows[i]]);
    }
  };

  // Task scope for one batch: the tasks present in it, or every seen class.
  auto scope_tasks = [&](const std::vector<std::int64_t>& labels) {
    if (cfg.loss.scope == TaskScope::whole_dataset) return all_tasks;
    std::set<std::int64_t> present(labels.begin(), labels.end());
    return std::vector<std::int64_t>(present.begin(), present.end());
  };

  Optimizer<float> opt(cfg.optimizer, cfg.group_lrs);
  LrSchedule schedule(cfg.milestones, cfg.decay);
  std::vector<ParamRef<float>> params = model.parameters();
  CheckpointMeta meta{model.config(), cfg.task_kind, cfg.seed};

  std::ofstream log(result.log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("training: cannot write log '" + result.log_path + "'");

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Tensor<float>> grads;

  for (long epoch = 0; epoch < cfg.epochs && !result.aborted_non_finite; ++epoch) {
    schedule.apply(opt, epoch);

    std::vector<std::size_t> order = train_rows;
    rng.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    stats.lrs = opt.group_lrs();
    double weight = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      Tensor<float> feats;
      std::vector<std::int64_t> labels;
      gather(order, lo, hi, feats, labels);
      const std::vector<std::int64_t> tasks = scope_tasks(labels);
      const Tensor<float> task_rows =
          cfg.loss.scope == TaskScope::whole_dataset ? all_task_rows : table.rows_for(tasks);

      const BatchLoss bl =
          batch_loss(model, feats, labels, tasks, task_rows, cfg.loss, &grads);
      if (!std::isfinite(bl.total)) {
        result.aborted_non_finite = true;
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
        break;
      }
      try {
        opt.step(params, grads);
      } catch (const std::exception& e) {
        result.aborted_non_finite = true;
        result.abort_reason = e.what();
        break;
      }
      const double w = static_cast<double>(hi - lo);
      stats.loss_cls += w * bl.cls;
      stats.loss_emb += w * bl.emb;
      stats.loss_total += w * bl.total;
      weight += w;
    }
    if (result.aborted_non_finite) break;
    stats.loss_cls /= weight;
    stats.loss_emb /= weight;
    stats.loss_total /= weight;

    if (!val_rows.empty()) {
      stats.has_val = true;
      double vweight = 0.0;
      for (std::size_t lo = 0; lo < val_rows.size(); lo += cfg.batch_size) {
        const std::size_t hi = std::min(val_rows.size(), lo + cfg.batch_size);
        Tensor<float> feats;
        std::vector<std::int64_t> labels;
        gather(val_rows, lo, hi, feats, labels);
        const std::vector<std::int64_t> tasks = scope_tasks(labels);
        const Tensor<float> task_rows =
            cfg.loss.scope == TaskScope::whole_dataset ? all_task_rows : table.rows_for(tasks);
        const BatchLoss bl =
            batch_loss(model, feats, labels, tasks, task_rows, cfg.loss, nullptr);
        stats.val_loss += static_cast<double>(hi - lo) * bl.total;
        vweight += static_cast<double>(hi - lo);
      }
      stats.val_loss /= vweight;
    } else {
      stats.val_loss = stats.loss_total;  // degenerate split: select on train loss
    }

    if (stats.val_loss < best_val) {
      best_val = stats.val_loss;
      result.best_epoch = epoch;
      save_checkpoint(result.best_path, model, meta);
    }

    nlohmann::ordered_json row;
    row["epoch"] = stats.epoch;
    row["loss_cls"] = stats.loss_cls;
    row["loss_emb"] = stats.loss_emb;
    row["loss_total"] = stats.loss_total;
    if (stats.has_val)
      row["val_loss"] = stats.val_loss;
    else
      row["val_loss"] = nullptr;
    row["lr"] = stats.lrs;
    log << row.dump() << '\n';
    log.flush();
    result.history.push_back(std::move(stats));
  }

  // Final parameters plus optimizer state, for resuming. On an abort these
  // are the last finite parameters (the offending step was never applied).
  save_checkpoint(result.final_path, model, meta, &opt);
  if (result.best_epoch < 0) {
    // No completed epoch: fall back to the initial/final state as "best".
    save_checkpoint(result.best_path, model, meta);
  }
  return result;
}

}  // namespace tafe
