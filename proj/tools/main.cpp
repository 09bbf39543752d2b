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

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tafe/cli.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
  std::vector<std::string> protocols;
  bool deterministic = true;
  bool deterministic_set = false;
  int threads = 0;

  tafe::cli::Overrides overrides() const {
    tafe::cli::Overrides o;
    if (seed_set) o.seed = seed;
    if (!out_dir.empty()) o.out_dir = out_dir;
    if (!protocols.empty()) o.protocols = protocols;
    if (deterministic_set) o.deterministic = deterministic;
    if (threads > 0) o.threads = threads;
    return o;
  }
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "run configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "override the config seed")
      ->each([&f](const std::string&) { f.seed_set = true; });
  cmd->add_option("--out", f.out_dir, "override the output directory");
  cmd->add_option("--protocol", f.protocols, "evaluation protocol(s); repeatable")
      ->delimiter(',');
  cmd->add_flag("--deterministic,!--no-deterministic", f.deterministic,
                "single-threaded, bit-reproducible evaluation (default on)")
      ->each([&f](const std::string&) { f.deterministic_set = true; });
  cmd->add_option("--threads", f.threads,
                  "evaluation worker threads (honored with --no-deterministic)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"task-conditioned feature embedding engine"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, embed_f, gen_f;
  std::string eval_ckpt, embed_ckpt;

  CLI::App* train = app.add_subcommand("train", "train a model and evaluate it");
  add_common(train, train_f);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_f);
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);

  CLI::App* embed = app.add_subcommand("embed", "export TAFEs and task embeddings");
  add_common(embed, embed_f);
  embed->add_option("--checkpoint", embed_ckpt, "model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);

  CLI::App* gen = app.add_subcommand("gen-synth", "materialize a synthetic dataset");
  add_common(gen, gen_f);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const auto cfg = tafe::cli::load_run_config(train_f.config_path, train_f.overrides());
      return tafe::cli::cmd_train(cfg);
    }
    if (eval->parsed()) {
      const auto cfg = tafe::cli::load_run_config(eval_f.config_path, eval_f.overrides());
      return tafe::cli::cmd_eval(cfg, eval_ckpt);
    }
    if (embed->parsed()) {
      const auto cfg = tafe::cli::load_run_config(embed_f.config_path, embed_f.overrides());
      return tafe::cli::cmd_embed(cfg, embed_ckpt);
    }
    if (gen->parsed()) {
      const auto cfg = tafe::cli::load_run_config(gen_f.config_path, gen_f.overrides());
      return tafe::cli::cmd_gensynth(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
