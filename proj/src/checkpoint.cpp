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

#include "tafe/checkpoint.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "tafe/bytes.hpp"

namespace tafe {

namespace {

constexpr char kMagic[9] = "TAFECKPT";
constexpr std::uint32_t kVersion = 1;

nlohmann::ordered_json meta_to_json(const CheckpointMeta& meta) {
  nlohmann::ordered_json j;
  j["format"] = "tafe-checkpoint";
  j["version"] = kVersion;
  j["model"]["input_dim"] = meta.model.input_dim;
  j["model"]["task_dim"] = meta.model.task_dim;
  j["model"]["embed_dim"] = meta.model.embed_dim;
  j["model"]["widths"] = meta.model.widths;
  j["model"]["task_hidden"] = meta.model.task_hidden;
  j["model"]["task_depth"] = meta.model.task_depth;
  j["task_kind"] = meta.task_kind;
  j["seed"] = meta.seed;
  return j;
}

CheckpointMeta meta_from_json(const nlohmann::json& j) {
  CheckpointMeta meta;
  meta.model.input_dim = j.at("model").at("input_dim").get<std::size_t>();
  meta.model.task_dim = j.at("model").at("task_dim").get<std::size_t>();
  meta.model.embed_dim = j.at("model").at("embed_dim").get<std::size_t>();
  meta.model.widths = j.at("model").at("widths").get<std::vector<std::size_t>>();
  meta.model.task_hidden = j.at("model").at("task_hidden").get<std::size_t>();
  meta.model.task_depth = j.at("model").at("task_depth").get<std::size_t>();
  meta.task_kind = j.at("task_kind").get<std::string>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  return meta;
}

void put_block(std::ostream& os, const std::string& name, const Tensor<float>& t) {
  bytes::put_str(os, name);
  bytes::put_u64(os, t.rank());
  for (std::size_t e : t.shape()) bytes::put_u64(os, e);
  bytes::put_u8(os, 0);  // f32
  for (std::size_t i = 0; i < t.size(); ++i) bytes::put_f32(os, t[i]);
}

}  // namespace

std::string manifest_json(const CheckpointMeta& meta) { return meta_to_json(meta).dump(); }

void save_checkpoint(const std::string& path, TafeNet<float>& model, const CheckpointMeta& meta,
                     const Optimizer<float>* opt) {
  if (meta.model != model.config())
    throw std::invalid_argument("checkpoint: manifest does not describe this model");

  nlohmann::ordered_json j = meta_to_json(meta);
  std::vector<ParamRef<float>> params = model.parameters();
  if (opt != nullptr) {
    j["optimizer"]["kind"] = opt_kind_name(opt->kind());
    j["optimizer"]["step"] = opt->step_count();
    j["optimizer"]["group_lrs"] = opt->group_lrs();
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint '" + path + "': cannot write");
  out.write(kMagic, 8);
  bytes::put_u32(out, kVersion);
  bytes::put_str(out, j.dump());

  std::uint64_t n_blocks = params.size();
  const bool with_state = opt != nullptr && !opt->moment1().empty();
  if (with_state) {
    n_blocks += opt->moment1().size() + opt->moment2().size();
  }
  bytes::put_u64(out, n_blocks);
  for (const ParamRef<float>& p : params) put_block(out, p.name, *p.value);
  if (with_state) {
    for (std::size_t i = 0; i < opt->moment1().size(); ++i)
      put_block(out, "opt.m." + params[i].name, opt->moment1()[i]);
    for (std::size_t i = 0; i < opt->moment2().size(); ++i)
      put_block(out, "opt.v." + params[i].name, opt->moment2()[i]);
  }
  if (!out) throw std::runtime_error("checkpoint '" + path + "': write failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint '" + path + "': cannot open");
  bytes::Reader r(in, "checkpoint '" + path + "'");
  char magic[8];
  r.read_raw(magic, 8);
  if (std::string(magic, 8) != kMagic)
    throw std::runtime_error("checkpoint '" + path + "': bad magic at byte 0");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("checkpoint '" + path + "': unsupported version " +
                             std::to_string(version));
  nlohmann::json j = nlohmann::json::parse(r.str());
  CheckpointMeta meta = meta_from_json(j);
  meta.model.validate();

  std::map<std::string, Tensor<float>> blocks;
  const std::uint64_t n_blocks = r.u64();
  for (std::uint64_t b = 0; b < n_blocks; ++b) {
    const std::string name = r.str();
    const std::uint64_t rank = r.u64();
    Shape shape(rank);
    for (std::uint64_t d = 0; d < rank; ++d) shape[d] = r.u64();
    const std::uint8_t dtype = r.u8();
    if (dtype != 0)
      throw std::runtime_error("checkpoint '" + path + "': block '" + name +
                               "' has unsupported dtype " + std::to_string(dtype));
    Tensor<float> t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f32();
    if (!blocks.emplace(name, std::move(t)).second)
      throw std::runtime_error("checkpoint '" + path + "': duplicate block '" + name + "'");
  }
  r.expect_eof();

  LoadedCheckpoint loaded{.meta = meta, .model = TafeNet<float>(meta.model, 0)};
  std::vector<ParamRef<float>> params = loaded.model.parameters();
  for (const ParamRef<float>& p : params) {
    const auto it = blocks.find(p.name);
    if (it == blocks.end())
      throw std::runtime_error("checkpoint '" + path + "': missing parameter block '" + p.name +
                               "'");
    if (it->second.shape() != p.value->shape())
      throw std::runtime_error("checkpoint '" + path + "': block '" + p.name + "' has shape " +
                               shape_str(it->second.shape()) + ", expected " +
                               shape_str(p.value->shape()));
    *p.value = std::move(it->second);
    blocks.erase(it);
  }

  if (j.contains("optimizer")) {
    loaded.has_optimizer = true;
    loaded.opt_kind = j["optimizer"].at("kind").get<std::string>();
    loaded.opt_step = j["optimizer"].at("step").get<long>();
    loaded.opt_group_lrs = j["optimizer"].at("group_lrs").get<std::vector<double>>();
    for (const ParamRef<float>& p : params) {
      const auto m = blocks.find("opt.m." + p.name);
      if (m != blocks.end()) {
        loaded.opt_m1.push_back(std::move(m->second));
        blocks.erase(m);
      }
      const auto v = blocks.find("opt.v." + p.name);
      if (v != blocks.end()) {
        loaded.opt_m2.push_back(std::move(v->second));
        blocks.erase(v);
      }
    }
  }
  if (!blocks.empty())
    throw std::runtime_error("checkpoint '" + path + "': unexpected block '" +
                             blocks.begin()->first + "'");
  return loaded;
}

}  // namespace tafe
