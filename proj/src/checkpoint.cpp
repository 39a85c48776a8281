/*
   Copyright 2026 calcap authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>

#include "calcap/errors.hpp"
#include "calcap/serialize.hpp"
#include "calcap/trainer.hpp"

namespace calcap {

namespace {

using nlohmann::json;

std::string to_hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016" PRIx64, v);
  return buf;
}

std::uint64_t from_hex(const json& j, const char* what) {
  if (!j.is_string()) throw CheckpointError(std::string(what) + ": not a string");
  try {
    return std::stoull(j.get<std::string>(), nullptr, 16);
  } catch (const std::exception&) {
    throw CheckpointError(std::string(what) + ": bad hex value");
  }
}

struct Field {
  const char* name;
  std::function<json(const TrainerConfig&)> get;
  std::function<void(TrainerConfig&, const json&)> set;
};

#define CALCAP_FIELD(member, type)                                      \
  Field{#member, [](const TrainerConfig& c) { return json(c.member); }, \
        [](TrainerConfig& c, const json& v) { c.member = v.get<type>(); }}

const std::vector<Field>& config_fields() {
  static const std::vector<Field> fields = {
      CALCAP_FIELD(adversarial_epochs, std::size_t),
      CALCAP_FIELD(baseline_decay, double),
      CALCAP_FIELD(baseline_on, bool),
      CALCAP_FIELD(batch_size, std::size_t),
      CALCAP_FIELD(beam_width, std::size_t),
      CALCAP_FIELD(binary_regularization, bool),
      CALCAP_FIELD(checkpoint_interval, std::size_t),
      CALCAP_FIELD(comparative, bool),
      CALCAP_FIELD(d_e, std::size_t),
      CALCAP_FIELD(d_emb, std::size_t),
      CALCAP_FIELD(d_h, std::size_t),
      CALCAP_FIELD(d_pretrain_epochs, std::size_t),
      CALCAP_FIELD(d_steps_per_g, std::size_t),
      CALCAP_FIELD(d_z, std::size_t),
      CALCAP_FIELD(decode_beam, bool),
      CALCAP_FIELD(g_pretrain_epochs, std::size_t),
      CALCAP_FIELD(gamma, double),
      CALCAP_FIELD(k_rollouts, std::size_t),
      CALCAP_FIELD(learning_rate, double),
      CALCAP_FIELD(n_best, std::size_t),
      CALCAP_FIELD(noise_on, bool),
      CALCAP_FIELD(optimizer, std::string),
      CALCAP_FIELD(pg_use_log, bool),
      CALCAP_FIELD(seed, std::uint64_t),
      CALCAP_FIELD(t_max, std::size_t),
  };
  return fields;
}

#undef CALCAP_FIELD

json store_to_json(const ParameterStore& store) {
  json out = json::object();
  for (const auto& e : store.entries()) {
    for (double v : e.value.data)
      if (!std::isfinite(v))
        throw NumericError("refusing to serialize non-finite parameter " +
                           e.name);
    out[e.name] = e.value.data;
  }
  return out;
}

void store_from_json(const json& j, ParameterStore& store) {
  if (!j.is_object()) throw CheckpointError("params: not an object");
  if (j.size() != store.entries().size())
    throw CheckpointError("params: expected " +
                          std::to_string(store.entries().size()) +
                          " entries, got " + std::to_string(j.size()));
  for (auto& e : store.entries()) {
    auto it = j.find(e.name);
    if (it == j.end())
      throw CheckpointError("params: missing entry " + e.name);
    auto values = it->get<std::vector<double>>();
    if (values.size() != e.value.numel())
      throw CheckpointError("params: entry " + e.name + " has " +
                            std::to_string(values.size()) + " values, want " +
                            std::to_string(e.value.numel()));
    for (double v : values)
      if (!std::isfinite(v))
        throw CheckpointError("params: non-finite value in " + e.name);
    e.value.data = std::move(values);
  }
}

}  // namespace

json config_to_json(const TrainerConfig& config) {
  json out = json::object();
  for (const Field& f : config_fields()) out[f.name] = f.get(config);
  return out;
}

TrainerConfig config_from_json(const json& j) {
  if (!j.is_object()) throw DataError("config: not a JSON object");
  TrainerConfig config;
  for (const Field& f : config_fields()) {
    auto it = j.find(f.name);
    if (it == j.end()) continue;  // absent keys keep their defaults
    try {
      f.set(config, *it);
    } catch (const json::exception& e) {
      throw DataError(std::string("config key ") + f.name + ": " + e.what());
    }
  }
  for (const auto& item : j.items()) {
    bool known = false;
    for (const Field& f : config_fields())
      if (item.key() == f.name) known = true;
    if (!known) throw DataError("unknown config key: " + item.key());
  }
  return config;
}

void apply_config_override(TrainerConfig& config, const std::string& key,
                           const std::string& value) {
  for (const Field& f : config_fields()) {
    if (key != f.name) continue;
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;  // unquoted strings, e.g. optimizer=sgd
    }
    try {
      f.set(config, parsed);
    } catch (const json::exception&) {
      throw UsageError("bad value for config key " + key + ": " + value);
    }
    return;
  }
  throw UsageError("unknown config key: " + key);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : config_fields()) out.push_back(f.name);
  return out;
}

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  json j;
  j["kind"] = "calcap-checkpoint";
  j["version"] = cp.version;
  j["config"] = config_to_json(cp.config);
  j["rng"] = {{"algorithm", cp.rng_algorithm},
              {"state", json::array({to_hex(cp.rng_state[0]),
                                     to_hex(cp.rng_state[1]),
                                     to_hex(cp.rng_state[2]),
                                     to_hex(cp.rng_state[3])})}};
  j["step"] = cp.step;
  j["vocab_hash"] = to_hex(cp.vocab_hash);
  j["baseline"] = cp.baseline;
  if (cp.has_generator) {
    const GeneratorDims& d = cp.generator.dims;
    j["generator"] = {{"dims",
                       {{"vocab", d.vocab},
                        {"d_img", d.d_img},
                        {"d_z", d.d_z},
                        {"d_e", d.d_e},
                        {"d_h", d.d_h},
                        {"t_max", d.t_max}}},
                      {"params", store_to_json(cp.generator.store)}};
  }
  if (cp.has_discriminator) {
    const DiscriminatorDims& d = cp.discriminator.dims;
    j["discriminator"] = {{"dims",
                           {{"vocab", d.vocab},
                            {"d_img", d.d_img},
                            {"d_e", d.d_e},
                            {"d_emb", d.d_emb}}},
                          {"gamma", cp.discriminator.gamma},
                          {"params", store_to_json(cp.discriminator.store)}};
  }

  // Write-then-rename so a crash never leaves a half-written file at
  // the destination path.
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open for writing: " + tmp);
    out << j.dump(2) << '\n';
    if (!out) throw CheckpointError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw CheckpointError("rename " + tmp + " -> " + path + ": " +
                          ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint " + path + ": " + e.what());
  }

  try {
    if (j.value("kind", "") != "calcap-checkpoint")
      throw CheckpointError("not a checkpoint file: " + path);
    Checkpoint cp;
    cp.version = j.at("version").get<int>();
    if (cp.version != 1)
      throw CheckpointError("unsupported checkpoint version " +
                            std::to_string(cp.version));
    cp.config = config_from_json(j.at("config"));

    const json& rng = j.at("rng");
    cp.rng_algorithm = rng.at("algorithm").get<std::string>();
    if (cp.rng_algorithm != SeededRng::kAlgorithmId)
      throw CheckpointError("unknown rng algorithm: " + cp.rng_algorithm);
    const json& state = rng.at("state");
    if (!state.is_array() || state.size() != 4)
      throw CheckpointError("rng state must be 4 words");
    for (std::size_t i = 0; i < 4; ++i)
      cp.rng_state[i] = from_hex(state[i], "rng state");

    cp.step = j.at("step").get<std::uint64_t>();
    cp.vocab_hash = from_hex(j.at("vocab_hash"), "vocab_hash");
    cp.baseline = j.at("baseline").get<double>();

    if (j.contains("generator")) {
      const json& g = j.at("generator");
      const json& dims = g.at("dims");
      GeneratorDims gd;
      gd.vocab = dims.at("vocab").get<std::size_t>();
      gd.d_img = dims.at("d_img").get<std::size_t>();
      gd.d_z = dims.at("d_z").get<std::size_t>();
      gd.d_e = dims.at("d_e").get<std::size_t>();
      gd.d_h = dims.at("d_h").get<std::size_t>();
      gd.t_max = dims.at("t_max").get<std::size_t>();
      SeededRng scratch(0);
      cp.generator = make_generator(gd, scratch);
      store_from_json(g.at("params"), cp.generator.store);
      cp.has_generator = true;
    }
    if (j.contains("discriminator")) {
      const json& d = j.at("discriminator");
      const json& dims = d.at("dims");
      DiscriminatorDims dd;
      dd.vocab = dims.at("vocab").get<std::size_t>();
      dd.d_img = dims.at("d_img").get<std::size_t>();
      dd.d_e = dims.at("d_e").get<std::size_t>();
      dd.d_emb = dims.at("d_emb").get<std::size_t>();
      SeededRng scratch(0);
      cp.discriminator =
          make_discriminator(dd, scratch, d.at("gamma").get<double>());
      store_from_json(d.at("params"), cp.discriminator.store);
      cp.has_discriminator = true;
    }
    return cp;
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint " + path + ": " + e.what());
  }
}

}  // namespace calcap
