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

#include "calcap/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "calcap/discriminator.hpp"
#include "calcap/errors.hpp"
#include "calcap/generator.hpp"
#include "calcap/numeric.hpp"
#include "calcap/serialize.hpp"

namespace calcap {
namespace {

// Streams 1..5 belong to the training phases.
constexpr std::uint64_t kStreamCaptioning = 6;

namespace fs = std::filesystem;

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw UsageError("output directory must not be empty");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw DataError("cannot create output directory " + out_dir + ": " +
                    ec.message());
  }
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << content;
  if (!out) throw DataError("failed while writing " + path);
}

using PathList = std::vector<std::pair<std::string, std::string>>;

// {command, run, config, inputs, outputs} with every referenced file
// content-hashed; rerunning a deterministic command reproduces this
// file byte for byte.
std::string write_manifest(const RunConfig& run,
                           const nlohmann::json& resolved_config,
                           const PathList& inputs, const PathList& outputs) {
  nlohmann::json j;
  j["command"] = run.command;
  j["run"] = {{"data_path", run.data_path},
              {"checkpoint_in", run.checkpoint_in},
              {"checkpoint_out", run.checkpoint_out},
              {"overrides", run.overrides},
              {"out_dir", run.out_dir},
              {"seed", run.seed}};
  j["config"] = resolved_config;
  for (const auto& [name, path] : inputs) {
    j["inputs"][name] = {{"path", path}, {"fnv1a", file_hash_hex(path)}};
  }
  for (const auto& [name, path] : outputs) {
    j["outputs"][name] = {{"path", path}, {"fnv1a", file_hash_hex(path)}};
  }
  const std::string path = join_path(run.out_dir, "run_manifest.json");
  write_text_file(path, j.dump(2) + "\n");
  return path;
}

nlohmann::json world_to_json(const WorldConfig& w) {
  return {{"n_images", w.n_images},
          {"f_train", w.f_train},
          {"f_val", w.f_val},
          {"f_test", w.f_test},
          {"d_img", w.d_img},
          {"t_max", w.t_max},
          {"captions_per_image", w.captions_per_image},
          {"vocab_threshold", w.vocab_threshold},
          {"max_vocab", w.max_vocab},
          {"jitter_sigma", w.jitter_sigma},
          {"seed", w.seed},
          {"n_attributes", w.attributes.size()},
          {"n_templates", w.templates.size()}};
}

void require_vocab_match(const Dataset& dataset, const Checkpoint& ckpt,
                         const std::string& what) {
  if (ckpt.vocab_hash != dataset.vocab.hash()) {
    throw DataError(what + " vocabulary does not match the dataset");
  }
}

Checkpoint load_checkpoint_with_discriminator(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (!ckpt.has_discriminator) {
    throw CheckpointError("checkpoint " + path + " holds no discriminator");
  }
  return ckpt;
}

// image_id -> caption tokens, demanding exactly one caption per image.
std::vector<std::vector<int>> align_captions(
    const std::vector<GeneratedCaption>& captions,
    const std::vector<ImageRecord>& images, const std::string& source) {
  std::map<std::string, const GeneratedCaption*> by_id;
  for (const auto& c : captions) by_id[c.image_id] = &c;
  std::vector<std::vector<int>> out;
  out.reserve(images.size());
  for (const auto& image : images) {
    const auto it = by_id.find(image.image_id);
    if (it == by_id.end()) {
      throw DataError(source + " has no caption for image " + image.image_id);
    }
    out.push_back(it->second->tokens);
  }
  return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& history) {
  std::ostringstream out;
  out << "step,mean_reward,d_loss,g_loss\n";
  for (const auto& row : history) {
    out << row.step << ',' << csv_double(row.mean_reward) << ','
        << csv_double(row.d_loss) << ',' << csv_double(row.g_loss) << '\n';
  }
  return out.str();
}

std::string losses_csv(const PretrainResult& g, const PretrainResult& d) {
  std::ostringstream out;
  out << "phase,epoch,loss\n";
  for (std::size_t e = 0; e < g.epoch_losses.size(); ++e) {
    out << "generator," << e << ',' << csv_double(g.epoch_losses[e]) << '\n';
  }
  for (std::size_t e = 0; e < d.epoch_losses.size(); ++e) {
    out << "discriminator," << e << ',' << csv_double(d.epoch_losses[e])
        << '\n';
  }
  return out.str();
}

std::vector<GeneratedCaption> captions_for_checkpoint(
    const std::vector<ImageRecord>& images, const Checkpoint& ckpt,
    const TrainerConfig& config) {
  if (!ckpt.has_generator || !ckpt.has_discriminator) {
    throw CheckpointError(
        "captioning needs a checkpoint holding both generator and "
        "discriminator parameters");
  }
  SeededRng rng = SeededRng(config.seed).fork(kStreamCaptioning);
  DiscriminatorParams disc = ckpt.discriminator;
  disc.gamma = config.gamma;  // run setting wins over the stored value
  return generate_captions(images, ckpt.generator, disc, config, rng);
}

double mean_bleu(const std::vector<ImageRecord>& images,
                 const std::vector<GeneratedCaption>& captions) {
  double sum = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    sum += bleu4(captions[i].tokens, images[i].captions);
  }
  return sum / double(images.size());
}

std::vector<std::vector<int>> caption_tokens(
    const std::vector<GeneratedCaption>& captions) {
  std::vector<std::vector<int>> out;
  out.reserve(captions.size());
  for (const auto& c : captions) out.push_back(c.tokens);
  return out;
}

}  // namespace

std::string caption_text(const std::vector<int>& tokens,
                         const Vocabulary& vocab) {
  std::string out;
  for (int id : tokens) {
    if (id == Vocabulary::kStart || id == Vocabulary::kEnd ||
        id == Vocabulary::kPad) {
      continue;
    }
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

void save_captions(const std::vector<GeneratedCaption>& captions,
                   const std::string& path) {
  std::ostringstream out;
  for (const auto& c : captions) {
    nlohmann::json j{
        {"image_id", c.image_id}, {"text", c.text}, {"tokens", c.tokens}};
    out << j.dump() << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<GeneratedCaption> load_captions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open captions file " + path);
  std::vector<GeneratedCaption> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      GeneratedCaption c;
      c.image_id = j.at("image_id").get<std::string>();
      c.tokens = j.at("tokens").get<std::vector<int>>();
      c.text = j.value("text", std::string());
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": bad caption record: " + e.what());
    }
  }
  if (out.empty()) throw DataError("captions file " + path + " is empty");
  return out;
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path + " for hashing");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  return hash_hex(fnv1a(bytes.data(), bytes.size()));
}

TrainerConfig resolve_config(TrainerConfig base, const std::string& config_path,
                             const std::vector<std::string>& overrides) {
  if (!config_path.empty()) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw DataError("cannot open config file " + config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("config file " + config_path + " is not valid JSON: " +
                      e.what());
    }
    if (!j.is_object()) {
      throw DataError("config file " + config_path + " must hold an object");
    }
    for (const auto& [key, value] : j.items()) {
      try {
        apply_config_override(base, key, value.dump());
      } catch (const UsageError& e) {
        throw DataError("config file " + config_path + ": " + e.what());
      }
    }
  }
  for (const auto& pair : overrides) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw UsageError("override \"" + pair + "\" is not key=value");
    }
    apply_config_override(base, pair.substr(0, eq), pair.substr(eq + 1));
  }
  base.validate();
  return base;
}

const std::vector<ImageRecord>& dataset_split(const Dataset& dataset,
                                              const std::string& split) {
  if (split == "train") return dataset.train;
  if (split == "val") return dataset.val;
  if (split == "test") return dataset.test;
  throw UsageError("unknown split \"" + split +
                   "\" (expected train, val, or test)");
}

std::vector<GeneratedCaption> generate_captions(
    const std::vector<ImageRecord>& images, const GeneratorParams& gen,
    const DiscriminatorParams& disc, const TrainerConfig& config,
    SeededRng& rng) {
  std::vector<GeneratedCaption> out;
  out.reserve(images.size());
  for (const auto& image : images) {
    Caption caption;
    if (config.decode_beam) {
      std::vector<double> noise;
      if (config.noise_on) {
        noise.resize(gen.dims.d_z);
        for (double& v : noise) v = rng.gaussian();
      }
      caption = beam_decode(image.features, gen, config.beam_width, noise)
                    .caption;
    } else {
      caption = select_best_caption(image.features, gen, disc, config.n_best,
                                    config.noise_on, rng)
                    .caption;
    }
    out.push_back({image.image_id, caption.tokens, std::string()});
  }
  return out;
}

// Both discriminator kinds rank by the angle between their caption and image
// embeddings.  Ranking the binary kind by its raw logit would let image
// embedding norms skew the order the same way for every query; the decision
// nonlinearity is monotone, so nothing is lost by dropping it here.
RetrievalScorer checkpoint_scorer(const DiscriminatorParams& disc) {
  return [&disc](const std::vector<int>& caption, const ImageRecord& image) {
    const auto e_img = embed_image(image.features, disc);
    const auto e_cap = embed_caption(caption, disc);
    bool zero_norm = false;
    const double sim = cosine_similarity(e_cap, e_img, &zero_norm);
    return zero_norm ? 0.0 : sim;
  };
}

GenDataOutcome cmd_gen_data(const WorldConfig& world, const std::string& out_dir,
                            const std::string& out_name) {
  ensure_out_dir(out_dir);
  const Dataset dataset = generate_world(world);
  const std::string data_path = join_path(out_dir, out_name);
  save_dataset(dataset, data_path);

  RunConfig run;
  run.command = "gen-data";
  run.out_dir = out_dir;
  run.seed = world.seed;
  GenDataOutcome outcome;
  outcome.data_path = data_path;
  outcome.manifest_path =
      write_manifest(run, world_to_json(world), {}, {{"dataset", data_path}});
  return outcome;
}

PretrainOutcome cmd_pretrain(const std::string& data_path,
                             const TrainerConfig& config,
                             const std::string& out_dir,
                             const std::vector<std::string>& overrides) {
  ensure_out_dir(out_dir);
  const Dataset dataset = load_dataset(data_path);
  const PretrainResult g = pretrain_generator(dataset, config);
  const PretrainResult d =
      pretrain_discriminator(dataset, config, g.checkpoint.generator);

  PretrainOutcome outcome;
  outcome.generator_diverged = g.diverged;
  outcome.discriminator_diverged = d.diverged;
  outcome.checkpoint_path = join_path(out_dir, "pretrained.json");
  save_checkpoint(d.checkpoint, outcome.checkpoint_path);
  outcome.losses_path = join_path(out_dir, "pretrain_losses.csv");
  write_text_file(outcome.losses_path, losses_csv(g, d));

  RunConfig run;
  run.command = "pretrain";
  run.data_path = data_path;
  run.checkpoint_out = outcome.checkpoint_path;
  run.overrides = overrides;
  run.out_dir = out_dir;
  run.seed = config.seed;
  outcome.manifest_path =
      write_manifest(run, config_to_json(config), {{"dataset", data_path}},
                     {{"checkpoint", outcome.checkpoint_path},
                      {"losses", outcome.losses_path}});
  return outcome;
}

TrainOutcome cmd_train(const std::string& data_path,
                       const std::string& checkpoint_in,
                       const std::string& config_path,
                       const std::vector<std::string>& overrides,
                       const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const Dataset dataset = load_dataset(data_path);
  const Checkpoint start = load_checkpoint(checkpoint_in);
  // The checkpoint's own config is the baseline; files and overrides
  // adjust it (model dimensions must still match the stored weights).
  const TrainerConfig config =
      resolve_config(start.config, config_path, overrides);

  std::vector<std::pair<std::string, std::string>> snapshots;
  const SnapshotSink sink = [&](const Checkpoint& ckpt, const MetricsRow& row) {
    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint_%06llu.json",
                  static_cast<unsigned long long>(row.step));
    const std::string path = join_path(out_dir, name);
    save_checkpoint(ckpt, path);
    snapshots.emplace_back(name, path);
  };
  const AdversarialResult result =
      adversarial_train(dataset, start, config, sink);

  TrainOutcome outcome;
  outcome.d_steps = result.d_steps;
  outcome.g_steps = result.g_steps;
  outcome.collapse_warnings = result.collapse_warnings;
  outcome.checkpoint_path = join_path(out_dir, "trained.json");
  save_checkpoint(result.checkpoint, outcome.checkpoint_path);
  outcome.metrics_path = join_path(out_dir, "metrics.csv");
  write_text_file(outcome.metrics_path, metrics_csv(result.history));

  RunConfig run;
  run.command = "train";
  run.data_path = data_path;
  run.checkpoint_in = checkpoint_in;
  run.checkpoint_out = outcome.checkpoint_path;
  run.overrides = overrides;
  run.out_dir = out_dir;
  run.seed = config.seed;
  PathList outputs{{"checkpoint", outcome.checkpoint_path},
                   {"metrics", outcome.metrics_path}};
  outputs.insert(outputs.end(), snapshots.begin(), snapshots.end());
  outcome.manifest_path = write_manifest(
      run, config_to_json(config),
      {{"dataset", data_path}, {"checkpoint", checkpoint_in}}, outputs);
  return outcome;
}

EvalOutcome cmd_eval(const std::string& data_path,
                     const std::string& checkpoint_in, const std::string& split,
                     const std::vector<std::string>& overrides,
                     const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const Dataset dataset = load_dataset(data_path);
  const Checkpoint ckpt = load_checkpoint(checkpoint_in);
  require_vocab_match(dataset, ckpt, "checkpoint");
  const TrainerConfig config = resolve_config(ckpt.config, "", overrides);
  const auto& images = dataset_split(dataset, split);
  if (images.empty()) throw DataError("split " + split + " is empty");

  auto captions = captions_for_checkpoint(images, ckpt, config);
  for (auto& c : captions) c.text = caption_text(c.tokens, dataset.vocab);

  EvalOutcome outcome;
  outcome.n_images = images.size();
  outcome.bleu = mean_bleu(images, captions);
  const auto tokens = caption_tokens(captions);
  outcome.distinct1 = distinct_n(tokens, 1);
  outcome.distinct2 = distinct_n(tokens, 2);

  outcome.captions_path = join_path(out_dir, "captions.jsonl");
  save_captions(captions, outcome.captions_path);
  std::ostringstream csv;
  csv << "metric,value\n";
  csv << "n_images," << outcome.n_images << '\n';
  csv << "bleu4," << csv_double(outcome.bleu) << '\n';
  csv << "distinct1," << csv_double(outcome.distinct1) << '\n';
  csv << "distinct2," << csv_double(outcome.distinct2) << '\n';
  outcome.csv_path = join_path(out_dir, "eval.csv");
  write_text_file(outcome.csv_path, csv.str());

  RunConfig run;
  run.command = "eval";
  run.data_path = data_path;
  run.checkpoint_in = checkpoint_in;
  run.overrides = overrides;
  run.out_dir = out_dir;
  run.seed = config.seed;
  outcome.manifest_path = write_manifest(
      run, config_to_json(config),
      {{"dataset", data_path}, {"checkpoint", checkpoint_in}},
      {{"captions", outcome.captions_path}, {"eval", outcome.csv_path}});
  return outcome;
}

RetrieveOutcome cmd_retrieve(const std::string& data_path,
                             const std::string& checkpoint_in,
                             const std::string& scorer_checkpoint_in,
                             const std::string& split,
                             const std::vector<std::size_t>& ks,
                             const std::vector<std::string>& overrides,
                             const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const Dataset dataset = load_dataset(data_path);
  const Checkpoint ckpt = load_checkpoint(checkpoint_in);
  require_vocab_match(dataset, ckpt, "checkpoint");
  const TrainerConfig config = resolve_config(ckpt.config, "", overrides);
  const auto& images = dataset_split(dataset, split);
  if (images.empty()) throw DataError("split " + split + " is empty");

  const std::string scorer_path =
      scorer_checkpoint_in.empty() ? checkpoint_in : scorer_checkpoint_in;
  const Checkpoint scorer_ckpt =
      scorer_path == checkpoint_in
          ? ckpt
          : load_checkpoint_with_discriminator(scorer_path);
  if (!scorer_ckpt.has_discriminator) {
    throw CheckpointError("checkpoint " + scorer_path +
                          " holds no discriminator");
  }
  require_vocab_match(dataset, scorer_ckpt, "scorer checkpoint");

  const auto captions = captions_for_checkpoint(images, ckpt, config);
  const auto scorer = checkpoint_scorer(scorer_ckpt.discriminator);

  RetrieveOutcome outcome;
  outcome.result = retrieval_recall(images, caption_tokens(captions), scorer,
                                    ks);
  std::ostringstream csv;
  csv << "k,recall\n";
  for (std::size_t j = 0; j < outcome.result.ks.size(); ++j) {
    csv << outcome.result.ks[j] << ','
        << csv_double(outcome.result.recall[j]) << '\n';
  }
  outcome.csv_path = join_path(out_dir, "retrieval.csv");
  write_text_file(outcome.csv_path, csv.str());

  RunConfig run;
  run.command = "retrieve";
  run.data_path = data_path;
  run.checkpoint_in = checkpoint_in;
  run.overrides = overrides;
  run.out_dir = out_dir;
  run.seed = config.seed;
  PathList inputs{{"dataset", data_path}, {"checkpoint", checkpoint_in}};
  if (scorer_path != checkpoint_in) inputs.emplace_back("scorer", scorer_path);
  outcome.manifest_path =
      write_manifest(run, config_to_json(config), inputs,
                     {{"retrieval", outcome.csv_path}});
  return outcome;
}

DiversityOutcome cmd_diversity(
    const std::string& data_path, const std::string& encoder_checkpoint_in,
    const std::vector<std::pair<std::string, std::string>>& models,
    bool include_human, std::size_t k, std::uint64_t seed,
    const std::string& split, const std::string& out_dir) {
  ensure_out_dir(out_dir);
  if (models.empty() && !include_human) {
    throw UsageError("diversity needs at least one model or --include-human");
  }
  const Dataset dataset = load_dataset(data_path);
  const Checkpoint encoder_ckpt =
      load_checkpoint_with_discriminator(encoder_checkpoint_in);
  require_vocab_match(dataset, encoder_ckpt, "encoder checkpoint");
  const auto& images = dataset_split(dataset, split);
  if (images.empty()) throw DataError("split " + split + " is empty");

  std::vector<ModelCaptions> sources;
  if (include_human) {
    ModelCaptions human{"human", {}};
    for (const auto& image : images) {
      if (image.captions.empty()) {
        throw DataError("image " + image.image_id + " has no references");
      }
      human.captions.push_back(image.captions.front());
    }
    sources.push_back(std::move(human));
  }
  PathList inputs{{"dataset", data_path},
                  {"encoder", encoder_checkpoint_in}};
  for (const auto& [name, path] : models) {
    sources.push_back(
        {name, align_captions(load_captions(path), images, path)});
    inputs.emplace_back("captions:" + name, path);
  }

  DiversityOutcome outcome;
  outcome.report = category_diversity_report(
      images, sources, encoder_ckpt.discriminator, k, seed);
  outcome.csv_path = join_path(out_dir, "diversity.csv");
  write_text_file(outcome.csv_path, diversity_rows_csv(outcome.report.rows));

  RunConfig run;
  run.command = "diversity";
  run.data_path = data_path;
  run.checkpoint_in = encoder_checkpoint_in;
  run.out_dir = out_dir;
  run.seed = seed;
  nlohmann::json config{{"k", k},
                        {"seed", seed},
                        {"split", split},
                        {"include_human", include_human},
                        {"notices", outcome.report.notices}};
  outcome.manifest_path = write_manifest(run, config, inputs,
                                         {{"diversity", outcome.csv_path}});
  return outcome;
}

WordfreqOutcome cmd_wordfreq(const std::string& data_path,
                             const std::string& captions_path,
                             const std::string& split,
                             std::size_t position_limit, double tail_threshold,
                             const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const Dataset dataset = load_dataset(data_path);

  std::vector<std::vector<int>> tokens;
  if (!captions_path.empty()) {
    for (const auto& c : load_captions(captions_path)) {
      tokens.push_back(c.tokens);
    }
  } else {
    for (const auto& image : dataset_split(dataset, split)) {
      for (const auto& reference : image.captions) tokens.push_back(reference);
    }
  }
  if (tokens.empty()) throw DataError("no captions to count");

  if (position_limit == 0) {
    // Up to the longest caption's END.
    for (const auto& caption : tokens) {
      std::size_t len = caption.size();
      for (std::size_t t = 0; t < caption.size(); ++t) {
        if (caption[t] == Vocabulary::kEnd) {
          len = t + 1;
          break;
        }
      }
      position_limit = std::max(position_limit, len - 1);
    }
  }

  WordfreqOutcome outcome;
  outcome.table = word_frequency_table(tokens, dataset.vocab, position_limit,
                                       tail_threshold);
  outcome.csv_path = join_path(out_dir, "wordfreq.csv");
  write_text_file(outcome.csv_path, word_frequency_csv(outcome.table));

  RunConfig run;
  run.command = "wordfreq";
  run.data_path = data_path;
  run.out_dir = out_dir;
  PathList inputs{{"dataset", data_path}};
  if (!captions_path.empty()) inputs.emplace_back("captions", captions_path);
  nlohmann::json config{{"split", split},
                        {"position_limit", position_limit},
                        {"tail_threshold", tail_threshold},
                        {"captions", captions_path}};
  outcome.manifest_path =
      write_manifest(run, config, inputs, {{"wordfreq", outcome.csv_path}});
  return outcome;
}

AblateOutcome cmd_ablate(const std::string& data_path,
                         const std::string& config_path,
                         const std::vector<std::string>& overrides,
                         const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const Dataset dataset = load_dataset(data_path);
  const TrainerConfig base =
      resolve_config(TrainerConfig{}, config_path, overrides);

  TrainerConfig binary_off = base;  // decoded as "bs", sampled as "samp"
  binary_off.comparative = false;
  binary_off.binary_regularization = true;
  binary_off.noise_on = false;
  TrainerConfig binary_noise = base;
  binary_noise.comparative = false;
  binary_noise.binary_regularization = true;
  binary_noise.noise_on = true;
  TrainerConfig compa = base;
  compa.comparative = true;
  compa.noise_on = true;

  // One standard likelihood-trained generator serves every arm.  The arms
  // add decode sampling, the noise port, and the comparative objective one
  // at a time, so the shared base is trained without noise; the arms that
  // use z start from the untouched init weights of that port.
  TrainerConfig shared_pretrain = base;
  shared_pretrain.noise_on = false;
  const PretrainResult g = pretrain_generator(dataset, shared_pretrain);
  const PretrainResult d_binary_off =
      pretrain_discriminator(dataset, binary_off, g.checkpoint.generator);
  const PretrainResult d_binary_noise =
      pretrain_discriminator(dataset, binary_noise, g.checkpoint.generator);
  const PretrainResult d_compa =
      pretrain_discriminator(dataset, compa, g.checkpoint.generator);

  // The comparative pretrained discriminator, untouched by any arm's
  // adversarial phase, is the shared diversity encoder.
  const DiscriminatorParams& encoder = d_compa.checkpoint.discriminator;
  const std::uint64_t encoder_hash = encoder.store.value_hash();
  const std::string encoder_path = join_path(out_dir, "encoder.json");
  save_checkpoint(d_compa.checkpoint, encoder_path);

  struct Trained {
    std::string name;
    Checkpoint checkpoint;
    std::string path;
  };
  std::vector<Trained> trained;
  const auto train_arm = [&](const std::string& name,
                             const TrainerConfig& config,
                             const Checkpoint& start) {
    const AdversarialResult result = adversarial_train(dataset, start, config);
    const std::string path = join_path(out_dir, "trained_" + name + ".json");
    save_checkpoint(result.checkpoint, path);
    trained.push_back({name, result.checkpoint, path});
  };
  train_arm("binary", binary_off, d_binary_off.checkpoint);
  train_arm("binary_noise", binary_noise, d_binary_noise.checkpoint);
  train_arm("compa", compa, d_compa.checkpoint);

  struct Arm {
    std::string name;
    const Checkpoint* checkpoint;
    TrainerConfig config;
  };
  TrainerConfig beam_config = binary_off;
  beam_config.decode_beam = true;
  std::vector<Arm> arms{
      {"bs", &trained[0].checkpoint, beam_config},
      {"samp", &trained[0].checkpoint, binary_off},
      {"samp+noise", &trained[1].checkpoint, binary_noise},
      {"samp+noise+compa", &trained[2].checkpoint, compa}};

  AblateOutcome outcome;
  PathList outputs{{"encoder", encoder_path}};
  for (const auto& t : trained) outputs.emplace_back("trained:" + t.name, t.path);
  for (const auto& arm : arms) {
    auto captions =
        captions_for_checkpoint(dataset.test, *arm.checkpoint, arm.config);
    for (auto& c : captions) c.text = caption_text(c.tokens, dataset.vocab);
    const std::string path =
        join_path(out_dir, "captions_" + arm.name + ".jsonl");
    save_captions(captions, path);
    outputs.emplace_back("captions:" + arm.name, path);

    std::vector<std::vector<double>> rows;
    for (const auto& c : captions) {
      rows.push_back(embed_caption(c.tokens, encoder));
    }
    const DiversityReport report =
        diversity_sigma(make_embedding_matrix(rows), encoder_hash);
    outcome.rows.push_back({arm.name, arm.name, report.sigma_hat, report.m,
                            report.n, encoder_hash});
  }

  std::ostringstream csv;
  csv << "arm,sigma_hat,m,n,encoder_hash\n";
  for (const auto& row : outcome.rows) {
    char hash[32];
    std::snprintf(hash, sizeof(hash), "0x%016llx",
                  static_cast<unsigned long long>(row.encoder_hash));
    csv << row.cluster << ',' << csv_double(row.sigma_hat) << ',' << row.m
        << ',' << row.n << ',' << hash << '\n';
  }
  outcome.csv_path = join_path(out_dir, "ablation.csv");
  write_text_file(outcome.csv_path, csv.str());
  outputs.emplace_back("ablation", outcome.csv_path);

  RunConfig run;
  run.command = "ablate";
  run.data_path = data_path;
  run.overrides = overrides;
  run.out_dir = out_dir;
  run.seed = base.seed;
  outcome.manifest_path = write_manifest(run, config_to_json(base),
                                         {{"dataset", data_path}}, outputs);
  return outcome;
}

}  // namespace calcap
