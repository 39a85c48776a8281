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

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "calcap/errors.hpp"
#include "calcap/pipeline.hpp"

namespace calcap {
namespace {

std::string default_out_root() {
  const char* root = std::getenv("CALCAP_OUT_ROOT");
  return root && *root ? root : ".";
}

int fail(const char* kind, int code, const std::string& message) {
  const nlohmann::json record{
      {"error", kind}, {"exit_code", code}, {"message", message}};
  std::cerr << record.dump() << '\n';
  return code;
}

std::vector<std::size_t> parse_ks(const std::string& spec) {
  std::vector<std::size_t> ks;
  std::size_t begin = 0;
  while (begin <= spec.size()) {
    const std::size_t end = std::min(spec.find(',', begin), spec.size());
    const std::string part = spec.substr(begin, end - begin);
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(part, &used);
      if (used != part.size() || v == 0) throw std::invalid_argument(part);
      ks.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("bad retrieval cutoff \"" + part +
                       "\" (expected a comma-separated list like 1,5,10)");
    }
    begin = end + 1;
  }
  return ks;
}

std::vector<std::pair<std::string, std::string>> parse_models(
    const std::vector<std::string>& specs) {
  std::vector<std::pair<std::string, std::string>> models;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw UsageError("bad model \"" + spec + "\" (expected name=path)");
    }
    models.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
  }
  return models;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"adversarially trained captioning on synthetic desk worlds"};
  app.require_subcommand(1);

  // Common knobs; each subcommand wires the ones it uses.
  struct {
    std::string data;
    std::string checkpoint;
    std::string config_file;
    std::vector<std::string> sets;
    std::string out_dir = default_out_root();
    std::string split = "test";
    std::uint64_t seed = 0;
    bool seed_given = false;
  } opt;

  const auto add_common = [&](CLI::App* cmd, bool with_config) {
    cmd->add_option("--out-dir", opt.out_dir, "Directory for artifacts");
    if (with_config) {
      cmd->add_option("--config", opt.config_file,
                      "JSON file of trainer settings");
      cmd->add_option("--set", opt.sets,
                      "Override one trainer setting (key=value)");
      cmd->add_option("--seed", opt.seed, "Shorthand for --set seed=N")
          ->each([&](const std::string&) { opt.seed_given = true; });
    }
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic world");
  WorldConfig world;
  std::string out_name = "world.jsonl";
  gen->add_option("--out", out_name, "Dataset filename inside --out-dir");
  gen->add_option("--seed", world.seed, "World seed");
  gen->add_option("--images", world.n_images, "Total image count");
  gen->add_option("--captions-per-image", world.captions_per_image,
                  "References per image");
  gen->add_option("--t-max", world.t_max, "Caption length cap");
  gen->add_option("--d-img", world.d_img, "Image feature dimension");
  gen->add_option("--jitter", world.jitter_sigma, "Feature noise sigma");
  gen->add_option("--vocab-threshold", world.vocab_threshold,
                  "Minimum surface count kept in the vocabulary");
  gen->add_option("--max-vocab", world.max_vocab, "Vocabulary size cap");
  add_common(gen, false);

  auto* pretrain = app.add_subcommand(
      "pretrain", "MLE generator pretraining plus discriminator warmup");
  pretrain->add_option("--data", opt.data, "Dataset path")->required();
  add_common(pretrain, true);

  auto* train =
      app.add_subcommand("train", "Adversarial training from a checkpoint");
  train->add_option("--data", opt.data, "Dataset path")->required();
  train->add_option("--checkpoint", opt.checkpoint, "Pretraining checkpoint")
      ->required();
  add_common(train, true);

  auto* eval = app.add_subcommand(
      "eval", "Generate captions on a split and score them");
  eval->add_option("--data", opt.data, "Dataset path")->required();
  eval->add_option("--checkpoint", opt.checkpoint, "Model checkpoint")
      ->required();
  eval->add_option("--split", opt.split, "train, val, or test");
  add_common(eval, true);

  auto* retrieve =
      app.add_subcommand("retrieve", "Caption-to-image retrieval recall");
  std::string scorer_checkpoint;
  std::string ks_spec = "1,5,10";
  retrieve->add_option("--data", opt.data, "Dataset path")->required();
  retrieve->add_option("--checkpoint", opt.checkpoint, "Caption source")
      ->required();
  retrieve->add_option("--scorer-checkpoint", scorer_checkpoint,
                       "Checkpoint whose discriminator ranks the images");
  retrieve->add_option("--ks", ks_spec, "Recall cutoffs, e.g. 1,5,10");
  retrieve->add_option("--split", opt.split, "train, val, or test");
  add_common(retrieve, true);

  auto* diversity = app.add_subcommand(
      "diversity", "Per-cluster embedding diversity of caption sets");
  std::string encoder_checkpoint;
  std::vector<std::string> model_specs;
  bool include_human = false;
  std::size_t clusters = default_attributes().size();
  std::uint64_t cluster_seed = 1;
  diversity->add_option("--data", opt.data, "Dataset path")->required();
  diversity
      ->add_option("--encoder", encoder_checkpoint,
                   "Checkpoint providing the frozen caption encoder")
      ->required();
  diversity->add_option("--model", model_specs,
                        "Caption source as name=captions.jsonl (repeatable)");
  diversity->add_flag("--include-human", include_human,
                      "Add each image's first reference as a model");
  diversity->add_option("--k", clusters, "Image cluster count");
  diversity->add_option("--seed", cluster_seed, "Clustering seed");
  diversity->add_option("--split", opt.split, "train, val, or test");
  add_common(diversity, false);

  auto* wordfreq =
      app.add_subcommand("wordfreq", "Positional word frequency table");
  std::string captions_path;
  std::size_t positions = 0;
  double threshold = 0.005;
  wordfreq->add_option("--data", opt.data, "Dataset path (vocabulary source)")
      ->required();
  wordfreq->add_option("--captions", captions_path,
                       "captions.jsonl to count (default: split references)");
  wordfreq->add_option("--split", opt.split, "train, val, or test");
  wordfreq->add_option("--positions", positions,
                       "Highest position to report (0: longest caption)");
  wordfreq->add_option("--threshold", threshold,
                       "Pool words rarer than this into *");
  add_common(wordfreq, false);

  auto* ablate = app.add_subcommand(
      "ablate", "Train the four decoding/objective arms and compare sigma");
  ablate->add_option("--data", opt.data, "Dataset path")->required();
  add_common(ablate, true);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : fail("usage", 2, e.what());
  }

  try {
    if (opt.seed_given) {
      opt.sets.push_back("seed=" + std::to_string(opt.seed));
    }
    if (gen->parsed()) {
      const auto outcome = cmd_gen_data(world, opt.out_dir, out_name);
      std::cout << "dataset " << outcome.data_path << '\n';
    } else if (pretrain->parsed()) {
      const TrainerConfig config =
          resolve_config(TrainerConfig{}, opt.config_file, opt.sets);
      const auto outcome =
          cmd_pretrain(opt.data, config, opt.out_dir, opt.sets);
      if (outcome.generator_diverged || outcome.discriminator_diverged) {
        std::cerr << "warning: pretraining diverged and kept the last good "
                     "parameters\n";
      }
      std::cout << "checkpoint " << outcome.checkpoint_path << '\n';
    } else if (train->parsed()) {
      const auto outcome = cmd_train(opt.data, opt.checkpoint, opt.config_file,
                                     opt.sets, opt.out_dir);
      if (outcome.collapse_warnings > 0) {
        std::cerr << "warning: " << outcome.collapse_warnings
                  << " mode-collapse warning(s) during training\n";
      }
      std::cout << "checkpoint " << outcome.checkpoint_path << '\n';
    } else if (eval->parsed()) {
      const auto outcome =
          cmd_eval(opt.data, opt.checkpoint, opt.split, opt.sets, opt.out_dir);
      std::cout << "captions " << outcome.captions_path << '\n'
                << "metrics " << outcome.csv_path << '\n';
    } else if (retrieve->parsed()) {
      const auto outcome =
          cmd_retrieve(opt.data, opt.checkpoint, scorer_checkpoint, opt.split,
                       parse_ks(ks_spec), opt.sets, opt.out_dir);
      std::cout << "retrieval " << outcome.csv_path << '\n';
    } else if (diversity->parsed()) {
      const auto outcome = cmd_diversity(
          opt.data, encoder_checkpoint, parse_models(model_specs),
          include_human, clusters, cluster_seed, opt.split, opt.out_dir);
      for (const auto& notice : outcome.report.notices) {
        std::cerr << "notice: " << notice << '\n';
      }
      std::cout << "diversity " << outcome.csv_path << '\n';
    } else if (wordfreq->parsed()) {
      const auto outcome = cmd_wordfreq(opt.data, captions_path, opt.split,
                                        positions, threshold, opt.out_dir);
      std::cout << "wordfreq " << outcome.csv_path << '\n';
    } else if (ablate->parsed()) {
      const auto outcome =
          cmd_ablate(opt.data, opt.config_file, opt.sets, opt.out_dir);
      std::cout << "ablation " << outcome.csv_path << '\n';
    }
    return 0;
  } catch (const UsageError& e) {
    return fail("usage", 2, e.what());
  } catch (const DataError& e) {
    return fail("data", 3, e.what());
  } catch (const CheckpointError& e) {
    return fail("checkpoint", 4, e.what());
  } catch (const NumericError& e) {
    return fail("numeric", 5, e.what());
  } catch (const std::exception& e) {
    return fail("internal", 1, e.what());
  }
}

}  // namespace calcap
