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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "calcap/corpus.hpp"
#include "calcap/metrics.hpp"
#include "calcap/trainer.hpp"

namespace calcap {

// One run of one command; recorded verbatim in the run manifest.
struct RunConfig {
  std::string command;
  std::string data_path;
  std::string checkpoint_in;
  std::string checkpoint_out;
  std::vector<std::string> overrides;  // raw key=value pairs
  std::string out_dir;
  std::uint64_t seed = 0;
};

struct GeneratedCaption {
  std::string image_id;
  std::vector<int> tokens;  // [START, ..., END]
  std::string text;         // content surfaces joined by spaces
};

std::string caption_text(const std::vector<int>& tokens,
                         const Vocabulary& vocab);

// JSONL, one caption per line.
void save_captions(const std::vector<GeneratedCaption>& captions,
                   const std::string& path);
std::vector<GeneratedCaption> load_captions(const std::string& path);

std::string file_hash_hex(const std::string& path);

// Applies a JSON config file (unknown keys are a data error) and then
// key=value overrides (unknown keys are a usage error) onto `base`,
// then validates.
TrainerConfig resolve_config(TrainerConfig base, const std::string& config_path,
                             const std::vector<std::string>& overrides);

const std::vector<ImageRecord>& dataset_split(const Dataset& dataset,
                                              const std::string& split);

// Test-time captioning: beam decoding when config.decode_beam,
// otherwise the best of n_best samples judged by the discriminator.
std::vector<GeneratedCaption> generate_captions(
    const std::vector<ImageRecord>& images, const GeneratorParams& gen,
    const DiscriminatorParams& disc, const TrainerConfig& config,
    SeededRng& rng);

// The discriminator's pairwise relevance: the comparative design ranks
// by embedding cosine, the binary design by its sigmoid score.
RetrievalScorer checkpoint_scorer(const DiscriminatorParams& disc,
                                  bool comparative);

struct GenDataOutcome {
  std::string data_path;
  std::string manifest_path;
};

GenDataOutcome cmd_gen_data(const WorldConfig& world, const std::string& out_dir,
                            const std::string& out_name = "world.jsonl");

struct PretrainOutcome {
  std::string checkpoint_path;
  std::string losses_path;
  std::string manifest_path;
  bool generator_diverged = false;
  bool discriminator_diverged = false;
};

// MLE generator pretraining followed by discriminator pretraining
// against the frozen generator; the checkpoint holds both.
PretrainOutcome cmd_pretrain(const std::string& data_path,
                             const TrainerConfig& config,
                             const std::string& out_dir,
                             const std::vector<std::string>& overrides = {});

struct TrainOutcome {
  std::string checkpoint_path;
  std::string metrics_path;
  std::string manifest_path;
  std::uint64_t d_steps = 0;
  std::uint64_t g_steps = 0;
  std::uint64_t collapse_warnings = 0;
};

TrainOutcome cmd_train(const std::string& data_path,
                       const std::string& checkpoint_in,
                       const std::string& config_path,
                       const std::vector<std::string>& overrides,
                       const std::string& out_dir);

struct EvalOutcome {
  std::string captions_path;
  std::string csv_path;
  std::string manifest_path;
  std::size_t n_images = 0;
  double bleu = 0.0;
  double distinct1 = 0.0;
  double distinct2 = 0.0;
};

EvalOutcome cmd_eval(const std::string& data_path,
                     const std::string& checkpoint_in, const std::string& split,
                     const std::vector<std::string>& overrides,
                     const std::string& out_dir);

struct RetrieveOutcome {
  std::string csv_path;
  std::string manifest_path;
  RetrievalResult result;
};

// Captions come from the checkpoint's generator; the ranking score
// from `scorer_checkpoint_in` when given, else from the same file.
RetrieveOutcome cmd_retrieve(const std::string& data_path,
                             const std::string& checkpoint_in,
                             const std::string& scorer_checkpoint_in,
                             const std::string& split,
                             const std::vector<std::size_t>& ks,
                             const std::vector<std::string>& overrides,
                             const std::string& out_dir);

struct DiversityOutcome {
  std::string csv_path;
  std::string manifest_path;
  CategoryDiversityReport report;
};

// Caption sources are name=path JSONL files from `eval`; the frozen
// encoder is the checkpoint's discriminator. include_human adds each
// image's first reference as a "human" model.
DiversityOutcome cmd_diversity(
    const std::string& data_path, const std::string& encoder_checkpoint_in,
    const std::vector<std::pair<std::string, std::string>>& models,
    bool include_human, std::size_t k, std::uint64_t seed,
    const std::string& split, const std::string& out_dir);

struct WordfreqOutcome {
  std::string csv_path;
  std::string manifest_path;
  WordFrequencyTable table;
};

// Over a captions file when given, else over every reference of the
// split. position_limit 0 means "up to the longest caption".
WordfreqOutcome cmd_wordfreq(const std::string& data_path,
                             const std::string& captions_path,
                             const std::string& split,
                             std::size_t position_limit, double tail_threshold,
                             const std::string& out_dir);

struct AblateOutcome {
  std::string csv_path;
  std::string manifest_path;
  std::vector<DiversityRow> rows;  // bs, samp, samp+noise, samp+noise+compa
};

// Trains the three underlying configurations (binary objective with
// and without the noise vector, comparative with noise), decodes the
// four caption policies on the test split, and reports sigma_hat under
// one shared pretrained encoder.
AblateOutcome cmd_ablate(const std::string& data_path,
                         const std::string& config_path,
                         const std::vector<std::string>& overrides,
                         const std::string& out_dir);

// Full command-line surface; returns the process exit code (0 ok,
// 2 usage, 3 data, 4 checkpoint, 5 numeric) and prints a one-line JSON
// error record to stderr on failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace calcap
