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

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "calcap/corpus.hpp"
#include "calcap/discriminator.hpp"
#include "calcap/generator.hpp"
#include "calcap/rng.hpp"

namespace calcap {

struct TrainerConfig {
  std::size_t k_rollouts = 16;
  double gamma = 10.0;
  double learning_rate = 0.01;
  std::string optimizer = "sgd";
  std::size_t batch_size = 16;
  std::size_t g_pretrain_epochs = 50;
  std::size_t d_pretrain_epochs = 20;
  std::size_t d_steps_per_g = 5;       // D iterations per G iteration
  std::size_t adversarial_epochs = 5;
  bool decode_beam = false;            // evaluation decode: beam vs sampling
  std::size_t beam_width = 3;
  bool noise_on = true;
  bool comparative = true;             // comparative vs binary discriminator
  bool binary_regularization = true;   // unrelated-caption term of the binary loss
  bool baseline_on = true;
  double baseline_decay = 0.9;
  bool pg_use_log = true;              // false: multiply by pi instead (printed form)
  std::uint64_t seed = 1;
  std::size_t t_max = 0;               // 0: adopt the dataset's value
  std::size_t d_z = 8;
  std::size_t d_e = 32;
  std::size_t d_h = 32;
  std::size_t d_emb = 32;
  std::size_t n_best = 5;
  std::size_t checkpoint_interval = 50;  // D steps between emitted snapshots

  void validate() const;
};

// Per-step expected future rewards of one sampled caption: q[t-1] is
// Q(g_t | I, g_{0:t-1}) for t = 1..T. All values lie in (0, 1); the
// final entry is the exact score of the completed caption.
struct RewardEstimate {
  std::vector<double> q;
  std::vector<std::size_t> rollouts;  // samples behind each q (1 at the end)
};

struct Checkpoint {
  int version = 1;
  bool has_generator = false;
  GeneratorParams generator;
  bool has_discriminator = false;
  DiscriminatorParams discriminator;
  TrainerConfig config;
  std::string rng_algorithm = SeededRng::kAlgorithmId;
  std::array<std::uint64_t, 4> rng_state{};
  std::uint64_t step = 0;
  std::uint64_t vocab_hash = 0;
  double baseline = 0.0;
};

// Atomic (write-temp-then-rename) JSON serialization; save -> load ->
// save is byte-identical.
void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Completes a caption prefix by sampling from the current policy at
// temperature 1, under the prefix's own noise vector. An already
// completed prefix is returned unchanged.
Caption rollout_complete(const std::vector<double>& features,
                         const std::vector<double>& noise,
                         const std::vector<int>& prefix,
                         const GeneratorParams& gen, SeededRng& rng);

// The h and u references a candidate is compared against.
struct ComparisonRefs {
  std::vector<int> human;
  std::vector<std::vector<int>> unrelated;
};

// Q for the prefix g_{0:t}: mean comparative score of K rollout
// completions, or the exact score when the prefix is already complete
// (no simulation at the terminal step). The candidate is compared
// against refs.human and refs.unrelated.
double estimate_q(const std::vector<double>& features,
                  const std::vector<double>& noise,
                  const std::vector<int>& prefix, const ComparisonRefs& refs,
                  const DiscriminatorParams& disc, const GeneratorParams& gen,
                  std::size_t k, SeededRng& rng);

// All per-step Q values for a completed sampled caption.
RewardEstimate estimate_rewards(const std::vector<double>& features,
                                const std::vector<double>& noise,
                                const Caption& caption,
                                const ComparisonRefs& refs,
                                const DiscriminatorParams& disc,
                                const GeneratorParams& gen, std::size_t k,
                                SeededRng& rng);

struct PgBatch {
  std::vector<std::vector<double>> features;  // one image per entry
  std::vector<std::vector<int>> human;        // its human caption
};

struct PgStepResult {
  bool applied = false;
  std::string diagnostic;          // set when the step was rejected
  double mean_terminal_reward = 0.0;
  double mean_q = 0.0;             // over all caption positions
  double surrogate_loss = 0.0;
  std::vector<Caption> sampled;
};

// One REINFORCE update of the generator: samples a caption per image,
// estimates per-step rewards with the frozen discriminator, and ascends
// sum_t log pi(g_t) * (Q_t - baseline). Non-finite gradients reject the
// step with a diagnostic instead of updating. The discriminator is
// never touched.
PgStepResult generator_pg_step(const PgBatch& batch, GeneratorParams& gen,
                               const DiscriminatorParams& disc,
                               const TrainerConfig& config, double baseline,
                               SeededRng& rng);

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_losses;
  bool diverged = false;
};

PretrainResult pretrain_generator(const Dataset& dataset,
                                  const TrainerConfig& config);

// Generated captions are resampled from the frozen generator at every
// iteration; the loss is comparative or binary per config.
PretrainResult pretrain_discriminator(const Dataset& dataset,
                                      const TrainerConfig& config,
                                      const GeneratorParams& frozen_gen);

struct MetricsRow {
  std::uint64_t step = 0;  // discriminator step count
  double mean_reward = 0.0;
  double d_loss = 0.0;
  double g_loss = 0.0;
};

struct AdversarialResult {
  Checkpoint checkpoint;
  std::vector<MetricsRow> history;
  std::uint64_t d_steps = 0;
  std::uint64_t g_steps = 0;
  std::size_t collapse_warnings = 0;
  std::size_t rejected_g_steps = 0;
};

using SnapshotSink =
    std::function<void(const Checkpoint&, const MetricsRow&)>;

// Alternating schedule: one discriminator step per batch, one generator
// step after every config.d_steps_per_g-th discriminator step (so G
// steps = floor(D steps / ratio)). Emits a snapshot to `sink` every
// checkpoint_interval D steps and once at the end. A warning is counted
// when the sampled captions of a batch are all identical for 3 batches
// in a row. Deterministic given (dataset, config, start).
AdversarialResult adversarial_train(const Dataset& dataset,
                                    const Checkpoint& start,
                                    const TrainerConfig& config,
                                    const SnapshotSink& sink = nullptr);

struct SelectResult {
  Caption caption;
  std::size_t index = 0;  // which sample won
  double score = 0.0;     // its comparative score within the sample set
};

// Samples n captions with fresh noise and returns the one the
// discriminator scores highest when the samples form each other's
// comparison set; ties go to the lowest sample index. n = 1 skips
// scoring entirely.
SelectResult select_best_caption(const std::vector<double>& features,
                                 const GeneratorParams& gen,
                                 const DiscriminatorParams& disc,
                                 std::size_t n_samples, bool noise_on,
                                 SeededRng& rng);

}  // namespace calcap
