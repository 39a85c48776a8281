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

#include "calcap/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "calcap/errors.hpp"
#include "calcap/numeric.hpp"

namespace calcap {

namespace {

// One independent stream per training phase, all derived from the
// config seed; a phase's checkpoint records its own stream's state.
constexpr std::uint64_t kStreamGenInit = 1;
constexpr std::uint64_t kStreamGenPretrain = 2;
constexpr std::uint64_t kStreamDiscInit = 3;
constexpr std::uint64_t kStreamDiscPretrain = 4;
constexpr std::uint64_t kStreamAdversarial = 5;

GeneratorDims generator_dims(const Dataset& ds, const TrainerConfig& c) {
  GeneratorDims d;
  d.vocab = ds.vocab.size();
  d.d_img = ds.d_img;
  d.d_z = c.d_z;
  d.d_e = c.d_e;
  d.d_h = c.d_h;
  d.t_max = c.t_max == 0 ? ds.t_max : c.t_max;
  if (d.t_max != ds.t_max)
    throw DataError("config t_max " + std::to_string(d.t_max) +
                    " does not match the dataset's " +
                    std::to_string(ds.t_max));
  return d;
}

DiscriminatorDims discriminator_dims(const Dataset& ds,
                                     const TrainerConfig& c) {
  DiscriminatorDims d;
  d.vocab = ds.vocab.size();
  d.d_img = ds.d_img;
  d.d_e = c.d_e;
  d.d_emb = c.d_emb;
  return d;
}

void check_generator_matches(const GeneratorParams& gen, const Dataset& ds) {
  if (gen.dims.vocab != ds.vocab.size() || gen.dims.d_img != ds.d_img ||
      gen.dims.t_max != ds.t_max)
    throw DataError("generator dimensions do not match the dataset");
}

std::vector<double> record_features(const std::vector<ImageRecord>& images,
                                    std::size_t index) {
  return images[index].features;
}

PgBatch to_pg_batch(const std::vector<ImageRecord>& images, const Batch& b) {
  PgBatch out;
  out.features.reserve(b.image_index.size());
  for (std::size_t idx : b.image_index)
    out.features.push_back(record_features(images, idx));
  out.human = b.caption;
  return out;
}

ComparisonRefs refs_for(const PgBatch& batch, std::size_t i) {
  ComparisonRefs refs;
  refs.human = batch.human[i];
  for (std::size_t j = 0; j < batch.human.size(); ++j)
    if (j != i) refs.unrelated.push_back(batch.human[j]);
  return refs;
}

Checkpoint make_snapshot(const TrainerConfig& config, const Dataset& ds,
                         const GeneratorParams* gen,
                         const DiscriminatorParams* disc,
                         const SeededRng& rng, std::uint64_t step,
                         double baseline) {
  Checkpoint cp;
  cp.config = config;
  cp.rng_state = rng.state();
  cp.step = step;
  cp.vocab_hash = ds.vocab.hash();
  cp.baseline = baseline;
  if (gen) {
    cp.has_generator = true;
    cp.generator = *gen;
  }
  if (disc) {
    cp.has_discriminator = true;
    cp.discriminator = *disc;
  }
  return cp;
}

// Generated captions for one discriminator iteration, resampled from
// the current generator every call.
std::vector<std::vector<int>> sample_generated(
    const PgBatch& batch, const GeneratorParams& gen, bool noise_on,
    SeededRng& rng) {
  std::vector<std::vector<int>> out;
  out.reserve(batch.features.size());
  for (const auto& features : batch.features) {
    std::vector<double> z =
        noise_on ? draw_noise(rng, gen.dims.d_z) : std::vector<double>{};
    out.push_back(sample_from_prefix(features, z, {Vocabulary::kStart}, gen,
                                     rng, 1.0)
                      .tokens);
  }
  return out;
}

// One discriminator update on a batch; returns the loss.
double discriminator_step(const PgBatch& batch,
                          const std::vector<std::vector<int>>& generated,
                          DiscriminatorParams& disc,
                          const TrainerConfig& config, SeededRng& rng) {
  std::size_t b = batch.features.size();
  disc.store.zero_grads();
  DiscLossResult r;
  if (config.comparative) {
    CalBatch cb;
    cb.features = batch.features;
    cb.human = batch.human;
    cb.generated = generated;
    r = discriminator_loss_cal(cb, disc);
  } else {
    std::vector<BinaryExample> examples(b);
    for (std::size_t i = 0; i < b; ++i) {
      examples[i].features = batch.features[i];
      examples[i].human = batch.human[i];
      examples[i].generated = generated[i];
      std::size_t j = rng.uniform_index(b - 1);
      if (j >= i) ++j;  // any in-batch mismatched human caption
      examples[i].unrelated = batch.human[j];
    }
    r = discriminator_loss_binary(examples, config.binary_regularization,
                                  disc);
  }
  disc.store.sgd_step(config.learning_rate);
  return r.loss;
}

bool all_identical(const std::vector<std::vector<int>>& captions) {
  for (std::size_t i = 1; i < captions.size(); ++i)
    if (captions[i] != captions.front()) return false;
  return captions.size() >= 2;
}

}  // namespace

void TrainerConfig::validate() const {
  if (k_rollouts < 1) throw DataError("k_rollouts must be >= 1");
  if (!(gamma >= 0.0) || !std::isfinite(gamma))
    throw DataError("gamma must be finite and >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw DataError("learning_rate must be finite and > 0");
  if (optimizer != "sgd")
    throw DataError("unsupported optimizer \"" + optimizer +
                    "\" (supported: sgd)");
  if (batch_size < 2) throw DataError("batch_size must be >= 2");
  if (d_steps_per_g < 1) throw DataError("d_steps_per_g must be >= 1");
  if (beam_width < 1) throw DataError("beam_width must be >= 1");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0))
    throw DataError("baseline_decay must lie in [0, 1)");
  if (d_z < 1 || d_e < 1 || d_h < 1 || d_emb < 1)
    throw DataError("model dimensions must be >= 1");
  if (n_best < 1) throw DataError("n_best must be >= 1");
  if (checkpoint_interval < 1)
    throw DataError("checkpoint_interval must be >= 1");
}

Caption rollout_complete(const std::vector<double>& features,
                         const std::vector<double>& noise,
                         const std::vector<int>& prefix,
                         const GeneratorParams& gen, SeededRng& rng) {
  return sample_from_prefix(features, noise, prefix, gen, rng, 1.0);
}

// The comparison members other than the candidate never change across
// rollouts or positions, so their similarities are computed once.  Scoring
// a candidate then embeds one caption instead of the whole set, and the
// result matches cr_score bitwise: each similarity depends only on its own
// member and the image embedding, and the softmax sees the same vector.
struct CrContext {
  std::vector<double> image_embedding;
  std::vector<double> fixed_similarities;  // human first, then unrelated
};

CrContext make_cr_context(const std::vector<double>& features,
                          const ComparisonRefs& refs,
                          const DiscriminatorParams& disc) {
  CrContext ctx;
  ctx.image_embedding = embed_image(features, disc);
  ctx.fixed_similarities.reserve(1 + refs.unrelated.size());
  std::vector<double> e = embed_caption(refs.human, disc);
  ctx.fixed_similarities.push_back(cosine_similarity(e, ctx.image_embedding));
  for (const auto& u : refs.unrelated) {
    e = embed_caption(u, disc);
    ctx.fixed_similarities.push_back(
        cosine_similarity(e, ctx.image_embedding));
  }
  return ctx;
}

double context_cr(const CrContext& ctx, const std::vector<int>& candidate,
                  const DiscriminatorParams& disc) {
  std::vector<double> sims;
  sims.reserve(1 + ctx.fixed_similarities.size());
  std::vector<double> e = embed_caption(candidate, disc);
  sims.push_back(cosine_similarity(e, ctx.image_embedding));
  sims.insert(sims.end(), ctx.fixed_similarities.begin(),
              ctx.fixed_similarities.end());
  return cr_from_similarities(sims, disc.gamma)[0];
}

double estimate_q_in_context(const CrContext& ctx,
                             const std::vector<double>& features,
                             const std::vector<double>& noise,
                             const std::vector<int>& prefix,
                             const DiscriminatorParams& disc,
                             const GeneratorParams& gen, std::size_t k,
                             SeededRng& rng) {
  if (k < 1) throw DataError("k must be >= 1");
  if (prefix.size() < 2 || prefix.front() != Vocabulary::kStart)
    throw DataError("prefix must be START plus at least one token");

  auto end_at = std::find(prefix.begin(), prefix.end(), Vocabulary::kEnd);
  if (end_at != prefix.end()) {
    if (end_at + 1 != prefix.end())
      throw DataError("prefix has tokens after END");
    return context_cr(ctx, prefix, disc);  // terminal: exact, no simulation
  }

  // Running mean: K identical rollout scores (a deterministic policy)
  // yield that exact score for any K.
  double mean = 0.0;
  for (std::size_t r = 0; r < k; ++r) {
    double s = context_cr(
        ctx, rollout_complete(features, noise, prefix, gen, rng).tokens, disc);
    mean += (s - mean) / double(r + 1);
  }
  return mean;
}

double estimate_q(const std::vector<double>& features,
                  const std::vector<double>& noise,
                  const std::vector<int>& prefix, const ComparisonRefs& refs,
                  const DiscriminatorParams& disc, const GeneratorParams& gen,
                  std::size_t k, SeededRng& rng) {
  if (refs.human.empty()) throw DataError("missing human reference");
  CrContext ctx = make_cr_context(features, refs, disc);
  return estimate_q_in_context(ctx, features, noise, prefix, disc, gen, k,
                               rng);
}

RewardEstimate estimate_rewards(const std::vector<double>& features,
                                const std::vector<double>& noise,
                                const Caption& caption,
                                const ComparisonRefs& refs,
                                const DiscriminatorParams& disc,
                                const GeneratorParams& gen, std::size_t k,
                                SeededRng& rng) {
  if (!caption.completed) throw DataError("caption must be completed");
  if (refs.human.empty()) throw DataError("missing human reference");
  std::size_t total = scored_steps(caption, gen.dims.t_max);
  CrContext ctx = make_cr_context(features, refs, disc);
  RewardEstimate out;
  out.q.reserve(total);
  out.rollouts.reserve(total);
  for (std::size_t t = 1; t <= total; ++t) {
    if (t == total) {
      // The full caption, forced END included; nothing left to simulate.
      out.q.push_back(estimate_q_in_context(ctx, features, noise,
                                            caption.tokens, disc, gen, k,
                                            rng));
      out.rollouts.push_back(0);
    } else {
      std::vector<int> prefix(caption.tokens.begin(),
                              caption.tokens.begin() + t + 1);
      out.q.push_back(estimate_q_in_context(ctx, features, noise, prefix,
                                            disc, gen, k, rng));
      out.rollouts.push_back(k);
    }
  }
  return out;
}

PgStepResult generator_pg_step(const PgBatch& batch, GeneratorParams& gen,
                               const DiscriminatorParams& disc,
                               const TrainerConfig& config, double baseline,
                               SeededRng& rng) {
  config.validate();
  std::size_t b = batch.features.size();
  if (b == 0 || batch.human.size() != b)
    throw DataError("batch needs matching features and human captions");

  gen.store.zero_grads();
  PgStepResult res;
  double base = config.baseline_on ? baseline : 0.0;
  double sum_terminal = 0.0;
  double sum_q = 0.0;
  std::size_t n_q = 0;

  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> z = config.noise_on
                                ? draw_noise(rng, gen.dims.d_z)
                                : std::vector<double>{};
    Caption cap = sample_from_prefix(batch.features[i], z,
                                     {Vocabulary::kStart}, gen, rng, 1.0);
    ComparisonRefs refs = refs_for(batch, i);
    RewardEstimate re = estimate_rewards(batch.features[i], z, cap, refs,
                                         disc, gen, config.k_rollouts, rng);

    std::vector<double> weights(re.q.size());
    for (std::size_t t = 0; t < re.q.size(); ++t) weights[t] = re.q[t] - base;
    if (!config.pg_use_log) {
      // Plain d(pi)/d(theta) form: scale each step by its probability.
      std::vector<double> lp = caption_logprobs(batch.features[i], z, cap, gen);
      for (std::size_t t = 0; t < weights.size(); ++t)
        weights[t] *= std::exp(lp[t]);
    }
    std::vector<double> logps = caption_logprob_backward(
        batch.features[i], z, cap, weights, gen, -1.0 / double(b));
    for (std::size_t t = 0; t < weights.size(); ++t)
      res.surrogate_loss -= weights[t] * logps[t] / double(b);

    sum_terminal += re.q.back();
    for (double q : re.q) sum_q += q;
    n_q += re.q.size();
    res.sampled.push_back(std::move(cap));
  }

  if (!gen.store.grads_finite()) {
    gen.store.zero_grads();
    res.applied = false;
    res.diagnostic = "non-finite policy gradient; generator step rejected";
  } else {
    gen.store.sgd_step(config.learning_rate);
    res.applied = true;
  }
  res.mean_terminal_reward = sum_terminal / double(b);
  res.mean_q = n_q == 0 ? 0.0 : sum_q / double(n_q);
  return res;
}

PretrainResult pretrain_generator(const Dataset& dataset,
                                  const TrainerConfig& config) {
  config.validate();
  GeneratorDims gd = generator_dims(dataset, config);
  SeededRng root(config.seed);
  SeededRng init_rng = root.fork(kStreamGenInit);
  SeededRng loop = root.fork(kStreamGenPretrain);

  GeneratorParams gen = make_generator(gd, init_rng);
  ParameterStore last_good = gen.store;
  PretrainResult out;
  std::uint64_t steps = 0;

  for (std::size_t epoch = 0;
       epoch < config.g_pretrain_epochs && !out.diverged; ++epoch) {
    auto batches = epoch_batches(dataset.train, config.batch_size, loop);
    if (batches.empty())
      throw DataError("training split smaller than one batch");
    double epoch_sum = 0.0;
    for (const Batch& b : batches) {
      gen.store.zero_grads();
      double loss = 0.0;
      for (std::size_t j = 0; j < b.image_index.size(); ++j) {
        // The decoder always owns a noise port; likelihood training draws
        // z per example so the model learns to hold its output steady
        // under noise instead of meeting it for the first time later.
        std::vector<double> z = config.noise_on
                                    ? draw_noise(loop, gd.d_z)
                                    : std::vector<double>{};
        loss += mle_loss(record_features(dataset.train, b.image_index[j]),
                         b.caption[j], gen, z,
                         1.0 / double(b.image_index.size()));
      }
      loss /= double(b.image_index.size());
      if (!std::isfinite(loss) || !gen.store.grads_finite()) {
        gen.store = last_good;  // keep the last finite step
        out.diverged = true;
        break;
      }
      gen.store.sgd_step(config.learning_rate);
      ++steps;
      last_good = gen.store;
      epoch_sum += loss;
    }
    if (!out.diverged) out.epoch_losses.push_back(epoch_sum / double(batches.size()));
  }

  out.checkpoint = make_snapshot(config, dataset, &gen, nullptr, loop, steps,
                                 0.0);
  return out;
}

PretrainResult pretrain_discriminator(const Dataset& dataset,
                                      const TrainerConfig& config,
                                      const GeneratorParams& frozen_gen) {
  config.validate();
  check_generator_matches(frozen_gen, dataset);
  DiscriminatorDims dd = discriminator_dims(dataset, config);
  SeededRng root(config.seed);
  SeededRng init_rng = root.fork(kStreamDiscInit);
  SeededRng loop = root.fork(kStreamDiscPretrain);

  DiscriminatorParams disc = make_discriminator(dd, init_rng, config.gamma);
  ParameterStore last_good = disc.store;
  PretrainResult out;
  std::uint64_t steps = 0;

  for (std::size_t epoch = 0;
       epoch < config.d_pretrain_epochs && !out.diverged; ++epoch) {
    auto batches = epoch_batches(dataset.train, config.batch_size, loop);
    if (batches.empty())
      throw DataError("training split smaller than one batch");
    double epoch_sum = 0.0;
    for (const Batch& b : batches) {
      PgBatch pg = to_pg_batch(dataset.train, b);
      auto generated = sample_generated(pg, frozen_gen, config.noise_on, loop);
      double loss;
      try {
        loss = discriminator_step(pg, generated, disc, config, loop);
      } catch (const NumericError&) {
        loss = std::nan("");
      }
      if (!std::isfinite(loss)) {
        disc.store = last_good;
        out.diverged = true;
        break;
      }
      ++steps;
      last_good = disc.store;
      epoch_sum += loss;
    }
    if (!out.diverged) out.epoch_losses.push_back(epoch_sum / double(batches.size()));
  }

  out.checkpoint = make_snapshot(config, dataset, &frozen_gen, &disc, loop,
                                 steps, 0.0);
  return out;
}

AdversarialResult adversarial_train(const Dataset& dataset,
                                    const Checkpoint& start,
                                    const TrainerConfig& config,
                                    const SnapshotSink& sink) {
  config.validate();
  if (!start.has_generator || !start.has_discriminator)
    throw CheckpointError(
        "pretraining required: adversarial training needs a checkpoint "
        "holding both generator and discriminator parameters");
  if (start.vocab_hash != dataset.vocab.hash())
    throw DataError("checkpoint vocabulary does not match the dataset");
  check_generator_matches(start.generator, dataset);

  GeneratorParams gen = start.generator;
  DiscriminatorParams disc = start.discriminator;
  // The softmax sharpness is a run setting, not a learned quantity; the
  // resolved config wins over whatever the checkpoint was trained with.
  disc.gamma = config.gamma;
  SeededRng rng = SeededRng(config.seed).fork(kStreamAdversarial);

  AdversarialResult res;
  double baseline = start.baseline;
  double last_reward = 0.0;
  double last_g_loss = 0.0;
  std::size_t consecutive_identical = 0;
  std::uint64_t last_emitted = ~std::uint64_t(0);

  auto emit = [&](double d_loss) {
    Checkpoint cp = make_snapshot(config, dataset, &gen, &disc, rng,
                                  res.d_steps, baseline);
    MetricsRow row{res.d_steps, last_reward, d_loss, last_g_loss};
    if (sink) sink(cp, row);
    last_emitted = res.d_steps;
  };

  double last_d_loss = 0.0;
  for (std::size_t epoch = 0; epoch < config.adversarial_epochs; ++epoch) {
    auto batches = epoch_batches(dataset.train, config.batch_size, rng);
    if (batches.empty())
      throw DataError("training split smaller than one batch");
    for (const Batch& b : batches) {
      PgBatch pg = to_pg_batch(dataset.train, b);

      auto generated = sample_generated(pg, gen, config.noise_on, rng);
      if (all_identical(generated)) {
        if (++consecutive_identical == 3) {
          ++res.collapse_warnings;
          consecutive_identical = 0;
        }
      } else {
        consecutive_identical = 0;
      }

      last_d_loss = discriminator_step(pg, generated, disc, config, rng);
      ++res.d_steps;

      if (res.d_steps % config.d_steps_per_g == 0) {
        PgStepResult g = generator_pg_step(pg, gen, disc, config, baseline,
                                           rng);
        ++res.g_steps;
        if (g.applied) {
          baseline = config.baseline_decay * baseline +
                     (1.0 - config.baseline_decay) * g.mean_q;
        } else {
          ++res.rejected_g_steps;
        }
        last_reward = g.mean_terminal_reward;
        last_g_loss = g.surrogate_loss;
      }

      res.history.push_back(
          {res.d_steps, last_reward, last_d_loss, last_g_loss});
      if (res.d_steps % config.checkpoint_interval == 0) emit(last_d_loss);
    }
  }
  if (last_emitted != res.d_steps) emit(last_d_loss);

  res.checkpoint = make_snapshot(config, dataset, &gen, &disc, rng,
                                 res.d_steps, baseline);
  return res;
}

SelectResult select_best_caption(const std::vector<double>& features,
                                 const GeneratorParams& gen,
                                 const DiscriminatorParams& disc,
                                 std::size_t n_samples, bool noise_on,
                                 SeededRng& rng) {
  if (n_samples < 1) throw DataError("n_samples must be >= 1");
  std::vector<Caption> samples;
  samples.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    std::vector<double> z =
        noise_on ? draw_noise(rng, gen.dims.d_z) : std::vector<double>{};
    samples.push_back(sample_from_prefix(features, z, {Vocabulary::kStart},
                                         gen, rng, 1.0));
  }
  if (n_samples == 1) return {samples[0], 0, 1.0};

  ComparisonSet set;
  set.image_features = features;
  for (const Caption& c : samples) set.members.push_back(c.tokens);
  set.candidate = 0;
  CrScore cr = cr_score(set, disc);

  std::size_t best = 0;
  for (std::size_t i = 1; i < cr.member_scores.size(); ++i)
    if (cr.member_scores[i] > cr.member_scores[best]) best = i;
  return {samples[best], best, cr.member_scores[best]};
}

}  // namespace calcap
