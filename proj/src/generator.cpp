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

#include "calcap/generator.hpp"

#include <algorithm>
#include <cmath>

#include "calcap/errors.hpp"
#include "calcap/nn.hpp"
#include "calcap/numeric.hpp"
#include "calcap/tape.hpp"

namespace calcap {

namespace {

constexpr std::size_t kMaskedIds[] = {std::size_t(Vocabulary::kStart),
                                      std::size_t(Vocabulary::kPad)};

void check_features(const std::vector<double>& features,
                    const GeneratorDims& dims) {
  if (features.size() != dims.d_img)
    throw DataError("feature dimension mismatch: got " +
                    std::to_string(features.size()) + ", want " +
                    std::to_string(dims.d_img));
}

std::vector<double> resolve_noise(const std::vector<double>& noise,
                                  const GeneratorDims& dims) {
  if (noise.empty()) return std::vector<double>(dims.d_z, 0.0);
  if (noise.size() != dims.d_z)
    throw DataError("noise dimension mismatch: got " +
                    std::to_string(noise.size()) + ", want " +
                    std::to_string(dims.d_z));
  return noise;
}

LstmCell cell_of(const GeneratorParams& p) {
  return {&p.store["cell.wx"], &p.store["cell.wh"], &p.store["cell.b"]};
}

// Advances the recurrent state by one fed token without touching the
// output projection; rollouts feed long prefixes this way.
void advance_raw(DecoderState& state, int token, const GeneratorParams& p) {
  const auto& embed = p.store["embed"];
  if (token < 0 || std::size_t(token) >= p.dims.vocab)
    throw DataError("token id out of range: " + std::to_string(token));
  const double* x = embed.data.data() + std::size_t(token) * p.dims.d_e;
  lstm_forward(cell_of(p), x, state.h, state.c);
  ++state.t;
}

// Next-token distribution after feeding `token`, with the logits
// divided by `temperature` before masking and normalization.
std::vector<double> step_probs(DecoderState& state, int token,
                               const GeneratorParams& p, double temperature) {
  advance_raw(state, token, p);
  std::vector<double> logits;
  affine_forward(p.store["out.w"], p.store["out.b"], state.h.data(), logits);
  if (temperature != 1.0)
    for (double& v : logits) v /= temperature;
  for (std::size_t id : kMaskedIds) logits[id] = -1e30;
  std::vector<double> probs;
  softmax_into(logits, probs);
  return probs;
}

}  // namespace

std::size_t scored_steps(const Caption& caption, std::size_t t_max) {
  std::size_t content = caption.content_length();
  return content == t_max ? content : content + 1;
}

GeneratorParams make_generator(const GeneratorDims& dims, SeededRng& rng,
                               double init_range) {
  if (dims.vocab < 5 || dims.d_h == 0 || dims.d_e == 0 || dims.t_max == 0)
    throw DataError("degenerate generator dimensions");
  GeneratorParams p;
  p.dims = dims;
  p.store.create("init.w", {2 * dims.d_h, dims.d_img + dims.d_z});
  p.store.create("init.b", {2 * dims.d_h});
  p.store.create("embed", {dims.vocab, dims.d_e});
  p.store.create("cell.wx", {4 * dims.d_h, dims.d_e});
  p.store.create("cell.wh", {4 * dims.d_h, dims.d_h});
  p.store.create("cell.b", {4 * dims.d_h});
  p.store.create("out.w", {dims.vocab, dims.d_h});
  p.store.create("out.b", {dims.vocab});
  p.store.init_uniform(rng, init_range);
  return p;
}

std::vector<double> draw_noise(SeededRng& rng, std::size_t d_z) {
  std::vector<double> z(d_z);
  for (double& v : z) v = rng.uniform(-1.0, 1.0);
  return z;
}

DecoderState init_state(const std::vector<double>& features,
                        const std::vector<double>& noise,
                        const GeneratorParams& params) {
  check_features(features, params.dims);
  std::vector<double> z = resolve_noise(noise, params.dims);
  std::vector<double> u = features;
  u.insert(u.end(), z.begin(), z.end());

  std::vector<double> v;
  affine_forward(params.store["init.w"], params.store["init.b"], u.data(), v);
  DecoderState state;
  state.h.resize(params.dims.d_h);
  state.c.resize(params.dims.d_h);
  for (std::size_t i = 0; i < params.dims.d_h; ++i) {
    state.h[i] = std::tanh(v[i]);
    state.c[i] = std::tanh(v[params.dims.d_h + i]);
  }
  return state;
}

std::pair<std::vector<double>, DecoderState> decoder_step(
    const DecoderState& state, int token, const GeneratorParams& params) {
  if (state.t >= params.dims.t_max)
    throw DataError("decoder_step past t_max (" +
                    std::to_string(params.dims.t_max) + " tokens emitted)");
  DecoderState next = state;
  auto probs = step_probs(next, token, params, 1.0);
  return {std::move(probs), std::move(next)};
}

Caption sample_from_prefix(const std::vector<double>& features,
                           const std::vector<double>& noise,
                           const std::vector<int>& prefix,
                           const GeneratorParams& params, SeededRng& rng,
                           double temperature) {
  if (temperature <= 0) throw DataError("temperature must be > 0");
  if (prefix.empty() || prefix.front() != Vocabulary::kStart)
    throw DataError("prefix must begin with START");

  Caption out;
  out.tokens = prefix;
  auto end_at = std::find(prefix.begin(), prefix.end(), Vocabulary::kEnd);
  if (end_at != prefix.end()) {
    if (end_at + 1 != prefix.end())
      throw DataError("prefix has tokens after END");
    out.completed = true;
    return out;  // already a finished caption
  }
  if (prefix.size() - 1 > params.dims.t_max)
    throw DataError("prefix longer than t_max");

  DecoderState state = init_state(features, noise, params);
  for (std::size_t i = 1; i < prefix.size(); ++i)
    advance_raw(state, prefix[i], params);

  while (state.t < params.dims.t_max) {
    auto probs = step_probs(state, out.tokens.back(), params, temperature);
    int tok = int(sample_categorical(probs, rng));
    out.tokens.push_back(tok);
    if (tok == Vocabulary::kEnd) {
      out.completed = true;
      return out;
    }
  }
  out.tokens.push_back(Vocabulary::kEnd);  // cap reached: forced END
  out.completed = true;
  return out;
}

Caption sample_caption(const std::vector<double>& features,
                       const GeneratorParams& params, SeededRng& rng,
                       bool noise_on, double temperature) {
  std::vector<double> z =
      noise_on ? draw_noise(rng, params.dims.d_z) : std::vector<double>{};
  return sample_from_prefix(features, z, {Vocabulary::kStart}, params, rng,
                            temperature);
}

Caption greedy_decode(const std::vector<double>& features,
                      const GeneratorParams& params,
                      const std::vector<double>& noise) {
  Caption out;
  DecoderState state = init_state(features, noise, params);
  while (state.t < params.dims.t_max) {
    auto probs = step_probs(state, out.tokens.back(), params, 1.0);
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[best]) best = i;
    out.tokens.push_back(int(best));
    if (int(best) == Vocabulary::kEnd) {
      out.completed = true;
      return out;
    }
  }
  out.tokens.push_back(Vocabulary::kEnd);
  out.completed = true;
  return out;
}

BeamResult beam_decode(const std::vector<double>& features,
                       const GeneratorParams& params, std::size_t width,
                       const std::vector<double>& noise) {
  if (width < 1) throw DataError("beam width must be >= 1");

  struct Hyp {
    std::vector<int> tokens;
    double sum_logp = 0.0;
    std::size_t n_steps = 0;
    DecoderState state;
    std::size_t id = 0;

    double mean() const {
      return n_steps == 0 ? 0.0 : sum_logp / double(n_steps);
    }
  };

  std::size_t next_id = 0;
  Hyp root;
  root.tokens = {Vocabulary::kStart};
  root.state = init_state(features, noise, params);
  root.id = next_id++;

  std::vector<Hyp> active{std::move(root)};
  std::vector<Hyp> done;

  while (!active.empty()) {
    std::vector<Hyp> candidates;
    for (Hyp& hyp : active) {
      DecoderState stepped = hyp.state;
      auto probs = step_probs(stepped, hyp.tokens.back(), params, 1.0);
      for (std::size_t tok = 0; tok < probs.size(); ++tok) {
        if (probs[tok] <= 0.0) continue;
        Hyp cand;
        cand.tokens = hyp.tokens;
        cand.tokens.push_back(int(tok));
        cand.sum_logp = hyp.sum_logp + std::log(probs[tok]);
        cand.n_steps = hyp.n_steps + 1;
        cand.state = stepped;
        cand.id = next_id++;
        candidates.push_back(std::move(cand));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Hyp& a, const Hyp& b) {
                       return a.mean() > b.mean();
                     });
    if (candidates.size() > width) candidates.resize(width);

    active.clear();
    for (Hyp& cand : candidates) {
      if (cand.tokens.back() == Vocabulary::kEnd) {
        done.push_back(std::move(cand));
      } else if (cand.state.t >= params.dims.t_max) {
        cand.tokens.push_back(Vocabulary::kEnd);  // forced, not scored
        done.push_back(std::move(cand));
      } else {
        active.push_back(std::move(cand));
      }
    }
  }

  const Hyp* best = &done.front();
  for (const Hyp& h : done)
    if (h.mean() > best->mean()) best = &h;  // ties keep the earliest id

  BeamResult out;
  out.caption.tokens = best->tokens;
  out.caption.completed = true;
  out.score = best->mean();
  return out;
}

namespace {

// Shared tape construction for teacher-forced scoring: feeds `fed`
// tokens one at a time and picks the log-probability of each target.
struct ScoredGraph {
  Tape tape;
  std::unordered_map<std::string, NodeId> leaves;
  std::vector<NodeId> logp_nodes;
};

void build_scored_graph(ScoredGraph& g, const std::vector<double>& features,
                        const std::vector<double>& noise,
                        const std::vector<int>& tokens, std::size_t n_scored,
                        const GeneratorParams& params) {
  check_features(features, params.dims);
  const GeneratorDims& d = params.dims;
  std::vector<double> z = resolve_noise(noise, d);

  g.leaves = add_param_leaves(g.tape, params.store);
  Tape& t = g.tape;

  NodeId feat = t.leaf(DenseArray::vector(features));
  NodeId zn = t.leaf(DenseArray::vector(z));
  NodeId u = t.concat(feat, zn);
  NodeId v = t.add(t.matvec(g.leaves.at("init.w"), u), g.leaves.at("init.b"));
  TapeLstmState state;
  state.h = t.tanh(t.slice(v, 0, d.d_h));
  state.c = t.tanh(t.slice(v, d.d_h, d.d_h));

  TapeLstm cell{g.leaves.at("cell.wx"), g.leaves.at("cell.wh"),
                g.leaves.at("cell.b")};
  std::vector<std::size_t> mask(std::begin(kMaskedIds), std::end(kMaskedIds));

  for (std::size_t i = 0; i < n_scored; ++i) {
    int fed = tokens[i];
    int target = tokens[i + 1];
    NodeId x = t.embed_row(g.leaves.at("embed"), std::size_t(fed));
    state = tape_lstm_step(t, cell, x, state, d.d_h);
    NodeId logits =
        t.add(t.matvec(g.leaves.at("out.w"), state.h), g.leaves.at("out.b"));
    NodeId logp = t.log_softmax(t.mask_fill(logits, mask));
    g.logp_nodes.push_back(t.pick(logp, std::size_t(target)));
  }
}

}  // namespace

std::vector<double> caption_logprobs(const std::vector<double>& features,
                                     const std::vector<double>& noise,
                                     const Caption& caption,
                                     const GeneratorParams& params) {
  if (!caption.completed) throw DataError("caption must be completed");
  std::size_t n = scored_steps(caption, params.dims.t_max);
  DecoderState state = init_state(features, noise, params);
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto probs = step_probs(state, caption.tokens[i], params, 1.0);
    out.push_back(std::log(probs[std::size_t(caption.tokens[i + 1])]));
  }
  return out;
}

double mle_loss(const std::vector<double>& features,
                const std::vector<int>& reference, GeneratorParams& params,
                const std::vector<double>& noise, double grad_scale) {
  // PAD appears only after END in a valid reference; strip it and
  // teacher-force the rest. Positions past the step cap are skipped
  // (generation would force END there without a prediction).
  std::vector<int> seq;
  for (int tok : reference)
    if (tok != Vocabulary::kPad) seq.push_back(tok);
  if (seq.size() < 2 || seq.front() != Vocabulary::kStart ||
      seq.back() != Vocabulary::kEnd)
    throw DataError("reference must be [START, ..., END(, PAD...)]");
  for (std::size_t i = 1; i + 1 < seq.size(); ++i)
    if (seq[i] == Vocabulary::kEnd || seq[i] == Vocabulary::kStart)
      throw DataError("reference has interior START or END");

  std::size_t n_scored = std::min(seq.size() - 1, params.dims.t_max);

  ScoredGraph g;
  build_scored_graph(g, features, noise, seq, n_scored, params);

  std::vector<double> weights(g.logp_nodes.size(),
                              -1.0 / double(g.logp_nodes.size()));
  NodeId loss = g.tape.weighted_sum(g.logp_nodes, weights);
  g.tape.backward(loss);
  accumulate_param_grads(g.tape, g.leaves, params.store, grad_scale);
  return g.tape.value(loss).data[0];
}

std::vector<double> caption_logprob_backward(
    const std::vector<double>& features, const std::vector<double>& noise,
    const Caption& caption, const std::vector<double>& token_weights,
    GeneratorParams& params, double grad_scale) {
  if (!caption.completed) throw DataError("caption must be completed");
  std::size_t n = scored_steps(caption, params.dims.t_max);
  if (token_weights.size() != n)
    throw DataError("token weight count mismatch: got " +
                    std::to_string(token_weights.size()) + ", want " +
                    std::to_string(n));

  ScoredGraph g;
  build_scored_graph(g, features, noise, caption.tokens, n, params);
  NodeId objective = g.tape.weighted_sum(g.logp_nodes, token_weights);
  g.tape.backward(objective);
  accumulate_param_grads(g.tape, g.leaves, params.store, grad_scale);

  std::vector<double> out;
  out.reserve(n);
  for (NodeId id : g.logp_nodes) out.push_back(g.tape.value(id).data[0]);
  return out;
}

}  // namespace calcap
