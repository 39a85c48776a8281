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

#include "calcap/discriminator.hpp"

#include <cmath>

#include "calcap/errors.hpp"
#include "calcap/nn.hpp"
#include "calcap/numeric.hpp"
#include "calcap/tape.hpp"

namespace calcap {

namespace {

// Tokens the encoder consumes: everything after START through END.
std::vector<int> encoder_tokens(const std::vector<int>& caption,
                                std::size_t vocab) {
  std::vector<int> seq;
  for (int tok : caption)
    if (tok != Vocabulary::kPad) seq.push_back(tok);
  if (seq.size() < 2 || seq.front() != Vocabulary::kStart ||
      seq.back() != Vocabulary::kEnd)
    throw DataError("caption must be [START, ..., END(, PAD...)]");
  for (std::size_t i = 1; i + 1 < seq.size(); ++i)
    if (seq[i] == Vocabulary::kStart || seq[i] == Vocabulary::kEnd)
      throw DataError("caption has interior START or END");
  for (int tok : seq)
    if (tok < 0 || std::size_t(tok) >= vocab)
      throw DataError("token id out of range: " + std::to_string(tok));
  return {seq.begin() + 1, seq.end()};
}

void check_features(const std::vector<double>& features,
                    const DiscriminatorDims& dims) {
  if (features.size() != dims.d_img)
    throw DataError("feature dimension mismatch: got " +
                    std::to_string(features.size()) + ", want " +
                    std::to_string(dims.d_img));
}

}  // namespace

DiscriminatorParams make_discriminator(const DiscriminatorDims& dims,
                                       SeededRng& rng, double gamma,
                                       double init_range) {
  if (dims.vocab < 5 || dims.d_emb == 0 || dims.d_e == 0)
    throw DataError("degenerate discriminator dimensions");
  if (gamma < 0 || !std::isfinite(gamma))
    throw DataError("gamma must be finite and nonnegative");
  DiscriminatorParams p;
  p.dims = dims;
  p.gamma = gamma;
  p.store.create("img.w", {dims.d_emb, dims.d_img});
  p.store.create("img.b", {dims.d_emb});
  p.store.create("embed", {dims.vocab, dims.d_e});
  p.store.create("enc.wx", {4 * dims.d_emb, dims.d_e});
  p.store.create("enc.wh", {4 * dims.d_emb, dims.d_emb});
  p.store.create("enc.b", {4 * dims.d_emb});
  p.store.init_uniform(rng, init_range);
  return p;
}

std::vector<double> embed_caption(const std::vector<int>& caption,
                                  const DiscriminatorParams& params) {
  std::vector<int> seq = encoder_tokens(caption, params.dims.vocab);
  LstmCell cell{&params.store["enc.wx"], &params.store["enc.wh"],
                &params.store["enc.b"]};
  const DenseArray& embed = params.store["embed"];
  std::vector<double> h(params.dims.d_emb, 0.0);
  std::vector<double> c(params.dims.d_emb, 0.0);
  for (int tok : seq) {
    const double* x = embed.data.data() + std::size_t(tok) * params.dims.d_e;
    lstm_forward(cell, x, h, c);
  }
  return h;
}

std::vector<double> embed_image(const std::vector<double>& features,
                                const DiscriminatorParams& params) {
  check_features(features, params.dims);
  std::vector<double> out;
  affine_forward(params.store["img.w"], params.store["img.b"], features.data(),
                 out);
  for (double& v : out) v = std::tanh(v);
  return out;
}

std::vector<double> cr_from_similarities(std::span<const double> similarities,
                                         double gamma) {
  if (similarities.size() < 2)
    throw DataError("comparison needs at least two members");
  std::vector<double> scaled(similarities.begin(), similarities.end());
  for (double& s : scaled) s *= gamma;
  return softmax(scaled);
}

CrScore cr_score(const ComparisonSet& set, const DiscriminatorParams& params) {
  if (set.members.size() < 2)
    throw DataError("comparison set needs at least two members");
  if (set.candidate >= set.members.size())
    throw DataError("candidate index out of range");

  std::vector<double> f = embed_image(set.image_features, params);
  CrScore out;
  out.similarities.reserve(set.members.size());
  for (const auto& member : set.members) {
    std::vector<double> e = embed_caption(member, params);
    out.similarities.push_back(cosine_similarity(e, f));
  }
  out.member_scores = cr_from_similarities(out.similarities, params.gamma);
  out.value = out.member_scores[set.candidate];
  return out;
}

double binary_score(const std::vector<int>& caption,
                    const std::vector<double>& features,
                    const DiscriminatorParams& params) {
  std::vector<double> e = embed_caption(caption, params);
  std::vector<double> f = embed_image(features, params);
  double dot = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) dot += e[i] * f[i];
  return 1.0 / (1.0 + std::exp(-dot));
}

namespace {

// Tape-side mirror of embed_caption.
NodeId tape_embed_caption(Tape& t, const std::vector<int>& caption,
                          const DiscriminatorParams& params,
                          const std::unordered_map<std::string, NodeId>& leaves,
                          NodeId zero_state) {
  std::vector<int> seq = encoder_tokens(caption, params.dims.vocab);
  TapeLstm cell{leaves.at("enc.wx"), leaves.at("enc.wh"), leaves.at("enc.b")};
  TapeLstmState state{zero_state, zero_state};
  for (int tok : seq) {
    NodeId x = t.embed_row(leaves.at("embed"), std::size_t(tok));
    state = tape_lstm_step(t, cell, x, state, params.dims.d_emb);
  }
  return state.h;
}

NodeId tape_embed_image(Tape& t, const std::vector<double>& features,
                        const DiscriminatorParams& params,
                        const std::unordered_map<std::string, NodeId>& leaves) {
  check_features(features, params.dims);
  NodeId f = t.leaf(DenseArray::vector(features));
  return t.tanh(t.add(t.matvec(leaves.at("img.w"), f), leaves.at("img.b")));
}

}  // namespace

DiscLossResult discriminator_loss_cal(const CalBatch& batch,
                                      DiscriminatorParams& params,
                                      double grad_scale) {
  const std::size_t b = batch.features.size();
  if (b == 0) throw DataError("empty batch");
  if (batch.human.size() != b || batch.generated.size() != b)
    throw DataError("batch arrays must have equal length");

  Tape t;
  auto leaves = add_param_leaves(t, params.store);
  NodeId zero_state =
      t.leaf(DenseArray::zeros({params.dims.d_emb}));

  std::vector<NodeId> human_emb(b), gen_emb(b), img_emb(b);
  for (std::size_t i = 0; i < b; ++i) {
    human_emb[i] = tape_embed_caption(t, batch.human[i], params, leaves,
                                      zero_state);
    gen_emb[i] = tape_embed_caption(t, batch.generated[i], params, leaves,
                                    zero_state);
    img_emb[i] = tape_embed_image(t, batch.features[i], params, leaves);
  }

  DiscLossResult out;
  std::vector<NodeId> terms;
  for (std::size_t i = 0; i < b; ++i) {
    // Member order: the batch's human captions, then generated[i].
    std::vector<NodeId> sims;
    sims.reserve(b + 1);
    for (std::size_t j = 0; j < b; ++j)
      sims.push_back(t.cosine(human_emb[j], img_emb[i]));
    sims.push_back(t.cosine(gen_emb[i], img_emb[i]));

    NodeId scores = t.softmax(t.scale(t.stack(sims), params.gamma));
    NodeId d_h = t.pick(scores, i);
    NodeId d_g = t.pick(scores, b);

    bool clamped = false;
    NodeId d_g_safe = t.clamp_max(d_g, 1.0 - 1e-12, &clamped);
    out.clamp_events += clamped;
    terms.push_back(t.log(d_h));
    terms.push_back(t.log(t.add_const(t.scale(d_g_safe, -1.0), 1.0)));
  }

  std::vector<double> weights(terms.size(), -1.0 / double(b));
  NodeId loss = t.weighted_sum(terms, weights);
  t.backward(loss);
  accumulate_param_grads(t, leaves, params.store, grad_scale);
  out.loss = t.value(loss).data[0];
  return out;
}

DiscLossResult discriminator_loss_binary(const std::vector<BinaryExample>& batch,
                                         bool with_regularization,
                                         DiscriminatorParams& params,
                                         double grad_scale) {
  if (batch.empty()) throw DataError("empty batch");

  Tape t;
  auto leaves = add_param_leaves(t, params.store);
  NodeId zero_state = t.leaf(DenseArray::zeros({params.dims.d_emb}));

  std::vector<NodeId> terms;
  for (const BinaryExample& ex : batch) {
    NodeId f = tape_embed_image(t, ex.features, params, leaves);
    NodeId dot_h =
        t.dot(tape_embed_caption(t, ex.human, params, leaves, zero_state), f);
    NodeId dot_g = t.dot(
        tape_embed_caption(t, ex.generated, params, leaves, zero_state), f);
    // log D = log_sigmoid(dot); log(1-D) = log_sigmoid(-dot).
    terms.push_back(t.log_sigmoid(dot_h));
    terms.push_back(t.log_sigmoid(t.scale(dot_g, -1.0)));
    if (with_regularization) {
      NodeId dot_u = t.dot(
          tape_embed_caption(t, ex.unrelated, params, leaves, zero_state), f);
      terms.push_back(t.log_sigmoid(t.scale(dot_u, -1.0)));
    }
  }

  std::vector<double> weights(terms.size(), -1.0 / double(batch.size()));
  NodeId loss = t.weighted_sum(terms, weights);
  t.backward(loss);
  accumulate_param_grads(t, leaves, params.store, grad_scale);

  DiscLossResult out;
  out.loss = t.value(loss).data[0];
  return out;
}

}  // namespace calcap
