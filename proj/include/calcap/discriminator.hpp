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

#include <span>
#include <vector>

#include "calcap/corpus.hpp"
#include "calcap/parameter_store.hpp"
#include "calcap/rng.hpp"

namespace calcap {

struct DiscriminatorDims {
  std::size_t vocab = 56;
  std::size_t d_img = 16;
  std::size_t d_e = 32;
  std::size_t d_emb = 32;
};

// Image projection + recurrent text encoder shared by both scoring
// designs: the comparative scorer (softmax over gamma-scaled cosine
// similarities within a caption set) and the binary scorer
// (sigmoid of the image-text dot product). gamma is configuration,
// not a trained value. Parameter entries (canonical order):
//   img.w (d_emb, d_img), img.b, embed (|V|, d_e),
//   enc.wx (4*d_emb, d_e), enc.wh (4*d_emb, d_emb), enc.b
struct DiscriminatorParams {
  DiscriminatorDims dims;
  double gamma = 10.0;
  ParameterStore store;
};

DiscriminatorParams make_discriminator(const DiscriminatorDims& dims,
                                       SeededRng& rng, double gamma = 10.0,
                                       double init_range = 0.08);

// Final hidden state of the encoder run over the caption's tokens after
// START through END (inclusive); PAD is never processed.
std::vector<double> embed_caption(const std::vector<int>& caption,
                                  const DiscriminatorParams& params);

// tanh(W f + b).
std::vector<double> embed_image(const std::vector<double>& features,
                                const DiscriminatorParams& params);

// A candidate caption judged against the other members of its set.
// Members always include the candidate itself.
struct ComparisonSet {
  std::vector<double> image_features;
  std::vector<std::vector<int>> members;
  std::size_t candidate = 0;
};

struct CrScore {
  double value = 0.0;                  // member_scores[candidate]
  std::vector<double> member_scores;   // sums to 1 within 1e-12
  std::vector<double> similarities;    // cosine(e_member, f_image)
};

// softmax(gamma * similarities); gamma = 0 gives the uniform score.
std::vector<double> cr_from_similarities(std::span<const double> similarities,
                                         double gamma);

CrScore cr_score(const ComparisonSet& set, const DiscriminatorParams& params);

double binary_score(const std::vector<int>& caption,
                    const std::vector<double>& features,
                    const DiscriminatorParams& params);

// One batch for the comparative objective. For image i the comparison
// set is {all human captions of the batch, generated[i]}: its own human
// caption, its generated caption, and the other images' human captions
// as the unrelated ones. Both loss terms for a pair read the same
// softmax, once at the human's index and once at the generated one's.
struct CalBatch {
  std::vector<std::vector<double>> features;
  std::vector<std::vector<int>> human;
  std::vector<std::vector<int>> generated;
};

struct DiscLossResult {
  double loss = 0.0;
  std::size_t clamp_events = 0;  // times a (1-D) term needed clamping
};

// loss = -mean_i[ log D(h_i | C_i) + log(1 - D(g_i | C_i)) ].
// A D(g) of exactly 1 is clamped to 1 - 1e-12 and counted. Gradients of
// grad_scale * loss are added into the store's slots.
DiscLossResult discriminator_loss_cal(const CalBatch& batch,
                                      DiscriminatorParams& params,
                                      double grad_scale = 1.0);

// One image's triple for the binary objective; `unrelated` is drawn by
// the caller from the in-batch mismatched captions.
struct BinaryExample {
  std::vector<double> features;
  std::vector<int> human;
  std::vector<int> generated;
  std::vector<int> unrelated;
};

// loss = -mean_i[ log D(h_i) + log(1-D(g_i)) + flag * log(1-D(u_i)) ]
// with D = binary_score; the log terms are computed in a saturation-
// safe form so no clamping is ever required.
DiscLossResult discriminator_loss_binary(const std::vector<BinaryExample>& batch,
                                         bool with_regularization,
                                         DiscriminatorParams& params,
                                         double grad_scale = 1.0);

}  // namespace calcap
