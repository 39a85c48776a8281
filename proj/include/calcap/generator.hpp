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
#include <utility>
#include <vector>

#include "calcap/corpus.hpp"
#include "calcap/parameter_store.hpp"
#include "calcap/rng.hpp"

namespace calcap {

struct GeneratorDims {
  std::size_t vocab = 56;
  std::size_t d_img = 16;
  std::size_t d_z = 8;
  std::size_t d_e = 32;
  std::size_t d_h = 32;
  std::size_t t_max = 12;
};

// Image encoder + noise concatenation + LSTM-style decoder over the
// vocabulary. Parameter entries (canonical order):
//   init.w (2*d_h, d_img+d_z), init.b, embed (|V|, d_e),
//   cell.wx (4*d_h, d_e), cell.wh (4*d_h, d_h), cell.b,
//   out.w (|V|, d_h), out.b (|V|)
struct GeneratorParams {
  GeneratorDims dims;
  ParameterStore store;
};

GeneratorParams make_generator(const GeneratorDims& dims, SeededRng& rng,
                               double init_range = 0.08);

struct DecoderState {
  std::vector<double> h;
  std::vector<double> c;
  std::size_t t = 0;  // tokens emitted so far (content or END)
};

// A decoded caption: [START, content..., END] once completed. Content
// length never exceeds t_max; END appears at most once, at the end.
struct Caption {
  std::vector<int> tokens{Vocabulary::kStart};
  bool completed = false;

  std::size_t content_length() const {
    return tokens.size() - 1 - (completed ? 1 : 0);
  }
};

// Uniform on [-1, 1]^d_z; one rng draw per dimension.
std::vector<double> draw_noise(SeededRng& rng, std::size_t d_z);

// An empty noise vector means noise-off (zeros).
DecoderState init_state(const std::vector<double>& features,
                        const std::vector<double>& noise,
                        const GeneratorParams& params);

// Feeds one token, returns the next-word distribution (PAD and START
// masked to probability 0) and the advanced state. Rejected once the
// state has already emitted t_max tokens.
std::pair<std::vector<double>, DecoderState> decoder_step(
    const DecoderState& state, int token, const GeneratorParams& params);

// Samples until END or t_max tokens; an END is forced at the cap so
// every returned caption is completed. `prefix` must start with START
// and may already contain sampled tokens (used by rollouts).
Caption sample_from_prefix(const std::vector<double>& features,
                           const std::vector<double>& noise,
                           const std::vector<int>& prefix,
                           const GeneratorParams& params, SeededRng& rng,
                           double temperature = 1.0);

Caption sample_caption(const std::vector<double>& features,
                       const GeneratorParams& params, SeededRng& rng,
                       bool noise_on, double temperature = 1.0);

// Argmax decoding; ties break toward the lowest token id.
Caption greedy_decode(const std::vector<double>& features,
                      const GeneratorParams& params,
                      const std::vector<double>& noise = {});

struct BeamResult {
  Caption caption;
  double score = 0.0;  // mean log-probability of the chosen tokens
};

// Length-normalized beam search; ties break by hypothesis creation
// order, so width 1 reproduces greedy_decode.
BeamResult beam_decode(const std::vector<double>& features,
                       const GeneratorParams& params, std::size_t width,
                       const std::vector<double>& noise = {});

// Number of sampled decisions behind a completed caption: one per
// content token, plus the END when it was chosen rather than forced at
// the cap.
std::size_t scored_steps(const Caption& caption, std::size_t t_max);

// Forward-only log pi(token_t | prefix) for each scored step of a
// completed caption.
std::vector<double> caption_logprobs(const std::vector<double>& features,
                                     const std::vector<double>& noise,
                                     const Caption& caption,
                                     const GeneratorParams& params);

// Per-token negative log-likelihood of a reference caption
// ([START, ..., END]); PAD targets are skipped. Gradients of
// grad_scale * loss are added into the store's gradient slots.
double mle_loss(const std::vector<double>& features,
                const std::vector<int>& reference, GeneratorParams& params,
                const std::vector<double>& noise = {},
                double grad_scale = 1.0);

// Log-probabilities log pi(token_t | prefix) for every sampled token of
// a completed caption, with d(sum_t weight_t * log pi_t)/d(theta) added
// into the gradient slots. The forced END at the cap carries no
// probability and must not appear in `caption` weights. Returns the
// per-token log-probabilities.
std::vector<double> caption_logprob_backward(
    const std::vector<double>& features, const std::vector<double>& noise,
    const Caption& caption, const std::vector<double>& token_weights,
    GeneratorParams& params, double grad_scale = 1.0);

}  // namespace calcap
