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

#include <string>
#include <unordered_map>
#include <vector>

#include "calcap/dense_array.hpp"
#include "calcap/parameter_store.hpp"
#include "calcap/tape.hpp"

namespace calcap {

// Shared recurrent-cell kernels. The decode paths run the raw versions
// (no gradients, no allocations beyond the state); the training paths
// build the same arithmetic on a Tape. Gate layout in the stacked
// weight matrices is [input; forget; candidate; output], each d_h rows.

struct LstmCell {
  const DenseArray* wx = nullptr;  // (4*d_h, d_in)
  const DenseArray* wh = nullptr;  // (4*d_h, d_h)
  const DenseArray* b = nullptr;   // (4*d_h)
};

// Advances h and c in place given the input activation x (length d_in).
void lstm_forward(const LstmCell& cell, const double* x, std::vector<double>& h,
                  std::vector<double>& c);

// y = W x + b into out (resized).
void affine_forward(const DenseArray& w, const DenseArray& b,
                    const double* x, std::vector<double>& out);

struct TapeLstm {
  NodeId wx = 0;
  NodeId wh = 0;
  NodeId b = 0;
};

struct TapeLstmState {
  NodeId h = 0;
  NodeId c = 0;
};

TapeLstmState tape_lstm_step(Tape& tape, const TapeLstm& cell, NodeId x,
                             const TapeLstmState& state, std::size_t d_h);

// One tape leaf per parameter entry, keyed by name.
std::unordered_map<std::string, NodeId> add_param_leaves(
    Tape& tape, const ParameterStore& store);

// Adds the tape gradients of the given leaves into the store's gradient
// slots, scaled by `scale`. Leaves the tape untouched.
void accumulate_param_grads(
    const Tape& tape, const std::unordered_map<std::string, NodeId>& leaves,
    ParameterStore& store, double scale = 1.0);

}  // namespace calcap
