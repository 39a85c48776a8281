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

#include "calcap/nn.hpp"

#include <cmath>

#include "calcap/errors.hpp"

namespace calcap {

void affine_forward(const DenseArray& w, const DenseArray& b, const double* x,
                    std::vector<double>& out) {
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  out.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = b.data[i];
    const double* row = w.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
}

void lstm_forward(const LstmCell& cell, const double* x, std::vector<double>& h,
                  std::vector<double>& c) {
  const std::size_t d_h = h.size();
  const std::size_t d_in = cell.wx->cols();
  if (cell.wx->rows() != 4 * d_h || cell.wh->rows() != 4 * d_h ||
      cell.wh->cols() != d_h || cell.b->numel() != 4 * d_h)
    throw NumericError("lstm_forward: inconsistent cell shapes");

  std::vector<double> gates(4 * d_h);
  for (std::size_t i = 0; i < 4 * d_h; ++i) {
    double acc = cell.b->data[i];
    const double* wx_row = cell.wx->data.data() + i * d_in;
    for (std::size_t j = 0; j < d_in; ++j) acc += wx_row[j] * x[j];
    const double* wh_row = cell.wh->data.data() + i * d_h;
    for (std::size_t j = 0; j < d_h; ++j) acc += wh_row[j] * h[j];
    gates[i] = acc;
  }
  for (std::size_t k = 0; k < d_h; ++k) {
    double gi = 1.0 / (1.0 + std::exp(-gates[k]));
    double gf = 1.0 / (1.0 + std::exp(-gates[d_h + k]));
    double gg = std::tanh(gates[2 * d_h + k]);
    double go = 1.0 / (1.0 + std::exp(-gates[3 * d_h + k]));
    c[k] = gf * c[k] + gi * gg;
    h[k] = go * std::tanh(c[k]);
  }
}

TapeLstmState tape_lstm_step(Tape& tape, const TapeLstm& cell, NodeId x,
                             const TapeLstmState& state, std::size_t d_h) {
  NodeId pre = tape.add(tape.add(tape.matvec(cell.wx, x),
                                 tape.matvec(cell.wh, state.h)),
                        cell.b);
  NodeId gi = tape.sigmoid(tape.slice(pre, 0, d_h));
  NodeId gf = tape.sigmoid(tape.slice(pre, d_h, d_h));
  NodeId gg = tape.tanh(tape.slice(pre, 2 * d_h, d_h));
  NodeId go = tape.sigmoid(tape.slice(pre, 3 * d_h, d_h));
  NodeId c_next = tape.add(tape.mul(gf, state.c), tape.mul(gi, gg));
  NodeId h_next = tape.mul(go, tape.tanh(c_next));
  return {h_next, c_next};
}

std::unordered_map<std::string, NodeId> add_param_leaves(
    Tape& tape, const ParameterStore& store) {
  std::unordered_map<std::string, NodeId> out;
  for (const auto& e : store.entries()) out.emplace(e.name, tape.leaf(e.value));
  return out;
}

void accumulate_param_grads(
    const Tape& tape, const std::unordered_map<std::string, NodeId>& leaves,
    ParameterStore& store, double scale) {
  for (const auto& [name, id] : leaves) {
    const DenseArray& g = tape.grad(id);
    if (g.data.empty()) continue;  // no gradient path reached this leaf
    DenseArray& slot = store.grad(name);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      slot.data[i] += scale * g.data[i];
  }
}

}  // namespace calcap
