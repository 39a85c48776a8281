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
#include <span>
#include <vector>

#include "calcap/dense_array.hpp"

namespace calcap {

using NodeId = std::uint32_t;

/// Reverse-mode automatic differentiation over a per-step computation
/// graph of DenseArray-valued nodes. Forward values are computed
/// eagerly at construction; backward() sweeps the nodes once in
/// reverse creation order (a valid reverse topological order, since an
/// op can only consume already-created nodes). Gradient accumulators
/// start at zero and leaves keep their accumulated gradients until the
/// tape is reset.
class Tape {
 public:
  /// Gradient-tracked input (parameter or data; unused gradients are
  /// simply never read).
  NodeId leaf(const DenseArray& value);
  NodeId leaf(DenseArray&& value);

  // Elementwise and linear ops. `matvec` takes W of shape (m,n) and x
  // of shape (n) and yields shape (m).
  NodeId matvec(NodeId w, NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId sigmoid(NodeId x);
  /// log(sigmoid(x)) computed stably; never -inf for finite input.
  NodeId log_sigmoid(NodeId x);
  NodeId tanh(NodeId x);
  NodeId log(NodeId x);
  NodeId scale(NodeId x, double c);
  NodeId add_const(NodeId x, double c);
  /// min(x, hi) elementwise; gradient is blocked where the clamp is
  /// active. `clamped` (optional) reports whether any entry clamped.
  NodeId clamp_max(NodeId x, double hi, bool* clamped = nullptr);

  // Structural ops.
  NodeId slice(NodeId x, std::size_t begin, std::size_t len);
  NodeId concat(NodeId a, NodeId b);
  /// Row `row` of a (rows, cols) matrix as a vector of length cols.
  NodeId embed_row(NodeId table, std::size_t row);
  /// Gathers scalar nodes into one vector node.
  NodeId stack(std::span<const NodeId> scalars);
  NodeId pick(NodeId x, std::size_t index);

  // Reductions and fused ops.
  NodeId dot(NodeId a, NodeId b);
  /// Cosine similarity of two equal-length vectors; zero-norm input
  /// yields value 0 with zero gradient and bumps zero_norm_events().
  NodeId cosine(NodeId a, NodeId b);
  NodeId softmax(NodeId x);
  NodeId log_softmax(NodeId x);
  /// Entries listed in `masked_ids` are driven to -1e30 before any
  /// softmax; their gradient is dropped.
  NodeId mask_fill(NodeId logits, std::span<const std::size_t> masked_ids);
  /// sum_i weights[i] * scalars[i]; the weights are constants.
  NodeId weighted_sum(std::span<const NodeId> scalars,
                      std::span<const double> weights);

  const DenseArray& value(NodeId id) const { return nodes_[id].value; }
  const DenseArray& grad(NodeId id) const { return nodes_[id].grad; }

  /// Seeds the (scalar) root with gradient 1 and back-propagates.
  void backward(NodeId root);

  void reset();
  std::size_t size() const { return nodes_.size(); }
  std::size_t zero_norm_events() const { return zero_norm_events_; }

 private:
  enum class Op : std::uint8_t {
    kLeaf, kMatVec, kAdd, kMul, kSigmoid, kLogSigmoid, kTanh, kLog, kScale, kAddConst,
    kClampMax, kSlice, kConcat, kEmbedRow, kStack, kPick, kDot, kCosine,
    kSoftmax, kLogSoftmax, kMaskFill, kWeightedSum,
  };

  struct Node {
    Op op;
    NodeId in0 = 0;
    NodeId in1 = 0;
    std::size_t i0 = 0;  // slice begin / row / pick index
    double c0 = 0.0;     // scale factor / added constant / clamp bound
    std::vector<NodeId> inputs;     // kStack, kWeightedSum
    std::vector<double> constants;  // kWeightedSum weights
    std::vector<std::size_t> mask;  // kMaskFill
    DenseArray value;
    DenseArray grad;
  };

  NodeId push(Node&& n);
  const DenseArray& val(NodeId id) const { return nodes_[id].value; }
  DenseArray& grad_slot(NodeId id);

  std::vector<Node> nodes_;
  std::size_t zero_norm_events_ = 0;
};

}  // namespace calcap
