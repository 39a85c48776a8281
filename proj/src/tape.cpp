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

#include "calcap/tape.hpp"

#include <algorithm>
#include <cmath>

#include "calcap/errors.hpp"
#include "calcap/numeric.hpp"

namespace calcap {

namespace {
constexpr double kMaskValue = -1e30;

void require(bool cond, const char* msg) {
  if (!cond) throw NumericError(msg);
}
}  // namespace

NodeId Tape::push(Node&& n) {
  nodes_.push_back(std::move(n));
  return NodeId(nodes_.size() - 1);
}

DenseArray& Tape::grad_slot(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = DenseArray::zeros(n.value.shape);
  return n.grad;
}

NodeId Tape::leaf(const DenseArray& value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = value;
  return push(std::move(n));
}

NodeId Tape::leaf(DenseArray&& value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::matvec(NodeId w, NodeId x) {
  const DenseArray& W = val(w);
  const DenseArray& X = val(x);
  require(W.rank() == 2 && X.rank() == 1 && W.cols() == X.numel(),
          "matvec: shape mismatch");
  Node n;
  n.op = Op::kMatVec;
  n.in0 = w;
  n.in1 = x;
  n.value = DenseArray::zeros({W.rows()});
  const std::size_t rows = W.rows(), cols = W.cols();
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    const double* wr = &W.data[i * cols];
    for (std::size_t j = 0; j < cols; ++j) acc += wr[j] * X.data[j];
    n.value.data[i] = acc;
  }
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const DenseArray& A = val(a);
  const DenseArray& B = val(b);
  require(A.same_shape(B), "add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.in0 = a;
  n.in1 = b;
  n.value = A;
  for (std::size_t i = 0; i < B.numel(); ++i) n.value.data[i] += B.data[i];
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const DenseArray& A = val(a);
  const DenseArray& B = val(b);
  require(A.same_shape(B), "mul: shape mismatch");
  Node n;
  n.op = Op::kMul;
  n.in0 = a;
  n.in1 = b;
  n.value = A;
  for (std::size_t i = 0; i < B.numel(); ++i) n.value.data[i] *= B.data[i];
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId x) {
  Node n;
  n.op = Op::kSigmoid;
  n.in0 = x;
  n.value = val(x);
  for (double& v : n.value.data) v = 1.0 / (1.0 + std::exp(-v));
  return push(std::move(n));
}

NodeId Tape::log_sigmoid(NodeId x) {
  Node n;
  n.op = Op::kLogSigmoid;
  n.in0 = x;
  n.value = val(x);
  // log(sigmoid(v)) without forming sigmoid, so saturation never
  // collapses to log(0).
  for (double& v : n.value.data)
    v = v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
  return push(std::move(n));
}

NodeId Tape::tanh(NodeId x) {
  Node n;
  n.op = Op::kTanh;
  n.in0 = x;
  n.value = val(x);
  for (double& v : n.value.data) v = std::tanh(v);
  return push(std::move(n));
}

NodeId Tape::log(NodeId x) {
  Node n;
  n.op = Op::kLog;
  n.in0 = x;
  n.value = val(x);
  for (double& v : n.value.data) {
    require(v > 0.0, "log: nonpositive input");
    v = std::log(v);
  }
  return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double c) {
  Node n;
  n.op = Op::kScale;
  n.in0 = x;
  n.c0 = c;
  n.value = val(x);
  for (double& v : n.value.data) v *= c;
  return push(std::move(n));
}

NodeId Tape::add_const(NodeId x, double c) {
  Node n;
  n.op = Op::kAddConst;
  n.in0 = x;
  n.c0 = c;
  n.value = val(x);
  for (double& v : n.value.data) v += c;
  return push(std::move(n));
}

NodeId Tape::clamp_max(NodeId x, double hi, bool* clamped) {
  Node n;
  n.op = Op::kClampMax;
  n.in0 = x;
  n.c0 = hi;
  n.value = val(x);
  bool any = false;
  for (double& v : n.value.data)
    if (v > hi) {
      v = hi;
      any = true;
    }
  if (clamped) *clamped = any;
  return push(std::move(n));
}

NodeId Tape::slice(NodeId x, std::size_t begin, std::size_t len) {
  const DenseArray& X = val(x);
  require(X.rank() == 1 && begin + len <= X.numel(), "slice: out of range");
  Node n;
  n.op = Op::kSlice;
  n.in0 = x;
  n.i0 = begin;
  n.value = DenseArray::zeros({len});
  std::copy_n(X.data.begin() + long(begin), len, n.value.data.begin());
  return push(std::move(n));
}

NodeId Tape::concat(NodeId a, NodeId b) {
  const DenseArray& A = val(a);
  const DenseArray& B = val(b);
  require(A.rank() == 1 && B.rank() == 1, "concat: vectors only");
  Node n;
  n.op = Op::kConcat;
  n.in0 = a;
  n.in1 = b;
  n.value = DenseArray::zeros({A.numel() + B.numel()});
  std::copy(A.data.begin(), A.data.end(), n.value.data.begin());
  std::copy(B.data.begin(), B.data.end(), n.value.data.begin() + long(A.numel()));
  return push(std::move(n));
}

NodeId Tape::embed_row(NodeId table, std::size_t row) {
  const DenseArray& T = val(table);
  require(T.rank() == 2 && row < T.rows(), "embed_row: row out of range");
  Node n;
  n.op = Op::kEmbedRow;
  n.in0 = table;
  n.i0 = row;
  n.value = DenseArray::zeros({T.cols()});
  std::copy_n(T.data.begin() + long(row * T.cols()), T.cols(),
              n.value.data.begin());
  return push(std::move(n));
}

NodeId Tape::stack(std::span<const NodeId> scalars) {
  require(!scalars.empty(), "stack: empty input");
  Node n;
  n.op = Op::kStack;
  n.inputs.assign(scalars.begin(), scalars.end());
  n.value = DenseArray::zeros({scalars.size()});
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    require(val(scalars[i]).numel() == 1, "stack: inputs must be scalars");
    n.value.data[i] = val(scalars[i]).data[0];
  }
  return push(std::move(n));
}

NodeId Tape::pick(NodeId x, std::size_t index) {
  const DenseArray& X = val(x);
  require(index < X.numel(), "pick: index out of range");
  Node n;
  n.op = Op::kPick;
  n.in0 = x;
  n.i0 = index;
  n.value = DenseArray::scalar(X.data[index]);
  return push(std::move(n));
}

NodeId Tape::dot(NodeId a, NodeId b) {
  const DenseArray& A = val(a);
  const DenseArray& B = val(b);
  require(A.numel() == B.numel(), "dot: length mismatch");
  Node n;
  n.op = Op::kDot;
  n.in0 = a;
  n.in1 = b;
  double acc = 0.0;
  for (std::size_t i = 0; i < A.numel(); ++i) acc += A.data[i] * B.data[i];
  n.value = DenseArray::scalar(acc);
  return push(std::move(n));
}

NodeId Tape::cosine(NodeId a, NodeId b) {
  const DenseArray& A = val(a);
  const DenseArray& B = val(b);
  require(A.numel() == B.numel(), "cosine: length mismatch");
  bool zero = false;
  double s = cosine_similarity(A.data, B.data, &zero);
  if (zero) ++zero_norm_events_;
  Node n;
  n.op = Op::kCosine;
  n.in0 = a;
  n.in1 = b;
  n.value = DenseArray::scalar(s);
  return push(std::move(n));
}

NodeId Tape::softmax(NodeId x) {
  Node n;
  n.op = Op::kSoftmax;
  n.in0 = x;
  n.value = val(x);
  softmax_into(val(x).data, n.value.data);
  return push(std::move(n));
}

NodeId Tape::log_softmax(NodeId x) {
  const DenseArray& X = val(x);
  require(X.numel() > 0, "log_softmax: empty input");
  Node n;
  n.op = Op::kLogSoftmax;
  n.in0 = x;
  n.value = X;
  double mx = *std::max_element(X.data.begin(), X.data.end());
  double sum = 0.0;
  for (double v : X.data) sum += std::exp(v - mx);
  double lse = mx + std::log(sum);
  for (double& v : n.value.data) v -= lse;
  return push(std::move(n));
}

NodeId Tape::mask_fill(NodeId logits, std::span<const std::size_t> masked_ids) {
  const DenseArray& X = val(logits);
  Node n;
  n.op = Op::kMaskFill;
  n.in0 = logits;
  n.mask.assign(masked_ids.begin(), masked_ids.end());
  n.value = X;
  for (std::size_t id : n.mask) {
    require(id < X.numel(), "mask_fill: masked id out of range");
    n.value.data[id] = kMaskValue;
  }
  return push(std::move(n));
}

NodeId Tape::weighted_sum(std::span<const NodeId> scalars,
                          std::span<const double> weights) {
  require(scalars.size() == weights.size() && !scalars.empty(),
          "weighted_sum: size mismatch");
  Node n;
  n.op = Op::kWeightedSum;
  n.inputs.assign(scalars.begin(), scalars.end());
  n.constants.assign(weights.begin(), weights.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    require(val(scalars[i]).numel() == 1, "weighted_sum: inputs must be scalars");
    acc += weights[i] * val(scalars[i]).data[0];
  }
  n.value = DenseArray::scalar(acc);
  return push(std::move(n));
}

void Tape::backward(NodeId root) {
  require(root < nodes_.size(), "backward: bad root");
  require(val(root).numel() == 1, "backward: root must be a scalar");
  grad_slot(root).data[0] = 1.0;

  for (NodeId id = root + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) continue;  // not reachable from the root
    const std::vector<double>& g = n.grad.data;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatVec: {
        const DenseArray& W = val(n.in0);
        const DenseArray& X = val(n.in1);
        DenseArray& gw = grad_slot(n.in0);
        DenseArray& gx = grad_slot(n.in1);
        const std::size_t rows = W.rows(), cols = W.cols();
        for (std::size_t i = 0; i < rows; ++i) {
          const double gi = g[i];
          if (gi == 0.0) continue;
          double* gwr = &gw.data[i * cols];
          const double* wr = &W.data[i * cols];
          for (std::size_t j = 0; j < cols; ++j) {
            gwr[j] += gi * X.data[j];
            gx.data[j] += gi * wr[j];
          }
        }
        break;
      }
      case Op::kAdd: {
        DenseArray& ga = grad_slot(n.in0);
        DenseArray& gb = grad_slot(n.in1);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga.data[i] += g[i];
          gb.data[i] += g[i];
        }
        break;
      }
      case Op::kMul: {
        const DenseArray& A = val(n.in0);
        const DenseArray& B = val(n.in1);
        DenseArray& ga = grad_slot(n.in0);
        DenseArray& gb = grad_slot(n.in1);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga.data[i] += g[i] * B.data[i];
          gb.data[i] += g[i] * A.data[i];
        }
        break;
      }
      case Op::kSigmoid: {
        DenseArray& gx = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          double y = n.value.data[i];
          gx.data[i] += g[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::kTanh: {
        DenseArray& gx = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          double y = n.value.data[i];
          gx.data[i] += g[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::kLogSigmoid: {
        const DenseArray& X = val(n.in0);
        DenseArray& gx = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          double x = X.data[i];
          double sig_neg = 1.0 / (1.0 + std::exp(x));  // 1 - sigmoid(x)
          gx.data[i] += g[i] * sig_neg;
        }
        break;
      }
      case Op::kLog: {
        const DenseArray& X = val(n.in0);
        DenseArray& gx = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i)
          gx.data[i] += g[i] / X.data[i];
        break;
      }
      case Op::kScale: {
        DenseArray& gx = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g[i] * n.c0;
        break;
      }
      case Op::kAddConst: {
        DenseArray& gx = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g[i];
        break;
      }
      case Op::kClampMax: {
        const DenseArray& X = val(n.in0);
        DenseArray& gx = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (X.data[i] <= n.c0) gx.data[i] += g[i];
        break;
      }
      case Op::kSlice: {
        DenseArray& gx = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[n.i0 + i] += g[i];
        break;
      }
      case Op::kConcat: {
        DenseArray& ga = grad_slot(n.in0);
        DenseArray& gb = grad_slot(n.in1);
        const std::size_t na = ga.numel();
        for (std::size_t i = 0; i < na; ++i) ga.data[i] += g[i];
        for (std::size_t i = 0; i < gb.numel(); ++i) gb.data[i] += g[na + i];
        break;
      }
      case Op::kEmbedRow: {
        const DenseArray& T = val(n.in0);
        DenseArray& gt = grad_slot(n.in0);
        double* row = &gt.data[n.i0 * T.cols()];
        for (std::size_t i = 0; i < g.size(); ++i) row[i] += g[i];
        break;
      }
      case Op::kStack: {
        for (std::size_t i = 0; i < n.inputs.size(); ++i)
          grad_slot(n.inputs[i]).data[0] += g[i];
        break;
      }
      case Op::kPick: {
        grad_slot(n.in0).data[n.i0] += g[0];
        break;
      }
      case Op::kDot: {
        const DenseArray& A = val(n.in0);
        const DenseArray& B = val(n.in1);
        DenseArray& ga = grad_slot(n.in0);
        DenseArray& gb = grad_slot(n.in1);
        for (std::size_t i = 0; i < A.numel(); ++i) {
          ga.data[i] += g[0] * B.data[i];
          gb.data[i] += g[0] * A.data[i];
        }
        break;
      }
      case Op::kCosine: {
        const DenseArray& A = val(n.in0);
        const DenseArray& B = val(n.in1);
        double na2 = 0.0, nb2 = 0.0;
        for (std::size_t i = 0; i < A.numel(); ++i) {
          na2 += A.data[i] * A.data[i];
          nb2 += B.data[i] * B.data[i];
        }
        if (na2 == 0.0 || nb2 == 0.0) break;  // zero-norm: gradient dropped
        const double na = std::sqrt(na2), nb = std::sqrt(nb2);
        const double s = n.value.data[0];
        DenseArray& ga = grad_slot(n.in0);
        DenseArray& gb = grad_slot(n.in1);
        for (std::size_t i = 0; i < A.numel(); ++i) {
          ga.data[i] += g[0] * (B.data[i] / (na * nb) - s * A.data[i] / na2);
          gb.data[i] += g[0] * (A.data[i] / (na * nb) - s * B.data[i] / nb2);
        }
        break;
      }
      case Op::kSoftmax: {
        DenseArray& gx = grad_slot(n.in0);
        const std::vector<double>& p = n.value.data;
        double inner = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) inner += g[i] * p[i];
        for (std::size_t i = 0; i < g.size(); ++i)
          gx.data[i] += p[i] * (g[i] - inner);
        break;
      }
      case Op::kLogSoftmax: {
        DenseArray& gx = grad_slot(n.in0);
        double gsum = 0.0;
        for (double v : g) gsum += v;
        for (std::size_t i = 0; i < g.size(); ++i)
          gx.data[i] += g[i] - std::exp(n.value.data[i]) * gsum;
        break;
      }
      case Op::kMaskFill: {
        DenseArray& gx = grad_slot(n.in0);
        std::vector<double> pass = g;
        for (std::size_t id2 : n.mask) pass[id2] = 0.0;
        for (std::size_t i = 0; i < pass.size(); ++i) gx.data[i] += pass[i];
        break;
      }
      case Op::kWeightedSum: {
        for (std::size_t i = 0; i < n.inputs.size(); ++i)
          grad_slot(n.inputs[i]).data[0] += g[0] * n.constants[i];
        break;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  zero_norm_events_ = 0;
}

}  // namespace calcap
