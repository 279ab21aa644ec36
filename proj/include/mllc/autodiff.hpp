// Copyright 2026 The mllc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "mllc/tensor.hpp"

#include <cstdint>
#include <deque>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mllc::ad {

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
  constant,
  parameter,
  matmul,
  add,
  sub,
  hadamard,
  scale,
  concat,
  slice,
  row,
  tanh,
  sigmoid,
  relu,
  softplus,
  l2_normalize,
  squared_distance,
  sum,
  add_n,
  max_select,
};

std::string_view op_name(Op op);

/// A named trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

  void zero_grad() { grad.mat().setZero(); }
};

class Tape;

/// Handle to a node recorded on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  NodeId id() const noexcept { return id_; }
  const Tensor& value() const;
  Scalar item() const { return value().item(); }
  Index size() const { return value().size(); }

 private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

struct Node {
  NodeId id = 0;
  Op op = Op::constant;
  Tensor value;                        // unused for parameter nodes
  const Parameter* param = nullptr;    // parameter nodes borrow this value
  Tensor grad;                         // allocated on first accumulation
  bool has_grad = false;
  std::uint32_t parent_begin = 0;
  std::uint32_t parent_count = 0;
  Scalar aux = 0;                      // scale factor or epsilon
  Index aux_index = 0;                 // slice offset, row index or argmax

  const Tensor& val() const { return param ? param->value : value; }
};

/// Records a computation in creation order and runs reverse-mode
/// differentiation over it. Parents always precede children.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t);
  Var constant(Scalar s) { return constant(Tensor(s)); }

  /// Leaf reading `p.value` in place. Each parameter maps to one node per tape.
  Var parameter(const Parameter& p);

  /// Populates node gradients with d(root)/d(node). `root` must hold one element.
  void backward(Var root);
  void reset_gradients();
  bool backward_done() const noexcept { return backward_done_; }

  /// Zeros of the node's shape when no gradient reached it.
  Tensor gradient(Var v) const;
  Tensor gradient(const Parameter& p) const;

  const Node& node(NodeId id) const { return nodes_[id]; }
  std::span<const NodeId> parents(NodeId id) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Calls `f(const Parameter&, const Tensor& grad)` for every parameter that received gradient.
  template <class F>
  void for_each_parameter_gradient(F&& f) const {
    for (const auto& [param, id] : param_order_) {
      const Node& n = nodes_[id];
      if (n.has_grad) f(*param, n.grad);
    }
  }

  Var record(Op op, Tensor value, std::span<const Var> parents, Scalar aux = 0, Index aux_index = 0);

 private:
  Matrix& grad_of(NodeId id);
  void propagate(const Node& n);

  std::deque<Node> nodes_;  // stable addresses: values stay referenceable while recording
  std::vector<NodeId> parent_ids_;
  std::unordered_map<const Parameter*, NodeId> param_nodes_;
  std::vector<std::pair<const Parameter*, NodeId>> param_order_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->node(id_).val(); }

// Elementwise and linear-algebra operations. Shapes are never broadcast.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, Scalar factor);
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var slice(Var v, Index offset, Index length);
/// Row `index` of a rank-2 node as a rank-1 node.
Var row(Var m, Index index);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
/// log(1 + exp(a)), evaluated without overflow.
Var softplus(Var a);

inline constexpr Scalar kNormalizeEpsilon = 1e-8;
/// a / max(|a|_2, epsilon).
Var l2_normalize(Var a, Scalar epsilon = kNormalizeEpsilon);
Var squared_distance(Var a, Var b);
/// Sum of all elements as a rank-0 node.
Var sum(Var a);
Var add_n(std::span<const Var> terms);
Var mean(std::span<const Var> terms);

struct MaxSelection {
  Var value;
  std::size_t index = 0;
};

/// Max of single-element nodes; gradient flows to the first maximizer only.
MaxSelection max_select(std::span<const Var> scores);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Scalar s, Var a) { return scale(a, s); }
inline Var operator-(Var a) { return scale(a, -1.0); }

/// p <- p - lr * grad(p), then zero the gradient.
void sgd_step(std::span<Parameter* const> params, Scalar lr);

}  // namespace mllc::ad
