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

#include "mllc/autodiff.hpp"

#include "mllc/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mllc::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::parameter: return "parameter";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::hadamard: return "hadamard";
    case Op::scale: return "scale";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::row: return "row";
    case Op::tanh: return "tanh";
    case Op::sigmoid: return "sigmoid";
    case Op::relu: return "relu";
    case Op::softplus: return "softplus";
    case Op::l2_normalize: return "l2_normalize";
    case Op::squared_distance: return "squared_distance";
    case Op::sum: return "sum";
    case Op::add_n: return "add_n";
    case Op::max_select: return "max_select";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor t) { return record(Op::constant, std::move(t), {}); }

Var Tape::parameter(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.id = static_cast<NodeId>(nodes_.size());
  n.op = Op::parameter;
  n.param = &p;
  n.parent_begin = static_cast<std::uint32_t>(parent_ids_.size());
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.back().id);
  param_order_.emplace_back(&p, nodes_.back().id);
  return Var(this, nodes_.back().id);
}

Var Tape::record(Op op, Tensor value, std::span<const Var> parents, Scalar aux, Index aux_index) {
  Node n;
  n.id = static_cast<NodeId>(nodes_.size());
  n.op = op;
  n.value = std::move(value);
  n.parent_begin = static_cast<std::uint32_t>(parent_ids_.size());
  n.parent_count = static_cast<std::uint32_t>(parents.size());
  n.aux = aux;
  n.aux_index = aux_index;
  for (const Var& p : parents) {
    if (&p.tape() != this) throw ArgumentError("operands recorded on different tapes");
    parent_ids_.push_back(p.id());
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.back().id);
}

std::span<const NodeId> Tape::parents(NodeId id) const {
  const Node& n = nodes_[id];
  return {parent_ids_.data() + n.parent_begin, n.parent_count};
}

Matrix& Tape::grad_of(NodeId id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(n.val());
    n.has_grad = true;
  }
  return n.grad.mat();
}

Tensor Tape::gradient(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.has_grad ? n.grad : Tensor::zeros_like(n.val());
}

Tensor Tape::gradient(const Parameter& p) const {
  auto it = param_nodes_.find(&p);
  if (it == param_nodes_.end()) return Tensor::zeros_like(p.value);
  const Node& n = nodes_[it->second];
  return n.has_grad ? n.grad : Tensor::zeros_like(p.value);
}

void Tape::reset_gradients() {
  for (Node& n : nodes_) {
    n.grad = Tensor();
    n.has_grad = false;
  }
  backward_done_ = false;
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw ArgumentError("backward root belongs to another tape");
  if (backward_done_) throw ArgumentError("backward already ran on this tape; call reset_gradients() first");
  if (root.value().size() != 1) throw DimensionError("backward requires a scalar root");
  grad_of(root.id()).setOnes();
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (n.has_grad && n.parent_count > 0) propagate(n);
  }
  backward_done_ = true;
}

void Tape::propagate(const Node& n) {
  const Matrix& g = n.grad.mat();
  const NodeId* par = parent_ids_.data() + n.parent_begin;
  auto pv = [&](std::uint32_t k) -> const Matrix& { return nodes_[par[k]].val().mat(); };

  switch (n.op) {
    case Op::constant:
    case Op::parameter:
      break;
    case Op::matmul: {
      const Matrix& a = pv(0);
      const Matrix& b = pv(1);
      grad_of(par[0]).noalias() += g * b.transpose();
      grad_of(par[1]).noalias() += a.transpose() * g;
      break;
    }
    case Op::add:
      grad_of(par[0]) += g;
      grad_of(par[1]) += g;
      break;
    case Op::sub:
      grad_of(par[0]) += g;
      grad_of(par[1]) -= g;
      break;
    case Op::hadamard: {
      // Copy parent values first: grad_of may be the same node when a == b.
      Matrix ga = g.cwiseProduct(pv(1));
      Matrix gb = g.cwiseProduct(pv(0));
      grad_of(par[0]) += ga;
      grad_of(par[1]) += gb;
      break;
    }
    case Op::scale:
      grad_of(par[0]) += n.aux * g;
      break;
    case Op::concat: {
      Index offset = 0;
      for (std::uint32_t k = 0; k < n.parent_count; ++k) {
        Index len = pv(k).size();
        grad_of(par[k]) += g.middleRows(offset, len);
        offset += len;
      }
      break;
    }
    case Op::slice:
      grad_of(par[0]).middleRows(n.aux_index, g.rows()) += g;
      break;
    case Op::row:
      grad_of(par[0]).row(n.aux_index) += g.transpose();
      break;
    case Op::tanh: {
      const Matrix& y = n.value.mat();
      grad_of(par[0]).array() += g.array() * (1.0 - y.array().square());
      break;
    }
    case Op::sigmoid: {
      const Matrix& y = n.value.mat();
      grad_of(par[0]).array() += g.array() * y.array() * (1.0 - y.array());
      break;
    }
    case Op::relu: {
      const Matrix& x = pv(0);
      grad_of(par[0]).array() += (x.array() > 0.0).select(g.array(), 0.0);
      break;
    }
    case Op::softplus: {
      const Matrix& x = pv(0);
      Matrix s = x.unaryExpr([](Scalar v) {
        return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      });
      grad_of(par[0]).array() += g.array() * s.array();
      break;
    }
    case Op::l2_normalize: {
      const Matrix& x = pv(0);
      const Scalar norm = x.norm();
      if (norm >= n.aux) {
        const Matrix& y = n.value.mat();
        const Scalar proj = (y.array() * g.array()).sum();
        grad_of(par[0]) += (g - proj * y) / norm;
      } else {
        grad_of(par[0]) += g / n.aux;
      }
      break;
    }
    case Op::squared_distance: {
      Matrix diff = 2.0 * g(0, 0) * (pv(0) - pv(1));
      grad_of(par[0]) += diff;
      grad_of(par[1]) -= diff;
      break;
    }
    case Op::sum:
      grad_of(par[0]).array() += g(0, 0);
      break;
    case Op::add_n:
      for (std::uint32_t k = 0; k < n.parent_count; ++k) grad_of(par[k]) += g;
      break;
    case Op::max_select:
      grad_of(par[n.aux_index]) += g;
      break;
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw DimensionError(std::string(op) + ": operand shapes differ (" + std::to_string(a.value().rows()) + "x" +
                         std::to_string(a.value().cols()) + " vs " + std::to_string(b.value().rows()) + "x" +
                         std::to_string(b.value().cols()) + ")");
}

void require_vector(Var a, const char* op) {
  if (a.value().rank() != 1) throw DimensionError(std::string(op) + ": operand must be a vector");
}

Tensor like(const Tensor& shape_of, Matrix m) {
  Tensor t = Tensor::zeros_like(shape_of);
  t.mat() = std::move(m);
  return t;
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2) throw DimensionError("matmul: left operand must be a matrix");
  if (bv.rank() == 0) throw DimensionError("matmul: right operand must be a vector or matrix");
  if (av.cols() != bv.rows())
    throw DimensionError("matmul: inner dimensions differ (" + std::to_string(av.cols()) + " vs " +
                         std::to_string(bv.rows()) + ")");
  Matrix out = av.mat() * bv.mat();
  Tensor t = bv.rank() == 1 ? Tensor::vector(out) : Tensor::matrix(out);
  Var parents[] = {a, b};
  return a.tape().record(Op::matmul, std::move(t), parents);
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Var parents[] = {a, b};
  return a.tape().record(Op::add, like(a.value(), a.value().mat() + b.value().mat()), parents);
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Var parents[] = {a, b};
  return a.tape().record(Op::sub, like(a.value(), a.value().mat() - b.value().mat()), parents);
}

Var hadamard(Var a, Var b) {
  require_same_shape(a, b, "hadamard");
  Var parents[] = {a, b};
  return a.tape().record(Op::hadamard, like(a.value(), a.value().mat().cwiseProduct(b.value().mat())), parents);
}

Var scale(Var a, Scalar factor) {
  Var parents[] = {a};
  return a.tape().record(Op::scale, like(a.value(), factor * a.value().mat()), parents, factor);
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat: empty input list");
  Index total = 0;
  for (Var p : parts) {
    require_vector(p, "concat");
    total += p.value().size();
  }
  Vector out(total);
  Index offset = 0;
  for (Var p : parts) {
    out.segment(offset, p.value().size()) = p.value().vec();
    offset += p.value().size();
  }
  return parts.front().tape().record(Op::concat, Tensor::vector(out), parts);
}

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var slice(Var v, Index offset, Index length) {
  require_vector(v, "slice");
  if (offset < 0 || length <= 0 || offset + length > v.value().size())
    throw DimensionError("slice: range out of bounds");
  Var parents[] = {v};
  return v.tape().record(Op::slice, Tensor::vector(v.value().vec().segment(offset, length)), parents, 0, offset);
}

Var row(Var m, Index index) {
  if (m.value().rank() != 2) throw DimensionError("row: operand must be a matrix");
  if (index < 0 || index >= m.value().rows()) throw DimensionError("row: index out of bounds");
  Var parents[] = {m};
  return m.tape().record(Op::row, Tensor::vector(m.value().mat().row(index).transpose()), parents, 0, index);
}

Var tanh(Var a) {
  Var parents[] = {a};
  return a.tape().record(Op::tanh, like(a.value(), a.value().mat().array().tanh().matrix()), parents);
}

Var sigmoid(Var a) {
  Matrix y = a.value().mat().unaryExpr([](Scalar v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  Var parents[] = {a};
  return a.tape().record(Op::sigmoid, like(a.value(), std::move(y)), parents);
}

Var relu(Var a) {
  Var parents[] = {a};
  return a.tape().record(Op::relu, like(a.value(), a.value().mat().cwiseMax(0.0)), parents);
}

Var softplus(Var a) {
  Matrix y = a.value().mat().unaryExpr(
      [](Scalar v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
  Var parents[] = {a};
  return a.tape().record(Op::softplus, like(a.value(), std::move(y)), parents);
}

Var l2_normalize(Var a, Scalar epsilon) {
  require_vector(a, "l2_normalize");
  if (!(epsilon > 0)) throw ArgumentError("l2_normalize: epsilon must be positive");
  const Scalar denom = std::max(a.value().mat().norm(), epsilon);
  Var parents[] = {a};
  return a.tape().record(Op::l2_normalize, like(a.value(), a.value().mat() / denom), parents, epsilon);
}

Var squared_distance(Var a, Var b) {
  require_vector(a, "squared_distance");
  require_same_shape(a, b, "squared_distance");
  Var parents[] = {a, b};
  return a.tape().record(Op::squared_distance, Tensor((a.value().mat() - b.value().mat()).squaredNorm()),
                         parents);
}

Var sum(Var a) {
  Var parents[] = {a};
  return a.tape().record(Op::sum, Tensor(a.value().mat().sum()), parents);
}

Var add_n(std::span<const Var> terms) {
  if (terms.empty()) throw ArgumentError("add_n: empty input list");
  Matrix out = terms.front().value().mat();
  for (std::size_t k = 1; k < terms.size(); ++k) {
    require_same_shape(terms.front(), terms[k], "add_n");
    out += terms[k].value().mat();
  }
  return terms.front().tape().record(Op::add_n, like(terms.front().value(), std::move(out)), terms);
}

Var mean(std::span<const Var> terms) {
  return scale(add_n(terms), 1.0 / static_cast<Scalar>(terms.size()));
}

MaxSelection max_select(std::span<const Var> scores) {
  if (scores.empty()) throw ArgumentError("max_select: empty input list");
  std::size_t best = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (scores[k].value().size() != 1) throw DimensionError("max_select: scores must be scalars");
    if (scores[k].item() > scores[best].item()) best = k;
  }
  Tensor value = scores[best].value();
  Var out = scores.front().tape().record(Op::max_select, std::move(value), scores, 0, static_cast<Index>(best));
  return {out, best};
}

// ---------------------------------------------------------------------------

void sgd_step(std::span<Parameter* const> params, Scalar lr) {
  for (Parameter* p : params) {
    if (lr != 0.0) p->value.mat() -= lr * p->grad.mat();
    p->zero_grad();
  }
}

}  // namespace mllc::ad
