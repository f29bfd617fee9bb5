// Copyright (c) 2026 eendss contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Dense tensors with reverse-mode automatic differentiation on a
// thread-local tape. Tensors are immutable once produced by an op;
// parameters (leaves) are mutated only by the optimizer.

#ifndef EENDSS_TENSOR_HPP_
#define EENDSS_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "eendss/common.hpp"

namespace eendss {

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> v;
  std::vector<T> g;  // allocated iff requires_grad
  bool rg = false;
};

template <class T>
class TensorT {
 public:
  using Node = TensorNode<T>;
  using NodePtr = std::shared_ptr<Node>;

  TensorT() = default;
  explicit TensorT(NodePtr n) : n_(std::move(n)) {}

  static TensorT zeros(Shape s, bool requires_grad = false) {
    return filled(std::move(s), T(0), requires_grad);
  }
  static TensorT filled(Shape s, T val, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(s);
    n->v.assign(static_cast<size_t>(numel_of(n->shape)), val);
    init_grad(*n, requires_grad);
    return TensorT(std::move(n));
  }
  static TensorT from_vec(Shape s, std::vector<T> v, bool requires_grad = false) {
    if (numel_of(s) != static_cast<int64_t>(v.size()))
      throw ShapeError("tensor: " + shape_str(s) + " does not hold " +
                       std::to_string(v.size()) + " values");
    auto n = std::make_shared<Node>();
    n->shape = std::move(s);
    n->v = std::move(v);
    init_grad(*n, requires_grad);
    return TensorT(std::move(n));
  }
  static TensorT scalar(T val, bool requires_grad = false) {
    return from_vec({1}, {val}, requires_grad);
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  int64_t dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(n_->v.size()); }
  bool requires_grad() const { return n_ && n_->rg; }

  std::vector<T>& value() { return n_->v; }
  const std::vector<T>& value() const { return n_->v; }
  std::vector<T>& grad() {
    if (!requires_grad()) throw ValueError("tensor has no gradient buffer");
    return n_->g;
  }
  const std::vector<T>& grad() const {
    if (!requires_grad()) throw ValueError("tensor has no gradient buffer");
    return n_->g;
  }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
    return n_->v[0];
  }
  T at(int64_t i) const { return n_->v[static_cast<size_t>(i)]; }

  void set_requires_grad(bool rg = true) {
    n_->rg = rg;
    n_->g.assign(rg ? n_->v.size() : 0, T(0));
  }
  void zero_grad() {
    if (requires_grad()) std::fill(n_->g.begin(), n_->g.end(), T(0));
  }

  NodePtr node() const { return n_; }

 private:
  static void init_grad(Node& n, bool rg) {
    n.rg = rg;
    if (rg) n.g.assign(n.v.size(), T(0));
  }
  NodePtr n_;
};

// Ordered record of recorded ops; replayed in reverse by backward().
template <class T>
class TapeT {
 public:
  struct Entry {
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;  // inputs + output
    std::function<void()> fn;
  };

  static TapeT& active() {
    thread_local TapeT tape;
    return tape;
  }

  bool recording() const { return recording_; }
  void set_recording(bool r) { recording_ = r; }
  size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  void record(std::vector<std::shared_ptr<TensorNode<T>>> nodes, std::function<void()> fn) {
    entries_.push_back(Entry{std::move(nodes), std::move(fn)});
  }

  // Propagates dRoot/d(node) into every requires_grad node the tape touches.
  // All touched gradient buffers are zeroed first, so replaying twice from
  // the same root (retain_tape = true) yields identical gradients.
  void backward(const TensorT<T>& root, bool retain_tape = false) {
    if (root.numel() != 1)
      throw ShapeError("backward: root must be scalar, got " + shape_str(root.shape()));
    if (!root.requires_grad())
      throw ValueError("backward: root is not connected to the tape");
    for (auto& e : entries_)
      for (auto& n : e.nodes)
        if (n->rg) std::fill(n->g.begin(), n->g.end(), T(0));
    root.node()->g[0] = T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
    if (!retain_tape) clear();
  }

 private:
  std::vector<Entry> entries_;
  bool recording_ = true;
};

// Disables tape recording in scope (read-only inference).
template <class T>
class NoGradT {
 public:
  NoGradT() : prev_(TapeT<T>::active().recording()) { TapeT<T>::active().set_recording(false); }
  ~NoGradT() { TapeT<T>::active().set_recording(prev_); }
  NoGradT(const NoGradT&) = delete;
  NoGradT& operator=(const NoGradT&) = delete;

 private:
  bool prev_;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using NoGrad = NoGradT<float>;

}  // namespace eendss

#endif  // EENDSS_TENSOR_HPP_
