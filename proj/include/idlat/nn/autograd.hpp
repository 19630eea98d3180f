// Copyright (c) the IDLat authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "idlat/nn/tensor.hpp"

namespace idlat::nn {

/// Receives the gradient of the op output and accumulates into the gradients
/// of its inputs. `in_grads[i]` is null when input i does not need a gradient.
using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> in_grads)>;

namespace detail {
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};
}  // namespace detail

/// Handle to a value in a reverse-mode computation graph. Graphs are built
/// per forward pass and discarded afterwards; they are not shared across
/// threads.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor t);
  static Var leaf(Tensor t, bool requires_grad);
  /// Creates an op node. When no input needs a gradient the backward
  /// function and the input links are dropped.
  static Var make(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape; }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Parameter maintenance for leaves owned by a model.
  Tensor& mutable_value() { return node_->value; }
  Tensor& mutable_grad() { return node_->grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad = Tensor(); }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<detail::Node> node_;
  friend void backward(const Var& root);
};

/// Back-propagates from a single-element root, seeding d(root)/d(root) = 1.
void backward(const Var& root);

}  // namespace idlat::nn
