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

#include "idlat/nn/autograd.hpp"

#include <unordered_set>

#include "idlat/error.hpp"

namespace idlat::nn {

Var Var::constant(Tensor t) { return leaf(std::move(t), false); }

Var Var::leaf(Tensor t, bool requires_grad) {
  Var v;
  v.node_ = std::make_shared<detail::Node>();
  v.node_->value = std::move(t);
  v.node_->requires_grad = requires_grad;
  return v;
}

Var Var::make(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Var v;
  v.node_ = std::make_shared<detail::Node>();
  v.node_->value = std::move(value);
  bool needs = false;
  for (const auto& in : inputs) needs |= in.requires_grad();
  if (needs) {
    v.node_->requires_grad = true;
    v.node_->backward = std::move(backward);
    v.node_->inputs.reserve(inputs.size());
    for (auto& in : inputs) v.node_->inputs.push_back(in.node_);
  }
  return v;
}

void backward(const Var& root) {
  if (!root.node_ || root.value().size() != 1) {
    throw Error(ErrorCode::kInvalidArgument, "backward needs a single-element root");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.node_.get(), 0}};
  seen.insert(root.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  root.node_->grad = Tensor(root.shape(), 1.0);
  std::vector<Tensor*> in_grads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    in_grads.clear();
    for (auto& in : node->inputs) {
      if (!in->requires_grad) {
        in_grads.push_back(nullptr);
        continue;
      }
      if (in->grad.empty()) in->grad = Tensor(in->value.shape, 0.0);
      in_grads.push_back(&in->grad);
    }
    node->backward(node->grad, in_grads);
  }
}

}  // namespace idlat::nn
