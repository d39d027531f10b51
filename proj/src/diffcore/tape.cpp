/* Copyright 2026 The voxprior Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "voxprior/tape.hpp"

#include "voxprior/errors.hpp"

namespace voxprior::diff {

Parameter::Parameter(std::string n, NdArray v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) {
    grad = NdArray(value.shape());
  } else {
    grad.fill(0.0f);
  }
}

Parameter& ParameterSet::add(const std::string& name, NdArray value) {
  if (by_name_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>(name, std::move(value));
  Parameter& ref = *p;
  by_name_.emplace(name, std::move(p));
  return ref;
}

Parameter& ParameterSet::get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return *it->second;
}

const Parameter& ParameterSet::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return *it->second;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(by_name_.size());
  for (auto& [name, p] : by_name_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(by_name_.size());
  for (const auto& [name, p] : by_name_) out.push_back(p.get());
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& [name, p] : by_name_) p->zero_grad();
}

int64_t ParameterSet::total_size() const {
  int64_t n = 0;
  for (const auto& [name, p] : by_name_) n += p->value.size();
  return n;
}

const NdArray& Var::value() const { return tape->value(id); }

Var Tape::constant(NdArray value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::frozen(const Parameter& p) {
  Node n;
  n.external = &p.value;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(NdArray value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& v : inputs) {
      if (v.tape != this) throw InputError("op inputs recorded on different tapes");
      if (requires_grad(v.id)) n.requires_grad = true;
    }
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const NdArray& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  return n.external ? *n.external : n.value;
}

NdArray* Tape::grad_sink(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.requires_grad) return nullptr;
  if (n.param) {
    if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
    return &n.param->grad;
  }
  if (n.grad.shape() != value(id).shape()) n.grad = NdArray(value(id).shape());
  return &n.grad;
}

void Tape::backward(Var root) {
  if (root.value().size() != 1) {
    throw DimensionError("backward without seed needs a scalar root, got " + shape_str(root.shape()));
  }
  backward(root, NdArray(root.shape(), 1.0f));
}

void Tape::backward(Var root, const NdArray& seed) {
  if (root.tape != this) throw InputError("root belongs to another tape");
  if (seed.shape() != root.shape()) {
    throw DimensionError("seed shape " + shape_str(seed.shape()) + " != root shape " + shape_str(root.shape()));
  }
  NdArray* g = grad_sink(root.id);
  if (!g) return;
  for (int64_t i = 0; i < seed.size(); ++i) (*g)[i] += seed[i];
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad, n.external ? *n.external : n.value);
    n.grad = NdArray();
  }
}

void Tape::clear() { nodes_.clear(); }

}  // namespace voxprior::diff
