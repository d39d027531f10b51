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
#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "voxprior/ndarray.hpp"

namespace voxprior::diff {

// A named trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  NdArray value;
  NdArray grad;

  Parameter() = default;
  Parameter(std::string n, NdArray v);
  void zero_grad();
};

// Owns a model's parameters in name order. Names are unique.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, NdArray value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grad();
  int64_t total_size() const;

 private:
  std::map<std::string, std::unique_ptr<Parameter>> by_name_;
};

class Tape;

// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const NdArray& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode recording of one computation. Not thread-safe; use one tape
// per thread. Values of parameter leaves alias the Parameter storage and
// their gradients accumulate straight into Parameter::grad.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const NdArray& out_grad, const NdArray& out_value)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  Var constant(NdArray value);
  Var parameter(Parameter& p);
  // Frozen view of a parameter: its value participates but never receives
  // gradient.
  Var frozen(const Parameter& p);

  // Records an op output. The backward closure is kept only if gradients are
  // enabled and at least one input requires them.
  Var record(NdArray value, std::initializer_list<Var> inputs, BackwardFn fn);

  const NdArray& value(int id) const;
  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  // Gradient buffer of a node, allocated to zeros on first use. Returns
  // nullptr for nodes that do not require gradients.
  NdArray* grad_sink(int id);

  void backward(Var root);
  void backward(Var root, const NdArray& seed);

  void clear();
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    NdArray value;
    const NdArray* external = nullptr;
    Parameter* param = nullptr;
    NdArray grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

}  // namespace voxprior::diff
