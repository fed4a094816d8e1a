// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ral/diff.hpp"

#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace ral {

struct Parameter {
  std::string name;
  diff::Var var;  // leaf, requires_grad
  diff::Tensor first_moment;
  diff::Tensor second_moment;

  const diff::Tensor& value() const { return var.value(); }
  diff::Tensor& mutable_value() { return var.mutable_value(); }
};

// Owns the parameters of one model in creation order. Addresses are stable
// for the lifetime of the store, so modules may hold Parameter pointers.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  // Throws ContractError on a duplicate name.
  Parameter& add(const std::string& name, diff::Tensor init);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Parameter& add_uniform(const std::string& name, diff::Index rows,
                         diff::Index cols, diff::Index fan_in,
                         std::mt19937_64& rng);

  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  std::vector<diff::Var> leaves() const;
  void zero_grad();

  // Name -> value copies.
  std::map<std::string, diff::Tensor> snapshot() const;
  // Overwrites values by name; every stored parameter must be present with
  // a matching shape.
  void restore(const std::map<std::string, diff::Tensor>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Applies one bias-corrected Adam update to every parameter, in place.
  // Checks all gradients first: a non-finite entry throws NumericError naming
  // the parameter and leaves every parameter untouched.
  void step(ParameterStore& params);

  long steps() const { return steps_; }
  void set_steps(long steps) { steps_ = steps; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  long steps_ = 0;
};

}  // namespace ral
