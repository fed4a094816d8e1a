// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ral/optim.hpp"

#include "ral/errors.hpp"

#include <cmath>

namespace ral {

Parameter& ParameterStore::add(const std::string& name, diff::Tensor init) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->first_moment = diff::Tensor::Zero(init.rows(), init.cols());
  p->second_moment = diff::Tensor::Zero(init.rows(), init.cols());
  p->var = diff::variable(std::move(init));
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterStore::add_uniform(const std::string& name, diff::Index rows,
                                       diff::Index cols, diff::Index fan_in,
                                       std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  diff::Tensor init(rows, cols);
  // Row-major fill so the draw order does not depend on storage order.
  for (diff::Index i = 0; i < rows; ++i) {
    for (diff::Index j = 0; j < cols; ++j) init(i, j) = dist(rng);
  }
  return add(name, std::move(init));
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return *params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return *params_[it->second];
}

std::vector<diff::Var> ParameterStore::leaves() const {
  std::vector<diff::Var> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->var);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) diff::zero_grad(std::span<const diff::Var>(&p->var, 1));
}

std::map<std::string, diff::Tensor> ParameterStore::snapshot() const {
  std::map<std::string, diff::Tensor> out;
  for (const auto& p : params_) out.emplace(p->name, p->value());
  return out;
}

void ParameterStore::restore(const std::map<std::string, diff::Tensor>& values) {
  for (auto& p : params_) {
    auto it = values.find(p->name);
    if (it == values.end()) throw DataError("missing parameter: " + p->name);
    if (it->second.rows() != p->value().rows() || it->second.cols() != p->value().cols()) {
      throw DataError("shape mismatch for parameter: " + p->name);
    }
    p->mutable_value() = it->second;
  }
}

void Adam::step(ParameterStore& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    if (p.var.grad().size() != 0 && !p.var.grad().allFinite()) {
      throw NumericError("non-finite gradient in parameter " + p.name);
    }
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (p.var.grad().size() == 0) continue;
    const diff::Tensor& g = p.var.grad();
    p.first_moment = config_.beta1 * p.first_moment + (1.0 - config_.beta1) * g;
    p.second_moment =
        config_.beta2 * p.second_moment + (1.0 - config_.beta2) * g.cwiseProduct(g);
    p.mutable_value().array() -=
        config_.lr * (p.first_moment.array() / bc1) /
        ((p.second_moment.array() / bc2).sqrt() + config_.eps);
  }
}

}  // namespace ral
