// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ral/encoders.hpp"

#include "ral/errors.hpp"

namespace ral {

namespace {

void require_rows(const Var& x, const char* op) {
  if (x.rows() == 0) throw ContractError(std::string(op) + ": empty sequence");
}

// [n_seg x 1] column of 1 / length.
Var inverse_lengths(std::span<const Index> offsets) {
  Tensor inv(static_cast<Index>(offsets.size()) - 1, 1);
  for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
    const Index n = offsets[k + 1] - offsets[k];
    if (n == 0) throw ContractError("empty sequence in segment batch");
    inv(static_cast<Index>(k), 0) = 1.0 / static_cast<double>(n);
  }
  return diff::constant(std::move(inv));
}

std::array<Index, 2> whole(const Var& x) { return {0, x.rows()}; }

}  // namespace

Var Affine::operator()(const Var& x) const {
  return diff::add(diff::matmul(x, weight->var), bias->var);
}

Affine make_affine(ParameterStore& store, const std::string& name, Index in, Index out,
                   std::mt19937_64& rng) {
  Affine a;
  a.weight = &store.add_uniform(name + ".weight", in, out, in, rng);
  a.bias = &store.add_uniform(name + ".bias", 1, out, in, rng);
  return a;
}

AggregatorWeights make_aggregator(ParameterStore& store, const std::string& prefix, Index d,
                                  std::mt19937_64& rng) {
  AggregatorWeights w;
  w.w1 = &store.add_uniform(prefix + ".w1", d, d, d, rng);
  w.w2 = &store.add_uniform(prefix + ".w2", d, 1, d, rng);
  w.fc = make_affine(store, prefix + ".fc", d, d, rng);
  w.ln_scale = &store.add(prefix + ".ln_scale", Tensor::Ones(1, d));
  w.ln_shift = &store.add(prefix + ".ln_shift", Tensor::Zero(1, d));
  return w;
}

ConfidenceMlpWeights make_confidence_mlp(ParameterStore& store, const std::string& prefix,
                                         Index d, std::mt19937_64& rng) {
  ConfidenceMlpWeights w;
  w.hidden = make_affine(store, prefix + ".hidden", d, d, rng);
  w.out = make_affine(store, prefix + ".out", d, 1, rng);
  return w;
}

Var project(const Var& raw, const Affine& weights) {
  require_rows(raw, "project");
  return weights(raw);
}

PoolResult attention_pool(const Var& q, const Parameter& score) {
  require_rows(q, "attention_pool");
  return attention_pool_segments(q, whole(q), score);
}

PoolResult attention_pool_segments(const Var& stacked, std::span<const Index> offsets,
                                   const Parameter& score) {
  Var a = diff::segment_softmax(diff::matmul(stacked, score.var), offsets);
  return {diff::segment_sum_rows(diff::mul(stacked, a), offsets), a};
}

Var global_branch(const Var& x, const Affine& fc) {
  require_rows(x, "global_branch");
  return global_branch_segments(x, whole(x), fc);
}

Var global_branch_segments(const Var& stacked, std::span<const Index> offsets,
                           const Affine& fc) {
  Var means = diff::mul(diff::segment_sum_rows(stacked, offsets), inverse_lengths(offsets));
  return fc(means);
}

PoolResult local_branch(const Var& x, const Parameter& w1, const Parameter& w2) {
  require_rows(x, "local_branch");
  return local_branch_segments(x, whole(x), w1, w2);
}

PoolResult local_branch_segments(const Var& stacked, std::span<const Index> offsets,
                                 const Parameter& w1, const Parameter& w2) {
  Var hidden = diff::tanh(diff::matmul(stacked, w1.var));
  Var a = diff::segment_softmax(diff::matmul(hidden, w2.var), offsets);
  return {diff::segment_sum_rows(diff::mul(stacked, a), offsets), a};
}

Var aggregate(const Var& x, const AggregatorWeights& weights) {
  require_rows(x, "aggregate");
  return aggregate_segments(x, whole(x), weights);
}

Var aggregate_segments(const Var& stacked, std::span<const Index> offsets,
                       const AggregatorWeights& weights) {
  Var global = global_branch_segments(stacked, offsets, weights.fc);
  Var local = local_branch_segments(stacked, offsets, *weights.w1, *weights.w2).pooled;
  Var normed = diff::layernorm_row(diff::add(global, local));
  return diff::add(diff::mul(normed, weights.ln_scale->var), weights.ln_shift->var);
}

Var confidence_mlp(const Var& q, const ConfidenceMlpWeights& weights) {
  require_rows(q, "confidence_mlp");
  return weights.out(diff::tanh(weights.hidden(q)));
}

std::vector<Index> offsets_from_lengths(std::span<const Index> lengths) {
  std::vector<Index> offsets(lengths.size() + 1, 0);
  for (std::size_t i = 0; i < lengths.size(); ++i) offsets[i + 1] = offsets[i] + lengths[i];
  return offsets;
}

}  // namespace ral
