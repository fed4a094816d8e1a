// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Projection into the joint space and the pooling primitives built on it.
//
// Every pooling op comes in two forms: a single-sequence form and a
// "segments" form that pools many stacked sequences at once. Stacked
// sequences are described by row offsets (n + 1 entries, see diff.hpp).

#pragma once

#include "ral/diff.hpp"
#include "ral/optim.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ral {

using diff::Index;
using diff::Tensor;
using diff::Var;

struct EncoderConfig {
  Index input_dim = 16;
  Index joint_dim = 32;
  std::uint64_t seed = 0;
};

// y = x W + b, applied to each row. W is [in x out], b is [1 x out].
struct Affine {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  Var operator()(const Var& x) const;
  Index in_dim() const { return weight->value().rows(); }
  Index out_dim() const { return weight->value().cols(); }
};

Affine make_affine(ParameterStore& store, const std::string& name, Index in, Index out,
                   std::mt19937_64& rng);

// Multi-granularity aggregator of one modality.
struct AggregatorWeights {
  Parameter* w1 = nullptr;  // [d x d], local attention hidden map
  Parameter* w2 = nullptr;  // [d x 1], local attention score vector
  Affine fc;                // global branch
  Parameter* ln_scale = nullptr;  // [1 x d], starts at 1
  Parameter* ln_shift = nullptr;  // [1 x d], starts at 0
};

AggregatorWeights make_aggregator(ParameterStore& store, const std::string& prefix, Index d,
                                  std::mt19937_64& rng);

// Two linear layers with a tanh in between; hidden width d, one output.
struct ConfidenceMlpWeights {
  Affine hidden;
  Affine out;
};

ConfidenceMlpWeights make_confidence_mlp(ParameterStore& store, const std::string& prefix,
                                         Index d, std::mt19937_64& rng);

struct PoolResult {
  Var pooled;   // [n_sequences x d]
  Var weights;  // [total_rows x 1], convex within each sequence
};

// Throws ContractError("empty sequence") when raw has no rows.
Var project(const Var& raw, const Affine& weights);

// Sentence embedding: softmax over rows of Q * score, then the weighted sum.
PoolResult attention_pool(const Var& q, const Parameter& score);
PoolResult attention_pool_segments(const Var& stacked, std::span<const Index> offsets,
                                   const Parameter& score);

// FC(mean of rows).
Var global_branch(const Var& x, const Affine& fc);
Var global_branch_segments(const Var& stacked, std::span<const Index> offsets,
                           const Affine& fc);

// softmax_i(w2 . tanh(W1 x_i)) weighted sum of the rows x_i.
PoolResult local_branch(const Var& x, const Parameter& w1, const Parameter& w2);
PoolResult local_branch_segments(const Var& stacked, std::span<const Index> offsets,
                                 const Parameter& w1, const Parameter& w2);

// LayerNorm(global + local) with the aggregator's affine.
Var aggregate(const Var& x, const AggregatorWeights& weights);
Var aggregate_segments(const Var& stacked, std::span<const Index> offsets,
                       const AggregatorWeights& weights);

// Raw per-row confidence scores, [L x 1].
Var confidence_mlp(const Var& q, const ConfidenceMlpWeights& weights);

// Offsets of consecutive sequences with the given row counts.
std::vector<Index> offsets_from_lengths(std::span<const Index> lengths);

}  // namespace ral
