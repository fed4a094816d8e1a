// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ral/csa.hpp"

#include <cmath>

namespace ral {

GateNorm parse_gate_norm(const std::string& s) {
  if (s == "softmax") return GateNorm::softmax;
  if (s == "sigmoid") return GateNorm::sigmoid;
  throw ConfigError("gate_norm must be softmax or sigmoid, got '" + s + "'");
}

const char* to_string(GateNorm g) { return g == GateNorm::softmax ? "softmax" : "sigmoid"; }

ConfidenceGates make_gates(const Eigen::VectorXd& raw, GateNorm norm) {
  if (raw.size() == 0) throw ContractError("make_gates: no words");
  ConfidenceGates g;
  g.raw = raw;
  if (norm == GateNorm::softmax) {
    g.gates = (raw.array() - raw.maxCoeff()).exp().matrix();
  } else {
    g.gates = raw.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  }
  g.gates /= g.gates.sum();
  return g;
}

double gated_score(const SimilarityMatrix& sim, const ConfidenceGates& gates) {
  if (gates.gates.size() != sim.word_max.size()) {
    throw ContractError("gated_score: " + std::to_string(gates.gates.size()) + " gates for " +
                        std::to_string(sim.word_max.size()) + " words");
  }
  return gates.gates.dot(sim.word_max);
}

double mean_pooled_score(const SimilarityMatrix& sim) {
  if (sim.word_max.size() == 0) throw ContractError("mean_pooled_score: no words");
  return sim.word_max.mean();
}

diff::Var normalize_gates(const diff::Var& raw, std::span<const diff::Index> word_offsets,
                          GateNorm norm) {
  if (norm == GateNorm::softmax) return diff::segment_softmax(raw, word_offsets);
  // softmax(log p) = p / sum(p)
  return diff::segment_softmax(diff::log(diff::sigmoid(raw)), word_offsets);
}

diff::Tensor uniform_gates(std::span<const diff::Index> word_offsets) {
  diff::Tensor g(word_offsets.back(), 1);
  for (std::size_t k = 0; k + 1 < word_offsets.size(); ++k) {
    const auto n = word_offsets[k + 1] - word_offsets[k];
    g.middleRows(word_offsets[k], n).setConstant(1.0 / static_cast<double>(n));
  }
  return g;
}

diff::Var gated_scores(const diff::Var& words, std::span<const diff::Index> word_offsets,
                       const diff::Var& frames, std::span<const diff::Index> frame_offsets,
                       const diff::Var& gates) {
  diff::Var cos = diff::matmul(diff::l2norm_rows(words, kCosineEps),
                               diff::transpose(diff::l2norm_rows(frames, kCosineEps)));
  diff::Var word_max = diff::segment_max_cols(cos, frame_offsets);
  return diff::segment_sum_rows(diff::mul(word_max, gates), word_offsets);
}

}  // namespace ral
