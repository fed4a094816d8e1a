// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Confidence-gated word-frame scoring.
//
// Each word picks its most similar frame (cosine), and the per-word maxima are
// combined with normalized confidence gates. Uniform gates reduce to the
// mean-pooled score.

#pragma once

#include "ral/diff.hpp"
#include "ral/errors.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace ral {

constexpr double kCosineEps = 1e-12;

struct SimilarityMatrix {
  Eigen::MatrixXd cosine;        // [L x N_f]
  Eigen::VectorXd word_max;      // s_i = max_j cosine(i, j)
  std::vector<Eigen::Index> argmax;  // lowest j on ties
};

enum class GateNorm { softmax, sigmoid };

GateNorm parse_gate_norm(const std::string& s);
const char* to_string(GateNorm g);

struct ConfidenceGates {
  Eigen::VectorXd raw;
  Eigen::VectorXd gates;  // nonnegative, sums to 1
};

ConfidenceGates make_gates(const Eigen::VectorXd& raw, GateNorm norm = GateNorm::softmax);

// Throws NumericError naming the first zero-norm row.
template <typename DerivedQ, typename DerivedV>
SimilarityMatrix word_frame_similarity(const Eigen::MatrixBase<DerivedQ>& q,
                                       const Eigen::MatrixBase<DerivedV>& v) {
  if (q.rows() < 1 || v.rows() < 1) throw ContractError("word_frame_similarity: empty input");
  if (q.cols() != v.cols()) throw DimensionError("word_frame_similarity: dimension mismatch");
  auto unit_rows = [](const auto& m, const char* what) {
    Eigen::MatrixXd out = m;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double n = out.row(i).norm();
      if (n == 0.0) {
        throw NumericError(std::string("word_frame_similarity: zero-norm ") + what + " row " +
                           std::to_string(i));
      }
      out.row(i) /= n + kCosineEps;
    }
    return out;
  };
  SimilarityMatrix s;
  s.cosine = unit_rows(q, "word") * unit_rows(v, "frame").transpose();
  s.word_max.resize(s.cosine.rows());
  s.argmax.resize(static_cast<std::size_t>(s.cosine.rows()));
  for (Eigen::Index i = 0; i < s.cosine.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < s.cosine.cols(); ++j) {
      if (s.cosine(i, j) > s.cosine(i, best)) best = j;
    }
    s.word_max(i) = s.cosine(i, best);
    s.argmax[static_cast<std::size_t>(i)] = best;
  }
  return s;
}

// sum_i g_i s_i. Throws ContractError on a length mismatch.
double gated_score(const SimilarityMatrix& sim, const ConfidenceGates& gates);
double mean_pooled_score(const SimilarityMatrix& sim);

// Gates normalized inside each query's row segment: softmax of the raw
// scores, or sigmoid followed by normalization to unit sum.
diff::Var normalize_gates(const diff::Var& raw, std::span<const diff::Index> word_offsets,
                          GateNorm norm);
// Uniform gates 1/L_q for every word of query q.
diff::Tensor uniform_gates(std::span<const diff::Index> word_offsets);

// Gated scores of every stacked query against every stacked video,
// [n_queries x n_videos]. `gates` is [total_words x 1].
diff::Var gated_scores(const diff::Var& words, std::span<const diff::Index> word_offsets,
                       const diff::Var& frames, std::span<const diff::Index> frame_offsets,
                       const diff::Var& gates);

}  // namespace ral
