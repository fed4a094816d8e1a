// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// The full retrieval model: projectors, word gates, the frame-level scoring
// branch, the optional clip branch, and the two uncertainty estimators.
//
// Queries and videos are scored in batches. A batch is a Stacked block of
// raw rows plus offsets; every score method returns [n_queries x n_videos].

#pragma once

#include "ral/csa.hpp"
#include "ral/encoders.hpp"
#include "ral/msra.hpp"
#include "ral/synthdata.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace ral {

struct ModelConfig {
  Index input_dim = 16;
  Index joint_dim = 32;
  std::uint64_t seed = 0;
  bool csa_on = true;
  bool clip_branch_on = false;
  GateNorm gate_norm = GateNorm::softmax;
  std::vector<Index> clip_scales{4, 8, 16};
};

struct Stacked {
  Tensor rows;
  std::vector<Index> offsets{0};

  Index count() const { return static_cast<Index>(offsets.size()) - 1; }
  Index length(Index i) const { return offsets[i + 1] - offsets[i]; }
};

Stacked stack_queries(const Split& split, std::span<const std::size_t> query_indices);
Stacked stack_all_queries(const Split& split);
Stacked stack_videos(const Split& split, std::span<const std::size_t> video_indices);
Stacked stack_all_videos(const Split& split);
// One support set per listed video: all its queries' words, corpus order.
Stacked stack_support_sets(const Split& split, std::span<const std::size_t> video_indices);

struct BranchScores {
  Var frame;
  Var clip;  // undefined when the clip branch is off

  Var fused() const { return clip.defined() ? frame + clip : frame; }
};

class RalModel {
 public:
  explicit RalModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  Var encode_words(const Tensor& raw) const;
  Var encode_frames(const Tensor& raw) const;

  // Normalized word gates [total_words x 1]; uniform when CSA is off.
  Var gates(const Var& words, std::span<const Index> offsets) const;

  BranchScores score(const Var& words, std::span<const Index> word_offsets, const Var& frames,
                     std::span<const Index> frame_offsets) const;

  GaussianBatch query_distribution(const Var& words, std::span<const Index> offsets) const;
  GaussianBatch video_distribution(const Var& frames, std::span<const Index> offsets) const;

  // Frozen-weight evaluation. Fused scores of every query against every
  // gallery video, computed `chunk` queries at a time.
  Eigen::MatrixXd score_matrix(const Stacked& queries, const Stacked& gallery,
                               Index chunk = 64) const;
  // Geometric-mean uncertainty per item.
  Eigen::VectorXd query_uncertainty(const Stacked& queries) const;
  Eigen::VectorXd video_uncertainty(const Stacked& videos) const;
  // Normalized gates of every stacked word.
  Eigen::VectorXd word_gates(const Stacked& queries) const;

 private:
  Var clip_scores(const Var& words, std::span<const Index> word_offsets, const Var& frames,
                  std::span<const Index> frame_offsets) const;

  ModelConfig config_;
  ParameterStore store_;
  Affine text_proj_;
  Affine video_proj_;
  Parameter* sentence_score_ = nullptr;
  ConfidenceMlpWeights gate_mlp_;
  AggregatorWeights agg_q_;
  AggregatorWeights agg_v_;
  UncertaintyHeads heads_q_;
  UncertaintyHeads heads_v_;
};

}  // namespace ral
