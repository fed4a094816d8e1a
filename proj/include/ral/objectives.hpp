// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Retrieval losses over a [B x B] score matrix whose diagonal holds the
// positive pairs, the sliding-window clip branch, and the weighted total.

#pragma once

#include "ral/diff.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace ral {

struct LossWeights {
  double nce = 0.05;     // lambda1
  double trip = 1.0;     // lambda2
  double da = 0.001;     // lambda3
  double pm = 0.004;     // lambda4
  double tau_nce = 0.04;
  double margin = 0.2;
};

struct LossParts {
  diff::Var nce;
  diff::Var trip;
  diff::Var da;
  diff::Var pm;
};

// Windows of every listed length at stride 1. Lengths above num_frames are
// skipped and reported through `skipped`; if every length is skipped,
// throws ContractError.
std::vector<diff::Window> clip_windows(diff::Index num_frames, std::span<const diff::Index> scales,
                                       std::vector<diff::Index>* skipped = nullptr);

struct ClipBank {
  Eigen::MatrixXd clips;  // [N_c x d], one window mean per row
  std::vector<diff::Index> scales;
  std::vector<diff::Index> skipped_scales;
};

ClipBank build_clips(const Eigen::MatrixXd& frames, std::span<const diff::Index> scales);

// Maximum cosine between q and any clip.
double clip_score(const Eigen::VectorXd& q, const ClipBank& clips);

// Frame-level plus clip-level score. Throws NumericError on non-finite input.
double fused_score(double frame_score, double clip_score);

// Symmetric InfoNCE: mean of the row-wise and column-wise cross entropies
// with the diagonal as target. Throws ContractError for B < 2.
diff::Var infonce_base(const diff::Var& scores, double tau);
double infonce_base(const Eigen::MatrixXd& scores, double tau);

// Hardest-negative triplet ranking loss in both directions, averaged over
// the positives. Throws ContractError for B < 2.
diff::Var triplet_base(const diff::Var& scores, double margin);
double triplet_base(const Eigen::MatrixXd& scores, double margin);

// lambda1 nce + lambda2 trip + lambda3 da + lambda4 pm. Throws NumericError
// naming the first non-finite part.
diff::Var total_loss(const LossParts& parts, const LossWeights& weights);

}  // namespace ral
