// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ral/objectives.hpp"

#include "ral/csa.hpp"
#include "ral/errors.hpp"

#include <cmath>
#include <limits>

namespace ral {

namespace {

void require_square_batch(const diff::Var& scores, const char* op) {
  if (scores.rows() != scores.cols()) {
    throw DimensionError(std::string(op) + ": score matrix must be square");
  }
  if (scores.rows() < 2) throw ContractError(std::string(op) + ": batch size must be at least 2");
}

diff::Var diagonal_mask(diff::Index b) {
  diff::Tensor m = diff::Tensor::Zero(b, b);
  m.diagonal().setConstant(-std::numeric_limits<double>::infinity());
  return diff::constant(std::move(m));
}

}  // namespace

std::vector<diff::Window> clip_windows(diff::Index num_frames, std::span<const diff::Index> scales,
                                       std::vector<diff::Index>* skipped) {
  std::vector<diff::Window> out;
  for (diff::Index w : scales) {
    if (w < 1) throw ContractError("clip scale must be at least 1");
    if (w > num_frames) {
      if (skipped) skipped->push_back(w);
      continue;
    }
    for (diff::Index s = 0; s + w <= num_frames; ++s) out.push_back({s, w});
  }
  if (out.empty()) throw ContractError("build_clips: every scale exceeds the frame count");
  return out;
}

ClipBank build_clips(const Eigen::MatrixXd& frames, std::span<const diff::Index> scales) {
  ClipBank bank;
  const auto windows = clip_windows(frames.rows(), scales, &bank.skipped_scales);
  for (diff::Index w : scales) {
    if (w <= frames.rows()) bank.scales.push_back(w);
  }
  bank.clips.resize(static_cast<diff::Index>(windows.size()), frames.cols());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    bank.clips.row(static_cast<diff::Index>(i)) =
        frames.middleRows(windows[i].start, windows[i].length).colwise().mean();
  }
  return bank;
}

double clip_score(const Eigen::VectorXd& q, const ClipBank& clips) {
  if (clips.clips.rows() == 0) throw ContractError("clip_score: empty clip bank");
  const Eigen::VectorXd qn = q / (q.norm() + kCosineEps);
  double best = -std::numeric_limits<double>::infinity();
  for (diff::Index i = 0; i < clips.clips.rows(); ++i) {
    const double c = clips.clips.row(i).dot(qn) / (clips.clips.row(i).norm() + kCosineEps);
    best = std::max(best, c);
  }
  return best;
}

double fused_score(double frame_score, double clip_score) {
  if (!std::isfinite(frame_score) || !std::isfinite(clip_score)) {
    throw NumericError("fused_score: non-finite branch score");
  }
  return frame_score + clip_score;
}

diff::Var infonce_base(const diff::Var& scores, double tau) {
  require_square_batch(scores, "infonce_base");
  if (!(tau > 0.0)) throw ContractError("infonce_base: tau must be positive");
  const diff::Index b = scores.rows();
  diff::Var logits = diff::scale(scores, 1.0 / tau);
  diff::Var trace = diff::sum(diff::mul(logits, diff::constant(diff::Tensor::Identity(b, b))));
  diff::Var rows = diff::sum(diff::logsumexp_rows(logits));
  diff::Var cols = diff::sum(diff::logsumexp_rows(diff::transpose(logits)));
  // 1/2 [ (rows - trace)/B + (cols - trace)/B ]
  return diff::scale(rows + cols - diff::scale(trace, 2.0), 0.5 / static_cast<double>(b));
}

double infonce_base(const Eigen::MatrixXd& scores, double tau) {
  return infonce_base(diff::constant(scores), tau).scalar();
}

diff::Var triplet_base(const diff::Var& scores, double margin) {
  require_square_batch(scores, "triplet_base");
  const diff::Index b = scores.rows();
  diff::Var mask = diagonal_mask(b);
  diff::Var positive = diff::matmul(diff::mul(scores, diff::constant(diff::Tensor::Identity(b, b))),
                                    diff::constant(diff::Tensor::Ones(b, 1)));
  diff::Var hard_video = diff::max_rows(diff::add(scores, mask));
  diff::Var hard_query = diff::max_rows(diff::add(diff::transpose(scores), mask));
  diff::Var hinge_v = diff::relu(diff::add_scalar(hard_video - positive, margin));
  diff::Var hinge_q = diff::relu(diff::add_scalar(hard_query - positive, margin));
  return diff::mean(hinge_v + hinge_q);
}

double triplet_base(const Eigen::MatrixXd& scores, double margin) {
  return triplet_base(diff::constant(scores), margin).scalar();
}

diff::Var total_loss(const LossParts& parts, const LossWeights& w) {
  const std::pair<const char*, const diff::Var*> named[] = {
      {"L_nce", &parts.nce}, {"L_trip", &parts.trip}, {"L_DA", &parts.da}, {"L_PM", &parts.pm}};
  for (const auto& [name, v] : named) {
    if (!v->defined()) throw ContractError(std::string("total_loss: missing ") + name);
    if (!std::isfinite(v->scalar())) throw NumericError(std::string("total_loss: non-finite ") + name);
  }
  return diff::scale(parts.nce, w.nce) + diff::scale(parts.trip, w.trip) +
         diff::scale(parts.da, w.da) + diff::scale(parts.pm, w.pm);
}

}  // namespace ral
