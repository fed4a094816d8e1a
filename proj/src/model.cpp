// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ral/model.hpp"

#include "ral/errors.hpp"
#include "ral/objectives.hpp"
#include "ral/rng.hpp"

#include <algorithm>

namespace ral {

namespace {

template <typename RowsOf>
Stacked stack(std::size_t n, RowsOf rows_of) {
  Stacked s;
  Index total = 0;
  Index cols = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::MatrixXd& m = rows_of(i);
    if (m.rows() == 0) throw DataError("empty sequence in batch");
    total += m.rows();
    cols = m.cols();
    s.offsets.push_back(total);
  }
  s.rows.resize(total, cols);
  for (std::size_t i = 0; i < n; ++i) {
    s.rows.middleRows(s.offsets[i], s.offsets[i + 1] - s.offsets[i]) = rows_of(i);
  }
  return s;
}

Eigen::VectorXd geometric_means(const GaussianBatch& z) {
  return (z.log_var.value().rowwise().mean() / 2.0).array().exp().matrix();
}

}  // namespace

Stacked stack_queries(const Split& split, std::span<const std::size_t> query_indices) {
  return stack(query_indices.size(), [&](std::size_t i) -> const Eigen::MatrixXd& {
    return split.queries[query_indices[i]].words;
  });
}

Stacked stack_all_queries(const Split& split) {
  return stack(split.queries.size(),
               [&](std::size_t i) -> const Eigen::MatrixXd& { return split.queries[i].words; });
}

Stacked stack_videos(const Split& split, std::span<const std::size_t> video_indices) {
  return stack(video_indices.size(), [&](std::size_t i) -> const Eigen::MatrixXd& {
    return split.videos[video_indices[i]].frames;
  });
}

Stacked stack_all_videos(const Split& split) {
  return stack(split.videos.size(),
               [&](std::size_t i) -> const Eigen::MatrixXd& { return split.videos[i].frames; });
}

Stacked stack_support_sets(const Split& split, std::span<const std::size_t> video_indices) {
  std::vector<Eigen::MatrixXd> sets;
  sets.reserve(video_indices.size());
  for (auto vi : video_indices) {
    sets.push_back(support_set_features(build_support_set(split.videos[vi].id, split), split));
  }
  return stack(sets.size(), [&](std::size_t i) -> const Eigen::MatrixXd& { return sets[i]; });
}

RalModel::RalModel(ModelConfig config) : config_(std::move(config)) {
  if (config_.joint_dim < 2) throw ConfigError("joint_dim must be at least 2");
  if (config_.input_dim < 1) throw ConfigError("input_dim must be positive");
  // Every parameter exists regardless of the toggles, always created in this
  // order, so that toggles never shift the initialization stream.
  auto rng = make_rng(config_.seed, "init");
  const Index d = config_.joint_dim;
  text_proj_ = make_affine(store_, "text.proj", config_.input_dim, d, rng);
  video_proj_ = make_affine(store_, "video.proj", config_.input_dim, d, rng);
  sentence_score_ = &store_.add_uniform("text.sentence_score", d, 1, d, rng);
  gate_mlp_ = make_confidence_mlp(store_, "gate", d, rng);
  agg_q_ = make_aggregator(store_, "agg.q", d, rng);
  agg_v_ = make_aggregator(store_, "agg.v", d, rng);
  heads_q_ = make_uncertainty_heads(store_, "heads.q", d, rng);
  heads_v_ = make_uncertainty_heads(store_, "heads.v", d, rng);
}

Var RalModel::encode_words(const Tensor& raw) const {
  if (raw.cols() != config_.input_dim) throw DimensionError("word features have wrong width");
  return project(diff::constant(raw), text_proj_);
}

Var RalModel::encode_frames(const Tensor& raw) const {
  if (raw.cols() != config_.input_dim) throw DimensionError("frame features have wrong width");
  return project(diff::constant(raw), video_proj_);
}

Var RalModel::gates(const Var& words, std::span<const Index> offsets) const {
  if (!config_.csa_on) return diff::constant(uniform_gates(offsets));
  return normalize_gates(confidence_mlp(words, gate_mlp_), offsets, config_.gate_norm);
}

BranchScores RalModel::score(const Var& words, std::span<const Index> word_offsets,
                             const Var& frames, std::span<const Index> frame_offsets) const {
  BranchScores s;
  s.frame = gated_scores(words, word_offsets, frames, frame_offsets, gates(words, word_offsets));
  if (config_.clip_branch_on) s.clip = clip_scores(words, word_offsets, frames, frame_offsets);
  return s;
}

Var RalModel::clip_scores(const Var& words, std::span<const Index> word_offsets,
                          const Var& frames, std::span<const Index> frame_offsets) const {
  Var sentences = attention_pool_segments(words, word_offsets, *sentence_score_).pooled;
  std::vector<diff::Window> windows;
  std::vector<Index> clip_offsets{0};
  for (std::size_t v = 0; v + 1 < frame_offsets.size(); ++v) {
    const Index start = frame_offsets[v];
    for (auto w : clip_windows(frame_offsets[v + 1] - start, config_.clip_scales)) {
      windows.push_back({start + w.start, w.length});
    }
    clip_offsets.push_back(static_cast<Index>(windows.size()));
  }
  Var clips = diff::window_means(frames, windows);
  Var cos = diff::matmul(diff::l2norm_rows(sentences, kCosineEps),
                         diff::transpose(diff::l2norm_rows(clips, kCosineEps)));
  return diff::segment_max_cols(cos, clip_offsets);
}

GaussianBatch RalModel::query_distribution(const Var& words,
                                           std::span<const Index> offsets) const {
  return estimate_gaussian_segments(words, offsets, Modality::query, heads_q_, agg_q_);
}

GaussianBatch RalModel::video_distribution(const Var& frames,
                                           std::span<const Index> offsets) const {
  return estimate_gaussian_segments(frames, offsets, Modality::video, heads_v_, agg_v_);
}

Eigen::MatrixXd RalModel::score_matrix(const Stacked& queries, const Stacked& gallery,
                                       Index chunk) const {
  if (gallery.count() == 0) throw ContractError("score_matrix: empty gallery");
  diff::NoGradGuard no_grad;
  Var frames = encode_frames(gallery.rows);
  Var words = encode_words(queries.rows);
  Eigen::MatrixXd out(queries.count(), gallery.count());
  chunk = std::max<Index>(chunk, 1);
  for (Index q0 = 0; q0 < queries.count(); q0 += chunk) {
    const Index n = std::min(chunk, queries.count() - q0);
    const Index r0 = queries.offsets[q0];
    std::vector<Index> offsets;
    for (Index i = 0; i <= n; ++i) offsets.push_back(queries.offsets[q0 + i] - r0);
    Var w = diff::slice(words, r0, 0, offsets.back(), words.cols());
    out.middleRows(q0, n) = score(w, offsets, frames, gallery.offsets).fused().value();
  }
  return out;
}

Eigen::VectorXd RalModel::query_uncertainty(const Stacked& queries) const {
  diff::NoGradGuard no_grad;
  return geometric_means(query_distribution(encode_words(queries.rows), queries.offsets));
}

Eigen::VectorXd RalModel::video_uncertainty(const Stacked& videos) const {
  diff::NoGradGuard no_grad;
  return geometric_means(video_distribution(encode_frames(videos.rows), videos.offsets));
}

Eigen::VectorXd RalModel::word_gates(const Stacked& queries) const {
  diff::NoGradGuard no_grad;
  return gates(encode_words(queries.rows), queries.offsets).value();
}

}  // namespace ral
