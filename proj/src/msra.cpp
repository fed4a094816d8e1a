// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ral/msra.hpp"

#include "ral/errors.hpp"

#include <limits>

namespace ral {

namespace {

Var row_sums(const Var& x) { return diff::matmul(x, diff::constant(Tensor::Ones(x.cols(), 1))); }

// [(n*k) x n] with a one at (i*k + j, i).
Tensor expansion(Index n, Index k) {
  Tensor e = Tensor::Zero(n * k, n);
  for (Index i = 0; i < n; ++i) e.block(i * k, i, k, 1).setOnes();
  return e;
}

}  // namespace

const char* to_string(Modality m) { return m == Modality::query ? "query" : "video"; }

UncertaintyHeads make_uncertainty_heads(ParameterStore& store, const std::string& prefix,
                                        Index d, std::mt19937_64& rng) {
  UncertaintyHeads h;
  h.mean = make_affine(store, prefix + ".mean", d, d, rng);
  h.log_var = make_affine(store, prefix + ".log_var", d, d, rng);
  return h;
}

GaussianEmbedding GaussianBatch::row(Index i) const {
  return {mean.value().row(i).transpose(), log_var.value().row(i).transpose()};
}

GaussianBatch estimate_gaussian(const Var& x, Modality m, const UncertaintyHeads& heads,
                                const AggregatorWeights& aggregator) {
  if (x.rows() == 0) throw ContractError(std::string("estimate_gaussian: empty ") + to_string(m) + " sequence");
  const std::array<Index, 2> whole{0, x.rows()};
  return estimate_gaussian_segments(x, whole, m, heads, aggregator);
}

GaussianBatch estimate_gaussian_segments(const Var& stacked, std::span<const Index> offsets,
                                         Modality m, const UncertaintyHeads& heads,
                                         const AggregatorWeights& aggregator) {
  Var g = aggregate_segments(stacked, offsets, aggregator);
  Var mean = heads.mean(g);
  Var raw_log_var = heads.log_var(g);
  if (!mean.value().allFinite() || !raw_log_var.value().allFinite()) {
    throw NumericError(std::string("non-finite ") + to_string(m) + " uncertainty head output");
  }
  return {mean, diff::clamp(raw_log_var, kLogVarMin, kLogVarMax)};
}

Var kl_diag_gaussians(const GaussianBatch& a, const GaussianBatch& b) {
  if (a.size() != b.size() || a.dim() != b.dim()) {
    throw DimensionError("kl_diag_gaussians: batch shape mismatch");
  }
  Var ratio = diff::exp(diff::sub(a.log_var, b.log_var));
  Var d = diff::sub(b.mean, a.mean);
  Var mahal = diff::mul(diff::mul(d, d), diff::exp(-b.log_var));
  Var log_ratio = diff::sub(b.log_var, a.log_var);
  Var terms = diff::add_scalar(ratio + mahal + log_ratio, -1.0);
  return diff::scale(row_sums(terms), 0.5);
}

Var kl_to_standard_normal(const GaussianBatch& a) {
  GaussianBatch prior{diff::constant(Tensor::Zero(a.size(), a.dim())),
                      diff::constant(Tensor::Zero(a.size(), a.dim()))};
  return kl_diag_gaussians(a, prior);
}

Var distribution_alignment_loss(const GaussianBatch& q, const GaussianBatch& v) {
  return diff::mean(kl_diag_gaussians(q, v) + kl_to_standard_normal(q) + kl_to_standard_normal(v));
}

SupportSet build_support_set(int video_id, const Split& split) {
  SupportSet s;
  s.video_id = video_id;
  s.queries = split.queries_of(video_id);
  if (s.queries.empty()) {
    throw DataError("no queries labeled to video " + std::to_string(video_id));
  }
  return s;
}

Eigen::MatrixXd support_set_features(const SupportSet& support, const Split& split) {
  Index rows = 0;
  Index cols = 0;
  for (auto qi : support.queries) {
    rows += split.queries[qi].num_words();
    cols = split.queries[qi].words.cols();
  }
  Eigen::MatrixXd out(rows, cols);
  Index r = 0;
  for (auto qi : support.queries) {
    const auto& w = split.queries[qi].words;
    out.middleRows(r, w.rows()) = w;
    r += w.rows();
  }
  return out;
}

ProxySet sample_proxies(const GaussianBatch& z, Index k, std::mt19937_64& rng) {
  if (k < 1) throw ContractError("sample_proxies: K must be at least 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor eps(z.size() * k, z.dim());
  for (Index i = 0; i < eps.rows(); ++i) {
    for (Index j = 0; j < eps.cols(); ++j) eps(i, j) = normal(rng);
  }
  return proxies_from_noise(z, k, std::move(eps));
}

ProxySet proxies_from_noise(const GaussianBatch& z, Index k, Tensor eps) {
  if (k < 1) throw ContractError("proxies: K must be at least 1");
  if (eps.rows() != z.size() * k || eps.cols() != z.dim()) {
    throw DimensionError("proxies: eps must be [(items * K) x d]");
  }
  Var expand = diff::constant(expansion(z.size(), k));
  Var sigma = diff::exp(diff::scale(z.log_var, 0.5));
  Var proxies = diff::matmul(expand, z.mean) +
                diff::mul(diff::matmul(expand, sigma), diff::constant(eps));
  return {proxies, std::move(eps), k};
}

Var proxy_matching_loss(const ProxySet& text, const ProxySet& video, double tau) {
  if (!(tau > 0.0)) throw ContractError("proxy_matching_loss: tau must be positive");
  if (text.count != video.count || text.proxies.rows() != video.proxies.rows()) {
    throw DimensionError("proxy_matching_loss: text and video proxy sets differ in shape");
  }
  const Index n = text.items();
  const Index k = text.count;
  if (n < 2) throw ContractError("proxy_matching_loss: negatives required (batch size >= 2)");

  Var cos = diff::matmul(diff::l2norm_rows(text.proxies),
                         diff::transpose(diff::l2norm_rows(video.proxies)));
  Var logits = diff::scale(cos, 1.0 / tau);
  Tensor mask = Tensor::Constant(n * k, n * k, -std::numeric_limits<double>::infinity());
  for (Index i = 0; i < n; ++i) mask.block(i * k, i * k, k, k).setZero();
  Var positive = diff::logsumexp_rows(diff::add(logits, diff::constant(std::move(mask))));
  Var total = diff::logsumexp_rows(logits);
  return diff::mean(diff::sub(total, positive));
}

}  // namespace ral
