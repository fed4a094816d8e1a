// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Probabilistic embeddings: diagonal Gaussians estimated from aggregated
// sequences, their alignment through KL divergence, and contrastive matching
// of reparameterized samples ("proxies").

#pragma once

#include "ral/encoders.hpp"
#include "ral/errors.hpp"
#include "ral/synthdata.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <span>

namespace ral {

constexpr double kLogVarMin = -10.0;
constexpr double kLogVarMax = 10.0;

// N(mean, diag(exp(log_var))).
template <typename Scalar>
struct Gaussian {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector mean;
  Vector log_var;

  Eigen::Index dim() const { return mean.size(); }
  Vector sigma() const { return (log_var.array() / Scalar(2)).exp().matrix(); }
  Vector variance() const { return log_var.array().exp().matrix(); }

  static Gaussian standard(Eigen::Index d) { return {Vector::Zero(d), Vector::Zero(d)}; }
};

using GaussianEmbedding = Gaussian<double>;

// KL(a || b) = 1/2 sum_i [ sa^2/sb^2 + (mb - ma)^2/sb^2 - 1 + ln(sb^2/sa^2) ].
template <typename Scalar>
Scalar kl_diag_gaussians(const Gaussian<Scalar>& a, const Gaussian<Scalar>& b) {
  if (a.dim() != b.dim()) throw DimensionError("kl_diag_gaussians: dimension mismatch");
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  const Array va = a.variance().array();
  const Array vb = b.variance().array();
  const Array diff2 = (b.mean - a.mean).array().square();
  return Scalar(0.5) * (va / vb + diff2 / vb - Scalar(1) + (vb / va).log()).sum();
}

// KL(q||v) + KL(q||N(0,I)) + KL(v||N(0,I)).
template <typename Scalar>
Scalar distribution_alignment_loss(const Gaussian<Scalar>& q, const Gaussian<Scalar>& v) {
  const auto prior = Gaussian<Scalar>::standard(q.dim());
  return kl_diag_gaussians(q, v) + kl_diag_gaussians(q, prior) + kl_diag_gaussians(v, prior);
}

// (prod_i sigma_i)^(1/d), evaluated as exp(mean ln sigma_i).
template <typename Scalar>
Scalar geometric_mean_uncertainty(const Gaussian<Scalar>& z) {
  using std::exp;
  return exp(z.log_var.mean() / Scalar(2));
}

enum class Modality { query, video };

const char* to_string(Modality m);

struct UncertaintyHeads {
  Affine mean;
  Affine log_var;
};

UncertaintyHeads make_uncertainty_heads(ParameterStore& store, const std::string& prefix,
                                        Index d, std::mt19937_64& rng);

// One Gaussian per row: mean and log_var are [n x d] graph values.
struct GaussianBatch {
  Var mean;
  Var log_var;

  Index size() const { return mean.rows(); }
  Index dim() const { return mean.cols(); }
  GaussianEmbedding row(Index i) const;
};

// mean = h_mu(g(X)), log_var = clamp(h_sigma(g(X)), -10, 10).
// Throws NumericError naming the modality on non-finite head output.
GaussianBatch estimate_gaussian(const Var& x, Modality m, const UncertaintyHeads& heads,
                                const AggregatorWeights& aggregator);
GaussianBatch estimate_gaussian_segments(const Var& stacked, std::span<const Index> offsets,
                                         Modality m, const UncertaintyHeads& heads,
                                         const AggregatorWeights& aggregator);

// Row-wise KL(a_i || b_i), [n x 1].
Var kl_diag_gaussians(const GaussianBatch& a, const GaussianBatch& b);
// Row-wise KL(a_i || N(0, I)), [n x 1].
Var kl_to_standard_normal(const GaussianBatch& a);
// Mean over rows of the three-term alignment loss, 1 x 1.
Var distribution_alignment_loss(const GaussianBatch& q, const GaussianBatch& v);

// Query support set of one video.
struct SupportSet {
  int video_id = 0;
  std::vector<std::size_t> queries;  // indices into Split::queries, corpus order
};

// Throws DataError when no query is labeled to the video.
SupportSet build_support_set(int video_id, const Split& split);
// Row-wise concatenation of the member queries' raw word features.
Eigen::MatrixXd support_set_features(const SupportSet& support, const Split& split);

// K proxies per Gaussian: rows [i*K, (i+1)*K) of `proxies` belong to item i
// and equal mean_i + sigma_i * eps_row.
struct ProxySet {
  Var proxies;  // [(items * K) x d]
  Tensor eps;   // [(items * K) x d]
  Index count = 1;

  Index items() const { return count == 0 ? 0 : proxies.rows() / count; }
};

ProxySet sample_proxies(const GaussianBatch& z, Index k, std::mt19937_64& rng);
// Uses the given eps (frozen draws, or zero for the "no sampling" variant).
ProxySet proxies_from_noise(const GaussianBatch& z, Index k, Tensor eps);

// Multi-instance InfoNCE over proxies. For item i and each text proxy, the
// positives are all K video proxies of item i and the denominator adds every
// proxy of every other item. Returns the mean over items and text proxies of
// -log(positive mass / total mass). Throws ContractError with fewer than two
// items ("negatives required") or tau <= 0.
Var proxy_matching_loss(const ProxySet& text, const ProxySet& video, double tau);

}  // namespace ral
