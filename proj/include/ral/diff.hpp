// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense reverse-mode differentiation over Eigen matrices.
//
// A Var is a handle to a node in a dynamically built graph. Each operation
// records its inputs and a local backward rule when any input requires a
// gradient; otherwise the result is a plain constant and no graph is kept.
// Everything is double precision and at most rank 2 (vectors are 1 x n or
// n x 1 matrices, scalars are 1 x 1).
//
// Gradient semantics: backward() recomputes gradients of every interior node
// from scratch, but gradients on leaves (variables) accumulate across calls
// until zero_grad() is invoked. The trainer zeroes leaves once per step.

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ral::diff {

using Tensor = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Adds this node's grad, pushed through the local derivative, into the
  // grads of the parents that require one.
  std::function<void(Node&)> backward;
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  // Empty (0 x 0) until a backward pass reached this node.
  const Tensor& grad() const { return node_->grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  // Value of a 1 x 1 Var.
  double scalar() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// While alive, results of every op on this thread are constants: no graph
// edges are recorded. Used for evaluation against frozen weights.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool active();

 private:
  bool previous_;
};

Var constant(Tensor value);
// Leaf that accumulates gradients.
Var variable(Tensor value);
Var scalar_constant(double value);

// The kinds accepted by forward_op. Every kind is also exposed as a free
// function below, together with the auxiliary ops the model needs.
enum class OpKind {
  matmul,
  add,
  scale,
  tanh,
  exp,
  log,
  softmax_rows,
  mean_rows,
  max_rows,
  l2norm_rows,
  layernorm_row,
  concat_rows,
};

std::string to_string(OpKind kind);

// Generic dispatcher. `arg` is the factor for `scale` and ignored otherwise.
Var forward_op(OpKind kind, std::span<const Var> inputs, double arg = 1.0);

Var matmul(const Var& a, const Var& b);

// Elementwise binary ops with broadcasting of size-1 rows/columns.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double value);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
// Gradient passes where lo <= x <= hi.
Var clamp(const Var& a, double lo, double hi);
Var transpose(const Var& a);

// Softmax within each row.
Var softmax_rows(const Var& a);
// Per-row log-sum-exp, r x 1. Entries equal to -inf are treated as absent.
Var logsumexp_rows(const Var& a);
// Average of the rows, 1 x c.
Var mean_rows(const Var& a);
// Per-row maximum, r x 1. The subgradient goes to the first argmax.
Var max_rows(const Var& a);
// Sum of all entries, 1 x 1.
Var sum(const Var& a);
// Mean of all entries, 1 x 1.
Var mean(const Var& a);
// Each row divided by (its L2 norm + eps).
Var l2norm_rows(const Var& a, double eps = 1e-12);
// Each row standardized by its own mean and variance, sqrt(var + eps).
Var layernorm_row(const Var& a, double eps = 1e-5);
Var concat_rows(std::span<const Var> parts);
Var concat_rows(std::initializer_list<Var> parts);
Var slice(const Var& a, Index row, Index col, Index rows, Index cols);

// Segment ops. `offsets` has n_segments + 1 nondecreasing entries starting
// at 0; segment k spans [offsets[k], offsets[k+1]).

// Row-wise maximum inside each column segment, r x n_segments.
Var segment_max_cols(const Var& a, std::span<const Index> offsets);
// Softmax over the rows of each row segment, independently per column.
Var segment_softmax(const Var& a, std::span<const Index> offsets);
// Sum of the rows of each row segment, n_segments x c.
Var segment_sum_rows(const Var& a, std::span<const Index> offsets);

struct Window {
  Index start = 0;
  Index length = 1;
};
// Mean of each row window, n_windows x c.
Var window_means(const Var& a, std::span<const Window> windows);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double factor, const Var& a);

// Populates grad() of every node reachable from `loss` that requires one.
// Throws ContractError unless loss is 1 x 1.
void backward(const Var& loss);

void zero_grad(std::span<const Var> leaves);

// Largest |analytic - central difference| / max(1, |analytic|) over every
// coordinate of `params`. `loss_fn` must rebuild the graph from the current
// parameter values on each call. Throws NumericError on a non-finite loss.
double grad_check(const std::function<Var()>& loss_fn,
                  std::span<const Var> params, double step = 1e-4);

}  // namespace ral::diff
