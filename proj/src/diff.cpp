// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ral/diff.hpp"

#include "ral/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace ral::diff {

namespace {

thread_local bool g_no_grad = false;

std::string shape_of(const Tensor& t) {
  std::ostringstream os;
  os << "[" << t.rows() << " x " << t.cols() << "]";
  return os.str();
}

[[noreturn]] void dimension_error(const std::string& op, const Tensor& a,
                                  const Tensor& b) {
  throw DimensionError(op + ": incompatible shapes " + shape_of(a) + " and " +
                       shape_of(b));
}

void ensure_grad(Node& n) {
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
    n.grad = Tensor::Zero(n.value.rows(), n.value.cols());
  }
}

// Builds the result node; the graph edge is dropped when no input needs a
// gradient.
Var make_result(Tensor value, std::vector<NodePtr> parents,
                std::function<void(Node&)> rule) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = !g_no_grad && std::any_of(parents.begin(), parents.end(),
                           [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(rule);
  }
  return Var(std::move(node));
}

// Reduces a broadcast gradient back to the operand's shape.
Tensor reduce_to(const Tensor& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Tensor r = g;
  if (rows == 1 && r.rows() != 1) r = r.colwise().sum().eval();
  if (cols == 1 && r.cols() != 1) r = r.rowwise().sum().eval();
  return r;
}

Index broadcast_dim(Index a, Index b, bool& ok) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  ok = false;
  return 0;
}

Tensor expand(const Tensor& t, Index rows, Index cols) {
  if (t.rows() == rows && t.cols() == cols) return t;
  if (t.rows() == 1 && t.cols() == 1) return Tensor::Constant(rows, cols, t(0, 0));
  if (t.rows() == 1) return t.replicate(rows, 1);
  return t.replicate(1, cols);
}

enum class Binary { add, sub, mul };

Var binary(const Var& a, const Var& b, Binary kind, const char* name) {
  bool ok = true;
  const Index rows = broadcast_dim(a.rows(), b.rows(), ok);
  const Index cols = broadcast_dim(a.cols(), b.cols(), ok);
  if (!ok) dimension_error(name, a.value(), b.value());
  const bool same = a.rows() == b.rows() && a.cols() == b.cols();
  Tensor out;
  if (same) {
    switch (kind) {
      case Binary::add: out = a.value() + b.value(); break;
      case Binary::sub: out = a.value() - b.value(); break;
      case Binary::mul: out = a.value().cwiseProduct(b.value()); break;
    }
  } else {
    Tensor ea = expand(a.value(), rows, cols);
    Tensor eb = expand(b.value(), rows, cols);
    switch (kind) {
      case Binary::add: out = ea + eb; break;
      case Binary::sub: out = ea - eb; break;
      case Binary::mul: out = ea.cwiseProduct(eb); break;
    }
  }
  return make_result(std::move(out), {a.node(), b.node()}, [kind](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const Index r = self.value.rows();
    const Index c = self.value.cols();
    if (pa.requires_grad) {
      ensure_grad(pa);
      if (kind == Binary::mul) {
        pa.grad += reduce_to(self.grad.cwiseProduct(expand(pb.value, r, c)),
                             pa.value.rows(), pa.value.cols());
      } else {
        pa.grad += reduce_to(self.grad, pa.value.rows(), pa.value.cols());
      }
    }
    if (pb.requires_grad) {
      ensure_grad(pb);
      switch (kind) {
        case Binary::add:
          pb.grad += reduce_to(self.grad, pb.value.rows(), pb.value.cols());
          break;
        case Binary::sub:
          pb.grad -= reduce_to(self.grad, pb.value.rows(), pb.value.cols());
          break;
        case Binary::mul:
          pb.grad += reduce_to(self.grad.cwiseProduct(expand(pa.value, r, c)),
                               pb.value.rows(), pb.value.cols());
          break;
      }
    }
  });
}

void check_offsets(std::span<const Index> offsets, Index extent, const char* op) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != extent) {
    throw DimensionError(std::string(op) + ": offsets must start at 0 and end at " +
                         std::to_string(extent));
  }
  for (std::size_t k = 1; k < offsets.size(); ++k) {
    if (offsets[k] < offsets[k - 1]) {
      throw DimensionError(std::string(op) + ": offsets must be nondecreasing");
    }
  }
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

double Var::scalar() const {
  if (rows() != 1 || cols() != 1) {
    throw ContractError("scalar(): value has shape " + shape_of(value()));
  }
  return value()(0, 0);
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var variable(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var scalar_constant(double value) { return constant(Tensor::Constant(1, 1, value)); }

std::string to_string(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::scale: return "scale";
    case OpKind::tanh: return "tanh";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::softmax_rows: return "softmax-rows";
    case OpKind::mean_rows: return "mean-rows";
    case OpKind::max_rows: return "max-rows";
    case OpKind::l2norm_rows: return "l2norm-rows";
    case OpKind::layernorm_row: return "layernorm-row";
    case OpKind::concat_rows: return "concat-rows";
  }
  return "unknown";
}

Var forward_op(OpKind kind, std::span<const Var> inputs, double arg) {
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ContractError(to_string(kind) + ": expected " + std::to_string(n) +
                          " inputs, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::matmul: arity(2); return matmul(inputs[0], inputs[1]);
    case OpKind::add: arity(2); return add(inputs[0], inputs[1]);
    case OpKind::scale: arity(1); return scale(inputs[0], arg);
    case OpKind::tanh: arity(1); return tanh(inputs[0]);
    case OpKind::exp: arity(1); return exp(inputs[0]);
    case OpKind::log: arity(1); return log(inputs[0]);
    case OpKind::softmax_rows: arity(1); return softmax_rows(inputs[0]);
    case OpKind::mean_rows: arity(1); return mean_rows(inputs[0]);
    case OpKind::max_rows: arity(1); return max_rows(inputs[0]);
    case OpKind::l2norm_rows: arity(1); return l2norm_rows(inputs[0]);
    case OpKind::layernorm_row: arity(1); return layernorm_row(inputs[0]);
    case OpKind::concat_rows: return concat_rows(inputs);
  }
  throw ContractError("forward_op: unknown kind");
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) dimension_error("matmul", a.value(), b.value());
  Tensor out = a.value() * b.value();
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      ensure_grad(pa);
      pa.grad.noalias() += self.grad * pb.value.transpose();
    }
    if (pb.requires_grad) {
      ensure_grad(pb);
      pb.grad.noalias() += pa.value.transpose() * self.grad;
    }
  });
}

Var add(const Var& a, const Var& b) { return binary(a, b, Binary::add, "add"); }
Var sub(const Var& a, const Var& b) { return binary(a, b, Binary::sub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary(a, b, Binary::mul, "mul"); }

Var scale(const Var& a, double factor) {
  Tensor out = a.value() * factor;
  return make_result(std::move(out), {a.node()}, [factor](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad += self.grad * factor;
  });
}

Var add_scalar(const Var& a, double value) {
  Tensor out = a.value().array() + value;
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad += self.grad;
  });
}

Var tanh(const Var& a) {
  Tensor out = a.value().array().tanh();
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad.array() += self.grad.array() * (1.0 - self.value.array().square());
  });
}

Var exp(const Var& a) {
  Tensor out = a.value().array().exp();
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad.array() += self.grad.array() * self.value.array();
  });
}

Var log(const Var& a) {
  Tensor out = a.value().array().log();
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad.array() += self.grad.array() / p.value.array();
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad.array() +=
        self.grad.array() * self.value.array() * (1.0 - self.value.array());
  });
}

Var relu(const Var& a) {
  Tensor out = a.value().cwiseMax(0.0);
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad.array() += (p.value.array() > 0.0).select(self.grad.array(), 0.0);
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Tensor out = a.value().cwiseMax(lo).cwiseMin(hi);
  return make_result(std::move(out), {a.node()}, [lo, hi](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad.array() += (p.value.array() >= lo && p.value.array() <= hi)
                          .select(self.grad.array(), 0.0);
  });
}

Var transpose(const Var& a) {
  Tensor out = a.value().transpose();
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad += self.grad.transpose();
  });
}

Var softmax_rows(const Var& a) {
  Tensor out(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    const double m = a.value().row(i).maxCoeff();
    out.row(i) = (a.value().row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    const Eigen::VectorXd dots = self.grad.cwiseProduct(self.value).rowwise().sum();
    p.grad.array() +=
        self.value.array() * (self.grad.colwise() - dots).array();
  });
}

Var logsumexp_rows(const Var& a) {
  const double ninf = -std::numeric_limits<double>::infinity();
  Tensor out(a.rows(), 1);
  for (Index i = 0; i < a.rows(); ++i) {
    const double m = a.value().row(i).maxCoeff();
    if (m == ninf) {
      out(i, 0) = ninf;
      continue;
    }
    out(i, 0) = m + std::log((a.value().row(i).array() - m).exp().sum());
  }
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    for (Index i = 0; i < p.value.rows(); ++i) {
      const double lse = self.value(i, 0);
      if (!std::isfinite(lse)) continue;
      p.grad.row(i).array() +=
          self.grad(i, 0) * (p.value.row(i).array() - lse).exp();
    }
  });
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw ContractError("mean-rows: empty input");
  Tensor out = a.value().colwise().mean();
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad.rowwise() += self.grad.row(0) / static_cast<double>(p.value.rows());
  });
}

Var max_rows(const Var& a) {
  if (a.cols() == 0) throw ContractError("max-rows: empty rows");
  Tensor out(a.rows(), 1);
  std::vector<Index> arg(static_cast<std::size_t>(a.rows()));
  for (Index i = 0; i < a.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < a.cols(); ++j) {
      if (a.value()(i, j) > a.value()(i, best)) best = j;
    }
    arg[static_cast<std::size_t>(i)] = best;
    out(i, 0) = a.value()(i, best);
  }
  return make_result(std::move(out), {a.node()}, [arg = std::move(arg)](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    for (Index i = 0; i < p.value.rows(); ++i) {
      p.grad(i, arg[static_cast<std::size_t>(i)]) += self.grad(i, 0);
    }
  });
}

Var sum(const Var& a) {
  Tensor out = Tensor::Constant(1, 1, a.value().sum());
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad.array() += self.grad(0, 0);
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ContractError("mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var l2norm_rows(const Var& a, double eps) {
  const Eigen::VectorXd norms = a.value().rowwise().norm();
  Tensor out = (a.value().array().colwise() / (norms.array() + eps)).matrix();
  return make_result(std::move(out), {a.node()}, [norms, eps](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    for (Index i = 0; i < p.value.rows(); ++i) {
      const double n = norms(i);
      const double denom = n + eps;
      p.grad.row(i) += self.grad.row(i) / denom;
      if (n > 0.0) {
        const double gx = self.grad.row(i).dot(p.value.row(i));
        p.grad.row(i) -= (gx / (n * denom * denom)) * p.value.row(i);
      }
    }
  });
}

Var layernorm_row(const Var& a, double eps) {
  if (a.cols() == 0) throw ContractError("layernorm-row: empty rows");
  const Index c = a.cols();
  Tensor out(a.rows(), c);
  Eigen::VectorXd inv_std(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    const double mu = a.value().row(i).mean();
    const double var = (a.value().row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    out.row(i) = (a.value().row(i).array() - mu) * inv_std(i);
  }
  return make_result(std::move(out), {a.node()}, [inv_std](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    for (Index i = 0; i < p.value.rows(); ++i) {
      const auto g = self.grad.row(i).array();
      const auto y = self.value.row(i).array();
      const double gm = g.mean();
      const double gy = (g * y).mean();
      p.grad.row(i).array() += inv_std(i) * (g - gm - y * gy);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat-rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) dimension_error("concat-rows", parts.front().value(), p.value());
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
    parents.push_back(p.node());
  }
  return make_result(std::move(out), std::move(parents), [](Node& self) {
    Index r0 = 0;
    for (auto& pp : self.parents) {
      const Index n = pp->value.rows();
      if (pp->requires_grad) {
        ensure_grad(*pp);
        pp->grad += self.grad.middleRows(r0, n);
      }
      r0 += n;
    }
  });
}

Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice(const Var& a, Index row, Index col, Index rows, Index cols) {
  if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > a.rows() ||
      col + cols > a.cols()) {
    throw DimensionError("slice: block out of range for " + shape_of(a.value()));
  }
  Tensor out = a.value().block(row, col, rows, cols);
  return make_result(std::move(out), {a.node()}, [row, col](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad.block(row, col, self.value.rows(), self.value.cols()) += self.grad;
  });
}

Var segment_max_cols(const Var& a, std::span<const Index> offsets) {
  check_offsets(offsets, a.cols(), "segment-max-cols");
  const Index nseg = static_cast<Index>(offsets.size()) - 1;
  for (Index k = 0; k < nseg; ++k) {
    if (offsets[k + 1] == offsets[k]) throw ContractError("segment-max-cols: empty segment");
  }
  const Index r = a.rows();
  Tensor out(r, nseg);
  std::vector<Index> arg(static_cast<std::size_t>(r * nseg));
  const Tensor& x = a.value();
  for (Index k = 0; k < nseg; ++k) {
    for (Index i = 0; i < r; ++i) {
      Index best = offsets[k];
      double bv = x(i, best);
      for (Index j = offsets[k] + 1; j < offsets[k + 1]; ++j) {
        if (x(i, j) > bv) {
          bv = x(i, j);
          best = j;
        }
      }
      out(i, k) = bv;
      arg[static_cast<std::size_t>(k * r + i)] = best;
    }
  }
  return make_result(std::move(out), {a.node()}, [arg = std::move(arg)](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    const Index rr = self.value.rows();
    for (Index k = 0; k < self.value.cols(); ++k) {
      for (Index i = 0; i < rr; ++i) {
        p.grad(i, arg[static_cast<std::size_t>(k * rr + i)]) += self.grad(i, k);
      }
    }
  });
}

Var segment_softmax(const Var& a, std::span<const Index> offsets) {
  check_offsets(offsets, a.rows(), "segment-softmax");
  Tensor out(a.rows(), a.cols());
  for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
    const Index r0 = offsets[k];
    const Index n = offsets[k + 1] - r0;
    if (n == 0) continue;
    for (Index c = 0; c < a.cols(); ++c) {
      auto x = a.value().col(c).segment(r0, n);
      const double m = x.maxCoeff();
      auto y = out.col(c).segment(r0, n);
      y = (x.array() - m).exp().matrix();
      y /= y.sum();
    }
  }
  std::vector<Index> offs(offsets.begin(), offsets.end());
  return make_result(std::move(out), {a.node()}, [offs = std::move(offs)](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    for (std::size_t k = 0; k + 1 < offs.size(); ++k) {
      const Index r0 = offs[k];
      const Index n = offs[k + 1] - r0;
      if (n == 0) continue;
      for (Index c = 0; c < self.value.cols(); ++c) {
        auto y = self.value.col(c).segment(r0, n);
        auto g = self.grad.col(c).segment(r0, n);
        const double dot = g.dot(y);
        p.grad.col(c).segment(r0, n).array() += y.array() * (g.array() - dot);
      }
    }
  });
}

Var segment_sum_rows(const Var& a, std::span<const Index> offsets) {
  check_offsets(offsets, a.rows(), "segment-sum-rows");
  const Index nseg = static_cast<Index>(offsets.size()) - 1;
  Tensor out = Tensor::Zero(nseg, a.cols());
  for (Index k = 0; k < nseg; ++k) {
    const Index n = offsets[k + 1] - offsets[k];
    if (n > 0) out.row(k) = a.value().middleRows(offsets[k], n).colwise().sum();
  }
  std::vector<Index> offs(offsets.begin(), offsets.end());
  return make_result(std::move(out), {a.node()}, [offs = std::move(offs)](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    for (std::size_t k = 0; k + 1 < offs.size(); ++k) {
      const Index n = offs[k + 1] - offs[k];
      if (n > 0) p.grad.middleRows(offs[k], n).rowwise() += self.grad.row(static_cast<Index>(k));
    }
  });
}

Var window_means(const Var& a, std::span<const Window> windows) {
  Tensor out(static_cast<Index>(windows.size()), a.cols());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const Window& win = windows[w];
    if (win.length < 1 || win.start < 0 || win.start + win.length > a.rows()) {
      throw DimensionError("window-means: window out of range for " + shape_of(a.value()));
    }
    out.row(static_cast<Index>(w)) = a.value().middleRows(win.start, win.length).colwise().mean();
  }
  std::vector<Window> wins(windows.begin(), windows.end());
  return make_result(std::move(out), {a.node()}, [wins = std::move(wins)](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    for (std::size_t w = 0; w < wins.size(); ++w) {
      const auto g = self.grad.row(static_cast<Index>(w)) / static_cast<double>(wins[w].length);
      p.grad.middleRows(wins[w].start, wins[w].length).rowwise() += g;
    }
  });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator-(const Var& a) { return scale(a, -1.0); }
Var operator*(double factor, const Var& a) { return scale(a, factor); }

void backward(const Var& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward: loss must be a 1 x 1 scalar, got " +
                        (loss.defined() ? shape_of(loss.value()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward) {
      n->grad = Tensor::Zero(n->value.rows(), n->value.cols());
    } else {
      ensure_grad(*n);
    }
  }
  Node& root = *loss.node();
  if (root.backward) {
    root.grad(0, 0) = 1.0;
  } else {
    root.grad(0, 0) += 1.0;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

void zero_grad(std::span<const Var> leaves) {
  for (const Var& v : leaves) {
    v.node()->grad = Tensor::Zero(v.rows(), v.cols());
  }
}

double grad_check(const std::function<Var()>& loss_fn, std::span<const Var> params,
                  double step) {
  if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
  auto eval = [&]() {
    const double f = loss_fn().scalar();
    if (!std::isfinite(f)) throw NumericError("grad_check: loss is not finite");
    return f;
  };

  zero_grad(params);
  Var loss = loss_fn();
  if (!std::isfinite(loss.scalar())) throw NumericError("grad_check: loss is not finite");
  backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Var& p : params) analytic.push_back(p.grad());
  loss = Var();

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& value = params[k].node()->value;
    for (Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + step;
      const double fp = eval();
      value.data()[i] = saved - step;
      const double fm = eval();
      value.data()[i] = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[k].data()[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

}  // namespace ral::diff
