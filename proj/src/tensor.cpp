#include "cae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cae {

namespace {

thread_local Tape* g_active_tape = nullptr;

using NodePtr = std::shared_ptr<TensorNode>;

NodePtr make_node(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  return node;
}

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

// Finishes an op: wraps the result values, and if a tape is active and some
// input requires grad, marks the output differentiable and records `rule`.
Tensor finish_op(Shape shape, std::vector<double> values,
                 std::initializer_list<const Tensor*> inputs,
                 std::function<void(const NodePtr&)> rule_factory) {
  NodePtr out = make_node(std::move(shape), std::move(values));
  Tape* tape = Tape::active();
  if (tape != nullptr && any_requires_grad(inputs)) {
    out->requires_grad = true;
    out->producer_tape = tape;
    rule_factory(out);
  }
  return Tensor::wrap(out);
}

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor operand");
}

// Trailing-dimension broadcast: shapes are equal, or the smaller shape is a
// suffix of the larger one (e.g. [B x 4h] + [4h]).
struct BroadcastPlan {
  Shape out_shape;
  std::size_t a_period;  // index i of the output reads a.values[i % a_period]
  std::size_t b_period;
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

BroadcastPlan broadcast_plan(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) {
    return {a.shape(), a.numel(), b.numel()};
  }
  if (is_suffix(b.shape(), a.shape())) {
    if (b.numel() == 0 || a.numel() % b.numel() != 0) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_to_string(b.shape()) +
                           " over " + shape_to_string(a.shape()));
    }
    return {a.shape(), a.numel(), b.numel()};
  }
  if (is_suffix(a.shape(), b.shape())) {
    if (a.numel() == 0 || b.numel() % a.numel() != 0) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_to_string(a.shape()) +
                           " over " + shape_to_string(b.shape()));
    }
    return {b.shape(), a.numel(), b.numel()};
  }
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) +
                       " and " + shape_to_string(b.shape()));
}

// Shared skeleton for broadcasting binary ops. `fwd(x, y)` computes the value,
// `dx(gout)` and `dy(gout)` the per-element input gradients.
template <typename Fwd, typename Dx, typename Dy>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, Dx dx, Dy dy) {
  check_defined(a, op);
  check_defined(b, op);
  BroadcastPlan plan = broadcast_plan(a, b, op);
  const std::size_t n = shape_numel(plan.out_shape);
  std::vector<double> values(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = fwd(av[i % plan.a_period], bv[i % plan.b_period]);
  }
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return finish_op(plan.out_shape, std::move(values), {&a, &b}, [&](const NodePtr& out) {
    Tape::active()->record(out, [out, an, bn, plan, dx, dy]() {
      const std::size_t count = out->values.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < count; ++i) {
          an->grad[i % plan.a_period] +=
              dx(an->values[i % plan.a_period], bn->values[i % plan.b_period]) * out->grad[i];
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < count; ++i) {
          bn->grad[i % plan.b_period] +=
              dy(an->values[i % plan.a_period], bn->values[i % plan.b_period]) * out->grad[i];
        }
      }
    });
  });
}

// Shared skeleton for elementwise unary ops: `fwd(x)` and `dydx(x, y)` where
// y is the already-computed output value.
template <typename Fwd, typename Dydx>
Tensor unary_op(const Tensor& a, const char* op, Fwd fwd, Dydx dydx) {
  check_defined(a, op);
  const std::size_t n = a.numel();
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = fwd(a.values()[i]);
  NodePtr an = a.node();
  return finish_op(a.shape(), std::move(values), {&a}, [&](const NodePtr& out) {
    Tape::active()->record(out, [out, an, dydx]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < out->values.size(); ++i) {
        an->grad[i] += dydx(an->values[i], out->values[i]) * out->grad[i];
      }
    });
  });
}

void check_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " +
                         shape_to_string(t.shape()));
  }
}

}  // namespace

// ==== shape helpers ====

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// ==== Tensor ====

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> values(shape_numel(shape), 0.0);
  return Tensor(make_node(std::move(shape), std::move(values)));
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> values(shape_numel(shape), value);
  return Tensor(make_node(std::move(shape), std::move(values)));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
  return Tensor(make_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values, std::string name) {
  NodePtr node = make_node(std::move(shape), std::move(values));
  node->requires_grad = true;
  node->name = std::move(name);
  node->ensure_grad();
  return Tensor(std::move(node));
}

double Tensor::scalar_value() const {
  if (!defined() || numel() != 1) {
    throw ContractError("scalar_value on a tensor of shape " +
                        (defined() ? shape_to_string(shape()) : std::string("<undefined>")));
  }
  return node_->values[0];
}

void Tensor::zero_grad() {
  if (!defined()) return;
  node_->grad.assign(node_->values.size(), 0.0);
}

Tensor Tensor::detach() const {
  if (!defined()) return Tensor();
  auto node = std::make_shared<TensorNode>();
  node->shape = node_->shape;
  node->values = node_->values;
  return Tensor(std::move(node));
}

// ==== Tape ====

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<TensorNode> output, std::function<void()> backward_fn) {
  entries_.push_back(Entry{std::move(output), std::move(backward_fn)});
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(const Tensor& loss, Tape& tape) {
  check_defined(loss, "backward");
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_to_string(loss.shape()));
  }
  if (loss.node()->producer_tape != &tape) {
    throw ContractError("backward: loss was not recorded on the given tape");
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] = 1.0;
  const auto& entries = tape.entries();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    // Entries whose output was never reached from the loss have no grad
    // buffer; their backward rule would only propagate zeros.
    if (!it->output->grad.empty()) it->backward();
  }
}

// ==== linear algebra ====

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  check_rank2(a, "matmul");
  check_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw DimensionError("matmul: inner dimensions disagree: " + shape_to_string(a.shape()) +
                         " * " + shape_to_string(b.shape()));
  }
  std::vector<double> values(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = av[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = &bv[kk * n];
      double* orow = &values[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return finish_op({m, n}, std::move(values), {&a, &b}, [&](const NodePtr& out) {
    Tape::active()->record(out, [out, an, bn, m, k, n]() {
      const std::vector<double>& gout = out->grad;
      if (an->requires_grad) {
        an->ensure_grad();
        // dA[i,k] = sum_j gout[i,j] * B[k,j]
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double* grow = &gout[i * n];
            const double* brow = &bn->values[kk * n];
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            an->grad[i * k + kk] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        // dB[k,j] = sum_i A[i,k] * gout[i,j]
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = an->values[i * k + kk];
            if (aik == 0.0) continue;
            const double* grow = &gout[i * n];
            double* brow = &bn->grad[kk * n];
            for (std::size_t j = 0; j < n; ++j) brow[j] += aik * grow[j];
          }
        }
      }
    });
  });
}

Tensor transpose(const Tensor& a) {
  check_defined(a, "transpose");
  check_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> values(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) values[j * m + i] = a.values()[i * n + j];
  }
  NodePtr an = a.node();
  return finish_op({n, m}, std::move(values), {&a}, [&](const NodePtr& out) {
    Tape::active()->record(out, [out, an, m, n]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += out->grad[j * m + i];
      }
    });
  });
}

// ==== elementwise ====

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor neg(const Tensor& a) {
  return unary_op(
      a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& a) {
  check_defined(a, "log");
  for (double v : a.values()) {
    if (!(v > 0.0)) {
      throw DomainError("log of non-positive value " + std::to_string(v));
    }
  }
  return unary_op(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary_op(
      a, "add_scalar", [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) {
    throw ContractError("clamp: lower bound " + std::to_string(lo) + " above upper bound " +
                        std::to_string(hi));
  }
  return unary_op(
      a, "clamp", [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// ==== reductions and reshaping ====

Tensor sum(const Tensor& a) {
  check_defined(a, "sum");
  double total = 0.0;
  for (double v : a.values()) total += v;
  NodePtr an = a.node();
  return finish_op({1}, {total}, {&a}, [&](const NodePtr& out) {
    Tape::active()->record(out, [out, an]() {
      an->ensure_grad();
      const double g = out->grad[0];
      for (double& gi : an->grad) gi += g;
    });
  });
}

Tensor mean_rows(const Tensor& a) {
  check_defined(a, "mean_rows");
  check_rank2(a, "mean_rows");
  const std::size_t n = a.shape()[0], d = a.shape()[1];
  if (n == 0) throw DegenerateInputError("mean_rows over zero rows");
  std::vector<double> values(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) values[j] += a.values()[i * d + j];
  }
  for (double& v : values) v /= static_cast<double>(n);
  NodePtr an = a.node();
  return finish_op({d}, std::move(values), {&a}, [&](const NodePtr& out) {
    Tape::active()->record(out, [out, an, n, d]() {
      an->ensure_grad();
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) an->grad[i * d + j] += out->grad[j] * inv;
      }
    });
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                         shape_to_string(shape));
  }
  std::vector<double> values(a.values().begin(), a.values().end());
  NodePtr an = a.node();
  return finish_op(std::move(shape), std::move(values), {&a}, [&](const NodePtr& out) {
    Tape::active()->record(out, [out, an]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < out->values.size(); ++i) an->grad[i] += out->grad[i];
    });
  });
}

Tensor slice_cols(const Tensor& a, std::size_t col_begin, std::size_t col_end) {
  check_defined(a, "slice_cols");
  check_rank2(a, "slice_cols");
  const std::size_t n = a.shape()[0], d = a.shape()[1];
  if (col_begin >= col_end || col_end > d) {
    throw IndexError("slice_cols: invalid column range [" + std::to_string(col_begin) + ", " +
                     std::to_string(col_end) + ") for width " + std::to_string(d));
  }
  const std::size_t w = col_end - col_begin;
  std::vector<double> values(n * w);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < w; ++j) values[i * w + j] = a.values()[i * d + col_begin + j];
  }
  NodePtr an = a.node();
  return finish_op({n, w}, std::move(values), {&a}, [&](const NodePtr& out) {
    Tape::active()->record(out, [out, an, n, d, w, col_begin]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          an->grad[i * d + col_begin + j] += out->grad[i * w + j];
        }
      }
    });
  });
}

Tensor stack_steps(const std::vector<Tensor>& steps) {
  if (steps.empty()) throw ContractError("stack_steps: no tensors given");
  for (const Tensor& s : steps) {
    check_defined(s, "stack_steps");
    check_rank2(s, "stack_steps");
    if (s.shape() != steps.front().shape()) {
      throw DimensionError("stack_steps: mixed shapes " + shape_to_string(steps.front().shape()) +
                           " and " + shape_to_string(s.shape()));
    }
  }
  const std::size_t T = steps.size();
  const std::size_t B = steps.front().shape()[0], V = steps.front().shape()[1];
  std::vector<double> values(B * T * V);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      const double* src = &steps[t].values()[b * V];
      double* dst = &values[(b * T + t) * V];
      std::copy(src, src + V, dst);
    }
  }
  std::vector<NodePtr> nodes;
  nodes.reserve(T);
  bool needs_grad = false;
  for (const Tensor& s : steps) {
    nodes.push_back(s.node());
    needs_grad = needs_grad || s.requires_grad();
  }
  NodePtr out = make_node({B, T, V}, std::move(values));
  Tape* tape = Tape::active();
  if (tape != nullptr && needs_grad) {
    out->requires_grad = true;
    out->producer_tape = tape;
    tape->record(out, [out, nodes, B, T, V]() {
      for (std::size_t t = 0; t < T; ++t) {
        if (!nodes[t]->requires_grad) continue;
        nodes[t]->ensure_grad();
        for (std::size_t b = 0; b < B; ++b) {
          const double* src = &out->grad[(b * T + t) * V];
          double* dst = &nodes[t]->grad[b * V];
          for (std::size_t v = 0; v < V; ++v) dst[v] += src[v];
        }
      }
    });
  }
  return Tensor::wrap(out);
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  check_defined(table, "embedding_lookup");
  check_rank2(table, "embedding_lookup");
  const std::size_t V = table.shape()[0], e = table.shape()[1];
  const std::size_t n = ids.size();
  std::vector<double> values(n * e);
  for (std::size_t i = 0; i < n; ++i) {
    const int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= V) {
      throw IndexError("embedding_lookup: id " + std::to_string(id) +
                       " outside table of size " + std::to_string(V));
    }
    const double* src = &table.values()[static_cast<std::size_t>(id) * e];
    std::copy(src, src + e, &values[i * e]);
  }
  std::vector<int> ids_copy(ids.begin(), ids.end());
  NodePtr tn = table.node();
  return finish_op({n, e}, std::move(values), {&table}, [&](const NodePtr& out) {
    Tape::active()->record(out, [out, tn, ids_copy, e]() {
      tn->ensure_grad();
      for (std::size_t i = 0; i < ids_copy.size(); ++i) {
        const double* src = &out->grad[i * e];
        double* dst = &tn->grad[static_cast<std::size_t>(ids_copy[i]) * e];
        for (std::size_t j = 0; j < e; ++j) dst[j] += src[j];
      }
    });
  });
}

// ==== softmax family ====

namespace {

// Row-wise softmax with max subtraction; writes probabilities into `probs`.
void softmax_fill(const std::span<const double>& logits, std::size_t rows, std::size_t cols,
                  std::vector<double>& probs) {
  probs.resize(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = &logits[i * cols];
    double mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double p = std::exp(row[j] - mx);
      probs[i * cols + j] = p;
      denom += p;
    }
    for (std::size_t j = 0; j < cols; ++j) probs[i * cols + j] /= denom;
  }
}

}  // namespace

Tensor softmax_rows(const Tensor& a) {
  check_defined(a, "softmax_rows");
  check_rank2(a, "softmax_rows");
  const std::size_t n = a.shape()[0], d = a.shape()[1];
  std::vector<double> probs;
  softmax_fill(a.values(), n, d, probs);
  NodePtr an = a.node();
  return finish_op({n, d}, std::move(probs), {&a}, [&](const NodePtr& out) {
    Tape::active()->record(out, [out, an, n, d]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double* y = &out->values[i * d];
        const double* g = &out->grad[i * d];
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += y[j] * g[j];
        for (std::size_t j = 0; j < d; ++j) an->grad[i * d + j] += y[j] * (g[j] - dot);
      }
    });
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets,
                             std::span<const double> weights) {
  check_defined(logits, "softmax_cross_entropy");
  check_rank2(logits, "softmax_cross_entropy");
  const std::size_t n = logits.shape()[0], V = logits.shape()[1];
  if (targets.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(n) + " rows");
  }
  if (!weights.empty() && weights.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(weights.size()) +
                         " weights for " + std::to_string(n) + " rows");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= V) {
      throw IndexError("softmax_cross_entropy: target " + std::to_string(targets[i]) +
                       " outside vocabulary of size " + std::to_string(V));
    }
  }
  // Row coefficients: 1/n unweighted, w_i / sum(w) weighted.
  std::vector<double> coeff(n);
  if (weights.empty()) {
    std::fill(coeff.begin(), coeff.end(), 1.0 / static_cast<double>(n));
  } else {
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw ContractError("softmax_cross_entropy: negative weight");
      total += w;
    }
    if (total <= 0.0) {
      throw DegenerateInputError("softmax_cross_entropy: all row weights are zero");
    }
    for (std::size_t i = 0; i < n; ++i) coeff[i] = weights[i] / total;
  }

  std::vector<double> probs;
  softmax_fill(logits.values(), n, V, probs);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // -log p[target]; recompute from the stabilized log-sum-exp for accuracy
    const double* row = &logits.values()[i * V];
    double mx = row[0];
    for (std::size_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < V; ++j) denom += std::exp(row[j] - mx);
    const double log_prob = row[static_cast<std::size_t>(targets[i])] - mx - std::log(denom);
    loss -= coeff[i] * log_prob;
  }

  std::vector<int> targets_copy(targets.begin(), targets.end());
  NodePtr ln = logits.node();
  return finish_op({1}, {loss}, {&logits}, [&](const NodePtr& out) {
    Tape::active()->record(
        out, [out, ln, probs = std::move(probs), targets_copy, coeff = std::move(coeff), n, V]() {
          ln->ensure_grad();
          const double g = out->grad[0];
          for (std::size_t i = 0; i < n; ++i) {
            const double c = coeff[i] * g;
            for (std::size_t j = 0; j < V; ++j) {
              double delta = probs[i * V + j];
              if (j == static_cast<std::size_t>(targets_copy[i])) delta -= 1.0;
              ln->grad[i * V + j] += c * delta;
            }
          }
        });
  });
}

// ==== geometry ====

Tensor l2_normalize(const Tensor& a) {
  check_defined(a, "l2_normalize");
  if (a.rank() == 0 || a.shape().back() == 0) {
    throw DimensionError("l2_normalize: empty last dimension in " + shape_to_string(a.shape()));
  }
  const std::size_t d = a.shape().back();
  const std::size_t slices = a.numel() / d;
  std::vector<double> values(a.numel());
  std::vector<double> norms(slices);
  for (std::size_t s = 0; s < slices; ++s) {
    const double* x = &a.values()[s * d];
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += x[j] * x[j];
    const double norm = std::sqrt(sq);
    if (norm <= 1e-12) {
      throw DegenerateInputError("l2_normalize: slice " + std::to_string(s) +
                                 " has near-zero norm");
    }
    norms[s] = norm;
    for (std::size_t j = 0; j < d; ++j) values[s * d + j] = x[j] / norm;
  }
  NodePtr an = a.node();
  return finish_op(a.shape(), std::move(values), {&a}, [&](const NodePtr& out) {
    Tape::active()->record(out, [out, an, norms = std::move(norms), d, slices]() {
      an->ensure_grad();
      for (std::size_t s = 0; s < slices; ++s) {
        const double* x = &an->values[s * d];
        const double* g = &out->grad[s * d];
        const double norm = norms[s];
        double xg = 0.0;
        for (std::size_t j = 0; j < d; ++j) xg += x[j] * g[j];
        const double inv = 1.0 / norm;
        const double inv3 = inv * inv * inv;
        for (std::size_t j = 0; j < d; ++j) {
          an->grad[s * d + j] += g[j] * inv - x[j] * xg * inv3;
        }
      }
    });
  });
}

Tensor l1_distance(const Tensor& a, const Tensor& b) {
  check_defined(a, "l1_distance");
  check_defined(b, "l1_distance");
  if (a.shape() != b.shape()) {
    throw DimensionError("l1_distance: shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " differ");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    total += std::fabs(a.values()[i] - b.values()[i]);
  }
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return finish_op({1}, {total}, {&a, &b}, [&](const NodePtr& out) {
    Tape::active()->record(out, [out, an, bn]() {
      const double g = out->grad[0];
      for (std::size_t i = 0; i < an->values.size(); ++i) {
        const double diff = an->values[i] - bn->values[i];
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        if (an->requires_grad) {
          an->ensure_grad();
          an->grad[i] += sign * g;
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->grad[i] -= sign * g;
        }
      }
    });
  });
}

// ==== optimizer ====

Optimizer::Optimizer(Kind kind, double learning_rate)
    : kind_(kind), learning_rate_(learning_rate) {
  if (learning_rate < 0.0) {
    throw ConfigError("optimizer learning rate must be non-negative, got " +
                      std::to_string(learning_rate));
  }
}

void Optimizer::step(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) {
    if (!p.defined() || !p.requires_grad() || !p.has_grad()) {
      throw ContractError("optimizer step on a tensor without gradient" +
                          (p.defined() && !p.name().empty() ? " (" + p.name() + ")" : ""));
    }
  }
  for (const Tensor& pc : params) {
    Tensor p = pc;
    TensorNode* node = p.node().get();
    std::span<double> v = p.mutable_values();
    const std::span<const double> g = p.grad();
    if (kind_ == Kind::sgd) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= learning_rate_ * g[i];
    } else {
      AdamSlot& slot = adam_state_[node];
      if (slot.m.size() != v.size()) {
        slot.m.assign(v.size(), 0.0);
        slot.v.assign(v.size(), 0.0);
        slot.t = 0;
      }
      slot.t += 1;
      const double b1t = 1.0 - std::pow(beta1, static_cast<double>(slot.t));
      const double b2t = 1.0 - std::pow(beta2, static_cast<double>(slot.t));
      for (std::size_t i = 0; i < v.size(); ++i) {
        slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * g[i];
        slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = slot.m[i] / b1t;
        const double vhat = slot.v[i] / b2t;
        v[i] -= learning_rate_ * mhat / (std::sqrt(vhat) + epsilon);
      }
    }
    p.zero_grad();
  }
}

// ==== deterministic randomness ====

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<double> uniform_values(std::size_t count, double r, std::uint64_t& rng_state) {
  std::vector<double> out(count);
  for (double& v : out) {
    // 53 random mantissa bits -> uniform in [0, 1), then mapped to [-r, r)
    const double u = static_cast<double>(splitmix64(rng_state) >> 11) * 0x1.0p-53;
    v = (2.0 * u - 1.0) * r;
  }
  return out;
}

}  // namespace cae
