#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cae/errors.hpp"

namespace cae {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tape;

// Storage node shared by tensor handles. `grad` is empty until the node is
// touched by a backward pass (or created as a parameter).
struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  const Tape* producer_tape = nullptr;  // tape that recorded the producing op
  std::string name;                     // set for parameters only

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

// Value-semantics handle onto a shared dense array of doubles. All model
// activations, parameters and losses are Tensors.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from_values(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  // A trainable leaf: grad buffer allocated up front, participates in
  // optimizer steps and checkpointing under `name`.
  static Tensor parameter(Shape shape, std::vector<double> values, std::string name);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->values.size(); }

  std::span<const double> values() const { return node_->values; }
  std::span<double> mutable_values() { return node_->values; }
  double value_at(std::size_t i) const { return node_->values[i]; }
  double scalar_value() const;

  bool requires_grad() const { return node_->requires_grad; }
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  const std::string& name() const { return node_->name; }

  // A constant copy of the values: no grad, no tape history. Gradients never
  // flow through a detached tensor.
  Tensor detach() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<TensorNode> node) { return Tensor(std::move(node)); }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode> node_;
};

// Wengert list for reverse-mode differentiation. Forward ops append one entry
// per operation while a tape is active; backward() replays the entries in
// reverse recording order, which is a valid topological order by
// construction.
class Tape {
 public:
  struct Entry {
    std::shared_ptr<TensorNode> output;
    std::function<void()> backward;  // accumulates into the inputs' grads
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::shared_ptr<TensorNode> output, std::function<void()> backward);
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

// Makes `tape` the recording target for ops on the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Seeds d(loss)/d(loss) = 1 and propagates gradients to every node recorded
// on the tape. Parameters not reachable from `loss` keep their zero grad.
void backward(const Tensor& loss, Tape& tape);

// ---- forward ops (all record a backward rule on the active tape) ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor sum(const Tensor& a);        // scalar
Tensor mean_rows(const Tensor& a);  // [n x d] -> [d]
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_cols(const Tensor& a, std::size_t col_begin, std::size_t col_end);
// T tensors of [B x V] stacked along a new middle axis -> [B x T x V].
Tensor stack_steps(const std::vector<Tensor>& steps);
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
Tensor softmax_rows(const Tensor& a);

// Mean over rows of -log softmax(logits)[target]; numerically stabilized by
// max subtraction. Optional per-row weights turn it into a masked weighted
// mean (used for padded positions).
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets,
                             std::span<const double> weights = {});

// Normalizes the last dimension to unit L2 norm. Throws DegenerateInputError
// when a slice has norm <= 1e-12.
Tensor l2_normalize(const Tensor& a);

// Sum of |a_i - b_i| over all elements; subgradient 0 at ties.
Tensor l1_distance(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---- optimizer ----

// Gradient-descent parameter update. Adam state is kept per parameter node,
// so the same optimizer instance must be reused across steps.
class Optimizer {
 public:
  enum class Kind { sgd, adam };

  Optimizer(Kind kind, double learning_rate);

  Kind kind() const { return kind_; }
  double learning_rate() const { return learning_rate_; }

  // Applies one update to every parameter and zeroes their grads.
  // A parameter without a populated grad buffer is a contract violation.
  void step(const std::vector<Tensor>& params);

  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

 private:
  struct AdamSlot {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
  };

  Kind kind_;
  double learning_rate_;
  std::unordered_map<const TensorNode*, AdamSlot> adam_state_;
};

// Uniformly fills a parameter-to-be with values in [-r, r] drawn from `rng`.
std::vector<double> uniform_values(std::size_t count, double r, std::uint64_t& rng_state);

// SplitMix64 step, used everywhere a cheap deterministic stream is needed.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace cae
