#pragma once

// Reverse-mode differentiation over small dense matrices, plus the
// feed-forward networks built on top of it.
//
// A Tape records every operation in creation order, so creation order is a
// topological order and backward() is a single reverse sweep. Rows of a
// matrix are batch samples throughout.

#include "tgail/core.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tgail::ad {

enum class Op {
  constant,
  variable,
  parameter,
  matmul,
  add,
  sub,
  mul,
  scale,
  add_scalar,
  add_row,
  mul_row,
  neg,
  tanh,
  relu,
  sigmoid,
  exp,
  log,
  square,
  clamp,
  softmax,
  log_softmax,
  sum,
  mean,
  row_sum,
  concat,
  dot_rows,
  weighted_sum,
};

std::string_view op_name(Op op);

class Tape;
class ParamSet;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Mat& value() const;
  const Mat& grad() const;
  Scalar scalar() const { return value()(0, 0); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Op op() const;
  std::span<const int> parents() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives no gradient.
  Var constant(Mat value);
  /// Leaf whose gradient is kept on the tape after backward().
  Var variable(Mat value);
  /// One leaf per entry of `params`; backward() adds into params.grad(i).
  std::vector<Var> bind(ParamSet& params);

  /// Propagates d(out)/d(node) to every node. `out` must be 1x1.
  void backward(const Var& out);

  std::size_t size() const { return nodes_.size(); }

  // Used by operation implementations.
  Var push(Mat value, Op op, std::vector<int> parents, Backprop backprop);
  const Mat& value(int id) const { return nodes_[id].value; }
  const Mat& grad(int id) const { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  Op op(int id) const { return nodes_[id].op; }
  std::span<const int> parents(int id) const { return nodes_[id].parents; }

  /// grad(id) += delta, skipped for nodes that do not need gradients.
  template <typename Expr>
  void accumulate(int id, const Expr& delta) {
    Node& n = nodes_[id];
    if (n.needs_grad) n.grad += delta;
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Op op = Op::constant;
    std::vector<int> parents;
    Backprop backprop;
    bool needs_grad = false;
    Mat* sink = nullptr;
  };

  std::vector<Node> nodes_;
};

// Operations. Shapes follow Eigen semantics; broadcasting is limited to the
// explicit *_row forms.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Scalar s);
Var add_scalar(const Var& a, Scalar s);
Var add_row(const Var& a, const Var& row);  // a (n x m) + row (1 x m)
Var mul_row(const Var& a, const Var& row);  // a (n x m) .* row (1 x m)
Var neg(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
/// log(max(a, floor)); zero gradient where the floor is active.
Var log(const Var& a, Scalar floor = 1e-6);
Var square(const Var& a);
/// Elementwise clamp to [lo, hi]; zero gradient outside the open interval.
Var clamp(const Var& a, Scalar lo, Scalar hi);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var row_sum(const Var& a);  // n x m -> n x 1
Var concat_cols(const Var& a, const Var& b);
/// Per-row inner product with a constant matrix of the same shape.
Var dot_rows(const Var& a, const Mat& w);
/// Scalar sum_i w_i a_i for a column a.
Var weighted_sum(const Var& a, const Eigen::Ref<const Vec>& w);

/// Named parameter arrays with a stable flat ordering (entry order, each
/// entry column-major).
class ParamSet {
 public:
  void add(std::string name, Mat value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Mat& value(std::size_t i) { return values_[i]; }
  const Mat& value(std::size_t i) const { return values_[i]; }
  Mat& grad(std::size_t i) { return grads_[i]; }
  const Mat& grad(std::size_t i) const { return grads_[i]; }
  std::optional<std::size_t> find(std::string_view name) const;

  Index dim() const;
  Vec flatten() const;
  Vec flatten_grad() const;
  void unflatten(const Eigen::Ref<const Vec>& flat);
  void zero_grad();
  /// Same names and shapes.
  bool same_layout(const ParamSet& other) const;
  ParamSet zeros_like() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
  std::vector<Mat> grads_;
};

enum class Activation { tanh, relu, identity, softmax };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden;
  int output_dim = 1;
  /// One per layer: hidden.size() + 1 entries.
  std::vector<Activation> activations;

  static MlpSpec make(int input_dim, std::vector<int> hidden, int output_dim,
                      Activation hidden_act, Activation output_act);

  std::size_t layers() const { return hidden.size() + 1; }
  int layer_in(std::size_t l) const { return l == 0 ? input_dim : hidden[l - 1]; }
  int layer_out(std::size_t l) const { return l == hidden.size() ? output_dim : hidden[l]; }
  /// Throws DimensionError on zero sizes or a wrong activation count.
  void validate() const;
  /// Number of ParamSet entries the network occupies (W and b per layer).
  std::size_t param_entries() const { return 2 * layers(); }
};

/// Orthogonal weights scaled by `hidden_gain` (hidden layers) or
/// `output_gain` (last layer); zero biases. Entries are named
/// "<prefix>W<l>" and "<prefix>b<l>".
void init_mlp(ParamSet& params, const MlpSpec& spec, Rng& rng, const std::string& prefix = "",
              Scalar hidden_gain = 1.0, Scalar output_gain = 0.01);

/// Differentiable forward pass. `params` holds W0, b0, W1, b1, ...
Var forward(const MlpSpec& spec, std::span<const Var> params, const Var& input);

/// Plain forward pass without a tape, reading params from `offset`.
/// Bit-identical to forward().
Mat evaluate(const MlpSpec& spec, const ParamSet& params, const Mat& input,
             std::size_t offset = 0);

/// Forward-mode derivative of the network output along a parameter
/// direction. `tangent` has the layout of `params`.
struct Jvp {
  Mat value;
  Mat tangent;
};
Jvp jvp(const MlpSpec& spec, const ParamSet& params, const ParamSet& tangent, const Mat& input,
        std::size_t offset = 0);

/// Row-wise sum_i [-log(2 pi)/2 - log sigma_i - (a_i - mu_i)^2 / (2 sigma_i^2)].
/// `mean` is n x d, `log_std` is 1 x d, result n x 1.
Var gaussian_log_prob(const Mat& actions, const Var& mean, const Var& log_std);

using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// Max over parameters of |analytic - central difference| / max(1, |central|).
Scalar grad_check(ParamSet& params, const LossBuilder& loss, Scalar h);

/// Evaluates a loss and writes its gradient into params (grads zeroed first).
Scalar value_and_grad(ParamSet& params, const LossBuilder& loss);

/// Adaptive-moment optimizer over a ParamSet. step() descends along the
/// stored gradients.
class Adam {
 public:
  Adam(const ParamSet& params, Scalar lr, Scalar beta1 = 0.9, Scalar beta2 = 0.999,
       Scalar eps = 1e-8);

  void step(ParamSet& params);
  void set_lr(Scalar lr) { lr_ = lr; }
  Scalar lr() const { return lr_; }

 private:
  Scalar lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace tgail::ad
