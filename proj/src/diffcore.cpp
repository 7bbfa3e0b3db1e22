#include "tgail/diffcore.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <fmt/format.h>
#include <sstream>

namespace tgail {

std::string hex64(std::uint64_t h) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace tgail

namespace tgail::ad {

namespace {

Mat softmax_value(const Mat& a) {
  Mat y(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    const Scalar m = a.row(i).maxCoeff();
    y.row(i) = (a.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

Mat log_softmax_value(const Mat& a) {
  Mat y(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    const Scalar m = a.row(i).maxCoeff();
    const Scalar lse = m + std::log((a.row(i).array() - m).exp().sum());
    y.row(i) = (a.row(i).array() - lse).matrix();
  }
  return y;
}

Mat tanh_value(const Mat& a) {
  return a.unaryExpr([](Scalar v) { return std::tanh(v); });
}

Mat relu_value(const Mat& a) { return a.cwiseMax(0.0); }

Mat apply_activation(Activation act, Mat z) {
  switch (act) {
    case Activation::tanh:
      return tanh_value(z);
    case Activation::relu:
      return relu_value(z);
    case Activation::identity:
      return z;
    case Activation::softmax:
      return softmax_value(z);
  }
  return z;
}

void require_same_shape(const Var& a, const Var& b, std::string_view what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(fmt::format("{}: shape mismatch {}x{} vs {}x{}", what, a.rows(), a.cols(),
                                     b.rows(), b.cols()));
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::invalid_argument("operation on an unbound Var");
  return *a.tape();
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::variable: return "variable";
    case Op::parameter: return "parameter";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::add_scalar: return "add_scalar";
    case Op::add_row: return "add_row";
    case Op::mul_row: return "mul_row";
    case Op::neg: return "neg";
    case Op::tanh: return "tanh";
    case Op::relu: return "relu";
    case Op::sigmoid: return "sigmoid";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::square: return "square";
    case Op::clamp: return "clamp";
    case Op::softmax: return "softmax";
    case Op::log_softmax: return "log_softmax";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::row_sum: return "row_sum";
    case Op::concat: return "concat";
    case Op::dot_rows: return "dot_rows";
    case Op::weighted_sum: return "weighted_sum";
  }
  return "?";
}

// ---------------------------------------------------------------- Var / Tape

const Mat& Var::value() const { return tape_->value(id_); }
const Mat& Var::grad() const { return tape_->grad(id_); }
Op Var::op() const { return tape_->op(id_); }
std::span<const int> Var::parents() const { return tape_->parents(id_); }

Var Tape::push(Mat value, Op op, std::vector<int> parents, Backprop backprop) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.needs_grad = std::any_of(parents.begin(), parents.end(),
                             [this](int p) { return nodes_[p].needs_grad; });
  n.parents = std::move(parents);
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  n.op = Op::constant;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Mat value) {
  Node n;
  n.value = std::move(value);
  n.op = Op::variable;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

std::vector<Var> Tape::bind(ParamSet& params) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Node n;
    n.value = params.value(i);
    n.op = Op::parameter;
    n.needs_grad = true;
    n.sink = &params.grad(i);
    nodes_.push_back(std::move(n));
    out.push_back(Var(this, static_cast<int>(nodes_.size()) - 1));
  }
  return out;
}

void Tape::backward(const Var& out) {
  if (out.tape() != this) throw std::invalid_argument("backward: Var belongs to another tape");
  if (out.rows() != 1 || out.cols() != 1)
    throw DimensionError(
        fmt::format("backward: output must be scalar, got {}x{}", out.rows(), out.cols()));
  const int last = out.id();
  for (int i = 0; i <= last; ++i) {
    Node& n = nodes_[i];
    if (n.needs_grad) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  }
  if (!nodes_[last].needs_grad) return;
  nodes_[last].grad(0, 0) = 1.0;
  for (int i = last; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.backprop) n.backprop(*this, i);
  }
  for (int i = 0; i <= last; ++i) {
    Node& n = nodes_[i];
    if (n.sink != nullptr) *n.sink += n.grad;
  }
}

// ---------------------------------------------------------------- operations

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    throw DimensionError(fmt::format("matmul: {}x{} times {}x{}", a.rows(), a.cols(), b.rows(),
                                     b.cols()));
  Mat c = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return tape_of(a).push(std::move(c), Op::matmul, {ia, ib}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return tape_of(a).push(a.value() + b.value(), Op::add, {ia, ib}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return tape_of(a).push(a.value() - b.value(), Op::sub, {ia, ib}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  Mat c = a.value().cwiseProduct(b.value());
  return tape_of(a).push(std::move(c), Op::mul, {ia, ib}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.needs_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(const Var& a, Scalar s) {
  const int ia = a.id();
  return tape_of(a).push(a.value() * s, Op::scale, {ia},
                         [ia, s](Tape& t, int self) { t.accumulate(ia, t.grad(self) * s); });
}

Var add_scalar(const Var& a, Scalar s) {
  const int ia = a.id();
  Mat c = (a.value().array() + s).matrix();
  return tape_of(a).push(std::move(c), Op::add_scalar, {ia},
                         [ia](Tape& t, int self) { t.accumulate(ia, t.grad(self)); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw DimensionError(fmt::format("add_row: {}x{} plus row {}x{}", a.rows(), a.cols(),
                                     row.rows(), row.cols()));
  Mat c = a.value();
  c.rowwise() += row.value().row(0);
  const int ia = a.id(), ir = row.id();
  return tape_of(a).push(std::move(c), Op::add_row, {ia, ir}, [ia, ir](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.accumulate(ia, g);
    if (t.needs_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var mul_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw DimensionError(fmt::format("mul_row: {}x{} times row {}x{}", a.rows(), a.cols(),
                                     row.rows(), row.cols()));
  Mat c = a.value();
  c.array().rowwise() *= row.value().row(0).array();
  const int ia = a.id(), ir = row.id();
  return tape_of(a).push(std::move(c), Op::mul_row, {ia, ir}, [ia, ir](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ia)) {
      Mat d = g;
      d.array().rowwise() *= t.value(ir).row(0).array();
      t.accumulate(ia, d);
    }
    if (t.needs_grad(ir)) t.accumulate(ir, g.cwiseProduct(t.value(ia)).colwise().sum());
  });
}

Var neg(const Var& a) {
  const int ia = a.id();
  return tape_of(a).push(-a.value(), Op::neg, {ia},
                         [ia](Tape& t, int self) { t.accumulate(ia, -t.grad(self)); });
}

Var tanh(const Var& a) {
  const int ia = a.id();
  return tape_of(a).push(tanh_value(a.value()), Op::tanh, {ia}, [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    t.accumulate(ia, t.grad(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var relu(const Var& a) {
  const int ia = a.id();
  return tape_of(a).push(relu_value(a.value()), Op::relu, {ia}, [ia](Tape& t, int self) {
    const Mat mask = (t.value(ia).array() > 0.0).cast<Scalar>().matrix();
    t.accumulate(ia, t.grad(self).cwiseProduct(mask));
  });
}

Var sigmoid(const Var& a) {
  const int ia = a.id();
  Mat y = a.value().unaryExpr([](Scalar v) {
    return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  return tape_of(a).push(std::move(y), Op::sigmoid, {ia}, [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    t.accumulate(ia, t.grad(self).cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

Var exp(const Var& a) {
  const int ia = a.id();
  return tape_of(a).push(a.value().array().exp().matrix(), Op::exp, {ia},
                         [ia](Tape& t, int self) {
                           t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
                         });
}

Var log(const Var& a, Scalar floor) {
  const int ia = a.id();
  Mat y = a.value().unaryExpr([floor](Scalar v) { return std::log(std::max(v, floor)); });
  return tape_of(a).push(std::move(y), Op::log, {ia}, [ia, floor](Tape& t, int self) {
    const Mat& x = t.value(ia);
    const Mat d = x.unaryExpr([floor](Scalar v) { return v > floor ? 1.0 / v : 0.0; });
    t.accumulate(ia, t.grad(self).cwiseProduct(d));
  });
}

Var square(const Var& a) {
  const int ia = a.id();
  return tape_of(a).push(a.value().array().square().matrix(), Op::square, {ia},
                         [ia](Tape& t, int self) {
                           t.accumulate(ia, 2.0 * t.grad(self).cwiseProduct(t.value(ia)));
                         });
}

Var clamp(const Var& a, Scalar lo, Scalar hi) {
  const int ia = a.id();
  Mat y = a.value().cwiseMax(lo).cwiseMin(hi);
  return tape_of(a).push(std::move(y), Op::clamp, {ia}, [ia, lo, hi](Tape& t, int self) {
    const Mat mask =
        t.value(ia).unaryExpr([lo, hi](Scalar v) { return (v > lo && v < hi) ? 1.0 : 0.0; });
    t.accumulate(ia, t.grad(self).cwiseProduct(mask));
  });
}

Var softmax_rows(const Var& a) {
  const int ia = a.id();
  return tape_of(a).push(softmax_value(a.value()), Op::softmax, {ia}, [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    const Mat& g = t.grad(self);
    const Vec inner = g.cwiseProduct(y).rowwise().sum();
    Mat d = g;
    d.colwise() -= inner;
    t.accumulate(ia, d.cwiseProduct(y));
  });
}

Var log_softmax_rows(const Var& a) {
  const int ia = a.id();
  return tape_of(a).push(log_softmax_value(a.value()), Op::log_softmax, {ia},
                         [ia](Tape& t, int self) {
                           const Mat p = t.value(self).array().exp().matrix();
                           const Mat& g = t.grad(self);
                           Mat d = p;
                           d.array().colwise() *= g.rowwise().sum().array();
                           t.accumulate(ia, g - d);
                         });
}

Var sum(const Var& a) {
  const int ia = a.id();
  Mat s(1, 1);
  s(0, 0) = a.value().sum();
  return tape_of(a).push(std::move(s), Op::sum, {ia}, [ia](Tape& t, int self) {
    const Mat& x = t.value(ia);
    t.accumulate(ia, Mat::Constant(x.rows(), x.cols(), t.grad(self)(0, 0)));
  });
}

Var mean(const Var& a) {
  const int ia = a.id();
  const Scalar n = static_cast<Scalar>(a.value().size());
  Mat s(1, 1);
  s(0, 0) = a.value().mean();
  return tape_of(a).push(std::move(s), Op::mean, {ia}, [ia, n](Tape& t, int self) {
    const Mat& x = t.value(ia);
    t.accumulate(ia, Mat::Constant(x.rows(), x.cols(), t.grad(self)(0, 0) / n));
  });
}

Var row_sum(const Var& a) {
  const int ia = a.id();
  Mat s = a.value().rowwise().sum();
  return tape_of(a).push(std::move(s), Op::row_sum, {ia}, [ia](Tape& t, int self) {
    const Index cols = t.value(ia).cols();
    t.accumulate(ia, t.grad(self).replicate(1, cols));
  });
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows())
    throw DimensionError(fmt::format("concat_cols: {} rows vs {} rows", a.rows(), b.rows()));
  Mat c(a.rows(), a.cols() + b.cols());
  c << a.value(), b.value();
  const int ia = a.id(), ib = b.id();
  const Index ca = a.cols(), cb = b.cols();
  return tape_of(a).push(std::move(c), Op::concat, {ia, ib}, [ia, ib, ca, cb](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ia)) t.accumulate(ia, g.leftCols(ca));
    if (t.needs_grad(ib)) t.accumulate(ib, g.rightCols(cb));
  });
}

Var dot_rows(const Var& a, const Mat& w) {
  if (a.rows() != w.rows() || a.cols() != w.cols())
    throw DimensionError(fmt::format("dot_rows: {}x{} vs {}x{}", a.rows(), a.cols(), w.rows(),
                                     w.cols()));
  const int ia = a.id();
  Mat s = a.value().cwiseProduct(w).rowwise().sum();
  return tape_of(a).push(std::move(s), Op::dot_rows, {ia}, [ia, w](Tape& t, int self) {
    Mat d = w;
    d.array().colwise() *= t.grad(self).col(0).array();
    t.accumulate(ia, d);
  });
}

Var weighted_sum(const Var& a, const Eigen::Ref<const Vec>& w) {
  if (a.cols() != 1 || a.rows() != w.size())
    throw DimensionError(fmt::format("weighted_sum: {}x{} with {} weights", a.rows(), a.cols(),
                                     w.size()));
  const int ia = a.id();
  Mat s(1, 1);
  s(0, 0) = a.value().col(0).dot(w);
  Vec wc = w;
  return tape_of(a).push(std::move(s), Op::weighted_sum, {ia}, [ia, wc](Tape& t, int self) {
    t.accumulate(ia, wc * t.grad(self)(0, 0));
  });
}

// ---------------------------------------------------------------- ParamSet

void ParamSet::add(std::string name, Mat value) {
  if (find(name)) throw std::invalid_argument("ParamSet: duplicate entry " + name);
  names_.push_back(std::move(name));
  grads_.push_back(Mat::Zero(value.rows(), value.cols()));
  values_.push_back(std::move(value));
}

std::optional<std::size_t> ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

Index ParamSet::dim() const {
  Index n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

Vec ParamSet::flatten() const {
  Vec out(dim());
  Index k = 0;
  for (const auto& v : values_) {
    out.segment(k, v.size()) = v.reshaped();
    k += v.size();
  }
  return out;
}

Vec ParamSet::flatten_grad() const {
  Vec out(dim());
  Index k = 0;
  for (const auto& g : grads_) {
    out.segment(k, g.size()) = g.reshaped();
    k += g.size();
  }
  return out;
}

void ParamSet::unflatten(const Eigen::Ref<const Vec>& flat) {
  if (flat.size() != dim())
    throw DimensionError(fmt::format("unflatten: got {} values, expected {}", flat.size(), dim()));
  Index k = 0;
  for (auto& v : values_) {
    v.reshaped() = flat.segment(k, v.size());
    k += v.size();
  }
}

void ParamSet::zero_grad() {
  for (auto& g : grads_) g.setZero();
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (names_[i] != other.names_[i] || values_[i].rows() != other.values_[i].rows() ||
        values_[i].cols() != other.values_[i].cols())
      return false;
  }
  return true;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (std::size_t i = 0; i < size(); ++i)
    out.add(names_[i], Mat::Zero(values_[i].rows(), values_[i].cols()));
  return out;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (!a.same_layout(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.values_[i] != b.values_[i]) return false;
  return true;
}

// ---------------------------------------------------------------- MLP

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  if (name == "softmax") return Activation::softmax;
  throw std::invalid_argument("unknown nonlinearity: " + std::string(name));
}

MlpSpec MlpSpec::make(int input_dim, std::vector<int> hidden, int output_dim,
                      Activation hidden_act, Activation output_act) {
  MlpSpec s;
  s.input_dim = input_dim;
  s.hidden = std::move(hidden);
  s.output_dim = output_dim;
  s.activations.assign(s.hidden.size(), hidden_act);
  s.activations.push_back(output_act);
  s.validate();
  return s;
}

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1)
    throw DimensionError(fmt::format("mlp: input/output dims must be >= 1 (got {}, {})",
                                     input_dim, output_dim));
  for (std::size_t l = 0; l < hidden.size(); ++l)
    if (hidden[l] < 1) throw DimensionError(fmt::format("mlp layer {}: width must be >= 1", l));
  if (activations.size() != layers())
    throw DimensionError(fmt::format("mlp: {} activations for {} layers", activations.size(),
                                     layers()));
}

namespace {

Mat orthogonal(Index rows, Index cols, Rng& rng, Scalar gain) {
  const Index n = std::max(rows, cols);
  const Index m = std::min(rows, cols);
  Mat g(n, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(n, m);
  // Sign fix makes the draw uniform over orthogonal matrices.
  const Mat r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  for (Index j = 0; j < m; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  Mat w = rows >= cols ? q : Mat(q.transpose());
  return gain * w;
}

void check_layer_input(const MlpSpec& spec, std::size_t l, Index cols) {
  if (cols != spec.layer_in(l))
    throw DimensionError(fmt::format("mlp layer {}: input has {} columns, expected {}", l, cols,
                                     spec.layer_in(l)));
}

void check_layer_params(const MlpSpec& spec, std::size_t l, const Mat& w, const Mat& b) {
  if (w.rows() != spec.layer_in(l) || w.cols() != spec.layer_out(l) || b.rows() != 1 ||
      b.cols() != spec.layer_out(l))
    throw DimensionError(fmt::format("mlp layer {}: parameters {}x{} / {}x{} do not match {}->{}",
                                     l, w.rows(), w.cols(), b.rows(), b.cols(), spec.layer_in(l),
                                     spec.layer_out(l)));
}

}  // namespace

void init_mlp(ParamSet& params, const MlpSpec& spec, Rng& rng, const std::string& prefix,
              Scalar hidden_gain, Scalar output_gain) {
  spec.validate();
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const Scalar gain = l + 1 == spec.layers() ? output_gain : hidden_gain;
    params.add(fmt::format("{}W{}", prefix, l),
               orthogonal(spec.layer_in(l), spec.layer_out(l), rng, gain));
    params.add(fmt::format("{}b{}", prefix, l), Mat::Zero(1, spec.layer_out(l)));
  }
}

Var forward(const MlpSpec& spec, std::span<const Var> params, const Var& input) {
  spec.validate();
  if (params.size() < spec.param_entries())
    throw DimensionError(fmt::format("mlp: {} parameter arrays for {} layers", params.size(),
                                     spec.layers()));
  Var h = input;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    check_layer_input(spec, l, h.cols());
    const Var& w = params[2 * l];
    const Var& b = params[2 * l + 1];
    check_layer_params(spec, l, w.value(), b.value());
    Var z = add_row(matmul(h, w), b);
    switch (spec.activations[l]) {
      case Activation::tanh: h = tanh(z); break;
      case Activation::relu: h = relu(z); break;
      case Activation::identity: h = z; break;
      case Activation::softmax: h = softmax_rows(z); break;
    }
  }
  return h;
}

Mat evaluate(const MlpSpec& spec, const ParamSet& params, const Mat& input, std::size_t offset) {
  spec.validate();
  if (params.size() < offset + spec.param_entries())
    throw DimensionError(fmt::format("mlp: {} parameter arrays for {} layers", params.size(),
                                     spec.layers()));
  Mat h = input;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    check_layer_input(spec, l, h.cols());
    const Mat& w = params.value(offset + 2 * l);
    const Mat& b = params.value(offset + 2 * l + 1);
    check_layer_params(spec, l, w, b);
    Mat z = h * w;
    z.rowwise() += b.row(0);
    h = apply_activation(spec.activations[l], std::move(z));
  }
  return h;
}

Jvp jvp(const MlpSpec& spec, const ParamSet& params, const ParamSet& tangent, const Mat& input,
        std::size_t offset) {
  spec.validate();
  if (params.size() < offset + spec.param_entries() ||
      tangent.size() < offset + spec.param_entries())
    throw DimensionError("jvp: parameter/tangent entries do not cover the network");
  Mat h = input;
  Mat dh = Mat::Zero(input.rows(), input.cols());
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    check_layer_input(spec, l, h.cols());
    const Mat& w = params.value(offset + 2 * l);
    const Mat& b = params.value(offset + 2 * l + 1);
    const Mat& dw = tangent.value(offset + 2 * l);
    const Mat& db = tangent.value(offset + 2 * l + 1);
    check_layer_params(spec, l, w, b);
    check_layer_params(spec, l, dw, db);
    Mat z = h * w;
    z.rowwise() += b.row(0);
    Mat dz = h * dw;
    if (l > 0) dz += dh * w;
    dz.rowwise() += db.row(0);
    h = apply_activation(spec.activations[l], z);
    switch (spec.activations[l]) {
      case Activation::tanh:
        dh = dz.cwiseProduct((1.0 - h.array().square()).matrix());
        break;
      case Activation::relu:
        dh = dz.cwiseProduct((z.array() > 0.0).cast<Scalar>().matrix());
        break;
      case Activation::identity:
        dh = dz;
        break;
      case Activation::softmax: {
        const Vec inner = dz.cwiseProduct(h).rowwise().sum();
        Mat d = dz;
        d.colwise() -= inner;
        dh = d.cwiseProduct(h);
        break;
      }
    }
  }
  return {std::move(h), std::move(dh)};
}

// ---------------------------------------------------------------- helpers

Var gaussian_log_prob(const Mat& actions, const Var& mean, const Var& log_std) {
  if (actions.rows() != mean.rows() || actions.cols() != mean.cols())
    throw DimensionError(fmt::format("gaussian_log_prob: actions {}x{} vs mean {}x{}",
                                     actions.rows(), actions.cols(), mean.rows(), mean.cols()));
  if (log_std.rows() != 1 || log_std.cols() != mean.cols())
    throw DimensionError(fmt::format("gaussian_log_prob: log_std is {}x{}, expected 1x{}",
                                     log_std.rows(), log_std.cols(), mean.cols()));
  if (!log_std.value().allFinite()) throw NumericalError("gaussian_log_prob: non-finite log_std");
  Tape& t = *mean.tape();
  const Var diff = sub(t.constant(actions), mean);
  const Var z = mul_row(diff, exp(neg(log_std)));
  const Var per_dim = add_row(scale(square(z), -0.5), neg(log_std));
  return add_scalar(row_sum(per_dim),
                    -0.5 * std::log(2.0 * M_PI) * static_cast<Scalar>(mean.cols()));
}

Scalar value_and_grad(ParamSet& params, const LossBuilder& loss) {
  params.zero_grad();
  Tape tape;
  const auto vars = tape.bind(params);
  const Var out = loss(tape, vars);
  const Scalar v = out.scalar();
  if (!std::isfinite(v)) throw NumericalError("value_and_grad: non-finite loss");
  tape.backward(out);
  return v;
}

Scalar grad_check(ParamSet& params, const LossBuilder& loss, Scalar h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  value_and_grad(params, loss);
  const Vec analytic = params.flatten_grad();
  const Vec theta = params.flatten();
  auto eval_at = [&](const Vec& p) {
    params.unflatten(p);
    Tape tape;
    const auto vars = tape.bind(params);
    const Scalar v = loss(tape, vars).scalar();
    if (!std::isfinite(v)) throw NumericalError("grad_check: non-finite loss");
    return v;
  };
  Scalar worst = 0.0;
  Vec p = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    p(i) = theta(i) + h;
    const Scalar up = eval_at(p);
    p(i) = theta(i) - h;
    const Scalar down = eval_at(p);
    p(i) = theta(i);
    const Scalar numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic(i) - numeric) / std::max(1.0, std::abs(numeric)));
  }
  params.unflatten(theta);
  return worst;
}

// ---------------------------------------------------------------- Adam

Adam::Adam(const ParamSet& params, Scalar lr, Scalar beta1, Scalar beta2, Scalar eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.push_back(Mat::Zero(params.value(i).rows(), params.value(i).cols()));
    v_.push_back(Mat::Zero(params.value(i).rows(), params.value(i).cols()));
  }
}

void Adam::step(ParamSet& params) {
  if (params.size() != m_.size()) throw DimensionError("Adam: parameter layout changed");
  ++t_;
  const Scalar c1 = 1.0 - std::pow(beta1_, static_cast<Scalar>(t_));
  const Scalar c2 = 1.0 - std::pow(beta2_, static_cast<Scalar>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Mat& g = params.grad(i);
    if (!g.allFinite()) throw NumericalError("Adam: non-finite gradient in " + params.name(i));
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseAbs2();
    params.value(i).array() -=
        lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

}  // namespace tgail::ad
