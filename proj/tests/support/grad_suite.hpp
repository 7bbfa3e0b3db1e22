#pragma once

// Finite-difference checks for every differentiable tape operation. Each
// case draws random inputs from a seed, reduces the op's output to a scalar
// through fixed random weights, and compares the tape gradient with central
// differences.

#include "tgail/diffcore.hpp"

#include <memory>
#include <string>
#include <vector>

namespace tgail::check {

struct GradCase {
  std::string op;
  std::uint64_t seed = 0;
  Scalar error = 0.0;
};

namespace detail {

using ad::Var;

inline Mat random_mat(Rng& rng, Index r, Index c, Scalar scale = 1.0) {
  Mat m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

// Entries at least `gap` away from every kink in `kinks`.
inline Mat away_from(Rng& rng, Index r, Index c, std::vector<Scalar> kinks, Scalar gap = 0.05) {
  Mat m = random_mat(rng, r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i)
      for (Scalar k : kinks)
        while (std::abs(m(i, j) - k) < gap) m(i, j) += 2.0 * gap;
  return m;
}

inline Var reduce(const Var& out, const Mat& w) { return ad::sum(ad::dot_rows(out, w)); }

struct Built {
  std::shared_ptr<ad::ParamSet> params;
  ad::LossBuilder loss;
};

using Unary = Var (*)(const Var&);

inline Built unary(Rng& rng, Unary f, Mat x, Index out_cols = -1) {
  auto p = std::make_shared<ad::ParamSet>();
  const Mat w = random_mat(rng, x.rows(), out_cols < 0 ? x.cols() : out_cols);
  p->add("x", std::move(x));
  return {p, [f, w](ad::Tape&, std::span<const Var> v) { return reduce(f(v[0]), w); }};
}

inline Built binary(Rng& rng, Var (*f)(const Var&, const Var&), Mat a, Mat b, Index out_r,
                    Index out_c) {
  auto p = std::make_shared<ad::ParamSet>();
  const Mat w = random_mat(rng, out_r, out_c);
  p->add("a", std::move(a));
  p->add("b", std::move(b));
  return {p, [f, w](ad::Tape&, std::span<const Var> v) { return reduce(f(v[0], v[1]), w); }};
}

inline Built build(const std::string& op, Rng& rng) {
  const Index r = 2 + static_cast<Index>(rng.below(3));
  const Index c = 2 + static_cast<Index>(rng.below(3));
  if (op == "matmul") {
    const Index k = 2 + static_cast<Index>(rng.below(3));
    return binary(rng, ad::matmul, random_mat(rng, r, k), random_mat(rng, k, c), r, c);
  }
  if (op == "add") return binary(rng, ad::add, random_mat(rng, r, c), random_mat(rng, r, c), r, c);
  if (op == "sub") return binary(rng, ad::sub, random_mat(rng, r, c), random_mat(rng, r, c), r, c);
  if (op == "mul") return binary(rng, ad::mul, random_mat(rng, r, c), random_mat(rng, r, c), r, c);
  if (op == "add_row") return binary(rng, ad::add_row, random_mat(rng, r, c), random_mat(rng, 1, c), r, c);
  if (op == "mul_row") return binary(rng, ad::mul_row, random_mat(rng, r, c), random_mat(rng, 1, c), r, c);
  if (op == "concat") {
    const Index c2 = 1 + static_cast<Index>(rng.below(3));
    return binary(rng, ad::concat_cols, random_mat(rng, r, c), random_mat(rng, r, c2), r, c + c2);
  }
  if (op == "scale") {
    const Scalar s = rng.normal();
    auto p = std::make_shared<ad::ParamSet>();
    const Mat w = random_mat(rng, r, c);
    p->add("x", random_mat(rng, r, c));
    return {p, [s, w](ad::Tape&, std::span<const Var> v) { return reduce(ad::scale(v[0], s), w); }};
  }
  if (op == "add_scalar") {
    const Scalar s = rng.normal();
    auto p = std::make_shared<ad::ParamSet>();
    const Mat w = random_mat(rng, r, c);
    p->add("x", random_mat(rng, r, c));
    return {p, [s, w](ad::Tape&, std::span<const Var> v) { return reduce(ad::add_scalar(v[0], s), w); }};
  }
  if (op == "neg") return unary(rng, ad::neg, random_mat(rng, r, c));
  if (op == "tanh") return unary(rng, ad::tanh, random_mat(rng, r, c));
  if (op == "relu") return unary(rng, ad::relu, away_from(rng, r, c, {0.0}));
  if (op == "sigmoid") return unary(rng, ad::sigmoid, random_mat(rng, r, c, 2.0));
  if (op == "exp") return unary(rng, ad::exp, random_mat(rng, r, c));
  if (op == "square") return unary(rng, ad::square, random_mat(rng, r, c));
  if (op == "softmax") return unary(rng, ad::softmax_rows, random_mat(rng, r, c, 2.0));
  if (op == "log_softmax") return unary(rng, ad::log_softmax_rows, random_mat(rng, r, c, 2.0));
  if (op == "row_sum") return unary(rng, ad::row_sum, random_mat(rng, r, c), 1);
  if (op == "log") {
    Mat x = random_mat(rng, r, c).array().abs() + 0.2;
    auto p = std::make_shared<ad::ParamSet>();
    const Mat w = random_mat(rng, r, c);
    p->add("x", std::move(x));
    return {p, [w](ad::Tape&, std::span<const Var> v) { return reduce(ad::log(v[0]), w); }};
  }
  if (op == "clamp") {
    auto p = std::make_shared<ad::ParamSet>();
    const Mat w = random_mat(rng, r, c);
    p->add("x", away_from(rng, r, c, {-0.5, 0.5}));
    return {p, [w](ad::Tape&, std::span<const Var> v) { return reduce(ad::clamp(v[0], -0.5, 0.5), w); }};
  }
  if (op == "sum" || op == "mean") {
    auto p = std::make_shared<ad::ParamSet>();
    const Scalar outer = rng.normal();
    p->add("x", random_mat(rng, r, c));
    const bool is_sum = op == "sum";
    // Squared so the gradient depends on the value, not only the shape.
    return {p, [outer, is_sum](ad::Tape&, std::span<const Var> v) {
              const Var m = ad::mul(v[0], v[0]);
              const Var s = is_sum ? ad::sum(m) : ad::mean(m);
              return ad::scale(s, outer);
            }};
  }
  if (op == "dot_rows") {
    auto p = std::make_shared<ad::ParamSet>();
    const Mat k = random_mat(rng, r, c);
    const Mat w = random_mat(rng, r, 1);
    p->add("x", random_mat(rng, r, c));
    return {p, [k, w](ad::Tape&, std::span<const Var> v) {
              return reduce(ad::tanh(ad::dot_rows(v[0], k)), w);
            }};
  }
  if (op == "weighted_sum") {
    auto p = std::make_shared<ad::ParamSet>();
    const Vec k = random_mat(rng, r, 1);
    p->add("x", random_mat(rng, r, 1));
    return {p, [k](ad::Tape&, std::span<const Var> v) {
              return ad::weighted_sum(ad::tanh(v[0]), k);
            }};
  }
  if (op == "gaussian_log_prob") {
    auto p = std::make_shared<ad::ParamSet>();
    const Mat actions = random_mat(rng, r, c);
    p->add("mean", random_mat(rng, r, c));
    p->add("log_std", random_mat(rng, 1, c, 0.3));
    return {p, [actions](ad::Tape&, std::span<const Var> v) {
              return ad::sum(ad::gaussian_log_prob(actions, v[0], v[1]));
            }};
  }
  if (op == "mlp") {
    // Two tanh layers with a Gaussian log-probability head.
    const int in = 3, out = 2;
    const auto spec = ad::MlpSpec::make(in, {5, 4}, out, ad::Activation::tanh, ad::Activation::identity);
    auto p = std::make_shared<ad::ParamSet>();
    ad::init_mlp(*p, spec, rng, "", 1.0, 1.0);
    p->add("log_std", random_mat(rng, 1, out, 0.3));
    const Mat input = random_mat(rng, r, in);
    const Mat actions = random_mat(rng, r, out);
    return {p, [spec, input, actions](ad::Tape& t, std::span<const Var> v) {
              const Var mu = ad::forward(spec, v.first(spec.param_entries()), t.constant(input));
              return ad::mean(ad::gaussian_log_prob(actions, mu, v[spec.param_entries()]));
            }};
  }
  if (op == "mlp_relu_softmax") {
    const auto spec = ad::MlpSpec::make(3, {6}, 3, ad::Activation::relu, ad::Activation::softmax);
    auto p = std::make_shared<ad::ParamSet>();
    ad::init_mlp(*p, spec, rng, "", 1.0, 1.0);
    const Mat input = random_mat(rng, r, 3);
    const Mat w = random_mat(rng, r, 3);
    return {p, [spec, input, w](ad::Tape& t, std::span<const Var> v) {
              return reduce(ad::forward(spec, v, t.constant(input)), w);
            }};
  }
  throw std::invalid_argument("unknown op " + op);
}

}  // namespace detail

inline std::vector<std::string> grad_suite_ops() {
  return {"matmul", "add",     "sub",         "mul",    "scale",   "add_scalar", "add_row",
          "mul_row", "neg",     "tanh",        "relu",   "sigmoid", "exp",        "log",
          "square", "clamp",   "softmax",     "log_softmax", "sum", "mean",     "row_sum",
          "concat", "dot_rows", "weighted_sum", "gaussian_log_prob", "mlp", "mlp_relu_softmax"};
}

inline GradCase grad_case(const std::string& op, std::uint64_t seed, Scalar h = 1e-5) {
  Rng rng(derive_seed(seed, 0x9c));
  auto built = detail::build(op, rng);
  return {op, seed, ad::grad_check(*built.params, built.loss, h)};
}

/// Every op over seeds [0, cases).
inline std::vector<GradCase> run_grad_suite(int cases, Scalar h = 1e-5) {
  std::vector<GradCase> out;
  for (const auto& op : grad_suite_ops())
    for (int s = 0; s < cases; ++s) out.push_back(grad_case(op, static_cast<std::uint64_t>(s), h));
  return out;
}

}  // namespace tgail::check
