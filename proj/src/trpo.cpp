#include "tgail/trpo.hpp"

#include <fmt/format.h>

#include <numeric>

namespace tgail::rl {

using ad::Var;

void TrpoConfig::validate() const {
  if (!(max_kl > 0.0)) throw std::invalid_argument("trpo: max_kl must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("trpo: gamma must be in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("trpo: lambda must be in [0, 1]");
  if (cg_iters < 1 || backtrack_steps < 1) throw std::invalid_argument("trpo: iteration counts must be >= 1");
  if (!(backtrack_coeff > 0.0 && backtrack_coeff < 1.0))
    throw std::invalid_argument("trpo: backtrack_coeff must be in (0, 1)");
  if (cg_damping < 0.0) throw std::invalid_argument("trpo: damping must be >= 0");
}

void RolloutBatch::validate() const {
  const Index n = size();
  if (n == 0) throw std::invalid_argument("rollout batch is empty");
  if (actions.rows() != n || log_probs.size() != n || rewards.size() != n || values.size() != n)
    throw DimensionError("rollout batch: array lengths differ");
  Index next = 0;
  for (const auto& e : episodes) {
    if (e.begin != next || e.end <= e.begin) throw std::invalid_argument("rollout batch: bad episode spans");
    next = e.end;
  }
  if (next != n) throw std::invalid_argument("rollout batch: spans do not cover the batch");
  if (!rewards.allFinite()) throw NumericalError("rollout batch: non-finite reward");
}

Gae compute_gae(const RolloutBatch& batch, Scalar gamma, Scalar lambda) {
  batch.validate();
  const Index n = batch.size();
  Gae g;
  g.raw_advantages.resize(n);
  for (const auto& e : batch.episodes) {
    Scalar next_value = e.terminal ? 0.0 : e.bootstrap;
    Scalar running = 0.0;
    for (Index t = e.end - 1; t >= e.begin; --t) {
      const Scalar delta = batch.rewards(t) + gamma * next_value - batch.values(t);
      running = delta + gamma * lambda * running;
      g.raw_advantages(t) = running;
      next_value = batch.values(t);
    }
  }
  g.targets = g.raw_advantages + batch.values;
  const Scalar mean = g.raw_advantages.mean();
  const Scalar var = (g.raw_advantages.array() - mean).square().mean();
  g.advantages = (g.raw_advantages.array() - mean) / (std::sqrt(var) + 1e-8);
  return g;
}

CgResult conjugate_gradient(const std::function<Vec(const Vec&)>& avp, const Vec& b, int iters,
                            Scalar tol) {
  CgResult res;
  res.x = Vec::Zero(b.size());
  const Scalar bnorm = b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  Vec r = b, p = b;
  Scalar rr = r.squaredNorm();
  for (int i = 0; i < iters; ++i) {
    const Vec ap = avp(p);
    const Scalar pap = p.dot(ap);
    if (!std::isfinite(pap) || !ap.allFinite()) throw NumericalError("conjugate_gradient: non-finite product");
    if (pap <= 0.0) throw NumericalError("conjugate_gradient: operator is not positive definite");
    const Scalar alpha = rr / pap;
    res.x += alpha * p;
    r -= alpha * ap;
    res.iterations = i + 1;
    const Scalar rr_new = r.squaredNorm();
    if (std::sqrt(rr_new) <= tol * bnorm) {
      rr = rr_new;
      res.converged = true;
      break;
    }
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  res.residual = std::sqrt(rr);
  return res;
}

Vec fisher_vector_product(const GeneratorModel& gen, const Mat& inputs, const Vec& v, Scalar damping) {
  const Index dim = gen.policy.dim();
  if (v.size() != dim)
    throw DimensionError(fmt::format("fisher_vector_product: vector has {} entries, policy has {}", v.size(), dim));
  const Index n = inputs.rows();
  ad::ParamSet tangent = gen.policy.zeros_like();
  tangent.unflatten(v);
  const ad::Jvp j = ad::jvp(gen.policy_spec, gen.policy, tangent, inputs);

  // Metric of the output distribution, applied row by row.
  Mat u(j.tangent.rows(), j.tangent.cols());
  if (gen.gaussian()) {
    const RowVec inv_var = (-2.0 * gen.log_std().array()).exp();
    u = (j.tangent.array().rowwise() * inv_var.array()) / static_cast<Scalar>(n);
  } else {
    for (Index i = 0; i < n; ++i) {
      const Scalar m = j.value.row(i).maxCoeff();
      RowVec p = (j.value.row(i).array() - m).exp();
      p /= p.sum();
      const Scalar pt = p.dot(j.tangent.row(i));
      u.row(i) = (p.array() * (j.tangent.row(i).array() - pt)).matrix() / static_cast<Scalar>(n);
    }
  }

  ad::ParamSet work = gen.policy;
  work.zero_grad();
  ad::Tape tape;
  const auto vars = tape.bind(work);
  const Var out = ad::forward(gen.policy_spec, vars, tape.constant(inputs));
  tape.backward(ad::sum(ad::dot_rows(out, u)));
  Vec result = work.flatten_grad();
  if (gen.gaussian()) {
    const std::size_t k = gen.log_std_entry();
    Index off = 0;
    for (std::size_t e = 0; e < k; ++e) off += gen.policy.value(e).size();
    result.segment(off, gen.config().act_dim) += 2.0 * v.segment(off, gen.config().act_dim);
  }
  return result + damping * v;
}

Scalar mean_kl(const GeneratorModel& old_gen, const GeneratorModel& new_gen, const Mat& inputs) {
  const Mat a = old_gen.policy_output(inputs);
  const Mat b = new_gen.policy_output(inputs);
  const Index n = inputs.rows();
  Scalar total = 0.0;
  if (old_gen.gaussian()) {
    const RowVec lo = old_gen.log_std(), ln = new_gen.log_std();
    const RowVec var_o = (2.0 * lo.array()).exp(), var_n = (2.0 * ln.array()).exp();
    const Scalar const_part = (ln - lo).sum() + (0.5 * var_o.array() / var_n.array()).sum() -
                              0.5 * static_cast<Scalar>(lo.size());
    for (Index i = 0; i < n; ++i)
      total += const_part + ((a.row(i) - b.row(i)).array().square() / (2.0 * var_n.array())).sum();
  } else {
    for (Index i = 0; i < n; ++i) {
      const Scalar ma = a.row(i).maxCoeff(), mb = b.row(i).maxCoeff();
      const RowVec la = a.row(i).array() - ma - std::log((a.row(i).array() - ma).exp().sum());
      const RowVec lb = b.row(i).array() - mb - std::log((b.row(i).array() - mb).exp().sum());
      total += (la.array().exp() * (la - lb).array()).sum();
    }
  }
  return total / static_cast<Scalar>(n);
}

namespace {

Scalar entropy_value(const GeneratorModel& gen, const Mat& inputs) {
  if (gen.gaussian()) return model::policy_entropy(gen);
  const Mat z = gen.policy_output(inputs);
  Scalar h = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    const Scalar m = z.row(i).maxCoeff();
    const RowVec l = z.row(i).array() - m - std::log((z.row(i).array() - m).exp().sum());
    h -= (l.array().exp() * l.array()).sum();
  }
  return h / static_cast<Scalar>(z.rows());
}

}  // namespace

Scalar surrogate(const GeneratorModel& gen, const RolloutBatch& batch, const Vec& advantages,
                 Scalar entropy_coef) {
  const Vec lp = model::log_prob_value(gen, batch.inputs, batch.actions);
  const Vec ratio = (lp - batch.log_probs).array().exp();
  return ratio.dot(advantages) / static_cast<Scalar>(batch.size()) +
         entropy_coef * entropy_value(gen, batch.inputs);
}

StepReport trpo_update(GeneratorModel& gen, const RolloutBatch& batch, const Vec& advantages,
                       const TrpoConfig& cfg, Scalar entropy_coef) {
  cfg.validate();
  batch.validate();
  if (advantages.size() != batch.size()) throw DimensionError("trpo_update: advantage length");
  const Scalar n = static_cast<Scalar>(batch.size());

  ad::ParamSet work = gen.policy;
  work.zero_grad();
  {
    ad::Tape tape;
    const auto vars = tape.bind(work);
    const Var in = tape.constant(batch.inputs);
    const Var lp = model::log_prob(gen, vars, in, batch.actions);
    const Var ratio = ad::exp(ad::add(lp, tape.constant(-batch.log_probs)));
    Var obj = ad::scale(ad::weighted_sum(ratio, advantages), 1.0 / n);
    if (entropy_coef != 0.0) obj = ad::add(obj, ad::scale(model::entropy(gen, vars, in), entropy_coef));
    tape.backward(obj);
  }
  const Vec g = work.flatten_grad();
  if (!g.allFinite()) throw NumericalError("trpo_update: non-finite policy gradient");

  StepReport rep;
  rep.surrogate_before = surrogate(gen, batch, advantages, entropy_coef);
  rep.surrogate_after = rep.surrogate_before;
  if (g.squaredNorm() == 0.0) return rep;

  const auto fvp = [&](const Vec& v) { return fisher_vector_product(gen, batch.inputs, v, cfg.cg_damping); };
  const CgResult cg = conjugate_gradient(fvp, g, cfg.cg_iters);
  rep.cg_iterations = cg.iterations;
  rep.cg_residual = cg.residual;
  const Scalar shs = cg.x.dot(fvp(cg.x));
  if (!(shs > 0.0) || !std::isfinite(shs)) throw NumericalError("trpo_update: degenerate curvature");
  const Scalar beta = std::sqrt(2.0 * cfg.max_kl / shs);
  const Vec full = beta * cg.x;
  rep.expected_improvement = g.dot(full);

  const Vec theta = gen.policy.flatten();
  GeneratorModel trial = gen;
  Scalar frac = 1.0;
  for (int k = 0; k < cfg.backtrack_steps; ++k, frac *= cfg.backtrack_coeff) {
    trial.policy.unflatten(theta + frac * full);
    const Scalar kl = mean_kl(gen, trial, batch.inputs);
    const Scalar s = surrogate(trial, batch, advantages, entropy_coef);
    if (std::isfinite(kl) && std::isfinite(s) && kl <= 1.5 * cfg.max_kl && s > rep.surrogate_before) {
      gen.policy.unflatten(theta + frac * full);
      rep.accepted = true;
      rep.kl = kl;
      rep.surrogate_after = s;
      rep.backtracks = k;
      return rep;
    }
  }
  rep.backtracks = cfg.backtrack_steps;
  return rep;
}

Scalar value_loss(const GeneratorModel& gen, const Mat& inputs, const Vec& targets) {
  return (gen.value(inputs) - targets).squaredNorm() / static_cast<Scalar>(targets.size());
}

std::vector<Scalar> fit_value(GeneratorModel& gen, ad::Adam& opt, const Mat& inputs, const Vec& targets,
                              const TrpoConfig& cfg, Rng& rng) {
  const Index n = inputs.rows();
  if (n == 0 || targets.size() != n) throw DimensionError("fit_value: empty or mismatched data");
  std::vector<Scalar> losses{value_loss(gen, inputs, targets)};
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const Index mb = std::max(1, cfg.value_minibatch);
  for (int epoch = 0; epoch < cfg.value_epochs; ++epoch) {
    const ad::ParamSet saved = gen.value_params;
    for (Index i = n - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
    for (Index start = 0; start < n; start += mb) {
      const Index m = std::min(mb, n - start);
      Mat x(m, inputs.cols());
      Vec y(m);
      for (Index r = 0; r < m; ++r) {
        x.row(r) = inputs.row(order[static_cast<std::size_t>(start + r)]);
        y(r) = targets(order[static_cast<std::size_t>(start + r)]);
      }
      ad::value_and_grad(gen.value_params, [&](ad::Tape& tape, std::span<const Var> vars) {
        const Var v = ad::forward(gen.value_spec, vars, tape.constant(x));
        return ad::mean(ad::square(ad::add(v, tape.constant(-y))));
      });
      opt.step(gen.value_params);
    }
    const Scalar loss = value_loss(gen, inputs, targets);
    if (!(loss <= losses.back())) {
      gen.value_params = saved;
      break;
    }
    losses.push_back(loss);
  }
  return losses;
}

}  // namespace tgail::rl
