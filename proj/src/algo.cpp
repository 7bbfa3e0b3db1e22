#include "tgail/algo.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <numeric>

namespace tgail::algo {

using ad::Var;
using env::LabeledTrajectory;

// ---------------------------------------------------------------- data

StepSet StepSet::subset(const std::vector<Index>& rows, Scalar total) const {
  StepSet out;
  const Index m = static_cast<Index>(rows.size());
  out.states.resize(m, states.cols());
  out.actions.resize(m, actions.cols());
  out.labels.resize(m, labels.cols());
  out.selector_in.resize(m, selector_in.cols());
  out.weights.resize(m);
  for (Index r = 0; r < m; ++r) {
    const Index i = rows[static_cast<std::size_t>(r)];
    out.states.row(r) = states.row(i);
    out.actions.row(r) = actions.row(i);
    if (labels.cols()) out.labels.row(r) = labels.row(i);
    if (selector_in.cols()) out.selector_in.row(r) = selector_in.row(i);
    out.weights(r) = weights(i);
    if (!episode.empty()) out.episode.push_back(episode[static_cast<std::size_t>(i)]);
  }
  const Scalar s = out.weights.sum();
  if (m > 0) {
    if (s > 0.0) out.weights *= total / s;
    else out.weights.setConstant(total / static_cast<Scalar>(m));
  }
  return out;
}

StepSet StepSet::uniform() const {
  StepSet out = *this;
  if (size() > 0) out.weights.setConstant(1.0 / static_cast<Scalar>(size()));
  return out;
}

StepSet steps_from(const std::vector<LabeledTrajectory>& trajs, int skills, int window,
                   const Vec& zero_action, bool raw_actions) {
  Index n = 0;
  for (const auto& t : trajs) n += t.length();
  StepSet set;
  if (n == 0) return set;
  const Index obs = trajs.front().steps.front().state.size();
  const Index act = trajs.front().steps.front().action.size();
  const Index feat = window * (obs + act);
  set.states.resize(n, obs);
  set.actions.resize(n, act);
  set.labels = Mat::Zero(n, skills);
  set.selector_in.resize(n, feat);
  set.weights.resize(n);
  const Scalar inv_n = 1.0 / static_cast<Scalar>(trajs.size());
  Index row = 0;
  for (std::size_t j = 0; j < trajs.size(); ++j) {
    const auto& t = trajs[j];
    if (t.length() == 0) continue;
    std::vector<Vec> states, actions;
    for (const auto& s : t.steps) {
      states.push_back(s.state);
      actions.push_back(s.action);
    }
    const Mat f = model::selector_features(states, actions, window, zero_action);
    for (int k = 0; k < t.length(); ++k, ++row) {
      set.states.row(row) = states[static_cast<std::size_t>(k)].transpose();
      const Vec& a = raw_actions ? t.raw_actions[static_cast<std::size_t>(k)] : actions[static_cast<std::size_t>(k)];
      set.actions.row(row) = a.transpose();
      if (skills > 0) set.labels(row, t.label) = 1.0;
      set.selector_in.row(row) = f.row(k);
      set.weights(row) = inv_n / static_cast<Scalar>(t.length());
      set.episode.push_back(static_cast<int>(j));
    }
  }
  return set;
}

// ---------------------------------------------------------------- losses

Scalar selector_cross_entropy(const SelectorModel& sel, const StepSet& set) {
  if (set.empty()) throw std::invalid_argument("selector cross-entropy: empty set");
  const Mat z = ad::evaluate(sel.spec, sel.params, set.selector_in);
  Scalar total = 0.0;
  for (Index i = 0; i < set.size(); ++i) {
    const Scalar m = z.row(i).maxCoeff();
    const RowVec logp = z.row(i).array() - m - std::log((z.row(i).array() - m).exp().sum());
    total -= set.weights(i) * logp.dot(set.labels.row(i));
  }
  return total;
}

Var selector_cross_entropy(const SelectorModel& sel, std::span<const Var> vars, ad::Tape& tape,
                           const StepSet& set) {
  if (set.empty()) throw std::invalid_argument("selector cross-entropy: empty set");
  const Var logp = model::selector_log_probs(sel, vars, tape.constant(set.selector_in));
  return ad::neg(ad::weighted_sum(ad::dot_rows(logp, set.labels), set.weights));
}

Scalar compute_RE(const SelectorModel& sel, const std::vector<LabeledTrajectory>& expert, int window,
                  const Vec& zero_action) {
  if (expert.empty()) throw std::invalid_argument("compute_RE: empty batch");
  return selector_cross_entropy(sel, steps_from(expert, sel.config().skills, window, zero_action));
}

Scalar compute_RG(const SelectorModel& sel, const std::vector<LabeledTrajectory>& generated, int window,
                  const Vec& zero_action) {
  if (generated.empty()) throw std::invalid_argument("compute_RG: empty batch");
  return selector_cross_entropy(sel, steps_from(generated, sel.config().skills, window, zero_action));
}

namespace {

Var disc_input(const DiscriminatorModel& disc, ad::Tape& tape, const StepSet& set) {
  return tape.constant(disc.input(set.states, set.actions, set.labels));
}

}  // namespace

Var discriminator_objective(const DiscriminatorModel& disc, std::span<const Var> vars, ad::Tape& tape,
                            const StepSet& expert, const StepSet& generated, const StepSet& selected,
                            Scalar omega, DiscParts* parts) {
  if (expert.empty() || generated.empty()) throw std::invalid_argument("discriminator objective: empty set");
  const Var e = ad::weighted_sum(model::log_one_minus_d(disc, vars, disc_input(disc, tape, expert)), expert.weights);
  const Var g = ad::scale(ad::weighted_sum(model::log_d(disc, vars, disc_input(disc, tape, generated)),
                                           generated.weights), omega);
  Var total = ad::add(e, g);
  DiscParts p{e.scalar(), g.scalar(), 0.0};
  if (omega != 1.0 && !selected.empty()) {
    const Var s = ad::scale(ad::weighted_sum(model::log_d(disc, vars, disc_input(disc, tape, selected)),
                                             selected.weights), 1.0 - omega);
    p.selector = s.scalar();
    total = ad::add(total, s);
  }
  if (parts) *parts = p;
  return total;
}

DiscParts discriminator_objective_value(const DiscriminatorModel& disc, const StepSet& expert,
                                        const StepSet& generated, const StepSet& selected, Scalar omega) {
  if (expert.empty() || generated.empty()) throw std::invalid_argument("discriminator objective: empty set");
  auto sum_log = [&](const StepSet& s, bool complement) {
    const Vec d = disc.score(disc.input(s.states, s.actions, s.labels));
    const Vec l = complement ? Vec((1.0 - d.array()).max(model::kDiscClamp).log()) : Vec(d.array().log());
    return s.weights.dot(l);
  };
  DiscParts p;
  p.expert = sum_log(expert, true);
  p.generated = omega * sum_log(generated, false);
  if (omega != 1.0 && !selected.empty()) p.selector = (1.0 - omega) * sum_log(selected, false);
  return p;
}

Mat log_d_all_labels(const DiscriminatorModel& disc, const StepSet& set, int skills) {
  Mat out(set.size(), skills);
  for (int c = 0; c < skills; ++c) {
    Mat labels = Mat::Zero(set.size(), skills);
    labels.col(c).setOnes();
    out.col(c) = disc.score(disc.input(set.states, set.actions, labels)).array().log();
  }
  return out;
}

Var selector_objective(const SelectorModel& sel, std::span<const Var> vars, ad::Tape& tape,
                       const StepSet& expert, const StepSet& generated, const Mat& log_d, Scalar omega,
                       Scalar lambda_e, Scalar lambda_g, SelectorParts* parts) {
  if (generated.empty()) throw std::invalid_argument("selector objective: empty generated set");
  if (log_d.rows() != generated.size()) throw DimensionError("selector objective: log D rows");
  const Var logp = model::selector_log_probs(sel, vars, tape.constant(generated.selector_in));
  const Var adv = ad::scale(ad::weighted_sum(ad::dot_rows(ad::exp(logp), log_d), generated.weights), 1.0 - omega);
  const Var rg = ad::neg(ad::weighted_sum(ad::dot_rows(logp, generated.labels), generated.weights));
  SelectorParts p;
  p.adversarial = adv.scalar();
  p.rg = rg.scalar();
  Var total = adv;
  if (!expert.empty()) {
    const Var re = selector_cross_entropy(sel, vars, tape, expert);
    p.re = re.scalar();
    if (lambda_e != 0.0) total = ad::add(total, ad::scale(re, lambda_e));
  }
  if (lambda_g != 0.0) total = ad::add(total, ad::scale(rg, lambda_g));
  if (parts) *parts = p;
  return total;
}

SelectorParts selector_objective_value(const SelectorModel& sel, const DiscriminatorModel& disc,
                                       const StepSet& expert, const StepSet& generated, Scalar omega,
                                       int skills) {
  const Mat log_d = log_d_all_labels(disc, generated, skills);
  const Mat p = sel.probs(generated.selector_in);
  SelectorParts parts;
  Scalar adv = 0.0;
  for (Index i = 0; i < generated.size(); ++i) adv += generated.weights(i) * p.row(i).dot(log_d.row(i));
  parts.adversarial = (1.0 - omega) * adv;
  parts.rg = selector_cross_entropy(sel, generated);
  if (!expert.empty()) parts.re = selector_cross_entropy(sel, expert);
  return parts;
}

Scalar game_value(const DiscriminatorModel& disc, const SelectorModel& sel, const StepSet& expert,
                  const StepSet& generated, Scalar omega, Scalar lambda_h, Scalar entropy, int skills) {
  const DiscParts d = discriminator_objective_value(disc, expert, generated, StepSet{}, omega);
  const SelectorParts s = selector_objective_value(sel, disc, expert, generated, omega, skills);
  return d.expert + d.generated + s.adversarial - lambda_h * entropy;
}

Scalar regularized_game_value(const DiscriminatorModel& disc, const SelectorModel& sel,
                              const StepSet& expert, const StepSet& generated, Scalar omega,
                              Scalar lambda_h, Scalar entropy, Scalar lambda_e, Scalar lambda_g, int skills) {
  Scalar v = game_value(disc, sel, expert, generated, omega, lambda_h, entropy, skills);
  if (lambda_e != 0.0 || lambda_g != 0.0) {
    const SelectorParts s = selector_objective_value(sel, disc, expert, generated, omega, skills);
    v += lambda_e * s.re + lambda_g * s.rg;
  }
  return v;
}

// ---------------------------------------------------------------- updates

namespace {

std::vector<Index> permutation(Index n, Rng& rng) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  for (Index i = n - 1; i > 0; --i)
    std::swap(p[static_cast<std::size_t>(i)], p[rng.below(static_cast<std::uint64_t>(i + 1))]);
  return p;
}

std::vector<Index> chunk(const std::vector<Index>& perm, Index k, Index m) {
  const Index n = static_cast<Index>(perm.size());
  return {perm.begin() + k * n / m, perm.begin() + (k + 1) * n / m};
}

void minibatch_indices(Index na, Index nb, Index nc, int minibatch, Rng& rng,
                       const std::function<void(const std::vector<Index>&, const std::vector<Index>&,
                                                const std::vector<Index>&)>& fn) {
  const Index largest = std::max({na, nb, nc});
  const Index m = std::max<Index>(1, (largest + minibatch - 1) / std::max(1, minibatch));
  const auto pa = permutation(na, rng), pb = permutation(nb, rng), pc = permutation(nc, rng);
  for (Index k = 0; k < m; ++k) fn(chunk(pa, k, m), chunk(pb, k, m), chunk(pc, k, m));
}

Mat rows_of(const Mat& m, const std::vector<Index>& rows) {
  Mat out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

}  // namespace

void for_each_minibatch(const StepSet& a, const StepSet& b, const StepSet& c, int minibatch, Rng& rng,
                        const std::function<void(const StepSet&, const StepSet&, const StepSet&)>& fn) {
  minibatch_indices(a.size(), b.size(), c.size(), minibatch, rng,
                    [&](const auto& ia, const auto& ib, const auto& ic) {
                      fn(a.subset(ia), b.subset(ib), c.subset(ic));
                    });
}

DiscParts discriminator_update(DiscriminatorModel& disc, ad::Adam& opt, const StepSet& expert,
                               const StepSet& generated, const StepSet& selected, Scalar omega,
                               const UpdateConfig& cfg, Rng& rng) {
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for_each_minibatch(expert, generated, selected, cfg.minibatch, rng,
                       [&](const StepSet& e, const StepSet& g, const StepSet& s) {
                         if (e.empty() || g.empty()) return;
                         const Scalar v = ad::value_and_grad(disc.params, [&](ad::Tape& tape, std::span<const Var> vars) {
                           return ad::neg(discriminator_objective(disc, vars, tape, e, g, s, omega));
                         });
                         if (!std::isfinite(v)) throw NumericalError("discriminator update: non-finite loss");
                         opt.step(disc.params);
                       });
  }
  return discriminator_objective_value(disc, expert, generated, selected, omega);
}

SelectorParts selector_update(SelectorModel& sel, ad::Adam& opt, const DiscriminatorModel& disc,
                              const StepSet& expert, const StepSet& generated, Scalar omega,
                              Scalar lambda_e, Scalar lambda_g, int skills, const UpdateConfig& cfg,
                              Rng& rng) {
  const Mat log_d = log_d_all_labels(disc, generated, skills);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    minibatch_indices(expert.size(), generated.size(), 0, cfg.minibatch, rng,
                      [&](const auto& ie, const auto& ig, const auto&) {
                        if (ig.empty()) return;
                        const StepSet e = expert.subset(ie);
                        const StepSet g = generated.subset(ig);
                        const Mat ld = rows_of(log_d, ig);
                        const Scalar v = ad::value_and_grad(sel.params, [&](ad::Tape& tape, std::span<const Var> vars) {
                          return selector_objective(sel, vars, tape, e, g, ld, omega, lambda_e, lambda_g);
                        });
                        if (!std::isfinite(v)) throw NumericalError("selector update: non-finite loss");
                        opt.step(sel.params);
                      });
  }
  return selector_objective_value(sel, disc, expert, generated, omega, skills);
}

StepSet selector_labeled(const SelectorModel& sel, const StepSet& set, Rng& rng) {
  StepSet out = set;
  const Mat p = sel.probs(set.selector_in);
  out.labels = Mat::Zero(set.size(), p.cols());
  for (Index i = 0; i < set.size(); ++i) out.labels(i, rng.categorical(p.row(i).transpose())) = 1.0;
  return out;
}

// ---------------------------------------------------------------- configs

void TripleGailConfig::validate() const {
  if (!(omega > 0.0 && omega < 1.0) && omega != 1.0)
    throw std::invalid_argument("omega must lie in (0, 1)");
  if (lambda_e < 0.0 || lambda_g_max < 0.0 || lambda_h < 0.0)
    throw std::invalid_argument("lambda weights must be non-negative");
  if (!(lambda_g_warmup >= 0.0 && lambda_g_warmup <= 1.0))
    throw std::invalid_argument("lambda_g_warmup must lie in [0, 1]");
  if (iterations < 0 || episodes_per_skill < 1) throw std::invalid_argument("bad iteration counts");
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (bc_warmstart_epochs < 0 || classifier_epochs < 1) throw std::invalid_argument("bad epoch counts");
  if (disc.minibatch < 1 || sel.minibatch < 1 || disc.epochs < 0 || sel.epochs < 0)
    throw std::invalid_argument("bad update config");
}

Scalar TripleGailConfig::lambda_g_at(int it) const {
  const Scalar ramp = lambda_g_warmup * static_cast<Scalar>(iterations);
  if (ramp <= 0.0) return lambda_g_max;
  return lambda_g_max * std::min(1.0, static_cast<Scalar>(it) / ramp);
}

bool LossReport::finite() const {
  return std::isfinite(disc.total()) && std::isfinite(r_e) && std::isfinite(r_g) && std::isfinite(entropy) &&
         std::isfinite(mean_reward) && std::isfinite(value_loss) && std::isfinite(trpo.surrogate_after) &&
         std::isfinite(trpo.kl);
}

std::string LossReport::to_json() const {
  nlohmann::json j = {{"iteration", iteration},
                      {"disc_expert", disc.expert},
                      {"disc_generated", disc.generated},
                      {"disc_selector", disc.selector},
                      {"r_e", r_e},
                      {"r_g", r_g},
                      {"lambda_g", lambda_g},
                      {"entropy", entropy},
                      {"selector_accuracy", selector_accuracy},
                      {"mean_reward", mean_reward},
                      {"value_loss", value_loss},
                      {"rollout_success", rollout_success},
                      {"trpo", {{"surrogate_before", trpo.surrogate_before},
                                {"surrogate_after", trpo.surrogate_after},
                                {"kl", trpo.kl},
                                {"backtracks", trpo.backtracks},
                                {"accepted", trpo.accepted},
                                {"expected_improvement", trpo.expected_improvement},
                                {"cg_iterations", trpo.cg_iterations},
                                {"cg_residual", trpo.cg_residual}}}};
  return j.dump();
}

std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::bc: return "bc";
    case Algorithm::gail: return "gail";
    case Algorithm::cgail: return "cgail";
    case Algorithm::triple_gail: return "triple-gail";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view s) {
  for (auto a : {Algorithm::bc, Algorithm::gail, Algorithm::cgail, Algorithm::triple_gail})
    if (algorithm_name(a) == s) return a;
  throw std::invalid_argument(fmt::format("unknown algorithm '{}'", s));
}

// ---------------------------------------------------------------- trainers

namespace {

model::GeneratorConfig generator_config(const TaskSpec& task, int skills, const std::vector<int>& hidden,
                                        Scalar init_log_std) {
  model::GeneratorConfig g;
  g.obs_dim = task.obs_dim;
  g.act_dim = task.act_dim;
  g.skills = skills;
  g.hidden = hidden;
  g.head = task.head;
  g.init_log_std = init_log_std;
  g.action_low = task.action_low;
  g.action_high = task.action_high;
  return g;
}

model::SelectorConfig selector_config(const TaskSpec& task, const TripleGailConfig& cfg) {
  model::SelectorConfig s;
  s.obs_dim = task.obs_dim;
  s.act_dim = task.act_dim;
  s.skills = task.skills;
  s.hidden = cfg.hidden;
  s.window = cfg.window;
  return s;
}

Scalar nll(const GeneratorModel& gen, const StepSet& set) {
  const Vec lp = model::log_prob_value(gen, gen.input(set.states, set.labels), set.actions);
  return -lp.mean();
}

/// Maximum-likelihood fit of the policy network (and log-std) on `set`.
void fit_policy(GeneratorModel& gen, const StepSet& set, int epochs, Scalar lr, int minibatch, Rng& rng,
                const std::function<void(int)>& after_epoch = {}) {
  ad::Adam opt(gen.policy, lr);
  const Mat inputs = gen.input(set.states, set.labels);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    minibatch_indices(set.size(), 0, 0, minibatch, rng, [&](const auto& idx, const auto&, const auto&) {
      const Mat x = rows_of(inputs, idx);
      const Mat a = rows_of(set.actions, idx);
      ad::value_and_grad(gen.policy, [&](ad::Tape& tape, std::span<const Var> vars) {
        return ad::neg(ad::mean(model::log_prob(gen, vars, tape.constant(x), a)));
      });
      opt.step(gen.policy);
    });
    if (after_epoch) after_epoch(epoch);
  }
}

std::vector<std::vector<int>> by_label(const std::vector<LabeledTrajectory>& demos, int skills) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(skills));
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const int c = demos[i].label;
    if (c < 0 || c >= skills) throw std::invalid_argument(fmt::format("demo label {} out of range", c));
    out[static_cast<std::size_t>(c)].push_back(static_cast<int>(i));
  }
  for (int c = 0; c < skills; ++c)
    if (out[static_cast<std::size_t>(c)].empty())
      throw std::invalid_argument(fmt::format("no demonstrations carry label {}", c));
  return out;
}

bool absorbing(env::Termination t) {
  return t == env::Termination::collision || t == env::Termination::offroad;
}

enum class Mode { gail, cgail, triple };

TrainedModels adversarial_train(Mode mode, const TaskSpec& task, const std::vector<LabeledTrajectory>& demos,
                                const std::vector<LabeledTrajectory>& heldout, const TripleGailConfig& cfg,
                                const rl::TrpoConfig& trpo, const TrainHooks& hooks) {
  if (demos.empty()) throw std::invalid_argument("training needs demonstrations");
  cfg.validate();
  trpo.validate();
  const int K = task.skills;
  const bool conditioned = mode != Mode::gail;
  const int gen_skills = conditioned ? K : 0;
  const Scalar omega = mode == Mode::triple ? cfg.omega : 1.0;

  TrainedModels out;
  out.algorithm = mode == Mode::gail ? Algorithm::gail : mode == Mode::cgail ? Algorithm::cgail : Algorithm::triple_gail;
  out.gen = GeneratorModel(generator_config(task, gen_skills, cfg.hidden, cfg.init_log_std), derive_seed(cfg.seed, 1));
  model::DiscriminatorConfig dc;
  dc.obs_dim = task.obs_dim;
  dc.act_dim = task.act_dim;
  dc.skills = gen_skills;
  dc.hidden = cfg.hidden;
  out.disc = DiscriminatorModel(dc, derive_seed(cfg.seed, 2));
  if (mode == Mode::triple) out.sel = SelectorModel(selector_config(task, cfg), derive_seed(cfg.seed, 3));
  if (mode == Mode::cgail) out.sel = train_classifier(task, demos, cfg);

  Rng rng(derive_seed(cfg.seed, 0xa160));
  if (cfg.bc_warmstart_epochs > 0) {
    const StepSet all = steps_from(demos, gen_skills, cfg.window, task.zero_action);
    fit_policy(out.gen, all, cfg.bc_warmstart_epochs, 1e-3, 256, rng);
  }

  ad::Adam value_opt(out.gen.value_params, trpo.value_lr);
  ad::Adam disc_opt(out.disc->params, cfg.disc.lr);
  std::optional<ad::Adam> sel_opt;
  if (mode == Mode::triple) sel_opt.emplace(out.sel->params, cfg.sel.lr);
  const auto pools = by_label(demos, K);

  const RolloutOptions opts{LabelSource::fixed, true, cfg.window, gen_skills};
  for (int it = 0; it < cfg.iterations; ++it) {
    const GeneratorModel gen_snapshot = out.gen;
    const DiscriminatorModel disc_snapshot = *out.disc;
    const std::optional<SelectorModel> sel_snapshot = out.sel;
    try {
      std::vector<RolloutJob> jobs;
      std::vector<LabeledTrajectory> expert;
      for (int c = 0; c < K; ++c) {
        const auto& pool = pools[static_cast<std::size_t>(c)];
        for (int e = 0; e < cfg.episodes_per_skill; ++e) {
          const auto& d = demos[static_cast<std::size_t>(pool[rng.below(pool.size())])];
          jobs.push_back({d.key, c, derive_seed(cfg.seed, 0x0770, static_cast<std::uint64_t>(it),
                                                static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(e))});
          expert.push_back(d);
        }
      }
      const auto trajs = rollout_many(task.make_env, out.gen, nullptr, jobs, opts, cfg.workers);

      // Policy step on r = -log D.
      const StepSet gen_set = steps_from(trajs, gen_skills, cfg.window, task.zero_action);
      const StepSet raw_set = steps_from(trajs, gen_skills, cfg.window, task.zero_action, true);
      rl::RolloutBatch batch;
      batch.inputs = out.gen.input(gen_set.states, gen_set.labels);
      batch.actions = raw_set.actions;
      batch.rewards = model::surrogate_rewards(*out.disc, gen_set.states, gen_set.actions, gen_set.labels);
      batch.values = out.gen.value(batch.inputs);
      batch.log_probs.resize(gen_set.size());
      Index row = 0;
      int successes = 0;
      for (const auto& t : trajs) {
        rl::EpisodeSpan span{row, row + t.length(), absorbing(t.end), 0.0};
        for (Scalar lp : t.log_probs) batch.log_probs(row++) = lp;
        if (!span.terminal) {
          const Mat last = t.steps.back().next_state.transpose();
          const Mat lab = gen_skills ? Mat(env::skill_label(t.label, K).transpose()) : Mat(1, 0);
          span.bootstrap = out.gen.value(out.gen.input(last, lab))(0);
        }
        batch.episodes.push_back(span);
        successes += t.end == env::Termination::road_end;
      }
      const rl::Gae gae = rl::compute_gae(batch, trpo.gamma, trpo.lambda);
      LossReport rep;
      rep.iteration = it;
      rep.trpo = rl::trpo_update(out.gen, batch, gae.advantages, trpo, cfg.lambda_h);
      const auto vl = rl::fit_value(out.gen, value_opt, batch.inputs, gae.targets, trpo, rng);
      rep.value_loss = vl.back();
      rep.mean_reward = batch.rewards.mean();
      rep.rollout_success = static_cast<Scalar>(successes) / static_cast<Scalar>(trajs.size());
      rep.entropy = out.gen.gaussian() ? model::policy_entropy(out.gen) : 0.0;

      // Discriminator, then selector.
      const StepSet exp_set = steps_from(expert, gen_skills, cfg.window, task.zero_action);
      StepSet sel_set;
      if (mode == Mode::triple) sel_set = selector_labeled(*out.sel, gen_set, rng);
      rep.disc = discriminator_update(*out.disc, disc_opt, exp_set.uniform(), gen_set, sel_set, omega, cfg.disc, rng);
      if (mode == Mode::triple) {
        rep.lambda_g = cfg.lambda_g_at(it);
        const SelectorParts sp = selector_update(*out.sel, *sel_opt, *out.disc, exp_set, gen_set, omega,
                                                 cfg.lambda_e, rep.lambda_g, K, cfg.sel, rng);
        rep.r_e = sp.re;
        rep.r_g = sp.rg;
      } else if (mode == Mode::cgail) {
        rep.r_e = selector_cross_entropy(*out.sel, exp_set);
        rep.r_g = selector_cross_entropy(*out.sel, gen_set);
      }
      if (out.sel && !heldout.empty())
        rep.selector_accuracy = heldout_selector_accuracy(*out.sel, heldout, cfg.window, task.zero_action);
      if (!rep.finite()) throw NumericalError(fmt::format("non-finite loss at iteration {}", it));
      out.log.push_back(rep);
      if (hooks.on_iteration) hooks.on_iteration(rep);
      if (hooks.on_checkpoint) hooks.on_checkpoint(it + 1, out);
    } catch (const NumericalError& e) {
      out.gen = gen_snapshot;
      out.disc = disc_snapshot;
      out.sel = sel_snapshot;
      out.aborted = true;
      out.abort_reason = e.what();
      break;
    }
  }
  return out;
}

}  // namespace

SelectorModel train_classifier(const TaskSpec& task, const std::vector<LabeledTrajectory>& demos,
                               const TripleGailConfig& cfg) {
  if (demos.empty()) throw std::invalid_argument("train_classifier: no demonstrations");
  SelectorModel sel(selector_config(task, cfg), derive_seed(cfg.seed, 4));
  const StepSet set = steps_from(demos, task.skills, cfg.window, task.zero_action);
  ad::Adam opt(sel.params, 1e-3);
  Rng rng(derive_seed(cfg.seed, 0xc1a5));
  for (int epoch = 0; epoch < cfg.classifier_epochs; ++epoch) {
    minibatch_indices(set.size(), 0, 0, 256, rng, [&](const auto& idx, const auto&, const auto&) {
      const StepSet b = set.subset(idx);
      ad::value_and_grad(sel.params, [&](ad::Tape& tape, std::span<const Var> vars) {
        return selector_cross_entropy(sel, vars, tape, b);
      });
      opt.step(sel.params);
    });
  }
  return sel;
}

Scalar heldout_selector_accuracy(const SelectorModel& sel, const std::vector<LabeledTrajectory>& trajs,
                                 int window, const Vec& zero_action) {
  if (trajs.empty()) throw std::invalid_argument("selector accuracy: no trajectories");
  Scalar total = 0.0;
  for (const auto& t : trajs) {
    std::vector<Vec> states, actions;
    for (const auto& s : t.steps) {
      states.push_back(s.state);
      actions.push_back(s.action);
    }
    const Mat p = sel.probs(model::selector_features(states, actions, window, zero_action));
    int hits = 0;
    for (Index i = 0; i < p.rows(); ++i) hits += argmax_lowest(p.row(i).transpose()) == t.label;
    total += static_cast<Scalar>(hits) / static_cast<Scalar>(p.rows());
  }
  return total / static_cast<Scalar>(trajs.size());
}

TrainedModels bc_train(const TaskSpec& task, const std::vector<LabeledTrajectory>& demos,
                       const std::vector<LabeledTrajectory>& heldout, const BcConfig& cfg) {
  if (demos.empty()) throw std::invalid_argument("bc_train: no demonstrations");
  const int skills = cfg.labeled ? task.skills : 0;
  TrainedModels out;
  out.algorithm = Algorithm::bc;
  out.gen = GeneratorModel(generator_config(task, skills, cfg.hidden, cfg.init_log_std), derive_seed(cfg.seed, 1));
  const StepSet set = steps_from(demos, skills, 1, task.zero_action).uniform();
  const StepSet held = heldout.empty() ? StepSet{} : steps_from(heldout, skills, 1, task.zero_action).uniform();
  Rng rng(derive_seed(cfg.seed, 0xbc));
  fit_policy(out.gen, set, cfg.epochs, cfg.lr, cfg.minibatch, rng, [&](int) {
    out.bc_train_nll.push_back(nll(out.gen, set));
    if (!held.empty()) out.bc_heldout_nll.push_back(nll(out.gen, held));
  });
  return out;
}

TrainedModels gail_train(const TaskSpec& task, const std::vector<LabeledTrajectory>& demos,
                         const TripleGailConfig& cfg, const rl::TrpoConfig& trpo, const TrainHooks& hooks) {
  return adversarial_train(Mode::gail, task, demos, {}, cfg, trpo, hooks);
}

TrainedModels cgail_train(const TaskSpec& task, const std::vector<LabeledTrajectory>& demos,
                          const std::vector<LabeledTrajectory>& heldout, const TripleGailConfig& cfg,
                          const rl::TrpoConfig& trpo, const TrainHooks& hooks) {
  return adversarial_train(Mode::cgail, task, demos, heldout, cfg, trpo, hooks);
}

TrainedModels triple_gail_train(const TaskSpec& task, const std::vector<LabeledTrajectory>& demos,
                                const std::vector<LabeledTrajectory>& heldout, const TripleGailConfig& cfg,
                                const rl::TrpoConfig& trpo, const TrainHooks& hooks) {
  return adversarial_train(Mode::triple, task, demos, heldout, cfg, trpo, hooks);
}

}  // namespace tgail::algo
