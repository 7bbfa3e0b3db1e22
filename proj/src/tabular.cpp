#include "tgail/tabular.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <limits>

namespace tgail::theory {

using ad::Var;

Index DiscriminatorTable::defined_cells() const {
  return static_cast<Index>(std::count(defined.begin(), defined.end(), true));
}

DiscriminatorTable optimal_discriminator(const TabularJoint& expert, const TabularJoint& generator,
                                         const TabularJoint& selector, Scalar omega) {
  if (!expert.same_shape(generator) || !expert.same_shape(selector))
    throw DimensionError("optimal_discriminator: tables differ in shape");
  if (!(omega >= 0.0 && omega <= 1.0)) throw std::invalid_argument("optimal_discriminator: omega outside [0, 1]");
  DiscriminatorTable out;
  const Index n = expert.cells();
  out.d = Vec::Constant(n, std::numeric_limits<Scalar>::quiet_NaN());
  out.defined.assign(static_cast<std::size_t>(n), false);
  for (Index i = 0; i < n; ++i) {
    const Scalar pw = omega * generator.data()(i) + (1.0 - omega) * selector.data()(i);
    const Scalar z = expert.data()(i) + pw;
    if (z > 0.0) {
      out.d(i) = pw / z;
      out.defined[static_cast<std::size_t>(i)] = true;
    }
  }
  return out;
}

Scalar max_abs_deviation(const Vec& trained, const DiscriminatorTable& oracle) {
  if (trained.size() != oracle.d.size()) throw DimensionError("max_abs_deviation: sizes differ");
  Scalar worst = 0.0;
  for (Index i = 0; i < trained.size(); ++i)
    if (oracle.defined[static_cast<std::size_t>(i)]) worst = std::max(worst, std::abs(trained(i) - oracle.d(i)));
  return worst;
}

algo::StepSet tabular_steps(const TabularJoint& joint) {
  const int ns = joint.states(), na = joint.actions(), k = joint.skills();
  std::vector<std::array<int, 3>> cells;
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a)
      for (int c = 0; c < k; ++c)
        if (joint(s, a, c) > 0.0) cells.push_back({s, a, c});
  const auto n = static_cast<Index>(cells.size());
  algo::StepSet set;
  set.states = Mat::Zero(n, ns);
  set.actions = Mat::Zero(n, na);
  set.labels = Mat::Zero(n, k);
  set.selector_in = Mat::Zero(n, static_cast<Index>(ns) * na);
  set.weights = Vec(n);
  set.episode.assign(cells.size(), 0);
  for (Index i = 0; i < n; ++i) {
    const auto [s, a, c] = cells[static_cast<std::size_t>(i)];
    set.states(i, s) = 1.0;
    set.actions(i, a) = 1.0;
    set.labels(i, c) = 1.0;
    set.selector_in(i, s * na + a) = 1.0;
    set.weights(i) = joint(s, a, c);
  }
  return set;
}

Mat random_conditional(int rows, int cols, Rng& rng, Scalar scale) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = std::exp(scale * rng.normal());
    m.row(r) /= m.row(r).sum();
  }
  return m;
}

Mat generator_conditional(const TabularJoint& joint) {
  const int ns = joint.states(), na = joint.actions(), k = joint.skills();
  Mat out(static_cast<Index>(ns) * k, na);
  for (int s = 0; s < ns; ++s)
    for (int c = 0; c < k; ++c) {
      Scalar z = 0.0;
      for (int a = 0; a < na; ++a) z += joint(s, a, c);
      for (int a = 0; a < na; ++a) out(s * k + c, a) = z > 0.0 ? joint(s, a, c) / z : 1.0 / na;
    }
  return out;
}

namespace {

// Table logits; log 0 is floored so lookups stay finite.
Mat table_logits(const Mat& conditional) { return conditional.array().max(1e-6).log().matrix(); }

void set_table(ad::ParamSet& params, const Mat& logits) {
  if (params.value(0).rows() != logits.rows() || params.value(0).cols() != logits.cols())
    throw DimensionError(fmt::format("tabular model: expected {}x{} table, got {}x{}", params.value(0).rows(),
                                     params.value(0).cols(), logits.rows(), logits.cols()));
  params.value(0) = logits;
  params.value(1).setZero();
}

}  // namespace

model::GeneratorModel tabular_generator(int states, int actions, int skills, const Mat& conditional) {
  model::GeneratorConfig cfg;
  cfg.obs_dim = states;
  cfg.act_dim = actions;
  cfg.skills = skills;
  cfg.hidden = {};
  cfg.head = model::PolicyHead::categorical;
  cfg.encoding = model::Encoding::joint_one_hot;
  model::GeneratorModel gen(cfg, 0);
  set_table(gen.policy, table_logits(conditional));
  return gen;
}

model::SelectorModel tabular_selector(int states, int actions, int skills, const Mat& conditional) {
  model::SelectorConfig cfg;
  cfg.obs_dim = states;
  cfg.act_dim = actions;
  cfg.skills = skills;
  cfg.hidden = {};
  cfg.raw_input_dim = states * actions;
  model::SelectorModel sel(cfg, 0);
  set_table(sel.params, table_logits(conditional));
  return sel;
}

model::DiscriminatorModel tabular_discriminator(int states, int actions, int skills, std::uint64_t seed) {
  model::DiscriminatorConfig cfg;
  cfg.obs_dim = states;
  cfg.act_dim = actions;
  cfg.skills = skills;
  cfg.hidden = {};
  cfg.encoding = model::Encoding::joint_one_hot;
  return model::DiscriminatorModel(cfg, seed);
}

Mat generator_table(const model::GeneratorModel& gen) {
  const auto& c = gen.config();
  const Index rows = static_cast<Index>(c.obs_dim) * std::max(c.skills, 1);
  Mat z = gen.policy_output(Mat::Identity(rows, rows));
  for (Index r = 0; r < rows; ++r) {
    z.row(r) = (z.row(r).array() - z.row(r).maxCoeff()).exp();
    z.row(r) /= z.row(r).sum();
  }
  return z;
}

Mat selector_table(const model::SelectorModel& sel, int states, int actions) {
  const Index rows = static_cast<Index>(states) * actions;
  return sel.probs(Mat::Identity(rows, rows));
}

Vec discriminator_table(const model::DiscriminatorModel& disc, int states, int actions, int skills) {
  const Index cells = static_cast<Index>(states) * actions * skills;
  return disc.score(Mat::Identity(cells, cells));
}

Scalar train_tabular_discriminator(model::DiscriminatorModel& disc, const TabularJoint& expert,
                                   const TabularJoint& generator, const TabularJoint& selector, Scalar omega,
                                   const DiscTrainConfig& cfg) {
  if (cfg.steps < 1 || !(cfg.lr > 0.0) || !(cfg.final_lr > 0.0))
    throw std::invalid_argument("train_tabular_discriminator: bad schedule");
  const algo::StepSet e = tabular_steps(expert), g = tabular_steps(generator), s = tabular_steps(selector);
  ad::Adam opt(disc.params, cfg.lr);
  const Scalar decay = std::pow(cfg.final_lr / cfg.lr, 1.0 / std::max(1, cfg.steps - 1));
  for (int i = 0; i < cfg.steps; ++i) {
    opt.set_lr(cfg.lr * std::pow(decay, i));
    const Scalar v = ad::value_and_grad(disc.params, [&](ad::Tape& tape, std::span<const Var> vars) {
      return ad::neg(algo::discriminator_objective(disc, vars, tape, e, g, s, omega));
    });
    if (!std::isfinite(v)) throw NumericalError("train_tabular_discriminator: non-finite objective");
    opt.step(disc.params);
  }
  return algo::discriminator_objective_value(disc, e, g, s, omega).total();
}

Scalar generator_gradient_norm(const model::GeneratorModel& gen, const model::DiscriminatorModel& disc,
                               const model::SelectorModel& sel, const TabularJoint& expert, Scalar omega) {
  const int ns = expert.states(), na = expert.actions(), k = expert.skills();
  if (gen.config().obs_dim != ns || gen.config().act_dim != na || gen.config().skills != k)
    throw DimensionError("generator_gradient_norm: generator does not match the table");
  const Vec logd = discriminator_table(disc, ns, na, k).array().log();
  const Mat post = selector_table(sel, ns, na);
  const Mat p_sc = expert.sc_marginal();
  Mat w(static_cast<Index>(ns) * k, na);
  for (int s = 0; s < ns; ++s)
    for (int c = 0; c < k; ++c)
      for (int a = 0; a < na; ++a) {
        Scalar mixed = 0.0;
        for (int c2 = 0; c2 < k; ++c2) mixed += post(s * na + a, c2) * logd(expert.cell(s, a, c2));
        w(s * k + c, a) = p_sc(s, c) * (omega * logd(expert.cell(s, a, c)) + (1.0 - omega) * mixed);
      }
  ad::ParamSet params = gen.policy;
  const Index rows = static_cast<Index>(ns) * k;
  ad::value_and_grad(params, [&](ad::Tape& tape, std::span<const Var> vars) {
    const Var pi = ad::softmax_rows(ad::forward(gen.policy_spec, vars, tape.constant(Mat::Identity(rows, rows))));
    return ad::sum(ad::dot_rows(pi, w));
  });
  return params.flatten_grad().norm();
}

Scalar selector_gradient_norm(const model::SelectorModel& sel, const model::DiscriminatorModel& disc,
                              const TabularJoint& expert, const TabularJoint& generator, Scalar omega,
                              Scalar lambda_e, Scalar lambda_g) {
  const algo::StepSet e = tabular_steps(expert), g = tabular_steps(generator);
  const Mat log_d = algo::log_d_all_labels(disc, g, expert.skills());
  ad::ParamSet params = sel.params;
  ad::value_and_grad(params, [&](ad::Tape& tape, std::span<const Var> vars) {
    return algo::selector_objective(sel, vars, tape, e, g, log_d, omega, lambda_e, lambda_g);
  });
  return params.flatten_grad().norm();
}

bool TheoryReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const TheoryCheck& c) { return c.pass; });
}

const TheoryCheck& TheoryReport::at(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw std::out_of_range(fmt::format("no theory check named '{}'", name));
}

std::string TheoryReport::to_text() const {
  std::string out;
  for (const auto& c : checks)
    out += fmt::format("[{}] {:<32} value={:.6g} tol={:.3g}  {}\n", c.pass ? "PASS" : "FAIL", c.name, c.value,
                       c.tolerance, c.detail);
  out += fmt::format("theory suite: {}\n", pass() ? "PASS" : "FAIL");
  return out;
}

std::string TheoryReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : checks)
    arr.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"pass", c.pass}, {"detail", c.detail}});
  return nlohmann::json{{"pass", pass()}, {"checks", arr}}.dump();
}

TheoryReport verify_theory(const TheoryConfig& cfg) {
  TheoryReport rep;
  const auto& grid = cfg.grid;
  const int ns = grid.states(), na = env::GridModesConfig::actions(), k = grid.skills;
  const TabularJoint expert = env::grid_expert_joint(grid, Vec::Constant(ns, 1.0 / ns));
  Rng rng(derive_seed(cfg.seed, 0x7ab));

  // Optimal discriminator against frozen random players.
  {
    const Mat gen_c = random_conditional(ns * k, na, rng);
    const Mat sel_c = random_conditional(ns * na, k, rng);
    const env::JointTables t = env::gridmodes_enumerate(gen_c, sel_c, expert);
    const DiscriminatorTable oracle = optimal_discriminator(expert, t.generator, t.selector, cfg.omega);
    auto disc = tabular_discriminator(ns, na, k, derive_seed(cfg.seed, 1));
    train_tabular_discriminator(disc, expert, t.generator, t.selector, cfg.omega, cfg.disc);
    if (cfg.corrupt_discriminator) disc.params.value(0) *= -1.0;
    const Scalar dev = max_abs_deviation(discriminator_table(disc, ns, na, k), oracle);
    rep.checks.push_back({"optimal_discriminator", dev, cfg.d_tolerance, dev <= cfg.d_tolerance,
                          fmt::format("max |D - D*| over {} cells", oracle.defined_cells())});
  }

  // Equilibrium: generator and selector at the expert conditionals.
  {
    const Mat gen_c = generator_conditional(expert);
    const Mat sel_c = env::posterior_over_skills(expert);
    const env::JointTables t = env::gridmodes_enumerate(gen_c, sel_c, expert);
    auto disc = tabular_discriminator(ns, na, k, derive_seed(cfg.seed, 2));
    train_tabular_discriminator(disc, expert, t.generator, t.selector, cfg.omega, cfg.disc);
    const Vec d = discriminator_table(disc, ns, na, k);
    Scalar dev = 0.0;
    Index supported = 0;
    for (Index i = 0; i < d.size(); ++i)
      if (expert.data()(i) > 0.0) {
        dev = std::max(dev, std::abs(d(i) - 0.5));
        ++supported;
      }
    rep.checks.push_back({"equilibrium_discriminator", dev, cfg.d_tolerance, dev <= cfg.d_tolerance,
                          fmt::format("max |D - 0.5| over {} supported cells", supported)});
    const auto gen = tabular_generator(ns, na, k, gen_c);
    const auto sel = tabular_selector(ns, na, k, sel_c);
    const Scalar gn = generator_gradient_norm(gen, disc, sel, expert, cfg.omega);
    rep.checks.push_back({"equilibrium_generator_gradient", gn, cfg.norm_tolerance, gn < cfg.norm_tolerance,
                          "policy update norm at the expert conditional"});
    const Scalar sn = selector_gradient_norm(sel, disc, expert, t.generator, cfg.omega, cfg.lambda_e, cfg.lambda_g);
    rep.checks.push_back({"equilibrium_selector_gradient", sn, cfg.norm_tolerance, sn < cfg.norm_tolerance,
                          "selector update norm at the expert posterior"});
  }

  // Two-cell mixture: the mixture matches the expert, neither component does.
  {
    TabularJoint pe(1, 1, 2), pg(1, 1, 2), pc(1, 1, 2);
    pe.data() << 0.5, 0.5;
    pg.data() << 1.0, 0.0;
    pc.data() << 0.0, 1.0;
    const DiscriminatorTable oracle = optimal_discriminator(pe, pg, pc, 0.5);
    auto disc = tabular_discriminator(1, 1, 2, derive_seed(cfg.seed, 3));
    train_tabular_discriminator(disc, pe, pg, pc, 0.5, cfg.disc);
    const Vec d = discriminator_table(disc, 1, 1, 2);
    const Scalar dev = std::max((oracle.d.array() - 0.5).abs().maxCoeff(), (d.array() - 0.5).abs().maxCoeff());
    rep.checks.push_back({"mixture_discriminator", dev, cfg.d_tolerance, dev <= cfg.d_tolerance,
                          fmt::format("D* = [{:.4f}, {:.4f}], trained [{:.4f}, {:.4f}]", oracle.d(0), oracle.d(1),
                                      d(0), d(1))});
    const algo::StepSet e = tabular_steps(pe);
    const Mat mismatched = (Mat(1, 2) << 0.0, 1.0).finished();
    const Mat matched = (Mat(1, 2) << 0.5, 0.5).finished();
    const Scalar re_bad = algo::selector_cross_entropy(tabular_selector(1, 1, 2, mismatched), e);
    const Scalar re_good = algo::selector_cross_entropy(tabular_selector(1, 1, 2, matched), e);
    rep.checks.push_back({"mixture_supervised_penalty", re_bad, 0.5, re_bad > 0.5 && re_bad > re_good,
                          fmt::format("R_E mismatched {:.4f} vs matched {:.4f}", re_bad, re_good)});
  }
  return rep;
}

}  // namespace tgail::theory
