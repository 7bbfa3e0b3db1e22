#include "tgail/models.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <charconv>

namespace tgail::model {

using ad::Var;

std::string_view encoding_name(Encoding e) {
  return e == Encoding::concat ? "concat" : "joint_one_hot";
}

Encoding parse_encoding(std::string_view s) {
  if (s == "concat") return Encoding::concat;
  if (s == "joint_one_hot") return Encoding::joint_one_hot;
  throw std::invalid_argument(fmt::format("unknown encoding '{}'", s));
}

Mat joint_cells(const Mat& states, const Mat& actions, const Mat& labels) {
  const Index n = states.rows();
  if (actions.rows() != n || (labels.cols() > 0 && labels.rows() != n))
    throw DimensionError("joint_cells: row counts differ");
  const Index na = std::max<Index>(actions.cols(), 1);
  const Index nk = std::max<Index>(labels.cols(), 1);
  Mat out = Mat::Zero(n, states.cols() * na * nk);
  for (Index i = 0; i < n; ++i) {
    const Index s = argmax_lowest(states.row(i).transpose());
    const Index a = actions.cols() > 0 ? argmax_lowest(actions.row(i).transpose()) : 0;
    const Index c = labels.cols() > 0 ? argmax_lowest(labels.row(i).transpose()) : 0;
    out(i, (s * na + a) * nk + c) = 1.0;
  }
  return out;
}

namespace {

Mat hcat(const Mat& a, const Mat& b) {
  if (b.cols() == 0) return a;
  if (a.rows() != b.rows()) throw DimensionError("input rows differ");
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

void check_cols(const Mat& m, int expected, const char* what) {
  if (m.cols() != expected)
    throw DimensionError(fmt::format("{}: {} columns, expected {}", what, m.cols(), expected));
}

}  // namespace

// ---------------------------------------------------------------- generator

GeneratorModel::GeneratorModel(GeneratorConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.obs_dim < 1 || cfg_.act_dim < 1 || cfg_.skills < 0)
    throw DimensionError("generator: bad dimensions");
  if (cfg_.action_low.size() != cfg_.action_high.size() ||
      (cfg_.action_low.size() != 0 && cfg_.action_low.size() != cfg_.act_dim))
    throw DimensionError("generator: action bounds must match act_dim");
  const auto out_act = ad::Activation::identity;
  policy_spec = ad::MlpSpec::make(input_dim(), cfg_.hidden, cfg_.act_dim, ad::Activation::tanh, out_act);
  value_spec = ad::MlpSpec::make(input_dim(), cfg_.hidden, 1, ad::Activation::tanh, out_act);
  Rng rng(derive_seed(seed, 0x9e11));
  ad::init_mlp(policy, policy_spec, rng, "pi.");
  if (gaussian()) policy.add("log_std", Mat::Constant(1, cfg_.act_dim, cfg_.init_log_std));
  ad::init_mlp(value_params, value_spec, rng, "v.", 1.0, 1.0);
}

int GeneratorModel::input_dim() const {
  if (cfg_.encoding == Encoding::joint_one_hot) return cfg_.obs_dim * std::max(cfg_.skills, 1);
  return cfg_.obs_dim + cfg_.skills;
}

Mat GeneratorModel::input(const Mat& states, const Mat& labels) const {
  check_cols(states, cfg_.obs_dim, "generator states");
  if (cfg_.skills > 0) check_cols(labels, cfg_.skills, "generator labels");
  const Mat lab = cfg_.skills > 0 ? labels : Mat(states.rows(), 0);
  if (cfg_.encoding == Encoding::joint_one_hot) return joint_cells(states, Mat(states.rows(), 0), lab);
  return hcat(states, lab);
}

Mat GeneratorModel::policy_output(const Mat& input) const {
  return ad::evaluate(policy_spec, policy, input);
}

Vec GeneratorModel::value(const Mat& input) const {
  return ad::evaluate(value_spec, value_params, input).col(0);
}

RowVec GeneratorModel::log_std() const {
  if (!gaussian()) throw std::logic_error("log_std: categorical head");
  return policy.value(log_std_entry()).row(0);
}

Vec GeneratorModel::clip(const Vec& action) const {
  if (cfg_.action_low.size() == 0) return action;
  return action.cwiseMax(cfg_.action_low).cwiseMin(cfg_.action_high);
}

Var log_prob(const GeneratorModel& gen, std::span<const Var> vars, const Var& input,
             const Mat& actions) {
  const Var out = ad::forward(gen.policy_spec, vars, input);
  if (gen.gaussian()) return ad::gaussian_log_prob(actions, out, vars[gen.log_std_entry()]);
  if (actions.rows() != out.rows() || actions.cols() != out.cols())
    throw DimensionError("log_prob: one-hot actions do not match logits");
  return ad::dot_rows(ad::log_softmax_rows(out), actions);
}

Var entropy(const GeneratorModel& gen, std::span<const Var> vars, const Var& input) {
  if (gen.gaussian()) {
    const Scalar d = gen.config().act_dim;
    return ad::add_scalar(ad::sum(vars[gen.log_std_entry()]), 0.5 * d * std::log(2.0 * M_PI * M_E));
  }
  const Var logits = ad::forward(gen.policy_spec, vars, input);
  const Var logp = ad::log_softmax_rows(logits);
  const Var p = ad::softmax_rows(logits);
  return ad::neg(ad::mean(ad::row_sum(ad::mul(p, logp))));
}

Vec log_prob_value(const GeneratorModel& gen, const Mat& input, const Mat& actions) {
  const Mat out = gen.policy_output(input);
  if (actions.rows() != out.rows() || actions.cols() != out.cols())
    throw DimensionError("log_prob_value: actions do not match policy output");
  Vec lp(out.rows());
  if (gen.gaussian()) {
    const RowVec ls = gen.log_std();
    const RowVec inv_var = (-2.0 * ls.array()).exp();
    const Scalar c = -0.5 * std::log(2.0 * M_PI) * static_cast<Scalar>(out.cols()) - ls.sum();
    for (Index i = 0; i < out.rows(); ++i)
      lp(i) = c - 0.5 * ((actions.row(i) - out.row(i)).array().square() * inv_var.array()).sum();
  } else {
    for (Index i = 0; i < out.rows(); ++i) {
      const Scalar m = out.row(i).maxCoeff();
      const Scalar lse = m + std::log((out.row(i).array() - m).exp().sum());
      lp(i) = (actions.row(i).array() * (out.row(i).array() - lse)).sum();
    }
  }
  return lp;
}

Scalar policy_entropy(const GeneratorModel& gen) {
  if (!gen.gaussian()) throw std::logic_error("policy_entropy: Gaussian head only");
  const Scalar d = gen.config().act_dim;
  return 0.5 * d * std::log(2.0 * M_PI * M_E) + gen.log_std().sum();
}

PolicySample policy_sample(const GeneratorModel& gen, const Vec& state, const Vec& label, Rng& rng) {
  const Mat in = gen.input(state.transpose(), label.size() ? Mat(label.transpose()) : Mat(1, 0));
  const RowVec out = gen.policy_output(in).row(0);
  if (!out.allFinite()) throw NumericalError("policy_sample: non-finite policy output");
  PolicySample s;
  if (gen.gaussian()) {
    const RowVec ls = gen.log_std();
    s.raw = out.transpose() + (ls.array().exp().transpose() * rng.normal_vec(out.size()).array()).matrix();
    s.action = gen.clip(s.raw);
  } else {
    const Scalar m = out.maxCoeff();
    Vec p = (out.array() - m).exp().transpose();
    p /= p.sum();
    s.raw = one_hot(rng.categorical(p), out.size());
    s.action = s.raw;
  }
  s.log_prob = log_prob_value(gen, in, s.raw.transpose())(0);
  return s;
}

Vec policy_mode(const GeneratorModel& gen, const Vec& state, const Vec& label) {
  const Mat in = gen.input(state.transpose(), label.size() ? Mat(label.transpose()) : Mat(1, 0));
  const Vec out = gen.policy_output(in).row(0).transpose();
  if (!out.allFinite()) throw NumericalError("policy_mode: non-finite policy output");
  if (gen.gaussian()) return gen.clip(out);
  return one_hot(argmax_lowest(out), out.size());
}

Scalar sampled_entropy(const GeneratorModel& gen, const Vec& state, const Vec& label, int samples,
                       Rng& rng) {
  if (samples < 1) throw std::invalid_argument("sampled_entropy: samples must be positive");
  Scalar total = 0.0;
  for (int i = 0; i < samples; ++i) total -= policy_sample(gen, state, label, rng).log_prob;
  return total / samples;
}

// ---------------------------------------------------------------- selector

SelectorModel::SelectorModel(SelectorConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.skills < 2 || cfg_.window < 1) throw DimensionError("selector: bad dimensions");
  spec = ad::MlpSpec::make(input_dim(), cfg_.hidden, cfg_.skills, ad::Activation::tanh,
                           ad::Activation::identity);
  Rng rng(derive_seed(seed, 0x5e1));
  ad::init_mlp(params, spec, rng, "sel.");
}

int SelectorModel::input_dim() const {
  if (cfg_.raw_input_dim > 0) return cfg_.raw_input_dim;
  return cfg_.window * (cfg_.obs_dim + cfg_.act_dim);
}

Mat SelectorModel::probs(const Mat& features) const {
  check_cols(features, input_dim(), "selector features");
  Mat z = ad::evaluate(spec, params, features);
  for (Index i = 0; i < z.rows(); ++i) {
    const Scalar m = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - m).exp();
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

Var selector_log_probs(const SelectorModel& sel, std::span<const Var> vars, const Var& features) {
  return ad::log_softmax_rows(ad::forward(sel.spec, vars, features));
}

SelectorWindow::SelectorWindow(int window, int obs_dim, int act_dim)
    : window_(window), obs_dim_(obs_dim), act_dim_(act_dim) {
  if (window < 1) throw std::invalid_argument("selector window must be >= 1");
}

void SelectorWindow::push(const Vec& state, const Vec& prev_action) {
  if (state.size() != obs_dim_ || prev_action.size() != act_dim_)
    throw DimensionError("SelectorWindow::push: sizes");
  Vec pair(obs_dim_ + act_dim_);
  pair << state, prev_action;
  pairs_.push_front(std::move(pair));
  while (static_cast<int>(pairs_.size()) > window_) pairs_.pop_back();
}

Vec SelectorWindow::features() const {
  const int w = obs_dim_ + act_dim_;
  Vec f = Vec::Zero(window_ * w);
  for (std::size_t i = 0; i < pairs_.size(); ++i) f.segment(static_cast<Index>(i) * w, w) = pairs_[i];
  return f;
}

Mat selector_features(const std::vector<Vec>& states, const std::vector<Vec>& actions, int window,
                      const Vec& zero_action) {
  if (states.size() != actions.size()) throw DimensionError("selector_features: length mismatch");
  if (states.empty()) return Mat(0, 0);
  SelectorWindow win(window, static_cast<int>(states[0].size()), static_cast<int>(zero_action.size()));
  Mat out(static_cast<Index>(states.size()), window * (states[0].size() + zero_action.size()));
  for (std::size_t t = 0; t < states.size(); ++t) {
    win.push(states[t], t == 0 ? zero_action : actions[t - 1]);
    out.row(static_cast<Index>(t)) = win.features().transpose();
  }
  return out;
}

Vec selector_predict(const SelectorModel& sel, const Vec& features) {
  return sel.probs(features.transpose()).row(0).transpose();
}

int selector_choose(const SelectorModel& sel, const Vec& features) {
  return static_cast<int>(argmax_lowest(selector_predict(sel, features)));
}

// ---------------------------------------------------------------- discriminator

DiscriminatorModel::DiscriminatorModel(DiscriminatorConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)) {
  if (cfg_.obs_dim < 1 || cfg_.act_dim < 0 || cfg_.skills < 0)
    throw DimensionError("discriminator: bad dimensions");
  spec = ad::MlpSpec::make(input_dim(), cfg_.hidden, 1, ad::Activation::tanh, ad::Activation::identity);
  Rng rng(derive_seed(seed, 0xd15c));
  ad::init_mlp(params, spec, rng, "d.");
}

int DiscriminatorModel::input_dim() const {
  if (cfg_.encoding == Encoding::joint_one_hot)
    return cfg_.obs_dim * std::max(cfg_.act_dim, 1) * std::max(cfg_.skills, 1);
  return cfg_.obs_dim + cfg_.act_dim + cfg_.skills;
}

Mat DiscriminatorModel::input(const Mat& states, const Mat& actions, const Mat& labels) const {
  check_cols(states, cfg_.obs_dim, "discriminator states");
  check_cols(actions, cfg_.act_dim, "discriminator actions");
  if (cfg_.skills > 0) check_cols(labels, cfg_.skills, "discriminator labels");
  const Mat lab = cfg_.skills > 0 ? labels : Mat(states.rows(), 0);
  if (cfg_.encoding == Encoding::joint_one_hot) return joint_cells(states, actions, lab);
  return hcat(hcat(states, actions), lab);
}

Vec DiscriminatorModel::logit(const Mat& input) const {
  return ad::evaluate(spec, params, input).col(0);
}

Scalar clamped_sigmoid(Scalar logit) {
  const Scalar d = 1.0 / (1.0 + std::exp(-logit));
  return std::clamp(d, kDiscClamp, 1.0 - kDiscClamp);
}

Vec DiscriminatorModel::score(const Mat& input) const {
  return logit(input).unaryExpr([](Scalar z) { return clamped_sigmoid(z); });
}

Var log_d(const DiscriminatorModel& disc, std::span<const Var> vars, const Var& input) {
  const Var d = ad::clamp(ad::sigmoid(ad::forward(disc.spec, vars, input)), kDiscClamp, 1.0 - kDiscClamp);
  return ad::log(d, kDiscClamp);
}

Var log_one_minus_d(const DiscriminatorModel& disc, std::span<const Var> vars, const Var& input) {
  const Var d = ad::clamp(ad::sigmoid(ad::forward(disc.spec, vars, input)), kDiscClamp, 1.0 - kDiscClamp);
  return ad::log(ad::add_scalar(ad::neg(d), 1.0), kDiscClamp);
}

Scalar discriminator_score(const DiscriminatorModel& disc, const Vec& state, const Vec& action,
                           const Vec& label) {
  const Mat lab = label.size() ? Mat(label.transpose()) : Mat(1, 0);
  return disc.score(disc.input(state.transpose(), action.transpose(), lab))(0);
}

Scalar surrogate_reward(const DiscriminatorModel& disc, const Vec& state, const Vec& action,
                        const Vec& label) {
  return -std::log(discriminator_score(disc, state, action, label));
}

Vec surrogate_rewards(const DiscriminatorModel& disc, const Mat& states, const Mat& actions,
                      const Mat& labels) {
  return disc.score(disc.input(states, actions, labels)).array().log().matrix() * -1.0;
}

// ---------------------------------------------------------------- persistence

namespace {

std::string join_ints(const std::vector<int>& v) { return fmt::format("{}", fmt::join(v, ",")); }

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start < s.size()) {
    auto end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    int v = 0;
    const auto r = std::from_chars(s.data() + start, s.data() + end, v);
    if (r.ec != std::errc()) throw std::runtime_error("checkpoint: bad integer list '" + s + "'");
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

std::string join_vec(const Vec& v) {
  return fmt::format("{}", fmt::join(v.data(), v.data() + v.size(), ","));
}

Vec split_vec(const std::string& s) {
  std::vector<Scalar> xs;
  std::size_t start = 0;
  while (start < s.size()) {
    auto end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    Scalar v = 0.0;
    const auto r = std::from_chars(s.data() + start, s.data() + end, v);
    if (r.ec != std::errc()) throw std::runtime_error("checkpoint: bad number list '" + s + "'");
    xs.push_back(v);
    start = end + 1;
  }
  return Eigen::Map<Vec>(xs.data(), static_cast<Index>(xs.size()));
}

const std::string& meta(const Checkpoint& c, const std::string& key) {
  const auto it = c.meta.find(key);
  if (it == c.meta.end()) throw std::runtime_error("checkpoint: missing metadata " + key);
  return it->second;
}

int meta_int(const Checkpoint& c, const std::string& key) { return std::stoi(meta(c, key)); }

void copy_params(ad::ParamSet& dst, const ad::ParamSet& src, const std::string& what) {
  if (!dst.same_layout(src)) throw std::runtime_error("checkpoint: " + what + " layout mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) dst.value(i) = src.value(i);
}

}  // namespace

void store(Checkpoint& ckpt, const GeneratorModel& gen, const std::string& prefix) {
  const auto& c = gen.config();
  ckpt.meta[prefix + "obs_dim"] = std::to_string(c.obs_dim);
  ckpt.meta[prefix + "act_dim"] = std::to_string(c.act_dim);
  ckpt.meta[prefix + "skills"] = std::to_string(c.skills);
  ckpt.meta[prefix + "hidden"] = join_ints(c.hidden);
  ckpt.meta[prefix + "head"] = gen.gaussian() ? "gaussian" : "categorical";
  ckpt.meta[prefix + "encoding"] = std::string(encoding_name(c.encoding));
  ckpt.meta[prefix + "action_low"] = join_vec(c.action_low);
  ckpt.meta[prefix + "action_high"] = join_vec(c.action_high);
  append_prefixed(ckpt.params, gen.policy, prefix + "policy.");
  append_prefixed(ckpt.params, gen.value_params, prefix + "value.");
}

void store(Checkpoint& ckpt, const SelectorModel& sel, const std::string& prefix) {
  const auto& c = sel.config();
  ckpt.meta[prefix + "obs_dim"] = std::to_string(c.obs_dim);
  ckpt.meta[prefix + "act_dim"] = std::to_string(c.act_dim);
  ckpt.meta[prefix + "skills"] = std::to_string(c.skills);
  ckpt.meta[prefix + "hidden"] = join_ints(c.hidden);
  ckpt.meta[prefix + "window"] = std::to_string(c.window);
  ckpt.meta[prefix + "raw_input_dim"] = std::to_string(c.raw_input_dim);
  append_prefixed(ckpt.params, sel.params, prefix);
}

void store(Checkpoint& ckpt, const DiscriminatorModel& disc, const std::string& prefix) {
  const auto& c = disc.config();
  ckpt.meta[prefix + "obs_dim"] = std::to_string(c.obs_dim);
  ckpt.meta[prefix + "act_dim"] = std::to_string(c.act_dim);
  ckpt.meta[prefix + "skills"] = std::to_string(c.skills);
  ckpt.meta[prefix + "hidden"] = join_ints(c.hidden);
  ckpt.meta[prefix + "encoding"] = std::string(encoding_name(c.encoding));
  ckpt.meta[prefix + "clamp"] = fmt::format("{}", kDiscClamp);
  append_prefixed(ckpt.params, disc.params, prefix);
}

bool has_model(const Checkpoint& ckpt, const std::string& prefix) {
  return ckpt.meta.count(prefix + "obs_dim") > 0;
}

GeneratorModel load_generator(const Checkpoint& ckpt, const std::string& prefix) {
  GeneratorConfig c;
  c.obs_dim = meta_int(ckpt, prefix + "obs_dim");
  c.act_dim = meta_int(ckpt, prefix + "act_dim");
  c.skills = meta_int(ckpt, prefix + "skills");
  c.hidden = split_ints(meta(ckpt, prefix + "hidden"));
  c.head = meta(ckpt, prefix + "head") == "gaussian" ? PolicyHead::gaussian : PolicyHead::categorical;
  c.encoding = parse_encoding(meta(ckpt, prefix + "encoding"));
  c.action_low = split_vec(meta(ckpt, prefix + "action_low"));
  c.action_high = split_vec(meta(ckpt, prefix + "action_high"));
  GeneratorModel gen(c, 0);
  copy_params(gen.policy, extract_prefixed(ckpt.params, prefix + "policy."), "policy");
  copy_params(gen.value_params, extract_prefixed(ckpt.params, prefix + "value."), "value");
  return gen;
}

SelectorModel load_selector(const Checkpoint& ckpt, const std::string& prefix) {
  SelectorConfig c;
  c.obs_dim = meta_int(ckpt, prefix + "obs_dim");
  c.act_dim = meta_int(ckpt, prefix + "act_dim");
  c.skills = meta_int(ckpt, prefix + "skills");
  c.hidden = split_ints(meta(ckpt, prefix + "hidden"));
  c.window = meta_int(ckpt, prefix + "window");
  c.raw_input_dim = meta_int(ckpt, prefix + "raw_input_dim");
  SelectorModel sel(c, 0);
  copy_params(sel.params, extract_prefixed(ckpt.params, prefix), "selector");
  return sel;
}

DiscriminatorModel load_discriminator(const Checkpoint& ckpt, const std::string& prefix) {
  DiscriminatorConfig c;
  c.obs_dim = meta_int(ckpt, prefix + "obs_dim");
  c.act_dim = meta_int(ckpt, prefix + "act_dim");
  c.skills = meta_int(ckpt, prefix + "skills");
  c.hidden = split_ints(meta(ckpt, prefix + "hidden"));
  c.encoding = parse_encoding(meta(ckpt, prefix + "encoding"));
  DiscriminatorModel disc(c, 0);
  copy_params(disc.params, extract_prefixed(ckpt.params, prefix), "discriminator");
  return disc;
}

}  // namespace tgail::model
