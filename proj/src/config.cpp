#include "tgail/config.hpp"

#include "tgail/gridmodes.hpp"

#include <fmt/format.h>

#include <fstream>
#include <functional>
#include <map>
#include <thread>

namespace tgail::cfg {

using nlohmann::json;

namespace {

using Setters = std::map<std::string, std::function<void(const json&)>>;

void apply_with(const json& j, const Setters& setters, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(fmt::format("config: '{}' must be an object", where));
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument(fmt::format("config: unknown key '{}{}'", where, key));
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw std::invalid_argument(fmt::format("config: bad value for '{}{}': {}", where, key, e.what()));
    }
  }
}

template <typename T>
std::function<void(const json&)> set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

json update_json(const algo::UpdateConfig& u) {
  return {{"lr", u.lr}, {"epochs", u.epochs}, {"minibatch", u.minibatch}};
}

Setters update_setters(algo::UpdateConfig& u) {
  return {{"lr", set(u.lr)}, {"epochs", set(u.epochs)}, {"minibatch", set(u.minibatch)}};
}

}  // namespace

int default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

void ExperimentConfig::validate(bool check_paths) const {
  if (environment != "laneworld" && environment != "gridmodes")
    throw std::invalid_argument(fmt::format("unknown environment '{}'", environment));
  if (seeds.empty()) throw std::invalid_argument("seed list is empty");
  if (checkpoint_every < 0 || eval_every < 0) throw std::invalid_argument("cadences must be >= 0");
  if (eval_episodes < 1) throw std::invalid_argument("eval_episodes must be >= 1");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (bc.epochs < 1 || bc.minibatch < 1 || !(bc.lr > 0.0)) throw std::invalid_argument("bad bc settings");
  triple.validate();
  trpo.validate();
  if (check_paths) {
    for (const auto* p : {&demos, &heldout, &scenarios})
      if (!p->empty() && !std::filesystem::exists(*p))
        throw std::invalid_argument(fmt::format("path does not exist: {}", *p));
  }
}

json to_json(const ExperimentConfig& c) {
  const auto& t = c.triple;
  const auto& r = c.trpo;
  const auto& b = c.bc;
  return {
      {"environment", c.environment},
      {"algorithm", std::string(algo::algorithm_name(c.algorithm))},
      {"triple",
       {{"omega", t.omega},
        {"lambda_e", t.lambda_e},
        {"lambda_g_max", t.lambda_g_max},
        {"lambda_g_warmup", t.lambda_g_warmup},
        {"lambda_h", t.lambda_h},
        {"iterations", t.iterations},
        {"episodes_per_skill", t.episodes_per_skill},
        {"disc", update_json(t.disc)},
        {"sel", update_json(t.sel)},
        {"window", t.window},
        {"hidden", t.hidden},
        {"init_log_std", t.init_log_std},
        {"bc_warmstart_epochs", t.bc_warmstart_epochs},
        {"classifier_epochs", t.classifier_epochs}}},
      {"trpo",
       {{"max_kl", r.max_kl},
        {"cg_iters", r.cg_iters},
        {"cg_damping", r.cg_damping},
        {"backtrack_steps", r.backtrack_steps},
        {"backtrack_coeff", r.backtrack_coeff},
        {"gamma", r.gamma},
        {"lambda", r.lambda},
        {"value_epochs", r.value_epochs},
        {"value_lr", r.value_lr},
        {"value_minibatch", r.value_minibatch}}},
      {"bc",
       {{"epochs", b.epochs},
        {"lr", b.lr},
        {"minibatch", b.minibatch},
        {"hidden", b.hidden},
        {"init_log_std", b.init_log_std},
        {"labeled", b.labeled}}},
      {"demos", c.demos},
      {"heldout", c.heldout},
      {"scenarios", c.scenarios},
      {"out_dir", c.out_dir},
      {"seeds", c.seeds},
      {"checkpoint_every", c.checkpoint_every},
      {"eval_every", c.eval_every},
      {"eval_episodes", c.eval_episodes},
      {"eval_stochastic", c.eval_stochastic},
      {"workers", c.workers},
  };
}

void apply_json(ExperimentConfig& c, const json& j) {
  auto& t = c.triple;
  auto& r = c.trpo;
  auto& b = c.bc;
  const Setters triple = {
      {"omega", set(t.omega)},
      {"lambda_e", set(t.lambda_e)},
      {"lambda_g_max", set(t.lambda_g_max)},
      {"lambda_g_warmup", set(t.lambda_g_warmup)},
      {"lambda_h", set(t.lambda_h)},
      {"iterations", set(t.iterations)},
      {"episodes_per_skill", set(t.episodes_per_skill)},
      {"disc", [&](const json& v) { apply_with(v, update_setters(t.disc), "triple.disc."); }},
      {"sel", [&](const json& v) { apply_with(v, update_setters(t.sel), "triple.sel."); }},
      {"window", set(t.window)},
      {"hidden", set(t.hidden)},
      {"init_log_std", set(t.init_log_std)},
      {"bc_warmstart_epochs", set(t.bc_warmstart_epochs)},
      {"classifier_epochs", set(t.classifier_epochs)},
  };
  const Setters trpo = {
      {"max_kl", set(r.max_kl)},
      {"cg_iters", set(r.cg_iters)},
      {"cg_damping", set(r.cg_damping)},
      {"backtrack_steps", set(r.backtrack_steps)},
      {"backtrack_coeff", set(r.backtrack_coeff)},
      {"gamma", set(r.gamma)},
      {"lambda", set(r.lambda)},
      {"value_epochs", set(r.value_epochs)},
      {"value_lr", set(r.value_lr)},
      {"value_minibatch", set(r.value_minibatch)},
  };
  const Setters bc = {
      {"epochs", set(b.epochs)},     {"lr", set(b.lr)},
      {"minibatch", set(b.minibatch)}, {"hidden", set(b.hidden)},
      {"init_log_std", set(b.init_log_std)}, {"labeled", set(b.labeled)},
  };
  const Setters top = {
      {"environment", set(c.environment)},
      {"algorithm", [&](const json& v) { c.algorithm = algo::parse_algorithm(v.get<std::string>()); }},
      {"triple", [&](const json& v) { apply_with(v, triple, "triple."); }},
      {"trpo", [&](const json& v) { apply_with(v, trpo, "trpo."); }},
      {"bc", [&](const json& v) { apply_with(v, bc, "bc."); }},
      {"demos", set(c.demos)},
      {"heldout", set(c.heldout)},
      {"scenarios", set(c.scenarios)},
      {"out_dir", set(c.out_dir)},
      {"seeds", set(c.seeds)},
      {"checkpoint_every", set(c.checkpoint_every)},
      {"eval_every", set(c.eval_every)},
      {"eval_episodes", set(c.eval_episodes)},
      {"eval_stochastic", set(c.eval_stochastic)},
      {"workers", set(c.workers)},
  };
  apply_with(j, top, "");
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument(fmt::format("cannot open config {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument(fmt::format("config {}: {}", path.string(), e.what()));
  }
  ExperimentConfig c;
  apply_json(c, j);
  return c;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, end - pos);
    if (item.empty()) throw std::invalid_argument(fmt::format("bad seed list '{}'", text));
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.front() == '-') throw std::invalid_argument(fmt::format("bad seed '{}'", item));
    out.push_back(v);
    pos = end + 1;
  }
  return out;
}

algo::TaskSpec make_task(const ExperimentConfig& c) {
  if (c.environment == "gridmodes") return algo::gridmodes_task();
  const auto catalog = c.scenarios.empty() ? env::ScenarioCatalog::defaults() : env::ScenarioCatalog::load(c.scenarios);
  return algo::laneworld_task({}, catalog);
}

}  // namespace tgail::cfg
