#include "tgail/demos.hpp"

#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace tgail::env {

namespace {

constexpr int kSchemaVersion = 2;
constexpr int kMaxAttempts = 100;

Termination parse_termination(std::string_view s) {
  for (auto t : {Termination::running, Termination::collision, Termination::offroad,
                 Termination::road_end, Termination::horizon})
    if (termination_name(t) == s) return t;
  throw std::runtime_error(fmt::format("demos: unknown termination '{}'", s));
}

Scalar parse_scalar(std::string_view s) {
  Scalar v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::runtime_error(fmt::format("demos: bad number '{}'", s));
  return v;
}

template <typename T>
T parse_int(std::string_view s) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::runtime_error(fmt::format("demos: bad integer '{}'", s));
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string format_scalar(Scalar v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

LabeledTrajectory expert_rollout(LaneWorld& env, const EpisodeKey& key, int skill) {
  LabeledTrajectory traj;
  traj.label = skill;
  traj.key = key;
  Vec obs = env.reset(key);
  bool done = false;
  while (!done) {
    Transition tr;
    tr.t = env.timestep();
    tr.position = env.position();
    tr.state = obs;
    tr.action = scripted_expert(env.state(), skill, env.config()).to_vec();
    const StepResult r = env.step(tr.action);
    tr.next_state = r.observation;
    tr.done = r.done;
    obs = r.observation;
    done = r.done;
    traj.steps.push_back(std::move(tr));
    if (done) traj.end = r.cause;
  }
  traj.final_position = env.position();
  return traj;
}

DemoSet generate_demos(int per_skill, std::uint64_t seed, const LaneWorldConfig& cfg,
                       const ScenarioCatalog& catalog, int skills) {
  if (per_skill < 1) throw std::invalid_argument("generate_demos: per_skill must be >= 1");
  LaneWorld env(cfg, catalog);
  DemoSet set;
  set.per_skill.assign(static_cast<std::size_t>(skills), 0);
  int successes = 0;
  for (int k = 0; k < skills; ++k) {
    const int scenario = catalog.scenario_for_skill(k);
    for (int i = 0; i < per_skill; ++i) {
      for (int attempt = 0;; ++attempt) {
        if (attempt == kMaxAttempts)
          throw std::runtime_error(fmt::format("generate_demos: expert keeps colliding on skill {}", k));
        const EpisodeKey key{scenario, derive_seed(seed, static_cast<std::uint64_t>(k),
                                                   static_cast<std::uint64_t>(i),
                                                   static_cast<std::uint64_t>(attempt))};
        LabeledTrajectory traj = expert_rollout(env, key, k);
        if (traj.end == Termination::collision || traj.end == Termination::offroad) {
          ++set.regenerated;
          continue;
        }
        if (traj.end == Termination::road_end) ++successes;
        set.trajectories.push_back(std::move(traj));
        ++set.per_skill[static_cast<std::size_t>(k)];
        break;
      }
    }
  }
  set.expert_success_rate =
      static_cast<Scalar>(successes) / static_cast<Scalar>(set.trajectories.size());
  return set;
}

void write_demos(std::ostream& out, const std::vector<LabeledTrajectory>& demos,
                 const std::vector<std::string>& feature_names) {
  if (demos.empty() || demos.front().steps.empty())
    throw std::invalid_argument("write_demos: nothing to write");
  const Index obs_dim = demos.front().steps.front().state.size();
  const Index act_dim = demos.front().steps.front().action.size();
  std::vector<std::string> names = feature_names;
  if (names.empty())
    for (Index i = 0; i < obs_dim; ++i) names.push_back(fmt::format("s{}", i));
  if (static_cast<Index>(names.size()) != obs_dim)
    throw DimensionError("write_demos: feature name count does not match state size");

  out << fmt::format("#tgail-demos schema={} obs_dim={} act_dim={} episodes={}\n", kSchemaVersion,
                     obs_dim, act_dim, demos.size());
  out << "#columns episode,label,scenario,seed,t,done,end,pos_x,pos_y,next_pos_x,next_pos_y";
  for (const auto& n : names) out << ',' << n;
  for (Index i = 0; i < act_dim; ++i) out << ",a" << i;
  for (const auto& n : names) out << ",next_" << n;
  out << '\n';

  for (std::size_t e = 0; e < demos.size(); ++e) {
    const auto& d = demos[e];
    for (std::size_t s = 0; s < d.steps.size(); ++s) {
      const auto& tr = d.steps[s];
      const Vec2 next = s + 1 < d.steps.size() ? d.steps[s + 1].position : d.final_position;
      if (tr.state.size() != obs_dim || tr.action.size() != act_dim || tr.next_state.size() != obs_dim)
        throw DimensionError("write_demos: inconsistent transition sizes");
      std::string line = fmt::format("{},{},{},{},{},{},{},{},{},{},{}", e, d.label, d.key.scenario,
                                     d.key.seed, tr.t, tr.done ? 1 : 0, termination_name(d.end),
                                     format_scalar(tr.position(0)), format_scalar(tr.position(1)),
                                     format_scalar(next(0)), format_scalar(next(1)));
      for (Index i = 0; i < obs_dim; ++i) (line += ',') += format_scalar(tr.state(i));
      for (Index i = 0; i < act_dim; ++i) (line += ',') += format_scalar(tr.action(i));
      for (Index i = 0; i < obs_dim; ++i) (line += ',') += format_scalar(tr.next_state(i));
      out << line << '\n';
    }
  }
}

std::vector<LabeledTrajectory> read_demos(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("#tgail-demos", 0) != 0)
    throw std::runtime_error("demos: missing schema header");
  int schema = -1;
  Index obs_dim = -1, act_dim = -1;
  for (auto tok : split(line, ' ')) {
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) continue;
    const auto key = tok.substr(0, eq);
    const auto val = tok.substr(eq + 1);
    if (key == "schema") schema = parse_int<int>(val);
    if (key == "obs_dim") obs_dim = parse_int<Index>(val);
    if (key == "act_dim") act_dim = parse_int<Index>(val);
  }
  if (schema != kSchemaVersion)
    throw std::runtime_error(fmt::format("demos: unsupported schema {}", schema));
  if (obs_dim < 1 || act_dim < 1) throw std::runtime_error("demos: bad dimensions in header");
  if (!std::getline(in, line) || line.rfind("#columns", 0) != 0)
    throw std::runtime_error("demos: missing column header");

  const std::size_t expected = 11 + static_cast<std::size_t>(2 * obs_dim + act_dim);
  std::vector<LabeledTrajectory> out;
  long current = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != expected)
      throw std::runtime_error(fmt::format("demos: expected {} fields, got {}", expected, f.size()));
    const long episode = parse_int<long>(f[0]);
    if (episode != current) {
      if (episode != current + 1) throw std::runtime_error("demos: episodes out of order");
      current = episode;
      LabeledTrajectory t;
      t.label = parse_int<int>(f[1]);
      t.key = {parse_int<int>(f[2]), parse_int<std::uint64_t>(f[3])};
      t.end = parse_termination(f[6]);
      out.push_back(std::move(t));
    }
    auto& traj = out.back();
    if (parse_int<int>(f[1]) != traj.label)
      throw std::runtime_error("demos: label changes within an episode");
    Transition tr;
    tr.t = parse_int<int>(f[4]);
    tr.done = parse_int<int>(f[5]) != 0;
    tr.position = Vec2(parse_scalar(f[7]), parse_scalar(f[8]));
    traj.final_position = Vec2(parse_scalar(f[9]), parse_scalar(f[10]));
    std::size_t k = 11;
    tr.state.resize(obs_dim);
    for (Index i = 0; i < obs_dim; ++i) tr.state(i) = parse_scalar(f[k++]);
    tr.action.resize(act_dim);
    for (Index i = 0; i < act_dim; ++i) tr.action(i) = parse_scalar(f[k++]);
    tr.next_state.resize(obs_dim);
    for (Index i = 0; i < obs_dim; ++i) tr.next_state(i) = parse_scalar(f[k++]);
    traj.steps.push_back(std::move(tr));
  }
  for (auto& t : out) {
    if (!t.well_formed(std::numeric_limits<int>::max()))
      throw std::runtime_error("demos: timesteps not increasing");
  }
  return out;
}

void save_demos(const std::filesystem::path& path, const std::vector<LabeledTrajectory>& demos,
                const std::vector<std::string>& feature_names) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  write_demos(f, demos, feature_names);
}

std::vector<LabeledTrajectory> load_demos(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return read_demos(f);
}

}  // namespace tgail::env
