#include "tgail/eval.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace tgail::eval {

std::vector<EpisodeRecord> records_from(const std::vector<env::LabeledTrajectory>& trajs) {
  std::vector<EpisodeRecord> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) {
    EpisodeRecord r;
    r.scenario = t.key.scenario;
    r.true_label = t.label;
    r.end = t.end;
    for (const auto& s : t.steps) r.positions.push_back(s.position);
    r.positions.push_back(t.final_position);
    r.used_labels = t.used_labels.empty() ? std::vector<int>(t.steps.size(), t.label) : t.used_labels;
    out.push_back(std::move(r));
  }
  return out;
}

std::string_view label_mode_name(LabelMode m) {
  switch (m) {
    case LabelMode::selector: return "selector";
    case LabelMode::true_labels: return "true-labels";
    case LabelMode::none: return "none";
  }
  return "?";
}

std::vector<EpisodeRecord> rollout_eval(const TaskSpec& task, const model::GeneratorModel& gen,
                                        const model::SelectorModel* sel, const EvalOptions& opts) {
  if (opts.episodes < 1) throw std::invalid_argument("rollout_eval: episodes must be >= 1");
  if (opts.labels == LabelMode::selector && sel == nullptr)
    throw std::invalid_argument("rollout_eval: selector mode needs a selector");
  const int gen_skills = gen.config().skills;
  if (opts.labels != LabelMode::none && gen_skills == 0)
    throw std::invalid_argument("rollout_eval: label-blind generator needs label mode 'none'");

  std::vector<algo::RolloutJob> jobs;
  for (int i = 0; i < opts.episodes; ++i) {
    const int scenario = i % task.scenarios;
    const auto ui = static_cast<std::uint64_t>(i);
    algo::RolloutJob j;
    j.key = task.eval_key(scenario, derive_seed(opts.seed, 0xe7a1, ui));
    j.label = task.scenario_skill(scenario);
    j.seed = derive_seed(opts.seed, 0xac7, ui);
    jobs.push_back(j);
  }
  algo::RolloutOptions ro;
  ro.source = opts.labels == LabelMode::selector ? algo::LabelSource::selector
              : opts.labels == LabelMode::none   ? algo::LabelSource::none
                                                 : algo::LabelSource::fixed;
  ro.stochastic = opts.stochastic;
  ro.window = opts.window;
  ro.skills = gen_skills;
  return records_from(algo::rollout_many(task.make_env, gen, sel, jobs, ro, opts.workers));
}

Scalar success_rate(const std::vector<EpisodeRecord>& records) {
  if (records.empty()) throw std::invalid_argument("success_rate: no records");
  Scalar n = 0.0;
  for (const auto& r : records) n += r.success();
  return n / static_cast<Scalar>(records.size());
}

Scalar mean_distance(const std::vector<EpisodeRecord>& records) {
  if (records.empty()) throw std::invalid_argument("mean_distance: no records");
  Scalar d = 0.0;
  for (const auto& r : records) d += r.distance();
  return d / static_cast<Scalar>(records.size());
}

Scalar selector_accuracy(const std::vector<EpisodeRecord>& records) {
  if (records.empty()) throw std::invalid_argument("selector_accuracy: no records");
  Scalar total = 0.0;
  for (const auto& r : records) {
    if (r.used_labels.empty()) continue;
    int hits = 0;
    for (int c : r.used_labels) hits += c == r.true_label;
    total += static_cast<Scalar>(hits) / static_cast<Scalar>(r.used_labels.size());
  }
  return total / static_cast<Scalar>(records.size());
}

Mat position_histogram(const std::vector<const EpisodeRecord*>& records, const HistogramGrid& g) {
  Mat h = Mat::Zero(g.nx, g.ny);
  for (const auto* r : records) {
    for (const auto& p : r->positions) {
      const int ix = std::clamp(static_cast<int>(std::floor((p(0) - g.x_lo) / (g.x_hi - g.x_lo) * g.nx)), 0, g.nx - 1);
      const int iy = std::clamp(static_cast<int>(std::floor((p(1) - g.y_lo) / (g.y_hi - g.y_lo) * g.ny)), 0, g.ny - 1);
      h(ix, iy) += 1.0;
    }
  }
  const Scalar total = h.sum();
  if (total > 0.0) h /= total;
  h.array() += g.epsilon;
  return h / h.sum();
}

Scalar kl_divergence(const Mat& p, const Mat& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw DimensionError("kl_divergence: shapes differ");
  Scalar kl = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const Scalar a = p.data()[i], b = q.data()[i];
    if (a > 0.0) kl += a * std::log(a / b);
  }
  return std::max(kl, 0.0);
}

std::vector<std::optional<Scalar>> position_kl(const std::vector<EpisodeRecord>& demos,
                                               const std::vector<EpisodeRecord>& rollouts, int skills,
                                               const HistogramGrid& grid) {
  std::vector<std::optional<Scalar>> out(static_cast<std::size_t>(skills));
  for (int c = 0; c < skills; ++c) {
    std::vector<const EpisodeRecord*> d, r;
    for (const auto& e : demos)
      if (e.true_label == c) d.push_back(&e);
    for (const auto& e : rollouts)
      if (e.true_label == c) r.push_back(&e);
    if (d.empty() || r.empty()) continue;
    out[static_cast<std::size_t>(c)] = kl_divergence(position_histogram(d, grid), position_histogram(r, grid));
  }
  return out;
}

namespace {

std::pair<Scalar, Scalar> mean_std(const std::vector<Scalar>& xs) {
  Scalar m = 0.0;
  for (Scalar x : xs) m += x;
  m /= static_cast<Scalar>(xs.size());
  Scalar v = 0.0;
  for (Scalar x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<Scalar>(xs.size()))};
}

}  // namespace

EvalReport evaluate(const std::string& algorithm, const TaskSpec& task, const model::GeneratorModel& gen,
                    const model::SelectorModel* sel, const std::vector<EpisodeRecord>& demo_records,
                    const std::vector<std::uint64_t>& seeds, EvalOptions opts,
                    std::vector<EpisodeRecord>* all_records) {
  if (seeds.empty()) throw std::invalid_argument("evaluate: no seeds");
  EvalReport rep;
  rep.algorithm = algorithm;
  rep.label_mode = std::string(label_mode_name(opts.labels));
  rep.seeds = static_cast<int>(seeds.size());
  std::vector<Scalar> succ, dist, acc;
  std::vector<std::vector<Scalar>> kls(static_cast<std::size_t>(task.skills));
  for (auto s : seeds) {
    opts.seed = s;
    auto recs = rollout_eval(task, gen, sel, opts);
    succ.push_back(success_rate(recs));
    dist.push_back(mean_distance(recs));
    if (opts.labels == LabelMode::selector) acc.push_back(selector_accuracy(recs));
    if (!demo_records.empty()) {
      const auto kl = position_kl(demo_records, recs, task.skills);
      for (int c = 0; c < task.skills; ++c)
        if (kl[static_cast<std::size_t>(c)]) kls[static_cast<std::size_t>(c)].push_back(*kl[static_cast<std::size_t>(c)]);
    }
    rep.episodes += static_cast<int>(recs.size());
    if (all_records) all_records->insert(all_records->end(), recs.begin(), recs.end());
  }
  std::tie(rep.success_mean, rep.success_std) = mean_std(succ);
  std::tie(rep.distance_mean, rep.distance_std) = mean_std(dist);
  if (!acc.empty()) rep.selector_accuracy = mean_std(acc).first;
  for (const auto& k : kls) rep.position_kl.push_back(k.empty() ? std::nullopt : std::optional<Scalar>(mean_std(k).first));
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::json kl = nlohmann::json::array();
  for (const auto& k : position_kl) kl.push_back(k ? nlohmann::json(*k) : nlohmann::json(nullptr));
  nlohmann::json j = {{"algorithm", algorithm},
                      {"label_mode", label_mode},
                      {"seeds", seeds},
                      {"episodes", episodes},
                      {"success_mean", success_mean},
                      {"success_std", success_std},
                      {"distance_mean", distance_mean},
                      {"distance_std", distance_std},
                      {"position_kl", kl},
                      {"selector_accuracy", selector_accuracy ? nlohmann::json(*selector_accuracy) : nlohmann::json(nullptr)}};
  return j.dump();
}

std::string EvalReport::csv_header() {
  return "algorithm,label_mode,seeds,episodes,success_mean,success_std,distance_mean,distance_std,"
         "kl_left,kl_keep,kl_right,selector_accuracy";
}

std::string EvalReport::to_csv() const {
  auto opt = [](const std::optional<Scalar>& v) { return v ? fmt::format("{}", *v) : std::string("missing"); };
  std::string line = fmt::format("{},{},{},{},{},{},{},{}", algorithm, label_mode, seeds, episodes, success_mean,
                                 success_std, distance_mean, distance_std);
  for (std::size_t c = 0; c < 3; ++c) line += "," + (c < position_kl.size() ? opt(position_kl[c]) : "missing");
  line += "," + opt(selector_accuracy);
  return line;
}

std::string trajectory_svg(const std::vector<EpisodeRecord>& records, int skills, const HistogramGrid& g,
                           const std::string& title) {
  constexpr int kWidth = 800, kPanel = 140, kMargin = 30;
  static const char* kColors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};
  const int height = kMargin + skills * (kPanel + kMargin);
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
      kWidth + 2 * kMargin, height, kWidth + 2 * kMargin, height, title);
  auto px = [&](Scalar x) { return kMargin + (x - g.x_lo) / (g.x_hi - g.x_lo) * kWidth; };
  for (int c = 0; c < skills; ++c) {
    const Scalar top = kMargin + c * (kPanel + kMargin);
    // Larger y (left lanes) is drawn higher up.
    auto py = [&](Scalar y) { return top + (g.y_hi - y) / (g.y_hi - g.y_lo) * kPanel; };
    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#f4f4f4\" stroke=\"#888\"/>\n",
                       kMargin, top, kWidth, kPanel);
    svg += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n", kMargin,
                       top - 6, env::skill_name(c));
    for (Scalar y : {-2.0, 2.0})
      svg += fmt::format("<line x1=\"{}\" y1=\"{:.2f}\" x2=\"{}\" y2=\"{:.2f}\" stroke=\"#bbb\" stroke-dasharray=\"6,4\"/>\n",
                         kMargin, py(y), kMargin + kWidth, py(y));
    for (const auto& r : records) {
      if (r.true_label != c || r.positions.empty()) continue;
      std::string pts;
      for (const auto& p : r.positions) pts += fmt::format("{:.1f},{:.1f} ", px(p(0)), py(p(1)));
      svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-opacity=\"0.5\" stroke-width=\"1\"/>\n",
                         pts, kColors[c % 5]);
      if (!r.success())
        svg += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"2.5\" fill=\"black\"/>\n", px(r.positions.back()(0)),
                           py(r.positions.back()(1)));
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace tgail::eval
