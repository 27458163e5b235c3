#include "cslab/rl/common.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "cslab/common/errors.hpp"
#include "cslab/common/random.hpp"

namespace cslab::rl {

double EpsilonSchedule::at(double progress) const {
  if (fraction <= 0.0 || progress >= fraction) return end;
  return start + (end - start) * std::max(0.0, progress) / fraction;
}

void EpsilonSchedule::validate() const {
  if (!(start >= 0.0 && start <= 1.0 && end >= 0.0 && end <= 1.0)) {
    throw ConfigError("epsilon: start and end must lie in [0, 1]");
  }
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("epsilon: fraction must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const EpsilonSchedule& e) {
  j = nlohmann::json{{"start", e.start}, {"end", e.end}, {"fraction", e.fraction}};
}

void from_json(const nlohmann::json& j, EpsilonSchedule& e) {
  const EpsilonSchedule d;
  e.start = j.value("start", d.start);
  e.end = j.value("end", d.end);
  e.fraction = j.value("fraction", d.fraction);
  e.validate();
}

double episode_metric(const envs::Environment& env, double total_reward, int steps) {
  if (env.kind() == "gridworld") return steps > 0 ? total_reward / steps : 0.0;
  return total_reward;
}

EvalResult summarize(std::span<const double> values) {
  EvalResult r;
  r.per_seed.assign(values.begin(), values.end());
  if (values.empty()) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / double(values.size() - 1));
  }
  return r;
}

EvalResult evaluate(Policy& policy, const envs::Environment& prototype, const Featurizer& featurizer,
                    int n_episodes, std::span<const std::uint64_t> seeds) {
  if (n_episodes < 1) throw UsageError("evaluate: need at least one episode");
  auto env = prototype.clone();
  auto f = featurizer.clone();
  std::vector<double> means;
  for (std::uint64_t seed : seeds) {
    double sum = 0.0;
    for (int e = 0; e < n_episodes; ++e) {
      f->reset(*env, env->reset(derive_seed(seed, "rl.eval", std::uint64_t(e))));
      policy.begin_episode();
      double total = 0.0;
      int steps = 0;
      while (!env->done()) {
        const int a = policy.act(*f);
        const envs::Step s = env->step(a);
        total += s.reward;
        ++steps;
        f->update(*env, a, s.observation);
      }
      sum += episode_metric(*env, total, steps);
    }
    means.push_back(sum / n_episodes);
  }
  return summarize(means);
}

void write_learning_curve(const std::filesystem::path& path, std::span<const CurvePoint> curve,
                          std::uint64_t seed) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "step,episode,train_reward,eval_reward_mean,eval_reward_std,seed\r\n";
  os.precision(10);
  for (const auto& p : curve) {
    os << p.step << ',' << p.episode << ',' << p.train_reward << ',' << p.eval_mean << ',' << p.eval_std << ','
       << seed << "\r\n";
  }
}

CurveRecorder::CurveRecorder(int eval_every, int eval_episodes, std::uint64_t seed)
    : eval_every_(eval_every), eval_episodes_(eval_episodes), seed_(seed) {}

void CurveRecorder::episode_done(int episode, int total_episodes, long long step, double metric, Policy& policy,
                                 const envs::Environment& prototype, const Featurizer& featurizer) {
  metric_sum_ += metric;
  ++metric_count_;
  const int done = episode + 1;
  const bool due = (eval_every_ > 0 && done % eval_every_ == 0) || done == total_episodes;
  if (!due || eval_episodes_ < 1) return;
  // One episode per seed, so the std is the spread across episodes.
  std::vector<std::uint64_t> seeds;
  for (int e = 0; e < eval_episodes_; ++e) seeds.push_back(derive_seed(seed_, "rl.curve", std::uint64_t(e)));
  const EvalResult r = evaluate(policy, prototype, featurizer, 1, seeds);
  CurvePoint p;
  p.step = step;
  p.episode = done;
  p.train_reward = metric_sum_ / metric_count_;
  p.eval_mean = r.mean;
  p.eval_std = r.std;
  curve_.push_back(p);
  metric_sum_ = 0.0;
  metric_count_ = 0;
}

}  // namespace cslab::rl
