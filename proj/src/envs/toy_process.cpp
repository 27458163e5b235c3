#include "cslab/envs/toy_process.hpp"

#include <cmath>
#include <sstream>

#include "cslab/common/errors.hpp"

namespace cslab::envs {

long long ToyProcessConfig::state_count(long long cap) const {
  long long n = 1;
  for (int i = 0; i < window_length(); ++i) {
    n *= alphabet_size;
    if (n > cap) return -1;
  }
  return n;
}

void ToyProcessConfig::validate() const {
  if (alphabet_size < 2) throw ConfigError("toy process: alphabet_size must be >= 2");
  if (memory < 1) throw ConfigError("toy process: memory must be >= 1");
  if (!(p > 1.0 / alphabet_size && p < 1.0)) {
    throw ConfigError("toy process: p must lie in (1/|O|, 1), got " + std::to_string(p));
  }
  if (episode_length < 1) throw ConfigError("toy process: episode_length must be >= 1");
  if (!(gaussian_noise >= 0.0)) throw ConfigError("toy process: gaussian_noise must be >= 0");
}

int toy_target_symbol(int oldest, int action, int alphabet_size) {
  if (action != 0 && action != 1) throw UsageError("toy process: action must be 0 or 1");
  return action == 0 ? oldest : (oldest + 1) % alphabet_size;
}

double toy_emission_probability(int symbol, int oldest, int action,
                                const ToyProcessConfig& config) {
  const int target = toy_target_symbol(oldest, action, config.alphabet_size);
  return symbol == target ? config.p : (1.0 - config.p) / (config.alphabet_size - 1);
}

std::vector<double> render_gaussian(int symbol, const ToyProcessConfig& config, Rng& rng) {
  const int n = config.alphabet_size;
  std::vector<double> out(std::size_t(config.memory * n), 0.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int b = 0; b < config.memory; ++b) {
    out[std::size_t(b * n + symbol)] = config.gaussian_mean;
  }
  if (config.gaussian_noise > 0.0) {
    for (double& v : out) v += config.gaussian_noise * noise(rng);
  }
  return out;
}

int toy_causal_state(std::span<const int> history, const ToyProcessConfig& config) {
  const int w = config.window_length();
  int id = 0;
  for (int i = 0; i < w; ++i) {
    // position i of the window, oldest first
    const long long h = static_cast<long long>(history.size()) - w + i;
    const int sym = h >= 0 ? history[std::size_t(h)] : 0;
    id = id * config.alphabet_size + sym;
  }
  return id;
}

std::vector<int> toy_window_of_state(int state, const ToyProcessConfig& config) {
  std::vector<int> window(std::size_t(config.window_length()));
  for (int i = config.window_length() - 1; i >= 0; --i) {
    window[std::size_t(i)] = state % config.alphabet_size;
    state /= config.alphabet_size;
  }
  return window;
}

int toy_successor_state(int state, int emitted, const ToyProcessConfig& config) {
  const long long n = config.state_count();
  return int((static_cast<long long>(state) * config.alphabet_size + emitted) % n);
}

ToyProcess::ToyProcess(ToyProcessConfig config) : config_(std::move(config)) {
  config_.validate();
  reset(config_.seed);
}

ObservationSpec ToyProcess::observation_spec() const {
  if (config_.obs_mode == ToyObsMode::kDiscrete) {
    return {ObservationSpec::Kind::kCategorical, config_.alphabet_size};
  }
  return {ObservationSpec::Kind::kReal, config_.memory * config_.alphabet_size};
}

Observation ToyProcess::render(int symbol) {
  if (config_.obs_mode == ToyObsMode::kDiscrete) return symbol;
  return render_gaussian(symbol, config_, noise_rng_);
}

Observation ToyProcess::reset(std::uint64_t seed) {
  window_.assign(std::size_t(config_.window_length()), 0);
  t_ = 0;
  symbol_rng_ = make_rng(seed, "toy.symbols");
  noise_rng_ = make_rng(seed, "toy.noise");
  return render(0);
}

Step ToyProcess::step(int action) {
  if (done()) throw UsageError("toy process: step() after the episode ended");
  const int n = config_.alphabet_size;
  const int target = toy_target_symbol(oldest(), action, n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int symbol = target;
  if (u(symbol_rng_) >= config_.p) {
    std::uniform_int_distribution<int> other(0, n - 2);
    const int j = other(symbol_rng_);
    symbol = j < target ? j : j + 1;
  }
  window_.pop_front();
  window_.push_back(symbol);
  ++t_;
  Step s;
  s.observation = render(symbol);
  s.reward = symbol == 1 ? 1.0 : 0.0;
  s.done = done();
  s.truncated = s.done;
  return s;
}

int ToyProcess::ground_truth_state() const {
  const std::vector<int> w(window_.begin(), window_.end());
  return toy_causal_state(w, config_);
}

int ToyProcess::num_ground_truth_states() const { return int(config_.state_count()); }

std::string ToyProcess::descriptor() const {
  std::ostringstream os;
  os << "toy(|O|=" << config_.alphabet_size << ",k=" << config_.memory << ",p=" << config_.p
     << ",obs=" << (config_.obs_mode == ToyObsMode::kDiscrete ? "discrete" : "gaussian") << ")";
  return os.str();
}

std::unique_ptr<Environment> ToyProcess::clone() const {
  return std::make_unique<ToyProcess>(*this);
}

ToySolution solve_toy(const ToyProcessConfig& config) {
  config.validate();
  const long long n_states = config.state_count(1'000'000);
  if (n_states < 0) {
    throw ConfigError("toy oracle: |O|^(k+1) exceeds 10^6 states; refusing to enumerate");
  }
  const int n = config.alphabet_size;
  const int horizon = config.episode_length;
  const auto S = std::size_t(n_states);
  ToySolution sol;
  sol.value.assign(std::size_t(horizon + 1), std::vector<double>(S, 0.0));
  sol.action.assign(std::size_t(horizon), std::vector<int>(S, 0));
  for (int t = horizon - 1; t >= 0; --t) {
    const auto& next = sol.value[std::size_t(t + 1)];
    for (std::size_t s = 0; s < S; ++s) {
      const int oldest = int(s / (S / std::size_t(n)));
      double best = 0.0;
      int best_a = 0;
      for (int a = 0; a < 2; ++a) {
        double q = 0.0;
        for (int o = 0; o < n; ++o) {
          const double pr = toy_emission_probability(o, oldest, a, config);
          const std::size_t succ = (s * std::size_t(n) + std::size_t(o)) % S;
          q += pr * ((o == 1 ? 1.0 : 0.0) + next[succ]);
        }
        if (a == 0 || q > best + 1e-12) {
          best = q;
          best_a = a;
        }
      }
      sol.value[std::size_t(t)][s] = best;
      sol.action[std::size_t(t)][s] = best_a;
    }
  }
  sol.episode_reward = sol.value[0][0];
  return sol;
}

double optimal_expected_reward(const ToyProcessConfig& config) {
  return solve_toy(config).episode_reward;
}

int toy_optimal_policy(const ToyProcess& env, const ToySolution& solution) {
  const auto t = std::size_t(std::min(env.time(), int(solution.action.size()) - 1));
  return solution.action[t][std::size_t(env.ground_truth_state())];
}

}  // namespace cslab::envs
