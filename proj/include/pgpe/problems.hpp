#ifndef PGPE_PROBLEMS_HPP
#define PGPE_PROBLEMS_HPP

// Objective functions: analytic benchmarks, a small episodic point-mass
// control task with linear / one-hidden-layer policies, running observation
// statistics, and fitness-rescaling wrappers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pgpe/common.hpp"

namespace pgpe {

// ---------------------------------------------------------------------------
// running statistics

/// Count / mean / sum of squared deviations per channel (Welford, with the
/// Chan et al. pairwise merge).
class RunningStats {
 public:
  /// Smallest standard deviation used when normalizing.
  static constexpr double kStdFloor = 1e-8;

  RunningStats() = default;
  explicit RunningStats(std::size_t dimension) : mean_(dimension, 0.0), m2_(dimension, 0.0) {}
  RunningStats(std::int64_t count, Vector mean, Vector m2)
      : count_(count), mean_(std::move(mean)), m2_(std::move(m2)) {
    require(count_ >= 0, "running stats count must be nonnegative");
    detail::require_same_size(mean_.size(), m2_.size(), "running stats");
  }

  std::size_t dimension() const { return mean_.size(); }
  std::int64_t count() const { return count_; }
  const Vector& mean() const { return mean_; }
  const Vector& m2() const { return m2_; }

  /// Population variance; zero while empty.
  Vector variance() const {
    Vector var(mean_.size(), 0.0);
    if (count_ == 0) return var;
    for (std::size_t i = 0; i < var.size(); ++i)
      var[i] = std::max(m2_[i] / static_cast<double>(count_), 0.0);
    return var;
  }

  void update(std::span<const double> observation) {
    detail::require_same_size(observation.size(), mean_.size(), "observation");
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double delta = observation[i] - mean_[i];
      mean_[i] += delta / n;
      m2_[i] += delta * (observation[i] - mean_[i]);
    }
  }

  void update(const std::vector<Vector>& batch) {
    for (const Vector& obs : batch) update(obs);
  }

  void merge(const RunningStats& other) {
    detail::require_same_size(other.dimension(), dimension(), "running stats merge");
    if (other.count_ == 0) return;
    if (count_ == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(other.count_);
    const double n = na + nb;
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double delta = other.mean_[i] - mean_[i];
      mean_[i] += delta * nb / n;
      m2_[i] += other.m2_[i] + delta * delta * na * nb / n;
    }
    count_ += other.count_;
  }

  /// (obs - mean) / max(std, 1e-8). Identity while no data has been seen.
  Vector normalize(std::span<const double> observation) const {
    detail::require_same_size(observation.size(), mean_.size(), "observation");
    Vector out(observation.begin(), observation.end());
    if (count_ == 0) return out;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double sd = std::sqrt(std::max(m2_[i] / static_cast<double>(count_), 0.0));
      out[i] = (out[i] - mean_[i]) / std::max(sd, kStdFloor);
    }
    return out;
  }

 private:
  std::int64_t count_ = 0;
  Vector mean_;
  Vector m2_;
};

inline RunningStats update_stats(RunningStats stats, const std::vector<Vector>& batch) {
  stats.update(batch);
  return stats;
}

inline RunningStats merged(RunningStats a, const RunningStats& b) {
  a.merge(b);
  return a;
}

// ---------------------------------------------------------------------------
// objective interface

struct Evaluation {
  double fitness = 0.0;
  std::int64_t timesteps = 1;
  /// Episodic tasks: whether the episode ended in the goal state.
  bool solved = false;
  /// Observations seen during the rollout, for the normalizer (empty when the
  /// objective has no observations).
  RunningStats observations;
};

/// Maximization objective. Implementations must be deterministic in
/// (solution, seed, normalizer) and safe to call from several threads.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t dimension() const = 0;
  /// Observation width when the objective is an episodic task, else 0.
  virtual std::size_t observation_dimension() const { return 0; }
  virtual Evaluation evaluate(std::span<const double> solution, std::uint64_t seed,
                              const RunningStats* normalizer = nullptr) const = 0;
};

using ObjectivePtr = std::shared_ptr<const Objective>;

// ---------------------------------------------------------------------------
// analytic benchmarks

enum class Benchmark { sphere, rastrigin, rosenbrock };

inline Benchmark parse_benchmark(std::string_view name) {
  if (name == "sphere") return Benchmark::sphere;
  if (name == "rastrigin") return Benchmark::rastrigin;
  if (name == "rosenbrock") return Benchmark::rosenbrock;
  throw Error("unknown analytic benchmark '" + std::string(name) + "'");
}

inline double benchmark_value(Benchmark which, std::span<const double> x) {
  double sum = 0.0;
  switch (which) {
    case Benchmark::sphere:
      for (double v : x) sum += v * v;
      break;
    case Benchmark::rastrigin:
      sum = 10.0 * static_cast<double>(x.size());
      for (double v : x) sum += v * v - 10.0 * std::cos(2.0 * std::numbers::pi * v);
      break;
    case Benchmark::rosenbrock:
      for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        const double a = x[i + 1] - x[i] * x[i];
        const double b = 1.0 - x[i];
        sum += 100.0 * a * a + b * b;
      }
      break;
  }
  return sum;
}

/// Fitness of a named benchmark: the negated benchmark value.
inline double eval_analytic(std::string_view name, std::span<const double> x) {
  const Benchmark which = parse_benchmark(name);
  detail::require_finite(x, "solution");
  return -benchmark_value(which, x);
}

class AnalyticObjective final : public Objective {
 public:
  AnalyticObjective(Benchmark which, std::size_t dimension) : which_(which), dimension_(dimension) {
    require(dimension >= 1, "benchmark dimension must be at least 1");
  }
  AnalyticObjective(std::string_view name, std::size_t dimension)
      : AnalyticObjective(parse_benchmark(name), dimension) {}

  std::size_t dimension() const override { return dimension_; }

  Evaluation evaluate(std::span<const double> solution, std::uint64_t,
                      const RunningStats* = nullptr) const override {
    detail::require_same_size(solution.size(), dimension_, "solution");
    detail::require_finite(solution, "solution");
    Evaluation e;
    e.fitness = -benchmark_value(which_, solution);
    e.timesteps = 1;
    return e;
  }

 private:
  Benchmark which_;
  std::size_t dimension_;
};

// ---------------------------------------------------------------------------
// fitness wrappers

enum class ScaleMode { identity, times_1000, div_1000 };

inline ScaleMode parse_scale_mode(std::string_view name) {
  if (name == "identity" || name == "none") return ScaleMode::identity;
  if (name == "times_1000") return ScaleMode::times_1000;
  if (name == "div_1000") return ScaleMode::div_1000;
  throw Error("unknown scale mode '" + std::string(name) + "'");
}

inline std::string_view to_string(ScaleMode mode) {
  switch (mode) {
    case ScaleMode::identity: return "identity";
    case ScaleMode::times_1000: return "times_1000";
    case ScaleMode::div_1000: return "div_1000";
  }
  return "?";
}

/// Applies `transform` to every fitness of the wrapped objective.
class TransformedObjective final : public Objective {
 public:
  TransformedObjective(ObjectivePtr base, std::function<double(double)> transform)
      : base_(std::move(base)), transform_(std::move(transform)) {}

  std::size_t dimension() const override { return base_->dimension(); }
  std::size_t observation_dimension() const override { return base_->observation_dimension(); }

  Evaluation evaluate(std::span<const double> solution, std::uint64_t seed,
                      const RunningStats* normalizer = nullptr) const override {
    Evaluation e = base_->evaluate(solution, seed, normalizer);
    e.fitness = transform_(e.fitness);
    return e;
  }

 private:
  ObjectivePtr base_;
  std::function<double(double)> transform_;
};

inline ObjectivePtr scale_fitness_wrapper(ObjectivePtr base, ScaleMode mode) {
  switch (mode) {
    case ScaleMode::identity:
      return std::make_shared<TransformedObjective>(std::move(base), [](double f) { return f; });
    case ScaleMode::times_1000:
      return std::make_shared<TransformedObjective>(std::move(base),
                                                    [](double f) { return f * 1000.0; });
    case ScaleMode::div_1000:
      return std::make_shared<TransformedObjective>(std::move(base),
                                                    [](double f) { return f / 1000.0; });
  }
  throw Error("unknown scale mode");
}

// ---------------------------------------------------------------------------
// policies

struct LinearShape {
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  bool bias = true;

  std::size_t parameter_count() const { return obs_dim * act_dim + (bias ? act_dim : 0); }
};

struct MlpShape {
  std::size_t obs_dim = 0;
  std::size_t hidden = 64;
  std::size_t act_dim = 0;

  std::size_t parameter_count() const {
    return obs_dim * hidden + hidden + hidden * act_dim + act_dim;
  }
};

namespace detail {

inline void require_parameter_count(std::size_t expected, std::size_t actual) {
  if (expected != actual)
    throw Error("policy parameter length mismatch: expected " + std::to_string(expected) +
                ", got " + std::to_string(actual));
}

// out = in * W + b, with W row-major (rows = in.size()).
inline void affine(std::span<const double> in, std::span<const double> weights,
                   std::span<const double> bias, std::span<double> out) {
  const std::size_t cols = out.size();
  for (std::size_t c = 0; c < cols; ++c) out[c] = bias.empty() ? 0.0 : bias[c];
  for (std::size_t r = 0; r < in.size(); ++r) {
    const double v = in[r];
    const double* row = weights.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += v * row[c];
  }
}

}  // namespace detail

/// act = obs * W (+ b). Parameters are W row-major followed by b.
class LinearPolicy {
 public:
  LinearPolicy(const LinearShape& shape, std::span<const double> parameters) : shape_(shape) {
    detail::require_parameter_count(shape.parameter_count(), parameters.size());
    const std::size_t nw = shape.obs_dim * shape.act_dim;
    weights_.assign(parameters.begin(), parameters.begin() + static_cast<std::ptrdiff_t>(nw));
    bias_.assign(parameters.begin() + static_cast<std::ptrdiff_t>(nw), parameters.end());
  }

  const LinearShape& shape() const { return shape_; }
  const Vector& weights() const { return weights_; }
  const Vector& bias() const { return bias_; }

  Vector flatten() const {
    Vector out(weights_);
    out.insert(out.end(), bias_.begin(), bias_.end());
    return out;
  }

  Vector act(std::span<const double> obs) const {
    detail::require_same_size(obs.size(), shape_.obs_dim, "policy observation");
    Vector out(shape_.act_dim);
    detail::affine(obs, weights_, bias_, out);
    return out;
  }

 private:
  LinearShape shape_;
  Vector weights_;
  Vector bias_;
};

/// act = tanh(obs * W1 + b1) * W2 + b2. Parameters: W1, b1, W2, b2.
class MlpPolicy {
 public:
  MlpPolicy(const MlpShape& shape, std::span<const double> parameters) : shape_(shape) {
    detail::require_parameter_count(shape.parameter_count(), parameters.size());
    auto take = [&, pos = std::size_t{0}](std::size_t n) mutable {
      Vector v(parameters.begin() + static_cast<std::ptrdiff_t>(pos),
               parameters.begin() + static_cast<std::ptrdiff_t>(pos + n));
      pos += n;
      return v;
    };
    w1_ = take(shape.obs_dim * shape.hidden);
    b1_ = take(shape.hidden);
    w2_ = take(shape.hidden * shape.act_dim);
    b2_ = take(shape.act_dim);
  }

  const MlpShape& shape() const { return shape_; }

  Vector flatten() const {
    Vector out;
    out.reserve(shape_.parameter_count());
    for (const Vector* part : {&w1_, &b1_, &w2_, &b2_}) out.insert(out.end(), part->begin(), part->end());
    return out;
  }

  Vector act(std::span<const double> obs) const {
    detail::require_same_size(obs.size(), shape_.obs_dim, "policy observation");
    Vector hidden(shape_.hidden);
    detail::affine(obs, w1_, b1_, hidden);
    for (double& h : hidden) h = std::tanh(h);
    Vector out(shape_.act_dim);
    detail::affine(hidden, w2_, b2_, out);
    return out;
  }

 private:
  MlpShape shape_;
  Vector w1_, b1_, w2_, b2_;
};

using PolicyShape = std::variant<LinearShape, MlpShape>;
using Policy = std::variant<LinearPolicy, MlpPolicy>;

inline std::size_t parameter_count(const PolicyShape& shape) {
  return std::visit([](const auto& s) { return s.parameter_count(); }, shape);
}

inline Policy unflatten(const PolicyShape& shape, std::span<const double> parameters) {
  return std::visit(
      [&](const auto& s) -> Policy {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, LinearShape>) return LinearPolicy(s, parameters);
        else return MlpPolicy(s, parameters);
      },
      shape);
}

inline Vector flatten(const Policy& policy) {
  return std::visit([](const auto& p) { return p.flatten(); }, policy);
}

inline Vector act(const Policy& policy, std::span<const double> obs) {
  return std::visit([&](const auto& p) { return p.act(obs); }, policy);
}

// ---------------------------------------------------------------------------
// point-reaching task

/// A point mass in the plane driven by a clipped 2-D acceleration toward a
/// fixed target. Reward per step is minus the distance to the target, plus a
/// one-time bonus when the target is reached (which ends the episode).
struct PointReachConfig {
  std::array<double, 2> start{1.0, 0.0};
  std::array<double, 2> target{0.0, 0.0};
  /// Half-width of the uniform jitter added to the start position per seed.
  double start_jitter = 0.0;
  double dt = 0.1;
  std::int64_t max_steps = 200;
  double success_radius = 0.05;
  double success_bonus = 100.0;

  static constexpr std::size_t kObservationDim = 4;
  static constexpr std::size_t kActionDim = 2;

  /// Largest distance to the target reachable within an episode.
  double max_distance() const {
    const double d0 = std::hypot(start[0] - target[0], start[1] - target[1]) +
                      std::sqrt(2.0) * start_jitter;
    const double n = static_cast<double>(max_steps);
    // |v_t| <= t * dt per axis, so the displacement is at most dt^2 n(n+1)/2.
    return d0 + std::sqrt(2.0) * dt * dt * n * (n + 1.0) / 2.0;
  }
};

class PointReachEnv {
 public:
  struct Step {
    Vector observation;
    double reward = 0.0;
    bool done = false;
    bool success = false;
  };

  explicit PointReachEnv(const PointReachConfig& config) : config_(config) {}

  const PointReachConfig& config() const { return config_; }

  Vector reset(std::uint64_t seed) {
    position_ = config_.start;
    if (config_.start_jitter > 0.0) {
      Engine rng(seed);
      std::uniform_real_distribution<double> u(-config_.start_jitter, config_.start_jitter);
      position_[0] += u(rng);
      position_[1] += u(rng);
    }
    velocity_ = {0.0, 0.0};
    steps_ = 0;
    return observation();
  }

  Step step(std::span<const double> action) {
    detail::require_same_size(action.size(), PointReachConfig::kActionDim, "action");
    detail::require_finite(action, "action");
    for (std::size_t i = 0; i < 2; ++i) {
      const double a = std::clamp(action[i], -1.0, 1.0);
      velocity_[i] += a * config_.dt;
      position_[i] += velocity_[i] * config_.dt;
    }
    ++steps_;
    Step s;
    const double dist = distance();
    s.success = dist <= config_.success_radius;
    s.reward = -dist + (s.success ? config_.success_bonus : 0.0);
    s.done = s.success || steps_ >= config_.max_steps;
    s.observation = observation();
    detail::require_finite(s.observation, "environment state");
    return s;
  }

  double distance() const {
    return std::hypot(position_[0] - config_.target[0], position_[1] - config_.target[1]);
  }

 private:
  using Engine = std::mt19937_64;

  Vector observation() const {
    return {position_[0] - config_.target[0], position_[1] - config_.target[1], velocity_[0],
            velocity_[1]};
  }

  PointReachConfig config_;
  std::array<double, 2> position_{};
  std::array<double, 2> velocity_{};
  std::int64_t steps_ = 0;
};

struct RolloutResult {
  double cumulative_reward = 0.0;
  std::int64_t timesteps = 0;
  bool success = false;
  /// Raw (unnormalized) observations the policy acted on.
  std::vector<Vector> observations;
};

/// One episode. When `normalizer` is given the policy sees normalized
/// observations; the returned observations are always raw.
inline RolloutResult rollout(const PointReachConfig& config, const Policy& policy,
                             const RunningStats* normalizer, std::uint64_t seed) {
  PointReachEnv env(config);
  Vector obs = env.reset(seed);
  RolloutResult result;
  result.observations.reserve(static_cast<std::size_t>(config.max_steps));
  for (;;) {
    result.observations.push_back(obs);
    const Vector action = normalizer ? act(policy, normalizer->normalize(obs)) : act(policy, obs);
    PointReachEnv::Step s = env.step(action);
    result.cumulative_reward += s.reward;
    ++result.timesteps;
    if (s.done) {
      result.success = s.success;
      break;
    }
    obs = std::move(s.observation);
  }
  return result;
}

class PointReachObjective final : public Objective {
 public:
  PointReachObjective(const PointReachConfig& config, PolicyShape shape)
      : config_(config), shape_(std::move(shape)) {
    const auto check = [](std::size_t obs, std::size_t act) {
      require(obs == PointReachConfig::kObservationDim && act == PointReachConfig::kActionDim,
              "point-reach policies map 4 observations to 2 actions");
    };
    std::visit([&](const auto& s) { check(s.obs_dim, s.act_dim); }, shape_);
  }

  std::size_t dimension() const override { return parameter_count(shape_); }
  std::size_t observation_dimension() const override { return PointReachConfig::kObservationDim; }
  const PointReachConfig& config() const { return config_; }

  Evaluation evaluate(std::span<const double> solution, std::uint64_t seed,
                      const RunningStats* normalizer = nullptr) const override {
    const Policy policy = unflatten(shape_, solution);
    RolloutResult r = rollout(config_, policy, normalizer, seed);
    Evaluation e;
    e.fitness = r.cumulative_reward;
    e.timesteps = r.timesteps;
    e.solved = r.success;
    e.observations = RunningStats(PointReachConfig::kObservationDim);
    e.observations.update(r.observations);
    return e;
  }

 private:
  PointReachConfig config_;
  PolicyShape shape_;
};

}  // namespace pgpe

#endif  // PGPE_PROBLEMS_HPP
