#ifndef PGPE_PGPE_HPP
#define PGPE_PGPE_HPP

// Parameter-exploring policy gradients over a diagonal Gaussian search
// distribution: mirrored sampling, fitness shaping, gradient estimation for
// the center and the standard deviations, and the distribution update.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "pgpe/common.hpp"
#include "pgpe/optimizers.hpp"

namespace pgpe {

using Engine = std::mt19937_64;

/// Smallest standard deviation the update may produce.
inline constexpr double kSigmaFloor = 1e-8;

struct SearchDistribution {
  Vector mean;
  Vector stdev;

  std::size_t dimension() const { return mean.size(); }

  void validate() const {
    detail::require_same_size(mean.size(), stdev.size(), "search distribution");
    require(!mean.empty(), "search distribution must have at least one dimension");
    detail::require_finite(mean, "distribution mean");
    for (double s : stdev)
      require(std::isfinite(s) && s > 0.0, "standard deviations must be positive and finite");
  }
};

enum class FitnessShaping { raw, centered_rank, reward_norm };

inline std::string_view to_string(FitnessShaping shaping) {
  switch (shaping) {
    case FitnessShaping::raw: return "raw";
    case FitnessShaping::centered_rank: return "centered_rank";
    case FitnessShaping::reward_norm: return "reward_norm";
  }
  return "?";
}

inline FitnessShaping parse_fitness_shaping(std::string_view name) {
  if (name == "raw") return FitnessShaping::raw;
  if (name == "centered_rank" || name == "rank") return FitnessShaping::centered_rank;
  if (name == "reward_norm") return FitnessShaping::reward_norm;
  throw Error("unknown fitness shaping '" + std::string(name) + "'");
}

struct PgpeConfig {
  /// Solutions per block; always even because solutions come in mirrored pairs.
  std::int64_t population_size = 100;
  std::int64_t max_population = 100;
  /// Environment steps an iteration must reach before the population stops
  /// growing. Zero disables growth.
  std::int64_t timestep_budget = 0;
  double sigma_learning_rate = 0.1;
  /// Per-dimension cap on |delta sigma| as a fraction of the current sigma.
  double sigma_max_change = 0.2;
  FitnessShaping shaping = FitnessShaping::centered_rank;

  void validate() const {
    require(population_size >= 2 && population_size % 2 == 0,
            "population size must be an even number >= 2");
    require(max_population >= population_size, "max population must be >= population size");
    // growth happens in whole blocks of population_size solutions
    require(max_population % population_size == 0,
            "max population must be a multiple of the population size");
    require(timestep_budget >= 0, "timestep budget must be nonnegative");
    require(sigma_learning_rate > 0.0, "sigma learning rate must be positive");
    require(sigma_max_change > 0.0 && sigma_max_change <= 1.0,
            "sigma max change must lie in (0, 1]");
  }
};

/// Mirrored perturbations and the fitness of both solutions in each pair.
/// Missing fitness values are NaN.
struct DirectionPopulation {
  std::vector<Vector> deltas;
  Vector fitness_plus;
  Vector fitness_minus;
  std::vector<std::int64_t> steps_plus;
  std::vector<std::int64_t> steps_minus;

  std::size_t pair_count() const { return deltas.size(); }
  std::size_t solution_count() const { return 2 * deltas.size(); }

  std::int64_t total_steps() const {
    return std::accumulate(steps_plus.begin(), steps_plus.end(), std::int64_t{0}) +
           std::accumulate(steps_minus.begin(), steps_minus.end(), std::int64_t{0});
  }

  void add_pair(Vector delta) {
    deltas.push_back(std::move(delta));
    fitness_plus.push_back(std::numeric_limits<double>::quiet_NaN());
    fitness_minus.push_back(std::numeric_limits<double>::quiet_NaN());
    steps_plus.push_back(0);
    steps_minus.push_back(0);
  }

  Vector solution(const SearchDistribution& dist, std::size_t pair, bool plus) const {
    Vector x = dist.mean;
    const Vector& d = deltas.at(pair);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += plus ? d[j] : -d[j];
    return x;
  }

  /// Concatenation [f+_1..f+_n, f-_1..f-_n].
  Vector all_fitnesses() const {
    Vector all(fitness_plus);
    all.insert(all.end(), fitness_minus.begin(), fitness_minus.end());
    return all;
  }

  void require_complete() const {
    require(fitness_plus.size() == deltas.size() && fitness_minus.size() == deltas.size(),
            "population fitness arrays do not match the pair count");
    for (std::size_t i = 0; i < deltas.size(); ++i)
      if (std::isnan(fitness_plus[i]) || std::isnan(fitness_minus[i]))
        throw Error("missing fitness for pair " + std::to_string(i));
  }
};

struct GradientEstimate {
  Vector grad_mean;
  Vector grad_sigma;
  double baseline = 0.0;
};

/// Largest fitness seen so far, or a known upper bound when one is supplied.
class FmaxTracker {
 public:
  FmaxTracker() = default;
  explicit FmaxTracker(double known_max) : known_(known_max) {}

  void observe(std::span<const double> fitnesses) {
    for (double f : fitnesses) observed_ = std::max(observed_, f);
  }
  double value() const { return known_ ? *known_ : observed_; }
  std::optional<double> known() const { return known_; }
  double observed() const { return observed_; }
  void set_observed(double v) { observed_ = v; }

 private:
  std::optional<double> known_;
  double observed_ = -std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// sampling

/// Appends `pair_count` mirrored directions drawn as N(0, I) * sigma.
inline void append_pairs(DirectionPopulation& pop, const SearchDistribution& dist,
                         std::size_t pair_count, Engine& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < pair_count; ++i) {
    Vector delta(dist.dimension());
    for (std::size_t j = 0; j < delta.size(); ++j) delta[j] = normal(rng) * dist.stdev[j];
    pop.add_pair(std::move(delta));
  }
}

inline DirectionPopulation sample_population(const SearchDistribution& dist,
                                             std::size_t pair_count, Engine& rng) {
  require(pair_count >= 1, "at least one pair is required");
  dist.validate();
  DirectionPopulation pop;
  append_pairs(pop, dist, pair_count, rng);
  return pop;
}

// ---------------------------------------------------------------------------
// fitness shaping

/// Zero-centered ranks: worst -> -0.5, best -> +0.5, linear in between.
/// Tied values share the mean of the positions they occupy.
inline Vector centered_rank(std::span<const double> fitnesses) {
  const std::size_t n = fitnesses.size();
  require(n >= 2, "centered ranking needs at least two fitness values");
  for (double f : fitnesses) require(!std::isnan(f), "cannot rank a NaN fitness");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fitnesses[a] < fitnesses[b]; });

  Vector ranks(n);
  const double denom = static_cast<double>(n - 1);
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start + 1;
    while (end < n && fitnesses[order[end]] == fitnesses[order[start]]) ++end;
    const double position = 0.5 * static_cast<double>(start + end - 1);
    const double rank = position / denom - 0.5;
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = rank;
    start = end;
  }
  return ranks;
}

struct ShapedFitness {
  Vector plus;
  Vector minus;
};

/// Raw or rank-shaped fitness per pair. Reward normalization has its own
/// estimator (`reward_normalized_gradients`) and is rejected here.
inline ShapedFitness shape_fitness(const DirectionPopulation& pop, FitnessShaping shaping) {
  pop.require_complete();
  switch (shaping) {
    case FitnessShaping::raw:
      return {pop.fitness_plus, pop.fitness_minus};
    case FitnessShaping::centered_rank: {
      const Vector ranks = centered_rank(pop.all_fitnesses());
      const auto n = static_cast<std::ptrdiff_t>(pop.pair_count());
      return {Vector(ranks.begin(), ranks.begin() + n), Vector(ranks.begin() + n, ranks.end())};
    }
    case FitnessShaping::reward_norm:
      break;
  }
  throw Error("reward normalization is not a per-solution shaping");
}

// ---------------------------------------------------------------------------
// gradient estimation

/// (1/|D|) sum_i (f+_i - f-_i)/2 * delta_i
inline Vector estimate_grad_mean(const DirectionPopulation& pop, const ShapedFitness& fit) {
  require(pop.pair_count() >= 1, "empty population");
  detail::require_same_size(fit.plus.size(), pop.pair_count(), "shaped fitness (plus)");
  detail::require_same_size(fit.minus.size(), pop.pair_count(), "shaped fitness (minus)");

  const std::size_t dim = pop.deltas.front().size();
  Vector grad(dim, 0.0);
  for (std::size_t i = 0; i < pop.pair_count(); ++i) {
    if (std::isnan(fit.plus[i]) || std::isnan(fit.minus[i]))
      throw Error("missing fitness for pair " + std::to_string(i));
    const double weight = 0.5 * (fit.plus[i] - fit.minus[i]);
    const Vector& d = pop.deltas[i];
    for (std::size_t j = 0; j < dim; ++j) grad[j] += weight * d[j];
  }
  const double inv = 1.0 / static_cast<double>(pop.pair_count());
  for (double& g : grad) g *= inv;
  return grad;
}

/// (1/|D|) sum_i ((f+_i + f-_i)/2 - baseline) * (delta_i^2 - sigma^2) / sigma,
/// with the baseline being the mean over all 2|D| fitnesses.
inline std::pair<Vector, double> estimate_grad_sigma(const DirectionPopulation& pop,
                                                     const ShapedFitness& fit,
                                                     const SearchDistribution& dist) {
  require(pop.pair_count() >= 1, "empty population");
  detail::require_same_size(fit.plus.size(), pop.pair_count(), "shaped fitness (plus)");
  detail::require_same_size(fit.minus.size(), pop.pair_count(), "shaped fitness (minus)");
  for (double s : dist.stdev) require(s > 0.0, "standard deviations must be positive");

  const std::size_t n = pop.pair_count();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(fit.plus[i]) || std::isnan(fit.minus[i]))
      throw Error("missing fitness for pair " + std::to_string(i));
    total += fit.plus[i] + fit.minus[i];
  }
  const double baseline = total / static_cast<double>(2 * n);

  const std::size_t dim = dist.dimension();
  Vector grad(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double weight = 0.5 * (fit.plus[i] + fit.minus[i]) - baseline;
    const Vector& d = pop.deltas[i];
    for (std::size_t j = 0; j < dim; ++j) {
      const double s = dist.stdev[j];
      grad[j] += weight * (d[j] * d[j] - s * s) / s;
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& g : grad) g *= inv;
  return {std::move(grad), baseline};
}

/// Gradients under the original PGPE reward normalization: each pair's mean
/// term is divided by (f_max - pair average) and the sigma term by
/// (f_max - baseline). Not invariant to fitness rescaling.
inline GradientEstimate reward_normalized_gradients(const DirectionPopulation& pop,
                                                    const SearchDistribution& dist,
                                                    const FmaxTracker& tracker) {
  pop.require_complete();
  require(pop.pair_count() >= 1, "empty population");
  for (double s : dist.stdev) require(s > 0.0, "standard deviations must be positive");

  const double fmax = tracker.value();
  require(std::isfinite(fmax), "reward normalization needs a finite f_max");
  const std::size_t n = pop.pair_count();
  const std::size_t dim = dist.dimension();

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += pop.fitness_plus[i] + pop.fitness_minus[i];
  const double baseline = total / static_cast<double>(2 * n);
  const double baseline_gap = fmax - baseline;
  if (!(baseline_gap > 0.0))
    throw Error("reward normalization: f_max must exceed the population mean fitness");

  GradientEstimate out{Vector(dim, 0.0), Vector(dim, 0.0), baseline};
  for (std::size_t i = 0; i < n; ++i) {
    const double average = 0.5 * (pop.fitness_plus[i] + pop.fitness_minus[i]);
    const double gap = fmax - average;
    if (!(gap > 0.0))
      throw Error("reward normalization: f_max does not exceed the average fitness of pair " +
                  std::to_string(i));
    const double mean_weight = 0.5 * (pop.fitness_plus[i] - pop.fitness_minus[i]) / gap;
    const double sigma_weight = (average - baseline) / baseline_gap;
    const Vector& d = pop.deltas[i];
    for (std::size_t j = 0; j < dim; ++j) {
      const double s = dist.stdev[j];
      out.grad_mean[j] += mean_weight * d[j];
      out.grad_sigma[j] += sigma_weight * (d[j] * d[j] - s * s) / s;
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& g : out.grad_mean) g *= inv;
  for (double& g : out.grad_sigma) g *= inv;
  return out;
}

/// Shapes fitnesses according to `shaping` and estimates both gradients.
inline GradientEstimate estimate_gradients(const DirectionPopulation& pop,
                                           const SearchDistribution& dist,
                                           FitnessShaping shaping, const FmaxTracker& tracker) {
  if (shaping == FitnessShaping::reward_norm) return reward_normalized_gradients(pop, dist, tracker);
  const ShapedFitness fit = shape_fitness(pop, shaping);
  GradientEstimate out;
  out.grad_mean = estimate_grad_mean(pop, fit);
  std::tie(out.grad_sigma, out.baseline) = estimate_grad_sigma(pop, fit, dist);
  return out;
}

// ---------------------------------------------------------------------------
// update

struct DistributionUpdate {
  SearchDistribution next;
  AscentDirection step;
};

inline DistributionUpdate update_distribution(const SearchDistribution& dist,
                                              const GradientEstimate& grads, Optimizer& optimizer,
                                              const PgpeConfig& config) {
  detail::require_finite(grads.grad_mean, "mean gradient");
  detail::require_finite(grads.grad_sigma, "sigma gradient");
  detail::require_same_size(grads.grad_mean.size(), dist.dimension(), "mean gradient");
  detail::require_same_size(grads.grad_sigma.size(), dist.dimension(), "sigma gradient");

  DistributionUpdate out{dist, optimizer.ascent(grads.grad_mean)};
  for (std::size_t j = 0; j < dist.dimension(); ++j) out.next.mean[j] += out.step.update[j];

  for (std::size_t j = 0; j < dist.dimension(); ++j) {
    const double limit = config.sigma_max_change * dist.stdev[j];
    const double change =
        std::clamp(config.sigma_learning_rate * grads.grad_sigma[j], -limit, limit);
    out.next.stdev[j] = std::max(dist.stdev[j] + change, kSigmaFloor);
  }
  return out;
}

// ---------------------------------------------------------------------------
// tuning heuristics

struct HeuristicInputs {
  double max_speed = 0.15;
  /// Radius as a multiple of the max speed; 10-20 works, 15 is the default.
  double radius_factor = 15.0;
  std::size_t dimension = 1;
};

struct Heuristics {
  double step_size;
  double radius;
  Vector sigma0;
};

/// step size = max_speed / 2, radius = q * max_speed, and an initial sigma
/// with equal components whose L2 norm is the radius.
inline Heuristics derive_heuristics(const HeuristicInputs& in) {
  require(in.max_speed > 0.0, "max speed must be positive");
  require(in.radius_factor > 0.0, "radius factor must be positive");
  require(in.dimension >= 1, "dimension must be at least 1");
  Heuristics h;
  h.step_size = in.max_speed / 2.0;
  h.radius = in.radius_factor * in.max_speed;
  h.sigma0 = Vector(in.dimension, h.radius / std::sqrt(static_cast<double>(in.dimension)));
  return h;
}

/// Uniform sigma vector with the given L2 norm.
inline Vector sigma_from_radius(double radius, std::size_t dimension) {
  require(radius > 0.0, "radius must be positive");
  require(dimension >= 1, "dimension must be at least 1");
  return Vector(dimension, radius / std::sqrt(static_cast<double>(dimension)));
}

// ---------------------------------------------------------------------------
// one full iteration

struct PgpeState {
  SearchDistribution dist;
  Optimizer optimizer;
  FmaxTracker fmax;
  std::int64_t iteration = 0;
};

struct IterationReport {
  std::int64_t iteration = 0;
  std::int64_t population_size = 0;
  std::int64_t timesteps = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  double shaped_best = 0.0;
  double shaped_mean = 0.0;
  double speed = 0.0;
  double sigma_norm = 0.0;
  bool clip_engaged = false;
};

/// Estimates gradients from an evaluated population and moves the state.
inline IterationReport apply_population(PgpeState& state, const PgpeConfig& config,
                                        const DirectionPopulation& pop) {
  pop.require_complete();
  const Vector raw = pop.all_fitnesses();
  state.fmax.observe(raw);
  const GradientEstimate grads =
      estimate_gradients(pop, state.dist, config.shaping, state.fmax);
  DistributionUpdate upd = update_distribution(state.dist, grads, state.optimizer, config);

  IterationReport report;
  report.iteration = state.iteration;
  report.population_size = static_cast<std::int64_t>(pop.solution_count());
  report.timesteps = pop.total_steps();
  report.best_fitness = *std::max_element(raw.begin(), raw.end());
  report.mean_fitness = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(raw.size());
  if (config.shaping == FitnessShaping::reward_norm) {
    report.shaped_best = report.best_fitness;
    report.shaped_mean = report.mean_fitness;
  } else {
    const ShapedFitness fit = shape_fitness(pop, config.shaping);
    Vector shaped(fit.plus);
    shaped.insert(shaped.end(), fit.minus.begin(), fit.minus.end());
    report.shaped_best = *std::max_element(shaped.begin(), shaped.end());
    report.shaped_mean = grads.baseline;
  }
  double sq = 0.0;
  for (std::size_t j = 0; j < state.dist.dimension(); ++j) {
    const double diff = upd.next.mean[j] - state.dist.mean[j];
    sq += diff * diff;
  }
  report.speed = std::sqrt(sq);
  report.sigma_norm = detail::l2_norm(upd.next.stdev);
  report.clip_engaged = upd.step.clipped;

  state.dist = std::move(upd.next);
  ++state.iteration;
  return report;
}

/// Sample -> evaluate -> shape -> estimate -> update. `evaluate_population`
/// receives the current distribution and the sampling engine and must return
/// a fully evaluated population (it owns sampling, so it may grow the
/// population adaptively).
template <typename PopulationEvaluator>
IterationReport pgpe_iteration(PgpeState& state, const PgpeConfig& config,
                               PopulationEvaluator&& evaluate_population, Engine& rng) {
  const DirectionPopulation pop = evaluate_population(std::as_const(state.dist), rng);
  return apply_population(state, config, pop);
}

/// Convenience form for a plain fitness function `double(std::span<const double>)`:
/// samples population_size / 2 pairs and evaluates them in order.
template <typename Fitness>
IterationReport pgpe_iteration_simple(PgpeState& state, const PgpeConfig& config,
                                      Fitness&& fitness, Engine& rng) {
  auto evaluate = [&](const SearchDistribution& dist, Engine& engine) {
    DirectionPopulation pop =
        sample_population(dist, static_cast<std::size_t>(config.population_size / 2), engine);
    for (std::size_t i = 0; i < pop.pair_count(); ++i) {
      const Vector plus = pop.solution(dist, i, true);
      const Vector minus = pop.solution(dist, i, false);
      pop.fitness_plus[i] = fitness(std::span<const double>(plus));
      pop.fitness_minus[i] = fitness(std::span<const double>(minus));
      pop.steps_plus[i] = 1;
      pop.steps_minus[i] = 1;
    }
    return pop;
  };
  return pgpe_iteration(state, config, evaluate, rng);
}

}  // namespace pgpe

#endif  // PGPE_PGPE_HPP
