#ifndef PGPE_RUNNER_HPP
#define PGPE_RUNNER_HPP

// Experiment orchestration: adaptive population growth, parallel and
// schedule-independent evaluation, the iteration loop, per-iteration
// telemetry, and CSV / JSONL logging.

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgpe/common.hpp"
#include "pgpe/config.hpp"
#include "pgpe/optimizers.hpp"
#include "pgpe/pgpe.hpp"
#include "pgpe/problems.hpp"

namespace pgpe {

/// Worker count from PGPE_WORKERS, defaulting to 1.
inline int workers_from_env() {
  const char* raw = std::getenv("PGPE_WORKERS");
  if (!raw || !*raw) return 1;
  char* end = nullptr;
  const long n = std::strtol(raw, &end, 10);
  if (*end != '\0' || n < 1) throw Error("PGPE_WORKERS must be a positive integer");
  return static_cast<int>(n);
}

/// Runs task(i) for i in [0, count) on `workers` threads and waits for all of
/// them. Tasks must write to disjoint slots. The first exception (by index)
/// is rethrown after the barrier.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& task) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> threads;
  threads.reserve(n_threads);
  for (std::size_t w = 0; w < n_threads; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += n_threads) {
        try {
          task(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// adaptive evaluation

inline constexpr std::uint64_t kEvalSeedTag = 0x45564151554C5459ULL;

/// Where an evaluation sits in the run; seeds derive from it alone.
struct EvaluationContext {
  std::uint64_t run_seed = 0;
  std::int64_t iteration = 0;
  /// Frozen observation statistics for this iteration (nullptr: none).
  const RunningStats* normalizer = nullptr;
  int workers = 1;
};

struct EvaluatedPopulation {
  DirectionPopulation population;
  /// Observations of every rollout, merged in pair order.
  RunningStats observations;
};

inline std::uint64_t solution_seed(const EvaluationContext& ctx, std::size_t pair, bool plus) {
  return derive_seed(ctx.run_seed, ctx.iteration, pair, plus ? 1 : 0);
}

/// Evaluates lambda solutions, then keeps adding blocks of lambda solutions
/// while the iteration's total timesteps stay below T and another block still
/// fits under lambda_max.
inline EvaluatedPopulation adaptive_evaluate(const SearchDistribution& dist, const Objective& problem,
                                             const PgpeConfig& cfg, Engine& rng,
                                             const EvaluationContext& ctx) {
  cfg.validate();
  detail::require_same_size(dist.dimension(), problem.dimension(), "objective");
  const auto block_pairs = static_cast<std::size_t>(cfg.population_size / 2);

  EvaluatedPopulation out;
  out.observations = RunningStats(problem.observation_dimension());
  std::vector<RunningStats> observed;
  std::int64_t total_steps = 0;

  auto evaluate_block = [&](std::size_t first_pair) {
    DirectionPopulation& pop = out.population;
    const std::size_t n_solutions = 2 * (pop.pair_count() - first_pair);
    observed.resize(2 * pop.pair_count());
    parallel_for(n_solutions, ctx.workers, [&](std::size_t k) {
      const std::size_t pair = first_pair + k / 2;
      const bool plus = (k % 2) == 0;
      const Vector x = pop.solution(dist, pair, plus);
      Evaluation e = problem.evaluate(x, solution_seed(ctx, pair, plus), ctx.normalizer);
      if (!std::isfinite(e.fitness))
        throw Error("non-finite fitness for pair " + std::to_string(pair));
      if (e.timesteps < 1) throw Error("objective reported fewer than one timestep");
      (plus ? pop.fitness_plus : pop.fitness_minus)[pair] = e.fitness;
      (plus ? pop.steps_plus : pop.steps_minus)[pair] = e.timesteps;
      observed[2 * pair + (plus ? 0 : 1)] = std::move(e.observations);
    });
    for (std::size_t i = first_pair; i < pop.pair_count(); ++i)
      total_steps += pop.steps_plus[i] + pop.steps_minus[i];
  };

  append_pairs(out.population, dist, block_pairs, rng);
  evaluate_block(0);
  while (cfg.timestep_budget > 0 && total_steps < cfg.timestep_budget &&
         static_cast<std::int64_t>(out.population.solution_count()) + cfg.population_size <=
             cfg.max_population) {
    const std::size_t first = out.population.pair_count();
    append_pairs(out.population, dist, block_pairs, rng);
    evaluate_block(first);
  }

  if (problem.observation_dimension() > 0)
    for (const RunningStats& s : observed)
      if (s.dimension() == out.observations.dimension()) out.observations.merge(s);
  return out;
}

// ---------------------------------------------------------------------------
// records and logging

struct IterationRecord {
  std::int64_t iteration = 0;
  std::int64_t population_size = 0;
  std::int64_t timesteps_total = 0;
  std::int64_t timesteps_iteration = 0;
  double raw_best = 0.0;
  double raw_mean = 0.0;
  double shaped_best = 0.0;
  double shaped_mean = 0.0;
  /// Mean return of the distribution center over eval_episodes episodes.
  double eval_score = 0.0;
  /// Fraction of evaluation episodes that reached the goal.
  double eval_solved = 0.0;
  /// ||x_{k+1} - x_k||
  double speed = 0.0;
  double sigma_norm = 0.0;
  bool clip_engaged = false;

  bool operator==(const IterationRecord&) const = default;
};

inline constexpr const char* kCsvHeader =
    "k,lambda,timesteps_total,raw_best,raw_mean,eval_score,speed,sigma_norm,clip_engaged";

inline void write_csv_row(std::ostream& out, const IterationRecord& r) {
  out << std::setprecision(10) << r.iteration << ',' << r.population_size << ','
      << r.timesteps_total << ',' << r.raw_best << ',' << r.raw_mean << ',' << r.eval_score << ','
      << r.speed << ',' << r.sigma_norm << ',' << (r.clip_engaged ? 1 : 0) << '\n';
}

inline Json to_json(const IterationRecord& r) {
  return {{"k", r.iteration},
          {"lambda", r.population_size},
          {"timesteps_total", r.timesteps_total},
          {"timesteps_iteration", r.timesteps_iteration},
          {"raw_best", r.raw_best},
          {"raw_mean", r.raw_mean},
          {"shaped_best", r.shaped_best},
          {"shaped_mean", r.shaped_mean},
          {"eval_score", r.eval_score},
          {"eval_solved", r.eval_solved},
          {"speed", r.speed},
          {"sigma_norm", r.sigma_norm},
          {"clip_engaged", r.clip_engaged}};
}

/// Appends records to the CSV and JSONL files named in the output spec.
class RecordLog {
 public:
  RecordLog() = default;
  RecordLog(const std::string& csv_path, const std::string& jsonl_path, bool append) {
    const auto mode = append ? std::ios::app : std::ios::trunc;
    if (!csv_path.empty()) {
      const bool fresh = !append || !std::ifstream(csv_path).good();
      csv_.open(csv_path, std::ios::out | mode);
      if (!csv_) throw Error("cannot open '" + csv_path + "' for writing");
      if (fresh) csv_ << kCsvHeader << '\n';
    }
    if (!jsonl_path.empty()) {
      jsonl_.open(jsonl_path, std::ios::out | mode);
      if (!jsonl_) throw Error("cannot open '" + jsonl_path + "' for writing");
    }
  }

  void write(const IterationRecord& r) {
    if (csv_.is_open()) {
      write_csv_row(csv_, r);
      csv_.flush();
    }
    if (jsonl_.is_open()) jsonl_ << to_json(r).dump() << '\n' << std::flush;
  }

 private:
  std::ofstream csv_;
  std::ofstream jsonl_;
};

// ---------------------------------------------------------------------------
// experiment

/// One run of PGPE on one objective. Fitness comes from the training
/// objective; the per-iteration evaluation score from the evaluation
/// objective (normally the same task without fitness rescaling).
class Experiment {
 public:
  Experiment(ExperimentConfig config, ObjectivePtr training, ObjectivePtr evaluation,
             int workers = 1)
      : config_(std::move(config)),
        training_(std::move(training)),
        evaluation_(std::move(evaluation)),
        workers_(workers),
        resolved_(resolve(config_, training_->dimension())),
        state_{resolved_.initial, resolved_.optimizer, resolved_.fmax, 0},
        obs_stats_(training_->observation_dimension()),
        rng_(derive_seed(config_.seed, 0x53414D504C45ULL)) {
    detail::require_same_size(training_->dimension(), evaluation_->dimension(), "objectives");
    require(workers_ >= 1, "worker count must be >= 1");
  }

  /// Objectives built from the config's problem spec.
  static Experiment from_config(const ExperimentConfig& config, int workers = 1) {
    ObjectivePtr base = make_objective(config.problem);
    return Experiment(config, make_training_objective(config.problem, base), base, workers);
  }

  IterationRecord step() {
    const bool normalize = config_.pgpe.obs_norm && training_->observation_dimension() > 0;
    const RunningStats frozen = obs_stats_;
    EvaluationContext ctx{config_.seed, state_.iteration, normalize ? &frozen : nullptr, workers_};

    EvaluatedPopulation evaluated;
    auto evaluate = [&](const SearchDistribution& dist, Engine& rng) {
      evaluated = adaptive_evaluate(dist, *training_, resolved_.pgpe, rng, ctx);
      return evaluated.population;
    };
    const IterationReport report = pgpe_iteration(state_, resolved_.pgpe, evaluate, rng_);
    if (normalize) obs_stats_.merge(evaluated.observations);
    timesteps_total_ += report.timesteps;

    IterationRecord rec;
    rec.iteration = report.iteration;
    rec.population_size = report.population_size;
    rec.timesteps_total = timesteps_total_;
    rec.timesteps_iteration = report.timesteps;
    rec.raw_best = report.best_fitness;
    rec.raw_mean = report.mean_fitness;
    rec.shaped_best = report.shaped_best;
    rec.shaped_mean = report.shaped_mean;
    rec.speed = report.speed;
    rec.sigma_norm = report.sigma_norm;
    rec.clip_engaged = report.clip_engaged;
    evaluate_center(rec, normalize ? &obs_stats_ : nullptr);
    return rec;
  }

  /// Runs until `config().iterations` iterations have been completed.
  std::vector<IterationRecord> run(const std::function<void(const IterationRecord&)>& on_record = {}) {
    std::vector<IterationRecord> records;
    while (state_.iteration < config_.iterations) {
      records.push_back(step());
      if (on_record) on_record(records.back());
    }
    return records;
  }

  const ExperimentConfig& config() const { return config_; }
  ExperimentConfig& mutable_config() { return config_; }
  const ResolvedRun& resolved() const { return resolved_; }
  const PgpeState& state() const { return state_; }
  PgpeState& mutable_state() { return state_; }
  const RunningStats& observation_stats() const { return obs_stats_; }
  RunningStats& mutable_observation_stats() { return obs_stats_; }
  const Engine& engine() const { return rng_; }
  Engine& mutable_engine() { return rng_; }
  std::int64_t timesteps_total() const { return timesteps_total_; }
  void set_timesteps_total(std::int64_t t) { timesteps_total_ = t; }
  const ObjectivePtr& training_objective() const { return training_; }
  const ObjectivePtr& evaluation_objective() const { return evaluation_; }

 private:
  void evaluate_center(IterationRecord& rec, const RunningStats* normalizer) const {
    const auto episodes = static_cast<std::size_t>(config_.eval_episodes);
    std::vector<Evaluation> results(episodes);
    const Vector& center = state_.dist.mean;
    const std::int64_t k = rec.iteration;
    parallel_for(episodes, workers_, [&](std::size_t e) {
      results[e] = evaluation_->evaluate(center, derive_seed(config_.seed, k, kEvalSeedTag, e),
                                         normalizer);
    });
    double total = 0.0;
    std::size_t solved = 0;
    for (const Evaluation& e : results) {
      total += e.fitness;
      solved += e.solved ? 1 : 0;
    }
    rec.eval_score = total / static_cast<double>(episodes);
    rec.eval_solved = static_cast<double>(solved) / static_cast<double>(episodes);
  }

  ExperimentConfig config_;
  ObjectivePtr training_;
  ObjectivePtr evaluation_;
  int workers_;
  ResolvedRun resolved_;
  PgpeState state_;
  RunningStats obs_stats_;
  Engine rng_;
  std::int64_t timesteps_total_ = 0;
};

/// Log path for repetition `rep`: "<stem>_rep<r><ext>" when there is more
/// than one repetition.
inline std::string repetition_path(const std::string& path, std::int64_t rep, std::int64_t reps) {
  if (path.empty() || reps <= 1) return path;
  const auto dot = path.find_last_of('.');
  const auto slash = path.find_last_of('/');
  const std::string suffix = "_rep" + std::to_string(rep);
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + suffix;
  return path.substr(0, dot) + suffix + path.substr(dot);
}

}  // namespace pgpe

#endif  // PGPE_RUNNER_HPP
