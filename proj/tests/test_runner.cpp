#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include "pgpe/checkpoint.hpp"
#include "pgpe/config.hpp"
#include "pgpe/presets.hpp"
#include "pgpe/runner.hpp"

using pgpe::Vector;

namespace {

// Sphere whose "episodes" take a configurable number of steps.
class SteppedSphere final : public pgpe::Objective {
 public:
  SteppedSphere(std::size_t dim, std::function<std::int64_t(std::uint64_t)> steps)
      : dim_(dim), steps_(std::move(steps)) {}
  std::size_t dimension() const override { return dim_; }
  pgpe::Evaluation evaluate(std::span<const double> x, std::uint64_t seed,
                            const pgpe::RunningStats*) const override {
    pgpe::Evaluation e;
    for (double v : x) e.fitness -= v * v;
    e.timesteps = steps_(seed);
    return e;
  }

 private:
  std::size_t dim_;
  std::function<std::int64_t(std::uint64_t)> steps_;
};

pgpe::EvaluatedPopulation evaluate_fixed(std::int64_t lambda, std::int64_t lambda_max, std::int64_t T,
                                         std::int64_t steps, int workers = 1) {
  SteppedSphere problem(3, [steps](std::uint64_t) { return steps; });
  pgpe::PgpeConfig cfg;
  cfg.population_size = lambda;
  cfg.max_population = lambda_max;
  cfg.timestep_budget = T;
  pgpe::Engine rng(5);
  return pgpe::adaptive_evaluate({Vector(3, 0.5), Vector(3, 0.1)}, problem, cfg, rng,
                                 {1, 0, nullptr, workers});
}

pgpe::ExperimentConfig sphere_config() {
  pgpe::ExperimentConfig c;
  c.problem.name = "sphere";
  c.problem.dimension = 8;
  c.pgpe.lambda = 20;
  c.pgpe.q = 15;
  c.pgpe.x0 = 0.5;
  c.optimizer.v_max = 0.05;
  c.iterations = 20;
  c.seed = 3;
  c.eval_episodes = 1;
  return c;
}

pgpe::ExperimentConfig point_reach_config() {
  pgpe::ExperimentConfig c;
  c.problem.name = "point_reach";
  c.problem.point_reach.start_jitter = 0.2;
  c.pgpe.lambda = 10;
  c.pgpe.lambda_max = 30;
  c.pgpe.T = 2500;
  c.pgpe.q = 15;
  c.pgpe.obs_norm = true;
  c.optimizer.v_max = 0.1;
  c.iterations = 20;
  c.seed = 11;
  c.eval_episodes = 4;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("pgpe_test_" + name)).string();
}

}  // namespace

// ---------------------------------------------------------------------------
// adaptive population

TEST(AdaptiveEvaluate, GrowsOnceWhenFirstBlockFallsShort) {
  const auto out = evaluate_fixed(100, 1000, 75000, 500);
  EXPECT_EQ(out.population.solution_count(), 200u);
  EXPECT_EQ(out.population.total_steps(), 100000);
}

TEST(AdaptiveEvaluate, ZeroBudgetDisablesGrowth) {
  const auto out = evaluate_fixed(100, 1000, 0, 1);
  EXPECT_EQ(out.population.solution_count(), 100u);
}

TEST(AdaptiveEvaluate, CapBindsBeforeBudget) {
  const auto out = evaluate_fixed(4, 12, 100, 1);
  EXPECT_EQ(out.population.solution_count(), 12u);
  EXPECT_EQ(out.population.total_steps(), 12);
}

TEST(AdaptiveEvaluate, BudgetWithoutRoomToGrowIsAllowed) {
  const auto out = evaluate_fixed(10, 10, 1000000, 3);
  EXPECT_EQ(out.population.solution_count(), 10u);
}

TEST(AdaptiveEvaluate, StopsOnlyAtBudgetOrCapUnderFuzz) {
  std::mt19937_64 meta(17);
  for (int trial = 0; trial < 300; ++trial) {
    std::uniform_int_distribution<int> half(1, 10), blocks(1, 8);
    const std::int64_t lambda = 2 * half(meta);
    const std::int64_t lambda_max = lambda * blocks(meta);
    const std::int64_t T = std::uniform_int_distribution<std::int64_t>(0, 5000)(meta);
    const std::int64_t max_len = std::uniform_int_distribution<std::int64_t>(1, 300)(meta);
    SteppedSphere problem(2, [max_len](std::uint64_t seed) {
      return 1 + static_cast<std::int64_t>(seed % static_cast<std::uint64_t>(max_len));
    });
    pgpe::PgpeConfig cfg;
    cfg.population_size = lambda;
    cfg.max_population = lambda_max;
    cfg.timestep_budget = T;
    pgpe::Engine rng(trial);
    const auto out = pgpe::adaptive_evaluate({Vector(2, 0.0), Vector(2, 1.0)}, problem, cfg, rng,
                                             {static_cast<std::uint64_t>(trial), trial, nullptr, 1});
    const auto n = static_cast<std::int64_t>(out.population.solution_count());
    ASSERT_EQ(n % lambda, 0);
    ASSERT_LE(n, lambda_max);
    ASSERT_TRUE(out.population.total_steps() >= T || n == lambda_max)
        << "lambda " << lambda << " max " << lambda_max << " T " << T;
    // no extra block once the budget is met
    if (n > lambda) {
      std::int64_t before = 0;
      for (std::size_t i = 0; i + lambda / 2 < out.population.pair_count(); ++i)
        before += out.population.steps_plus[i] + out.population.steps_minus[i];
      ASSERT_LT(before, T);
    }
  }
}

TEST(AdaptiveEvaluate, PropagatesObjectiveErrors) {
  SteppedSphere problem(2, [](std::uint64_t) -> std::int64_t { throw pgpe::Error("boom"); });
  pgpe::PgpeConfig cfg;
  cfg.population_size = 4;
  cfg.max_population = 4;
  pgpe::Engine rng(1);
  EXPECT_THROW(pgpe::adaptive_evaluate({Vector(2, 0.0), Vector(2, 1.0)}, problem, cfg, rng, {1, 0, nullptr, 2}),
               pgpe::Error);
}

TEST(AdaptiveEvaluate, WorkerCountDoesNotChangeResults) {
  const auto a = evaluate_fixed(16, 64, 40, 1, 1);
  const auto b = evaluate_fixed(16, 64, 40, 1, 8);
  EXPECT_EQ(a.population.deltas, b.population.deltas);
  EXPECT_EQ(a.population.fitness_plus, b.population.fitness_plus);
  EXPECT_EQ(a.population.fitness_minus, b.population.fitness_minus);
}

// ---------------------------------------------------------------------------
// experiments

TEST(Experiment, EqualSeedsGiveIdenticalRecords) {
  auto c = sphere_config();
  c.repetitions = 1;
  const auto a = pgpe::run_experiment(c)[0];
  const auto b = pgpe::run_experiment(c)[0];
  const auto d = pgpe::run_experiment(c)[0];
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, d);
}

TEST(Experiment, RepetitionsUseConsecutiveSeeds) {
  auto c = sphere_config();
  c.repetitions = 2;
  const auto runs = pgpe::run_experiment(c);
  ASSERT_EQ(runs.size(), 2u);
  auto second = c;
  second.seed = c.seed + 1;
  second.repetitions = 1;
  EXPECT_EQ(runs[1], pgpe::run_experiment(second)[0]);
  EXPECT_NE(runs[0], runs[1]);
}

TEST(Experiment, WorkerCountDoesNotChangeRecords) {
  const auto c = point_reach_config();
  const auto one = pgpe::run_experiment(c, 1)[0];
  EXPECT_EQ(one, pgpe::run_experiment(c, 2)[0]);
  EXPECT_EQ(one, pgpe::run_experiment(c, 8)[0]);
}

TEST(Experiment, SpeedTelemetryMatchesCenterMovement) {
  auto ex = pgpe::Experiment::from_config(sphere_config());
  for (int k = 0; k < 20; ++k) {
    const Vector before = ex.state().dist.mean;
    const auto rec = ex.step();
    double sq = 0.0;
    for (std::size_t j = 0; j < before.size(); ++j) {
      const double d = ex.state().dist.mean[j] - before[j];
      sq += d * d;
    }
    EXPECT_NEAR(rec.speed, std::sqrt(sq), 1e-12);
    EXPECT_LE(rec.speed, 0.05 + 1e-12);
    EXPECT_NEAR(rec.eval_score, -[&] {
      double s = 0.0;
      for (double v : ex.state().dist.mean) s += v * v;
      return s;
    }(), 1e-12);
  }
}

TEST(Experiment, TimestepsAccumulate) {
  const auto recs = pgpe::run_experiment(point_reach_config())[0];
  std::int64_t total = 0;
  for (const auto& r : recs) {
    total += r.timesteps_iteration;
    EXPECT_EQ(r.timesteps_total, total);
    EXPECT_EQ(r.population_size % 10, 0);
    EXPECT_LE(r.population_size, 30);
  }
}

TEST(Experiment, InfiniteSpeedLimitMatchesNoClip) {
  auto clip = sphere_config();
  clip.pgpe.q.reset();
  clip.pgpe.radius = 0.5;
  clip.optimizer.alpha = 0.05;
  clip.optimizer.v_max = std::numeric_limits<double>::infinity();
  auto noclip = clip;
  noclip.optimizer.type = pgpe::OptimizerKind::noclip;
  noclip.optimizer.v_max.reset();
  EXPECT_EQ(pgpe::run_experiment(clip)[0], pgpe::run_experiment(noclip)[0]);
}

TEST(Experiment, StepSizeAtSpeedLimitEngagesClipping) {
  auto c = sphere_config();
  c.pgpe.q.reset();
  c.pgpe.radius = 0.75;
  c.optimizer.alpha = 0.05;  // == v_max
  const auto records = pgpe::run_experiment(c)[0];
  bool engaged = false;
  for (const auto& r : records) engaged |= r.clip_engaged;
  EXPECT_TRUE(engaged);
}

TEST(Experiment, ScaledTrainingKeepsUnscaledEvaluation) {
  auto plain = sphere_config();
  auto scaled = plain;
  scaled.problem.scale = pgpe::ScaleMode::times_1000;
  const auto a = pgpe::run_experiment(plain)[0];
  const auto b = pgpe::run_experiment(scaled)[0];
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].eval_score, b[k].eval_score);
    EXPECT_DOUBLE_EQ(1000.0 * a[k].raw_best, b[k].raw_best);
  }
}

TEST(Experiment, AbortReportsIteration) {
  auto c = sphere_config();
  c.problem.name = "rosenbrock";
  c.pgpe.x0 = 1e200;
  try {
    pgpe::run_experiment(c);
    FAIL() << "expected an error";
  } catch (const pgpe::Error& e) {
    EXPECT_NE(std::string(e.what()).find("run aborted at iteration 0"), std::string::npos) << e.what();
  }
}

// ---------------------------------------------------------------------------
// checkpoints

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  auto c = point_reach_config();
  const auto full = pgpe::run_experiment(c)[0];

  const std::string path = temp_path("resume.json");
  c.iterations = 10;
  c.output.checkpoint = path;
  const auto first = pgpe::run_experiment(c)[0];
  const auto rest = pgpe::resume_experiment(path, 20);
  ASSERT_EQ(first.size(), 10u);
  ASSERT_EQ(rest.size(), 10u);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_EQ(first[k], full[k]);
    EXPECT_EQ(rest[k], full[10 + k]) << "iteration " << 10 + k;
  }
  std::remove(path.c_str());
}

TEST(Checkpoint, AdamStateSurvivesRoundTrip) {
  auto c = sphere_config();
  c.pgpe.q.reset();
  c.pgpe.radius = 0.5;
  c.optimizer.type = pgpe::OptimizerKind::adam;
  c.optimizer.alpha = 0.01;
  c.pgpe.ranking = pgpe::FitnessShaping::reward_norm;
  auto ex = pgpe::Experiment::from_config(c);
  for (int k = 0; k < 5; ++k) ex.step();
  const std::string path = temp_path("adam.json");
  pgpe::save_checkpoint(path, ex);
  auto back = pgpe::load_checkpoint(path);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(ex.step(), back.step());
  std::remove(path.c_str());
}

TEST(Checkpoint, WrongVersionIsAVersionError) {
  auto ex = pgpe::Experiment::from_config(sphere_config());
  auto j = pgpe::checkpoint_json(ex);
  j["version"] = "pgpe-checkpoint/0";
  const std::string path = temp_path("version.json");
  std::ofstream(path) << j.dump();
  EXPECT_THROW(pgpe::load_checkpoint(path), pgpe::CheckpointVersionError);
  std::remove(path.c_str());
}

TEST(Checkpoint, TruncatedFileIsACorruptionError) {
  auto ex = pgpe::Experiment::from_config(sphere_config());
  ex.step();
  const std::string path = temp_path("truncated.json");
  const std::string text = pgpe::checkpoint_json(ex).dump();
  std::ofstream(path) << text.substr(0, text.size() / 2);
  EXPECT_THROW(pgpe::load_checkpoint(path), pgpe::CheckpointCorruptError);
  try {
    pgpe::load_checkpoint(path);
  } catch (const pgpe::CheckpointVersionError&) {
    FAIL() << "truncation must not look like a version mismatch";
  } catch (const pgpe::CheckpointCorruptError&) {
  }
  std::remove(path.c_str());
}

TEST(Checkpoint, MissingFieldIsACorruptionError) {
  auto ex = pgpe::Experiment::from_config(sphere_config());
  auto j = pgpe::checkpoint_json(ex);
  j.erase("optimizer");
  const std::string path = temp_path("missing.json");
  std::ofstream(path) << j.dump();
  EXPECT_THROW(pgpe::load_checkpoint(path), pgpe::CheckpointCorruptError);
  std::remove(path.c_str());
}

// ---------------------------------------------------------------------------
// config

TEST(Config, ParsesHyperparameterKeys) {
  const auto c = pgpe::config_from_json(pgpe::Json::parse(R"({
    "problem": {"name": "rastrigin", "dimension": 4, "scale": "div_1000"},
    "pgpe": {"lambda": 10, "lambda_max": 40, "T": 1000, "omega": 0.2, "radius": 1.5,
             "ranking": false, "obs_norm": true},
    "optimizer": {"type": "adam", "alpha": 0.01, "beta1": 0.8, "beta2": 0.99, "epsilon": 1e-6},
    "iterations": 7, "seed": 42})"));
  EXPECT_EQ(c.problem.name, "rastrigin");
  EXPECT_EQ(c.problem.scale, pgpe::ScaleMode::div_1000);
  EXPECT_EQ(c.pgpe.lambda_max, 40);
  EXPECT_EQ(c.pgpe.ranking, pgpe::FitnessShaping::raw);
  EXPECT_TRUE(c.pgpe.obs_norm);
  EXPECT_EQ(c.optimizer.type, pgpe::OptimizerKind::adam);
  EXPECT_DOUBLE_EQ(c.optimizer.beta2, 0.99);
  EXPECT_EQ(c.seed, 42u);
}

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(pgpe::config_from_json(pgpe::Json::parse(R"({"pgpe": {"lamda": 10}})")), pgpe::Error);
  EXPECT_THROW(pgpe::config_from_json(pgpe::Json::parse(R"({"iters": 10})")), pgpe::Error);
}

TEST(Config, JsonRoundTripIncludingInfinity) {
  auto c = sphere_config();
  c.optimizer.v_max = std::numeric_limits<double>::infinity();
  const auto back = pgpe::config_from_json(pgpe::to_json(c));
  EXPECT_EQ(pgpe::to_json(back), pgpe::to_json(c));
  EXPECT_TRUE(std::isinf(*back.optimizer.v_max));
}

TEST(Config, HeuristicResolution) {
  auto c = sphere_config();
  c.optimizer.v_max = 0.15;
  const auto r = pgpe::resolve(c, 8);
  EXPECT_DOUBLE_EQ(r.step_size, 0.075);
  EXPECT_DOUBLE_EQ(r.radius, 2.25);
  EXPECT_NEAR(pgpe::detail::l2_norm(r.initial.stdev), 2.25, 1e-12);
  const auto e = pgpe::make_explicit(c, 8);
  EXPECT_FALSE(e.pgpe.q.has_value());
  EXPECT_DOUBLE_EQ(*e.optimizer.alpha, 0.075);
}

TEST(Config, ResolutionRejectsAmbiguousOrIncompleteSpecs) {
  auto both = sphere_config();
  both.pgpe.radius = 1.0;
  EXPECT_THROW(pgpe::resolve(both, 8), pgpe::Error);

  auto alpha_and_q = sphere_config();
  alpha_and_q.optimizer.alpha = 0.1;
  EXPECT_THROW(pgpe::resolve(alpha_and_q, 8), pgpe::Error);

  auto no_radius = sphere_config();
  no_radius.pgpe.q.reset();
  no_radius.optimizer.alpha = 0.1;
  EXPECT_THROW(pgpe::resolve(no_radius, 8), pgpe::Error);

  auto adam = sphere_config();
  adam.optimizer.type = pgpe::OptimizerKind::adam;
  EXPECT_THROW(pgpe::resolve(adam, 8), pgpe::Error);

  auto odd = sphere_config();
  odd.pgpe.lambda = 21;
  EXPECT_THROW(pgpe::resolve(odd, 8), pgpe::Error);

  auto ragged = sphere_config();
  ragged.pgpe.lambda_max = 30;
  EXPECT_THROW(pgpe::resolve(ragged, 8), pgpe::Error);
}

TEST(Config, LoadsShippedConfigs) {
  for (const char* name : {"sphere.json", "point_reach.json", "sphere_adam.json"}) {
    const std::string path = std::string(PGPE_CONFIG_DIR) + "/" + name;
    SCOPED_TRACE(path);
    const auto c = pgpe::load_config(path);
    EXPECT_NO_THROW(pgpe::Experiment::from_config(c));
  }
}

// ---------------------------------------------------------------------------
// logs, sweeps, presets

TEST(Logs, RepetitionPath) {
  EXPECT_EQ(pgpe::repetition_path("out/run.csv", 2, 3), "out/run_rep2.csv");
  EXPECT_EQ(pgpe::repetition_path("out.d/run", 0, 3), "out.d/run_rep0");
  EXPECT_EQ(pgpe::repetition_path("run.csv", 0, 1), "run.csv");
  EXPECT_EQ(pgpe::repetition_path("", 0, 3), "");
}

TEST(Logs, CsvRoundTrip) {
  auto c = sphere_config();
  const std::string csv = temp_path("log.csv");
  const std::string jsonl = temp_path("log.jsonl");
  c.output.csv = csv;
  c.output.jsonl = jsonl;
  const auto recs = pgpe::run_experiment(c)[0];
  const auto back = pgpe::read_run_csv(csv);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t k = 0; k < recs.size(); ++k) {
    EXPECT_EQ(back[k].iteration, recs[k].iteration);
    EXPECT_EQ(back[k].population_size, recs[k].population_size);
    EXPECT_NEAR(back[k].eval_score, recs[k].eval_score, 1e-9 * std::abs(recs[k].eval_score) + 1e-300);
    EXPECT_EQ(back[k].clip_engaged, recs[k].clip_engaged);
  }
  std::ifstream in(jsonl);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = pgpe::Json::parse(line);
    EXPECT_EQ(j.at("eval_score").get<double>(), recs[n].eval_score);
    ++n;
  }
  EXPECT_EQ(n, recs.size());
  const auto report = pgpe::report_run(csv, back);
  EXPECT_EQ(report.iterations, 20);
  EXPECT_LE(report.max_speed, 0.05 + 1e-9);
  std::remove(csv.c_str());
  std::remove(jsonl.c_str());
}

TEST(Logs, RejectsForeignCsv) {
  const std::string path = temp_path("foreign.csv");
  std::ofstream(path) << "a,b,c\n1,2,3\n";
  EXPECT_THROW(pgpe::read_run_csv(path), pgpe::Error);
  std::remove(path.c_str());
}

TEST(Sweep, ParsesAxesAndSetsKeys) {
  const auto axis = pgpe::parse_grid_axis("optimizer.alpha=0.1,0.2");
  EXPECT_EQ(axis.key, "optimizer.alpha");
  ASSERT_EQ(axis.values.size(), 2u);
  EXPECT_DOUBLE_EQ(axis.values[1].get<double>(), 0.2);
  EXPECT_EQ(pgpe::parse_grid_axis("type=clipup,adam").values[1], "adam");
  EXPECT_THROW(pgpe::parse_grid_axis("alpha"), pgpe::Error);
  EXPECT_THROW(pgpe::parse_grid_axis("alpha="), pgpe::Error);

  pgpe::Json j = pgpe::to_json(sphere_config());
  pgpe::set_config_key(j, "v_max", 0.2);
  pgpe::set_config_key(j, "lambda", 40);
  pgpe::set_config_key(j, "seed", 9);
  EXPECT_EQ(j["optimizer"]["v_max"], 0.2);
  EXPECT_EQ(j["pgpe"]["lambda"], 40);
  EXPECT_EQ(j["seed"], 9);
  EXPECT_THROW(pgpe::set_config_key(j, "warp_factor", 9), pgpe::Error);
}

TEST(Sweep, CartesianProduct) {
  auto c = sphere_config();
  c.iterations = 3;
  c.repetitions = 2;
  const auto rows = pgpe::run_sweep(c, {pgpe::parse_grid_axis("v_max=0.05,0.1"),
                                        pgpe::parse_grid_axis("lambda=10,20,40")});
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows) EXPECT_EQ(r.final_score.n, 2u);
  const std::string csv = pgpe::sweep_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "v_max,lambda,n,final_mean,final_stdev,final_min,final_max,best_mean");
}

TEST(Presets, ScaleTableLayout) {
  auto c = sphere_config();
  c.iterations = 5;
  c.repetitions = 2;
  const auto t = pgpe::preset_scale_sensitivity(c, {0.01, 0.02});
  ASSERT_EQ(t.rows.size(), 4u);
  ASSERT_EQ(t.columns.size(), 3u);
  EXPECT_EQ(t.rows[0], "Fitness ranking");
  EXPECT_EQ(t.columns[0], "ClipUp");
  for (std::size_t col = 0; col < t.columns.size(); ++col) EXPECT_DOUBLE_EQ(t.percent[0][col], 100.0);
  EXPECT_FALSE(pgpe::render(t).empty());
  EXPECT_FALSE(pgpe::to_csv(t).empty());
}

TEST(Presets, ClipVersusNoClip) {
  auto c = sphere_config();
  c.iterations = 10;
  c.repetitions = 2;
  const auto t = pgpe::preset_clip_vs_noclip(c, {0.025, 0.05}, {20}, -0.5);
  ASSERT_EQ(t.cells.size(), 4u);
  for (const auto& cell : t.cells) {
    EXPECT_EQ(cell.mean_curve.size(), 10u);
    if (cell.optimizer == "clipup") {
      EXPECT_LE(cell.max_speed, 0.05 + 1e-12);
    }
  }
  EXPECT_FALSE(pgpe::curves_csv(t).empty());
}

TEST(Presets, SummaryStatistics) {
  const auto s = pgpe::summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.median, 2.5);
  EXPECT_NEAR(s.stdev, std::sqrt(5.0 / 3.0), 1e-12);
  EXPECT_DOUBLE_EQ(s.min, 1.0);
  EXPECT_DOUBLE_EQ(s.max, 4.0);
}
