#ifndef PGPE_CONFIG_HPP
#define PGPE_CONFIG_HPP

// Experiment description, its JSON form, and resolution into the concrete
// objects a run needs (objective, initial distribution, optimizer).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "pgpe/common.hpp"
#include "pgpe/optimizers.hpp"
#include "pgpe/pgpe.hpp"
#include "pgpe/problems.hpp"

namespace pgpe {

using Json = nlohmann::json;

struct ProblemSpec {
  /// sphere | rastrigin | rosenbrock | point_reach
  std::string name = "sphere";
  /// Analytic benchmarks only.
  std::size_t dimension = 16;
  /// point_reach only: linear | mlp
  std::string policy = "linear";
  bool bias = true;
  std::size_t hidden = 64;
  PointReachConfig point_reach;
  /// Rescaling applied to training fitness (evaluation scores stay unscaled).
  ScaleMode scale = ScaleMode::identity;
};

struct PgpeSpec {
  std::int64_t lambda = 100;
  /// 0 means "same as lambda".
  std::int64_t lambda_max = 0;
  std::int64_t T = 0;
  double omega = 0.1;
  double sigma_max_change = 0.2;
  FitnessShaping ranking = FitnessShaping::centered_rank;
  bool obs_norm = false;
  /// Explicit radius ||sigma0||; mutually exclusive with `q`.
  std::optional<double> radius;
  /// Heuristic radius factor: radius = q * v_max (and alpha = v_max / 2 for
  /// ClipUp / NoClip).
  std::optional<double> q;
  /// Known maximum fitness for reward normalization.
  std::optional<double> f_max;
  /// Every component of the initial center.
  double x0 = 0.0;
};

struct OptimizerSpec {
  OptimizerKind type = OptimizerKind::clipup;
  std::optional<double> alpha;
  std::optional<double> v_max;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OutputSpec {
  std::string csv;
  std::string jsonl;
  std::string checkpoint;
  /// Write the checkpoint every this many iterations (0: only at the end).
  std::int64_t checkpoint_every = 0;
};

struct ExperimentConfig {
  ProblemSpec problem;
  PgpeSpec pgpe;
  OptimizerSpec optimizer;
  std::int64_t iterations = 100;
  std::uint64_t seed = 0;
  std::int64_t repetitions = 1;
  std::int64_t eval_episodes = 16;
  OutputSpec output;

  void validate() const {
    require(iterations >= 1, "iterations must be >= 1");
    require(repetitions >= 1, "repetitions must be >= 1");
    require(eval_episodes >= 1, "eval_episodes must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

/// Doubles that may be infinite are written as the strings "inf" / "-inf".
inline Json number_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? Json("inf") : Json("-inf");
  if (std::isnan(v)) return Json("nan");
  return Json(v);
}

inline double json_to_number(const Json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw Error("expected a number, got '" + s + "'");
  }
  if (!j.is_number()) throw Error("expected a number, got " + j.dump());
  return j.get<double>();
}

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& known,
                                const std::string& section) {
  if (!j.is_object()) throw Error("config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw Error("unknown config key '" + section + key + "'");
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_number(const Json& j, const char* key, double& out) {
  if (j.contains(key)) out = json_to_number(j.at(key));
}

inline void read_optional(const Json& j, const char* key, std::optional<double>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = json_to_number(j.at(key));
}

}  // namespace detail

inline Json to_json(const ExperimentConfig& c) {
  const auto opt = [](const std::optional<double>& v) {
    return v ? detail::number_to_json(*v) : Json(nullptr);
  };
  const auto& pr = c.problem.point_reach;
  Json problem = {{"name", c.problem.name},
                  {"dimension", c.problem.dimension},
                  {"policy", c.problem.policy},
                  {"bias", c.problem.bias},
                  {"hidden", c.problem.hidden},
                  {"start", {pr.start[0], pr.start[1]}},
                  {"target", {pr.target[0], pr.target[1]}},
                  {"start_jitter", pr.start_jitter},
                  {"dt", pr.dt},
                  {"max_steps", pr.max_steps},
                  {"success_radius", pr.success_radius},
                  {"success_bonus", pr.success_bonus},
                  {"scale", std::string(to_string(c.problem.scale))}};
  Json pgpe = {{"lambda", c.pgpe.lambda},
               {"lambda_max", c.pgpe.lambda_max},
               {"T", c.pgpe.T},
               {"omega", c.pgpe.omega},
               {"sigma_max_change", c.pgpe.sigma_max_change},
               {"ranking", std::string(to_string(c.pgpe.ranking))},
               {"obs_norm", c.pgpe.obs_norm},
               {"radius", opt(c.pgpe.radius)},
               {"q", opt(c.pgpe.q)},
               {"f_max", opt(c.pgpe.f_max)},
               {"x0", c.pgpe.x0}};
  Json optimizer = {{"type", std::string(to_string(c.optimizer.type))},
                    {"alpha", opt(c.optimizer.alpha)},
                    {"v_max", opt(c.optimizer.v_max)},
                    {"momentum", c.optimizer.momentum},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon}};
  Json output = {{"csv", c.output.csv},
                 {"jsonl", c.output.jsonl},
                 {"checkpoint", c.output.checkpoint},
                 {"checkpoint_every", c.output.checkpoint_every}};
  return {{"problem", problem},     {"pgpe", pgpe},
          {"optimizer", optimizer}, {"iterations", c.iterations},
          {"seed", c.seed},         {"repetitions", c.repetitions},
          {"eval_episodes", c.eval_episodes}, {"output", output}};
}

inline ExperimentConfig config_from_json(const Json& j) {
  using detail::read;
  using detail::read_number;
  using detail::read_optional;
  detail::reject_unknown_keys(j, {"problem", "pgpe", "optimizer", "iterations", "seed",
                                  "repetitions", "eval_episodes", "output"},
                              "");
  ExperimentConfig c;
  try {
    if (j.contains("problem")) {
      const Json& p = j.at("problem");
      detail::reject_unknown_keys(p, {"name", "dimension", "policy", "bias", "hidden", "start",
                                      "target", "start_jitter", "dt", "max_steps",
                                      "success_radius", "success_bonus", "scale"},
                                  "problem.");
      auto& pr = c.problem.point_reach;
      read(p, "name", c.problem.name);
      read(p, "dimension", c.problem.dimension);
      read(p, "policy", c.problem.policy);
      read(p, "bias", c.problem.bias);
      read(p, "hidden", c.problem.hidden);
      read(p, "start", pr.start);
      read(p, "target", pr.target);
      read_number(p, "start_jitter", pr.start_jitter);
      read_number(p, "dt", pr.dt);
      read(p, "max_steps", pr.max_steps);
      read_number(p, "success_radius", pr.success_radius);
      read_number(p, "success_bonus", pr.success_bonus);
      if (p.contains("scale")) c.problem.scale = parse_scale_mode(p.at("scale").get<std::string>());
    }
    if (j.contains("pgpe")) {
      const Json& p = j.at("pgpe");
      detail::reject_unknown_keys(p, {"lambda", "lambda_max", "T", "omega", "sigma_max_change",
                                      "ranking", "obs_norm", "radius", "q", "f_max", "x0"},
                                  "pgpe.");
      read(p, "lambda", c.pgpe.lambda);
      read(p, "lambda_max", c.pgpe.lambda_max);
      read(p, "T", c.pgpe.T);
      read_number(p, "omega", c.pgpe.omega);
      read_number(p, "sigma_max_change", c.pgpe.sigma_max_change);
      if (p.contains("ranking")) {
        const Json& r = p.at("ranking");
        c.pgpe.ranking = r.is_boolean()
                             ? (r.get<bool>() ? FitnessShaping::centered_rank : FitnessShaping::raw)
                             : parse_fitness_shaping(r.get<std::string>());
      }
      read(p, "obs_norm", c.pgpe.obs_norm);
      read_optional(p, "radius", c.pgpe.radius);
      read_optional(p, "q", c.pgpe.q);
      read_optional(p, "f_max", c.pgpe.f_max);
      read_number(p, "x0", c.pgpe.x0);
    }
    if (j.contains("optimizer")) {
      const Json& o = j.at("optimizer");
      detail::reject_unknown_keys(
          o, {"type", "alpha", "v_max", "momentum", "beta1", "beta2", "epsilon"}, "optimizer.");
      if (o.contains("type")) c.optimizer.type = parse_optimizer_kind(o.at("type").get<std::string>());
      read_optional(o, "alpha", c.optimizer.alpha);
      read_optional(o, "v_max", c.optimizer.v_max);
      read_number(o, "momentum", c.optimizer.momentum);
      read_number(o, "beta1", c.optimizer.beta1);
      read_number(o, "beta2", c.optimizer.beta2);
      read_number(o, "epsilon", c.optimizer.epsilon);
    }
    read(j, "iterations", c.iterations);
    read(j, "seed", c.seed);
    read(j, "repetitions", c.repetitions);
    read(j, "eval_episodes", c.eval_episodes);
    if (j.contains("output")) {
      const Json& o = j.at("output");
      detail::reject_unknown_keys(o, {"csv", "jsonl", "checkpoint", "checkpoint_every"}, "output.");
      read(o, "csv", c.output.csv);
      read(o, "jsonl", c.output.jsonl);
      read(o, "checkpoint", c.output.checkpoint);
      read(o, "checkpoint_every", c.output.checkpoint_every);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// resolution

/// Builds the untransformed objective named by the problem spec.
inline ObjectivePtr make_objective(const ProblemSpec& spec) {
  if (spec.name == "point_reach") {
    PolicyShape shape;
    if (spec.policy == "linear")
      shape = LinearShape{PointReachConfig::kObservationDim, PointReachConfig::kActionDim, spec.bias};
    else if (spec.policy == "mlp")
      shape = MlpShape{PointReachConfig::kObservationDim, spec.hidden, PointReachConfig::kActionDim};
    else
      throw Error("unknown policy '" + spec.policy + "'");
    return std::make_shared<PointReachObjective>(spec.point_reach, shape);
  }
  return std::make_shared<AnalyticObjective>(spec.name, spec.dimension);
}

/// Objective used for population fitness: the base objective, rescaled when
/// the spec asks for it.
inline ObjectivePtr make_training_objective(const ProblemSpec& spec, ObjectivePtr base) {
  if (spec.scale == ScaleMode::identity) return base;
  return scale_fitness_wrapper(std::move(base), spec.scale);
}

struct ResolvedRun {
  PgpeConfig pgpe;
  SearchDistribution initial;
  double step_size = 0.0;
  double radius = 0.0;
  double max_speed = std::numeric_limits<double>::infinity();
  Optimizer optimizer = Optimizer::plain(0.0);
  FmaxTracker fmax;
};

/// Turns the spec into concrete hyperparameters. Either the heuristic pair
/// (v_max, q) or the explicit pair (alpha, radius) must be given, not both.
inline ResolvedRun resolve(const ExperimentConfig& c, std::size_t dimension) {
  c.validate();
  const auto& o = c.optimizer;
  const bool momentum_rule = o.type == OptimizerKind::clipup || o.type == OptimizerKind::noclip;

  ResolvedRun r;
  if (c.pgpe.q) {
    require(!c.pgpe.radius, "give either pgpe.q (heuristic) or pgpe.radius, not both");
    require(o.v_max.has_value(), "the radius heuristic needs optimizer.v_max");
    const Heuristics h = derive_heuristics({*o.v_max, *c.pgpe.q, dimension});
    r.radius = h.radius;
    if (momentum_rule) {
      require(!o.alpha, "the heuristic sets alpha = v_max / 2; drop optimizer.alpha or pgpe.q");
      r.step_size = h.step_size;
    } else {
      require(o.alpha.has_value(), "optimizer.alpha is required for adam / plain");
      r.step_size = *o.alpha;
    }
  } else {
    require(c.pgpe.radius.has_value(), "pgpe.radius is required unless pgpe.q is given");
    require(o.alpha.has_value(), "optimizer.alpha is required unless pgpe.q is given");
    r.radius = *c.pgpe.radius;
    r.step_size = *o.alpha;
  }

  r.pgpe.population_size = c.pgpe.lambda;
  r.pgpe.max_population = c.pgpe.lambda_max == 0 ? c.pgpe.lambda : c.pgpe.lambda_max;
  r.pgpe.timestep_budget = c.pgpe.T;
  r.pgpe.sigma_learning_rate = c.pgpe.omega;
  r.pgpe.sigma_max_change = c.pgpe.sigma_max_change;
  r.pgpe.shaping = c.pgpe.ranking;
  r.pgpe.validate();

  r.initial.mean = Vector(dimension, c.pgpe.x0);
  r.initial.stdev = sigma_from_radius(r.radius, dimension);
  r.initial.validate();

  switch (o.type) {
    case OptimizerKind::clipup: {
      require(o.v_max.has_value(), "clipup needs optimizer.v_max");
      r.max_speed = *o.v_max;
      r.optimizer = Optimizer::clipup(dimension, {r.step_size, *o.v_max, o.momentum});
      break;
    }
    case OptimizerKind::noclip:
      r.optimizer = Optimizer::noclip(
          dimension, {r.step_size, std::numeric_limits<double>::infinity(), o.momentum});
      break;
    case OptimizerKind::adam:
      r.optimizer = Optimizer::adam(dimension, {r.step_size, o.beta1, o.beta2, o.epsilon});
      break;
    case OptimizerKind::plain:
      r.optimizer = Optimizer::plain(r.step_size);
      break;
  }
  r.fmax = c.pgpe.f_max ? FmaxTracker(*c.pgpe.f_max) : FmaxTracker();
  return r;
}

/// Rewrites a heuristic spec into the equivalent explicit (alpha, radius) one.
inline ExperimentConfig make_explicit(const ExperimentConfig& c, std::size_t dimension) {
  const ResolvedRun r = resolve(c, dimension);
  ExperimentConfig out = c;
  out.pgpe.q.reset();
  out.pgpe.radius = r.radius;
  out.optimizer.alpha = r.step_size;
  return out;
}

}  // namespace pgpe

#endif  // PGPE_CONFIG_HPP
