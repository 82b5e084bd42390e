#ifndef PGPE_CHECKPOINT_HPP
#define PGPE_CHECKPOINT_HPP

// Self-describing JSON snapshot of a run: config echo, distribution,
// optimizer state, observation statistics, sampling engine and counters.
// Restoring a snapshot continues the run bit-for-bit.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "pgpe/config.hpp"
#include "pgpe/optimizers.hpp"
#include "pgpe/pgpe.hpp"
#include "pgpe/problems.hpp"
#include "pgpe/runner.hpp"

namespace pgpe {

inline constexpr const char* kCheckpointVersion = "pgpe-checkpoint/1";

class CheckpointVersionError : public Error {
 public:
  using Error::Error;
};

class CheckpointCorruptError : public Error {
 public:
  using Error::Error;
};

inline Json to_json(const Optimizer& optimizer) {
  using detail::number_to_json;
  return std::visit(
      [](const auto& o) -> Json {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, Optimizer::ClipUp> || std::is_same_v<T, Optimizer::NoClip>) {
          return {{"type", std::is_same_v<T, Optimizer::ClipUp> ? "clipup" : "noclip"},
                  {"step_size", o.config.step_size},
                  {"max_speed", number_to_json(o.config.max_speed)},
                  {"momentum", o.config.momentum},
                  {"velocity", o.state.velocity}};
        } else if constexpr (std::is_same_v<T, Optimizer::Adam>) {
          return {{"type", "adam"},
                  {"step_size", o.config.step_size},
                  {"beta1", o.config.beta1},
                  {"beta2", o.config.beta2},
                  {"epsilon", o.config.epsilon},
                  {"first_moment", o.state.first_moment},
                  {"second_moment", o.state.second_moment},
                  {"step_count", o.state.step_count}};
        } else {
          return {{"type", "plain"}, {"step_size", o.step_size}};
        }
      },
      optimizer.variant());
}

inline Optimizer optimizer_from_json(const Json& j) {
  using detail::json_to_number;
  const OptimizerKind kind = parse_optimizer_kind(j.at("type").get<std::string>());
  switch (kind) {
    case OptimizerKind::clipup:
    case OptimizerKind::noclip: {
      ClipUpConfig config{json_to_number(j.at("step_size")), json_to_number(j.at("max_speed")),
                          json_to_number(j.at("momentum"))};
      config.validate();
      ClipUpState state;
      state.velocity = j.at("velocity").get<Vector>();
      if (kind == OptimizerKind::clipup) return Optimizer(Optimizer::ClipUp{config, state});
      return Optimizer(Optimizer::NoClip{config, state});
    }
    case OptimizerKind::adam: {
      AdamConfig config{json_to_number(j.at("step_size")), json_to_number(j.at("beta1")),
                        json_to_number(j.at("beta2")), json_to_number(j.at("epsilon"))};
      config.validate();
      AdamState state;
      state.first_moment = j.at("first_moment").get<Vector>();
      state.second_moment = j.at("second_moment").get<Vector>();
      state.step_count = j.at("step_count").get<std::int64_t>();
      require(state.first_moment.size() == state.second_moment.size(),
              "Adam moment vectors differ in length");
      return Optimizer(Optimizer::Adam{config, state});
    }
    case OptimizerKind::plain:
      return Optimizer::plain(json_to_number(j.at("step_size")));
  }
  throw Error("unknown optimizer in checkpoint");
}

inline Json checkpoint_json(const Experiment& ex) {
  const PgpeState& s = ex.state();
  std::ostringstream engine;
  engine << ex.engine();
  const RunningStats& stats = ex.observation_stats();
  Json fmax = {{"observed", detail::number_to_json(s.fmax.observed())},
               {"known", s.fmax.known() ? detail::number_to_json(*s.fmax.known()) : Json(nullptr)}};
  return {{"version", kCheckpointVersion},
          {"config", to_json(ex.config())},
          {"iteration", s.iteration},
          {"timesteps_total", ex.timesteps_total()},
          {"distribution", {{"mean", s.dist.mean}, {"stdev", s.dist.stdev}}},
          {"optimizer", to_json(s.optimizer)},
          {"observation_stats",
           {{"count", stats.count()}, {"mean", stats.mean()}, {"m2", stats.m2()}}},
          {"fmax", fmax},
          {"rng", engine.str()}};
}

inline void save_checkpoint(const std::string& path, const Experiment& ex) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint '" + path + "'");
    out << checkpoint_json(ex).dump(1) << '\n';
    if (!out) throw Error("failed writing checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error("cannot move checkpoint into place at '" + path + "'");
}

/// Parses and version-checks a checkpoint file.
inline Json read_checkpoint_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointCorruptError("checkpoint '" + path + "' is corrupt: " + e.what());
  }
  if (!j.is_object() || !j.contains("version") || !j.at("version").is_string())
    throw CheckpointCorruptError("checkpoint '" + path + "' has no version tag");
  const auto version = j.at("version").get<std::string>();
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint '" + path + "' has version '" + version +
                                 "', expected '" + kCheckpointVersion + "'");
  return j;
}

/// Overwrites the run state of `ex` with the snapshot.
inline void restore_checkpoint(Experiment& ex, const Json& j) {
  try {
    PgpeState& s = ex.mutable_state();
    s.iteration = j.at("iteration").get<std::int64_t>();
    s.dist.mean = j.at("distribution").at("mean").get<Vector>();
    s.dist.stdev = j.at("distribution").at("stdev").get<Vector>();
    s.dist.validate();
    detail::require_same_size(s.dist.dimension(), ex.training_objective()->dimension(),
                              "checkpoint distribution");
    s.optimizer = optimizer_from_json(j.at("optimizer"));
    const Json& f = j.at("fmax");
    s.fmax = f.at("known").is_null() ? FmaxTracker() : FmaxTracker(detail::json_to_number(f.at("known")));
    s.fmax.set_observed(detail::json_to_number(f.at("observed")));

    const Json& st = j.at("observation_stats");
    ex.mutable_observation_stats() = RunningStats(
        st.at("count").get<std::int64_t>(), st.at("mean").get<Vector>(), st.at("m2").get<Vector>());
    ex.set_timesteps_total(j.at("timesteps_total").get<std::int64_t>());

    std::istringstream engine(j.at("rng").get<std::string>());
    engine >> ex.mutable_engine();
    if (engine.fail()) throw CheckpointCorruptError("checkpoint engine state is unreadable");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointCorruptError(std::string("checkpoint is missing or mistyped fields: ") + e.what());
  } catch (const CheckpointCorruptError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointCorruptError(std::string("checkpoint is inconsistent: ") + e.what());
  }
}

/// Rebuilds the experiment described by a checkpoint and restores its state.
inline Experiment load_checkpoint(const std::string& path, int workers = 1) {
  const Json j = read_checkpoint_json(path);
  ExperimentConfig config;
  try {
    config = config_from_json(j.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointCorruptError(std::string("checkpoint config is unreadable: ") + e.what());
  }
  Experiment ex = Experiment::from_config(config, workers);
  restore_checkpoint(ex, j);
  return ex;
}

// ---------------------------------------------------------------------------

/// Drives an experiment to its iteration budget, writing logs and
/// checkpoints per the output spec.
inline std::vector<IterationRecord> drive(Experiment& ex, const OutputSpec& out, bool append) {
  RecordLog log(out.csv, out.jsonl, append);
  return ex.run([&](const IterationRecord& r) {
    log.write(r);
    if (!out.checkpoint.empty() && out.checkpoint_every > 0 &&
        (r.iteration + 1) % out.checkpoint_every == 0)
      save_checkpoint(out.checkpoint, ex);
  });
}

/// One experiment per repetition (seeds seed, seed + 1, ...). Returns the
/// records of every repetition; logs and the final checkpoint go to the
/// configured paths (suffixed per repetition when there are several).
inline std::vector<std::vector<IterationRecord>> run_experiment(const ExperimentConfig& config,
                                                                int workers = 1) {
  config.validate();
  std::vector<std::vector<IterationRecord>> all;
  for (std::int64_t rep = 0; rep < config.repetitions; ++rep) {
    ExperimentConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(rep);
    c.repetitions = 1;
    c.output.csv = repetition_path(config.output.csv, rep, config.repetitions);
    c.output.jsonl = repetition_path(config.output.jsonl, rep, config.repetitions);
    c.output.checkpoint = repetition_path(config.output.checkpoint, rep, config.repetitions);
    Experiment ex = Experiment::from_config(c, workers);
    std::vector<IterationRecord> records;
    try {
      records = drive(ex, c.output, /*append=*/false);
    } catch (const Error& e) {
      throw Error("run aborted at iteration " + std::to_string(ex.state().iteration) + ": " + e.what());
    }
    if (!c.output.checkpoint.empty()) save_checkpoint(c.output.checkpoint, ex);
    all.push_back(std::move(records));
  }
  return all;
}

/// Continues a checkpointed run to `iterations` (defaults to the config's
/// budget), appending to its logs.
inline std::vector<IterationRecord> resume_experiment(const std::string& checkpoint_path,
                                                      std::int64_t iterations = 0, int workers = 1) {
  Experiment ex = load_checkpoint(checkpoint_path, workers);
  if (iterations > 0) ex.mutable_config().iterations = iterations;
  OutputSpec out = ex.config().output;
  if (out.checkpoint.empty()) out.checkpoint = checkpoint_path;
  std::vector<IterationRecord> records;
  try {
    records = drive(ex, out, /*append=*/true);
  } catch (const Error& e) {
    throw Error("run aborted at iteration " + std::to_string(ex.state().iteration) + ": " + e.what());
  }
  save_checkpoint(out.checkpoint, ex);
  return records;
}

}  // namespace pgpe

#endif  // PGPE_CHECKPOINT_HPP
