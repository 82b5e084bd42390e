#ifndef PGPE_PRESETS_HPP
#define PGPE_PRESETS_HPP

// Batteries of matched-seed runs: the fitness-scale sensitivity table, the
// ClipUp vs NoClip comparison, generic hyperparameter grids, and summaries
// of logged CSV runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgpe/checkpoint.hpp"
#include "pgpe/config.hpp"
#include "pgpe/runner.hpp"

namespace pgpe {

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
};

inline Summary summarize(std::vector<double> values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stdev = s.n > 1 ? std::sqrt(sq / static_cast<double>(s.n - 1)) : 0.0;
  std::sort(values.begin(), values.end());
  s.min = values.front();
  s.max = values.back();
  s.median = s.n % 2 ? values[s.n / 2] : 0.5 * (values[s.n / 2 - 1] + values[s.n / 2]);
  return s;
}

/// Records of one run per seed (base.seed, base.seed + 1, ...), no logging.
inline std::vector<std::vector<IterationRecord>> run_seeds(const ExperimentConfig& base,
                                                           std::int64_t seeds, int workers) {
  std::vector<std::vector<IterationRecord>> runs;
  for (std::int64_t i = 0; i < seeds; ++i) {
    ExperimentConfig c = base;
    c.seed = base.seed + static_cast<std::uint64_t>(i);
    c.repetitions = 1;
    c.output = {};
    Experiment ex = Experiment::from_config(c, workers);
    runs.push_back(ex.run());
  }
  return runs;
}

// ---------------------------------------------------------------------------
// fitness-scale sensitivity

struct ScaleTable {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  /// cells[row][column]: final evaluation score over seeds.
  std::vector<std::vector<Summary>> cells;
  /// Cell mean as a percentage of the same column's ranking-row mean.
  std::vector<std::vector<double>> percent;
};

/// Runs every (fitness scale x optimizer) cell with matched seeds. Rows:
/// centered ranking, raw, raw x 1000, raw / 1000. Columns: ClipUp with the
/// base config's hyperparameters, then Adam at each step size in
/// `adam_step_sizes` (same radius as ClipUp).
inline ScaleTable preset_scale_sensitivity(const ExperimentConfig& base,
                                           const std::vector<double>& adam_step_sizes,
                                           int workers = 1) {
  const std::size_t dim = make_objective(base.problem)->dimension();
  ExperimentConfig clip = base;
  clip.optimizer.type = OptimizerKind::clipup;
  clip = make_explicit(clip, dim);

  std::vector<std::pair<std::string, ExperimentConfig>> columns{{"ClipUp", clip}};
  for (double a : adam_step_sizes) {
    ExperimentConfig adam = clip;
    adam.optimizer.type = OptimizerKind::adam;
    adam.optimizer.alpha = a;
    std::ostringstream name;
    name << "Adam (alpha=" << a << ")";
    columns.emplace_back(name.str(), adam);
  }

  struct Row {
    std::string name;
    FitnessShaping shaping;
    ScaleMode scale;
  };
  const std::vector<Row> rows{{"Fitness ranking", FitnessShaping::centered_rank, ScaleMode::identity},
                              {"Raw rewards", FitnessShaping::raw, ScaleMode::identity},
                              {"Rewards x 1000", FitnessShaping::raw, ScaleMode::times_1000},
                              {"Rewards / 1000", FitnessShaping::raw, ScaleMode::div_1000}};

  ScaleTable table;
  for (const auto& r : rows) table.rows.push_back(r.name);
  for (const auto& c : columns) table.columns.push_back(c.first);
  table.cells.assign(rows.size(), std::vector<Summary>(columns.size()));
  table.percent.assign(rows.size(), std::vector<double>(columns.size(), 0.0));

  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    for (std::size_t ci = 0; ci < columns.size(); ++ci) {
      ExperimentConfig c = columns[ci].second;
      c.pgpe.ranking = rows[ri].shaping;
      c.problem.scale = rows[ri].scale;
      std::vector<double> finals;
      for (const auto& run : run_seeds(c, base.repetitions, workers)) finals.push_back(run.back().eval_score);
      table.cells[ri][ci] = summarize(finals);
    }
  }
  for (std::size_t ri = 0; ri < rows.size(); ++ri)
    for (std::size_t ci = 0; ci < columns.size(); ++ci)
      table.percent[ri][ci] = 100.0 * table.cells[ri][ci].mean / table.cells[0][ci].mean;
  return table;
}

inline std::string render(const ScaleTable& t) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << std::left << std::setw(18) << "";
  for (const auto& c : t.columns) out << " | " << std::setw(22) << c;
  out << '\n';
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out << std::setw(18) << t.rows[r];
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      std::ostringstream cell;
      cell << std::setprecision(4) << t.cells[r][c].mean << " (" << std::fixed
           << std::setprecision(2) << t.percent[r][c] << "%)";
      out << " | " << std::setw(22) << cell.str();
    }
    out << '\n';
  }
  return out.str();
}

inline std::string to_csv(const ScaleTable& t) {
  std::ostringstream out;
  out << std::setprecision(10) << "row,column,n,mean,stdev,min,max,percent_of_ranking\n";
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      const Summary& s = t.cells[r][c];
      out << '"' << t.rows[r] << "\",\"" << t.columns[c] << "\"," << s.n << ',' << s.mean << ','
          << s.stdev << ',' << s.min << ',' << s.max << ',' << t.percent[r][c] << '\n';
    }
  return out.str();
}

// ---------------------------------------------------------------------------
// ClipUp vs NoClip

struct ClipComparisonCell {
  std::string optimizer;
  double step_size = 0.0;
  std::int64_t population_size = 0;
  Summary final_score;
  double solved_fraction = 0.0;
  /// Largest speed observed in any run.
  double max_speed = 0.0;
  /// Per-iteration statistics across seeds.
  std::vector<double> mean_curve;
  std::vector<double> median_curve;
  std::vector<double> mean_speed;
};

struct ClipComparison {
  double max_speed = 0.0;
  double solve_threshold = 0.0;
  std::vector<ClipComparisonCell> cells;
};

/// Matched-seed battery over {ClipUp, NoClip} x step sizes x population
/// sizes. A run counts as solved when its final evaluation score reaches
/// `solve_threshold`. The base config must name v_max (the ClipUp limit).
inline ClipComparison preset_clip_vs_noclip(const ExperimentConfig& base,
                                            const std::vector<double>& step_sizes,
                                            const std::vector<std::int64_t>& population_sizes,
                                            double solve_threshold, int workers = 1) {
  require(base.optimizer.v_max.has_value(), "the comparison needs optimizer.v_max");
  const std::size_t dim = make_objective(base.problem)->dimension();
  ExperimentConfig ref = base;
  ref.optimizer.type = OptimizerKind::clipup;
  ref = make_explicit(ref, dim);

  ClipComparison out;
  out.max_speed = *base.optimizer.v_max;
  out.solve_threshold = solve_threshold;
  for (OptimizerKind kind : {OptimizerKind::clipup, OptimizerKind::noclip}) {
    for (double alpha : step_sizes) {
      for (std::int64_t lambda : population_sizes) {
        ExperimentConfig c = ref;
        c.optimizer.type = kind;
        c.optimizer.alpha = alpha;
        c.pgpe.lambda = lambda;
        if (c.pgpe.lambda_max != 0) c.pgpe.lambda_max = std::max(c.pgpe.lambda_max, lambda);
        if (c.pgpe.lambda_max % lambda != 0) c.pgpe.lambda_max = lambda;
        const auto runs = run_seeds(c, base.repetitions, workers);

        ClipComparisonCell cell;
        cell.optimizer = std::string(to_string(kind));
        cell.step_size = alpha;
        cell.population_size = lambda;
        std::vector<double> finals;
        std::size_t solved = 0;
        for (const auto& run : runs) {
          finals.push_back(run.back().eval_score);
          solved += run.back().eval_score >= solve_threshold ? 1 : 0;
          for (const auto& r : run) cell.max_speed = std::max(cell.max_speed, r.speed);
        }
        cell.final_score = summarize(finals);
        cell.solved_fraction = static_cast<double>(solved) / static_cast<double>(runs.size());
        for (std::size_t k = 0; k < runs.front().size(); ++k) {
          std::vector<double> scores, speeds;
          for (const auto& run : runs) {
            scores.push_back(run[k].eval_score);
            speeds.push_back(run[k].speed);
          }
          const Summary s = summarize(scores);
          cell.mean_curve.push_back(s.mean);
          cell.median_curve.push_back(s.median);
          cell.mean_speed.push_back(summarize(speeds).mean);
        }
        out.cells.push_back(std::move(cell));
      }
    }
  }
  return out;
}

inline std::string render(const ClipComparison& t) {
  std::ostringstream out;
  out << "v_max = " << t.max_speed << ", solve threshold = " << t.solve_threshold << '\n';
  out << std::left << std::setw(8) << "opt" << std::setw(10) << "alpha" << std::setw(8) << "lambda"
      << std::setw(26) << "final (mean +- sd)" << std::setw(22) << "[min, max]" << std::setw(10)
      << "solved" << "max speed\n";
  for (const auto& c : t.cells) {
    std::ostringstream score, band;
    score << std::fixed << std::setprecision(3) << c.final_score.mean << " +- " << c.final_score.stdev;
    band << std::fixed << std::setprecision(3) << '[' << c.final_score.min << ", " << c.final_score.max
         << ']';
    out << std::setw(8) << c.optimizer << std::setw(10) << c.step_size << std::setw(8)
        << c.population_size << std::setw(26) << score.str() << std::setw(22) << band.str()
        << std::setw(10) << c.solved_fraction << c.max_speed << '\n';
  }
  return out.str();
}

/// Long-format curves: one line per (cell, iteration).
inline std::string curves_csv(const ClipComparison& t) {
  std::ostringstream out;
  out << std::setprecision(10) << "optimizer,alpha,lambda,k,mean_eval,median_eval,mean_speed\n";
  for (const auto& c : t.cells)
    for (std::size_t k = 0; k < c.mean_curve.size(); ++k)
      out << c.optimizer << ',' << c.step_size << ',' << c.population_size << ',' << k << ','
          << c.mean_curve[k] << ',' << c.median_curve[k] << ',' << c.mean_speed[k] << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// generic grids

struct GridAxis {
  /// Dotted path ("optimizer.alpha") or a bare key looked up in each section.
  std::string key;
  std::vector<Json> values;
};

/// Assigns `value` to `key` in a JSON config. Bare keys are searched in the
/// top level, then the pgpe, optimizer, problem and output sections.
inline void set_config_key(Json& config, const std::string& key, const Json& value) {
  if (auto dot = key.find('.'); dot != std::string::npos) {
    config[key.substr(0, dot)][key.substr(dot + 1)] = value;
    return;
  }
  static const std::set<std::string> top{"iterations", "seed", "repetitions", "eval_episodes"};
  if (top.count(key)) {
    config[key] = value;
    return;
  }
  static const std::map<std::string, std::string> section{
      {"lambda", "pgpe"},       {"lambda_max", "pgpe"}, {"T", "pgpe"},
      {"omega", "pgpe"},        {"radius", "pgpe"},     {"q", "pgpe"},
      {"obs_norm", "pgpe"},     {"ranking", "pgpe"},    {"f_max", "pgpe"},
      {"x0", "pgpe"},           {"sigma_max_change", "pgpe"},
      {"alpha", "optimizer"},   {"v_max", "optimizer"}, {"momentum", "optimizer"},
      {"beta1", "optimizer"},   {"beta2", "optimizer"}, {"epsilon", "optimizer"},
      {"type", "optimizer"},    {"name", "problem"},    {"dimension", "problem"},
      {"scale", "problem"},     {"policy", "problem"}};
  const auto it = section.find(key);
  if (it == section.end()) throw Error("unknown sweep key '" + key + "'");
  config[it->second][key] = value;
}

/// Parses "key=v1,v2,..." into an axis; values are read as JSON scalars and
/// fall back to strings.
inline GridAxis parse_grid_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw Error("grid axis must look like key=v1,v2: " + spec);
  GridAxis axis{spec.substr(0, eq), {}};
  std::stringstream rest(spec.substr(eq + 1));
  std::string item;
  while (std::getline(rest, item, ',')) {
    if (item.empty()) continue;
    Json v = Json::parse(item, nullptr, /*allow_exceptions=*/false);
    axis.values.push_back(v.is_discarded() ? Json(item) : v);
  }
  if (axis.values.empty()) throw Error("grid axis '" + axis.key + "' has no values");
  return axis;
}

struct SweepRow {
  std::vector<std::pair<std::string, Json>> assignment;
  Summary final_score;
  Summary best_score;
};

inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::vector<GridAxis>& axes,
                                       int workers = 1) {
  std::vector<SweepRow> rows;
  std::vector<std::size_t> index(axes.size(), 0);
  const Json base_json = to_json(base);
  for (;;) {
    Json j = base_json;
    SweepRow row;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      set_config_key(j, axes[a].key, axes[a].values[index[a]]);
      row.assignment.emplace_back(axes[a].key, axes[a].values[index[a]]);
    }
    const ExperimentConfig c = config_from_json(j);
    std::vector<double> finals, bests;
    for (const auto& run : run_seeds(c, c.repetitions, workers)) {
      finals.push_back(run.back().eval_score);
      double best = run.front().eval_score;
      for (const auto& r : run) best = std::max(best, r.eval_score);
      bests.push_back(best);
    }
    row.final_score = summarize(finals);
    row.best_score = summarize(bests);
    rows.push_back(std::move(row));

    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++index[a] < axes[a].values.size()) break;
      index[a] = 0;
    }
    if (a == axes.size()) break;
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << std::setprecision(10);
  if (rows.empty()) return {};
  for (const auto& [key, value] : rows.front().assignment) out << key << ',';
  out << "n,final_mean,final_stdev,final_min,final_max,best_mean\n";
  for (const auto& r : rows) {
    for (const auto& [key, value] : r.assignment)
      out << (value.is_string() ? value.get<std::string>() : value.dump()) << ',';
    out << r.final_score.n << ',' << r.final_score.mean << ',' << r.final_score.stdev << ','
        << r.final_score.min << ',' << r.final_score.max << ',' << r.best_score.mean << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// reports over logged runs

/// Reads the per-iteration CSV written by a run (shaped fitness and
/// evaluation success are not part of the CSV and stay zero).
inline std::vector<IterationRecord> read_run_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw Error("'" + path + "' does not start with the run CSV header");
  std::vector<IterationRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    // resumed runs may repeat the header
    if (line == kCsvHeader) continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9)
      throw Error("'" + path + "' line " + std::to_string(line_no) + ": expected 9 fields");
    try {
      IterationRecord r;
      r.iteration = std::stoll(f[0]);
      r.population_size = std::stoll(f[1]);
      r.timesteps_total = std::stoll(f[2]);
      r.raw_best = std::stod(f[3]);
      r.raw_mean = std::stod(f[4]);
      r.eval_score = std::stod(f[5]);
      r.speed = std::stod(f[6]);
      r.sigma_norm = std::stod(f[7]);
      r.clip_engaged = f[8] == "1";
      records.push_back(r);
    } catch (const std::logic_error&) {
      throw Error("'" + path + "' line " + std::to_string(line_no) + ": malformed number");
    }
  }
  if (records.empty()) throw Error("'" + path + "' has no records");
  return records;
}

struct RunReport {
  std::string source;
  std::int64_t iterations = 0;
  std::int64_t timesteps = 0;
  double final_score = 0.0;
  double best_score = 0.0;
  double max_speed = 0.0;
  double clip_fraction = 0.0;
  double final_sigma_norm = 0.0;
};

inline RunReport report_run(const std::string& source, const std::vector<IterationRecord>& records) {
  require(!records.empty(), "no records to report");
  RunReport r;
  r.source = source;
  r.iterations = static_cast<std::int64_t>(records.size());
  r.timesteps = records.back().timesteps_total;
  r.final_score = records.back().eval_score;
  r.best_score = records.front().eval_score;
  std::size_t clipped = 0;
  for (const auto& rec : records) {
    r.best_score = std::max(r.best_score, rec.eval_score);
    r.max_speed = std::max(r.max_speed, rec.speed);
    clipped += rec.clip_engaged ? 1 : 0;
  }
  r.clip_fraction = static_cast<double>(clipped) / static_cast<double>(records.size());
  r.final_sigma_norm = records.back().sigma_norm;
  return r;
}

inline std::string render(const std::vector<RunReport>& reports) {
  std::ostringstream out;
  out << std::setprecision(6);
  out << "source,iterations,timesteps,final_score,best_score,max_speed,clip_fraction,final_sigma_norm\n";
  for (const auto& r : reports)
    out << r.source << ',' << r.iterations << ',' << r.timesteps << ',' << r.final_score << ','
        << r.best_score << ',' << r.max_speed << ',' << r.clip_fraction << ',' << r.final_sigma_norm
        << '\n';
  if (reports.size() > 1) {
    std::vector<double> finals, bests;
    for (const auto& r : reports) {
      finals.push_back(r.final_score);
      bests.push_back(r.best_score);
    }
    const Summary f = summarize(finals);
    const Summary b = summarize(bests);
    out << "\nfinal score: mean " << f.mean << " +- " << f.stdev << " (min " << f.min << ", max "
        << f.max << ", median " << f.median << ")\n";
    out << "best score:  mean " << b.mean << " +- " << b.stdev << " (min " << b.min << ", max "
        << b.max << ")\n";
  }
  return out.str();
}

}  // namespace pgpe

#endif  // PGPE_PRESETS_HPP
