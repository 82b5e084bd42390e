// Command-line harness: single runs, grids, the two comparison presets,
// checkpoint resumption, and summaries of logged runs.
//
// Worker threads come from the PGPE_WORKERS environment variable.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pgpe/checkpoint.hpp"
#include "pgpe/config.hpp"
#include "pgpe/presets.hpp"
#include "pgpe/runner.hpp"

namespace {

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw pgpe::Error("cannot write '" + path + "'");
  out << text;
}

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> iterations;
  std::optional<std::int64_t> repetitions;

  void add_to(CLI::App* app) {
    app->add_option("-c,--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "override the config seed");
    app->add_option("--iterations", iterations, "override the iteration budget");
    app->add_option("--repetitions,--seeds", repetitions, "override the number of repetitions / seeds");
  }

  pgpe::ExperimentConfig load() const {
    pgpe::ExperimentConfig c = pgpe::load_config(config_path);
    if (seed) c.seed = *seed;
    if (iterations) c.iterations = *iterations;
    if (repetitions) c.repetitions = *repetitions;
    c.validate();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PGPE with ClipUp / NoClip / Adam: experiment harness"};
  app.require_subcommand(1);

  // run
  CommonOptions run_opts;
  std::string run_csv, run_jsonl, run_ckpt;
  bool run_quiet = false;
  auto* run = app.add_subcommand("run", "run one experiment (per repetition)");
  run_opts.add_to(run);
  run->add_option("--csv", run_csv, "per-iteration CSV log (overrides output.csv)");
  run->add_option("--jsonl", run_jsonl, "per-iteration JSONL log (overrides output.jsonl)");
  run->add_option("--checkpoint", run_ckpt, "checkpoint path (overrides output.checkpoint)");
  run->add_flag("-q,--quiet", run_quiet, "do not print per-iteration progress");

  // sweep
  CommonOptions sweep_opts;
  std::vector<std::string> sweep_axes;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "grid over listed hyperparameters");
  sweep_opts.add_to(sweep);
  sweep->add_option("-g,--grid", sweep_axes, "axis as key=v1,v2,... (repeatable)")->required();
  sweep->add_option("-o,--out", sweep_out, "summary CSV path");

  // preset-scale
  CommonOptions scale_opts;
  std::vector<double> scale_adam{0.15, 0.175, 0.2};
  std::string scale_out;
  auto* scale = app.add_subcommand("preset-scale", "fitness-scale sensitivity table (ClipUp vs Adam)");
  scale_opts.add_to(scale);
  scale->add_option("--adam-alpha", scale_adam, "Adam step sizes (one column each)")->delimiter(',');
  scale->add_option("-o,--out", scale_out, "CSV with per-cell statistics");

  // preset-clip-vs-noclip
  CommonOptions clip_opts;
  std::vector<double> clip_alphas;
  std::vector<std::int64_t> clip_lambdas;
  double clip_threshold = 0.0;
  std::string clip_curves;
  auto* clip = app.add_subcommand("preset-clip-vs-noclip", "matched-seed ClipUp vs NoClip battery");
  clip_opts.add_to(clip);
  clip->add_option("--alpha", clip_alphas, "step sizes")->delimiter(',')->required();
  clip->add_option("--lambda", clip_lambdas, "population sizes (default: config lambda)")->delimiter(',');
  clip->add_option("--threshold", clip_threshold, "final evaluation score counted as solved");
  clip->add_option("--curves", clip_curves, "per-iteration mean/median/speed CSV");

  // resume
  std::string resume_path;
  std::int64_t resume_iterations = 0;
  auto* resume = app.add_subcommand("resume", "continue a run from its checkpoint");
  resume->add_option("checkpoint", resume_path, "checkpoint file")->required()->check(CLI::ExistingFile);
  resume->add_option("--iterations", resume_iterations, "new total iteration budget");

  // report
  std::vector<std::string> report_files;
  std::string report_out;
  auto* report = app.add_subcommand("report", "summarize per-iteration CSV logs");
  report->add_option("csv", report_files, "run CSV files")->required()->check(CLI::ExistingFile);
  report->add_option("-o,--out", report_out, "write the summary here as well");

  CLI11_PARSE(app, argc, argv);

  try {
    const int workers = pgpe::workers_from_env();

    if (*run) {
      pgpe::ExperimentConfig c = run_opts.load();
      if (!run_csv.empty()) c.output.csv = run_csv;
      if (!run_jsonl.empty()) c.output.jsonl = run_jsonl;
      if (!run_ckpt.empty()) c.output.checkpoint = run_ckpt;
      const auto runs = pgpe::run_experiment(c, workers);
      for (std::size_t r = 0; r < runs.size(); ++r) {
        const auto& recs = runs[r];
        if (!run_quiet)
          for (const auto& rec : recs)
            std::cout << "rep " << r << " k " << rec.iteration << " lambda " << rec.population_size
                      << " eval " << rec.eval_score << " speed " << rec.speed << " |sigma| "
                      << rec.sigma_norm << (rec.clip_engaged ? " clipped" : "") << '\n';
        std::cout << "rep " << r << " (seed " << c.seed + r << "): final eval score "
                  << recs.back().eval_score << " after " << recs.size() << " iterations, "
                  << recs.back().timesteps_total << " timesteps\n";
      }
    } else if (*sweep) {
      const pgpe::ExperimentConfig c = sweep_opts.load();
      std::vector<pgpe::GridAxis> axes;
      for (const auto& a : sweep_axes) axes.push_back(pgpe::parse_grid_axis(a));
      const std::string csv = pgpe::sweep_csv(pgpe::run_sweep(c, axes, workers));
      std::cout << csv;
      write_text(sweep_out, csv);
    } else if (*scale) {
      const pgpe::ExperimentConfig c = scale_opts.load();
      const pgpe::ScaleTable table = pgpe::preset_scale_sensitivity(c, scale_adam, workers);
      std::cout << pgpe::render(table);
      write_text(scale_out, pgpe::to_csv(table));
    } else if (*clip) {
      const pgpe::ExperimentConfig c = clip_opts.load();
      if (clip_lambdas.empty()) clip_lambdas.push_back(c.pgpe.lambda);
      const pgpe::ClipComparison table =
          pgpe::preset_clip_vs_noclip(c, clip_alphas, clip_lambdas, clip_threshold, workers);
      std::cout << pgpe::render(table);
      write_text(clip_curves, pgpe::curves_csv(table));
    } else if (*resume) {
      const auto recs = pgpe::resume_experiment(resume_path, resume_iterations, workers);
      if (recs.empty())
        std::cout << "nothing to do: the checkpoint already reached its iteration budget\n";
      else
        std::cout << "resumed " << recs.size() << " iterations; final eval score "
                  << recs.back().eval_score << '\n';
    } else if (*report) {
      std::vector<pgpe::RunReport> reports;
      for (const auto& f : report_files) reports.push_back(pgpe::report_run(f, pgpe::read_run_csv(f)));
      const std::string text = pgpe::render(reports);
      std::cout << text;
      write_text(report_out, text);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
