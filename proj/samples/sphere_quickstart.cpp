// Minimal use of the library without the experiment runner: PGPE + ClipUp on
// a 16-dimensional sphere, configured with the max-speed heuristic.

#include <cstdio>
#include <span>

#include "pgpe/optimizers.hpp"
#include "pgpe/pgpe.hpp"
#include "pgpe/problems.hpp"

int main() {
  constexpr std::size_t dim = 16;
  const double max_speed = 0.02;

  const pgpe::Heuristics h = pgpe::derive_heuristics({max_speed, 15.0, dim});
  pgpe::PgpeConfig config;
  config.population_size = 100;
  config.max_population = 100;

  pgpe::PgpeState state{
      {pgpe::Vector(dim, 0.25), h.sigma0},
      pgpe::Optimizer::clipup(dim, {h.step_size, max_speed, 0.9}),
      {},
      0};
  pgpe::Engine rng(1);

  auto fitness = [](std::span<const double> x) { return pgpe::eval_analytic("sphere", x); };
  for (int k = 0; k < 100; ++k) {
    const pgpe::IterationReport r = pgpe::pgpe_iteration_simple(state, config, fitness, rng);
    if (k % 10 == 9)
      std::printf("iter %3d  center fitness %.6g  speed %.4f  |sigma| %.4f\n", k + 1,
                  fitness(state.dist.mean), r.speed, r.sigma_norm);
  }
  return 0;
}
