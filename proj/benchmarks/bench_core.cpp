// Microbenchmarks for the hot paths: pseudo-inverse, lifting, and one MPPI
// cost evaluation per rollout backend on the boat.
#include <benchmark/benchmark.h>

#include <memory>
#include <random>

#include "mppidk/dko.hpp"
#include "mppidk/envs.hpp"
#include "mppidk/lifting.hpp"
#include "mppidk/mppi.hpp"
#include "mppidk/numerics.hpp"
#include "mppidk/parallel.hpp"

namespace {

using namespace mppidk;

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

// Untrained but well-formed boat model: stable A, random B and C.
std::shared_ptr<KoopmanModel> boat_model(const Boat& boat) {
  const auto arch = LiftingArchitecture::mlp(boat.learned_dim(), {64, 64}, 16);
  KoopmanModel model{Matrix(), Matrix(), Matrix(), lift_init(arch, 0)};
  const int r = model.net.lift_dim();
  model.A = 0.9 * Matrix::Identity(r, r) + random_matrix(r, r, 1, 0.01);
  model.B = random_matrix(r, boat.input_dim(), 2, 0.1);
  model.C = random_matrix(boat.learned_dim(), r, 3, 0.1);
  return std::make_shared<KoopmanModel>(std::move(model));
}

void BM_Pinv(benchmark::State& state) {
  const auto rows = state.range(0);
  const Matrix m = random_matrix(rows, 2000, 7);
  for (auto _ : state) benchmark::DoNotOptimize(numerics::pinv(m));
}
BENCHMARK(BM_Pinv)->Arg(8)->Arg(24)->Arg(72)->Unit(benchmark::kMillisecond);

void BM_LiftForward(benchmark::State& state) {
  const auto batch = state.range(0);
  const auto net = lift_init(LiftingArchitecture::mlp(3, {64, 64}, 16), 0);
  const Matrix xs = random_matrix(3, batch, 5);
  for (auto _ : state) benchmark::DoNotOptimize(lift_forward(net, xs));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_LiftForward)->Arg(1)->Arg(64)->Arg(2000);

void BM_StateCosts(benchmark::State& state, const char* which) {
  auto boat = std::make_shared<Boat>();
  const auto model = boat_model(*boat);
  std::shared_ptr<RolloutBackend> backend;
  const std::string name = which;
  if (name == "dk") backend = std::make_shared<KoopmanBackend>(boat, model);
  else if (name == "relift") backend = std::make_shared<ReliftBackend>(boat, model);
  else backend = std::make_shared<TrueBackend>(boat);

  MppiConfig cfg;
  cfg.horizon = 20;
  cfg.num_rollouts = static_cast<int>(state.range(0));
  cfg.sigma = Matrix::Identity(2, 2);
  cfg.input_bounds = boat->input_bounds();
  const Matrix noise = sample_noise(cfg, 0, 0);
  const Matrix applied = applied_inputs(Matrix::Zero(2, cfg.horizon), noise, cfg.input_bounds,
                                        cfg.num_rollouts);
  const Vector x = Vector::Zero(boat->state_dim());
  ThreadPool* pool = &default_pool();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        backend->state_costs(x, applied, cfg.horizon, cfg.num_rollouts, 1.0, pool));
  }
  state.SetItemsProcessed(state.iterations() * cfg.num_rollouts);
}
BENCHMARK_CAPTURE(BM_StateCosts, dk, "dk")->Arg(512)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_StateCosts, relift, "relift")->Arg(512)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_StateCosts, true, "true")->Arg(512)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
