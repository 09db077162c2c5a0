#include <gtest/gtest.h>

#include "mppidk/harness.hpp"
#include "mppidk/parallel.hpp"
#include "test_util.hpp"

namespace mppidk {
namespace {

const std::size_t kThreadCounts[] = {1, 2, 8};

TEST(Determinism, DatasetsAreIdentical) {
  const Boat boat;
  const std::string ref = dataset_to_string(collect_dataset(boat, {2000, 50, 4}).dataset);
  EXPECT_EQ(dataset_to_string(collect_dataset(boat, {2000, 50, 4}).dataset), ref);
}

TEST(Determinism, ModelsAcrossThreadCounts) {
  const Pendulum plant;
  const TransitionDataset d = collect_dataset(plant, {3000, 50, 1}).dataset;
  LiftingArchitecture arch = LiftingArchitecture::mlp(2, {16, 16}, 2);
  arch.append_state = true;
  DkoTrainConfig cfg;
  cfg.epochs = 2;
  cfg.minibatch_size = 1024;  // several gradient chunks per batch
  std::string ref;
  for (std::size_t threads : kThreadCounts) {
    ThreadPool pool(threads);
    const std::string s = model_to_string(train_dko(d, arch, cfg, 9, &pool).model);
    if (ref.empty()) ref = s;
    EXPECT_EQ(s, ref) << threads << " threads";
  }
}

TEST(Determinism, EpisodeRecordsAcrossThreadCounts) {
  auto plant = std::make_shared<Boat>();
  const TransitionDataset d = collect_dataset(*plant, {2000, 50, 2}).dataset;
  LiftingArchitecture arch = LiftingArchitecture::mlp(3, {16, 16}, 3);
  arch.append_state = true;
  DkoTrainConfig tc;
  tc.epochs = 1;
  auto model = std::make_shared<KoopmanModel>(train_dko(d, arch, tc, 3).model);

  MppiConfig mc;
  mc.horizon = 10;
  mc.num_rollouts = 300;
  mc.sigma = 0.64 * Matrix::Identity(2, 2);
  mc.lambda = 20.0;
  mc.input_bounds = plant->input_bounds();
  EpisodeSpec spec;
  spec.max_steps = 8;
  Vector x0(6);
  x0 << 20, 10, 1.0471975511965976, 0, 0, 0;

  for (const char* backend : {"dk", "true", "relift"}) {
    std::string ref;
    for (std::size_t threads : kThreadCounts) {
      ThreadPool pool(threads);
      MppiController ctl(mc, make_backend(backend, plant, model), &pool);
      const std::string s = episode_csv(run_episode(*plant, ctl, x0, spec));
      if (ref.empty()) ref = s;
      EXPECT_EQ(s, ref) << backend << " with " << threads << " threads";
    }
  }
}

}  // namespace
}  // namespace mppidk
