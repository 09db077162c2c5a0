#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mppidk/dko.hpp"
#include "mppidk/envs.hpp"
#include "mppidk/mppi.hpp"

namespace mppidk {

class ThreadPool;

// ---------------------------------------------------------------------------
// Configuration

struct PlantSpec {
  std::string kind = "pendulum";  // pendulum | boat | quadruped | linear
  PendulumParams pendulum;
  BoatParams boat;
  QuadrupedParams quadruped;
  LinearParams linear;
};

struct LiftingSpec {
  std::vector<int> hidden_sizes{64, 64};
  int lift_dim = 4;  // network output width
  bool append_state = true;
  bool append_constant = false;
};

enum class SuccessRule {
  kHoldFinal,   // at_goal on each of the last hold_steps states
  kFinalState,  // at_goal on the final state
  kAnyStep,     // at_goal on some state
};

struct EpisodeSpec {
  int max_steps = 200;
  int num_trials = 1;
  // Per-trial controller seeds; empty derives seed + trial.
  std::vector<std::uint64_t> trial_seeds;
  // Explicit start states, cycled over trials. When empty, trials start at
  // start_pose perturbed uniformly within +-pose_spread (quadruped).
  std::vector<Vector> initial_states;
  Vector start_pose;
  Vector pose_spread;
  std::string backend = "dk";
  SuccessRule success_rule = SuccessRule::kFinalState;
  int hold_steps = 20;
  bool stop_on_success = false;
};

struct BenchSpec {
  int warmup_steps = 10;
  int measured_steps = 100;
  std::vector<std::string> backends{"dk", "true", "relift"};
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  PlantSpec plant;
  CollectConfig collect;
  LiftingSpec lifting;
  DkoTrainConfig train;
  std::uint64_t train_seed = 0;
  MppiConfig mppi;
  EpisodeSpec episode;
  BenchSpec bench;
  std::filesystem::path output_dir = "out";
  // Empty paths default to files inside output_dir.
  std::filesystem::path dataset_path;
  std::filesystem::path model_path;

  std::filesystem::path dataset_file() const;
  std::filesystem::path model_file() const;
  // Cross-checks plant, architecture and controller dimensions; throws ConfigError.
  void validate() const;
};

// JSON config. Unknown keys are rejected; missing keys take the defaults
// above, with per-plant defaults for the controller and episode sections.
ExperimentConfig config_from_string(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Effective config with every default spelled out; reloads to an identical run.
std::string config_to_string(const ExperimentConfig& cfg);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> model;
  std::optional<std::string> backend;
};

// --seed replaces every stage seed (collect, train, controller).
void apply_overrides(ExperimentConfig& cfg, const Overrides& overrides);

std::shared_ptr<Plant> make_plant(const PlantSpec& spec);
LiftingArchitecture make_architecture(const ExperimentConfig& cfg, const Plant& plant);
std::shared_ptr<RolloutBackend> make_backend(const std::string& name,
                                             std::shared_ptr<const Plant> plant,
                                             std::shared_ptr<const KoopmanModel> model);
std::vector<Vector> trial_initial_states(const ExperimentConfig& cfg, const Plant& plant);
std::uint64_t trial_seed(const ExperimentConfig& cfg, int trial);

// ---------------------------------------------------------------------------
// Episodes and metrics

// Row k describes control step k: the input applied at the state before the
// step, and the state reached after it.
struct EpisodeRecord {
  int trial = 0;
  std::uint64_t seed = 0;
  Vector initial_state;
  std::vector<Vector> states;
  std::vector<Vector> task_states;  // learned coordinates
  std::vector<Vector> inputs;
  std::vector<double> stage_costs;
  std::vector<double> goal_distances;
  std::vector<bool> at_goal;
  std::vector<StepDiagnostics> diagnostics;
  bool controller_failed = false;
  std::string failure;

  int steps() const { return static_cast<int>(states.size()); }
};

struct EpisodeMetrics {
  double total_cost = 0.0;
  double tracking_error = 0.0;  // mean stage cost
  double final_error = 0.0;
  double smoothness = 0.0;
  bool success = false;
  int steps = 0;
};

// (1 / T) sum_t ||u(t + 1) - u(t)||^2 with T the number of inputs.
double control_smoothness(const std::vector<Vector>& inputs);

bool episode_success(const std::vector<bool>& at_goal, SuccessRule rule, int hold_steps);

EpisodeMetrics compute_metrics(const EpisodeRecord& record, const Plant& plant, SuccessRule rule,
                               int hold_steps);

EpisodeRecord run_episode(const Plant& plant, MppiController& controller,
                          const Eigen::Ref<const Vector>& x0, const EpisodeSpec& spec);

// ---------------------------------------------------------------------------
// Commands. Each writes its artifacts under cfg.output_dir and returns a
// short summary.

struct CollectOutcome {
  std::filesystem::path dataset;
  Eigen::Index records = 0;
  std::size_t discarded_episodes = 0;
};
CollectOutcome cmd_collect(const ExperimentConfig& cfg);

struct TrainOutcome {
  std::filesystem::path model;
  TrainLog log;
};
TrainOutcome cmd_train(const ExperimentConfig& cfg, ThreadPool* pool = nullptr);

struct RunOutcome {
  std::vector<EpisodeMetrics> trials;
  int controller_failures = 0;
};
RunOutcome cmd_run(const ExperimentConfig& cfg, ThreadPool* pool = nullptr);

struct BenchRow {
  std::string backend;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  int steps = 0;
  double network_evaluations_per_step = 0.0;
};
struct BenchReport {
  std::vector<BenchRow> rows;
  double true_over_dk = 0.0;    // speedup of dk over true dynamics
  double relift_over_dk = 0.0;  // speedup of dk over the re-lifting ablation
  const BenchRow* find(const std::string& backend) const;
};
BenchReport cmd_bench(const ExperimentConfig& cfg, ThreadPool* pool = nullptr);

// Per-step record files, shared by cmd_run and the tests.
std::string episode_csv(const EpisodeRecord& record);
std::string episode_timing_csv(const EpisodeRecord& record);

}  // namespace mppidk
