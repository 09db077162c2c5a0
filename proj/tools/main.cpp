// mppidk command-line entry point.
//
//   mppidk collect --config configs/pendulum.json
//   mppidk train   --config configs/pendulum.json
//   mppidk run     --config configs/pendulum.json --backend true
//   mppidk bench   --config configs/boat.json
//
// Worker threads come from MPPIDK_NUM_THREADS.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mppidk/errors.hpp"
#include "mppidk/harness.hpp"
#include "mppidk/parallel.hpp"

namespace {

enum ExitCode : int {
  kOk = 0,
  kInputError = 1,
  kConfigError = 2,
  kTrainingError = 3,
  kControllerError = 4,
};

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> model;
  std::optional<std::string> backend;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed for every stage");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--model", o.model, "model file");
  cmd->add_option("--backend", o.backend, "rollout backend")->check(CLI::IsMember({"dk", "true", "relift"}));
}

mppidk::ExperimentConfig resolve(const CommonOptions& o) {
  mppidk::ExperimentConfig cfg = mppidk::load_config(o.config);
  mppidk::Overrides ov;
  ov.seed = o.seed;
  if (o.out) ov.out = *o.out;
  if (o.model) ov.model = *o.model;
  ov.backend = o.backend;
  mppidk::apply_overrides(cfg, ov);
  return cfg;
}

int run_command(const std::string& name, const CommonOptions& o) {
  const mppidk::ExperimentConfig cfg = resolve(o);
  if (name == "collect") {
    const auto r = mppidk::cmd_collect(cfg);
    std::printf("wrote %lld records to %s\n", static_cast<long long>(r.records), r.dataset.string().c_str());
    return kOk;
  }
  mppidk::ThreadPool& pool = mppidk::default_pool();
  if (name == "train") {
    const auto r = mppidk::cmd_train(cfg, &pool);
    std::printf("final validation rmse %.6g\nwrote %s\n", r.log.final_validation_rmse, r.model.string().c_str());
    return kOk;
  }
  if (name == "run") {
    const auto r = mppidk::cmd_run(cfg, &pool);
    int successes = 0;
    for (const auto& m : r.trials) successes += m.success ? 1 : 0;
    std::printf("%d/%zu trials succeeded; results in %s\n", successes, r.trials.size(),
                cfg.output_dir.string().c_str());
    return r.controller_failures > 0 ? kControllerError : kOk;
  }
  const auto r = mppidk::cmd_bench(cfg, &pool);
  for (const auto& row : r.rows) {
    std::printf("%-7s %10.3f +- %.3f ms  (%.0f network evals/step)\n", row.backend.c_str(), row.mean_ms,
                row.std_ms, row.network_evaluations_per_step);
  }
  if (r.true_over_dk > 0.0) std::printf("dk speedup vs true:   %.2fx\n", r.true_over_dk);
  if (r.relift_over_dk > 0.0) std::printf("dk speedup vs relift: %.2fx\n", r.relift_over_dk);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep Koopman MPPI: data collection, training, closed-loop runs and benchmarks"};
  app.require_subcommand(1);
  CommonOptions opts;
  for (const char* name : {"collect", "train", "run", "bench"}) {
    static const std::map<std::string, std::string> help{
        {"collect", "collect transition data from the true plant"},
        {"train", "train a deep Koopman model"},
        {"run", "run closed-loop MPPI episodes"},
        {"bench", "time MPPI per-step cost for each backend"}};
    add_common(app.add_subcommand(name, help.at(name)), opts);
  }
  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return run_command(name, opts);
  } catch (const mppidk::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const mppidk::TrainingError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kTrainingError;
  } catch (const mppidk::ControllerError& e) {
    std::cerr << "controller failure: " << e.what() << "\n";
    return kControllerError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
}
