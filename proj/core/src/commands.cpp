#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "mppidk/errors.hpp"
#include "mppidk/harness.hpp"
#include "mppidk/parallel.hpp"

namespace mppidk {

namespace {

using nlohmann::ordered_json;

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ordered_json vector_json(const Vector& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

// Population statistics.
MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  for (double x : xs) r.std += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(r.std / static_cast<double>(xs.size()));
  return r;
}

ordered_json stat_json(const std::vector<double>& xs) {
  const MeanStd s = mean_std(xs);
  return {{"mean", s.mean}, {"std", s.std}};
}

void write_effective_config(const ExperimentConfig& cfg, const char* command) {
  write_text(cfg.output_dir / (std::string(command) + "_config.json"), config_to_string(cfg));
}

std::shared_ptr<const KoopmanModel> load_model_if_needed(const ExperimentConfig& cfg,
                                                         const std::vector<std::string>& backends) {
  for (const std::string& b : backends) {
    if (b != "true") return std::make_shared<const KoopmanModel>(read_model(cfg.model_file()));
  }
  return nullptr;
}

}  // namespace

CollectOutcome cmd_collect(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::shared_ptr<Plant> plant = make_plant(cfg.plant);
  const CollectResult result = collect_dataset(*plant, cfg.collect);
  if (result.discarded_episodes > 0) {
    std::cerr << "collect: discarded " << result.discarded_episodes
              << " episode(s) that diverged or left the operating box\n";
  }
  CollectOutcome out;
  out.dataset = cfg.dataset_file();
  out.records = result.dataset.size();
  out.discarded_episodes = result.discarded_episodes;
  std::filesystem::create_directories(cfg.output_dir);
  if (out.dataset.has_parent_path()) std::filesystem::create_directories(out.dataset.parent_path());
  write_dataset(result.dataset, out.dataset);

  const TransitionDataset& d = result.dataset;
  ordered_json manifest;
  manifest["plant"] = plant->name();
  manifest["seed"] = cfg.collect.seed;
  manifest["records"] = d.size();
  manifest["episode_length"] = cfg.collect.episode_length;
  manifest["discarded_episodes"] = result.discarded_episodes;
  manifest["state_dim"] = d.state_dim();
  manifest["input_dim"] = d.input_dim();
  manifest["state_lower"] = vector_json(d.state_bounds.lower);
  manifest["state_upper"] = vector_json(d.state_bounds.upper);
  manifest["input_lower"] = vector_json(d.input_bounds.lower);
  manifest["input_upper"] = vector_json(d.input_bounds.upper);
  manifest["dataset"] = out.dataset.filename().string();
  write_text(cfg.output_dir / "dataset_manifest.json", manifest.dump(2) + "\n");
  write_effective_config(cfg, "collect");
  return out;
}

TrainOutcome cmd_train(const ExperimentConfig& cfg, ThreadPool* pool) {
  cfg.validate();
  const std::shared_ptr<Plant> plant = make_plant(cfg.plant);
  const TransitionDataset data = read_dataset(cfg.dataset_file());
  if (data.state_dim() != plant->learned_dim() || data.input_dim() != plant->input_dim()) {
    throw ConfigError("train: dataset dimensions do not match the " + plant->name() + " plant");
  }
  const LiftingArchitecture arch = make_architecture(cfg, *plant);
  TrainResult result = train_dko(data, arch, cfg.train, cfg.train_seed, pool);
  for (const std::string& w : result.log.warnings) std::cerr << "train: warning: " << w << "\n";

  TrainOutcome out;
  out.model = cfg.model_file();
  out.log = result.log;
  std::filesystem::create_directories(cfg.output_dir);
  if (out.model.has_parent_path()) std::filesystem::create_directories(out.model.parent_path());
  write_model(result.model, out.model);

  std::string log = "epoch,train_loss,validation_rmse\n";
  for (const EpochLog& e : result.log.epochs) {
    log += std::to_string(e.epoch) + "," + number(e.train_loss) + "," + number(e.validation_rmse) + "\n";
  }
  write_text(cfg.output_dir / "train_log.csv", log);
  ordered_json summary;
  summary["model"] = out.model.filename().string();
  summary["epochs"] = cfg.train.epochs;
  summary["train_size"] = result.log.train_size;
  summary["validation_size"] = result.log.validation_size;
  summary["final_train_loss"] = result.log.final_train_loss;
  summary["final_validation_rmse"] = result.log.final_validation_rmse;
  summary["warnings"] = result.log.warnings;
  write_text(cfg.output_dir / "train_summary.json", summary.dump(2) + "\n");
  write_effective_config(cfg, "train");
  return out;
}

RunOutcome cmd_run(const ExperimentConfig& cfg, ThreadPool* pool) {
  cfg.validate();
  const std::shared_ptr<Plant> plant = make_plant(cfg.plant);
  const std::string& backend_name = cfg.episode.backend;
  const auto model = load_model_if_needed(cfg, {backend_name});
  const std::shared_ptr<RolloutBackend> backend = make_backend(backend_name, plant, model);
  const std::vector<Vector> starts = trial_initial_states(cfg, *plant);
  std::filesystem::create_directories(cfg.output_dir);

  RunOutcome out;
  ordered_json trials = ordered_json::array();
  std::vector<double> total, tracking, final_err, smooth, steps, step_ms;
  int successes = 0;
  for (int i = 0; i < cfg.episode.num_trials; ++i) {
    MppiConfig mc = cfg.mppi;
    mc.seed = trial_seed(cfg, i);
    MppiController controller(mc, backend, pool);
    EpisodeRecord rec = run_episode(*plant, controller, starts[static_cast<std::size_t>(i)], cfg.episode);
    rec.trial = i;
    const EpisodeMetrics m = compute_metrics(rec, *plant, cfg.episode.success_rule, cfg.episode.hold_steps);
    out.trials.push_back(m);
    if (rec.controller_failed) {
      ++out.controller_failures;
      std::cerr << "run: trial " << i << " stopped: " << rec.failure << "\n";
    }

    char name[64];
    std::snprintf(name, sizeof(name), "trial_%02d", i);
    write_text(cfg.output_dir / (std::string(name) + ".csv"), episode_csv(rec));
    write_text(cfg.output_dir / (std::string(name) + "_timing.csv"), episode_timing_csv(rec));

    ordered_json t;
    t["trial"] = i;
    t["seed"] = mc.seed;
    t["initial_state"] = vector_json(rec.initial_state);
    t["steps"] = m.steps;
    t["total_cost"] = m.total_cost;
    t["tracking_error"] = m.tracking_error;
    t["final_error"] = m.final_error;
    t["smoothness"] = m.smoothness;
    t["success"] = m.success;
    t["controller_failed"] = rec.controller_failed;
    if (rec.controller_failed) t["failure"] = rec.failure;
    trials.push_back(t);

    total.push_back(m.total_cost);
    tracking.push_back(m.tracking_error);
    final_err.push_back(m.final_error);
    smooth.push_back(m.smoothness);
    steps.push_back(m.steps);
    double us = 0.0;
    for (const StepDiagnostics& d : rec.diagnostics) us += d.wall_us;
    if (!rec.diagnostics.empty()) step_ms.push_back(us / 1000.0 / static_cast<double>(rec.diagnostics.size()));
    if (m.success) ++successes;
  }

  ordered_json summary;
  summary["plant"] = plant->name();
  summary["backend"] = backend_name;
  summary["num_trials"] = cfg.episode.num_trials;
  summary["successes"] = successes;
  summary["controller_failures"] = out.controller_failures;
  summary["total_cost"] = stat_json(total);
  summary["tracking_error"] = stat_json(tracking);
  summary["final_error"] = stat_json(final_err);
  summary["smoothness"] = stat_json(smooth);
  summary["steps"] = stat_json(steps);
  summary["trials"] = trials;
  write_text(cfg.output_dir / "summary.json", summary.dump(2) + "\n");

  // Wall-clock numbers live apart from the records so those stay reproducible.
  ordered_json timing;
  timing["backend"] = backend_name;
  timing["step_ms"] = stat_json(step_ms);
  write_text(cfg.output_dir / "timing.json", timing.dump(2) + "\n");
  write_effective_config(cfg, "run");
  return out;
}

const BenchRow* BenchReport::find(const std::string& backend) const {
  for (const BenchRow& r : rows) {
    if (r.backend == backend) return &r;
  }
  return nullptr;
}

BenchReport cmd_bench(const ExperimentConfig& cfg, ThreadPool* pool) {
  cfg.validate();
  const std::shared_ptr<Plant> plant = make_plant(cfg.plant);
  const auto model = load_model_if_needed(cfg, cfg.bench.backends);
  const Vector x0 = trial_initial_states(cfg, *plant).front();

  BenchReport report;
  for (const std::string& name : cfg.bench.backends) {
    const std::shared_ptr<RolloutBackend> backend = make_backend(name, plant, model);
    MppiController controller(cfg.mppi, backend, pool);
    Vector x = x0;
    std::vector<double> ms;
    for (int k = 0; k < cfg.bench.warmup_steps + cfg.bench.measured_steps; ++k) {
      if (k == cfg.bench.warmup_steps) backend->reset_counters();
      const StepResult r = controller.step(x);
      x = plant->step(x, r.u0);
      if (k >= cfg.bench.warmup_steps) ms.push_back(r.diagnostics.wall_us / 1000.0);
    }
    const MeanStd s = mean_std(ms);
    BenchRow row;
    row.backend = name;
    row.mean_ms = s.mean;
    row.std_ms = s.std;
    row.steps = cfg.bench.measured_steps;
    row.network_evaluations_per_step =
        static_cast<double>(backend->network_evaluations()) / static_cast<double>(cfg.bench.measured_steps);
    report.rows.push_back(row);
  }
  const BenchRow* dk = report.find("dk");
  if (dk && dk->mean_ms > 0.0) {
    if (const BenchRow* t = report.find("true")) report.true_over_dk = t->mean_ms / dk->mean_ms;
    if (const BenchRow* r = report.find("relift")) report.relift_over_dk = r->mean_ms / dk->mean_ms;
  }

  std::filesystem::create_directories(cfg.output_dir);
  std::string csv = "backend,mean_ms,std_ms,steps,network_evaluations_per_step\n";
  ordered_json rows = ordered_json::array();
  for (const BenchRow& r : report.rows) {
    csv += r.backend + "," + number(r.mean_ms) + "," + number(r.std_ms) + "," + std::to_string(r.steps) +
           "," + number(r.network_evaluations_per_step) + "\n";
    rows.push_back({{"backend", r.backend},
                    {"mean_ms", r.mean_ms},
                    {"std_ms", r.std_ms},
                    {"steps", r.steps},
                    {"network_evaluations_per_step", r.network_evaluations_per_step}});
  }
  write_text(cfg.output_dir / "bench.csv", csv);
  ordered_json j;
  j["plant"] = plant->name();
  j["horizon"] = cfg.mppi.horizon;
  j["num_rollouts"] = cfg.mppi.num_rollouts;
  j["warmup_steps"] = cfg.bench.warmup_steps;
  j["threads"] = pool ? pool->size() : 1;
  j["rows"] = rows;
  j["speedup_dk_vs_true"] = report.true_over_dk;
  j["speedup_dk_vs_relift"] = report.relift_over_dk;
  write_text(cfg.output_dir / "bench.json", j.dump(2) + "\n");
  write_effective_config(cfg, "bench");
  return report;
}

}  // namespace mppidk
