#include <cstdio>
#include <cmath>

#include "mppidk/errors.hpp"
#include "mppidk/harness.hpp"

namespace mppidk {

double control_smoothness(const std::vector<Vector>& inputs) {
  if (inputs.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < inputs.size(); ++t) total += (inputs[t + 1] - inputs[t]).squaredNorm();
  return total / static_cast<double>(inputs.size());
}

bool episode_success(const std::vector<bool>& at_goal, SuccessRule rule, int hold_steps) {
  if (at_goal.empty()) return false;
  switch (rule) {
    case SuccessRule::kFinalState:
      return at_goal.back();
    case SuccessRule::kAnyStep:
      for (bool g : at_goal) {
        if (g) return true;
      }
      return false;
    case SuccessRule::kHoldFinal: {
      if (static_cast<int>(at_goal.size()) < hold_steps) return false;
      for (std::size_t k = at_goal.size() - static_cast<std::size_t>(hold_steps); k < at_goal.size(); ++k) {
        if (!at_goal[k]) return false;
      }
      return true;
    }
  }
  return false;
}

EpisodeMetrics compute_metrics(const EpisodeRecord& record, const Plant& plant, SuccessRule rule,
                               int hold_steps) {
  EpisodeMetrics m;
  m.steps = record.steps();
  if (m.steps == 0) return m;
  for (double c : record.stage_costs) m.total_cost += c;
  m.tracking_error = m.total_cost / static_cast<double>(m.steps);
  m.final_error = plant.final_error(record.states.back());
  m.smoothness = control_smoothness(record.inputs);
  // A controller failure ends the episode early; it never counts as success.
  m.success = !record.controller_failed && episode_success(record.at_goal, rule, hold_steps);
  return m;
}

EpisodeRecord run_episode(const Plant& plant, MppiController& controller,
                          const Eigen::Ref<const Vector>& x0, const EpisodeSpec& spec) {
  EpisodeRecord rec;
  rec.initial_state = x0;
  rec.seed = controller.config().seed;
  Vector x = x0;
  for (int k = 0; k < spec.max_steps; ++k) {
    StepResult step;
    try {
      step = controller.step(x);
    } catch (const ControllerError& e) {
      rec.controller_failed = true;
      rec.failure = e.what();
      break;
    }
    x = plant.step(x, step.u0);
    const bool goal = plant.at_goal(x);
    rec.states.push_back(x);
    rec.task_states.push_back(plant.learned_state(x));
    rec.inputs.push_back(plant.input_bounds().clamp(step.u0));
    rec.stage_costs.push_back(plant.stage_cost(x));
    rec.goal_distances.push_back(plant.goal_distance(x));
    rec.at_goal.push_back(goal);
    rec.diagnostics.push_back(step.diagnostics);
    if (goal && spec.stop_on_success && spec.success_rule == SuccessRule::kAnyStep) break;
  }
  return rec;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

std::string episode_csv(const EpisodeRecord& rec) {
  std::string out = "step";
  const auto n = rec.states.empty() ? 0 : rec.states.front().size();
  const auto s = rec.task_states.empty() ? 0 : rec.task_states.front().size();
  const auto m = rec.inputs.empty() ? 0 : rec.inputs.front().size();
  for (Eigen::Index i = 0; i < n; ++i) out += ",x" + std::to_string(i);
  for (Eigen::Index i = 0; i < s; ++i) out += ",s" + std::to_string(i);
  for (Eigen::Index i = 0; i < m; ++i) out += ",u" + std::to_string(i);
  out += ",stage_cost,goal_distance,at_goal,min_cost,mean_cost,lambda,ess\n";
  for (int k = 0; k < rec.steps(); ++k) {
    out += std::to_string(k);
    const auto emit = [&](double v) {
      out += ',';
      append_number(out, v);
    };
    for (Eigen::Index i = 0; i < n; ++i) emit(rec.states[k](i));
    for (Eigen::Index i = 0; i < s; ++i) emit(rec.task_states[k](i));
    for (Eigen::Index i = 0; i < m; ++i) emit(rec.inputs[k](i));
    emit(rec.stage_costs[k]);
    emit(rec.goal_distances[k]);
    out += rec.at_goal[k] ? ",1" : ",0";
    const StepDiagnostics& d = rec.diagnostics[k];
    emit(d.min_cost);
    emit(d.mean_cost);
    emit(d.lambda);
    emit(d.effective_sample_size);
    out += '\n';
  }
  return out;
}

std::string episode_timing_csv(const EpisodeRecord& rec) {
  std::string out = "step,wall_us\n";
  for (int k = 0; k < rec.steps(); ++k) {
    out += std::to_string(k) + ',';
    append_number(out, rec.diagnostics[k].wall_us);
    out += '\n';
  }
  return out;
}

}  // namespace mppidk
