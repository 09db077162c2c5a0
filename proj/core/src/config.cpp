#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mppidk/errors.hpp"
#include "mppidk/harness.hpp"

namespace mppidk {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr double kPi = std::numbers::pi;

// Reads keys of one JSON object and rejects any key that was never asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  void get(const char* key, T& out) {
    if (!take(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  void get_vector(const char* key, Vector& out) {
    if (!take(key)) return;
    out = to_vector(j_.at(key), where(key));
  }

  // Matrix as an array of rows. Square-matrix keys also accept a scalar (s I)
  // or a flat array (its diagonal) when dim > 0.
  void get_matrix(const char* key, Matrix& out, Eigen::Index square_dim = 0) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    const std::string w = where(key);
    if (square_dim > 0 && v.is_number()) {
      out = v.get<double>() * Matrix::Identity(square_dim, square_dim);
    } else if (square_dim > 0 && v.is_array() && !v.empty() && v[0].is_number()) {
      out = to_vector(v, w).asDiagonal();
    } else {
      out = to_matrix(v, w);
    }
  }

  Section child(const char* key) {
    take(key);
    return Section(j_.at(key), where(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(where(it.key().c_str()) + ": unknown key");
    }
  }

  static Vector to_vector(const json& v, const std::string& w) {
    if (!v.is_array()) throw ConfigError(w + ": expected an array of numbers");
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(w + ": expected an array of numbers");
      out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    }
    return out;
  }

  static Matrix to_matrix(const json& v, const std::string& w) {
    if (!v.is_array() || v.empty() || !v[0].is_array()) {
      throw ConfigError(w + ": expected an array of rows");
    }
    const std::size_t cols = v[0].size();
    Matrix out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Vector row = to_vector(v[i], w);
      if (static_cast<std::size_t>(row.size()) != cols) throw ConfigError(w + ": ragged rows");
      out.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return out;
  }

 private:
  bool take(const char* key) {
    if (!j_.contains(key)) return false;
    used_.insert(key);
    return true;
  }
  std::string where(const char* key) const { return path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

ordered_json vector_json(const Vector& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

ordered_json matrix_json(const Matrix& m) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vector_json(m.row(i).transpose()));
  return out;
}

const char* rule_name(SuccessRule r) {
  switch (r) {
    case SuccessRule::kHoldFinal: return "hold_final";
    case SuccessRule::kFinalState: return "final_state";
    case SuccessRule::kAnyStep: return "any_step";
  }
  return "final_state";
}

SuccessRule parse_rule(const std::string& s) {
  if (s == "hold_final") return SuccessRule::kHoldFinal;
  if (s == "final_state") return SuccessRule::kFinalState;
  if (s == "any_step") return SuccessRule::kAnyStep;
  throw ConfigError("episode.success_rule: expected hold_final, final_state or any_step");
}

void check_backend_name(const std::string& name) {
  if (name != "dk" && name != "true" && name != "relift") {
    throw ConfigError("backend must be one of dk, true, relift (got '" + name + "')");
  }
}

// Experiment defaults per plant; sections in the file override them.
void apply_plant_defaults(ExperimentConfig& cfg) {
  MppiConfig& mp = cfg.mppi;
  EpisodeSpec& ep = cfg.episode;
  const std::string& kind = cfg.plant.kind;
  if (kind == "pendulum") {
    mp.horizon = 20;
    mp.num_rollouts = 2000;
    mp.sigma = Matrix::Identity(1, 1);
    mp.lambda = 0.1;
    cfg.collect.num_samples = 20000;
    cfg.lifting = {{64, 64}, 4, true, false};
    cfg.train.epochs = 30;
    ep.max_steps = 200;
    ep.num_trials = 5;
    ep.initial_states = {Eigen::Vector2d(kPi, 0.1)};
    ep.success_rule = SuccessRule::kHoldFinal;
  } else if (kind == "boat") {
    mp.horizon = 20;
    mp.num_rollouts = 600;
    mp.sigma = Eigen::Vector2d(0.8, 0.8).asDiagonal();
    mp.lambda = 20.0;
    // Without a heavier terminal term the 2 s horizon parks the underactuated
    // hull short of the goal.
    mp.terminal_weight = 50.0;
    cfg.collect.num_samples = 20000;
    cfg.lifting = {{256, 256}, 8, true, false};
    cfg.train.epochs = 20;
    ep.max_steps = 400;
    ep.num_trials = 4;
    Vector x0(6);
    x0 << 20.0, 10.0, kPi / 3.0, 0.0, 0.0, 0.0;
    ep.initial_states = {x0};
    ep.success_rule = SuccessRule::kFinalState;
  } else if (kind == "quadruped") {
    mp.horizon = 40;
    mp.num_rollouts = 900;
    mp.sigma = Eigen::Vector3d(0.18, 0.18, 0.18).asDiagonal();
    mp.adaptive_lambda = true;
    mp.kappa = 0.5;
    cfg.collect.num_samples = 20000;
    cfg.lifting = {{256, 256}, 10, true, false};
    cfg.train.epochs = 10;
    ep.max_steps = 200;
    ep.num_trials = 10;
    ep.start_pose = Eigen::Vector3d(-0.5, 0.4, 0.3);
    ep.pose_spread = Eigen::Vector3d(0.5, 0.5, 0.4);
    ep.success_rule = SuccessRule::kAnyStep;
    ep.stop_on_success = true;
  } else if (kind == "linear") {
    mp.horizon = 10;
    mp.num_rollouts = 200;
    mp.lambda = 1.0;
    cfg.collect.num_samples = 2000;
    cfg.lifting = {{}, 0, true, false};
    cfg.train.epochs = 0;
    ep.max_steps = 50;
    ep.num_trials = 1;
    ep.success_rule = SuccessRule::kFinalState;
  } else {
    throw ConfigError("plant must be pendulum, boat, quadruped or linear (got '" + kind + "')");
  }
}

void parse_pendulum(Section s, PendulumParams& p) {
  s.get("gravity", p.gravity);
  s.get("mass", p.mass);
  s.get("length", p.length);
  s.get("dt", p.dt);
  s.get("max_speed", p.max_speed);
  s.get("max_torque", p.max_torque);
  s.get("clamp_speed", p.clamp_speed);
  s.get("wrap_angle", p.wrap_angle);
  s.get("reset_speed", p.reset_speed);
  s.get("goal_angle_tol", p.goal_angle_tol);
  s.get("goal_speed_tol", p.goal_speed_tol);
  s.finish();
}

void parse_boat(Section s, BoatParams& p) {
  if (s.has("M")) {
    // Either 3 rows of 22 or one flat row-major array of 66.
    json raw;
    s.get("M", raw);
    if (raw.is_array() && !raw.empty() && raw[0].is_array()) {
      p.M = Section::to_matrix(raw, "config.boat.M");
    } else {
      const Vector flat = Section::to_vector(raw, "config.boat.M");
      if (flat.size() != 3 * kBoatFeatureCount) throw ConfigError("config.boat.M: expected 3 x 22 entries");
      p.M = Eigen::Map<const Eigen::Matrix<double, 3, kBoatFeatureCount, Eigen::RowMajor>>(flat.data());
    }
  }
  s.get("dt", p.dt);
  s.get_vector("goal", p.goal);
  s.get_vector("state_lower", p.state_lower);
  s.get_vector("state_upper", p.state_upper);
  s.get("reset_position", p.reset_position);
  s.get_vector("reset_velocity", p.reset_velocity);
  s.get("goal_position_tol", p.goal_position_tol);
  s.finish();
}

void parse_quadruped(Section s, QuadrupedParams& p) {
  s.get("mass", p.mass);
  s.get("inertia_zz", p.inertia_zz);
  s.get("com_height", p.com_height);
  s.get("dt", p.dt);
  s.get_vector("goal", p.goal);
  s.get("success_threshold", p.success_threshold);
  s.get_vector("state_lower", p.state_lower);
  s.get_vector("state_upper", p.state_upper);
  s.get_vector("reset_lower", p.reset_lower);
  s.get_vector("reset_upper", p.reset_upper);
  s.get("reset_yaw", p.reset_yaw);
  s.finish();
}

void parse_linear(Section s, LinearParams& p) {
  int n = 6;
  int m = 2;
  std::uint64_t seed = 0;
  double radius = 0.9;
  s.get("n", n);
  s.get("m", m);
  s.get("seed", seed);
  s.get("radius", radius);
  if (n < 1 || m < 1) throw ConfigError("linear: n and m must be positive");
  const LinearParams generated = random_stable_linear(n, m, seed, radius);
  p.A = generated.A;
  p.B = generated.B;
  s.get_matrix("A", p.A);
  s.get_matrix("B", p.B);
  s.get("state_bound", p.state_bound);
  s.get("input_bound", p.input_bound);
  s.get("reset_bound", p.reset_bound);
  s.finish();
}

}  // namespace

std::filesystem::path ExperimentConfig::dataset_file() const {
  return dataset_path.empty() ? output_dir / "dataset.csv" : dataset_path;
}

std::filesystem::path ExperimentConfig::model_file() const {
  return model_path.empty() ? output_dir / "model.json" : model_path;
}

void ExperimentConfig::validate() const {
  std::shared_ptr<Plant> p;
  try {
    p = make_plant(plant);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (collect.num_samples < 1 || collect.episode_length < 1) {
    throw ConfigError("collect: num_samples and episode_length must be positive");
  }
  try {
    train.validate();
    make_architecture(*this, *p).validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (mppi.input_dim() != p->input_dim()) throw ConfigError("mppi: input dimension mismatch");
  mppi.validate();
  if (episode.max_steps < 1 || episode.num_trials < 1) {
    throw ConfigError("episode: max_steps and num_trials must be positive");
  }
  if (episode.hold_steps < 1) throw ConfigError("episode: hold_steps must be positive");
  check_backend_name(episode.backend);
  for (const Vector& x0 : episode.initial_states) {
    if (x0.size() != p->state_dim()) throw ConfigError("episode: initial state has the wrong dimension");
  }
  if (episode.initial_states.empty()) {
    if (plant.kind != "quadruped") throw ConfigError("episode: no initial state given");
    if (episode.start_pose.size() != 3 || episode.pose_spread.size() != 3) {
      throw ConfigError("episode: start_pose and pose_spread need 3 entries (x, y, theta)");
    }
  }
  if (!episode.trial_seeds.empty() &&
      static_cast<int>(episode.trial_seeds.size()) < episode.num_trials) {
    throw ConfigError("episode: fewer trial_seeds than num_trials");
  }
  if (bench.warmup_steps < 0 || bench.measured_steps < 1) {
    throw ConfigError("bench: warmup_steps must be >= 0 and measured_steps >= 1");
  }
  for (const std::string& b : bench.backends) check_backend_name(b);
}

ExperimentConfig config_from_string(const std::string& text) {
  json root;
  try {
    root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  Section top(root, "config");
  ExperimentConfig cfg;
  top.get("plant", cfg.plant.kind);
  apply_plant_defaults(cfg);

  top.get("seed", cfg.seed);
  cfg.collect.seed = cfg.seed;
  cfg.train_seed = cfg.seed;
  cfg.mppi.seed = cfg.seed;

  if (top.has("pendulum")) parse_pendulum(top.child("pendulum"), cfg.plant.pendulum);
  if (top.has("boat")) parse_boat(top.child("boat"), cfg.plant.boat);
  if (top.has("quadruped")) parse_quadruped(top.child("quadruped"), cfg.plant.quadruped);
  if (cfg.plant.kind == "linear") {
    parse_linear(top.has("linear") ? top.child("linear") : Section(json::object(), "config.linear"),
                 cfg.plant.linear);
  } else if (top.has("linear")) {
    parse_linear(top.child("linear"), cfg.plant.linear);
  }
  std::shared_ptr<Plant> plant;
  try {
    plant = make_plant(cfg.plant);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  const int m = plant->input_dim();
  if (cfg.plant.kind == "linear") {
    cfg.mppi.sigma = Matrix::Identity(m, m);
    cfg.episode.initial_states = {Vector::Constant(plant->state_dim(), cfg.plant.linear.reset_bound)};
  }

  if (top.has("collect")) {
    Section s = top.child("collect");
    s.get("num_samples", cfg.collect.num_samples);
    s.get("episode_length", cfg.collect.episode_length);
    s.get("seed", cfg.collect.seed);
    s.finish();
  }
  if (top.has("lifting")) {
    Section s = top.child("lifting");
    s.get("hidden_sizes", cfg.lifting.hidden_sizes);
    s.get("lift_dim", cfg.lifting.lift_dim);
    s.get("append_state", cfg.lifting.append_state);
    s.get("append_constant", cfg.lifting.append_constant);
    s.finish();
  }
  if (top.has("train")) {
    Section s = top.child("train");
    DkoTrainConfig& t = cfg.train;
    s.get("epochs", t.epochs);
    s.get("minibatch_size", t.minibatch_size);
    s.get("learning_rate", t.adam.learning_rate);
    s.get("beta1", t.adam.beta1);
    s.get("beta2", t.adam.beta2);
    s.get("adam_epsilon", t.adam.epsilon);
    s.get("validation_fraction", t.validation_fraction);
    s.get("refit_cadence", t.refit_cadence);
    s.get("pinv_tolerance", t.pinv_tolerance);
    s.get("normalize_inputs", t.normalize_inputs);
    s.get("seed", cfg.train_seed);
    s.finish();
  }
  cfg.mppi.input_bounds = plant->input_bounds();
  if (top.has("mppi")) {
    Section s = top.child("mppi");
    MppiConfig& mp = cfg.mppi;
    s.get("horizon", mp.horizon);
    s.get("num_rollouts", mp.num_rollouts);
    s.get_matrix("sigma", mp.sigma, m);
    s.get("lambda", mp.lambda);
    s.get("adaptive_lambda", mp.adaptive_lambda);
    s.get("kappa", mp.kappa);
    if (s.has("gamma")) {
      json g;
      s.get("gamma", g);
      if (g.is_null()) {
        mp.gamma.reset();
      } else if (g.is_number()) {
        mp.gamma = g.get<double>();
      } else {
        throw ConfigError("config.mppi.gamma: expected a number or null");
      }
    }
    s.get("nu", mp.nu);
    s.get_matrix("R", mp.R, m);
    std::string mode = mp.cost_mode == ControlCostMode::kSigma ? "sigma" : "quadratic_r";
    s.get("cost_mode", mode);
    if (mode == "sigma") {
      mp.cost_mode = ControlCostMode::kSigma;
    } else if (mode == "quadratic_r") {
      mp.cost_mode = ControlCostMode::kQuadraticR;
    } else {
      throw ConfigError("config.mppi.cost_mode: expected sigma or quadratic_r");
    }
    s.get("smoothing", mp.smoothing);
    s.get("smoothing_window", mp.smoothing_window);
    s.get("smoothing_order", mp.smoothing_order);
    s.get("terminal_weight", mp.terminal_weight);
    std::string tail = mp.tail_init == TailInit::kHoldLast ? "hold_last" : "zero";
    s.get("tail_init", tail);
    if (tail == "hold_last") {
      mp.tail_init = TailInit::kHoldLast;
    } else if (tail == "zero") {
      mp.tail_init = TailInit::kZero;
    } else {
      throw ConfigError("config.mppi.tail_init: expected hold_last or zero");
    }
    s.get("seed", mp.seed);
    s.finish();
  }
  if (top.has("episode")) {
    Section s = top.child("episode");
    EpisodeSpec& ep = cfg.episode;
    s.get("max_steps", ep.max_steps);
    s.get("num_trials", ep.num_trials);
    s.get("trial_seeds", ep.trial_seeds);
    if (s.has("initial_state") && s.has("initial_states")) {
      throw ConfigError("config.episode: give initial_state or initial_states, not both");
    }
    if (s.has("initial_state")) {
      Vector x0;
      s.get_vector("initial_state", x0);
      ep.initial_states = {x0};
    }
    if (s.has("initial_states")) {
      Matrix rows;
      s.get_matrix("initial_states", rows);
      ep.initial_states.clear();
      for (Eigen::Index i = 0; i < rows.rows(); ++i) ep.initial_states.push_back(rows.row(i).transpose());
    }
    s.get_vector("start_pose", ep.start_pose);
    s.get_vector("pose_spread", ep.pose_spread);
    if (s.has("start_pose") && !s.has("initial_state") && !s.has("initial_states")) {
      ep.initial_states.clear();
    }
    s.get("backend", ep.backend);
    std::string rule = rule_name(ep.success_rule);
    s.get("success_rule", rule);
    ep.success_rule = parse_rule(rule);
    s.get("hold_steps", ep.hold_steps);
    s.get("stop_on_success", ep.stop_on_success);
    s.finish();
  }
  if (top.has("bench")) {
    Section s = top.child("bench");
    s.get("warmup_steps", cfg.bench.warmup_steps);
    s.get("measured_steps", cfg.bench.measured_steps);
    s.get("backends", cfg.bench.backends);
    s.finish();
  }
  std::string path;
  if (top.has("output_dir")) {
    top.get("output_dir", path);
    cfg.output_dir = path;
  }
  if (top.has("dataset")) {
    top.get("dataset", path);
    cfg.dataset_path = path;
  }
  if (top.has("model")) {
    top.get("model", path);
    cfg.model_path = path;
  }
  top.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_string(ss.str());
}

std::string config_to_string(const ExperimentConfig& cfg) {
  ordered_json j;
  j["plant"] = cfg.plant.kind;
  j["seed"] = cfg.seed;
  const PlantSpec& ps = cfg.plant;
  if (ps.kind == "pendulum") {
    const PendulumParams& p = ps.pendulum;
    j["pendulum"] = {{"gravity", p.gravity},     {"mass", p.mass},
                     {"length", p.length},       {"dt", p.dt},
                     {"max_speed", p.max_speed}, {"max_torque", p.max_torque},
                     {"clamp_speed", p.clamp_speed}, {"wrap_angle", p.wrap_angle},
                     {"reset_speed", p.reset_speed}, {"goal_angle_tol", p.goal_angle_tol},
                     {"goal_speed_tol", p.goal_speed_tol}};
  } else if (ps.kind == "boat") {
    const Boat boat(ps.boat);
    const BoatParams& p = boat.params();
    j["boat"] = {{"M", matrix_json(p.M)},
                 {"dt", p.dt},
                 {"goal", vector_json(p.goal)},
                 {"state_lower", vector_json(p.state_lower)},
                 {"state_upper", vector_json(p.state_upper)},
                 {"reset_position", p.reset_position},
                 {"reset_velocity", vector_json(p.reset_velocity)},
                 {"goal_position_tol", p.goal_position_tol}};
  } else if (ps.kind == "quadruped") {
    const Quadruped quad(ps.quadruped);
    const QuadrupedParams& p = quad.params();
    j["quadruped"] = {{"mass", p.mass},
                      {"inertia_zz", p.inertia_zz},
                      {"com_height", p.com_height},
                      {"dt", p.dt},
                      {"goal", vector_json(p.goal)},
                      {"success_threshold", p.success_threshold},
                      {"state_lower", vector_json(p.state_lower)},
                      {"state_upper", vector_json(p.state_upper)},
                      {"reset_lower", vector_json(p.reset_lower)},
                      {"reset_upper", vector_json(p.reset_upper)},
                      {"reset_yaw", p.reset_yaw}};
  } else if (ps.kind == "linear") {
    const LinearParams& p = ps.linear;
    j["linear"] = {{"A", matrix_json(p.A)},
                   {"B", matrix_json(p.B)},
                   {"state_bound", p.state_bound},
                   {"input_bound", p.input_bound},
                   {"reset_bound", p.reset_bound}};
  }
  j["collect"] = {{"num_samples", cfg.collect.num_samples},
                  {"episode_length", cfg.collect.episode_length},
                  {"seed", cfg.collect.seed}};
  j["lifting"] = {{"hidden_sizes", cfg.lifting.hidden_sizes},
                  {"lift_dim", cfg.lifting.lift_dim},
                  {"append_state", cfg.lifting.append_state},
                  {"append_constant", cfg.lifting.append_constant}};
  const DkoTrainConfig& t = cfg.train;
  j["train"] = {{"epochs", t.epochs},
                {"minibatch_size", t.minibatch_size},
                {"learning_rate", t.adam.learning_rate},
                {"beta1", t.adam.beta1},
                {"beta2", t.adam.beta2},
                {"adam_epsilon", t.adam.epsilon},
                {"validation_fraction", t.validation_fraction},
                {"refit_cadence", t.refit_cadence},
                {"pinv_tolerance", t.pinv_tolerance},
                {"normalize_inputs", t.normalize_inputs},
                {"seed", cfg.train_seed}};
  const MppiConfig& mp = cfg.mppi;
  ordered_json mj;
  mj["horizon"] = mp.horizon;
  mj["num_rollouts"] = mp.num_rollouts;
  mj["sigma"] = matrix_json(mp.sigma);
  mj["lambda"] = mp.lambda;
  mj["adaptive_lambda"] = mp.adaptive_lambda;
  mj["kappa"] = mp.kappa;
  mj["gamma"] = mp.gamma ? ordered_json(*mp.gamma) : ordered_json(nullptr);
  mj["nu"] = mp.nu;
  if (mp.R.size() != 0) mj["R"] = matrix_json(mp.R);
  mj["cost_mode"] = mp.cost_mode == ControlCostMode::kSigma ? "sigma" : "quadratic_r";
  mj["smoothing"] = mp.smoothing;
  mj["smoothing_window"] = mp.smoothing_window;
  mj["smoothing_order"] = mp.smoothing_order;
  mj["terminal_weight"] = mp.terminal_weight;
  mj["tail_init"] = mp.tail_init == TailInit::kHoldLast ? "hold_last" : "zero";
  mj["seed"] = mp.seed;
  j["mppi"] = mj;

  const EpisodeSpec& ep = cfg.episode;
  ordered_json ej;
  ej["max_steps"] = ep.max_steps;
  ej["num_trials"] = ep.num_trials;
  ej["trial_seeds"] = ep.trial_seeds;
  if (!ep.initial_states.empty()) {
    ordered_json rows = ordered_json::array();
    for (const Vector& x0 : ep.initial_states) rows.push_back(vector_json(x0));
    ej["initial_states"] = rows;
  }
  if (ep.start_pose.size() != 0) ej["start_pose"] = vector_json(ep.start_pose);
  if (ep.pose_spread.size() != 0) ej["pose_spread"] = vector_json(ep.pose_spread);
  ej["backend"] = ep.backend;
  ej["success_rule"] = rule_name(ep.success_rule);
  ej["hold_steps"] = ep.hold_steps;
  ej["stop_on_success"] = ep.stop_on_success;
  j["episode"] = ej;
  j["bench"] = {{"warmup_steps", cfg.bench.warmup_steps},
                {"measured_steps", cfg.bench.measured_steps},
                {"backends", cfg.bench.backends}};
  j["output_dir"] = cfg.output_dir.string();
  if (!cfg.dataset_path.empty()) j["dataset"] = cfg.dataset_path.string();
  if (!cfg.model_path.empty()) j["model"] = cfg.model_path.string();
  return j.dump(2) + "\n";
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.collect.seed = *o.seed;
    cfg.train_seed = *o.seed;
    cfg.mppi.seed = *o.seed;
  }
  if (o.out) cfg.output_dir = *o.out;
  if (o.model) cfg.model_path = *o.model;
  if (o.backend) {
    check_backend_name(*o.backend);
    cfg.episode.backend = *o.backend;
  }
}

std::shared_ptr<Plant> make_plant(const PlantSpec& spec) {
  if (spec.kind == "pendulum") return std::make_shared<Pendulum>(spec.pendulum);
  if (spec.kind == "boat") return std::make_shared<Boat>(spec.boat);
  if (spec.kind == "quadruped") return std::make_shared<Quadruped>(spec.quadruped);
  if (spec.kind == "linear") return std::make_shared<LinearPlant>(spec.linear);
  throw ConfigError("unknown plant '" + spec.kind + "'");
}

LiftingArchitecture make_architecture(const ExperimentConfig& cfg, const Plant& plant) {
  const int n = plant.learned_dim();
  if (cfg.lifting.lift_dim == 0) {
    if (!cfg.lifting.append_state) throw ConfigError("lifting: lift_dim 0 requires append_state");
    return LiftingArchitecture::identity(n);
  }
  LiftingArchitecture arch = LiftingArchitecture::mlp(n, cfg.lifting.hidden_sizes, cfg.lifting.lift_dim);
  arch.append_state = cfg.lifting.append_state;
  arch.append_constant = cfg.lifting.append_constant;
  return arch;
}

std::shared_ptr<RolloutBackend> make_backend(const std::string& name,
                                             std::shared_ptr<const Plant> plant,
                                             std::shared_ptr<const KoopmanModel> model) {
  if (name == "true") return std::make_shared<TrueBackend>(std::move(plant));
  if (!model) throw ConfigError("backend '" + name + "' needs a model file");
  if (name == "dk") return std::make_shared<KoopmanBackend>(std::move(plant), std::move(model));
  if (name == "relift") return std::make_shared<ReliftBackend>(std::move(plant), std::move(model));
  throw ConfigError("unknown backend '" + name + "'");
}

std::uint64_t trial_seed(const ExperimentConfig& cfg, int trial) {
  if (!cfg.episode.trial_seeds.empty()) return cfg.episode.trial_seeds.at(static_cast<std::size_t>(trial));
  return cfg.mppi.seed + static_cast<std::uint64_t>(trial);
}

std::vector<Vector> trial_initial_states(const ExperimentConfig& cfg, const Plant& plant) {
  const EpisodeSpec& ep = cfg.episode;
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(ep.num_trials));
  if (!ep.initial_states.empty()) {
    for (int i = 0; i < ep.num_trials; ++i) {
      out.push_back(ep.initial_states[static_cast<std::size_t>(i) % ep.initial_states.size()]);
    }
    return out;
  }
  const auto* quad = dynamic_cast<const Quadruped*>(&plant);
  if (!quad) throw ConfigError("episode: pose-based starts are only defined for the quadruped");
  // Poses are drawn from the episode seed so they stay fixed when only the
  // controller seeds change.
  const std::uint64_t stream = numerics::stream_id({cfg.seed, 0x5747A27ULL, 0});
  std::uint64_t counter = 0;
  for (int i = 0; i < ep.num_trials; ++i) {
    double pose[3];
    for (int k = 0; k < 3; ++k) {
      const double r = numerics::counter_uniform(stream, counter++);
      pose[k] = ep.start_pose(k) + (2.0 * r - 1.0) * ep.pose_spread(k);
    }
    out.push_back(quad->state_from_pose(pose[0], pose[1], pose[2]));
  }
  return out;
}

}  // namespace mppidk
