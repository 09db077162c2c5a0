#include "mppidk/envs.hpp"
#include "mppidk/errors.hpp"

namespace mppidk {

namespace {

constexpr std::uint64_t kCollectDomain = 0xC011EC7ULL;
// Hard cap on consecutive discarded episodes before giving up.
constexpr std::size_t kMaxConsecutiveDiscards = 10000;

}  // namespace

CollectResult collect_dataset(const Plant& plant, const CollectConfig& cfg) {
  if (cfg.num_samples < 1) throw InvalidInput("collect_dataset: num_samples must be >= 1");
  if (cfg.episode_length < 1) throw InvalidInput("collect_dataset: episode_length must be >= 1");

  const Box& ubox = plant.input_bounds();
  const Box& xbox = plant.state_bounds();
  const Box lbox = plant.learned_bounds();
  const int m = plant.input_dim();
  const std::uint64_t stream = numerics::stream_id({cfg.seed, kCollectDomain, 0});
  std::uint64_t counter = 0;

  CollectResult result;
  TransitionDataset& data = result.dataset;
  data.states.resize(plant.learned_dim(), cfg.num_samples);
  data.inputs.resize(m, cfg.num_samples);
  data.next_states.resize(plant.learned_dim(), cfg.num_samples);
  data.state_bounds = lbox;
  data.input_bounds = ubox;

  // An episode writes past `filled` and is committed only if it completes, so
  // a discarded episode leaves no partial trace.
  Eigen::Index filled = 0;
  std::size_t consecutive_discards = 0;
  Vector u(m);
  while (filled < cfg.num_samples) {
    Vector x = plant.sample_reset(stream, counter);
    Eigen::Index cursor = filled;
    bool ok = xbox.contains(x) && lbox.contains(plant.learned_state(x));
    for (int k = 0; ok && k < cfg.episode_length && cursor < cfg.num_samples; ++k) {
      for (int i = 0; i < m; ++i) {
        const double r = numerics::counter_uniform(stream, counter++);
        u(i) = ubox.lower(i) + (ubox.upper(i) - ubox.lower(i)) * r;
      }
      Vector next;
      try {
        next = plant.step(x, u);
      } catch (const SimulationError&) {
        ok = false;
        break;
      }
      if (!xbox.contains(next)) {
        ok = false;
        break;
      }
      const Vector learned_next = plant.learned_successor(x, next);
      if (!lbox.contains(learned_next)) {
        ok = false;
        break;
      }
      data.states.col(cursor) = plant.learned_state(x);
      data.inputs.col(cursor) = u;
      data.next_states.col(cursor) = learned_next;
      ++cursor;
      x = std::move(next);
    }
    if (ok) {
      filled = cursor;
      consecutive_discards = 0;
    } else {
      ++result.discarded_episodes;
      if (++consecutive_discards > kMaxConsecutiveDiscards) {
        throw SimulationError("collect_dataset: plant keeps leaving its operating box");
      }
    }
  }
  data.validate();
  return result;
}

}  // namespace mppidk
