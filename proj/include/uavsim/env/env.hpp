#pragma once

#include <iosfwd>
#include <memory>
#include <optional>

#include "uavsim/crime/crime.hpp"
#include "uavsim/predictor/predictor.hpp"
#include "uavsim/world/world.hpp"

namespace uavsim::env {

struct EnvConfig {
  world::WorldConfig world;
  crime::WindowFilter window;
  int replay_year = 2016;
  // 0 means one episode spans every weekly window of the replay year.
  std::size_t episode_cycles = 0;
};

struct ActionEntry {
  std::size_t cell_index = 0;
  world::Role role = world::Role::Deterrence;
};
// One sub-action per UAV; length must equal uav_total.
using ActionVector = std::vector<ActionEntry>;

struct StepInfo {
  std::size_t potential_majors = 0;
  std::size_t deterred = 0;
  std::size_t sensed_misdemeanors = 0;
  std::size_t misdemeanors = 0;
  std::size_t reachable_sensors = 0;
  std::size_t comm_edges = 0;
};

struct EnvStep {
  nn::Tensor observation;  // predicted per-block counts [B]
  double reward = 0.0;     // majors deterred this cycle
  bool done = false;
  StepInfo info;
};

struct EpisodeStats {
  std::size_t cycles = 0;
  std::size_t total_deterred = 0;
  std::size_t total_potential = 0;
  std::size_t total_sensed = 0;
};

// deterred / potential; 0 when there were no potential majors.
double deterrence_ratio(const EpisodeStats& stats);

// Episodic environment over a replayed (folded) year of crime events.
// Observations are the predictor's per-block forecasts of the next cycle,
// actions assign every UAV a (cell, role), reward is the number of major
// crimes inside deterrence range this cycle. The replay itself is
// deterministic; the env holds no RNG.
class CrimeEnv {
 public:
  CrimeEnv(EnvConfig config, std::vector<crime::CrimeEvent> events,
           std::shared_ptr<const predictor::PredictorModel> model);

  nn::Tensor reset(std::uint64_t seed);
  EnvStep step(const ActionVector& action);

  bool done() const { return done_; }
  const EpisodeStats& stats() const { return stats_; }
  const EnvConfig& config() const { return config_; }
  const std::vector<world::Point>& grid() const { return grid_; }
  std::size_t grid_size() const { return grid_.size(); }
  std::size_t block_count() const { return config_.world.block_count; }
  std::size_t uav_total() const { return config_.world.uav_total; }
  std::size_t cycles_per_episode() const { return episode_cycles_; }
  const std::vector<world::UavAssignment>& last_assignments() const {
    return last_assignments_;
  }
  std::size_t current_cycle() const { return cycle_; }

 private:
  nn::Tensor observe() const;

  EnvConfig config_;
  std::shared_ptr<const predictor::PredictorModel> model_;
  std::vector<world::Point> grid_;
  // Per weekly window: the cycle's events (with block ids for counting).
  struct CycleEvents {
    std::vector<world::SpatialEvent> spatial;
    std::vector<std::size_t> block_ids;
  };
  std::vector<CycleEvents> cycles_;
  std::size_t episode_cycles_ = 0;

  nn::Tensor history_;  // [window_len, B] sensed counts, oldest first
  std::size_t cycle_ = 0;
  bool done_ = true;
  bool started_ = false;
  EpisodeStats stats_;
  std::vector<world::UavAssignment> last_assignments_;
};

// Per-step episode log CSV: cycle,reward,deterred,potential,sensed.
struct EpisodeLogRow {
  std::size_t cycle;
  double reward;
  std::size_t deterred;
  std::size_t potential;
  std::size_t sensed;
};
void write_episode_log(const std::filesystem::path& path,
                       const std::vector<EpisodeLogRow>& rows);

// Newline-delimited JSON protocol over stdio so external policy tools can
// drive the environment:
//   {"cmd":"reset","seed":0}
//     -> {"observation":[...]}
//   {"cmd":"step","action":[[cell,"sensing"],...]}
//     -> {"observation":[...],"reward":r,"done":d,"info":{...}}
//   {"cmd":"render"} -> {"cycle":i,"assignments":[[uav,cell,"role"],...]}
//   {"cmd":"quit"}   -> terminates the loop
// Errors are reported as {"error":"..."} without terminating.
void run_env_protocol(std::istream& in, std::ostream& out, CrimeEnv& env);

}  // namespace uavsim::env
