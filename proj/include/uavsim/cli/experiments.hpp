#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "uavsim/di/di.hpp"
#include "uavsim/env/env.hpp"
#include "uavsim/ppo/ppo.hpp"

namespace uavsim::cli {

enum class ExperimentKind {
  IngestData,
  TrainPredictor,
  TrainPolicy,
  EvalDeterrenceSweep,
  RandomBaseline,
  DiTrain,
  DiSweep,
};

// Reads and parses a JSON config file (IoError / ConfigError).
nlohmann::json load_config(const std::filesystem::path& path);

// ---- config section parsers (all throw ConfigError on bad input) ------
world::WorldConfig parse_world_config(const nlohmann::json& j);
crime::WindowFilter parse_window_filter(const nlohmann::json& j);
env::EnvConfig parse_env_config(const nlohmann::json& j);
predictor::PredictorConfig parse_predictor_config(const nlohmann::json& j);
ppo::PpoConfig parse_ppo_config(const nlohmann::json& j);
di::DiTrainConfig parse_di_train_config(const nlohmann::json& j);

// ---- synthetic crime data ---------------------------------------------
// Deterministic generator of a canonical-year crime dataset on a
// rectangular block tiling: weekly Friday-evening event counts drawn per
// block from configurable weights, positions clustered around block
// centroids, severity Bernoulli.
struct SynthCrimeConfig {
  int year = 2016;
  crime::BlockGrid blocks;
  std::vector<double> block_weights;  // empty = uniform over blocks
  double events_per_week = 30.0;
  double major_fraction = 0.5;
  // Position spread around the block centroid as a fraction of block size;
  // <= 0 places events uniformly inside the block.
  double cluster_sigma_frac = 0.25;
  unsigned window_start_minute = 19 * 60;
  unsigned window_end_minute = 24 * 60;
};
SynthCrimeConfig parse_synth_config(const nlohmann::json& j);
std::vector<crime::CrimeEvent> generate_synthetic_events(
    const SynthCrimeConfig& config, std::uint64_t seed);

// ---- policy <-> crime-env adapter -------------------------------------
// Exposes CrimeEnv through the trainer interface: two heads per UAV
// (cell over the placement grid, then role), interleaved.
class CrimeRolloutEnv : public ppo::RolloutEnv {
 public:
  explicit CrimeRolloutEnv(env::CrimeEnv& env) : env_(env) {}

  nn::Tensor reset(std::uint64_t seed) override { return env_.reset(seed); }
  Out step(const ppo::Action& action) override;
  std::size_t obs_dim() const override { return env_.block_count(); }
  std::vector<std::size_t> head_sizes() const override;

  static env::ActionVector to_env_action(const ppo::Action& action,
                                         std::size_t uav_total);

 private:
  env::CrimeEnv& env_;
};

// ---- deterrence sweeps -------------------------------------------------
struct SweepTrialRow {
  double range_m;
  std::size_t trial;
  std::size_t deterred;
  std::size_t potential;
  double ratio;
};
void write_sweep_rows(const std::filesystem::path& path,
                      const std::vector<SweepTrialRow>& rows);

// Per range and trial, replays one full episode with actions sampled from
// the policy. Trial t uses the same action stream at every range, so the
// deterred count is non-decreasing in range.
std::vector<SweepTrialRow> run_policy_sweep(
    const std::function<env::CrimeEnv(double range_m)>& make_env,
    ppo::PolicyNetwork& policy, const std::vector<double>& ranges,
    std::size_t trials, std::uint64_t seed);

// Random baseline: every UAV in the deterrence role on a uniformly random
// grid cell each cycle. Trial t reuses its placement stream at every range.
std::vector<SweepTrialRow> run_random_baseline(
    const std::function<env::CrimeEnv(double range_m)>& make_env,
    const std::vector<double>& ranges, std::size_t trials,
    std::uint64_t seed);

// ---- plot data ---------------------------------------------------------
struct PlotRow {
  double range_m;
  double mean_ratio;
  double stderr_ratio;
  std::size_t n;
};
std::vector<PlotRow> summarize_sweep(const std::vector<SweepTrialRow>& rows);
// Reads a sweep CSV and writes per-range mean/stderr columns
// (range_m, mean_ratio, stderr, n). Returns the rows written.
std::vector<PlotRow> emit_plotdata(const std::filesystem::path& sweep_csv,
                                   const std::filesystem::path& out_csv);

// ---- subcommand drivers ------------------------------------------------
// Each validates its config fully, then writes artifacts under out_dir.
// Errors are reported by exception; nothing is written on config errors.
void cmd_ingest(const nlohmann::json& cfg, std::uint64_t seed,
                const std::filesystem::path& out_dir);
void cmd_train_predictor(const nlohmann::json& cfg, std::uint64_t seed,
                         const std::filesystem::path& out_dir);
void cmd_train_policy(const nlohmann::json& cfg, std::uint64_t seed,
                      const std::filesystem::path& out_dir);
void cmd_eval_sweep(const nlohmann::json& cfg, std::uint64_t seed,
                    const std::filesystem::path& out_dir, std::size_t trials);
void cmd_baseline(const nlohmann::json& cfg, std::uint64_t seed,
                  const std::filesystem::path& out_dir, std::size_t trials);
void cmd_di_train(const nlohmann::json& cfg, std::uint64_t seed,
                  const std::filesystem::path& out_dir);
void cmd_di_sweep(const nlohmann::json& cfg, std::uint64_t seed,
                  const std::filesystem::path& out_dir);
// Serves the newline-delimited JSON environment protocol over the streams.
void cmd_env_stdio(const nlohmann::json& cfg, std::istream& in,
                   std::ostream& out);

}  // namespace uavsim::cli
