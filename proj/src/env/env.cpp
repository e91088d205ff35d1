#include "uavsim/env/env.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace uavsim::env {

using nn::Tensor;

double deterrence_ratio(const EpisodeStats& stats) {
  if (stats.total_potential == 0) return 0.0;
  return static_cast<double>(stats.total_deterred) /
         static_cast<double>(stats.total_potential);
}

CrimeEnv::CrimeEnv(EnvConfig config, std::vector<crime::CrimeEvent> events,
                   std::shared_ptr<const predictor::PredictorModel> model)
    : config_(std::move(config)), model_(std::move(model)) {
  if (!model_) throw ConfigError("env requires a predictor model");
  if (model_->config().block_count != config_.world.block_count)
    throw ConfigError("predictor block count does not match world config");
  config_.world.validate();
  grid_ = world::build_grid(config_.world);

  const auto buckets =
      crime::friday_buckets(config_.replay_year, config_.replay_year);
  cycles_.assign(buckets.size(), {});
  for (const crime::CrimeEvent& e : events) {
    const auto bucket = crime::bucket_index(e.timestamp, buckets, config_.window);
    if (!bucket) continue;
    if (e.block_id >= config_.world.block_count)
      throw DataError("event block id outside world block count");
    cycles_[*bucket].spatial.push_back(
        {{e.x_m, e.y_m}, e.severity == crime::Severity::Major});
    cycles_[*bucket].block_ids.push_back(e.block_id);
  }

  episode_cycles_ = config_.episode_cycles == 0 ? cycles_.size()
                                                : config_.episode_cycles;
  if (episode_cycles_ < 1 || episode_cycles_ > cycles_.size())
    throw ConfigError("episode_cycles outside the replay year");
  history_ = Tensor::zeros(
      {model_->config().window_len, config_.world.block_count});
}

Tensor CrimeEnv::observe() const {
  return model_->predict(history_);
}

Tensor CrimeEnv::reset(std::uint64_t /*seed*/) {
  cycle_ = 0;
  done_ = false;
  started_ = true;
  stats_ = {};
  last_assignments_.clear();
  // History starts from the empty (all-zero) preceding period.
  for (double& v : history_.data) v = 0.0;
  return observe();
}

EnvStep CrimeEnv::step(const ActionVector& action) {
  if (!started_) throw StateError("step before reset");
  if (done_) throw StateError("step after episode end");
  if (action.size() != uav_total())
    throw DataError("action length must equal uav_total");
  for (const ActionEntry& a : action)
    if (a.cell_index >= grid_.size())
      throw DataError("action cell index outside grid");

  last_assignments_.clear();
  for (std::size_t u = 0; u < action.size(); ++u)
    last_assignments_.push_back({u, action[u].cell_index, action[u].role});

  const CycleEvents& cycle = cycles_[cycle_];
  const auto conn =
      world::connectivity(last_assignments_, grid_, config_.world);
  const std::size_t deterred = world::deterred_count(
      cycle.spatial, last_assignments_, grid_, config_.world);
  const auto sensed = world::sensed_events(cycle.spatial, last_assignments_,
                                           conn, grid_, config_.world);

  EnvStep result;
  result.info.deterred = deterred;
  result.info.sensed_misdemeanors = sensed.size();
  result.info.comm_edges = conn.edges.size();
  for (std::size_t i = 0; i < last_assignments_.size(); ++i)
    if (last_assignments_[i].role == world::Role::Sensing &&
        conn.reachable[i])
      ++result.info.reachable_sensors;
  for (const world::SpatialEvent& e : cycle.spatial) {
    if (e.major)
      ++result.info.potential_majors;
    else
      ++result.info.misdemeanors;
  }

  // Shift the history window and append this cycle's sensed block counts
  // (events no sensor captured contribute zero).
  const std::size_t window = history_.dim(0), B = history_.dim(1);
  for (std::size_t t = 0; t + 1 < window; ++t)
    for (std::size_t b = 0; b < B; ++b)
      history_.at(t, b) = history_.at(t + 1, b);
  for (std::size_t b = 0; b < B; ++b) history_.at(window - 1, b) = 0.0;
  for (std::size_t idx : sensed)
    history_.at(window - 1, cycle.block_ids[idx]) += 1.0;

  result.reward = static_cast<double>(deterred);
  stats_.cycles += 1;
  stats_.total_deterred += deterred;
  stats_.total_potential += result.info.potential_majors;
  stats_.total_sensed += sensed.size();

  ++cycle_;
  done_ = cycle_ >= episode_cycles_;
  result.done = done_;
  result.observation = observe();
  return result;
}

void write_episode_log(const std::filesystem::path& path,
                       const std::vector<EpisodeLogRow>& rows) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << "cycle,reward,deterred,potential,sensed\n";
    for (const EpisodeLogRow& r : rows) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%zu,%.12g,%zu,%zu,%zu\n", r.cycle,
                    r.reward, r.deterred, r.potential, r.sensed);
      out << buf;
    }
  }
  std::filesystem::rename(tmp, path);
}

namespace {
nlohmann::json tensor_json(const Tensor& t) {
  return nlohmann::json(t.data);
}
}  // namespace

void run_env_protocol(std::istream& in, std::ostream& out, CrimeEnv& env) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json reply;
    try {
      const nlohmann::json msg = nlohmann::json::parse(line);
      const std::string cmd = msg.at("cmd").get<std::string>();
      if (cmd == "reset") {
        const auto obs = env.reset(msg.value("seed", 0ULL));
        reply["observation"] = tensor_json(obs);
      } else if (cmd == "step") {
        ActionVector action;
        for (const auto& entry : msg.at("action")) {
          action.push_back({entry.at(0).get<std::size_t>(),
                            world::role_from_string(
                                entry.at(1).get<std::string>())});
        }
        const EnvStep step = env.step(action);
        reply["observation"] = tensor_json(step.observation);
        reply["reward"] = step.reward;
        reply["done"] = step.done;
        reply["info"] = {
            {"potential_majors", step.info.potential_majors},
            {"deterred", step.info.deterred},
            {"sensed", step.info.sensed_misdemeanors},
            {"reachable_sensors", step.info.reachable_sensors},
            {"comm_edges", step.info.comm_edges},
        };
      } else if (cmd == "render") {
        reply["cycle"] = env.current_cycle();
        nlohmann::json assignments = nlohmann::json::array();
        for (const auto& a : env.last_assignments())
          assignments.push_back(
              {a.uav_id, a.cell_index, world::to_string(a.role)});
        reply["assignments"] = assignments;
      } else if (cmd == "quit") {
        out << nlohmann::json({{"ok", true}}).dump() << "\n";
        break;
      } else {
        reply["error"] = "unknown cmd: " + cmd;
      }
    } catch (const std::exception& e) {
      reply = nlohmann::json{{"error", e.what()}};
    }
    out << reply.dump() << "\n";
    out.flush();
  }
}

}  // namespace uavsim::env
