#include "uavsim/world/world.hpp"

#include <cmath>
#include <deque>
#include <fstream>

namespace uavsim::world {

Role role_from_string(const std::string& name) {
  if (name == "sensing") return Role::Sensing;
  if (name == "computing") return Role::Computing;
  if (name == "deterrence") return Role::Deterrence;
  throw ConfigError("unknown role: " + name);
}

std::string to_string(Role role) {
  switch (role) {
    case Role::Sensing: return "sensing";
    case Role::Computing: return "computing";
    case Role::Deterrence: return "deterrence";
  }
  throw ConfigError("bad role enum");
}

double distance(Point a, Point b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

void WorldConfig::validate() const {
  if (placement_radius_m <= 0 || grid_spacing_m <= 0 || comm_range_m <= 0 ||
      sensing_range_m <= 0 || deterrence_range_m <= 0)
    throw ConfigError("world ranges must be positive");
  if (uav_total < 1) throw ConfigError("uav_total must be >= 1");
  if (block_count < 1) throw ConfigError("block_count must be >= 1");
}

std::vector<Point> build_grid(const WorldConfig& config) {
  config.validate();
  const long n = static_cast<long>(
      std::floor(config.placement_radius_m / config.grid_spacing_m));
  std::vector<Point> cells;
  for (long iy = -n; iy <= n; ++iy) {
    for (long ix = -n; ix <= n; ++ix) {
      const Point p{config.station_xy.x + static_cast<double>(ix) * config.grid_spacing_m,
                    config.station_xy.y + static_cast<double>(iy) * config.grid_spacing_m};
      if (distance(p, config.station_xy) <= config.placement_radius_m)
        cells.push_back(p);
    }
  }
  if (cells.empty()) throw ConfigError("placement grid has zero cells");
  return cells;
}

namespace {
Point uav_position(const UavAssignment& a, const std::vector<Point>& grid) {
  if (a.cell_index >= grid.size())
    throw ConfigError("assignment references cell outside grid");
  return grid[a.cell_index];
}
}  // namespace

ConnectivityResult connectivity(const std::vector<UavAssignment>& assignments,
                                const std::vector<Point>& grid,
                                const WorldConfig& config) {
  const std::size_t n = assignments.size();
  std::vector<Point> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = uav_position(assignments[i], grid);

  ConnectivityResult result;
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (distance(pos[i], pos[j]) <= config.comm_range_m) {
        result.edges.emplace_back(i, j);
        adj[i].push_back(j);
        adj[j].push_back(i);
      }
    }
  }

  result.reachable.assign(n, false);
  std::deque<std::size_t> frontier;
  for (std::size_t i = 0; i < n; ++i) {
    if (assignments[i].role == Role::Computing) {
      result.reachable[i] = true;
      frontier.push_back(i);
    }
  }
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop_front();
    for (std::size_t v : adj[u]) {
      if (!result.reachable[v]) {
        result.reachable[v] = true;
        frontier.push_back(v);
      }
    }
  }
  return result;
}

std::vector<std::size_t> sensed_events(
    const std::vector<SpatialEvent>& events,
    const std::vector<UavAssignment>& assignments,
    const ConnectivityResult& conn, const std::vector<Point>& grid,
    const WorldConfig& config) {
  if (conn.reachable.size() != assignments.size())
    throw DimensionError("connectivity result does not match assignments");
  std::vector<Point> sensors;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i].role == Role::Sensing && conn.reachable[i])
      sensors.push_back(uav_position(assignments[i], grid));
  }

  std::vector<char> hit(events.size(), 0);
#pragma omp parallel for schedule(static)
  for (std::size_t e = 0; e < events.size(); ++e) {
    if (events[e].major) continue;
    for (const Point& s : sensors) {
      if (distance(events[e].position, s) <= config.sensing_range_m) {
        hit[e] = 1;
        break;
      }
    }
  }
  std::vector<std::size_t> captured;
  for (std::size_t e = 0; e < events.size(); ++e)
    if (hit[e]) captured.push_back(e);
  return captured;
}

std::size_t deterred_count(const std::vector<SpatialEvent>& events,
                           const std::vector<UavAssignment>& assignments,
                           const std::vector<Point>& grid,
                           const WorldConfig& config) {
  std::vector<Point> deterrents;
  for (const UavAssignment& a : assignments)
    if (a.role == Role::Deterrence)
      deterrents.push_back(uav_position(a, grid));

  std::size_t count = 0;
#pragma omp parallel for schedule(static) reduction(+ : count)
  for (std::size_t e = 0; e < events.size(); ++e) {
    if (!events[e].major) continue;
    for (const Point& d : deterrents) {
      if (distance(events[e].position, d) <= config.deterrence_range_m) {
        ++count;
        break;
      }
    }
  }
  return count;
}

void write_assignments_csv(const std::filesystem::path& path,
                           const std::vector<UavAssignment>& assignments) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << "uav_id,cell_index,role\n";
    for (const UavAssignment& a : assignments)
      out << a.uav_id << "," << a.cell_index << "," << to_string(a.role)
          << "\n";
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<UavAssignment> read_assignments_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("uav_id,cell_index,role", 0) != 0)
    throw DataError("bad assignments CSV header in " + path.string());
  std::vector<UavAssignment> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw DataError("bad assignments CSV row: " + line);
    UavAssignment a;
    a.uav_id = std::stoul(line.substr(0, c1));
    a.cell_index = std::stoul(line.substr(c1 + 1, c2 - c1 - 1));
    a.role = role_from_string(line.substr(c2 + 1));
    out.push_back(a);
  }
  return out;
}

}  // namespace uavsim::world
