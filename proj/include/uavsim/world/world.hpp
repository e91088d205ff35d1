#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "uavsim/common.hpp"

namespace uavsim::world {

enum class Role { Sensing, Computing, Deterrence };

Role role_from_string(const std::string& name);
std::string to_string(Role role);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point a, Point b);

// Geometry and radio ranges for one deployment area. Units: meters.
struct WorldConfig {
  Point station_xy{0.0, 0.0};
  double placement_radius_m = 2500.0;
  double grid_spacing_m = 50.0;
  double comm_range_m = 500.0;
  double sensing_range_m = 100.0;
  double deterrence_range_m = 320.0;
  std::size_t uav_total = 20;
  std::size_t block_count = 12;

  void validate() const;
};

// One UAV's decision for a control cycle: a placement cell and a role.
struct UavAssignment {
  std::size_t uav_id = 0;
  std::size_t cell_index = 0;
  Role role = Role::Deterrence;
};

// Timestamp-free view of a crime event as the world sees it in one cycle.
struct SpatialEvent {
  Point position;
  bool major = false;
};

// Axis-aligned lattice of candidate placement cells, spacing
// grid_spacing_m, restricted to the placement disk around the station.
// Row-major order (y increasing, then x), deterministic.
std::vector<Point> build_grid(const WorldConfig& config);

struct ConnectivityResult {
  // Undirected comm-range edges between deployed UAVs, i < j.
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  // Per assignment: true iff a multi-hop path reaches a computing UAV.
  // Computing UAVs are trivially reachable; meaningful for sensing UAVs.
  std::vector<bool> reachable;
};

// BFS from all computing UAVs over the distance-<=comm_range graph.
ConnectivityResult connectivity(const std::vector<UavAssignment>& assignments,
                                const std::vector<Point>& grid,
                                const WorldConfig& config);

// Indices (into events) of misdemeanors within sensing range of at least
// one sensing UAV that can reach a computing UAV. Majors are never sensed.
std::vector<std::size_t> sensed_events(
    const std::vector<SpatialEvent>& events,
    const std::vector<UavAssignment>& assignments,
    const ConnectivityResult& connectivity, const std::vector<Point>& grid,
    const WorldConfig& config);

// Number of major events within deterrence range of at least one
// deterrence-role UAV; each event counted at most once. Range comparisons
// are inclusive.
std::size_t deterred_count(const std::vector<SpatialEvent>& events,
                           const std::vector<UavAssignment>& assignments,
                           const std::vector<Point>& grid,
                           const WorldConfig& config);

// Assignment audit CSV: header uav_id,cell_index,role.
void write_assignments_csv(const std::filesystem::path& path,
                           const std::vector<UavAssignment>& assignments);
std::vector<UavAssignment> read_assignments_csv(
    const std::filesystem::path& path);

}  // namespace uavsim::world
