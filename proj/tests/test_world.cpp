#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "uavsim/rng.hpp"
#include "uavsim/world/world.hpp"

using namespace uavsim;
using namespace uavsim::world;

namespace {

WorldConfig small_config() {
  WorldConfig c;
  c.placement_radius_m = 1000.0;
  c.grid_spacing_m = 50.0;
  c.uav_total = 20;
  return c;
}

std::vector<UavAssignment> random_assignments(std::size_t count,
                                              std::size_t grid_size, Rng& rng) {
  std::vector<UavAssignment> out;
  for (std::size_t i = 0; i < count; ++i) {
    UavAssignment a;
    a.uav_id = i;
    a.cell_index = rng.uniform_int(grid_size);
    a.role = static_cast<Role>(rng.uniform_int(3));
    out.push_back(a);
  }
  return out;
}

// Dense transitive-closure oracle (Floyd-Warshall style).
std::vector<bool> closure_reachability(
    const std::vector<UavAssignment>& assignments,
    const std::vector<Point>& grid, const WorldConfig& config) {
  const std::size_t n = assignments.size();
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    reach[i][i] = true;
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && distance(grid[assignments[i].cell_index],
                             grid[assignments[j].cell_index]) <=
                        config.comm_range_m)
        reach[i][j] = true;
    }
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = true;

  std::vector<bool> to_computing(n, false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (reach[i][j] && assignments[j].role == Role::Computing)
        to_computing[i] = true;
  return to_computing;
}

}  // namespace

TEST_CASE("build_grid small disks") {
  WorldConfig c = small_config();
  c.placement_radius_m = 50.0;
  // origin plus one step along each axis
  CHECK(build_grid(c).size() == 5);

  // radius below one grid step keeps only the station cell
  WorldConfig station_only = small_config();
  station_only.placement_radius_m = 40.0;
  CHECK(build_grid(station_only).size() == 1);
}

TEST_CASE("build_grid equals brute-force lattice scan") {
  WorldConfig c = small_config();
  c.placement_radius_m = 1000.0;
  c.grid_spacing_m = 50.0;
  c.station_xy = {12.0, -7.0};
  const auto grid = build_grid(c);

  std::size_t expected = 0;
  for (long iy = -40; iy <= 40; ++iy)
    for (long ix = -40; ix <= 40; ++ix) {
      const double x = c.station_xy.x + 50.0 * static_cast<double>(ix);
      const double y = c.station_xy.y + 50.0 * static_cast<double>(iy);
      if (std::hypot(x - c.station_xy.x, y - c.station_xy.y) <= 1000.0)
        ++expected;
    }
  CHECK(grid.size() == expected);

  for (const Point& p : grid)
    CHECK(distance(p, c.station_xy) <= c.placement_radius_m);
}

TEST_CASE("build_grid rejects empty and invalid configs") {
  WorldConfig c = small_config();
  c.uav_total = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("connectivity direct edge and two-hop chain") {
  WorldConfig c = small_config();
  // grid cells at known positions via a custom lattice
  std::vector<Point> grid = {{0, 0}, {0, 400}, {0, 450}, {0, 900}};

  std::vector<UavAssignment> direct = {{0, 0, Role::Sensing},
                                       {1, 1, Role::Computing}};
  auto r1 = connectivity(direct, grid, c);
  CHECK(r1.reachable[0]);

  std::vector<UavAssignment> chain = {{0, 0, Role::Sensing},
                                      {1, 2, Role::Sensing},
                                      {2, 3, Role::Computing}};
  auto r2 = connectivity(chain, grid, c);
  CHECK(r2.reachable[0]);
  CHECK(r2.reachable[1]);

  std::vector<UavAssignment> isolated = {{0, 0, Role::Sensing},
                                         {1, 3, Role::Computing}};
  auto r3 = connectivity(isolated, grid, c);
  CHECK_FALSE(r3.reachable[0]);
}

TEST_CASE("connectivity equals transitive-closure oracle on random instances") {
  WorldConfig c = small_config();
  const auto grid = build_grid(c);
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Rng rng(seed + 5);
    const auto assignments = random_assignments(15, grid.size(), rng);
    const auto result = connectivity(assignments, grid, c);
    const auto oracle = closure_reachability(assignments, grid, c);
    for (std::size_t i = 0; i < assignments.size(); ++i)
      CHECK(result.reachable[i] == oracle[i]);
  }
}

TEST_CASE("sensed_events captures only connected misdemeanors") {
  WorldConfig c = small_config();
  std::vector<Point> grid = {{0, 0}, {0, 400}, {0, 2000}};
  std::vector<SpatialEvent> events = {
      {{0, 50}, false},    // near connected sensor
      {{0, 2050}, false},  // near disconnected sensor
      {{0, 50}, true},     // major, never sensed
  };

  std::vector<UavAssignment> assignments = {{0, 0, Role::Sensing},
                                            {1, 1, Role::Computing},
                                            {2, 2, Role::Sensing}};
  auto conn = connectivity(assignments, grid, c);
  auto captured = sensed_events(events, assignments, conn, grid, c);
  REQUIRE(captured.size() == 1);
  CHECK(captured[0] == 0);
}

TEST_CASE("sensed and deterred equal brute-force scans on random instances") {
  WorldConfig c = small_config();
  c.deterrence_range_m = 160.0;
  const auto grid = build_grid(c);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed * 3 + 9);
    const auto assignments = random_assignments(10, grid.size(), rng);
    std::vector<SpatialEvent> events;
    for (int e = 0; e < 100; ++e)
      events.push_back({{rng.uniform(-1100, 1100), rng.uniform(-1100, 1100)},
                        rng.bernoulli(0.4)});
    const auto conn = connectivity(assignments, grid, c);

    // brute-force predicate scans
    std::vector<std::size_t> expect_sensed;
    std::size_t expect_deterred = 0;
    for (std::size_t e = 0; e < events.size(); ++e) {
      bool sensed = false, deterred = false;
      for (std::size_t u = 0; u < assignments.size(); ++u) {
        const double d =
            distance(events[e].position, grid[assignments[u].cell_index]);
        if (assignments[u].role == Role::Sensing && conn.reachable[u] &&
            d <= c.sensing_range_m)
          sensed = true;
        if (assignments[u].role == Role::Deterrence &&
            d <= c.deterrence_range_m)
          deterred = true;
      }
      if (!events[e].major && sensed) expect_sensed.push_back(e);
      if (events[e].major && deterred) ++expect_deterred;
    }

    CHECK(sensed_events(events, assignments, conn, grid, c) == expect_sensed);
    CHECK(deterred_count(events, assignments, grid, c) == expect_deterred);
  }
}

TEST_CASE("deterred_count boundary is inclusive") {
  WorldConfig c = small_config();
  c.deterrence_range_m = 80.0;
  std::vector<Point> grid = {{0, 0}};
  std::vector<UavAssignment> one = {{0, 0, Role::Deterrence}};
  std::vector<SpatialEvent> events = {{{79.0, 0.0}, true},
                                      {{80.0, 0.0}, true},
                                      {{80.5, 0.0}, true}};
  CHECK(deterred_count(events, one, grid, c) == 2);

  std::vector<UavAssignment> none;
  CHECK(deterred_count(events, none, grid, c) == 0);
}

TEST_CASE("deterred_count monotone in range and in UAV set") {
  WorldConfig c = small_config();
  const auto grid = build_grid(c);
  Rng rng(77);
  auto assignments = random_assignments(8, grid.size(), rng);
  for (auto& a : assignments) a.role = Role::Deterrence;
  std::vector<SpatialEvent> events;
  for (int e = 0; e < 200; ++e)
    events.push_back(
        {{rng.uniform(-1200, 1200), rng.uniform(-1200, 1200)}, true});

  std::size_t prev = 0;
  for (double range : {80.0, 160.0, 320.0, 640.0, 1280.0}) {
    c.deterrence_range_m = range;
    const std::size_t n = deterred_count(events, assignments, grid, c);
    CHECK(n >= prev);
    prev = n;
  }

  c.deterrence_range_m = 160.0;
  const std::size_t base = deterred_count(events, assignments, grid, c);
  assignments.push_back({8, rng.uniform_int(grid.size()), Role::Deterrence});
  CHECK(deterred_count(events, assignments, grid, c) >= base);
}

TEST_CASE("assignments CSV round-trips") {
  const auto path =
      std::filesystem::temp_directory_path() / "uavsim_assignments.csv";
  std::vector<UavAssignment> assignments = {{0, 5, Role::Sensing},
                                            {1, 9, Role::Computing},
                                            {2, 0, Role::Deterrence}};
  write_assignments_csv(path, assignments);
  const auto loaded = read_assignments_csv(path);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].uav_id == assignments[i].uav_id);
    CHECK(loaded[i].cell_index == assignments[i].cell_index);
    CHECK(loaded[i].role == assignments[i].role);
  }
  std::filesystem::remove(path);
}
