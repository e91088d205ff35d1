#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uavsim/common.hpp"
#include "uavsim/nn/tensor.hpp"

namespace uavsim::crime {

enum class Severity { Major, Misdemeanor };

std::string to_string(Severity s);
Severity severity_from_string(const std::string& s);

// Calendar fields of a timestamp (UTC civil time, minute resolution).
struct CivilTime {
  int year;
  unsigned month;         // 1..12
  unsigned day;           // 1..31
  unsigned weekday;       // 0 = Sunday .. 6 = Saturday (C encoding)
  unsigned minute_of_day; // 0..1439
};

CivilTime to_civil(std::chrono::sys_seconds ts);
std::chrono::sys_seconds from_civil(int year, unsigned month, unsigned day,
                                    unsigned minute_of_day);
std::string iso_datetime(std::chrono::sys_seconds ts);
std::chrono::sys_seconds parse_iso_datetime(const std::string& s);

// One offense as parsed from a source CSV, before canonicalization.
struct RawEvent {
  std::chrono::sys_seconds timestamp{};
  std::string offense_type;
  std::optional<double> latitude;
  std::optional<double> longitude;
  std::optional<double> x_m;  // set when the schema provides planar meters
  std::optional<double> y_m;
  std::optional<int> region;
  std::optional<std::size_t> block;  // source block id, when the schema has one
};

// Canonical event: planar meters, block id, severity class.
struct CrimeEvent {
  std::chrono::sys_seconds timestamp{};
  double x_m = 0.0;
  double y_m = 0.0;
  std::size_t block_id = 0;
  Severity severity = Severity::Misdemeanor;
};

// ---- parsing ----------------------------------------------------------

// Column mapping and formats for one dataset vintage.
struct CsvSchema {
  std::string date_column = "Date";
  std::string offense_column = "Primary Type";
  // Either lat/lon columns or planar meter columns must be present.
  std::string latitude_column = "Latitude";
  std::string longitude_column = "Longitude";
  std::string x_column;  // planar meters, optional alternative
  std::string y_column;
  std::string region_column;     // optional
  std::string block_column;      // optional
  std::string date_format = "us";  // "us" = MM/DD/YYYY hh:mm:ss AM, "iso"

  static CsvSchema from_json_file(const std::filesystem::path& path);
};

struct ParseResult {
  std::vector<RawEvent> events;
  std::size_t malformed_rows = 0;
};

// One event per well-formed row; malformed rows are counted, not fatal.
// Missing mandatory columns raise DataError; unreadable file raises IoError.
ParseResult parse_csv(const std::filesystem::path& path,
                      const CsvSchema& schema);

// ---- geometry ---------------------------------------------------------

// Equirectangular projection about a reference point; adequate below
// ~10 km extents.
struct Projection {
  double lat0 = 0.0;
  double lon0 = 0.0;
  double x_m(double lat, double lon) const;
  double y_m(double lat, double lon) const;
};

// Synthetic rectangular tiling of B = nx * ny blocks; the default stand-in
// for the unavailable real block polygons. Origin is the lower-left corner.
struct BlockGrid {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double block_width = 500.0;
  double block_height = 500.0;
  std::size_t nx = 4;
  std::size_t ny = 3;

  std::size_t count() const { return nx * ny; }
  // Nearest block for any point (points outside the tiling clamp inward).
  std::size_t block_id(double x, double y) const;
  void centroid(std::size_t block, double& x, double& y) const;
  bool contains(double x, double y) const;
};

// ---- transforms -------------------------------------------------------

struct WindowFilter {
  unsigned weekday = 5;          // Friday
  unsigned start_minute = 19 * 60;
  unsigned end_minute = 24 * 60;  // "12:00 pm" read as midnight
  std::optional<int> region;      // keep only this region when set
};

// Keep events with matching weekday, time-of-day in [start, end), and
// region. Idempotent.
std::vector<RawEvent> filter_window(const std::vector<RawEvent>& events,
                                    const WindowFilter& filter);

// Case-insensitive membership in the major list; anything else (including
// an empty type) is a misdemeanor.
Severity classify_severity(const std::string& offense_type,
                           const std::vector<std::string>& major_list);
const std::vector<std::string>& default_major_list();

// RawEvent -> CrimeEvent using the projection (for lat/lon schemas) and
// block grid. Events without coordinates fall back to their source block's
// centroid when the schema provides a block column; otherwise they are
// dropped and counted.
struct CanonicalizeResult {
  std::vector<CrimeEvent> events;
  std::size_t dropped_no_coords = 0;
};
CanonicalizeResult canonicalize(const std::vector<RawEvent>& events,
                                const Projection& projection,
                                const BlockGrid& blocks,
                                const std::vector<std::string>& major_list);

// Merge events from several source years into one canonical year,
// preserving (month, week-of-month, weekday, time-of-day). A fifth
// week-of-month absent from the canonical year falls back to the last
// matching weekday of that month.
std::vector<CrimeEvent> fold_years(const std::vector<CrimeEvent>& events,
                                   const std::vector<int>& source_years,
                                   int canonical_year);

// All Fridays (as midnight timestamps) from Jan 1 of first_year through
// Dec 31 of last_year, in order. One entry per weekly control window.
std::vector<std::chrono::sys_seconds> friday_buckets(int first_year,
                                                     int last_year);

// Index of the weekly window owning ts, or nullopt when outside all
// buckets. A window covers its Friday from start_minute to end_minute.
std::optional<std::size_t> bucket_index(
    std::chrono::sys_seconds ts,
    const std::vector<std::chrono::sys_seconds>& buckets,
    const WindowFilter& filter);

// Counts per (bucket, block); empty buckets stay zero.
nn::Tensor block_counts(const std::vector<CrimeEvent>& events,
                        std::size_t block_count,
                        const std::vector<std::chrono::sys_seconds>& buckets,
                        const WindowFilter& filter);

// ---- canonical event file --------------------------------------------
// CSV columns: iso_datetime,x_m,y_m,block_id,severity. Byte-stable for a
// fixed input and config.

void write_canonical_csv(const std::filesystem::path& path,
                         const std::vector<CrimeEvent>& events);
std::vector<CrimeEvent> read_canonical_csv(const std::filesystem::path& path);

}  // namespace uavsim::crime
