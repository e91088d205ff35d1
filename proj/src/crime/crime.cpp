#include "uavsim/crime/crime.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace uavsim::crime {

using std::chrono::sys_days;
using std::chrono::sys_seconds;

std::string to_string(Severity s) {
  return s == Severity::Major ? "major" : "misdemeanor";
}

Severity severity_from_string(const std::string& s) {
  if (s == "major") return Severity::Major;
  if (s == "misdemeanor") return Severity::Misdemeanor;
  throw DataError("unknown severity: " + s);
}

CivilTime to_civil(sys_seconds ts) {
  const sys_days days = std::chrono::floor<std::chrono::days>(ts);
  const std::chrono::year_month_day ymd{days};
  const std::chrono::weekday wd{days};
  const auto since_midnight = ts - days;
  return CivilTime{
      static_cast<int>(ymd.year()),
      static_cast<unsigned>(ymd.month()),
      static_cast<unsigned>(ymd.day()),
      wd.c_encoding(),
      static_cast<unsigned>(
          std::chrono::duration_cast<std::chrono::minutes>(since_midnight)
              .count()),
  };
}

sys_seconds from_civil(int year, unsigned month, unsigned day,
                       unsigned minute_of_day) {
  const std::chrono::year_month_day ymd{std::chrono::year{year},
                                        std::chrono::month{month},
                                        std::chrono::day{day}};
  if (!ymd.ok()) throw DataError("invalid calendar date");
  return sys_days{ymd} + std::chrono::minutes{minute_of_day};
}

std::string iso_datetime(sys_seconds ts) {
  const CivilTime c = to_civil(ts);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02u:%02u", c.year, c.month,
                c.day, c.minute_of_day / 60, c.minute_of_day % 60);
  return buf;
}

sys_seconds parse_iso_datetime(const std::string& s) {
  int y = 0;
  unsigned mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  const int got = std::sscanf(s.c_str(), "%d-%u-%u%*1[T ]%u:%u:%u", &y, &mo,
                              &d, &h, &mi, &sec);
  if (got < 5) throw DataError("bad ISO datetime: " + s);
  if (h > 23 || mi > 59) throw DataError("bad ISO datetime: " + s);
  return from_civil(y, mo, d, h * 60 + mi);
}

namespace {

std::optional<sys_seconds> parse_us_datetime(const std::string& s) {
  unsigned mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  int y = 0;
  char ampm[3] = {0};
  const int got = std::sscanf(s.c_str(), "%u/%u/%d %u:%u:%u %2s", &mo, &d, &y,
                              &h, &mi, &sec, ampm);
  if (got < 7 || mo < 1 || mo > 12 || d < 1 || d > 31 || h < 1 || h > 12 ||
      mi > 59)
    return std::nullopt;
  unsigned hour24 = h % 12;
  if (ampm[0] == 'P' || ampm[0] == 'p') hour24 += 12;
  else if (ampm[0] != 'A' && ampm[0] != 'a') return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{mo},
                                        std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd} + std::chrono::minutes{hour24 * 60 + mi};
}

// RFC-4180-ish split: handles quoted fields with embedded commas/quotes.
std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

CsvSchema CsvSchema::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad schema config: " + std::string(e.what()));
  }
  CsvSchema s;
  s.date_column = j.value("date_column", s.date_column);
  s.offense_column = j.value("offense_column", s.offense_column);
  s.latitude_column = j.value("latitude_column", s.latitude_column);
  s.longitude_column = j.value("longitude_column", s.longitude_column);
  s.x_column = j.value("x_column", s.x_column);
  s.y_column = j.value("y_column", s.y_column);
  s.region_column = j.value("region_column", s.region_column);
  s.block_column = j.value("block_column", s.block_column);
  s.date_format = j.value("date_format", s.date_format);
  if (s.date_format != "us" && s.date_format != "iso")
    throw ConfigError("schema date_format must be \"us\" or \"iso\"");
  return s;
}

ParseResult parse_csv(const std::filesystem::path& path,
                      const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path.string());

  const std::vector<std::string> header = split_csv_row(line);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    if (name.empty()) return std::nullopt;
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };

  const auto date_col = column(schema.date_column);
  const auto offense_col = column(schema.offense_column);
  if (!date_col)
    throw DataError("missing date column '" + schema.date_column + "' in " +
                    path.string());
  if (!offense_col)
    throw DataError("missing offense column '" + schema.offense_column +
                    "' in " + path.string());
  const auto lat_col = column(schema.latitude_column);
  const auto lon_col = column(schema.longitude_column);
  const auto x_col = column(schema.x_column);
  const auto y_col = column(schema.y_column);
  const auto region_col = column(schema.region_column);
  const auto block_col = column(schema.block_column);
  const bool has_latlon = lat_col && lon_col;
  const bool has_xy = x_col && y_col;
  if (!has_latlon && !has_xy && !block_col)
    throw DataError("schema provides no usable coordinate columns for " +
                    path.string());

  ParseResult result;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> row = split_csv_row(line);
    const auto field = [&](std::optional<std::size_t> idx) -> std::string {
      return (idx && *idx < row.size()) ? row[*idx] : std::string();
    };

    RawEvent event;
    const std::string date_str = field(date_col);
    if (schema.date_format == "us") {
      const auto ts = parse_us_datetime(date_str);
      if (!ts) {
        ++result.malformed_rows;
        continue;
      }
      event.timestamp = *ts;
    } else {
      try {
        event.timestamp = parse_iso_datetime(date_str);
      } catch (const DataError&) {
        ++result.malformed_rows;
        continue;
      }
    }
    event.offense_type = field(offense_col);

    try {
      if (has_latlon) {
        const std::string lat = field(lat_col), lon = field(lon_col);
        if (!lat.empty() && !lon.empty()) {
          event.latitude = std::stod(lat);
          event.longitude = std::stod(lon);
        }
      }
      if (has_xy) {
        const std::string x = field(x_col), y = field(y_col);
        if (!x.empty() && !y.empty()) {
          event.x_m = std::stod(x);
          event.y_m = std::stod(y);
        }
      }
      const std::string region = field(region_col);
      if (!region.empty()) event.region = std::stoi(region);
      const std::string block = field(block_col);
      if (!block.empty()) event.block = std::stoul(block);
    } catch (const std::exception&) {
      ++result.malformed_rows;
      continue;
    }
    result.events.push_back(std::move(event));
  }
  std::stable_sort(result.events.begin(), result.events.end(),
                   [](const RawEvent& a, const RawEvent& b) {
                     return a.timestamp < b.timestamp;
                   });
  return result;
}

double Projection::x_m(double lat, double lon) const {
  constexpr double kMetersPerDegree = 111320.0;
  constexpr double kDegToRad = 0.017453292519943295;
  return (lon - lon0) * std::cos(lat0 * kDegToRad) * kMetersPerDegree;
}

double Projection::y_m(double lat, double /*lon*/) const {
  constexpr double kMetersPerDegree = 111320.0;
  return (lat - lat0) * kMetersPerDegree;
}

std::size_t BlockGrid::block_id(double x, double y) const {
  const auto clamp_index = [](double v, double origin, double size,
                              std::size_t n) {
    const double rel = (v - origin) / size;
    const long i = static_cast<long>(std::floor(rel));
    return static_cast<std::size_t>(
        std::clamp<long>(i, 0, static_cast<long>(n) - 1));
  };
  const std::size_t ix = clamp_index(x, origin_x, block_width, nx);
  const std::size_t iy = clamp_index(y, origin_y, block_height, ny);
  return iy * nx + ix;
}

void BlockGrid::centroid(std::size_t block, double& x, double& y) const {
  if (block >= count()) throw ConfigError("block id out of range");
  const std::size_t ix = block % nx, iy = block / nx;
  x = origin_x + (static_cast<double>(ix) + 0.5) * block_width;
  y = origin_y + (static_cast<double>(iy) + 0.5) * block_height;
}

bool BlockGrid::contains(double x, double y) const {
  return x >= origin_x && x < origin_x + block_width * static_cast<double>(nx) &&
         y >= origin_y && y < origin_y + block_height * static_cast<double>(ny);
}

std::vector<RawEvent> filter_window(const std::vector<RawEvent>& events,
                                    const WindowFilter& filter) {
  std::vector<RawEvent> kept;
  for (const RawEvent& e : events) {
    const CivilTime c = to_civil(e.timestamp);
    if (c.weekday != filter.weekday) continue;
    if (c.minute_of_day < filter.start_minute ||
        c.minute_of_day >= filter.end_minute)
      continue;
    if (filter.region && e.region != *filter.region) continue;
    kept.push_back(e);
  }
  return kept;
}

const std::vector<std::string>& default_major_list() {
  static const std::vector<std::string> kMajors = {
      "robbery", "criminal sexual assault", "homicide", "arson"};
  return kMajors;
}

Severity classify_severity(const std::string& offense_type,
                           const std::vector<std::string>& major_list) {
  const std::string needle = lower(offense_type);
  for (const std::string& major : major_list)
    if (needle == lower(major)) return Severity::Major;
  return Severity::Misdemeanor;
}

CanonicalizeResult canonicalize(const std::vector<RawEvent>& events,
                                const Projection& projection,
                                const BlockGrid& blocks,
                                const std::vector<std::string>& major_list) {
  CanonicalizeResult result;
  for (const RawEvent& raw : events) {
    CrimeEvent e;
    e.timestamp = raw.timestamp;
    if (raw.x_m && raw.y_m) {
      e.x_m = *raw.x_m;
      e.y_m = *raw.y_m;
    } else if (raw.latitude && raw.longitude) {
      e.x_m = projection.x_m(*raw.latitude, *raw.longitude);
      e.y_m = projection.y_m(*raw.latitude, *raw.longitude);
    } else if (raw.block && *raw.block < blocks.count()) {
      blocks.centroid(*raw.block, e.x_m, e.y_m);
    } else {
      ++result.dropped_no_coords;
      continue;
    }
    e.block_id = blocks.block_id(e.x_m, e.y_m);
    e.severity = classify_severity(raw.offense_type, major_list);
    result.events.push_back(e);
  }
  return result;
}

namespace {
// Day-of-month in (year, month) with the given weekday and week-of-month
// index; falls back to the last matching weekday when the index overflows.
unsigned resolve_folded_day(int year, unsigned month, unsigned weekday,
                            unsigned week_index) {
  unsigned last_match = 0;
  for (unsigned day = 1; day <= 31; ++day) {
    const std::chrono::year_month_day ymd{std::chrono::year{year},
                                          std::chrono::month{month},
                                          std::chrono::day{day}};
    if (!ymd.ok()) break;
    const std::chrono::weekday wd{sys_days{ymd}};
    if (wd.c_encoding() != weekday) continue;
    last_match = day;
    if ((day - 1) / 7 == week_index) return day;
  }
  return last_match;
}
}  // namespace

std::vector<CrimeEvent> fold_years(const std::vector<CrimeEvent>& events,
                                   const std::vector<int>& source_years,
                                   int canonical_year) {
  std::vector<CrimeEvent> folded;
  folded.reserve(events.size());
  for (const CrimeEvent& e : events) {
    const CivilTime c = to_civil(e.timestamp);
    if (std::find(source_years.begin(), source_years.end(), c.year) ==
        source_years.end())
      throw DataError("fold_years: event year " + std::to_string(c.year) +
                      " not in the source-year list");
    const unsigned week_index = (c.day - 1) / 7;
    const unsigned day =
        resolve_folded_day(canonical_year, c.month, c.weekday, week_index);
    if (day == 0)
      throw DataError("fold_years: no matching weekday in canonical month");
    CrimeEvent out = e;
    out.timestamp = from_civil(canonical_year, c.month, day, c.minute_of_day);
    folded.push_back(out);
  }
  std::stable_sort(folded.begin(), folded.end(),
                   [](const CrimeEvent& a, const CrimeEvent& b) {
                     return a.timestamp < b.timestamp;
                   });
  return folded;
}

std::vector<sys_seconds> friday_buckets(int first_year, int last_year) {
  std::vector<sys_seconds> fridays;
  sys_days day = sys_days{std::chrono::year_month_day{
      std::chrono::year{first_year}, std::chrono::January, std::chrono::day{1}}};
  const sys_days end = sys_days{std::chrono::year_month_day{
      std::chrono::year{last_year + 1}, std::chrono::January,
      std::chrono::day{1}}};
  for (; day < end; day += std::chrono::days{1}) {
    if (std::chrono::weekday{day} == std::chrono::Friday)
      fridays.push_back(sys_seconds{day});
  }
  return fridays;
}

std::optional<std::size_t> bucket_index(
    sys_seconds ts, const std::vector<sys_seconds>& buckets,
    const WindowFilter& filter) {
  const sys_seconds midnight{std::chrono::floor<std::chrono::days>(ts)};
  const auto it = std::lower_bound(buckets.begin(), buckets.end(), midnight);
  if (it == buckets.end() || *it != midnight) return std::nullopt;
  const CivilTime c = to_civil(ts);
  if (c.minute_of_day < filter.start_minute ||
      c.minute_of_day >= filter.end_minute)
    return std::nullopt;
  return static_cast<std::size_t>(it - buckets.begin());
}

nn::Tensor block_counts(const std::vector<CrimeEvent>& events,
                        std::size_t block_count,
                        const std::vector<sys_seconds>& buckets,
                        const WindowFilter& filter) {
  nn::Tensor counts = nn::Tensor::zeros({buckets.size(), block_count});
  for (const CrimeEvent& e : events) {
    if (e.block_id >= block_count)
      throw DataError("block_counts: block id out of range");
    const auto bucket = bucket_index(e.timestamp, buckets, filter);
    if (!bucket) continue;
    counts.at(*bucket, e.block_id) += 1.0;
  }
  return counts;
}

void write_canonical_csv(const std::filesystem::path& path,
                         const std::vector<CrimeEvent>& events) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << "iso_datetime,x_m,y_m,block_id,severity\n";
    char buf[64];
    for (const CrimeEvent& e : events) {
      std::snprintf(buf, sizeof(buf), "%.3f,%.3f", e.x_m, e.y_m);
      out << iso_datetime(e.timestamp) << "," << buf << "," << e.block_id
          << "," << to_string(e.severity) << "\n";
    }
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<CrimeEvent> read_canonical_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      line.rfind("iso_datetime,x_m,y_m,block_id,severity", 0) != 0)
    throw DataError("bad canonical CSV header in " + path.string());
  std::vector<CrimeEvent> events;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> row = split_csv_row(line);
    if (row.size() != 5) throw DataError("bad canonical CSV row: " + line);
    CrimeEvent e;
    e.timestamp = parse_iso_datetime(row[0]);
    e.x_m = std::stod(row[1]);
    e.y_m = std::stod(row[2]);
    e.block_id = std::stoul(row[3]);
    e.severity = severity_from_string(row[4]);
    events.push_back(e);
  }
  return events;
}

}  // namespace uavsim::crime
