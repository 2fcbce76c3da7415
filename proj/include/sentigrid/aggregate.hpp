#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sentigrid/csv.hpp"
#include "sentigrid/geo.hpp"
#include "sentigrid/time.hpp"
#include "sentigrid/types.hpp"

namespace sentigrid::aggregate {

/// Hourly weather category per (city, local date, hour).
class WeatherTable {
 public:
  void add(const BinKey& key, WeatherCategory cat) {
    auto [it, inserted] = entries_.emplace(key, cat);
    if (!inserted) {
      throw ValidationError("weather: duplicate entry for " + key.city_id + "," +
                            timeutil::format_date(timeutil::civil_from_days(key.day)) + "," +
                            std::to_string(key.hour));
    }
  }

  std::optional<WeatherCategory> lookup(const BinKey& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }

  const std::unordered_map<BinKey, WeatherCategory, BinKeyHash>& entries() const {
    return entries_;
  }

 private:
  std::unordered_map<BinKey, WeatherCategory, BinKeyHash> entries_;
};

/// Weather CSV: city_id,local_date,hour,category.
inline WeatherTable load_weather_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open weather file: " + path);
  csv::Reader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row) || row.size() < 4 || row[0] != "city_id") {
    throw ValidationError("weather " + path + ": bad or missing header");
  }
  WeatherTable table;
  std::size_t lineno = 1;
  while (reader.next(row)) {
    ++lineno;
    if (row.size() == 1 && row[0].empty()) continue;
    const auto fail = [&](const std::string& msg) {
      throw ValidationError("weather " + path + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (row.size() != 4) fail("expected 4 columns");
    auto date = timeutil::parse_date(row[1]);
    if (!date) fail("bad date '" + row[1] + "'");
    int hour = -1;
    try {
      hour = std::stoi(row[2]);
    } catch (const std::exception&) {
      fail("bad hour '" + row[2] + "'");
    }
    if (hour < 0 || hour > 23) fail("hour out of range '" + row[2] + "'");
    auto cat = parse_weather_category(row[3]);
    if (!cat) fail("unknown weather category '" + row[3] + "'");
    table.add(BinKey{row[0], timeutil::days_from_civil(*date), hour}, *cat);
  }
  return table;
}

/// Provider-description -> category mapping table, loadable from a data
/// file so the reconstruction can be swapped out wholesale.
using ConditionMap = std::unordered_map<std::string, WeatherCategory>;

inline ConditionMap default_condition_map() {
  return ConditionMap{
      {"clear sky", WeatherCategory::kClear},
      {"sunny", WeatherCategory::kClear},
      {"few clouds", WeatherCategory::kClouds},
      {"scattered clouds", WeatherCategory::kClouds},
      {"broken clouds", WeatherCategory::kClouds},
      {"overcast clouds", WeatherCategory::kClouds},
      {"fog", WeatherCategory::kFog},
      {"mist", WeatherCategory::kFog},
      {"haze", WeatherCategory::kHaze},
      {"smoke", WeatherCategory::kHaze},
      {"dust", WeatherCategory::kHaze},
      {"light rain", WeatherCategory::kRain},
      {"moderate rain", WeatherCategory::kRain},
      {"heavy intensity rain", WeatherCategory::kRain},
      {"shower rain", WeatherCategory::kRain},
      {"drizzle", WeatherCategory::kRain},
      {"light snow", WeatherCategory::kSnow},
      {"heavy snow", WeatherCategory::kSnow},
      {"sleet", WeatherCategory::kSnow},
      {"thunderstorm", WeatherCategory::kStorm},
      {"thunderstorm with rain", WeatherCategory::kStorm},
      {"squalls", WeatherCategory::kStorm},
  };
}

/// Condition-map CSV: description,category.
inline ConditionMap load_condition_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open condition map: " + path);
  csv::Reader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row) || row.size() < 2 || row[0] != "description") {
    throw ValidationError("condition map " + path + ": bad or missing header");
  }
  ConditionMap map;
  std::size_t lineno = 1;
  while (reader.next(row)) {
    ++lineno;
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 2) {
      throw ValidationError("condition map " + path + ":" + std::to_string(lineno) +
                            ": expected 2 columns");
    }
    auto cat = parse_weather_category(row[1]);
    if (!cat) {
      throw ValidationError("condition map " + path + ":" + std::to_string(lineno) +
                            ": unknown category '" + row[1] + "'");
    }
    map[geo::normalize_location(row[0])] = *cat;
  }
  return map;
}

/// Maps a raw provider description to one of the 7 categories: table lookup
/// first, then a first-word fallback against the category names themselves
/// ("rain and snow" -> rain). Unmappable descriptions throw so the table
/// can be extended.
inline WeatherCategory map_weather_condition(std::string_view raw_description,
                                             const ConditionMap& table) {
  const std::string norm = geo::normalize_location(raw_description);
  if (auto it = table.find(norm); it != table.end()) return it->second;
  const std::string first_word = norm.substr(0, norm.find(' '));
  if (auto cat = parse_weather_category(first_word)) return *cat;
  if (auto it = table.find(first_word); it != table.end()) return it->second;
  throw ValidationError("unmappable weather description: '" + std::string(raw_description) + "'");
}

/// Aggregate for one (city, local date, hour). Proportions are derived at
/// finalize; bins with n_total == 0 are never emitted.
struct CityHourBin {
  BinKey key;
  int day_of_week = 0;
  std::uint64_t n_total = 0;
  std::uint64_t n_pos = 0;
  std::uint64_t n_neg = 0;
  std::uint64_t n_social = 0;
  std::optional<WeatherCategory> weather;
  double p_pos = 0.0;
  double p_neg = 0.0;
  double p_social = 0.0;
};

/// Count-only partial bin; merges associatively and commutatively.
struct PartialBin {
  int day_of_week = 0;
  std::uint64_t n_total = 0;
  std::uint64_t n_pos = 0;
  std::uint64_t n_neg = 0;
  std::uint64_t n_social = 0;
};

inline PartialBin merge_partial_bins(const PartialBin& a, const PartialBin& b) {
  PartialBin out = a;
  if (a.n_total == 0) out.day_of_week = b.day_of_week;
  out.n_total += b.n_total;
  out.n_pos += b.n_pos;
  out.n_neg += b.n_neg;
  out.n_social += b.n_social;
  return out;
}

struct KeyedPartialBin {
  BinKey key;
  PartialBin counts;
};

inline KeyedPartialBin merge_partial_bins(const KeyedPartialBin& a, const KeyedPartialBin& b) {
  if (a.key != b.key) {
    throw InternalError("merge_partial_bins: key mismatch (" + a.key.city_id + " vs " +
                        b.key.city_id + ")");
  }
  return KeyedPartialBin{a.key, merge_partial_bins(a.counts, b.counts)};
}

/// Accumulates records into partial bins keyed by (city, local date, hour).
/// Shards may each hold an accumulator and merge afterwards.
class BinAccumulator {
 public:
  void add(const std::string& city_id, const geo::LocalTime& local, bool is_positive,
           bool is_negative, bool is_social) {
    BinKey key{city_id, timeutil::days_from_civil(local.date), local.hour};
    PartialBin& bin = bins_[key];
    bin.day_of_week = local.day_of_week;
    bin.n_total += 1;
    if (is_positive) bin.n_pos += 1;
    if (is_negative) bin.n_neg += 1;
    if (is_social) bin.n_social += 1;
  }

  void merge(const BinAccumulator& other) {
    for (const auto& [key, partial] : other.bins_) {
      auto it = bins_.find(key);
      if (it == bins_.end()) {
        bins_.emplace(key, partial);
      } else {
        if (it->second.day_of_week != partial.day_of_week) {
          throw InternalError("merge: day_of_week mismatch for one bin key");
        }
        it->second = merge_partial_bins(it->second, partial);
      }
    }
  }

  std::size_t bin_count() const { return bins_.size(); }

  /// Proportions computed, weather joined, output sorted by
  /// (city_id, local_date, hour). Keys with no weather row stay missing.
  std::vector<CityHourBin> finalize(const WeatherTable& weather) const {
    std::vector<CityHourBin> out;
    out.reserve(bins_.size());
    for (const auto& [key, partial] : bins_) {
      if (partial.n_total == 0) continue;
      CityHourBin bin;
      bin.key = key;
      bin.day_of_week = partial.day_of_week;
      bin.n_total = partial.n_total;
      bin.n_pos = partial.n_pos;
      bin.n_neg = partial.n_neg;
      bin.n_social = partial.n_social;
      bin.weather = weather.lookup(key);
      const double n = static_cast<double>(partial.n_total);
      bin.p_pos = static_cast<double>(partial.n_pos) / n;
      bin.p_neg = static_cast<double>(partial.n_neg) / n;
      bin.p_social = static_cast<double>(partial.n_social) / n;
      out.push_back(std::move(bin));
    }
    std::sort(out.begin(), out.end(),
              [](const CityHourBin& a, const CityHourBin& b) { return a.key < b.key; });
    return out;
  }

 private:
  std::unordered_map<BinKey, PartialBin, BinKeyHash> bins_;
};

inline constexpr const char* kBinCsvHeader =
    "city_id,local_date,hour,day_of_week,n_total,n_pos,n_neg,n_social,weather,p_pos,p_neg,"
    "p_social";

inline void write_bins_csv(std::ostream& out, const std::vector<CityHourBin>& bins) {
  out << kBinCsvHeader << '\n';
  char num[64];
  for (const auto& b : bins) {
    std::vector<std::string> row;
    row.reserve(12);
    row.push_back(b.key.city_id);
    row.push_back(timeutil::format_date(timeutil::civil_from_days(b.key.day)));
    row.push_back(std::to_string(b.key.hour));
    row.push_back(std::to_string(b.day_of_week));
    row.push_back(std::to_string(b.n_total));
    row.push_back(std::to_string(b.n_pos));
    row.push_back(std::to_string(b.n_neg));
    row.push_back(std::to_string(b.n_social));
    row.push_back(b.weather ? std::string(to_string(*b.weather)) : std::string("missing"));
    for (double v : {b.p_pos, b.p_neg, b.p_social}) {
      std::snprintf(num, sizeof num, "%.17g", v);
      row.push_back(num);
    }
    csv::write_row(out, row);
  }
}

/// Reads a bin CSV back. Proportions are recomputed from the counts, so
/// the file's float formatting never affects downstream math.
inline std::vector<CityHourBin> read_bins_csv(std::istream& in, const std::string& origin) {
  csv::Reader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row) || row.size() < 12 || row[0] != "city_id") {
    throw ValidationError("bins " + origin + ": bad or missing header");
  }
  std::vector<CityHourBin> out;
  std::size_t lineno = 1;
  while (reader.next(row)) {
    ++lineno;
    if (row.size() == 1 && row[0].empty()) continue;
    const auto fail = [&](const std::string& msg) {
      throw ValidationError("bins " + origin + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (row.size() != 12) fail("expected 12 columns");
    CityHourBin b;
    b.key.city_id = row[0];
    auto date = timeutil::parse_date(row[1]);
    if (!date) fail("bad date '" + row[1] + "'");
    b.key.day = timeutil::days_from_civil(*date);
    try {
      b.key.hour = std::stoi(row[2]);
      b.day_of_week = std::stoi(row[3]);
      b.n_total = std::stoull(row[4]);
      b.n_pos = std::stoull(row[5]);
      b.n_neg = std::stoull(row[6]);
      b.n_social = std::stoull(row[7]);
    } catch (const std::exception&) {
      fail("bad numeric field");
    }
    if (b.key.hour < 0 || b.key.hour > 23) fail("hour out of range");
    if (b.day_of_week < 0 || b.day_of_week > 6) fail("day_of_week out of range");
    if (b.n_total == 0) fail("bin with n_total = 0");
    if (b.n_pos > b.n_total || b.n_neg > b.n_total || b.n_social > b.n_total) {
      fail("count exceeds n_total");
    }
    if (row[8] != "missing") {
      auto cat = parse_weather_category(row[8]);
      if (!cat) fail("unknown weather category '" + row[8] + "'");
      b.weather = *cat;
    }
    const double n = static_cast<double>(b.n_total);
    b.p_pos = static_cast<double>(b.n_pos) / n;
    b.p_neg = static_cast<double>(b.n_neg) / n;
    b.p_social = static_cast<double>(b.n_social) / n;
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace sentigrid::aggregate
