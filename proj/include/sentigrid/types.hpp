#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sentigrid {

/// Raised on invalid user input: malformed files, bad configuration,
/// violated file-format contracts. Mapped to exit code 2 by the CLI.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when an internal invariant breaks. Mapped to exit code 3.
class InternalError : public std::logic_error {
 public:
  explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

enum class Polarity { kPositive, kNegative };

enum class Direction { kSurplus, kDeficit };

inline std::string_view to_string(Polarity p) {
  return p == Polarity::kPositive ? "positive" : "negative";
}

inline std::string_view to_string(Direction d) {
  return d == Direction::kSurplus ? "surplus" : "deficit";
}

inline std::optional<Polarity> parse_polarity(std::string_view s) {
  if (s == "positive") return Polarity::kPositive;
  if (s == "negative") return Polarity::kNegative;
  return std::nullopt;
}

inline std::optional<Direction> parse_direction(std::string_view s) {
  if (s == "surplus") return Direction::kSurplus;
  if (s == "deficit") return Direction::kDeficit;
  return std::nullopt;
}

enum class WeatherCategory { kClear, kClouds, kFog, kHaze, kRain, kSnow, kStorm };

inline constexpr int kWeatherCategoryCount = 7;

inline std::string_view to_string(WeatherCategory w) {
  switch (w) {
    case WeatherCategory::kClear: return "clear";
    case WeatherCategory::kClouds: return "clouds";
    case WeatherCategory::kFog: return "fog";
    case WeatherCategory::kHaze: return "haze";
    case WeatherCategory::kRain: return "rain";
    case WeatherCategory::kSnow: return "snow";
    case WeatherCategory::kStorm: return "storm";
  }
  return "clear";
}

inline std::optional<WeatherCategory> parse_weather_category(std::string_view s) {
  if (s == "clear") return WeatherCategory::kClear;
  if (s == "clouds") return WeatherCategory::kClouds;
  if (s == "fog") return WeatherCategory::kFog;
  if (s == "haze") return WeatherCategory::kHaze;
  if (s == "rain") return WeatherCategory::kRain;
  if (s == "snow") return WeatherCategory::kSnow;
  if (s == "storm") return WeatherCategory::kStorm;
  return std::nullopt;
}

/// Key of one aggregation bin: all tweets from one city during one local
/// clock hour. `day` is the local calendar date as days since 1970-01-01.
struct BinKey {
  std::string city_id;
  std::int64_t day = 0;
  int hour = 0;

  friend bool operator==(const BinKey&, const BinKey&) = default;
  friend auto operator<=>(const BinKey&, const BinKey&) = default;
};

struct BinKeyHash {
  std::size_t operator()(const BinKey& k) const {
    std::size_t h = std::hash<std::string>{}(k.city_id);
    h ^= std::hash<std::int64_t>{}(k.day) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= std::hash<int>{}(k.hour) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
  }
};

}  // namespace sentigrid
