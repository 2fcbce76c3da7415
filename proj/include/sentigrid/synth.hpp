#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sentigrid/aggregate.hpp"
#include "sentigrid/deviation.hpp"
#include "sentigrid/geo.hpp"
#include "sentigrid/hash.hpp"
#include "sentigrid/ingest.hpp"
#include "sentigrid/model.hpp"
#include "sentigrid/time.hpp"
#include "sentigrid/types.hpp"

namespace sentigrid::synth {

struct SynthCity {
  std::string city_id;
  std::string display_name;
  std::string country;
  std::string tz = "UTC";
  int fallback_offset_minutes = 0;
  double base_pos = 0.35;
  double base_neg = 0.25;
  double tweets_per_hour = 0.0;  // <= 0 means the corpus-wide mean
};

/// Ground truth for one corpus. Effects add on the linear-probability
/// scale, mirroring the OLS model's own algebra, and are shared between
/// the positive and negative outcomes; per-city base rates differ by
/// polarity.
struct GeneratorConfig {
  std::uint64_t seed = 1;
  std::vector<SynthCity> cities;
  std::array<double, 24> hour_effects{};
  std::array<double, 7> day_effects{};
  std::array<double, kWeatherCategoryCount> weather_effects{};
  double social_slope = 0.0;
  double tweets_per_hour = 50.0;
  timeutil::CivilDate window_start;  // UTC dates, inclusive
  timeutil::CivilDate window_end;
  double social_min = 0.1;  // per-bin target social share drawn uniformly
  double social_max = 0.5;
  std::array<double, kWeatherCategoryCount> weather_probs{0.45, 0.30, 0.04, 0.05,
                                                          0.10, 0.03, 0.03};
};

/// A deliberate shift of one polarity's labeled proportion in one city
/// over a local-time window (inclusive on both ends).
struct InjectedEvent {
  std::string city_id;
  timeutil::CivilDate start_date;
  int start_hour = 0;
  timeutil::CivilDate end_date;
  int end_hour = 23;
  Polarity polarity = Polarity::kPositive;
  double delta = 0.0;
  std::string label;
};

namespace detail {

inline double min_of(const double* xs, std::size_t n) {
  double m = xs[0];
  for (std::size_t i = 1; i < n; ++i) m = std::min(m, xs[i]);
  return m;
}

inline double max_of(const double* xs, std::size_t n) {
  double m = xs[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, xs[i]);
  return m;
}

}  // namespace detail

/// Rejects configurations whose implied proportions can leave (0,1).
inline void validate(const GeneratorConfig& cfg, const std::vector<InjectedEvent>& events) {
  if (cfg.cities.empty()) throw ValidationError("synth: no cities configured");
  if (cfg.window_end < cfg.window_start) throw ValidationError("synth: window end before start");
  if (!(cfg.tweets_per_hour > 0)) throw ValidationError("synth: tweets_per_hour must be > 0");
  if (!(cfg.social_min >= 0 && cfg.social_max <= 1 && cfg.social_min <= cfg.social_max)) {
    throw ValidationError("synth: social range must satisfy 0 <= min <= max <= 1");
  }
  double prob_sum = 0;
  for (double p : cfg.weather_probs) {
    if (p < 0) throw ValidationError("synth: negative weather probability");
    prob_sum += p;
  }
  if (prob_sum <= 0) throw ValidationError("synth: weather probabilities sum to zero");

  const double h_min = detail::min_of(cfg.hour_effects.data(), 24);
  const double h_max = detail::max_of(cfg.hour_effects.data(), 24);
  const double d_min = detail::min_of(cfg.day_effects.data(), 7);
  const double d_max = detail::max_of(cfg.day_effects.data(), 7);
  const double w_min = detail::min_of(cfg.weather_effects.data(), kWeatherCategoryCount);
  const double w_max = detail::max_of(cfg.weather_effects.data(), kWeatherCategoryCount);
  const double s_min = std::min(cfg.social_slope * cfg.social_min, cfg.social_slope * cfg.social_max);
  const double s_max = std::max(cfg.social_slope * cfg.social_min, cfg.social_slope * cfg.social_max);

  std::set<std::string> ids;
  for (const auto& c : cfg.cities) {
    if (!ids.insert(c.city_id).second) {
      throw ValidationError("synth: duplicate city_id '" + c.city_id + "'");
    }
    double delta_min[2] = {0.0, 0.0};  // indexed by Polarity
    double delta_max[2] = {0.0, 0.0};
    for (const auto& ev : events) {
      if (ev.city_id != c.city_id) continue;
      const int p = static_cast<int>(ev.polarity);
      delta_min[p] = std::min(delta_min[p], ev.delta);
      delta_max[p] = std::max(delta_max[p], ev.delta);
    }
    for (Polarity pol : {Polarity::kPositive, Polarity::kNegative}) {
      const double base = pol == Polarity::kPositive ? c.base_pos : c.base_neg;
      const int p = static_cast<int>(pol);
      const double lo = base + h_min + d_min + w_min + s_min + delta_min[p];
      const double hi = base + h_max + d_max + w_max + s_max + delta_max[p];
      if (!(lo > 0.0 && hi < 1.0)) {
        std::ostringstream msg;
        msg << "synth: implied " << to_string(pol) << " proportion for city '" << c.city_id
            << "' can reach [" << lo << ", " << hi << "], outside (0,1)";
        throw ValidationError(msg.str());
      }
    }
  }
  for (const auto& ev : events) {
    if (!ids.count(ev.city_id)) {
      throw ValidationError("synth: event city '" + ev.city_id + "' not in config");
    }
    if (std::make_pair(ev.end_date, ev.end_hour) < std::make_pair(ev.start_date, ev.start_hour)) {
      throw ValidationError("synth: event '" + ev.label + "' ends before it starts");
    }
  }
}

/// Text snippets built from the fixture lexicon so score_text reproduces
/// the drawn labels exactly. No boosters, negators, elongations, or
/// exclamation marks appear anywhere.
namespace snippets {
inline const std::vector<std::string>& positive() {
  static const std::vector<std::string> s{"love this", "feeling happy today", "what a great day",
                                          "this is awesome", "love the vibe here"};
  return s;
}
inline const std::vector<std::string>& negative() {
  static const std::vector<std::string> s{"hate this", "awful day", "this is terrible",
                                          "feeling sad now", "hate the traffic here"};
  return s;
}
inline const std::vector<std::string>& both() {
  static const std::vector<std::string> s{"love the city hate the rain",
                                          "great show terrible seats", "happy but sad too"};
  return s;
}
inline const std::vector<std::string>& neutral() {
  static const std::vector<std::string> s{"walking around downtown", "just had lunch",
                                          "watching the game tonight", "on the train again",
                                          "coffee then work"};
  return s;
}
}  // namespace snippets

using RecordSink = std::function<void(const ingest::TweetRecord&, const std::string& city_id)>;

struct GenerationResult {
  aggregate::WeatherTable weather;
  std::uint64_t record_count = 0;
};

inline geo::CityEntry to_city_entry(const SynthCity& c,
                                    const std::string& zoneinfo_dir = "/usr/share/zoneinfo") {
  geo::CityEntry e;
  e.city_id = c.city_id;
  e.display_name = c.display_name.empty() ? c.city_id : c.display_name;
  e.country = c.country;
  e.tz = c.tz;
  e.fallback_offset_minutes = c.fallback_offset_minutes;
  e.aliases.push_back(geo::normalize_location(e.display_name));
  if (auto zone = timeutil::TimeZone::load(c.tz, zoneinfo_dir)) {
    e.zone = std::make_shared<const timeutil::TimeZone>(std::move(*zone));
  }
  return e;
}

inline geo::CityRegistry build_registry(const GeneratorConfig& cfg) {
  geo::CityRegistry reg;
  for (const auto& c : cfg.cities) reg.add(to_city_entry(c));
  return reg;
}

/// Draws every city-hour of the window: tweet counts are Poisson, labels
/// are independent Bernoulli draws on the linear-probability scale, and
/// each record's text encodes its labels through the fixture lexicon.
/// Deterministic for a fixed seed; cities use independent substreams.
inline GenerationResult generate_corpus(const GeneratorConfig& cfg,
                                        const std::vector<InjectedEvent>& events,
                                        const RecordSink& sink) {
  validate(cfg, events);
  GenerationResult result;

  std::array<double, kWeatherCategoryCount> cum{};
  double acc = 0;
  for (int w = 0; w < kWeatherCategoryCount; ++w) {
    acc += cfg.weather_probs[w];
    cum[w] = acc;
  }

  const std::int64_t first_day = timeutil::days_from_civil(cfg.window_start);
  const std::int64_t last_day = timeutil::days_from_civil(cfg.window_end);

  for (std::size_t ci = 0; ci < cfg.cities.size(); ++ci) {
    const SynthCity& city = cfg.cities[ci];
    const geo::CityEntry entry = to_city_entry(city);
    const double mean = city.tweets_per_hour > 0 ? city.tweets_per_hour : cfg.tweets_per_hour;

    std::mt19937_64 rng(derive_substream_seed(cfg.seed, ci));
    std::poisson_distribution<int> poisson(mean);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> second_offset(0, 3599);

    std::vector<const InjectedEvent*> city_events;
    for (const auto& ev : events) {
      if (ev.city_id == city.city_id) city_events.push_back(&ev);
    }

    std::uint64_t seq = 0;
    for (std::int64_t day = first_day; day <= last_day; ++day) {
      for (int utc_hour = 0; utc_hour < 24; ++utc_hour) {
        const std::int64_t hour_start = day * 86400 + utc_hour * 3600;
        const geo::LocalTime local = geo::localize_timestamp(hour_start, entry);
        const BinKey key{city.city_id, timeutil::days_from_civil(local.date), local.hour};

        WeatherCategory weather;
        if (auto existing = result.weather.lookup(key)) {
          // Repeated local hour (DST fall-back): keep the first draw.
          weather = *existing;
        } else {
          const double u = unit(rng) * acc;
          int w = 0;
          while (w < kWeatherCategoryCount - 1 && u > cum[w]) ++w;
          weather = static_cast<WeatherCategory>(w);
          result.weather.add(key, weather);
        }

        const int n = poisson(rng);
        if (n == 0) continue;

        const double social_target =
            cfg.social_min + (cfg.social_max - cfg.social_min) * unit(rng);
        std::vector<bool> social(static_cast<std::size_t>(n));
        int n_social = 0;
        for (int t = 0; t < n; ++t) {
          social[static_cast<std::size_t>(t)] = unit(rng) < social_target;
          if (social[static_cast<std::size_t>(t)]) ++n_social;
        }
        // Labels use the realized social share so the fitted model is
        // correctly specified against the regressor it actually sees.
        const double realized_social = static_cast<double>(n_social) / n;

        double delta_pos = 0.0, delta_neg = 0.0;
        for (const InjectedEvent* ev : city_events) {
          const auto lo = std::make_pair(timeutil::days_from_civil(ev->start_date), ev->start_hour);
          const auto hi = std::make_pair(timeutil::days_from_civil(ev->end_date), ev->end_hour);
          const auto at = std::make_pair(key.day, key.hour);
          if (lo <= at && at <= hi) {
            (ev->polarity == Polarity::kPositive ? delta_pos : delta_neg) += ev->delta;
          }
        }

        const double shared = cfg.hour_effects[static_cast<std::size_t>(local.hour)] +
                              cfg.day_effects[static_cast<std::size_t>(local.day_of_week)] +
                              cfg.weather_effects[static_cast<std::size_t>(weather)] +
                              cfg.social_slope * realized_social;
        const double p_pos = std::clamp(city.base_pos + shared + delta_pos, 1e-9, 1.0 - 1e-9);
        const double p_neg = std::clamp(city.base_neg + shared + delta_neg, 1e-9, 1.0 - 1e-9);

        for (int t = 0; t < n; ++t) {
          const bool pos = unit(rng) < p_pos;
          const bool neg = unit(rng) < p_neg;
          const std::vector<std::string>& pool =
              pos ? (neg ? snippets::both() : snippets::positive())
                  : (neg ? snippets::negative() : snippets::neutral());
          ingest::TweetRecord rec;
          rec.id = city.city_id + "-" + std::to_string(seq++);
          rec.created_at_utc = hour_start + second_offset(rng);
          rec.text = pool[seq % pool.size()];
          rec.lang = "en";
          rec.user_location_raw = entry.display_name;
          rec.follower_count = static_cast<std::int64_t>(unit(rng) * 5000);
          if (social[static_cast<std::size_t>(t)]) {
            rec.is_reply = true;
            rec.mention_count = 1;
          }
          sink(rec, city.city_id);
          ++result.record_count;
        }
      }
    }
  }
  return result;
}

/// Ground-truth coefficient vector for a fitted model's column layout.
inline Eigen::VectorXd ground_truth_beta(const GeneratorConfig& cfg,
                                         const model::FittedModel& m) {
  std::map<std::string, const SynthCity*> by_id;
  for (const auto& c : cfg.cities) by_id[c.city_id] = &c;
  auto base_of = [&](const std::string& city_id) {
    auto it = by_id.find(city_id);
    if (it == by_id.end()) throw ValidationError("ground_truth_beta: unknown city " + city_id);
    return m.outcome == Polarity::kPositive ? it->second->base_pos : it->second->base_neg;
  };

  Eigen::VectorXd truth = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.column_names.size()));
  const auto& L = m.layout;
  double intercept = 0.0;
  if (m.spec.include_city) intercept += base_of(L.reference_city);
  if (m.spec.include_hour) intercept += cfg.hour_effects[static_cast<std::size_t>(L.reference_hour)];
  if (m.spec.include_day) intercept += cfg.day_effects[static_cast<std::size_t>(L.reference_day)];
  if (m.spec.include_weather) {
    intercept += cfg.weather_effects[static_cast<std::size_t>(L.reference_weather)];
  }
  truth(0) = intercept;
  for (const auto& [city, col] : L.city_cols) {
    truth(col) = base_of(city) - base_of(L.reference_city);
  }
  for (int h = 0; h < 24; ++h) {
    if (L.hour_cols[h] >= 0) {
      truth(L.hour_cols[h]) = cfg.hour_effects[static_cast<std::size_t>(h)] -
                              cfg.hour_effects[static_cast<std::size_t>(L.reference_hour)];
    }
  }
  for (int d = 0; d < 7; ++d) {
    if (L.day_cols[d] >= 0) {
      truth(L.day_cols[d]) = cfg.day_effects[static_cast<std::size_t>(d)] -
                             cfg.day_effects[static_cast<std::size_t>(L.reference_day)];
    }
  }
  for (int w = 0; w < kWeatherCategoryCount; ++w) {
    if (L.weather_cols[w] >= 0) {
      truth(L.weather_cols[w]) =
          cfg.weather_effects[static_cast<std::size_t>(w)] -
          cfg.weather_effects[static_cast<std::size_t>(static_cast<int>(L.reference_weather))];
    }
  }
  if (L.social_col >= 0) truth(L.social_col) = cfg.social_slope;
  return truth;
}

/// The intercept of a no-city model absorbs an average base rate, not any
/// particular city's; ground_truth_beta stays valid for specs that include
/// city. This predicate says whether a recovery check may use a column.
inline bool column_recoverable(const model::FittedModel& m, std::size_t column) {
  if (column == 0) return m.spec.include_city;  // intercept pins to the reference city's base
  return true;
}

// --- manifest ---------------------------------------------------------

inline nlohmann::json manifest_json(const GeneratorConfig& cfg,
                                    const std::vector<InjectedEvent>& events) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["window"] = {{"start", timeutil::format_date(cfg.window_start)},
                 {"end", timeutil::format_date(cfg.window_end)}};
  j["tweets_per_hour"] = cfg.tweets_per_hour;
  j["social_slope"] = cfg.social_slope;
  j["social_range"] = {cfg.social_min, cfg.social_max};
  j["hour_effects"] = cfg.hour_effects;
  j["day_effects"] = cfg.day_effects;
  nlohmann::json weff = nlohmann::json::object();
  nlohmann::json wprob = nlohmann::json::object();
  for (int w = 0; w < kWeatherCategoryCount; ++w) {
    weff[std::string(to_string(static_cast<WeatherCategory>(w)))] =
        cfg.weather_effects[static_cast<std::size_t>(w)];
    wprob[std::string(to_string(static_cast<WeatherCategory>(w)))] =
        cfg.weather_probs[static_cast<std::size_t>(w)];
  }
  j["weather_effects"] = weff;
  j["weather_probs"] = wprob;
  j["cities"] = nlohmann::json::array();
  for (const auto& c : cfg.cities) {
    j["cities"].push_back({{"city_id", c.city_id},
                           {"display_name", c.display_name},
                           {"country", c.country},
                           {"tz", c.tz},
                           {"fallback_offset_minutes", c.fallback_offset_minutes},
                           {"base_pos", c.base_pos},
                           {"base_neg", c.base_neg},
                           {"tweets_per_hour", c.tweets_per_hour}});
  }
  j["events"] = nlohmann::json::array();
  for (const auto& ev : events) {
    j["events"].push_back({{"city_id", ev.city_id},
                           {"start_date", timeutil::format_date(ev.start_date)},
                           {"start_hour", ev.start_hour},
                           {"end_date", timeutil::format_date(ev.end_date)},
                           {"end_hour", ev.end_hour},
                           {"polarity", std::string(to_string(ev.polarity))},
                           {"delta", ev.delta},
                           {"label", ev.label}});
  }
  j["config_hash"] = hex64(fnv1a64(j.dump()));
  return j;
}

inline std::pair<GeneratorConfig, std::vector<InjectedEvent>> parse_generator_json(
    const nlohmann::json& j, const std::string& origin) {
  const auto fail = [&](const std::string& msg) -> void {
    throw ValidationError("synth config " + origin + ": " + msg);
  };
  GeneratorConfig cfg;
  std::vector<InjectedEvent> events;
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    auto ws = timeutil::parse_date(j.at("window").at("start").get<std::string>());
    auto we = timeutil::parse_date(j.at("window").at("end").get<std::string>());
    if (!ws || !we) fail("bad window dates");
    cfg.window_start = *ws;
    cfg.window_end = *we;
    if (j.contains("tweets_per_hour")) cfg.tweets_per_hour = j.at("tweets_per_hour").get<double>();
    if (j.contains("social_slope")) cfg.social_slope = j.at("social_slope").get<double>();
    if (j.contains("social_range")) {
      cfg.social_min = j.at("social_range").at(0).get<double>();
      cfg.social_max = j.at("social_range").at(1).get<double>();
    }
    if (j.contains("hour_effects")) {
      auto v = j.at("hour_effects").get<std::vector<double>>();
      if (v.size() != 24) fail("hour_effects must have 24 entries");
      std::copy(v.begin(), v.end(), cfg.hour_effects.begin());
    }
    if (j.contains("day_effects")) {
      auto v = j.at("day_effects").get<std::vector<double>>();
      if (v.size() != 7) fail("day_effects must have 7 entries");
      std::copy(v.begin(), v.end(), cfg.day_effects.begin());
    }
    auto read_weather_map = [&](const char* key, std::array<double, kWeatherCategoryCount>& out) {
      if (!j.contains(key)) return;
      for (const auto& [name, value] : j.at(key).items()) {
        auto cat = parse_weather_category(name);
        if (!cat) fail(std::string(key) + ": unknown category '" + name + "'");
        out[static_cast<std::size_t>(static_cast<int>(*cat))] = value.get<double>();
      }
    };
    read_weather_map("weather_effects", cfg.weather_effects);
    read_weather_map("weather_probs", cfg.weather_probs);
    for (const auto& cj : j.at("cities")) {
      SynthCity c;
      c.city_id = cj.at("city_id").get<std::string>();
      if (cj.contains("display_name")) c.display_name = cj.at("display_name").get<std::string>();
      c.country = cj.at("country").get<std::string>();
      if (cj.contains("tz")) c.tz = cj.at("tz").get<std::string>();
      if (cj.contains("fallback_offset_minutes")) {
        c.fallback_offset_minutes = cj.at("fallback_offset_minutes").get<int>();
      }
      c.base_pos = cj.at("base_pos").get<double>();
      c.base_neg = cj.at("base_neg").get<double>();
      if (cj.contains("tweets_per_hour")) c.tweets_per_hour = cj.at("tweets_per_hour").get<double>();
      cfg.cities.push_back(std::move(c));
    }
    if (j.contains("events")) {
      for (const auto& ej : j.at("events")) {
        InjectedEvent ev;
        ev.city_id = ej.at("city_id").get<std::string>();
        auto sd = timeutil::parse_date(ej.at("start_date").get<std::string>());
        auto ed = timeutil::parse_date(ej.at("end_date").get<std::string>());
        if (!sd || !ed) fail("bad event dates");
        ev.start_date = *sd;
        ev.end_date = *ed;
        if (ej.contains("start_hour")) ev.start_hour = ej.at("start_hour").get<int>();
        if (ej.contains("end_hour")) ev.end_hour = ej.at("end_hour").get<int>();
        auto pol = parse_polarity(ej.at("polarity").get<std::string>());
        if (!pol) fail("bad event polarity");
        ev.polarity = *pol;
        ev.delta = ej.at("delta").get<double>();
        if (ej.contains("label")) ev.label = ej.at("label").get<std::string>();
        events.push_back(std::move(ev));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(e.what());
  }
  return {std::move(cfg), std::move(events)};
}

// --- detection evaluation ---------------------------------------------

struct DetectionOutcome {
  InjectedEvent event;
  bool detected = false;
  std::size_t rank = 0;  // valid when detected
};

struct DetectionReport {
  std::vector<DetectionOutcome> outcomes;
  std::uint64_t false_alarms = 0;  // undeclared events ranked above the worst true hit
  std::size_t top_k = 0;
};

/// An event summary matches an injected event when polarity, expected
/// direction, place (city or its country), and date ranges all line up.
inline bool matches(const deviation::EventSummary& s, const InjectedEvent& ev,
                    const geo::CityRegistry& registry) {
  if (s.polarity != ev.polarity) return false;
  const Direction expected = ev.delta >= 0 ? Direction::kSurplus : Direction::kDeficit;
  if (s.direction != expected) return false;
  const geo::CityEntry* entry = registry.by_id(ev.city_id);
  if (!entry) return false;
  if (s.id != ev.city_id && s.id != entry->country) return false;
  return !(s.end_date < ev.start_date || ev.end_date < s.start_date);
}

inline DetectionReport evaluate_detection(const std::vector<InjectedEvent>& injected,
                                          const std::vector<deviation::EventSummary>& events,
                                          const geo::CityRegistry& registry,
                                          std::size_t top_k = 20) {
  DetectionReport report;
  report.top_k = top_k;
  std::size_t worst_true_rank = 0;
  std::vector<bool> event_is_true(events.size(), false);
  for (const auto& ev : injected) {
    DetectionOutcome outcome;
    outcome.event = ev;
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto& s = events[i];
      if (s.rank > top_k) continue;
      if (matches(s, ev, registry)) {
        event_is_true[i] = true;
        if (!outcome.detected || s.rank < outcome.rank) {
          outcome.detected = true;
          outcome.rank = s.rank;
        }
      }
    }
    if (outcome.detected) worst_true_rank = std::max(worst_true_rank, outcome.rank);
    report.outcomes.push_back(std::move(outcome));
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (!event_is_true[i] && events[i].rank < worst_true_rank) ++report.false_alarms;
  }
  return report;
}

inline void write_detection_report_csv(std::ostream& out, const DetectionReport& report) {
  out << "label,city_id,polarity,delta,detected,rank,false_alarms\n";
  for (const auto& o : report.outcomes) {
    csv::write_row(out, {o.event.label, o.event.city_id, std::string(to_string(o.event.polarity)),
                         deviation::detail::format_g17(o.event.delta),
                         o.detected ? "true" : "false",
                         o.detected ? std::to_string(o.rank) : std::string(),
                         std::to_string(report.false_alarms)});
  }
}

// --- bias report -------------------------------------------------------

/// Country share of top-K events per (model, polarity-surplus) class:
/// reproduces the full-vs-degenerate-vs-null comparison.
struct BiasRow {
  std::string country;
  std::size_t city_count = 0;
  double city_share = 0.0;
  // counts of top-K surplus events per model, per polarity
  std::size_t full_pos = 0, full_neg = 0;
  std::size_t nocity_pos = 0, nocity_neg = 0;
  std::size_t null_pos = 0, null_neg = 0;
  bool flagged = false;
};

struct BiasReport {
  std::vector<BiasRow> rows;
  std::size_t top_k = 0;
  double margin_events = 2.0;
};

namespace detail {

inline std::string country_of(const std::string& id, const geo::CityRegistry& registry) {
  if (const geo::CityEntry* entry = registry.by_id(id)) return entry->country;
  return id;  // country-scoped events carry the country code directly
}

inline void count_top_surplus(const std::vector<deviation::EventSummary>& events,
                              Polarity polarity, std::size_t top_k,
                              const geo::CityRegistry& registry,
                              std::map<std::string, std::size_t>& counts) {
  std::size_t taken = 0;
  for (const auto& s : events) {  // events arrive in rank order
    if (s.polarity != polarity || s.direction != Direction::kSurplus) continue;
    if (++taken > top_k) break;
    ++counts[country_of(s.id, registry)];
  }
}

}  // namespace detail

inline BiasReport bias_report(const std::vector<deviation::EventSummary>& full_events,
                              const std::vector<deviation::EventSummary>& nocity_events,
                              const std::vector<deviation::EventSummary>& null_events,
                              const geo::CityRegistry& registry, std::size_t top_k = 20,
                              double margin_events = 2.0) {
  BiasReport report;
  report.top_k = top_k;
  report.margin_events = margin_events;

  std::map<std::string, std::size_t> city_counts;
  for (const auto& e : registry.entries()) ++city_counts[e.country];
  const double total_cities = static_cast<double>(registry.entries().size());

  std::map<std::string, std::size_t> counts[3][2];
  const std::vector<deviation::EventSummary>* sources[3] = {&full_events, &nocity_events,
                                                            &null_events};
  for (int mdl = 0; mdl < 3; ++mdl) {
    detail::count_top_surplus(*sources[mdl], Polarity::kPositive, top_k, registry,
                              counts[mdl][0]);
    detail::count_top_surplus(*sources[mdl], Polarity::kNegative, top_k, registry,
                              counts[mdl][1]);
  }

  for (const auto& [country, n_cities] : city_counts) {
    BiasRow row;
    row.country = country;
    row.city_count = n_cities;
    row.city_share = static_cast<double>(n_cities) / total_cities;
    auto get = [&](int mdl, int pol) -> std::size_t {
      auto it = counts[mdl][pol].find(country);
      return it == counts[mdl][pol].end() ? 0 : it->second;
    };
    row.full_pos = get(0, 0);
    row.full_neg = get(0, 1);
    row.nocity_pos = get(1, 0);
    row.nocity_neg = get(1, 1);
    row.null_pos = get(2, 0);
    row.null_neg = get(2, 1);
    const double dp = std::fabs(static_cast<double>(row.nocity_pos) -
                                static_cast<double>(row.full_pos));
    const double dn = std::fabs(static_cast<double>(row.nocity_neg) -
                                static_cast<double>(row.full_neg));
    row.flagged = dp > margin_events || dn > margin_events;
    report.rows.push_back(std::move(row));
  }
  return report;
}

inline void write_bias_report_csv(std::ostream& out, const BiasReport& report) {
  out << "country,city_count,city_share,full_pos,full_neg,nocity_pos,nocity_neg,null_pos,"
         "null_neg,flagged\n";
  for (const auto& r : report.rows) {
    csv::write_row(out, {r.country, std::to_string(r.city_count),
                         deviation::detail::format_g17(r.city_share), std::to_string(r.full_pos),
                         std::to_string(r.full_neg), std::to_string(r.nocity_pos),
                         std::to_string(r.nocity_neg), std::to_string(r.null_pos),
                         std::to_string(r.null_neg), r.flagged ? "true" : "false"});
  }
}

}  // namespace sentigrid::synth
