#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "sentigrid/aggregate.hpp"
#include "sentigrid/csv.hpp"
#include "sentigrid/geo.hpp"
#include "sentigrid/model.hpp"
#include "sentigrid/stats.hpp"
#include "sentigrid/types.hpp"

namespace sentigrid::deviation {

/// One bin scored against the model expectation for one polarity.
struct DeviationScore {
  BinKey key;
  Polarity polarity = Polarity::kPositive;
  std::uint64_t n_total = 0;
  std::uint64_t observed = 0;
  double expected = 0.0;  // model proportion times n_total
  double statistic = 0.0;
  double p_value = 1.0;
  Direction direction = Direction::kDeficit;  // deficit at exact equality
  bool eligible = false;
};

/// Two-cell chi-square (1 df) of observed vs expected labeled counts.
/// expected = predict(m, bin) * n_total; eligibility requires n >= 30 and
/// both expected cells >= 5. Ineligible bins are scored but never ranked.
inline DeviationScore score_bin(const aggregate::CityHourBin& bin, const model::FittedModel& m,
                                model::UnseenLevelTally* tally = nullptr) {
  DeviationScore s;
  s.key = bin.key;
  s.polarity = m.outcome;
  s.n_total = bin.n_total;
  s.observed = m.outcome == Polarity::kPositive ? bin.n_pos : bin.n_neg;

  const double n = static_cast<double>(bin.n_total);
  const double e = model::predict(m, bin, tally) * n;
  s.expected = e;

  const double o = static_cast<double>(s.observed);
  // Both cells are positive: the prediction clamp keeps e in (0, n).
  const double diff = o - e;
  s.statistic = diff * diff / e + diff * diff / (n - e);
  s.p_value = stats::chi_square_upper_p(s.statistic, 1);
  s.direction = o > e ? Direction::kSurplus : Direction::kDeficit;
  s.eligible = bin.n_total >= 30 && e >= 5.0 && (n - e) >= 5.0;
  return s;
}

/// Descending by statistic; ties broken by earlier (date, hour), then
/// city_id. Only eligible scores of the requested polarity are ranked.
inline std::vector<DeviationScore> rank_deviations(const std::vector<DeviationScore>& scores,
                                                   Polarity polarity) {
  std::vector<DeviationScore> out;
  for (const auto& s : scores) {
    if (s.eligible && s.polarity == polarity) out.push_back(s);
  }
  std::sort(out.begin(), out.end(), [](const DeviationScore& a, const DeviationScore& b) {
    if (a.statistic != b.statistic) return a.statistic > b.statistic;
    if (a.key.day != b.key.day) return a.key.day < b.key.day;
    if (a.key.hour != b.key.hour) return a.key.hour < b.key.hour;
    return a.key.city_id < b.key.city_id;
  });
  return out;
}

/// D / rank for rank >= 2; the top-ranked (never-exceeded) event reports
/// "at least D" and renders as ">D days".
struct RecurrenceInterval {
  bool at_least = false;
  double days = 0.0;

  // ">60 days", "30 days", "8.6 days": one decimal, trailing .0 dropped.
  std::string render() const {
    char buf[48];
    if (at_least) {
      std::snprintf(buf, sizeof buf, ">%g days", days);
      return buf;
    }
    std::snprintf(buf, sizeof buf, "%.1f", days);
    std::string s(buf);
    if (s.size() > 2 && s.compare(s.size() - 2, 2, ".0") == 0) s.erase(s.size() - 2);
    return s + " days";
  }
};

inline RecurrenceInterval recurrence_interval(std::size_t rank, double observation_days) {
  if (rank < 1) throw ValidationError("recurrence_interval: rank must be >= 1");
  if (!(observation_days > 0.0)) {
    throw ValidationError("recurrence_interval: observation days must be > 0");
  }
  if (rank == 1) return RecurrenceInterval{true, observation_days};
  return RecurrenceInterval{false, observation_days / static_cast<double>(rank)};
}

enum class EventScope { kCityDay, kCountryHour, kCountryDay, kCountryMultiday };

inline std::string_view to_string(EventScope s) {
  switch (s) {
    case EventScope::kCityDay: return "city_day";
    case EventScope::kCountryHour: return "country_hour";
    case EventScope::kCountryDay: return "country_day";
    case EventScope::kCountryMultiday: return "country_multiday";
  }
  return "";
}

/// Significant deviations unified across hours, days, and same-country
/// cities, labeled by the strongest member.
struct MergedEvent {
  EventScope scope = EventScope::kCityDay;
  std::vector<DeviationScore> members;
  std::string place_id;  // city_id when all members share one city, else country
  std::string country;
  Polarity polarity = Polarity::kPositive;
  Direction direction = Direction::kSurplus;
  double max_statistic = 0.0;
  timeutil::CivilDate start_date;
  int start_hour = 0;
  timeutil::CivilDate end_date;
  int end_hour = 0;
  std::size_t rank = 0;  // combined ranking across polarities
  RecurrenceInterval recurrence;
};

inline std::vector<DeviationScore> significant_scores(const std::vector<DeviationScore>& scores,
                                                      double alpha = 0.05) {
  std::vector<DeviationScore> out;
  for (const auto& s : scores) {
    if (s.eligible && s.p_value < alpha) out.push_back(s);
  }
  return out;
}

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

/// Merges significant scores into events.
///
/// Pass 1 unions scores of one polarity and direction that share a city and
/// local date, or share a country, local date, and hour of day. Pass 2
/// merges single-city components whose dates form a contiguous calendar
/// run spanning more than one day. The result carries a combined ranking
/// (both polarities together) by max statistic, which fixes each event's
/// recurrence interval over `observation_days`.
inline std::vector<MergedEvent> merge_events(const std::vector<DeviationScore>& significant,
                                             const geo::CityRegistry& registry,
                                             double observation_days) {
  for (const auto& s : significant) {
    if (!registry.by_id(s.key.city_id)) {
      throw ValidationError("merge_events: city '" + s.key.city_id + "' absent from registry");
    }
  }

  const std::size_t n = significant.size();
  detail::UnionFind uf(n);

  // (polarity, direction, city, date) and (polarity, direction, country,
  // date, hour) grouping keys.
  std::map<std::tuple<int, int, std::string, std::int64_t>, std::size_t> by_city_day;
  std::map<std::tuple<int, int, std::string, std::int64_t, int>, std::size_t> by_country_day_hour;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = significant[i];
    const std::string& country = registry.by_id(s.key.city_id)->country;
    auto ck = std::make_tuple(static_cast<int>(s.polarity), static_cast<int>(s.direction),
                              s.key.city_id, s.key.day);
    if (auto [it, inserted] = by_city_day.emplace(ck, i); !inserted) uf.unite(i, it->second);
    auto nk = std::make_tuple(static_cast<int>(s.polarity), static_cast<int>(s.direction),
                              country, s.key.day, s.key.hour);
    if (auto [it, inserted] = by_country_day_hour.emplace(nk, i); !inserted) {
      uf.unite(i, it->second);
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> components;
  for (std::size_t i = 0; i < n; ++i) components[uf.find(i)].push_back(i);

  struct Component {
    std::vector<std::size_t> member_idx;
    std::set<std::string> cities;
    std::string country;
    Polarity polarity;
    Direction direction;
    std::int64_t first_day = 0, last_day = 0;
  };
  std::vector<Component> comps;
  for (auto& [root, idx] : components) {
    Component c;
    c.member_idx = std::move(idx);
    const auto& first = significant[c.member_idx.front()];
    c.polarity = first.polarity;
    c.direction = first.direction;
    c.country = registry.by_id(first.key.city_id)->country;
    c.first_day = c.last_day = first.key.day;
    for (std::size_t i : c.member_idx) {
      const auto& s = significant[i];
      c.cities.insert(s.key.city_id);
      c.first_day = std::min(c.first_day, s.key.day);
      c.last_day = std::max(c.last_day, s.key.day);
    }
    comps.push_back(std::move(c));
  }

  // Pass 2: single-city components chain across contiguous calendar dates
  // of their city; a run spanning >= 2 distinct dates merges into one
  // multi-day event. Multi-city components never chain across days, so a
  // chronic country-wide baseline surplus reports one event per day
  // instead of a single window-long blob.
  std::map<std::tuple<std::string, int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    if (comps[i].cities.size() != 1) continue;
    groups[{*comps[i].cities.begin(), static_cast<int>(comps[i].polarity),
            static_cast<int>(comps[i].direction)}]
        .push_back(i);
  }
  detail::UnionFind cf(comps.size());
  for (auto& [key, idx] : groups) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return comps[a].first_day < comps[b].first_day;
    });
    std::size_t run_start = 0;
    std::int64_t run_first = comps[idx[0]].first_day;
    std::int64_t run_last = comps[idx[0]].last_day;
    auto flush_run = [&](std::size_t run_end) {
      if (run_last > run_first) {
        for (std::size_t g = run_start + 1; g < run_end; ++g) cf.unite(idx[run_start], idx[g]);
      }
    };
    for (std::size_t g = 1; g < idx.size(); ++g) {
      const Component& cur = comps[idx[g]];
      if (cur.first_day <= run_last + 1) {
        run_last = std::max(run_last, cur.last_day);
      } else {
        flush_run(g);
        run_start = g;
        run_first = cur.first_day;
        run_last = cur.last_day;
      }
    }
    flush_run(idx.size());
  }

  std::map<std::size_t, std::vector<std::size_t>> merged_groups;
  for (std::size_t i = 0; i < comps.size(); ++i) merged_groups[cf.find(i)].push_back(i);

  std::vector<MergedEvent> events;
  for (const auto& [root, comp_idx] : merged_groups) {
    MergedEvent ev;
    std::set<std::string> cities;
    ev.polarity = comps[comp_idx.front()].polarity;
    ev.direction = comps[comp_idx.front()].direction;
    ev.country = comps[comp_idx.front()].country;
    for (std::size_t ci : comp_idx) {
      const Component& c = comps[ci];
      for (std::size_t m : c.member_idx) ev.members.push_back(significant[m]);
      cities.insert(c.cities.begin(), c.cities.end());
    }
    std::sort(ev.members.begin(), ev.members.end(),
              [](const DeviationScore& a, const DeviationScore& b) {
                return std::tie(a.key.day, a.key.hour, a.key.city_id) <
                       std::tie(b.key.day, b.key.hour, b.key.city_id);
              });
    ev.max_statistic = 0.0;
    for (const auto& m : ev.members) ev.max_statistic = std::max(ev.max_statistic, m.statistic);
    ev.start_date = timeutil::civil_from_days(ev.members.front().key.day);
    ev.start_hour = ev.members.front().key.hour;
    ev.end_date = timeutil::civil_from_days(ev.members.back().key.day);
    ev.end_hour = ev.members.back().key.hour;

    const std::int64_t first_day = ev.members.front().key.day;
    const std::int64_t last_day = ev.members.back().key.day;
    std::set<int> hours;
    for (const auto& m : ev.members) hours.insert(m.key.hour);
    if (last_day > first_day) {
      ev.scope = EventScope::kCountryMultiday;
    } else if (cities.size() > 1) {
      ev.scope = hours.size() == 1 ? EventScope::kCountryHour : EventScope::kCountryDay;
    } else {
      ev.scope = EventScope::kCityDay;
    }
    ev.place_id = cities.size() == 1 ? *cities.begin() : ev.country;
    events.push_back(std::move(ev));
  }

  std::sort(events.begin(), events.end(), [](const MergedEvent& a, const MergedEvent& b) {
    if (a.max_statistic != b.max_statistic) return a.max_statistic > b.max_statistic;
    const auto ak = std::tuple(timeutil::days_from_civil(a.start_date), a.start_hour, a.place_id,
                               static_cast<int>(a.polarity));
    const auto bk = std::tuple(timeutil::days_from_civil(b.start_date), b.start_hour, b.place_id,
                               static_cast<int>(b.polarity));
    return ak < bk;
  });
  for (std::size_t i = 0; i < events.size(); ++i) {
    events[i].rank = i + 1;
    events[i].recurrence = recurrence_interval(i + 1, observation_days);
  }
  return events;
}

namespace detail {
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

inline constexpr const char* kDeviationCsvHeader =
    "city_id,local_date,hour,polarity,observed,expected,statistic,p_value,direction,eligible";

inline void write_deviations_csv(std::ostream& out, const std::vector<DeviationScore>& scores) {
  out << kDeviationCsvHeader << '\n';
  for (const auto& s : scores) {
    csv::write_row(out, {s.key.city_id,
                         timeutil::format_date(timeutil::civil_from_days(s.key.day)),
                         std::to_string(s.key.hour), std::string(to_string(s.polarity)),
                         std::to_string(s.observed), detail::format_g17(s.expected),
                         detail::format_g17(s.statistic), detail::format_g17(s.p_value),
                         std::string(to_string(s.direction)), s.eligible ? "true" : "false"});
  }
}

inline std::vector<DeviationScore> read_deviations_csv(std::istream& in,
                                                       const std::string& origin) {
  csv::Reader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row) || row.size() < 10 || row[0] != "city_id") {
    throw ValidationError("deviations " + origin + ": bad or missing header");
  }
  std::vector<DeviationScore> out;
  std::size_t lineno = 1;
  while (reader.next(row)) {
    ++lineno;
    if (row.size() == 1 && row[0].empty()) continue;
    const auto fail = [&](const std::string& msg) {
      throw ValidationError("deviations " + origin + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (row.size() != 10) fail("expected 10 columns");
    DeviationScore s;
    s.key.city_id = row[0];
    auto date = timeutil::parse_date(row[1]);
    if (!date) fail("bad date '" + row[1] + "'");
    s.key.day = timeutil::days_from_civil(*date);
    auto pol = parse_polarity(row[3]);
    auto dir = parse_direction(row[8]);
    if (!pol) fail("bad polarity '" + row[3] + "'");
    if (!dir) fail("bad direction '" + row[8] + "'");
    s.polarity = *pol;
    s.direction = *dir;
    try {
      s.key.hour = std::stoi(row[2]);
      s.observed = std::stoull(row[4]);
      s.expected = std::stod(row[5]);
      s.statistic = std::stod(row[6]);
      s.p_value = std::stod(row[7]);
    } catch (const std::exception&) {
      fail("bad numeric field");
    }
    if (row[9] == "true") {
      s.eligible = true;
    } else if (row[9] == "false") {
      s.eligible = false;
    } else {
      fail("bad eligible flag '" + row[9] + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Flat view of a merged event matching the events CSV. Evaluation tools
/// consume this shape whether events come from memory or from disk.
struct EventSummary {
  std::size_t rank = 0;
  std::string scope;
  std::string id;
  Polarity polarity = Polarity::kPositive;
  Direction direction = Direction::kSurplus;
  timeutil::CivilDate start_date;
  int start_hour = 0;
  timeutil::CivilDate end_date;
  int end_hour = 0;
  double max_statistic = 0.0;
  std::string recurrence;
};

inline EventSummary summarize(const MergedEvent& ev) {
  EventSummary s;
  s.rank = ev.rank;
  s.scope = std::string(to_string(ev.scope));
  s.id = ev.place_id;
  s.polarity = ev.polarity;
  s.direction = ev.direction;
  s.start_date = ev.start_date;
  s.start_hour = ev.start_hour;
  s.end_date = ev.end_date;
  s.end_hour = ev.end_hour;
  s.max_statistic = ev.max_statistic;
  s.recurrence = ev.recurrence.render();
  return s;
}

inline constexpr const char* kEventCsvHeader =
    "rank,scope,id,polarity,direction,start,end,max_statistic,recurrence_interval";

inline std::string format_local_hour(const timeutil::CivilDate& d, int hour) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%s %02d:00", timeutil::format_date(d).c_str(), hour);
  return buf;
}

inline void write_events_csv(std::ostream& out, const std::vector<MergedEvent>& events) {
  out << kEventCsvHeader << '\n';
  for (const auto& ev : events) {
    const EventSummary s = summarize(ev);
    csv::write_row(out, {std::to_string(s.rank), s.scope, s.id,
                         std::string(to_string(s.polarity)), std::string(to_string(s.direction)),
                         format_local_hour(s.start_date, s.start_hour),
                         format_local_hour(s.end_date, s.end_hour),
                         detail::format_g17(s.max_statistic), s.recurrence});
  }
}

inline std::vector<EventSummary> read_events_csv(std::istream& in, const std::string& origin) {
  csv::Reader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row) || row.size() < 9 || row[0] != "rank") {
    throw ValidationError("events " + origin + ": bad or missing header");
  }
  std::vector<EventSummary> out;
  std::size_t lineno = 1;
  auto parse_local = [&](const std::string& text, timeutil::CivilDate& date, int& hour) {
    if (text.size() != 16 || text[10] != ' ' || text[13] != ':') return false;
    auto d = timeutil::parse_date(text.substr(0, 10));
    if (!d) return false;
    date = *d;
    try {
      hour = std::stoi(text.substr(11, 2));
    } catch (const std::exception&) {
      return false;
    }
    return hour >= 0 && hour <= 23;
  };
  while (reader.next(row)) {
    ++lineno;
    if (row.size() == 1 && row[0].empty()) continue;
    const auto fail = [&](const std::string& msg) {
      throw ValidationError("events " + origin + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (row.size() != 9) fail("expected 9 columns");
    EventSummary s;
    auto pol = parse_polarity(row[3]);
    auto dir = parse_direction(row[4]);
    if (!pol) fail("bad polarity '" + row[3] + "'");
    if (!dir) fail("bad direction '" + row[4] + "'");
    s.polarity = *pol;
    s.direction = *dir;
    s.scope = row[1];
    s.id = row[2];
    try {
      s.rank = std::stoull(row[0]);
      s.max_statistic = std::stod(row[7]);
    } catch (const std::exception&) {
      fail("bad numeric field");
    }
    if (!parse_local(row[5], s.start_date, s.start_hour)) fail("bad start '" + row[5] + "'");
    if (!parse_local(row[6], s.end_date, s.end_hour)) fail("bad end '" + row[6] + "'");
    s.recurrence = row[8];
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sentigrid::deviation
