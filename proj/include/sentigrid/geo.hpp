#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "sentigrid/csv.hpp"
#include "sentigrid/time.hpp"
#include "sentigrid/types.hpp"
#include "sentigrid/tzif.hpp"

namespace sentigrid::geo {

struct CityEntry {
  std::string city_id;
  std::string display_name;
  std::string country;  // ISO-3166 alpha-2
  std::string tz;       // IANA identifier
  int fallback_offset_minutes = 0;
  std::vector<std::string> aliases;  // lowercased, normalized
  std::shared_ptr<const timeutil::TimeZone> zone;  // null when no tz database
};

/// Case-fold (ASCII), trim, collapse internal whitespace, strip leading and
/// trailing punctuation.
inline std::string normalize_location(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  std::size_t b = 0, e = out.size();
  auto is_strippable = [](unsigned char c) { return std::ispunct(c) || std::isspace(c); };
  while (b < e && is_strippable(static_cast<unsigned char>(out[b]))) ++b;
  while (e > b && is_strippable(static_cast<unsigned char>(out[e - 1]))) --e;
  return out.substr(b, e - b);
}

/// Immutable after load; shareable across workers.
class CityRegistry {
 public:
  const std::vector<CityEntry>& entries() const { return entries_; }

  const CityEntry* by_id(std::string_view city_id) const {
    auto it = id_index_.find(std::string(city_id));
    return it == id_index_.end() ? nullptr : &entries_[it->second];
  }

  const CityEntry* by_alias(std::string_view normalized_alias) const {
    auto it = alias_index_.find(std::string(normalized_alias));
    return it == alias_index_.end() ? nullptr : &entries_[it->second];
  }

  std::size_t alias_count() const { return alias_index_.size(); }

  void add(CityEntry entry) {
    if (id_index_.count(entry.city_id)) {
      throw ValidationError("registry: duplicate city_id '" + entry.city_id + "'");
    }
    const std::size_t idx = entries_.size();
    for (const auto& a : entry.aliases) {
      auto [it, inserted] = alias_index_.emplace(a, idx);
      if (!inserted) {
        throw ValidationError("registry: alias '" + a + "' is ambiguous between '" +
                              entries_[it->second].city_id + "' and '" + entry.city_id + "'");
      }
    }
    id_index_.emplace(entry.city_id, idx);
    entries_.push_back(std::move(entry));
  }

 private:
  std::vector<CityEntry> entries_;
  std::unordered_map<std::string, std::size_t> alias_index_;
  std::unordered_map<std::string, std::size_t> id_index_;
};

/// Registry CSV: city_id,display_name,country,tz,fallback_offset_minutes,aliases
/// with aliases ';'-separated. Timezones resolve against `zoneinfo_dir`; when
/// that directory is absent entirely, entries fall back to fixed offsets.
inline CityRegistry load_city_registry(const std::string& path,
                                       const std::string& zoneinfo_dir = "/usr/share/zoneinfo") {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open registry file: " + path);
  const bool have_tzdb = std::ifstream(zoneinfo_dir + "/UTC").good();

  csv::Reader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row) || row.size() < 6 || row[0] != "city_id") {
    throw ValidationError("registry " + path + ": bad or missing header");
  }
  CityRegistry reg;
  std::size_t lineno = 1;
  while (reader.next(row)) {
    ++lineno;
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 6) {
      throw ValidationError("registry " + path + ":" + std::to_string(lineno) +
                            ": expected 6 columns, got " + std::to_string(row.size()));
    }
    CityEntry e;
    e.city_id = row[0];
    e.display_name = row[1];
    e.country = row[2];
    e.tz = row[3];
    try {
      e.fallback_offset_minutes = std::stoi(row[4]);
    } catch (const std::exception&) {
      throw ValidationError("registry " + path + ":" + std::to_string(lineno) +
                            ": bad fallback_offset_minutes '" + row[4] + "'");
    }
    if (e.city_id.empty()) {
      throw ValidationError("registry " + path + ":" + std::to_string(lineno) + ": empty city_id");
    }
    std::string_view aliases(row[5]);
    while (!aliases.empty()) {
      std::size_t semi = aliases.find(';');
      std::string alias = normalize_location(aliases.substr(0, semi));
      if (!alias.empty()) e.aliases.push_back(std::move(alias));
      if (semi == std::string_view::npos) break;
      aliases.remove_prefix(semi + 1);
    }
    if (have_tzdb) {
      auto zone = timeutil::TimeZone::load(e.tz, zoneinfo_dir);
      if (!zone) {
        throw ValidationError("registry " + path + ":" + std::to_string(lineno) +
                              ": unknown timezone id '" + e.tz + "'");
      }
      e.zone = std::make_shared<const timeutil::TimeZone>(std::move(*zone));
    }
    reg.add(std::move(e));
  }
  return reg;
}

struct LocalTime {
  timeutil::CivilDate date;
  int hour = 0;         // 0..23
  int day_of_week = 0;  // Monday = 0
};

/// Local calendar fields for a UTC instant in the entry's zone. DST rules
/// apply when the zone was loaded from the tz database; otherwise the
/// fixed fallback offset is used.
inline LocalTime localize_timestamp(std::int64_t utc_seconds, const CityEntry& entry) {
  const std::int64_t offset =
      entry.zone ? entry.zone->offset_at(utc_seconds)
                 : static_cast<std::int64_t>(entry.fallback_offset_minutes) * 60;
  const timeutil::SplitTime st = timeutil::split_epoch_seconds(utc_seconds + offset);
  return LocalTime{st.date, st.hour, st.day_of_week};
}

struct GazetteerCandidate {
  std::string resolved_name;
  std::string type_tag;  // lowercase
  double confidence = 0.0;
  std::string raw;
};

inline const std::unordered_set<std::string>& accepted_place_types() {
  static const std::unordered_set<std::string> kTypes{"city",   "county", "village", "suburb",
                                                      "hamlet", "state",  "country"};
  return kTypes;
}

/// First candidate whose type is an accepted place type, in response order.
inline std::optional<GazetteerCandidate> filter_gazetteer_candidates(
    std::span<const GazetteerCandidate> candidates) {
  for (const auto& c : candidates) {
    if (accepted_place_types().count(c.type_tag)) return c;
  }
  return std::nullopt;
}

/// A gazetteer query backend. `query` returns candidates in response
/// order, or nullopt on transport failure (timeouts, bad responses).
class GazetteerSource {
 public:
  virtual ~GazetteerSource() = default;
  virtual std::optional<std::vector<GazetteerCandidate>> query(const std::string& raw) = 0;
};

/// Replays recorded responses; queries are keyed by normalized string.
class FixtureGazetteerSource : public GazetteerSource {
 public:
  void add(const std::string& query, std::vector<GazetteerCandidate> response) {
    responses_[normalize_location(query)] = std::move(response);
  }

  std::optional<std::vector<GazetteerCandidate>> query(const std::string& raw) override {
    ++query_count_;
    auto it = responses_.find(normalize_location(raw));
    if (it == responses_.end()) return std::vector<GazetteerCandidate>{};
    return it->second;
  }

  std::size_t query_count() const { return query_count_; }

 private:
  std::unordered_map<std::string, std::vector<GazetteerCandidate>> responses_;
  std::size_t query_count_ = 0;
};

/// Resolution cache entry; expires_at_epoch == 0 means no expiry.
struct CacheEntry {
  std::optional<std::string> city_id;  // nullopt = cached negative
  std::int64_t expires_at_epoch = 0;
};

/// Keyed by normalized query. Concurrent reads with serialized writes.
class ResolutionCache {
 public:
  std::optional<CacheEntry> lookup(const std::string& normalized, std::int64_t now) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(normalized);
    if (it == entries_.end()) return std::nullopt;
    if (it->second.expires_at_epoch != 0 && it->second.expires_at_epoch <= now) {
      return std::nullopt;
    }
    return it->second;
  }

  void store(const std::string& normalized, CacheEntry entry) {
    std::lock_guard lock(mu_);
    entries_[normalized] = std::move(entry);
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

  /// Cache CSV: normalized_query,city_id_or_NONE,expires_at_epoch.
  void load(const std::string& path) {
    std::ifstream in(path);
    if (!in) return;  // absent cache file is an empty cache
    csv::Reader reader(in);
    std::vector<std::string> row;
    std::lock_guard lock(mu_);
    while (reader.next(row)) {
      if (row.size() != 3) continue;
      CacheEntry e;
      if (row[1] != "NONE") e.city_id = row[1];
      try {
        e.expires_at_epoch = std::stoll(row[2]);
      } catch (const std::exception&) {
        continue;
      }
      entries_[row[0]] = std::move(e);
    }
  }

  void save(std::ostream& out) const {
    std::lock_guard lock(mu_);
    std::vector<std::pair<std::string, CacheEntry>> sorted(entries_.begin(), entries_.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [key, e] : sorted) {
      csv::write_row(out, {key, e.city_id ? *e.city_id : std::string("NONE"),
                           std::to_string(e.expires_at_epoch)});
    }
  }

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, CacheEntry> entries_;
};

enum class ResolveStatus { kResolved, kUnresolved, kTransient };

struct ResolveResult {
  ResolveStatus status = ResolveStatus::kUnresolved;
  std::string city_id;  // set when resolved
  // A gazetteer candidate passed the type filter but matched no registry
  // alias; surfaced in the ingest report.
  bool unmatched_gazetteer = false;
};

/// Resolves free-text locations: exact alias match first, then the
/// gazetteer (when configured) with candidate filtering and alias matching
/// of the resolved name. Results, including negatives, are cached by
/// normalized query; transient failures are never cached.
class Resolver {
 public:
  Resolver(const CityRegistry& registry, GazetteerSource* gazetteer, ResolutionCache* cache,
           std::int64_t negative_ttl_seconds = 30LL * 86400)
      : registry_(registry),
        gazetteer_(gazetteer),
        cache_(cache),
        negative_ttl_seconds_(negative_ttl_seconds) {}

  ResolveResult resolve(std::string_view raw, std::int64_t now = 0) const {
    const std::string norm = normalize_location(raw);
    if (norm.empty()) return ResolveResult{ResolveStatus::kUnresolved, "", false};

    if (const CityEntry* entry = registry_.by_alias(norm)) {
      return ResolveResult{ResolveStatus::kResolved, entry->city_id, false};
    }
    if (cache_) {
      if (auto hit = cache_->lookup(norm, now)) {
        if (hit->city_id) return ResolveResult{ResolveStatus::kResolved, *hit->city_id, false};
        return ResolveResult{ResolveStatus::kUnresolved, "", false};
      }
    }
    if (!gazetteer_) return ResolveResult{ResolveStatus::kUnresolved, "", false};

    auto response = gazetteer_->query(std::string(raw));
    if (!response) return ResolveResult{ResolveStatus::kTransient, "", false};

    ResolveResult result;
    auto candidate = filter_gazetteer_candidates(*response);
    if (candidate) {
      if (const CityEntry* entry = match_candidate(*candidate)) {
        result = ResolveResult{ResolveStatus::kResolved, entry->city_id, false};
      } else {
        result.unmatched_gazetteer = true;
      }
    }
    if (cache_) {
      CacheEntry e;
      if (result.status == ResolveStatus::kResolved) {
        e.city_id = result.city_id;
        e.expires_at_epoch = 0;
      } else {
        e.expires_at_epoch = now + negative_ttl_seconds_;
      }
      cache_->store(norm, std::move(e));
    }
    return result;
  }

 private:
  // Try the whole normalized name, then its comma-separated components
  // ("Boston, Suffolk County, Massachusetts" -> "boston").
  const CityEntry* match_candidate(const GazetteerCandidate& c) const {
    const std::string whole = normalize_location(c.resolved_name);
    if (const CityEntry* entry = registry_.by_alias(whole)) return entry;
    std::string_view rest(c.resolved_name);
    while (!rest.empty()) {
      std::size_t comma = rest.find(',');
      std::string part = normalize_location(rest.substr(0, comma));
      if (!part.empty()) {
        if (const CityEntry* entry = registry_.by_alias(part)) return entry;
      }
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    return nullptr;
  }

  const CityRegistry& registry_;
  GazetteerSource* gazetteer_;
  ResolutionCache* cache_;
  std::int64_t negative_ttl_seconds_;
};

}  // namespace sentigrid::geo
