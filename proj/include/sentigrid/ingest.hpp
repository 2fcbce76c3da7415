#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sentigrid/time.hpp"
#include "sentigrid/types.hpp"

namespace sentigrid::ingest {

/// One ingested post. `created_at_utc` is epoch seconds.
struct TweetRecord {
  std::string id;
  std::int64_t created_at_utc = 0;
  std::string text;
  std::string lang;
  std::string user_location_raw;
  std::int64_t follower_count = 0;
  bool is_reply = false;
  bool is_retweet = false;
  bool is_quote = false;
  int mention_count = 0;

  friend bool operator==(const TweetRecord&, const TweetRecord&) = default;
};

enum class InteractionType { kBroadcast, kSocial };

/// Social = replies and direct mentions; quotes and retweets broadcast even
/// when their text mentions users. Precedence: retweet > quote > reply > mention.
inline InteractionType classify_interaction(const TweetRecord& rec) {
  if (rec.is_reply && !rec.is_retweet && !rec.is_quote) return InteractionType::kSocial;
  if (rec.mention_count > 0 && !rec.is_retweet && !rec.is_quote && !rec.is_reply) {
    return InteractionType::kSocial;
  }
  return InteractionType::kBroadcast;
}

struct FilterConfig {
  std::vector<std::string> languages{"en"};
  std::int64_t follower_threshold = 300000;  // inclusive: >= threshold drops
  // Study window in UTC epoch seconds, half-open [start, end).
  std::optional<std::int64_t> window_start_utc;
  std::optional<std::int64_t> window_end_utc;
};

enum class DropReason { kOutOfWindow, kLanguage, kFollowerThreshold, kEmptyLocation };

inline std::string_view to_string(DropReason r) {
  switch (r) {
    case DropReason::kOutOfWindow: return "out_of_window";
    case DropReason::kLanguage: return "language";
    case DropReason::kFollowerThreshold: return "follower_threshold";
    case DropReason::kEmptyLocation: return "empty_location";
  }
  return "";
}

namespace detail {
inline std::string primary_language_subtag(std::string_view lang) {
  std::size_t dash = lang.find('-');
  std::string out(lang.substr(0, dash));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}
}  // namespace detail

/// Applies the drop rules in a fixed order so reason counts are
/// reproducible: window, language, follower threshold, empty location.
/// Returns the drop reason, or nullopt to keep the record.
inline std::optional<DropReason> filter_record(const TweetRecord& rec, const FilterConfig& cfg) {
  if ((cfg.window_start_utc && rec.created_at_utc < *cfg.window_start_utc) ||
      (cfg.window_end_utc && rec.created_at_utc >= *cfg.window_end_utc)) {
    return DropReason::kOutOfWindow;
  }
  const std::string primary = detail::primary_language_subtag(rec.lang);
  bool lang_ok = false;
  for (const auto& allowed : cfg.languages) {
    if (primary == allowed) {
      lang_ok = true;
      break;
    }
  }
  if (!lang_ok) return DropReason::kLanguage;
  if (rec.follower_count >= cfg.follower_threshold) return DropReason::kFollowerThreshold;
  if (rec.user_location_raw.empty()) return DropReason::kEmptyLocation;
  return std::nullopt;
}

/// Parses one NDJSON line. Returns nullopt for malformed input: bad JSON,
/// missing/empty id, unparseable created_at, or negative counts. Optional
/// fields default: user_location "", flags false, mentions 0, followers 0.
inline std::optional<TweetRecord> parse_record(std::string_view line) {
  const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;

  TweetRecord rec;
  auto get_string = [&](const char* key, std::string& out, bool required) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return !required;
    if (!it->is_string()) return false;
    out = it->get<std::string>();
    return true;
  };
  if (!get_string("id", rec.id, true) || rec.id.empty()) return std::nullopt;

  std::string created;
  if (!get_string("created_at", created, true)) return std::nullopt;
  auto ts = timeutil::parse_iso8601_utc(created);
  if (!ts) return std::nullopt;
  rec.created_at_utc = *ts;

  if (!get_string("text", rec.text, false)) return std::nullopt;
  if (!get_string("lang", rec.lang, false)) return std::nullopt;
  if (!get_string("user_location", rec.user_location_raw, false)) return std::nullopt;

  auto get_count = [&](const char* key, auto& out) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return true;
    if (!it->is_number_integer()) return false;
    auto v = it->get<std::int64_t>();
    if (v < 0) return false;
    out = static_cast<std::remove_reference_t<decltype(out)>>(v);
    return true;
  };
  if (!get_count("followers", rec.follower_count)) return std::nullopt;
  if (!get_count("mentions", rec.mention_count)) return std::nullopt;

  auto get_flag = [&](const char* key, bool& out) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return true;
    if (!it->is_boolean()) return false;
    out = it->get<bool>();
    return true;
  };
  if (!get_flag("is_reply", rec.is_reply)) return std::nullopt;
  if (!get_flag("is_retweet", rec.is_retweet)) return std::nullopt;
  if (!get_flag("is_quote", rec.is_quote)) return std::nullopt;
  // A retweet of a reply is labeled retweet.
  if (rec.is_retweet) rec.is_reply = false;
  return rec;
}

/// Canonical NDJSON form of a record; parse_record(to_ndjson(r)) == r.
inline std::string to_ndjson(const TweetRecord& rec) {
  nlohmann::json j;
  j["id"] = rec.id;
  j["created_at"] = timeutil::format_iso8601_utc(rec.created_at_utc);
  j["text"] = rec.text;
  j["lang"] = rec.lang;
  j["user_location"] = rec.user_location_raw;
  j["followers"] = rec.follower_count;
  j["is_reply"] = rec.is_reply;
  j["is_retweet"] = rec.is_retweet;
  j["is_quote"] = rec.is_quote;
  j["mentions"] = rec.mention_count;
  return j.dump();
}

/// Funnel counters. Counters merge associatively so shards can be
/// ingested in parallel and combined.
struct IngestReport {
  std::uint64_t parsed = 0;
  std::uint64_t kept = 0;
  std::uint64_t dropped_language = 0;
  std::uint64_t dropped_follower = 0;
  std::uint64_t dropped_empty_location = 0;
  std::uint64_t dropped_malformed = 0;
  std::uint64_t dropped_out_of_window = 0;
  std::uint64_t unresolved_location = 0;
  std::uint64_t unmatched_gazetteer = 0;

  void count_drop(DropReason r) {
    switch (r) {
      case DropReason::kOutOfWindow: ++dropped_out_of_window; break;
      case DropReason::kLanguage: ++dropped_language; break;
      case DropReason::kFollowerThreshold: ++dropped_follower; break;
      case DropReason::kEmptyLocation: ++dropped_empty_location; break;
    }
  }

  void merge(const IngestReport& o) {
    parsed += o.parsed;
    kept += o.kept;
    dropped_language += o.dropped_language;
    dropped_follower += o.dropped_follower;
    dropped_empty_location += o.dropped_empty_location;
    dropped_malformed += o.dropped_malformed;
    dropped_out_of_window += o.dropped_out_of_window;
    unresolved_location += o.unresolved_location;
    unmatched_gazetteer += o.unmatched_gazetteer;
  }

  void write(std::ostream& out) const {
    out << "parsed: " << parsed << '\n'
        << "kept: " << kept << '\n'
        << "dropped_language: " << dropped_language << '\n'
        << "dropped_follower: " << dropped_follower << '\n'
        << "dropped_empty_location: " << dropped_empty_location << '\n'
        << "dropped_malformed: " << dropped_malformed << '\n'
        << "dropped_out_of_window: " << dropped_out_of_window << '\n'
        << "unresolved_location: " << unresolved_location << '\n'
        << "unmatched_gazetteer: " << unmatched_gazetteer << '\n';
  }
};

}  // namespace sentigrid::ingest
