#include "sentigrid/ingest.hpp"

#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "sentigrid/time.hpp"

using namespace sentigrid;
using namespace sentigrid::ingest;

namespace {

const char* kFullLine =
    R"({"id":"t1","created_at":"2017-10-01T14:00:00Z","text":"hello","lang":"en",)"
    R"("user_location":"NYC","followers":120,"is_reply":false,"is_retweet":false,)"
    R"("is_quote":false,"mentions":0})";

}  // namespace

TEST_CASE("parse_record maps every field") {
  auto rec = parse_record(kFullLine);
  REQUIRE(rec.has_value());
  REQUIRE(rec->id == "t1");
  REQUIRE(rec->created_at_utc == timeutil::parse_iso8601_utc("2017-10-01T14:00:00Z").value());
  REQUIRE(rec->text == "hello");
  REQUIRE(rec->lang == "en");
  REQUIRE(rec->user_location_raw == "NYC");
  REQUIRE(rec->follower_count == 120);
  REQUIRE_FALSE(rec->is_reply);
  REQUIRE(rec->mention_count == 0);
}

TEST_CASE("parse_record defaults optional fields") {
  auto rec = parse_record(
      R"({"id":"t2","created_at":"2017-10-01T14:00:00Z","text":"x","lang":"en"})");
  REQUIRE(rec.has_value());
  REQUIRE(rec->user_location_raw.empty());
  REQUIRE_FALSE(rec->is_reply);
  REQUIRE_FALSE(rec->is_retweet);
  REQUIRE_FALSE(rec->is_quote);
  REQUIRE(rec->follower_count == 0);
  REQUIRE(rec->mention_count == 0);
}

TEST_CASE("parse_record rejects malformed input") {
  REQUIRE_FALSE(parse_record(R"({"id":)").has_value());
  REQUIRE_FALSE(parse_record(R"({"created_at":"2017-10-01T14:00:00Z"})").has_value());
  REQUIRE_FALSE(parse_record(R"({"id":"","created_at":"2017-10-01T14:00:00Z"})").has_value());
  REQUIRE_FALSE(parse_record(R"({"id":"a","created_at":"yesterday"})").has_value());
  REQUIRE_FALSE(
      parse_record(R"({"id":"a","created_at":"2017-10-01T14:00:00Z","followers":-1})")
          .has_value());
  REQUIRE_FALSE(parse_record("[1,2,3]").has_value());
}

TEST_CASE("canonical record round trips") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> count(0, 5);
  for (int trial = 0; trial < 100; ++trial) {
    TweetRecord rec;
    rec.id = "id-" + std::to_string(trial);
    rec.created_at_utc = 1507000000 + trial * 3571;
    rec.text = "text with \"quotes\" and, commas " + std::to_string(trial);
    rec.lang = coin(rng) ? "en" : "es";
    rec.user_location_raw = coin(rng) ? "Londres" : "";
    rec.follower_count = count(rng) * 1000;
    rec.is_retweet = coin(rng) == 1;
    rec.is_reply = !rec.is_retweet && coin(rng) == 1;
    rec.is_quote = coin(rng) == 1;
    rec.mention_count = count(rng);
    auto back = parse_record(to_ndjson(rec));
    REQUIRE(back.has_value());
    REQUIRE(*back == rec);
  }
}

TEST_CASE("classify_interaction follows the stated grouping") {
  TweetRecord rec;
  rec.is_reply = true;
  REQUIRE(classify_interaction(rec) == InteractionType::kSocial);

  rec = TweetRecord{};
  rec.is_retweet = true;
  rec.mention_count = 2;
  REQUIRE(classify_interaction(rec) == InteractionType::kBroadcast);

  rec = TweetRecord{};
  REQUIRE(classify_interaction(rec) == InteractionType::kBroadcast);

  rec = TweetRecord{};
  rec.mention_count = 1;
  REQUIRE(classify_interaction(rec) == InteractionType::kSocial);

  rec = TweetRecord{};
  rec.is_quote = true;
  rec.mention_count = 3;
  REQUIRE(classify_interaction(rec) == InteractionType::kBroadcast);
}

TEST_CASE("classification partitions every flag combination") {
  for (int mask = 0; mask < 16; ++mask) {
    TweetRecord rec;
    rec.is_reply = mask & 1;
    rec.is_retweet = mask & 2;
    rec.is_quote = mask & 4;
    rec.mention_count = (mask & 8) ? 2 : 0;
    auto first = classify_interaction(rec);
    REQUIRE((first == InteractionType::kSocial || first == InteractionType::kBroadcast));
    REQUIRE(classify_interaction(rec) == first);
  }
}

TEST_CASE("filter_record applies reasons in a fixed order") {
  FilterConfig cfg;
  cfg.window_start_utc = timeutil::parse_iso8601_utc("2017-07-13T00:00:00Z");
  cfg.window_end_utc = timeutil::parse_iso8601_utc("2017-12-01T00:00:00Z");

  TweetRecord rec;
  rec.created_at_utc = *cfg.window_start_utc + 1000;
  rec.lang = "en";
  rec.follower_count = 299999;
  rec.user_location_raw = "somewhere";
  REQUIRE_FALSE(filter_record(rec, cfg).has_value());

  SECTION("boundary of the follower rule is inclusive") {
    rec.follower_count = 300000;
    REQUIRE(filter_record(rec, cfg) == DropReason::kFollowerThreshold);
  }
  SECTION("language allow-list miss") {
    rec.lang = "es";
    REQUIRE(filter_record(rec, cfg) == DropReason::kLanguage);
  }
  SECTION("language tag primary subtag matches") {
    rec.lang = "en-GB";
    REQUIRE_FALSE(filter_record(rec, cfg).has_value());
  }
  SECTION("empty location") {
    rec.user_location_raw.clear();
    REQUIRE(filter_record(rec, cfg) == DropReason::kEmptyLocation);
  }
  SECTION("window check comes first") {
    rec.created_at_utc = *cfg.window_end_utc + 5;
    rec.lang = "fr";  // would also fail language
    REQUIRE(filter_record(rec, cfg) == DropReason::kOutOfWindow);
  }
  SECTION("language is checked before followers") {
    rec.lang = "fr";
    rec.follower_count = 1000000;
    REQUIRE(filter_record(rec, cfg) == DropReason::kLanguage);
  }
}

TEST_CASE("ingest report counters merge associatively") {
  IngestReport a, b;
  a.parsed = 10;
  a.kept = 7;
  a.dropped_language = 3;
  b.parsed = 5;
  b.kept = 4;
  b.dropped_malformed = 1;
  IngestReport ab = a;
  ab.merge(b);
  IngestReport ba = b;
  ba.merge(a);
  REQUIRE(ab.parsed == 15);
  REQUIRE(ab.kept == ba.kept);
  REQUIRE(ab.dropped_language == ba.dropped_language);
  REQUIRE(ab.dropped_malformed == ba.dropped_malformed);
}
