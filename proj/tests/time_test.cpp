#include "sentigrid/time.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "sentigrid/geo.hpp"
#include "sentigrid/tzif.hpp"

using namespace sentigrid;
using namespace sentigrid::timeutil;

TEST_CASE("civil date round trip") {
  REQUIRE(days_from_civil(1970, 1, 1) == 0);
  REQUIRE(days_from_civil(2017, 10, 1) == 17440);
  for (std::int64_t z : {-1000000, -1, 0, 1, 17440, 20000, 1000000}) {
    CivilDate c = civil_from_days(z);
    REQUIRE(days_from_civil(c) == z);
  }
}

TEST_CASE("day of week starts Monday") {
  // 2017-10-01 was a Sunday, 2017-10-02 a Monday.
  REQUIRE(day_of_week_monday0(days_from_civil(2017, 10, 1)) == 6);
  REQUIRE(day_of_week_monday0(days_from_civil(2017, 10, 2)) == 0);
  REQUIRE(day_of_week_monday0(days_from_civil(1970, 1, 1)) == 3);  // Thursday
}

TEST_CASE("iso8601 parsing") {
  auto t = parse_iso8601_utc("2017-10-01T14:00:00Z");
  REQUIRE(t.has_value());
  REQUIRE(*t == 17440 * 86400 + 14 * 3600);
  REQUIRE(format_iso8601_utc(*t) == "2017-10-01T14:00:00Z");

  REQUIRE(parse_iso8601_utc("2017-10-01T14:00:00.123Z").value() == *t);
  REQUIRE_FALSE(parse_iso8601_utc("2017-10-01 14:00:00Z").has_value());
  REQUIRE_FALSE(parse_iso8601_utc("2017-10-01T14:00:00").has_value());
  REQUIRE_FALSE(parse_iso8601_utc("2017-13-01T14:00:00Z").has_value());
  REQUIRE_FALSE(parse_iso8601_utc("2017-02-29T14:00:00Z").has_value());
  REQUIRE(parse_iso8601_utc("2016-02-29T00:00:00Z").has_value());
}

TEST_CASE("date parsing validates the calendar") {
  REQUIRE(parse_date("2017-10-01").has_value());
  REQUIRE_FALSE(parse_date("2017-04-31").has_value());
  REQUIRE_FALSE(parse_date("2017-1-01").has_value());
  REQUIRE(format_date(CivilDate{2017, 10, 1}) == "2017-10-01");
}

TEST_CASE("fixed offset localization") {
  geo::CityEntry entry;
  entry.fallback_offset_minutes = -240;
  auto t = parse_iso8601_utc("2017-10-01T14:00:00Z").value();
  auto local = geo::localize_timestamp(t, entry);
  REQUIRE(format_date(local.date) == "2017-10-01");
  REQUIRE(local.hour == 10);
  REQUIRE(local.day_of_week == 6);

  entry.fallback_offset_minutes = 0;
  auto same = geo::localize_timestamp(t, entry);
  REQUIRE(same.hour == 14);
  REQUIRE(format_date(same.date) == "2017-10-01");
}

TEST_CASE("fixed offset advances hour by one per 3600s") {
  geo::CityEntry entry;
  entry.fallback_offset_minutes = 330;  // half-hour zone
  auto t = parse_iso8601_utc("2017-07-13T00:00:00Z").value();
  for (int i = 0; i < 48; ++i) {
    auto a = geo::localize_timestamp(t + i * 3600, entry);
    auto b = geo::localize_timestamp(t + (i + 1) * 3600, entry);
    REQUIRE(b.hour == (a.hour + 1) % 24);
  }
}

TEST_CASE("tz database localization honors DST transitions") {
  auto zone = TimeZone::load("America/New_York");
  if (!zone) {
    SKIP("no zoneinfo database on this host");
  }
  geo::CityEntry entry;
  entry.tz = "America/New_York";
  entry.fallback_offset_minutes = -300;
  entry.zone = std::make_shared<const TimeZone>(std::move(*zone));

  // 2017-11-05: clocks fall back 02:00 EDT -> 01:00 EST.
  auto before = parse_iso8601_utc("2017-11-05T05:30:00Z").value();  // 01:30 EDT
  auto after = parse_iso8601_utc("2017-11-05T06:30:00Z").value();   // 01:30 EST
  REQUIRE(geo::localize_timestamp(before, entry).hour == 1);
  REQUIRE(geo::localize_timestamp(after, entry).hour == 1);

  // Summer is UTC-4, winter UTC-5.
  auto summer = parse_iso8601_utc("2017-07-13T16:00:00Z").value();
  auto winter = parse_iso8601_utc("2017-11-30T16:00:00Z").value();
  REQUIRE(geo::localize_timestamp(summer, entry).hour == 12);
  REQUIRE(geo::localize_timestamp(winter, entry).hour == 11);
}

TEST_CASE("naughty zone names do not load") {
  REQUIRE_FALSE(TimeZone::load("../etc/passwd").has_value());
  REQUIRE_FALSE(TimeZone::load("/etc/passwd").has_value());
  REQUIRE_FALSE(TimeZone::load("No/Such_Zone").has_value());
}
