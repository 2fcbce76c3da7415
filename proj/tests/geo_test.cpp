#include "sentigrid/geo.hpp"

#include <fstream>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include "sentigrid/gazetteer_http.hpp"
#include "test_util.hpp"

using namespace sentigrid;
using namespace sentigrid::geo;

namespace {

CityRegistry fixture_registry() {
  return load_city_registry(testutil::fixture_path("cities_3.csv"));
}

FixtureGazetteerSource fixture_gazetteer() {
  FixtureGazetteerSource src;
  std::ifstream in(testutil::fixture_path("gazetteer_responses.json"));
  nlohmann::json j = nlohmann::json::parse(in);
  for (const auto& [query, response] : j.items()) {
    auto parsed = HttpGazetteerSource::parse_response(response.dump());
    src.add(query, std::move(*parsed));
  }
  return src;
}

}  // namespace

TEST_CASE("normalize_location") {
  REQUIRE(normalize_location("  New   York ") == "new york");
  REQUIRE(normalize_location("London, UK!!") == "london, uk");
  REQUIRE(normalize_location("...") == "");
  REQUIRE(normalize_location("BOSTON") == "boston");
}

TEST_CASE("registry loads with alias map") {
  const CityRegistry reg = fixture_registry();
  REQUIRE(reg.entries().size() == 3);
  REQUIRE(reg.alias_count() == 9);
  REQUIRE(reg.by_alias("nyc")->city_id == "new_york_city");
  REQUIRE(reg.by_id("manila")->country == "PH");
}

TEST_CASE("registry validation errors") {
  testutil::TempDir tmp("registry");
  SECTION("ambiguous alias names both entries") {
    testutil::write_file(tmp.str("dup.csv"),
                         "city_id,display_name,country,tz,fallback_offset_minutes,aliases\n"
                         "springfield_il,Springfield,US,America/Chicago,-360,springfield\n"
                         "springfield_ma,Springfield,US,America/New_York,-300,springfield\n");
    REQUIRE_THROWS_WITH(load_city_registry(tmp.str("dup.csv")),
                        Catch::Matchers::ContainsSubstring("springfield_il") &&
                            Catch::Matchers::ContainsSubstring("springfield_ma"));
  }
  SECTION("unknown timezone id names the row") {
    testutil::write_file(tmp.str("tz.csv"),
                         "city_id,display_name,country,tz,fallback_offset_minutes,aliases\n"
                         "x,X,US,Mars/Olympus_Mons,0,x\n");
    REQUIRE_THROWS_WITH(load_city_registry(tmp.str("tz.csv")),
                        Catch::Matchers::ContainsSubstring("Mars/Olympus_Mons"));
  }
  SECTION("a 100-row registry loads") {
    std::ostringstream big;
    big << "city_id,display_name,country,tz,fallback_offset_minutes,aliases\n";
    for (int i = 0; i < 100; ++i) {
      big << "city" << i << ",City " << i << ",US,UTC,0,alias" << i << "\n";
    }
    testutil::write_file(tmp.str("big.csv"), big.str());
    REQUIRE(load_city_registry(tmp.str("big.csv")).entries().size() == 100);
  }
}

TEST_CASE("candidate filter accepts only place types, in order") {
  std::vector<GazetteerCandidate> cands;
  cands.push_back({"Somewhere Tower", "building", 0.9, ""});
  cands.push_back({"Boston", "city", 0.5, ""});
  auto hit = filter_gazetteer_candidates(cands);
  REQUIRE(hit.has_value());
  REQUIRE(hit->type_tag == "city");

  std::vector<GazetteerCandidate> roads;
  roads.push_back({"Mars Road", "road", 0.9, ""});
  REQUIRE_FALSE(filter_gazetteer_candidates(roads).has_value());
  REQUIRE_FALSE(filter_gazetteer_candidates({}).has_value());
}

TEST_CASE("resolver hits aliases without touching the gazetteer") {
  const CityRegistry reg = fixture_registry();
  FixtureGazetteerSource gaz = fixture_gazetteer();
  Resolver resolver(reg, &gaz, nullptr);
  auto res = resolver.resolve("NYC");
  REQUIRE(res.status == ResolveStatus::kResolved);
  REQUIRE(res.city_id == "new_york_city");
  REQUIRE(gaz.query_count() == 0);
}

TEST_CASE("resolver replays recorded gazetteer responses") {
  testutil::TempDir tmp("geo");
  // Registry with a boston alias so the recorded county answer matches.
  testutil::write_file(tmp.str("reg.csv"),
                       "city_id,display_name,country,tz,fallback_offset_minutes,aliases\n"
                       "boston,Boston,US,America/New_York,-300,boston\n"
                       "london,London,GB,Europe/London,0,london\n");
  const CityRegistry reg = load_city_registry(tmp.str("reg.csv"));
  FixtureGazetteerSource gaz = fixture_gazetteer();
  ResolutionCache cache;
  Resolver resolver(reg, &gaz, &cache);

  auto boston = resolver.resolve("Greater Boston Area", 1000);
  REQUIRE(boston.status == ResolveStatus::kResolved);
  REQUIRE(boston.city_id == "boston");

  auto mars = resolver.resolve("Mars, the red planet", 1000);
  REQUIRE(mars.status == ResolveStatus::kUnresolved);

  auto nowhere = resolver.resolve("Nowhereville", 1000);
  REQUIRE(nowhere.status == ResolveStatus::kUnresolved);

  // All three answers, including the negatives, are now cached.
  REQUIRE(cache.size() == 3);
  const std::size_t queries = gaz.query_count();
  REQUIRE(resolver.resolve("Greater Boston Area", 2000).status == ResolveStatus::kResolved);
  REQUIRE(resolver.resolve("Mars, the red planet", 2000).status == ResolveStatus::kUnresolved);
  REQUIRE(gaz.query_count() == queries);
}

TEST_CASE("negative cache entries expire, positives do not") {
  testutil::TempDir tmp("geo2");
  testutil::write_file(tmp.str("reg.csv"),
                       "city_id,display_name,country,tz,fallback_offset_minutes,aliases\n"
                       "boston,Boston,US,America/New_York,-300,boston\n");
  const CityRegistry reg = load_city_registry(tmp.str("reg.csv"));
  FixtureGazetteerSource gaz = fixture_gazetteer();
  ResolutionCache cache;
  const std::int64_t ttl = 100;
  Resolver resolver(reg, &gaz, &cache, ttl);

  resolver.resolve("Mars, the red planet", 0);
  resolver.resolve("Greater Boston Area", 0);
  const std::size_t q0 = gaz.query_count();

  // Before expiry both answers come from the cache.
  resolver.resolve("Mars, the red planet", 50);
  REQUIRE(gaz.query_count() == q0);
  // The negative answer expires and is re-queried; the positive never does.
  resolver.resolve("Mars, the red planet", 200);
  REQUIRE(gaz.query_count() == q0 + 1);
  resolver.resolve("Greater Boston Area", 1'000'000'000);
  REQUIRE(gaz.query_count() == q0 + 1);
}

TEST_CASE("transient failures are not cached") {
  class FailingSource : public GazetteerSource {
   public:
    std::optional<std::vector<GazetteerCandidate>> query(const std::string&) override {
      ++calls;
      return std::nullopt;
    }
    int calls = 0;
  };
  const CityRegistry reg = fixture_registry();
  FailingSource gaz;
  ResolutionCache cache;
  Resolver resolver(reg, &gaz, &cache);
  REQUIRE(resolver.resolve("somewhere odd", 10).status == ResolveStatus::kTransient);
  REQUIRE(cache.size() == 0);
  REQUIRE(resolver.resolve("somewhere odd", 10).status == ResolveStatus::kTransient);
  REQUIRE(gaz.calls == 2);
}

TEST_CASE("cache file round trip") {
  testutil::TempDir tmp("cache");
  ResolutionCache cache;
  cache.store("new york", {std::string("new_york_city"), 0});
  cache.store("gibberish", {std::nullopt, 5000});
  {
    std::ofstream out(tmp.str("cache.csv"));
    cache.save(out);
  }
  ResolutionCache loaded;
  loaded.load(tmp.str("cache.csv"));
  REQUIRE(loaded.size() == 2);
  auto pos = loaded.lookup("new york", 1'000'000);
  REQUIRE(pos.has_value());
  REQUIRE(pos->city_id == "new_york_city");
  REQUIRE_FALSE(loaded.lookup("gibberish", 6000).has_value());
  auto neg = loaded.lookup("gibberish", 4000);
  REQUIRE(neg.has_value());
  REQUIRE_FALSE(neg->city_id.has_value());
}

TEST_CASE("filtered candidates never carry unaccepted types") {
  std::mt19937_64 rng(5);
  const std::vector<std::string> types{"city",  "road",   "building", "county", "state",
                                       "river", "suburb", "hamlet",   "shop",   "country"};
  std::uniform_int_distribution<std::size_t> pick(0, types.size() - 1);
  std::uniform_int_distribution<int> count(0, 6);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<GazetteerCandidate> cands;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      cands.push_back({"Name" + std::to_string(i), types[pick(rng)], 0.0, ""});
    }
    auto hit = filter_gazetteer_candidates(cands);
    if (hit) {
      REQUIRE(accepted_place_types().count(hit->type_tag) == 1);
      // Response order is respected: nothing acceptable precedes the hit.
      for (const auto& c : cands) {
        if (c.resolved_name == hit->resolved_name) break;
        REQUIRE(accepted_place_types().count(c.type_tag) == 0);
      }
    } else {
      for (const auto& c : cands) REQUIRE(accepted_place_types().count(c.type_tag) == 0);
    }
  }
}
