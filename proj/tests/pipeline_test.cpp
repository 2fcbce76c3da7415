#include "sentigrid/pipeline.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

#include <catch2/catch_amalgamated.hpp>

#include "sentigrid/gazetteer_http.hpp"
#include "test_util.hpp"

using namespace sentigrid;
using Catch::Approx;

namespace {

/// Writes a self-contained config whose synth section generates a small
/// three-city corpus with one injected event per polarity.
std::string write_mini_config(const testutil::TempDir& tmp, const std::string& out_dir,
                              std::uint64_t seed = 4211) {
  nlohmann::json synth = {
      {"seed", seed},
      {"window", {{"start", "2017-09-18"}, {"end", "2017-09-28"}}},
      {"tweets_per_hour", 40.0},
      {"social_slope", 0.08},
      {"hour_effects", std::vector<double>(24, 0.0)},
      {"cities",
       {{{"city_id", "london"}, {"display_name", "London"}, {"country", "GB"},
         {"tz", "Europe/London"}, {"fallback_offset_minutes", 0}, {"base_pos", 0.40},
         {"base_neg", 0.24}},
        {{"city_id", "manila"}, {"display_name", "Manila"}, {"country", "PH"},
         {"tz", "Asia/Manila"}, {"fallback_offset_minutes", 480}, {"base_pos", 0.45},
         {"base_neg", 0.22}},
        {{"city_id", "new_york_city"}, {"display_name", "New York City"}, {"country", "US"},
         {"tz", "America/New_York"}, {"fallback_offset_minutes", -300}, {"base_pos", 0.37},
         {"base_neg", 0.28}}}},
      {"events",
       {{{"city_id", "manila"}, {"start_date", "2017-09-26"}, {"end_date", "2017-09-26"},
         {"polarity", "positive"}, {"delta", 0.25}, {"label", "fiesta"}},
        {{"city_id", "new_york_city"}, {"start_date", "2017-09-27"}, {"end_date", "2017-09-27"},
         {"polarity", "negative"}, {"delta", 0.20}, {"label", "stormy news"}}}}};

  nlohmann::json cfg = {
      {"paths",
       {{"registry", out_dir + "/registry.csv"},
        {"lexicon", testutil::fixture_path("lexicon.tsv")},
        {"weather", out_dir + "/weather.csv"},
        {"input", out_dir + "/records.ndjson"},
        {"out_dir", out_dir}}},
      {"training_window", {{"start", "2017-09-18"}, {"end", "2017-09-24"}}},
      {"test_window", {{"start", "2017-09-25"}, {"end", "2017-09-28"}}},
      {"min_bin_size", 5},
      {"top_k", 20},
      {"factors", {"city", "hour", "day", "weather", "social"}},
      {"synth", synth}};
  const std::string path = tmp.str("config.json");
  testutil::write_file(path, cfg.dump(2));
  return path;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(testutil::cli_path()) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int run_cli_capture(const std::string& args, const std::string& capture_path,
                    std::string& output) {
  const std::string cmd =
      std::string(testutil::cli_path()) + " " + args + " >" + capture_path + " 2>&1";
  const int status = std::system(cmd.c_str());
  output = testutil::read_file(capture_path);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config loading and validation") {
  testutil::TempDir tmp("cfg");
  SECTION("missing file") {
    REQUIRE_THROWS_AS(pipeline::load_config(tmp.str("nope.json")), ValidationError);
  }
  SECTION("missing required path names the field") {
    testutil::write_file(tmp.str("c.json"), R"({"paths": {"registry": "r.csv"}})");
    REQUIRE_THROWS_WITH(pipeline::load_config(tmp.str("c.json")),
                        Catch::Matchers::ContainsSubstring("paths.lexicon"));
  }
  SECTION("overlapping windows rejected") {
    nlohmann::json cfg = {
        {"paths",
         {{"registry", "r"}, {"lexicon", "l"}, {"weather", "w"}, {"out_dir", "o"}}},
        {"training_window", {{"start", "2017-07-13"}, {"end", "2017-09-30"}}},
        {"test_window", {{"start", "2017-09-30"}, {"end", "2017-11-30"}}}};
    testutil::write_file(tmp.str("c.json"), cfg.dump());
    REQUIRE_THROWS_WITH(pipeline::load_config(tmp.str("c.json")),
                        Catch::Matchers::ContainsSubstring("disjoint"));
  }
  SECTION("valid config derives the study window and observation days") {
    nlohmann::json cfg = {
        {"paths",
         {{"registry", "r"}, {"lexicon", "l"}, {"weather", "w"}, {"out_dir", "o"}}},
        {"training_window", {{"start", "2017-07-13"}, {"end", "2017-09-30"}}},
        {"test_window", {{"start", "2017-10-01"}, {"end", "2017-11-30"}}}};
    testutil::write_file(tmp.str("c.json"), cfg.dump());
    const auto loaded = pipeline::load_config(tmp.str("c.json"));
    REQUIRE(loaded.test_window.whole_days() == Approx(61.0));
    REQUIRE(loaded.filters.window_start_utc.has_value());
    REQUIRE(loaded.factors.include_city);
  }
}

TEST_CASE("atomic writer leaves no partial files") {
  testutil::TempDir tmp("atomic");
  const std::string target = tmp.str("out.txt");
  {
    pipeline::AtomicWriter w(target);
    w.stream() << "half";
    // no commit
  }
  REQUIRE_FALSE(std::filesystem::exists(target));
  REQUIRE_FALSE(std::filesystem::exists(target + ".tmp"));
  {
    pipeline::AtomicWriter w(target);
    w.stream() << "whole";
    w.commit();
  }
  REQUIRE(testutil::read_file(target) == "whole");
}

TEST_CASE("synth then full pipeline produces coherent artifacts") {
  testutil::TempDir tmp("e2e");
  const std::string out = tmp.str("out");
  const std::string config_path = write_mini_config(tmp, out);
  auto cfg = pipeline::load_config(config_path);

  pipeline::cmd_synth(cfg);
  REQUIRE(std::filesystem::exists(out + "/records.ndjson"));
  REQUIRE(std::filesystem::exists(out + "/registry.csv"));
  REQUIRE(std::filesystem::exists(out + "/weather.csv"));
  REQUIRE(std::filesystem::exists(out + "/manifest.json"));

  pipeline::cmd_ingest(cfg);
  const auto bins = pipeline::load_bins(out + "/bins.csv");
  REQUIRE(bins.size() > 500);
  const std::string report_text = testutil::read_file(out + "/ingest_report.txt");
  REQUIRE(report_text.find("dropped_malformed: 0") != std::string::npos);
  REQUIRE(report_text.find("parsed: ") != std::string::npos);

  pipeline::cmd_fit(cfg);
  const auto m_pos = model::load_model(out + "/model_positive.json");
  const auto m_neg = model::load_model(out + "/model_negative.json");
  REQUIRE(m_pos.column_names.size() == 1 + 2 + 23 + 6 + 6 + 1);
  REQUIRE(m_neg.r_squared >= 0.0);

  pipeline::cmd_detect(cfg);
  {
    std::ifstream in(out + "/deviations.csv");
    const auto scores = deviation::read_deviations_csv(in, "deviations");
    REQUIRE(scores.size() > 100);
  }
  const auto events = pipeline::load_events(out + "/events.csv");
  REQUIRE_FALSE(events.empty());

  pipeline::cmd_report(cfg, std::string("manila"));
  REQUIRE(std::filesystem::exists(out + "/event_report.csv"));
  REQUIRE(std::filesystem::exists(out + "/ranked_positive.csv"));
  REQUIRE(std::filesystem::exists(out + "/ranked_negative.csv"));
  REQUIRE(std::filesystem::exists(out + "/timeline_manila.csv"));

  // The injected events dominate the ranking.
  const geo::CityRegistry registry = geo::load_city_registry(out + "/registry.csv");
  std::ifstream min(out + "/manifest.json");
  auto [gen_cfg, injected] = synth::parse_generator_json(
      nlohmann::json::parse(min), "manifest");
  const auto detection = synth::evaluate_detection(injected, events, registry, cfg.top_k);
  REQUIRE(detection.outcomes.size() == 2);
  for (const auto& o : detection.outcomes) {
    REQUIRE(o.detected);
    REQUIRE(o.rank <= 2);
  }

  // Timeline rows carry expectation * n_total per polarity.
  const std::string timeline = testutil::read_file(out + "/timeline_manila.csv");
  REQUIRE(timeline.find("expected_pos") != std::string::npos);
  REQUIRE(std::count(timeline.begin(), timeline.end(), '\n') > 24);
}

TEST_CASE("event report renders the table conventions") {
  geo::CityRegistry reg;
  geo::CityEntry nyc;
  nyc.city_id = "nyc";
  nyc.display_name = "New York City";
  nyc.country = "US";
  nyc.aliases = {"nyc"};
  reg.add(nyc);

  deviation::DeviationScore s;
  s.key = BinKey{"nyc", timeutil::days_from_civil(2017, 11, 23), 14};
  s.polarity = Polarity::kNegative;
  s.n_total = 1000;
  s.observed = 496;
  s.expected = 287.0;
  s.statistic = 180.0;
  s.p_value = 1e-12;
  s.direction = Direction::kSurplus;
  s.eligible = true;
  const auto events = deviation::merge_events({s}, reg, 60.0);
  REQUIRE(events.size() == 1);

  std::ostringstream out;
  pipeline::emit_event_report(out, events, reg);
  const std::string text = out.str();
  REQUIRE(text.find("49.6% (28.7%)") != std::string::npos);
  REQUIRE(text.find(">60 days") != std::string::npos);
  REQUIRE(text.find("2017-11-23 in New York City") != std::string::npos);
}

TEST_CASE("event report with no events is header-only") {
  geo::CityRegistry reg;
  std::ostringstream out;
  pipeline::emit_event_report(out, {}, reg);
  REQUIRE(std::count(out.str().begin(), out.str().end(), '\n') == 1);
  REQUIRE(out.str().rfind("rank,", 0) == 0);
}

TEST_CASE("event report recurrence column matches the rank formula") {
  geo::CityRegistry reg;
  for (int i = 0; i < 5; ++i) {
    geo::CityEntry e;
    e.city_id = "c" + std::to_string(i);
    e.display_name = e.city_id;
    e.country = "C" + std::to_string(i);  // distinct countries: no merging
    e.aliases = {e.city_id};
    reg.add(e);
  }
  std::vector<deviation::DeviationScore> sig;
  for (int i = 0; i < 5; ++i) {
    deviation::DeviationScore s;
    s.key = BinKey{"c" + std::to_string(i), timeutil::days_from_civil(2017, 10, 2 + 2 * i), 10};
    s.polarity = Polarity::kNegative;
    s.direction = Direction::kSurplus;
    s.statistic = 50.0 - i;
    s.p_value = 1e-9;
    s.n_total = 100;
    s.observed = 60;
    s.expected = 30;
    s.eligible = true;
    sig.push_back(s);
  }
  const double days = 60.0;
  const auto events = deviation::merge_events(sig, reg, days);
  std::ostringstream out;
  pipeline::emit_event_report(out, events, reg);
  std::istringstream in(out.str());
  csv::Reader reader(in);
  std::vector<std::string> row;
  REQUIRE(reader.next(row));  // header
  std::size_t rank = 0;
  while (reader.next(row)) {
    ++rank;
    REQUIRE(row[0] == std::to_string(rank));
    REQUIRE(row[5] == deviation::recurrence_interval(rank, days).render());
  }
  REQUIRE(rank == 5);
}

TEST_CASE("timeline export computes expected counts") {
  // Bin with n=100, predicted p_neg 0.287 -> expected_neg 28.7, observed 50.
  aggregate::CityHourBin bin;
  bin.key = BinKey{"nyc", timeutil::days_from_civil(2017, 10, 2), 9};
  bin.day_of_week = 0;
  bin.n_total = 100;
  bin.n_pos = 40;
  bin.n_neg = 50;
  bin.p_pos = 0.4;
  bin.p_neg = 0.5;
  bin.p_social = 0.0;

  auto constant_model = [](double p, Polarity outcome) {
    model::FittedModel m;
    m.spec = model::FactorSpec::none();
    m.outcome = outcome;
    m.column_names = {"intercept"};
    m.beta = Eigen::VectorXd::Constant(1, p);
    m.stderrs = Eigen::VectorXd::Zero(1);
    return m;
  };
  std::ostringstream out;
  pipeline::export_city_timeline(out, "nyc", {bin}, constant_model(0.4, Polarity::kPositive),
                                 constant_model(0.287, Polarity::kNegative));
  const std::string text = out.str();
  REQUIRE(text.find("28.699999999999999") != std::string::npos);
  REQUIRE(text.find(",50,") != std::string::npos);
  // one test bin, one data row
  REQUIRE(std::count(text.begin(), text.end(), '\n') == 2);

  SECTION("observed = expected rows carry zero statistics") {
    std::ostringstream zero;
    pipeline::export_city_timeline(zero, "nyc", {bin}, constant_model(0.4, Polarity::kPositive),
                                   constant_model(0.5, Polarity::kNegative));
    std::istringstream in(zero.str());
    csv::Reader reader(in);
    std::vector<std::string> row;
    reader.next(row);
    REQUIRE(reader.next(row));
    REQUIRE(row[6] == "0");   // statistic_pos
    REQUIRE(row[10] == "0");  // statistic_neg
  }
  SECTION("unknown city") {
    std::ostringstream sink;
    REQUIRE_THROWS_AS(pipeline::export_city_timeline(sink, "atlantis", {bin},
                                                     constant_model(0.4, Polarity::kPositive),
                                                     constant_model(0.5, Polarity::kNegative)),
                      ValidationError);
  }
}

TEST_CASE("cli: detect without a model file exits 2 and names the path") {
  testutil::TempDir tmp("cli2");
  const std::string out = tmp.str("out");
  const std::string config_path = write_mini_config(tmp, out);
  auto cfg = pipeline::load_config(config_path);
  pipeline::cmd_synth(cfg);
  pipeline::cmd_ingest(cfg);

  std::string output;
  const int code = run_cli_capture("detect --config " + config_path, tmp.str("cap.txt"), output);
  REQUIRE(code == 2);
  REQUIRE(output.find("model_positive.json") != std::string::npos);
}

TEST_CASE("cli: unknown flags and missing config exit nonzero") {
  REQUIRE(run_cli("fit") != 0);
  REQUIRE(run_cli("fit --config /nonexistent/config.json") == 2);
  REQUIRE(run_cli("frobnicate --config x") != 0);
}

TEST_CASE("cli: all on a synthesized corpus is deterministic") {
  testutil::TempDir tmp("cli3");
  const std::string out = tmp.str("out");
  const std::string config_path = write_mini_config(tmp, out);

  REQUIRE(run_cli("synth --config " + config_path) == 0);
  REQUIRE(run_cli("all --config " + config_path) == 0);

  const std::vector<std::string> artifacts = {"bins.csv",       "model_positive.json",
                                              "model_negative.json", "deviations.csv",
                                              "events.csv",     "event_report.csv",
                                              "fit_summary.csv"};
  std::map<std::string, std::string> first;
  for (const auto& name : artifacts) {
    const std::string content = testutil::read_file(out + "/" + name);
    REQUIRE_FALSE(content.empty());
    REQUIRE(std::count(content.begin(), content.end(), '\n') >= 2);
    first[name] = content;
  }
  REQUIRE(run_cli("all --config " + config_path) == 0);
  for (const auto& name : artifacts) {
    REQUIRE(testutil::read_file(out + "/" + name) == first[name]);
  }
}

TEST_CASE("cli: rerunning fit alone is byte-identical") {
  testutil::TempDir tmp("cli4");
  const std::string out = tmp.str("out");
  const std::string config_path = write_mini_config(tmp, out);
  REQUIRE(run_cli("synth --config " + config_path) == 0);
  REQUIRE(run_cli("ingest --config " + config_path) == 0);
  REQUIRE(run_cli("fit --config " + config_path) == 0);
  const std::string once = testutil::read_file(out + "/model_negative.json");
  REQUIRE(run_cli("fit --config " + config_path) == 0);
  REQUIRE(testutil::read_file(out + "/model_negative.json") == once);
}

TEST_CASE("cli: eval produces a detection report") {
  testutil::TempDir tmp("cli5");
  const std::string out = tmp.str("out");
  const std::string config_path = write_mini_config(tmp, out);
  REQUIRE(run_cli("synth --config " + config_path) == 0);
  REQUIRE(run_cli("all --config " + config_path) == 0);
  REQUIRE(run_cli("eval --config " + config_path + " --manifest " + out +
                  "/manifest.json --events " + out + "/events.csv") == 0);
  const std::string report = testutil::read_file(out + "/detection_report.csv");
  REQUIRE(report.find("fiesta") != std::string::npos);
  REQUIRE(report.find("stormy news") != std::string::npos);
  REQUIRE(report.find("true") != std::string::npos);
}

TEST_CASE("cli: bias workflow across full, no-city, and null models") {
  testutil::TempDir tmp("cli6");
  const std::string out = tmp.str("out");
  const std::string config_path = write_mini_config(tmp, out);
  REQUIRE(run_cli("synth --config " + config_path) == 0);
  REQUIRE(run_cli("ingest --config " + config_path) == 0);

  // Refit and re-detect under three factor sets, keeping each model's
  // events aside.
  auto cfg_json = nlohmann::json::parse(testutil::read_file(config_path));
  std::map<std::string, std::vector<std::string>> variants{
      {"full", {"city", "hour", "day", "weather", "social"}},
      {"nocity", {"hour", "day", "weather", "social"}},
      {"null", {}}};
  for (const auto& [name, factors] : variants) {
    cfg_json["factors"] = factors;
    const std::string variant_config = tmp.str("config_" + name + ".json");
    testutil::write_file(variant_config, cfg_json.dump());
    REQUIRE(run_cli("fit --config " + variant_config) == 0);
    REQUIRE(run_cli("detect --config " + variant_config) == 0);
    std::filesystem::copy_file(out + "/events.csv", tmp.str("events_" + name + ".csv"));
  }
  // The null model run writes a fit summary with blank correlation fields
  // (constant predictions have no Pearson r).
  const std::string summary = testutil::read_file(out + "/fit_summary.csv");
  REQUIRE(summary.find("null") != std::string::npos);

  REQUIRE(run_cli("eval --config " + config_path + " --bias --events-full " +
                  tmp.str("events_full.csv") + " --events-nocity " +
                  tmp.str("events_nocity.csv") + " --events-null " +
                  tmp.str("events_null.csv")) == 0);
  const std::string bias = testutil::read_file(out + "/bias_report.csv");
  REQUIRE(bias.rfind("country,", 0) == 0);
  // One row per country in the registry.
  REQUIRE(std::count(bias.begin(), bias.end(), '\n') == 4);
}

TEST_CASE("rate limiter spaces requests") {
  std::int64_t fake_now = 1000;
  std::vector<std::int64_t> sleeps;
  geo::RateLimiter limiter(
      2.0, [&] { return fake_now; }, [&](std::int64_t ms) { sleeps.push_back(ms); });
  limiter.acquire();  // first request goes straight through
  REQUIRE(sleeps.empty());
  limiter.acquire();  // same instant: must wait the full 500ms interval
  REQUIRE(sleeps == std::vector<std::int64_t>{500});
  fake_now += 2000;
  limiter.acquire();  // enough time has passed
  REQUIRE(sleeps.size() == 1);
}

TEST_CASE("http gazetteer sends the documented wire format") {
  httplib::Server server;
  std::string seen_q, seen_format, seen_ua;
  server.Get("/search", [&](const httplib::Request& req, httplib::Response& res) {
    seen_q = req.get_param_value("q");
    seen_format = req.get_param_value("format");
    seen_ua = req.get_header_value("User-Agent");
    res.set_content(
        R"([{"type":"building","display_name":"Tower"},)"
        R"({"type":"City","display_name":"London, England","importance":0.9}])",
        "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  if (port <= 0) {
    SKIP("cannot bind a localhost socket in this environment");
  }
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  geo::GazetteerClientConfig gcfg;
  gcfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/search";
  gcfg.rate_limit_per_sec = 1000.0;
  gcfg.user_agent = "sentigrid-test/0.1";
  geo::HttpGazetteerSource source(gcfg);

  auto result = source.query("Greater London");
  server.stop();
  thread.join();

  REQUIRE(seen_q == "Greater London");
  REQUIRE(seen_format == "json");
  REQUIRE(seen_ua == "sentigrid-test/0.1");
  REQUIRE(result.has_value());
  REQUIRE(result->size() == 2);
  REQUIRE((*result)[0].type_tag == "building");
  REQUIRE((*result)[1].type_tag == "city");  // lowercased
  REQUIRE((*result)[1].confidence == Approx(0.9));

  // Candidate filtering accepts the second entry.
  auto hit = geo::filter_gazetteer_candidates(*result);
  REQUIRE(hit.has_value());
  REQUIRE(hit->resolved_name == "London, England");
}

TEST_CASE("http gazetteer treats bad responses as transient") {
  REQUIRE_FALSE(geo::HttpGazetteerSource::parse_response("not json").has_value());
  REQUIRE_FALSE(geo::HttpGazetteerSource::parse_response(R"({"a":1})").has_value());
  auto empty = geo::HttpGazetteerSource::parse_response("[]");
  REQUIRE(empty.has_value());
  REQUIRE(empty->empty());
}
