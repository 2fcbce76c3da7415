#pragma once

#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
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
#include "sentigrid/sentiment.hpp"
#include "sentigrid/synth.hpp"
#include "sentigrid/types.hpp"

namespace sentigrid::pipeline {

struct DateWindow {
  timeutil::CivilDate start;
  timeutil::CivilDate end;  // inclusive

  bool contains(std::int64_t day) const {
    return day >= timeutil::days_from_civil(start) && day <= timeutil::days_from_civil(end);
  }

  double whole_days() const {
    return static_cast<double>(timeutil::days_from_civil(end) -
                               timeutil::days_from_civil(start) + 1);
  }
};

struct PipelineConfig {
  std::string config_path;
  std::uint64_t config_hash = 0;

  std::string registry_path;
  std::string lexicon_path;
  std::string weather_path;
  std::string input_path;
  std::string out_dir;
  std::string cache_path;

  DateWindow training_window;
  DateWindow test_window;

  ingest::FilterConfig filters;
  std::uint64_t min_bin_size = 5;
  double epsilon_clamp = 1e-3;
  double significance_level = 0.05;
  std::size_t top_k = 20;
  model::FactorSpec factors;

  bool has_gazetteer = false;
  std::string gazetteer_endpoint;
  double gazetteer_rate_limit = 1.0;
  std::string gazetteer_user_agent = "sentigrid/1.0";

  bool has_synth = false;
  synth::GeneratorConfig synth_config;
  std::vector<synth::InjectedEvent> synth_events;

  /// UTC ingest bounds: one day of slack on each side of the local-date
  /// windows covers every real offset.
  void derive_study_window() {
    filters.window_start_utc =
        (timeutil::days_from_civil(training_window.start) - 1) * 86400;
    filters.window_end_utc = (timeutil::days_from_civil(test_window.end) + 2) * 86400;
  }
};

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  const nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ValidationError("config " + path + ": not a JSON object");
  }
  const auto fail = [&](const std::string& field, const std::string& msg) -> void {
    throw ValidationError("config " + path + ": field '" + field + "': " + msg);
  };

  PipelineConfig cfg;
  cfg.config_path = path;
  cfg.config_hash = fnv1a64(text);
  try {
    const auto& paths = j.at("paths");
    auto get_path = [&](const char* key, std::string& out, bool required) {
      if (paths.contains(key)) {
        out = paths.at(key).get<std::string>();
      } else if (required) {
        fail(std::string("paths.") + key, "missing");
      }
    };
    get_path("registry", cfg.registry_path, true);
    get_path("lexicon", cfg.lexicon_path, true);
    get_path("weather", cfg.weather_path, true);
    get_path("input", cfg.input_path, false);
    get_path("out_dir", cfg.out_dir, true);
    get_path("cache", cfg.cache_path, false);

    auto parse_window = [&](const char* key) {
      const auto& w = j.at(key);
      auto s = timeutil::parse_date(w.at("start").get<std::string>());
      auto e = timeutil::parse_date(w.at("end").get<std::string>());
      if (!s || !e) fail(key, "bad date");
      if (*e < *s) fail(key, "end before start");
      return DateWindow{*s, *e};
    };
    cfg.training_window = parse_window("training_window");
    cfg.test_window = parse_window("test_window");
    if (!(cfg.training_window.end < cfg.test_window.start)) {
      fail("test_window", "must start after the training window ends (disjoint windows)");
    }

    if (j.contains("filters")) {
      const auto& f = j.at("filters");
      if (f.contains("languages")) {
        cfg.filters.languages = f.at("languages").get<std::vector<std::string>>();
      }
      if (f.contains("follower_threshold")) {
        cfg.filters.follower_threshold = f.at("follower_threshold").get<std::int64_t>();
      }
    }
    if (j.contains("min_bin_size")) cfg.min_bin_size = j.at("min_bin_size").get<std::uint64_t>();
    if (j.contains("epsilon_clamp")) cfg.epsilon_clamp = j.at("epsilon_clamp").get<double>();
    if (j.contains("significance_level")) {
      cfg.significance_level = j.at("significance_level").get<double>();
    }
    if (j.contains("top_k")) cfg.top_k = j.at("top_k").get<std::size_t>();
    if (j.contains("factors")) {
      cfg.factors =
          model::FactorSpec::from_factor_names(j.at("factors").get<std::vector<std::string>>());
    }
    if (j.contains("reference_levels")) {
      const auto& r = j.at("reference_levels");
      if (r.contains("city")) cfg.factors.reference_city = r.at("city").get<std::string>();
      if (r.contains("hour")) cfg.factors.reference_hour = r.at("hour").get<int>();
      if (r.contains("day")) cfg.factors.reference_day = r.at("day").get<int>();
      if (r.contains("weather")) {
        auto w = parse_weather_category(r.at("weather").get<std::string>());
        if (!w) fail("reference_levels.weather", "unknown category");
        cfg.factors.reference_weather = *w;
      }
    }
    if (j.contains("gazetteer")) {
      const auto& g = j.at("gazetteer");
      cfg.has_gazetteer = true;
      cfg.gazetteer_endpoint = g.at("endpoint").get<std::string>();
      if (g.contains("rate_limit_per_sec")) {
        cfg.gazetteer_rate_limit = g.at("rate_limit_per_sec").get<double>();
      }
      if (g.contains("user_agent")) cfg.gazetteer_user_agent = g.at("user_agent").get<std::string>();
    }
    if (j.contains("synth")) {
      cfg.has_synth = true;
      std::tie(cfg.synth_config, cfg.synth_events) =
          synth::parse_generator_json(j.at("synth"), path);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }

  if (!(cfg.significance_level > 0.0 && cfg.significance_level < 1.0)) {
    fail("significance_level", "must be in (0,1)");
  }
  if (!(cfg.epsilon_clamp > 0.0 && cfg.epsilon_clamp < 0.5)) {
    fail("epsilon_clamp", "must be in (0, 0.5)");
  }
  cfg.derive_study_window();
  return cfg;
}

// --- output helpers ----------------------------------------------------

/// Write-temp-then-rename so a crashed run never leaves a truncated file.
class AtomicWriter {
 public:
  explicit AtomicWriter(const std::string& path)
      : path_(path), tmp_path_(path + ".tmp"), out_(tmp_path_, std::ios::binary) {
    if (!out_) throw ValidationError("cannot write output file: " + path);
  }

  std::ostream& stream() { return out_; }

  void commit() {
    out_.flush();
    if (!out_) throw ValidationError("write failed: " + tmp_path_);
    out_.close();
    std::filesystem::rename(tmp_path_, path_);
    committed_ = true;
  }

  ~AtomicWriter() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(tmp_path_, ec);
    }
  }

 private:
  std::string path_;
  std::string tmp_path_;
  std::ofstream out_;
  bool committed_ = false;
};

inline void require_input_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError("missing " + what + " file: " + path);
  }
}

/// Records config hash and input digests; no timestamps, so reruns are
/// byte-identical.
inline void write_run_manifest(const PipelineConfig& cfg, const std::string& command,
                               const std::vector<std::string>& input_paths,
                               const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = cfg.config_path;
  j["config_hash"] = hex64(cfg.config_hash);
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& p : input_paths) inputs[p] = hex64(fnv1a64_file(p));
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  AtomicWriter w(cfg.out_dir + "/run_manifest_" + command + ".json");
  w.stream() << j.dump(2) << '\n';
  w.commit();
}

// --- ingest ------------------------------------------------------------

/// Parse, filter, classify, resolve, score, and bin an NDJSON stream.
inline ingest::IngestReport run_ingest_stream(std::istream& in, const PipelineConfig& cfg,
                                              const geo::CityRegistry& registry,
                                              const sentiment::Lexicon& lexicon,
                                              geo::GazetteerSource* gazetteer,
                                              geo::ResolutionCache* cache,
                                              aggregate::BinAccumulator& bins,
                                              std::int64_t now = 0) {
  ingest::IngestReport report;
  geo::Resolver resolver(registry, gazetteer, cache);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto rec = ingest::parse_record(line);
    if (!rec) {
      ++report.dropped_malformed;
      continue;
    }
    ++report.parsed;
    if (auto reason = ingest::filter_record(*rec, cfg.filters)) {
      report.count_drop(*reason);
      continue;
    }
    const geo::ResolveResult res = resolver.resolve(rec->user_location_raw, now);
    if (res.status != geo::ResolveStatus::kResolved) {
      ++report.unresolved_location;
      if (res.unmatched_gazetteer) ++report.unmatched_gazetteer;
      continue;
    }
    const geo::CityEntry* entry = registry.by_id(res.city_id);
    const geo::LocalTime local = geo::localize_timestamp(rec->created_at_utc, *entry);
    const auto score = sentiment::score_text(rec->text, lexicon);
    const auto labels = sentiment::polarity_labels(score);
    const bool social =
        ingest::classify_interaction(*rec) == ingest::InteractionType::kSocial;
    bins.add(res.city_id, local, labels.is_positive, labels.is_negative, social);
    ++report.kept;
  }
  return report;
}

inline void cmd_ingest(const PipelineConfig& cfg, geo::GazetteerSource* gazetteer = nullptr) {
  require_input_file(cfg.input_path, "input");
  require_input_file(cfg.registry_path, "registry");
  require_input_file(cfg.lexicon_path, "lexicon");
  require_input_file(cfg.weather_path, "weather");

  const geo::CityRegistry registry = geo::load_city_registry(cfg.registry_path);
  const sentiment::Lexicon lexicon = sentiment::load_lexicon(cfg.lexicon_path);
  const aggregate::WeatherTable weather = aggregate::load_weather_table(cfg.weather_path);

  geo::ResolutionCache cache;
  const bool use_cache = !cfg.cache_path.empty();
  if (use_cache) cache.load(cfg.cache_path);

  std::ifstream in(cfg.input_path, std::ios::binary);
  if (!in) throw ValidationError("cannot open input file: " + cfg.input_path);

  aggregate::BinAccumulator bins;
  const std::int64_t now = gazetteer ? std::time(nullptr) : 0;
  const ingest::IngestReport report = run_ingest_stream(
      in, cfg, registry, lexicon, gazetteer, use_cache ? &cache : nullptr, bins, now);

  std::filesystem::create_directories(cfg.out_dir);
  {
    AtomicWriter w(cfg.out_dir + "/bins.csv");
    aggregate::write_bins_csv(w.stream(), bins.finalize(weather));
    w.commit();
  }
  {
    AtomicWriter w(cfg.out_dir + "/ingest_report.txt");
    report.write(w.stream());
    w.commit();
  }
  if (use_cache) {
    AtomicWriter w(cfg.cache_path);
    cache.save(w.stream());
    w.commit();
  }
  write_run_manifest(cfg, "ingest",
                     {cfg.input_path, cfg.registry_path, cfg.lexicon_path, cfg.weather_path},
                     {"bins.csv", "ingest_report.txt"});
}

// --- fit ---------------------------------------------------------------

inline std::vector<aggregate::CityHourBin> load_bins(const std::string& path) {
  require_input_file(path, "bins");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open bins file: " + path);
  return aggregate::read_bins_csv(in, path);
}

inline std::vector<aggregate::CityHourBin> select_window(
    const std::vector<aggregate::CityHourBin>& bins, const DateWindow& window,
    std::uint64_t min_bin_size) {
  std::vector<aggregate::CityHourBin> out;
  for (const auto& b : bins) {
    if (window.contains(b.key.day) && b.n_total >= min_bin_size) out.push_back(b);
  }
  return out;
}

struct FitSummaryRow {
  Polarity outcome;
  std::string factors;
  std::size_t n_train = 0;
  std::size_t k = 0;
  double r_squared = 0.0;
  std::optional<std::size_t> significant;
  std::optional<stats::Correlation> test_r;
  std::size_t n_test = 0;
};

inline void write_fit_summary_csv(std::ostream& out, const std::vector<FitSummaryRow>& rows) {
  out << "outcome,factors,n_train,coefficients,significant,r_squared_pct,test_r,test_ci_low,"
         "test_ci_high,n_test\n";
  char buf[64];
  for (const auto& r : rows) {
    std::vector<std::string> fields;
    fields.push_back(std::string(to_string(r.outcome)));
    fields.push_back(r.factors);
    fields.push_back(std::to_string(r.n_train));
    fields.push_back(std::to_string(r.k));
    fields.push_back(r.significant ? std::to_string(*r.significant) : std::string());
    std::snprintf(buf, sizeof buf, "%.4f", r.r_squared * 100.0);
    fields.push_back(buf);
    if (r.test_r) {
      std::snprintf(buf, sizeof buf, "%.4f", r.test_r->r);
      fields.push_back(buf);
      std::snprintf(buf, sizeof buf, "%.4f", r.test_r->ci_low);
      fields.push_back(buf);
      std::snprintf(buf, sizeof buf, "%.4f", r.test_r->ci_high);
      fields.push_back(buf);
    } else {
      fields.insert(fields.end(), 3, std::string());
    }
    fields.push_back(std::to_string(r.n_test));
    csv::write_row(out, fields);
  }
}

inline std::string model_path(const PipelineConfig& cfg, Polarity outcome) {
  return cfg.out_dir + "/model_" + std::string(to_string(outcome)) + ".json";
}

inline void cmd_fit(const PipelineConfig& cfg) {
  const auto bins = load_bins(cfg.out_dir + "/bins.csv");
  const auto train = select_window(bins, cfg.training_window, cfg.min_bin_size);
  if (train.empty()) throw ValidationError("fit: no training bins in window");
  const auto test = select_window(bins, cfg.test_window, cfg.min_bin_size);

  std::vector<FitSummaryRow> summary;
  for (Polarity outcome : {Polarity::kPositive, Polarity::kNegative}) {
    model::FittedModel m =
        model::fit_model(train, cfg.factors, outcome, cfg.min_bin_size, cfg.epsilon_clamp);
    {
      AtomicWriter w(model_path(cfg, outcome));
      w.stream() << model::to_json(m);
      w.commit();
    }
    FitSummaryRow row;
    row.outcome = outcome;
    std::string factors;
    for (const auto& f : m.spec.factor_names()) {
      if (!factors.empty()) factors += '+';
      factors += f;
    }
    row.factors = factors.empty() ? "null" : factors;
    row.n_train = m.n_obs;
    row.k = m.column_names.size();
    row.r_squared = m.r_squared;
    try {
      row.significant = model::coefficient_significance(m).significant_count;
    } catch (const ValidationError&) {
      // Too few observations for the normal approximation; leave blank.
    }
    row.n_test = test.size();
    if (test.size() >= 4) {
      std::vector<double> predicted, observed;
      predicted.reserve(test.size());
      observed.reserve(test.size());
      for (const auto& b : test) {
        predicted.push_back(model::predict(m, b));
        observed.push_back(outcome == Polarity::kPositive ? b.p_pos : b.p_neg);
      }
      try {
        row.test_r = model::evaluate_correlation(predicted, observed);
      } catch (const ValidationError&) {
        // Zero-variance predictions (e.g. the null model) have no r.
      }
    }
    summary.push_back(std::move(row));
  }
  AtomicWriter w(cfg.out_dir + "/fit_summary.csv");
  write_fit_summary_csv(w.stream(), summary);
  w.commit();
  write_run_manifest(cfg, "fit", {cfg.out_dir + "/bins.csv"},
                     {"model_positive.json", "model_negative.json", "fit_summary.csv"});
}

// --- detect ------------------------------------------------------------

inline std::vector<deviation::DeviationScore> score_test_bins(
    const std::vector<aggregate::CityHourBin>& test_bins, const model::FittedModel& m_pos,
    const model::FittedModel& m_neg) {
  std::vector<deviation::DeviationScore> scores;
  scores.reserve(test_bins.size() * 2);
  for (const auto& b : test_bins) {
    scores.push_back(deviation::score_bin(b, m_pos));
    scores.push_back(deviation::score_bin(b, m_neg));
  }
  return scores;
}

inline void cmd_detect(const PipelineConfig& cfg) {
  require_input_file(model_path(cfg, Polarity::kPositive), "model");
  require_input_file(model_path(cfg, Polarity::kNegative), "model");
  const model::FittedModel m_pos = model::load_model(model_path(cfg, Polarity::kPositive));
  const model::FittedModel m_neg = model::load_model(model_path(cfg, Polarity::kNegative));
  const auto bins = load_bins(cfg.out_dir + "/bins.csv");

  std::vector<aggregate::CityHourBin> test_bins;
  for (const auto& b : bins) {
    if (cfg.test_window.contains(b.key.day)) test_bins.push_back(b);
  }
  const auto scores = score_test_bins(test_bins, m_pos, m_neg);
  const auto significant = deviation::significant_scores(scores, cfg.significance_level);

  const geo::CityRegistry registry = geo::load_city_registry(cfg.registry_path);
  const auto events =
      deviation::merge_events(significant, registry, cfg.test_window.whole_days());

  {
    AtomicWriter w(cfg.out_dir + "/deviations.csv");
    deviation::write_deviations_csv(w.stream(), scores);
    w.commit();
  }
  {
    AtomicWriter w(cfg.out_dir + "/events.csv");
    deviation::write_events_csv(w.stream(), events);
    w.commit();
  }
  write_run_manifest(cfg, "detect",
                     {cfg.out_dir + "/bins.csv", model_path(cfg, Polarity::kPositive),
                      model_path(cfg, Polarity::kNegative), cfg.registry_path},
                     {"deviations.csv", "events.csv"});
}

// --- report ------------------------------------------------------------

/// Table-shaped event report: rank, rendered time and place, observed and
/// expected percentages over the event's member bins, recurrence interval.
inline void emit_event_report(std::ostream& out, const std::vector<deviation::MergedEvent>& events,
                              const geo::CityRegistry& registry) {
  out << "rank,time_and_location,polarity,direction,observed_pct_expected,recurrence_interval,"
         "label\n";
  for (const auto& ev : events) {
    std::string place = ev.place_id;
    if (const geo::CityEntry* entry = registry.by_id(ev.place_id)) {
      place = entry->display_name;
    }
    std::string when;
    if (ev.scope == deviation::EventScope::kCountryMultiday &&
        !(ev.start_date == ev.end_date)) {
      when = timeutil::format_date(ev.start_date) + " to " + timeutil::format_date(ev.end_date);
    } else if (ev.scope == deviation::EventScope::kCountryHour) {
      char buf[24];
      std::snprintf(buf, sizeof buf, " %02d:00", ev.start_hour);
      when = timeutil::format_date(ev.start_date) + buf;
    } else {
      when = timeutil::format_date(ev.start_date);
    }

    double observed = 0.0, expected = 0.0, total = 0.0;
    for (const auto& m : ev.members) {
      observed += static_cast<double>(m.observed);
      expected += m.expected;
      total += static_cast<double>(m.n_total);
    }
    char pct[48];
    std::snprintf(pct, sizeof pct, "%.1f%% (%.1f%%)", 100.0 * observed / total,
                  100.0 * expected / total);

    csv::write_row(out, {std::to_string(ev.rank), when + " in " + place,
                         std::string(to_string(ev.polarity)),
                         std::string(to_string(ev.direction)), pct, ev.recurrence.render(),
                         std::string()});
  }
}

inline void write_ranked_deviations(std::ostream& out,
                                    const std::vector<deviation::DeviationScore>& ranked,
                                    double observation_days) {
  out << "rank,city_id,local_date,hour,observed,expected,statistic,p_value,direction,"
         "recurrence_interval\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& s = ranked[i];
    csv::write_row(out,
                   {std::to_string(i + 1), s.key.city_id,
                    timeutil::format_date(timeutil::civil_from_days(s.key.day)),
                    std::to_string(s.key.hour), std::to_string(s.observed),
                    deviation::detail::format_g17(s.expected),
                    deviation::detail::format_g17(s.statistic),
                    deviation::detail::format_g17(s.p_value), std::string(to_string(s.direction)),
                    deviation::recurrence_interval(i + 1, observation_days).render()});
  }
}

/// Figure-7-shaped per-city timeline: expected and observed counts per
/// polarity per hour, with the deviation statistic and signed direction.
inline void export_city_timeline(std::ostream& out, const std::string& city_id,
                                 const std::vector<aggregate::CityHourBin>& test_bins,
                                 const model::FittedModel& m_pos,
                                 const model::FittedModel& m_neg) {
  out << "city_id,local_date,hour,n_total,expected_pos,observed_pos,statistic_pos,direction_pos,"
         "expected_neg,observed_neg,statistic_neg,direction_neg\n";
  bool any = false;
  for (const auto& b : test_bins) {
    if (b.key.city_id != city_id) continue;
    any = true;
    const auto s_pos = deviation::score_bin(b, m_pos);
    const auto s_neg = deviation::score_bin(b, m_neg);
    auto signed_dir = [](const deviation::DeviationScore& s) {
      return s.statistic == 0.0 ? "0" : (s.direction == Direction::kSurplus ? "1" : "-1");
    };
    csv::write_row(out, {b.key.city_id,
                         timeutil::format_date(timeutil::civil_from_days(b.key.day)),
                         std::to_string(b.key.hour), std::to_string(b.n_total),
                         deviation::detail::format_g17(s_pos.expected),
                         std::to_string(s_pos.observed),
                         deviation::detail::format_g17(s_pos.statistic), signed_dir(s_pos),
                         deviation::detail::format_g17(s_neg.expected),
                         std::to_string(s_neg.observed),
                         deviation::detail::format_g17(s_neg.statistic), signed_dir(s_neg)});
  }
  if (!any) throw ValidationError("timeline: city '" + city_id + "' has no test bins");
}

inline void cmd_report(const PipelineConfig& cfg, const std::optional<std::string>& city) {
  require_input_file(cfg.out_dir + "/deviations.csv", "deviations");
  std::ifstream dev_in(cfg.out_dir + "/deviations.csv", std::ios::binary);
  auto scores = deviation::read_deviations_csv(dev_in, cfg.out_dir + "/deviations.csv");
  const geo::CityRegistry registry = geo::load_city_registry(cfg.registry_path);
  const double days = cfg.test_window.whole_days();

  // The deviations schema has no bin totals; rejoin them for the report's
  // observed/expected percentages.
  const auto all_bins = load_bins(cfg.out_dir + "/bins.csv");
  std::unordered_map<BinKey, std::uint64_t, BinKeyHash> totals;
  for (const auto& b : all_bins) totals.emplace(b.key, b.n_total);
  for (auto& s : scores) {
    auto it = totals.find(s.key);
    if (it == totals.end()) {
      throw ValidationError("report: deviations.csv row has no matching bin for " +
                            s.key.city_id);
    }
    s.n_total = it->second;
  }

  const auto significant = deviation::significant_scores(scores, cfg.significance_level);
  const auto events = deviation::merge_events(significant, registry, days);

  std::vector<std::string> outputs = {"event_report.csv", "ranked_positive.csv",
                                      "ranked_negative.csv"};
  {
    AtomicWriter w(cfg.out_dir + "/event_report.csv");
    emit_event_report(w.stream(), events, registry);
    w.commit();
  }
  for (Polarity pol : {Polarity::kPositive, Polarity::kNegative}) {
    const auto ranked = deviation::rank_deviations(scores, pol);
    AtomicWriter w(cfg.out_dir + "/ranked_" + std::string(to_string(pol)) + ".csv");
    write_ranked_deviations(w.stream(), ranked, days);
    w.commit();
  }
  if (city) {
    require_input_file(model_path(cfg, Polarity::kPositive), "model");
    require_input_file(model_path(cfg, Polarity::kNegative), "model");
    const auto m_pos = model::load_model(model_path(cfg, Polarity::kPositive));
    const auto m_neg = model::load_model(model_path(cfg, Polarity::kNegative));
    const auto bins = load_bins(cfg.out_dir + "/bins.csv");
    std::vector<aggregate::CityHourBin> test_bins;
    for (const auto& b : bins) {
      if (cfg.test_window.contains(b.key.day)) test_bins.push_back(b);
    }
    AtomicWriter w(cfg.out_dir + "/timeline_" + *city + ".csv");
    export_city_timeline(w.stream(), *city, test_bins, m_pos, m_neg);
    w.commit();
    outputs.push_back("timeline_" + *city + ".csv");
  }
  write_run_manifest(cfg, "report", {cfg.out_dir + "/deviations.csv", cfg.registry_path},
                     outputs);
}

// --- synth -------------------------------------------------------------

inline void write_registry_csv(std::ostream& out, const std::vector<synth::SynthCity>& cities) {
  out << "city_id,display_name,country,tz,fallback_offset_minutes,aliases\n";
  for (const auto& c : cities) {
    const std::string display = c.display_name.empty() ? c.city_id : c.display_name;
    csv::write_row(out, {c.city_id, display, c.country, c.tz,
                         std::to_string(c.fallback_offset_minutes),
                         geo::normalize_location(display)});
  }
}

inline void write_weather_csv(std::ostream& out, const aggregate::WeatherTable& table) {
  out << "city_id,local_date,hour,category\n";
  std::vector<std::pair<BinKey, WeatherCategory>> rows(table.entries().begin(),
                                                       table.entries().end());
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [key, cat] : rows) {
    csv::write_row(out, {key.city_id, timeutil::format_date(timeutil::civil_from_days(key.day)),
                         std::to_string(key.hour), std::string(to_string(cat))});
  }
}

inline void cmd_synth(const PipelineConfig& cfg) {
  if (!cfg.has_synth) {
    throw ValidationError("config " + cfg.config_path + ": field 'synth': missing");
  }
  std::filesystem::create_directories(cfg.out_dir);

  // Collect, then sort by (timestamp, id) for a stable output order.
  std::vector<std::pair<std::pair<std::int64_t, std::string>, std::string>> lines;
  const auto result = synth::generate_corpus(
      cfg.synth_config, cfg.synth_events,
      [&](const ingest::TweetRecord& rec, const std::string&) {
        lines.emplace_back(std::make_pair(rec.created_at_utc, rec.id), ingest::to_ndjson(rec));
      });
  std::sort(lines.begin(), lines.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  {
    AtomicWriter w(cfg.out_dir + "/records.ndjson");
    for (const auto& [key, line] : lines) w.stream() << line << '\n';
    w.commit();
  }
  {
    AtomicWriter w(cfg.out_dir + "/registry.csv");
    write_registry_csv(w.stream(), cfg.synth_config.cities);
    w.commit();
  }
  {
    AtomicWriter w(cfg.out_dir + "/weather.csv");
    write_weather_csv(w.stream(), result.weather);
    w.commit();
  }
  {
    AtomicWriter w(cfg.out_dir + "/manifest.json");
    w.stream() << synth::manifest_json(cfg.synth_config, cfg.synth_events).dump(2) << '\n';
    w.commit();
  }
  write_run_manifest(cfg, "synth", {},
                     {"records.ndjson", "registry.csv", "weather.csv", "manifest.json"});
}

// --- eval --------------------------------------------------------------

inline std::vector<deviation::EventSummary> load_events(const std::string& path) {
  require_input_file(path, "events");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open events file: " + path);
  return deviation::read_events_csv(in, path);
}

inline void cmd_eval_detection(const PipelineConfig& cfg, const std::string& manifest_path,
                               const std::string& events_path) {
  require_input_file(manifest_path, "manifest");
  std::ifstream in(manifest_path, std::ios::binary);
  const nlohmann::json mj = nlohmann::json::parse(in, nullptr, false);
  if (mj.is_discarded()) throw ValidationError("manifest " + manifest_path + ": bad JSON");
  auto [gen_cfg, injected] = synth::parse_generator_json(mj, manifest_path);

  const auto events = load_events(events_path);
  const geo::CityRegistry registry = geo::load_city_registry(cfg.registry_path);
  const auto report = synth::evaluate_detection(injected, events, registry, cfg.top_k);

  std::filesystem::create_directories(cfg.out_dir);
  AtomicWriter w(cfg.out_dir + "/detection_report.csv");
  synth::write_detection_report_csv(w.stream(), report);
  w.commit();
  write_run_manifest(cfg, "eval", {manifest_path, events_path, cfg.registry_path},
                     {"detection_report.csv"});
}

inline void cmd_eval_bias(const PipelineConfig& cfg, const std::string& full_path,
                          const std::string& nocity_path, const std::string& null_path,
                          double margin_events) {
  const auto full = load_events(full_path);
  const auto nocity = load_events(nocity_path);
  const auto null_events = load_events(null_path);
  const geo::CityRegistry registry = geo::load_city_registry(cfg.registry_path);
  const auto report =
      synth::bias_report(full, nocity, null_events, registry, cfg.top_k, margin_events);

  std::filesystem::create_directories(cfg.out_dir);
  AtomicWriter w(cfg.out_dir + "/bias_report.csv");
  synth::write_bias_report_csv(w.stream(), report);
  w.commit();
  write_run_manifest(cfg, "eval", {full_path, nocity_path, null_path, cfg.registry_path},
                     {"bias_report.csv"});
}

inline void cmd_all(const PipelineConfig& cfg) {
  cmd_ingest(cfg);
  cmd_fit(cfg);
  cmd_detect(cfg);
  cmd_report(cfg, std::nullopt);
}

}  // namespace sentigrid::pipeline
