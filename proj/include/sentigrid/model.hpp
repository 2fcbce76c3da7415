#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sentigrid/aggregate.hpp"
#include "sentigrid/stats.hpp"
#include "sentigrid/types.hpp"

namespace sentigrid::model {

/// Which factors enter the design. An empty selection is the null model
/// (intercept only), used as the most degenerate baseline.
struct FactorSpec {
  bool include_city = true;
  bool include_hour = true;
  bool include_day = true;
  bool include_weather = true;
  bool include_social = true;

  // Reference levels; empty city means "lexicographically first observed".
  std::string reference_city;
  int reference_hour = 0;
  int reference_day = 0;
  WeatherCategory reference_weather = WeatherCategory::kClear;

  static FactorSpec none() { return FactorSpec{false, false, false, false, false, "", 0, 0,
                                               WeatherCategory::kClear}; }

  std::vector<std::string> factor_names() const {
    std::vector<std::string> out;
    if (include_city) out.push_back("city");
    if (include_hour) out.push_back("hour");
    if (include_day) out.push_back("day");
    if (include_weather) out.push_back("weather");
    if (include_social) out.push_back("social");
    return out;
  }

  static FactorSpec from_factor_names(const std::vector<std::string>& names) {
    FactorSpec spec = none();
    for (const auto& f : names) {
      if (f == "city") {
        spec.include_city = true;
      } else if (f == "hour") {
        spec.include_hour = true;
      } else if (f == "day") {
        spec.include_day = true;
      } else if (f == "weather") {
        spec.include_weather = true;
      } else if (f == "social") {
        spec.include_social = true;
      } else {
        throw ValidationError("unknown factor '" + f + "'");
      }
    }
    return spec;
  }
};

/// Column layout of a fitted design: which (factor, level) owns which
/// column. Reconstructible from the column names alone.
struct LevelLayout {
  std::unordered_map<std::string, int> city_cols;
  std::array<int, 24> hour_cols;
  std::array<int, 7> day_cols;
  std::array<int, 7> weather_cols;  // indexed by WeatherCategory
  int social_col = -1;
  std::string reference_city;
  int reference_hour = 0;
  int reference_day = 0;
  WeatherCategory reference_weather = WeatherCategory::kClear;

  LevelLayout() {
    hour_cols.fill(-1);
    day_cols.fill(-1);
    weather_cols.fill(-1);
  }
};

struct DesignMatrix {
  Eigen::MatrixXd X;
  Eigen::VectorXd y_pos;
  Eigen::VectorXd y_neg;
  std::vector<std::string> column_names;  // intercept first
  LevelLayout layout;
};

/// Dummy coding with one dropped reference level per categorical factor
/// plus an intercept; missing weather codes as the reference level. Rows
/// follow bin order.
inline DesignMatrix build_design_matrix(const std::vector<aggregate::CityHourBin>& bins,
                                        const FactorSpec& spec) {
  if (bins.empty()) throw ValidationError("build_design_matrix: no bins");

  LevelLayout layout;
  layout.reference_hour = spec.reference_hour;
  layout.reference_day = spec.reference_day;
  layout.reference_weather = spec.reference_weather;

  std::set<std::string> cities;
  std::set<int> hours, days;
  std::set<int> weathers;
  for (const auto& b : bins) {
    cities.insert(b.key.city_id);
    hours.insert(b.key.hour);
    days.insert(b.day_of_week);
    if (b.weather) weathers.insert(static_cast<int>(*b.weather));
  }

  std::vector<std::string> names;
  names.push_back("intercept");
  int col = 1;

  if (spec.include_city) {
    layout.reference_city = spec.reference_city.empty() ? *cities.begin() : spec.reference_city;
    if (!cities.count(layout.reference_city)) {
      throw ValidationError("reference city '" + layout.reference_city + "' not observed");
    }
    if (cities.size() < 2) {
      throw ValidationError("factor city has a single observed level (rank deficient)");
    }
    for (const auto& c : cities) {
      if (c == layout.reference_city) continue;
      layout.city_cols.emplace(c, col++);
      names.push_back("city=" + c);
    }
  }
  if (spec.include_hour) {
    if (!hours.count(spec.reference_hour)) {
      throw ValidationError("reference hour not observed");
    }
    if (hours.size() < 2) {
      throw ValidationError("factor hour has a single observed level (rank deficient)");
    }
    for (int h : hours) {
      if (h == spec.reference_hour) continue;
      layout.hour_cols[h] = col++;
      names.push_back("hour=" + std::to_string(h));
    }
  }
  if (spec.include_day) {
    if (!days.count(spec.reference_day)) {
      throw ValidationError("reference day not observed");
    }
    if (days.size() < 2) {
      throw ValidationError("factor day has a single observed level (rank deficient)");
    }
    for (int d : days) {
      if (d == spec.reference_day) continue;
      layout.day_cols[d] = col++;
      names.push_back("day=" + std::to_string(d));
    }
  }
  if (spec.include_weather) {
    if (!weathers.count(static_cast<int>(spec.reference_weather))) {
      throw ValidationError("reference weather category not observed");
    }
    if (weathers.size() < 2) {
      throw ValidationError("factor weather has a single observed level (rank deficient)");
    }
    for (int w : weathers) {
      if (w == static_cast<int>(spec.reference_weather)) continue;
      layout.weather_cols[w] = col++;
      names.push_back("weather=" + std::string(to_string(static_cast<WeatherCategory>(w))));
    }
  }
  if (spec.include_social) {
    layout.social_col = col++;
    names.push_back("p_social");
  }

  const auto n = static_cast<Eigen::Index>(bins.size());
  const auto k = static_cast<Eigen::Index>(col);
  DesignMatrix dm;
  dm.X = Eigen::MatrixXd::Zero(n, k);
  dm.y_pos.resize(n);
  dm.y_neg.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = bins[static_cast<std::size_t>(i)];
    dm.X(i, 0) = 1.0;
    if (spec.include_city) {
      auto it = layout.city_cols.find(b.key.city_id);
      if (it != layout.city_cols.end()) dm.X(i, it->second) = 1.0;
    }
    if (spec.include_hour && layout.hour_cols[b.key.hour] >= 0) {
      dm.X(i, layout.hour_cols[b.key.hour]) = 1.0;
    }
    if (spec.include_day && layout.day_cols[b.day_of_week] >= 0) {
      dm.X(i, layout.day_cols[b.day_of_week]) = 1.0;
    }
    if (spec.include_weather && b.weather) {
      const int w = static_cast<int>(*b.weather);
      if (layout.weather_cols[w] >= 0) dm.X(i, layout.weather_cols[w]) = 1.0;
    }
    if (spec.include_social) dm.X(i, layout.social_col) = b.p_social;
    dm.y_pos(i) = b.p_pos;
    dm.y_neg(i) = b.p_neg;
  }
  dm.column_names = std::move(names);
  dm.layout = std::move(layout);
  return dm;
}

struct OlsFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd stderrs;
  double sigma2 = 0.0;
  double r_squared = 0.0;
  std::size_t n_obs = 0;
};

/// Least squares by column-pivoted Householder QR; never forms an explicit
/// normal-equation inverse for the solve. Standard errors come from the
/// triangular factor: (X'X)^-1 = P R^-1 R^-T P'.
inline OlsFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const std::vector<std::string>* column_names = nullptr) {
  const Eigen::Index n = X.rows();
  const Eigen::Index k = X.cols();
  if (n <= k) {
    throw ValidationError("fit_ols: need more observations than columns (n=" +
                          std::to_string(n) + ", k=" + std::to_string(k) + ")");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < k) {
    std::string msg = "fit_ols: design is rank deficient; dependent columns:";
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index j = qr.rank(); j < k; ++j) {
      const Eigen::Index orig = perm(j);
      msg += ' ';
      msg += column_names && orig < static_cast<Eigen::Index>(column_names->size())
                 ? (*column_names)[static_cast<std::size_t>(orig)]
                 : std::to_string(orig);
    }
    throw ValidationError(msg);
  }

  OlsFit fit;
  fit.n_obs = static_cast<std::size_t>(n);
  fit.beta = qr.solve(y);

  const Eigen::VectorXd residual = y - X * fit.beta;
  const double ssr = residual.squaredNorm();
  fit.sigma2 = ssr / static_cast<double>(n - k);

  const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd A = Rinv * Rinv.transpose();  // (R'R)^-1
  const Eigen::MatrixXd xtx_inv =
      qr.colsPermutation() * A * qr.colsPermutation().transpose();
  fit.stderrs.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double v = xtx_inv(j, j);
    fit.stderrs(j) = v > 0.0 ? std::sqrt(fit.sigma2 * v) : 0.0;
  }

  const double mean = y.mean();
  const double sst = (y.array() - mean).matrix().squaredNorm();
  // SST = 0 (constant outcome) defines r^2 as 0.
  double r2 = sst > 0.0 ? 1.0 - ssr / sst : 0.0;
  if (r2 < 0.0) r2 = 0.0;
  if (r2 > 1.0) r2 = 1.0;
  fit.r_squared = r2;
  return fit;
}

/// Tally of prediction-time bins whose level was never observed in
/// training (coded as the reference level).
struct UnseenLevelTally {
  std::uint64_t city = 0;
  std::uint64_t hour = 0;
  std::uint64_t day = 0;
  std::uint64_t weather = 0;

  std::uint64_t total() const { return city + hour + day + weather; }
};

struct FittedModel {
  FactorSpec spec;
  Polarity outcome = Polarity::kPositive;
  std::vector<std::string> column_names;
  Eigen::VectorXd beta;
  Eigen::VectorXd stderrs;
  double sigma2 = 0.0;
  double r_squared = 0.0;
  std::size_t n_obs = 0;
  std::uint64_t min_bin_size = 5;
  double epsilon_clamp = 1e-3;
  LevelLayout layout;
};

inline FittedModel fit_model(const std::vector<aggregate::CityHourBin>& bins,
                             const FactorSpec& spec, Polarity outcome,
                             std::uint64_t min_bin_size = 5, double epsilon_clamp = 1e-3) {
  DesignMatrix dm = build_design_matrix(bins, spec);
  const Eigen::VectorXd& y = outcome == Polarity::kPositive ? dm.y_pos : dm.y_neg;
  OlsFit fit = fit_ols(dm.X, y, &dm.column_names);
  FittedModel m;
  m.spec = spec;
  m.outcome = outcome;
  m.column_names = std::move(dm.column_names);
  m.beta = std::move(fit.beta);
  m.stderrs = std::move(fit.stderrs);
  m.sigma2 = fit.sigma2;
  m.r_squared = fit.r_squared;
  m.n_obs = fit.n_obs;
  m.min_bin_size = min_bin_size;
  m.epsilon_clamp = epsilon_clamp;
  m.layout = std::move(dm.layout);
  return m;
}

/// Two-sided p-values from the normal approximation of beta_j / stderr_j.
/// A zero stderr with nonzero beta marks an exact-fit artifact (p = 0).
struct SignificanceReport {
  std::vector<double> p_values;
  std::size_t significant_count = 0;  // p < 0.05
};

inline SignificanceReport coefficient_significance(const FittedModel& m) {
  if (m.n_obs <= m.column_names.size() + 30) {
    throw ValidationError("coefficient_significance: requires n_obs - k > 30");
  }
  SignificanceReport rep;
  rep.p_values.resize(static_cast<std::size_t>(m.beta.size()));
  for (Eigen::Index j = 0; j < m.beta.size(); ++j) {
    double p;
    if (m.stderrs(j) > 0.0) {
      p = stats::normal_two_sided_p(m.beta(j) / m.stderrs(j));
    } else {
      p = m.beta(j) == 0.0 ? 1.0 : 0.0;
    }
    rep.p_values[static_cast<std::size_t>(j)] = p;
    if (p < 0.05) ++rep.significant_count;
  }
  return rep;
}

/// Linear prediction for one bin, clamped to [eps, 1-eps]. Levels unseen
/// in training code as the reference level and are tallied.
inline double predict(const FittedModel& m, const aggregate::CityHourBin& bin,
                      UnseenLevelTally* tally = nullptr) {
  double value = m.beta(0);
  const LevelLayout& L = m.layout;
  if (m.spec.include_city) {
    auto it = L.city_cols.find(bin.key.city_id);
    if (it != L.city_cols.end()) {
      value += m.beta(it->second);
    } else if (bin.key.city_id != L.reference_city && tally) {
      ++tally->city;
    }
  }
  if (m.spec.include_hour) {
    const int c = L.hour_cols[bin.key.hour];
    if (c >= 0) value += m.beta(c);
    // hour_cols holds -1 for both the reference hour and unseen hours;
    // only the latter is worth tallying.
    else if (bin.key.hour != L.reference_hour && tally) ++tally->hour;
  }
  if (m.spec.include_day) {
    const int c = L.day_cols[bin.day_of_week];
    if (c >= 0) value += m.beta(c);
    else if (bin.day_of_week != L.reference_day && tally) ++tally->day;
  }
  if (m.spec.include_weather && bin.weather) {
    const int c = L.weather_cols[static_cast<int>(*bin.weather)];
    if (c >= 0) value += m.beta(c);
    else if (*bin.weather != L.reference_weather && tally) ++tally->weather;
  }
  if (m.spec.include_social) value += m.beta(L.social_col) * bin.p_social;

  const double eps = m.epsilon_clamp;
  if (value < eps) return eps;
  if (value > 1.0 - eps) return 1.0 - eps;
  return value;
}

using CorrelationEstimate = stats::Correlation;

/// Pearson r between predictions and observations with the Fisher 95% CI.
inline CorrelationEstimate evaluate_correlation(std::span<const double> predicted,
                                                std::span<const double> observed) {
  return stats::pearson_with_fisher_ci(predicted, observed);
}

namespace detail {

inline std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

// 17 significant digits round-trips IEEE doubles exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  if (s == "inf" || s == "-inf" || s == "nan" || s == "-nan") {
    throw InternalError("model serialization: non-finite number");
  }
  return s;
}

}  // namespace detail

/// Model file JSON. Written by hand so floating-point fields are emitted
/// with 17 significant digits and a stable key order.
inline std::string to_json(const FittedModel& m) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"spec\": {\"factors\": [";
  const auto factors = m.spec.factor_names();
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (i) out << ", ";
    out << '"' << factors[i] << '"';
  }
  out << "], \"reference_levels\": {\"city\": \""
      << detail::json_escape(m.layout.reference_city) << "\", \"hour\": "
      << m.layout.reference_hour << ", \"day\": " << m.layout.reference_day
      << ", \"weather\": \"" << to_string(m.layout.reference_weather) << "\"}},\n";
  out << "  \"outcome\": \"" << to_string(m.outcome) << "\",\n";
  out << "  \"column_names\": [";
  for (std::size_t i = 0; i < m.column_names.size(); ++i) {
    if (i) out << ", ";
    out << '"' << detail::json_escape(m.column_names[i]) << '"';
  }
  out << "],\n";
  auto write_vector = [&](const char* name, const Eigen::VectorXd& v) {
    out << "  \"" << name << "\": [";
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (i) out << ", ";
      out << detail::format_double(v(i));
    }
    out << "],\n";
  };
  write_vector("beta", m.beta);
  write_vector("stderr", m.stderrs);
  out << "  \"sigma2\": " << detail::format_double(m.sigma2) << ",\n";
  out << "  \"r_squared\": " << detail::format_double(m.r_squared) << ",\n";
  out << "  \"n_obs\": " << m.n_obs << ",\n";
  out << "  \"min_bin_size\": " << m.min_bin_size << ",\n";
  out << "  \"epsilon_clamp\": " << detail::format_double(m.epsilon_clamp) << "\n";
  out << "}\n";
  return out.str();
}

/// Rebuilds the level layout from serialized column names.
inline FittedModel from_json(const std::string& text, const std::string& origin = "<memory>") {
  const nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ValidationError("model " + origin + ": not a JSON object");
  }
  const auto fail = [&](const std::string& msg) -> void {
    throw ValidationError("model " + origin + ": " + msg);
  };
  FittedModel m;
  try {
    m.spec = FactorSpec::from_factor_names(
        j.at("spec").at("factors").get<std::vector<std::string>>());
    const auto& refs = j.at("spec").at("reference_levels");
    m.spec.reference_city = refs.at("city").get<std::string>();
    m.spec.reference_hour = refs.at("hour").get<int>();
    m.spec.reference_day = refs.at("day").get<int>();
    auto w = parse_weather_category(refs.at("weather").get<std::string>());
    if (!w) fail("bad reference weather");
    m.spec.reference_weather = *w;
    auto outcome = parse_polarity(j.at("outcome").get<std::string>());
    if (!outcome) fail("bad outcome");
    m.outcome = *outcome;
    m.column_names = j.at("column_names").get<std::vector<std::string>>();
    const auto beta = j.at("beta").get<std::vector<double>>();
    const auto se = j.at("stderr").get<std::vector<double>>();
    if (beta.size() != m.column_names.size() || se.size() != m.column_names.size()) {
      fail("beta/stderr/column_names length mismatch");
    }
    m.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    m.stderrs = Eigen::Map<const Eigen::VectorXd>(se.data(), static_cast<Eigen::Index>(se.size()));
    m.sigma2 = j.at("sigma2").get<double>();
    m.r_squared = j.at("r_squared").get<double>();
    m.n_obs = j.at("n_obs").get<std::size_t>();
    m.min_bin_size = j.at("min_bin_size").get<std::uint64_t>();
    m.epsilon_clamp = j.at("epsilon_clamp").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(e.what());
  }

  m.layout.reference_city = m.spec.reference_city;
  m.layout.reference_hour = m.spec.reference_hour;
  m.layout.reference_day = m.spec.reference_day;
  m.layout.reference_weather = m.spec.reference_weather;
  if (m.column_names.empty() || m.column_names[0] != "intercept") {
    fail("first column must be the intercept");
  }
  for (std::size_t i = 1; i < m.column_names.size(); ++i) {
    const std::string& name = m.column_names[i];
    const int col = static_cast<int>(i);
    if (name.rfind("city=", 0) == 0) {
      m.layout.city_cols.emplace(name.substr(5), col);
    } else if (name.rfind("hour=", 0) == 0) {
      const int h = std::stoi(name.substr(5));
      if (h < 0 || h > 23) fail("bad hour column '" + name + "'");
      m.layout.hour_cols[h] = col;
    } else if (name.rfind("day=", 0) == 0) {
      const int d = std::stoi(name.substr(4));
      if (d < 0 || d > 6) fail("bad day column '" + name + "'");
      m.layout.day_cols[d] = col;
    } else if (name.rfind("weather=", 0) == 0) {
      auto w = parse_weather_category(name.substr(8));
      if (!w) fail("bad weather column '" + name + "'");
      m.layout.weather_cols[static_cast<int>(*w)] = col;
    } else if (name == "p_social") {
      m.layout.social_col = col;
    } else {
      fail("unrecognized column '" + name + "'");
    }
  }
  return m;
}

inline void save_model(const FittedModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write model file: " + path);
  out << to_json(m);
}

inline FittedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open model file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str(), path);
}

}  // namespace sentigrid::model
