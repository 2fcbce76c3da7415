#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
// resolv.h, pulled in by httplib, leaks a `_res` macro that breaks Eigen.
#ifdef _res
#undef _res
#endif

#include <json.hpp>

#include "sentigrid/geo.hpp"

namespace sentigrid::geo {

/// Enforces a minimum spacing between requests. The clock and sleep hooks
/// are injectable so the policy is testable without real waiting.
class RateLimiter {
 public:
  using ClockFn = std::function<std::int64_t()>;      // milliseconds
  using SleepFn = std::function<void(std::int64_t)>;  // milliseconds

  explicit RateLimiter(double max_requests_per_second, ClockFn clock = default_clock,
                       SleepFn sleep = default_sleep)
      : min_interval_ms_(max_requests_per_second > 0
                             ? static_cast<std::int64_t>(1000.0 / max_requests_per_second)
                             : 0),
        clock_(std::move(clock)),
        sleep_(std::move(sleep)) {}

  void acquire() {
    if (min_interval_ms_ <= 0) return;
    const std::int64_t now = clock_();
    if (last_request_ms_ >= 0) {
      const std::int64_t wait = last_request_ms_ + min_interval_ms_ - now;
      if (wait > 0) {
        sleep_(wait);
        last_request_ms_ = now + wait;
        return;
      }
    }
    last_request_ms_ = now;
  }

  static std::int64_t default_clock() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }

  static void default_sleep(std::int64_t ms) {
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  }

 private:
  std::int64_t min_interval_ms_;
  std::int64_t last_request_ms_ = -1;
  ClockFn clock_;
  SleepFn sleep_;
};

struct GazetteerClientConfig {
  std::string endpoint;  // e.g. "http://localhost:8080/search"
  double rate_limit_per_sec = 1.0;
  std::string user_agent = "sentigrid/1.0";
  int timeout_seconds = 10;
};

/// HTTP gazetteer backend. Sends GET <endpoint>?q=<raw>&format=json and
/// expects a JSON array of objects with at least "type" and "display_name".
class HttpGazetteerSource : public GazetteerSource {
 public:
  explicit HttpGazetteerSource(GazetteerClientConfig cfg,
                               RateLimiter::ClockFn clock = RateLimiter::default_clock,
                               RateLimiter::SleepFn sleep = RateLimiter::default_sleep)
      : cfg_(std::move(cfg)), limiter_(cfg_.rate_limit_per_sec, std::move(clock), std::move(sleep)) {
    split_endpoint();
  }

  std::optional<std::vector<GazetteerCandidate>> query(const std::string& raw) override {
    limiter_.acquire();
    httplib::Client client(host_);
    client.set_connection_timeout(cfg_.timeout_seconds, 0);
    client.set_read_timeout(cfg_.timeout_seconds, 0);
    httplib::Headers headers{{"User-Agent", cfg_.user_agent}};
    httplib::Params params{{"q", raw}, {"format", "json"}};
    auto res = client.Get(path_, params, headers);
    if (!res || res->status != 200) return std::nullopt;
    return parse_response(res->body);
  }

  /// Parses a gazetteer JSON array; candidates keep response order, type
  /// tags lowercased. Returns nullopt when the body is not such an array.
  static std::optional<std::vector<GazetteerCandidate>> parse_response(const std::string& body) {
    const nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_array()) return std::nullopt;
    std::vector<GazetteerCandidate> out;
    out.reserve(j.size());
    for (const auto& item : j) {
      if (!item.is_object()) continue;
      GazetteerCandidate c;
      if (auto it = item.find("type"); it != item.end() && it->is_string()) {
        c.type_tag = ascii_lower(it->get<std::string>());
      }
      if (auto it = item.find("display_name"); it != item.end() && it->is_string()) {
        c.resolved_name = it->get<std::string>();
      }
      if (auto it = item.find("importance"); it != item.end() && it->is_number()) {
        c.confidence = it->get<double>();
      }
      c.raw = item.dump();
      out.push_back(std::move(c));
    }
    return out;
  }

 private:
  static std::string ascii_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }

  void split_endpoint() {
    // "http://host:port/path" -> client base + request path
    std::size_t scheme = cfg_.endpoint.find("://");
    std::size_t path_start =
        cfg_.endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) {
      host_ = cfg_.endpoint;
      path_ = "/";
    } else {
      host_ = cfg_.endpoint.substr(0, path_start);
      path_ = cfg_.endpoint.substr(path_start);
    }
  }

  GazetteerClientConfig cfg_;
  RateLimiter limiter_;
  std::string host_;
  std::string path_;
};

}  // namespace sentigrid::geo
