#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace sentigrid::timeutil {

/// UTC-offset history for one IANA zone, read from a binary TZif file
/// (RFC 8536) under the system zoneinfo directory. Only the pieces needed
/// for offset lookup are kept: transition instants and the total offset in
/// effect after each one.
class TimeZone {
 public:
  /// Loads `name` (e.g. "America/New_York") from `zoneinfo_dir`. Returns
  /// nullopt if the file is missing or not a parseable TZif file.
  static std::optional<TimeZone> load(const std::string& name,
                                      const std::string& zoneinfo_dir = "/usr/share/zoneinfo") {
    if (name.empty() || name.front() == '/' || name.find("..") != std::string::npos) {
      return std::nullopt;
    }
    std::ifstream in(zoneinfo_dir + "/" + name, std::ios::binary);
    if (!in) return std::nullopt;
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(bytes);
  }

  /// Total offset from UTC, in seconds, in effect at `epoch_seconds`.
  std::int32_t offset_at(std::int64_t epoch_seconds) const {
    if (transitions_.empty() || epoch_seconds < transitions_.front()) {
      return initial_offset_;
    }
    // Last transition at or before the instant. Instants beyond the final
    // transition keep the final offset (the footer TZ string is not
    // evaluated; tz files carry explicit transitions through the study era).
    std::size_t lo = 0, hi = transitions_.size();
    while (hi - lo > 1) {
      std::size_t mid = lo + (hi - lo) / 2;
      if (transitions_[mid] <= epoch_seconds) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return offsets_[lo];
  }

  std::size_t transition_count() const { return transitions_.size(); }

 private:
  static std::optional<TimeZone> parse(const std::vector<char>& b) {
    std::size_t pos = 0;
    Header h1;
    if (!read_header(b, pos, h1)) return std::nullopt;
    if (h1.version >= '2') {
      // Skip the legacy 32-bit block, then parse the 64-bit block.
      pos += h1.data_size(4);
      Header h2;
      if (!read_header(b, pos, h2)) return std::nullopt;
      return parse_block(b, pos, h2, 8);
    }
    return parse_block(b, pos, h1, 4);
  }

  struct Header {
    char version = 0;
    std::uint32_t isutcnt = 0, isstdcnt = 0, leapcnt = 0, timecnt = 0, typecnt = 0, charcnt = 0;

    std::size_t data_size(int time_width) const {
      return static_cast<std::size_t>(timecnt) * time_width + timecnt + typecnt * 6 + charcnt +
             leapcnt * (time_width + 4) + isstdcnt + isutcnt;
    }
  };

  static bool read_header(const std::vector<char>& b, std::size_t& pos, Header& h) {
    if (pos + 44 > b.size()) return false;
    if (b[pos] != 'T' || b[pos + 1] != 'Z' || b[pos + 2] != 'i' || b[pos + 3] != 'f') return false;
    h.version = b[pos + 4];
    std::size_t p = pos + 20;
    h.isutcnt = read_u32(b, p);
    h.isstdcnt = read_u32(b, p + 4);
    h.leapcnt = read_u32(b, p + 8);
    h.timecnt = read_u32(b, p + 12);
    h.typecnt = read_u32(b, p + 16);
    h.charcnt = read_u32(b, p + 20);
    pos += 44;
    return h.typecnt > 0;
  }

  static std::optional<TimeZone> parse_block(const std::vector<char>& b, std::size_t pos,
                                             const Header& h, int time_width) {
    if (pos + h.data_size(time_width) > b.size()) return std::nullopt;
    TimeZone tz;
    std::vector<std::int64_t> times(h.timecnt);
    for (std::uint32_t i = 0; i < h.timecnt; ++i) {
      times[i] = time_width == 8 ? read_i64(b, pos + i * 8)
                                 : static_cast<std::int64_t>(read_i32(b, pos + i * 4));
    }
    pos += static_cast<std::size_t>(h.timecnt) * time_width;
    std::vector<std::uint8_t> type_of(h.timecnt);
    for (std::uint32_t i = 0; i < h.timecnt; ++i) {
      type_of[i] = static_cast<std::uint8_t>(b[pos + i]);
      if (type_of[i] >= h.typecnt) return std::nullopt;
    }
    pos += h.timecnt;
    std::vector<std::int32_t> utoff(h.typecnt);
    std::vector<bool> isdst(h.typecnt);
    for (std::uint32_t i = 0; i < h.typecnt; ++i) {
      utoff[i] = read_i32(b, pos + i * 6);
      isdst[i] = b[pos + i * 6 + 4] != 0;
    }

    tz.transitions_ = std::move(times);
    tz.offsets_.resize(h.timecnt);
    for (std::uint32_t i = 0; i < h.timecnt; ++i) {
      tz.offsets_[i] = utoff[type_of[i]];
    }
    // Before the first transition: first standard-time type, else type 0.
    tz.initial_offset_ = utoff[0];
    for (std::uint32_t i = 0; i < h.typecnt; ++i) {
      if (!isdst[i]) {
        tz.initial_offset_ = utoff[i];
        break;
      }
    }
    return tz;
  }

  static std::uint32_t read_u32(const std::vector<char>& b, std::size_t p) {
    return (static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[p])) << 24) |
           (static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[p + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[p + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[p + 3]));
  }

  static std::int32_t read_i32(const std::vector<char>& b, std::size_t p) {
    return static_cast<std::int32_t>(read_u32(b, p));
  }

  static std::int64_t read_i64(const std::vector<char>& b, std::size_t p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v = (v << 8) | static_cast<std::uint8_t>(b[p + i]);
    }
    return static_cast<std::int64_t>(v);
  }

  std::vector<std::int64_t> transitions_;
  std::vector<std::int32_t> offsets_;
  std::int32_t initial_offset_ = 0;
};

}  // namespace sentigrid::timeutil
