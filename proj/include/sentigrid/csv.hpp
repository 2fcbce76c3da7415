#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "sentigrid/types.hpp"

namespace sentigrid::csv {

/// RFC-4180 quoting: quote when the field contains a comma, a quote, or a
/// line break; embedded quotes are doubled.
inline void write_field(std::ostream& out, std::string_view field) {
  bool needs_quote = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs_quote) {
    out << field;
    return;
  }
  out << '"';
  for (char c : field) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    write_field(out, fields[i]);
  }
  out << '\n';
}

/// Streaming reader handling quoted fields, doubled quotes, and embedded
/// line breaks. Rows are returned without the line terminator.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  /// Reads the next record into `fields`. Returns false at end of input.
  bool next(std::vector<std::string>& fields) {
    fields.clear();
    int c = in_.get();
    if (c == std::istream::traits_type::eof()) return false;
    std::string field;
    bool in_quotes = false;
    while (true) {
      if (c == std::istream::traits_type::eof()) {
        if (in_quotes) throw ValidationError("csv: unterminated quoted field");
        break;
      }
      char ch = static_cast<char>(c);
      if (in_quotes) {
        if (ch == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            in_quotes = false;
          }
        } else {
          field.push_back(ch);
        }
      } else if (ch == '"' && field.empty()) {
        in_quotes = true;
      } else if (ch == ',') {
        fields.push_back(std::move(field));
        field.clear();
      } else if (ch == '\n') {
        break;
      } else if (ch == '\r') {
        if (in_.peek() == '\n') in_.get();
        break;
      } else {
        field.push_back(ch);
      }
      c = in_.get();
    }
    fields.push_back(std::move(field));
    return true;
  }

 private:
  std::istream& in_;
};

}  // namespace sentigrid::csv
