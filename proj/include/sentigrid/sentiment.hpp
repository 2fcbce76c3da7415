#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sentigrid/types.hpp"

namespace sentigrid::sentiment {

/// Dictionary of sentiment-bearing entries. A term may appear in exactly
/// one role. Term and emoticon strengths are signed with magnitude 2..5;
/// magnitude-1 (neutral) entries are implicit and rejected at load.
struct Lexicon {
  std::unordered_map<std::string, int> terms;
  std::unordered_map<std::string, int> boosters;  // +1 or -1 strength modifier
  std::unordered_set<std::string> negators;
  std::unordered_map<std::string, int> emoticons;  // matched verbatim

  bool contains(const std::string& t) const {
    return terms.count(t) || boosters.count(t) || negators.count(t) || emoticons.count(t);
  }
};

/// Dual-polarity strengths, both in 1..5. (1,1) is neutral.
struct SentimentScore {
  int positive = 1;
  int negative = 1;

  friend bool operator==(const SentimentScore&, const SentimentScore&) = default;
};

struct PolarityLabels {
  bool is_positive = false;
  bool is_negative = false;
};

/// A tweet is labeled for a polarity when its strength reaches 2.
inline PolarityLabels polarity_labels(const SentimentScore& s) {
  return PolarityLabels{s.positive >= 2, s.negative >= 2};
}

struct Token {
  std::string text;
  bool elongated = false;  // a run of >=3 repeated letters was collapsed
  bool emoticon = false;
};

struct Clause {
  std::size_t begin = 0;  // token index range [begin, end)
  std::size_t end = 0;
  bool exclaim = false;  // clause terminated by at least one '!'
};

struct TokenizedText {
  std::vector<Token> tokens;
  std::vector<Clause> clauses;
};

namespace detail {

inline bool is_word_char(unsigned char c) {
  return std::isalnum(c) || c == '\'' || c >= 0x80;
}

inline bool is_clause_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

inline std::string collapse_elongation(std::string_view word, bool& elongated) {
  std::string out;
  out.reserve(word.size());
  std::size_t i = 0;
  while (i < word.size()) {
    std::size_t j = i;
    while (j < word.size() && word[j] == word[i]) ++j;
    const std::size_t run = j - i;
    if (run >= 3 && std::isalpha(static_cast<unsigned char>(word[i]))) {
      out.push_back(word[i]);
      elongated = true;
    } else {
      out.append(word.substr(i, run));
    }
    i = j;
  }
  return out;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool looks_like_url(std::string_view chunk) {
  const std::string low = ascii_lower(chunk.substr(0, 8));
  return low.rfind("http://", 0) == 0 || low.rfind("https://", 0) == 0 ||
         low.rfind("www.", 0) == 0;
}

}  // namespace detail

/// Splits a text into lowercased word tokens and clauses. Word characters
/// are alphanumerics, apostrophes, and non-ASCII bytes; everything else
/// separates tokens. Chunks that are URLs or @-handles are removed. Chunks
/// found verbatim in `emoticons` bypass punctuation handling. A clause ends
/// at '.', '!' or '?'; a terminator run containing '!' flags the clause.
inline TokenizedText tokenize(std::string_view text,
                              const std::unordered_set<std::string>& emoticons = {}) {
  TokenizedText out;
  Clause current{0, 0, false};
  bool clause_open = false;

  auto close_clause = [&](bool exclaim) {
    if (!clause_open) return;
    current.end = out.tokens.size();
    current.exclaim = exclaim;
    if (current.end > current.begin) out.clauses.push_back(current);
    current = Clause{out.tokens.size(), out.tokens.size(), false};
    clause_open = false;
  };

  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view chunk = text.substr(i, j - i);
    i = j;

    if (chunk.front() == '@' || detail::looks_like_url(chunk)) continue;
    if (!emoticons.empty() && emoticons.count(std::string(chunk))) {
      out.tokens.push_back(Token{std::string(chunk), false, true});
      clause_open = true;
      continue;
    }

    std::size_t k = 0;
    while (k < chunk.size()) {
      if (detail::is_word_char(static_cast<unsigned char>(chunk[k]))) {
        std::size_t w = k;
        while (w < chunk.size() && detail::is_word_char(static_cast<unsigned char>(chunk[w]))) ++w;
        bool elongated = false;
        std::string word = detail::collapse_elongation(chunk.substr(k, w - k), elongated);
        word = detail::ascii_lower(word);
        // An apostrophe-only fragment carries no word content.
        if (word.find_first_not_of('\'') != std::string::npos) {
          out.tokens.push_back(Token{std::move(word), elongated, false});
          clause_open = true;
        }
        k = w;
      } else {
        std::size_t p = k;
        bool exclaim = false, terminator = false;
        while (p < chunk.size() && !detail::is_word_char(static_cast<unsigned char>(chunk[p]))) {
          if (detail::is_clause_terminator(chunk[p])) terminator = true;
          if (chunk[p] == '!') exclaim = true;
          ++p;
        }
        // Emoticon glued to a word boundary, e.g. "bad:(" -- check the
        // punctuation run itself.
        std::string punct(chunk.substr(k, p - k));
        if (!emoticons.empty() && emoticons.count(punct)) {
          out.tokens.push_back(Token{std::move(punct), false, true});
          clause_open = true;
        } else if (terminator) {
          close_clause(exclaim);
        }
        k = p;
      }
    }
  }
  close_clause(false);
  return out;
}

/// Maximum of effective term strengths per polarity, clamped to 1..5.
///
/// Effective strength of a matched term: base magnitude, +1 if the token
/// immediately before it (same clause) is a booster (negative boosters
/// subtract), +1 if the token was elongated, all clamped to 1..5. A term
/// with a negator among its two preceding tokens contributes nothing. In a
/// clause flagged by a trailing '!', the single strongest term gains +1.
inline SentimentScore score_text(std::string_view text, const Lexicon& lex) {
  std::unordered_set<std::string> emoticon_keys;
  emoticon_keys.reserve(lex.emoticons.size());
  for (const auto& [k, v] : lex.emoticons) emoticon_keys.insert(k);
  const TokenizedText tt = tokenize(text, emoticon_keys);

  SentimentScore score;
  struct Hit {
    int sign;
    int magnitude;
  };
  std::vector<Hit> hits;
  for (const Clause& cl : tt.clauses) {
    hits.clear();
    for (std::size_t idx = cl.begin; idx < cl.end; ++idx) {
      const Token& tok = tt.tokens[idx];
      int base = 0;
      if (tok.emoticon) {
        auto it = lex.emoticons.find(tok.text);
        if (it == lex.emoticons.end()) continue;
        base = it->second;
      } else {
        auto it = lex.terms.find(tok.text);
        if (it == lex.terms.end()) continue;
        base = it->second;
      }
      bool negated = false;
      for (std::size_t back = 1; back <= 2 && idx >= cl.begin + back; ++back) {
        if (lex.negators.count(tt.tokens[idx - back].text)) {
          negated = true;
          break;
        }
      }
      if (negated) continue;
      int magnitude = std::abs(base);
      if (idx > cl.begin) {
        auto bit = lex.boosters.find(tt.tokens[idx - 1].text);
        if (bit != lex.boosters.end()) magnitude += bit->second;
      }
      if (tok.elongated) magnitude += 1;
      magnitude = std::clamp(magnitude, 1, 5);
      hits.push_back(Hit{base > 0 ? 1 : -1, magnitude});
    }
    if (cl.exclaim && !hits.empty()) {
      auto strongest = std::max_element(hits.begin(), hits.end(),
                                        [](const Hit& a, const Hit& b) {
                                          return a.magnitude < b.magnitude;
                                        });
      strongest->magnitude = std::min(5, strongest->magnitude + 1);
    }
    for (const Hit& h : hits) {
      if (h.sign > 0) {
        score.positive = std::max(score.positive, h.magnitude);
      } else {
        score.negative = std::max(score.negative, h.magnitude);
      }
    }
  }
  return score;
}

/// Loads a lexicon file: one `term<TAB>role<TAB>value` entry per line,
/// role in {term, booster, negator, emoticon}; '#' lines are comments.
inline Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open lexicon file: " + path);
  Lexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const auto fail = [&](const std::string& msg) {
      throw ValidationError("lexicon " + path + ":" + std::to_string(lineno) + ": " + msg);
    };
    std::size_t t1 = line.find('\t');
    if (t1 == std::string::npos) fail("expected term<TAB>role[<TAB>value]");
    std::size_t t2 = line.find('\t', t1 + 1);
    std::string term = line.substr(0, t1);
    std::string role = line.substr(t1 + 1, t2 == std::string::npos ? std::string::npos
                                                                   : t2 - t1 - 1);
    std::string value_str = t2 == std::string::npos ? "" : line.substr(t2 + 1);
    if (term.empty()) fail("empty term");

    int value = 0;
    bool has_value = !value_str.empty();
    if (has_value) {
      char* end = nullptr;
      long v = std::strtol(value_str.c_str(), &end, 10);
      if (end == value_str.c_str() || *end != '\0') fail("bad integer value '" + value_str + "'");
      value = static_cast<int>(v);
    }

    if (role != "emoticon") term = detail::ascii_lower(term);
    if (lex.contains(term)) fail("duplicate term across roles: '" + term + "'");

    if (role == "term" || role == "emoticon") {
      if (!has_value) fail("missing strength for role '" + role + "'");
      const int mag = std::abs(value);
      if (mag < 2 || mag > 5) {
        fail("strength " + value_str + " out of range (magnitude must be 2..5)");
      }
      (role == "term" ? lex.terms : lex.emoticons)[term] = value;
    } else if (role == "booster") {
      if (!has_value || (value != 1 && value != -1)) fail("booster value must be +1 or -1");
      lex.boosters[term] = value;
    } else if (role == "negator") {
      if (has_value) fail("negator entries carry no value");
      lex.negators.insert(term);
    } else {
      fail("unknown role '" + role + "'");
    }
  }
  return lex;
}

}  // namespace sentigrid::sentiment
