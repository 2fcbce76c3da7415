#include "sentigrid/sentiment.hpp"

#include <random>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"

using namespace sentigrid;
using namespace sentigrid::sentiment;

namespace {

Lexicon small_lexicon() {
  Lexicon lex;
  lex.terms = {{"love", 3}, {"hate", -4}, {"good", 2}, {"worst", -5}};
  lex.boosters = {{"very", 1}, {"slightly", -1}};
  lex.negators = {"not", "never"};
  lex.emoticons = {{":(", -2}, {":)", 2}};
  return lex;
}

}  // namespace

TEST_CASE("load fixture lexicon") {
  const Lexicon lex = load_lexicon(testutil::fixture_path("lexicon.tsv"));
  REQUIRE(lex.terms.count("love"));
  REQUIRE(lex.terms.at("hate") == -4);
  REQUIRE(lex.boosters.at("very") == 1);
  REQUIRE(lex.negators.count("not"));
  REQUIRE(lex.emoticons.at(":(") == -2);
}

TEST_CASE("lexicon validation") {
  testutil::TempDir tmp("lexicon");

  SECTION("neutral strength rejected") {
    testutil::write_file(tmp.str("bad.tsv"), "meh\tterm\t1\n");
    REQUIRE_THROWS_WITH(load_lexicon(tmp.str("bad.tsv")),
                        Catch::Matchers::ContainsSubstring(":1:"));
  }
  SECTION("duplicate across roles rejected") {
    testutil::write_file(tmp.str("dup.tsv"), "fine\tterm\t2\nfine\tbooster\t1\n");
    REQUIRE_THROWS_AS(load_lexicon(tmp.str("dup.tsv")), ValidationError);
  }
  SECTION("empty file gives empty lexicon and neutral scores") {
    testutil::write_file(tmp.str("empty.tsv"), "");
    const Lexicon lex = load_lexicon(tmp.str("empty.tsv"));
    REQUIRE(score_text("i love this so much", lex) == SentimentScore{1, 1});
  }
  SECTION("out-of-range strength rejected") {
    testutil::write_file(tmp.str("range.tsv"), "huge\tterm\t6\n");
    REQUIRE_THROWS_AS(load_lexicon(tmp.str("range.tsv")), ValidationError);
  }
}

TEST_CASE("tokenize basics") {
  auto tt = tokenize("I LOVE this!!");
  REQUIRE(tt.tokens.size() == 3);
  REQUIRE(tt.tokens[0].text == "i");
  REQUIRE(tt.tokens[1].text == "love");
  REQUIRE(tt.tokens[2].text == "this");
  REQUIRE(tt.clauses.size() == 1);
  REQUIRE(tt.clauses[0].exclaim);
}

TEST_CASE("tokenize collapses elongation") {
  auto tt = tokenize("loooove");
  REQUIRE(tt.tokens.size() == 1);
  REQUIRE(tt.tokens[0].text == "love");
  REQUIRE(tt.tokens[0].elongated);
}

TEST_CASE("tokenize strips handles and urls, keeps emoticons") {
  auto tt = tokenize("@bob http://x.y :(", {":("});
  REQUIRE(tt.tokens.size() == 1);
  REQUIRE(tt.tokens[0].text == ":(");
  REQUIRE(tt.tokens[0].emoticon);
}

TEST_CASE("tokenize splits clauses on sentence punctuation") {
  auto tt = tokenize("good day. bad night");
  REQUIRE(tt.clauses.size() == 2);
  REQUIRE_FALSE(tt.clauses[0].exclaim);
  REQUIRE(tt.tokens[tt.clauses[1].begin].text == "bad");
}

TEST_CASE("score_text fixture examples") {
  const Lexicon lex = small_lexicon();
  REQUIRE(score_text("", lex) == SentimentScore{1, 1});
  REQUIRE(score_text("i love this but i hate that", lex) == SentimentScore{3, 4});
  REQUIRE(score_text("not love", lex) == SentimentScore{1, 1});
}

TEST_CASE("score_text booster, elongation, exclamation") {
  const Lexicon lex = small_lexicon();
  REQUIRE(score_text("very love", lex) == SentimentScore{4, 1});
  REQUIRE(score_text("slightly love", lex) == SentimentScore{2, 1});
  REQUIRE(score_text("loooove", lex) == SentimentScore{4, 1});
  REQUIRE(score_text("i love this!!", lex) == SentimentScore{4, 1});
  // All bonuses stack but cap at 5.
  REQUIRE(score_text("very loooove this!", lex) == SentimentScore{5, 1});
  REQUIRE(score_text("very hate", lex) == SentimentScore{1, 5});
}

TEST_CASE("negation window spans two tokens, clause-local") {
  const Lexicon lex = small_lexicon();
  REQUIRE(score_text("not really love", lex) == SentimentScore{1, 1});
  REQUIRE(score_text("not that much love", lex).positive == 3);  // window exceeded
  // Clause boundary resets the window.
  REQUIRE(score_text("not good. love", lex) == SentimentScore{3, 1});
}

TEST_CASE("emoticons score and obey negation") {
  const Lexicon lex = small_lexicon();
  REQUIRE(score_text("that game :(", lex) == SentimentScore{1, 2});
  REQUIRE(score_text(":) :(", lex) == SentimentScore{2, 2});
}

TEST_CASE("polarity labels threshold at 2") {
  REQUIRE_FALSE(polarity_labels({1, 1}).is_positive);
  REQUIRE_FALSE(polarity_labels({1, 1}).is_negative);
  auto both = polarity_labels({3, 4});
  REQUIRE(both.is_positive);
  REQUIRE(both.is_negative);
  auto pos_only = polarity_labels({2, 1});
  REQUIRE(pos_only.is_positive);
  REQUIRE_FALSE(pos_only.is_negative);
}

TEST_CASE("score bounds hold under unicode fuzz") {
  const Lexicon lex = load_lexicon(testutil::fixture_path("lexicon.tsv"));
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> len(0, 60);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int trial = 0; trial < 500; ++trial) {
    std::string text;
    const int L = len(rng);
    for (int i = 0; i < L; ++i) text.push_back(static_cast<char>(byte(rng)));
    const SentimentScore s = score_text(text, lex);
    REQUIRE(s.positive >= 1);
    REQUIRE(s.positive <= 5);
    REQUIRE(s.negative >= 1);
    REQUIRE(s.negative <= 5);
  }
}

TEST_CASE("adding a positive term never lowers the positive score") {
  const Lexicon lex = load_lexicon(testutil::fixture_path("lexicon.tsv"));
  std::mt19937_64 rng(43);
  const std::vector<std::string> words{"day",  "love", "hate", "walk", "good",
                                       "rain", "sad",  "city", "nice", "train"};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    for (int i = 0; i < 6; ++i) {
      if (i) text += ' ';
      text += words[pick(rng)];
    }
    const SentimentScore before = score_text(text, lex);
    const SentimentScore after = score_text(text + " wonderful", lex);
    REQUIRE(after.positive >= before.positive);
    REQUIRE(after.negative == before.negative);
  }
}

TEST_CASE("concatenation with a period aggregates by max") {
  const Lexicon lex = load_lexicon(testutil::fixture_path("lexicon.tsv"));
  std::mt19937_64 rng(44);
  const std::vector<std::string> words{"love", "hate",  "good", "bad",  "day",
                                       "walk", "train", "sad",  "happy"};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::uniform_int_distribution<int> len(1, 5);
  auto random_text = [&] {
    std::string text;
    const int L = len(rng);
    for (int i = 0; i < L; ++i) {
      if (i) text += ' ';
      text += words[pick(rng)];
    }
    return text;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const std::string a = random_text();
    const std::string b = random_text();
    const SentimentScore sa = score_text(a, lex);
    const SentimentScore sb = score_text(b, lex);
    const SentimentScore joined = score_text(a + ". " + b, lex);
    REQUIRE(joined.positive == std::max(sa.positive, sb.positive));
    REQUIRE(joined.negative == std::max(sa.negative, sb.negative));
  }
}

TEST_CASE("scoring is deterministic") {
  const Lexicon lex = load_lexicon(testutil::fixture_path("lexicon.tsv"));
  const std::string text = "veRy loooove this!! but NOT the worst rain :(";
  const SentimentScore first = score_text(text, lex);
  for (int i = 0; i < 10; ++i) REQUIRE(score_text(text, lex) == first);
}
