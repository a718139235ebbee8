#include <doctest.h>

#include "feateval/text.hpp"

using namespace feateval::text;

TEST_CASE("trim and whitespace collapse") {
  CHECK(trim("  a b \n") == "a b");
  CHECK(trim("   ").empty());
  CHECK(collapse_whitespace(" a \t b\n\nc ") == "a b c");
}

TEST_CASE("codepoint length counts multibyte characters once") {
  CHECK(codepoint_length("abc") == 3);
  CHECK(codepoint_length("caf\xC3\xA9") == 4);
  CHECK(codepoint_length("\xE2\x82\xAC") == 1);
  CHECK(codepoint_length("\xFF") == 1);
}

TEST_CASE("alphabetic detection") {
  CHECK_FALSE(has_alphabetic("12345."));
  CHECK_FALSE(has_alphabetic("$$ -- 42 !!"));
  CHECK(has_alphabetic("4 cats"));
  CHECK(has_alphabetic("\xC3\xA9t\xC3\xA9"));
}

TEST_CASE("tokenize splits punctuation and keeps spans") {
  auto t = tokenize("Hello, world!");
  REQUIRE(t.size() == 4);
  CHECK(t[0].text == "Hello");
  CHECK(t[1].text == ",");
  CHECK(t[2].text == "world");
  CHECK(t[3].text == "!");
  CHECK(t[2].span == Span{7, 12});
}

TEST_CASE("terms are lowercase alphanumerics") {
  CHECK(terms("The Cat, the HAT.") == std::vector<std::string>{"the", "cat", "the", "hat"});
}

TEST_CASE("word spans are whitespace delimited") {
  auto w = word_spans("ab  cd\te");
  REQUIRE(w.size() == 3);
  CHECK(w[0] == Span{0, 2});
  CHECK(w[1] == Span{4, 6});
  CHECK(w[2] == Span{7, 8});
}

TEST_CASE("sanitize_utf8 replaces invalid bytes") {
  CHECK(sanitize_utf8("ok") == "ok");
  CHECK(sanitize_utf8("a\xFF" "b") == "a\xEF\xBF\xBD" "b");
}
