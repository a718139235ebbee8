#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace feateval::text {

/// Byte span [begin, end) into a UTF-8 string.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

std::string_view trim(std::string_view s);

/// Replaces every run of whitespace (including newlines) by one space and trims.
std::string collapse_whitespace(std::string_view s);

/// Number of Unicode code points; invalid bytes count as one each.
std::size_t codepoint_length(std::string_view s);

/// True if the string contains at least one letter. ASCII letters count, as
/// does any non-ASCII code point outside the common punctuation, symbol, and
/// digit blocks.
bool has_alphabetic(std::string_view s);

std::string to_lower_ascii(std::string_view s);

/// Simple subword tokenizer used by the planted model: maximal runs of ASCII
/// alphanumerics (plus any non-ASCII bytes) form one token, every other
/// non-space byte is a token of its own.
struct Token {
  std::string text;
  Span span;
};
std::vector<Token> tokenize(std::string_view s);

/// Lowercased alphanumeric terms, in order of occurrence.
std::vector<std::string> terms(std::string_view s);

/// Whitespace-delimited words with their byte spans.
std::vector<Span> word_spans(std::string_view s);

/// JSON-safe UTF-8: replaces invalid sequences by U+FFFD.
std::string sanitize_utf8(std::string_view s);

}  // namespace feateval::text
