#pragma once

// Unicode-aware text primitives shared by every pipeline stage: UTF-8
// validation, case folding, tokenization, sentence splitting and the cue /
// stop-word lexicons that grounding, contradiction and refusal checks use.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace regdistill::text {

bool is_valid_utf8(std::string_view s) noexcept;

/// Number of Unicode scalar values. Input must be valid UTF-8.
std::size_t codepoint_count(std::string_view s) noexcept;

/// CRLF and lone CR become LF; every other byte is preserved.
std::string normalize_line_endings(std::string_view s);

std::string_view trim(std::string_view s) noexcept;
bool is_blank(std::string_view s) noexcept;

/// Lowercases ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic. All four
/// Turkish i variants (I, İ, ı, i) fold to ASCII 'i' so that tokens compare
/// equal regardless of which casing convention produced them. Combining
/// marks are dropped.
std::string fold_case(std::string_view s);

/// A normalized token plus the byte range it was read from.
struct Token {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Splits on punctuation and whitespace, folds case. A '.' or ',' between two
/// digits stays inside the token, so "2.25" is one token.
std::vector<Token> tokenize(std::string_view s);
std::vector<std::string> normalize_tokens(std::string_view s);

/// Tokens joined by single spaces.
std::string normalize(std::string_view s);

bool is_number_token(std::string_view token) noexcept;
/// Parses a number token, accepting ',' as decimal separator.
std::optional<double> parse_number(std::string_view token) noexcept;

/// Sentences end at . ! ? (followed by whitespace or end of text, closing
/// quotes absorbed) and never cross a blank line. Results are trimmed views
/// into the input.
std::vector<std::string_view> split_sentences(std::string_view s);
std::string_view first_sentence(std::string_view s);

/// Text up to the first clause separator (, ; : . ! ? or newline).
std::string_view first_clause(std::string_view s);

/// A lexicon entry. `tokens` is the normalized phrase. An interjection cue
/// (written with a leading '!' in lexicon files) only matches when the phrase
/// is immediately followed by punctuation or the end of the text, so "No,"
/// counts as a refusal and "No further documents" does not.
struct Cue {
  std::vector<std::string> tokens;
  bool interjection = false;
};

std::vector<Cue> parse_cues(const std::vector<std::string>& lines);

/// Index of the first token at which `cue` matches, if any. `source` is the
/// text the tokens were produced from.
std::optional<std::size_t> find_cue(const std::vector<Token>& tokens,
                                    std::string_view source, const Cue& cue);

/// Earliest match over a cue list.
std::optional<std::size_t> find_any_cue(const std::vector<Token>& tokens,
                                        std::string_view source,
                                        const std::vector<Cue>& cues);

/// Reads a one-entry-per-line UTF-8 file. Blank lines and lines starting with
/// '#' are skipped.
std::vector<std::string> read_lexicon_file(const std::filesystem::path& path);

struct Lexicons {
  std::unordered_set<std::string> stop_words;
  std::vector<Cue> refusal_cues;
  std::vector<Cue> affirmation_cues;
  std::vector<Cue> negation_cues;
  /// Spelled-out numerals mapped to their digit form ("seven" -> "7").
  std::unordered_map<std::string, std::string> numerals;

  bool is_stop_word(std::string_view token) const;

  static const Lexicons& defaults();

  /// Defaults with any of stop_words.txt, refusal.txt, affirmation.txt,
  /// negation.txt, numerals.txt ("word digit" per line) found in `dir`
  /// replacing the corresponding built-in list.
  static Lexicons load(const std::filesystem::path& dir);
};

/// Normalized tokens with stop-words removed; numbers are kept.
std::vector<std::string> content_tokens(std::string_view s,
                                        const Lexicons& lex = Lexicons::defaults());

/// Replaces numeral words by their digit form.
std::vector<std::string> canonical_numerals(std::vector<std::string> tokens,
                                            const Lexicons& lex = Lexicons::defaults());

namespace builtin {
const std::vector<std::string>& stop_words();
const std::vector<std::string>& refusal_cues();
const std::vector<std::string>& affirmation_cues();
const std::vector<std::string>& negation_cues();
const std::vector<std::string>& numerals();
}  // namespace builtin

}  // namespace regdistill::text
