#include "regdistill/text.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "regdistill/error.hpp"

namespace regdistill::text {
namespace {

struct Decoded {
  char32_t cp;
  std::size_t len;
};

// Assumes valid UTF-8; invalid lead bytes decode as themselves with length 1.
Decoded decode(std::string_view s, std::size_t i) noexcept {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) return {b0, 1};
  auto cont = [&](std::size_t k) {
    return static_cast<char32_t>(static_cast<unsigned char>(s[i + k]) & 0x3F);
  };
  if ((b0 & 0xE0) == 0xC0 && i + 1 < s.size()) {
    return {(static_cast<char32_t>(b0 & 0x1F) << 6) | cont(1), 2};
  }
  if ((b0 & 0xF0) == 0xE0 && i + 2 < s.size()) {
    return {(static_cast<char32_t>(b0 & 0x0F) << 12) | (cont(1) << 6) | cont(2), 3};
  }
  if ((b0 & 0xF8) == 0xF0 && i + 3 < s.size()) {
    return {(static_cast<char32_t>(b0 & 0x07) << 18) | (cont(1) << 12) |
                (cont(2) << 6) | cont(3),
            4};
  }
  return {b0, 1};
}

void encode(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

char32_t fold(char32_t cp) noexcept {
  if (cp < 0x80) {
    return (cp >= 'A' && cp <= 'Z') ? cp + 0x20 : cp;
  }
  // Turkish i family.
  if (cp == 0x0130 || cp == 0x0131) return U'i';
  if (cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7) return cp + 0x20;
  if (cp == 0x0178) return 0x00FF;
  if (cp >= 0x0100 && cp <= 0x017F) {
    const bool odd_upper = (cp >= 0x0139 && cp <= 0x0148) || (cp >= 0x0179 && cp <= 0x017E);
    if (odd_upper) return (cp % 2 == 1) ? cp + 1 : cp;
    if (cp == 0x0138 || cp == 0x0149 || cp == 0x017F) return cp;
    return (cp % 2 == 0) ? cp + 1 : cp;
  }
  if (cp >= 0x0391 && cp <= 0x03A9 && cp != 0x03A2) return cp + 0x20;
  if (cp >= 0x0410 && cp <= 0x042F) return cp + 0x20;
  if (cp >= 0x0400 && cp <= 0x040F) return cp + 0x50;
  return cp;
}

bool is_combining(char32_t cp) noexcept { return cp >= 0x0300 && cp <= 0x036F; }

bool is_digit(char32_t cp) noexcept { return cp >= '0' && cp <= '9'; }

bool is_word(char32_t cp) noexcept {
  if (cp < 0x80) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || is_digit(cp);
  }
  if (cp < 0x00C0) return cp == 0x00AA || cp == 0x00B5 || cp == 0x00BA;
  if (cp == 0x00D7 || cp == 0x00F7) return false;
  if (cp >= 0x02B9 && cp <= 0x02FF) return false;  // modifier letters, incl. apostrophes
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;  // punctuation, symbols, arrows
  if (cp >= 0x2E00 && cp <= 0x2E7F) return false;
  if (cp >= 0x3000 && cp <= 0x303F) return false;
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
  return true;
}

bool is_space_byte(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

bool is_valid_utf8(std::string_view s) noexcept {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t min = 0;
    if (b0 < 0x80) {
      ++i;
      continue;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      min = 0x10000;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
    }
    const char32_t cp = decode(s, i).cp;
    if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += len;
  }
  return true;
}

std::size_t codepoint_count(std::string_view s) noexcept {
  std::size_t n = 0;
  for (char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string normalize_line_endings(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

std::string_view trim(std::string_view s) noexcept {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space_byte(s[b])) ++b;
  while (e > b && is_space_byte(s[e - 1])) --e;
  return s.substr(b, e - b);
}

bool is_blank(std::string_view s) noexcept { return trim(s).empty(); }

std::string fold_case(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const auto d = decode(s, i);
    if (!is_combining(d.cp)) encode(fold(d.cp), out);
    i += d.len;
  }
  return out;
}

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> tokens;
  Token cur;
  bool in_token = false;
  char32_t prev = 0;
  auto flush = [&](std::size_t end) {
    if (in_token && !cur.text.empty()) {
      cur.end = end;
      tokens.push_back(std::move(cur));
    }
    cur = Token{};
    in_token = false;
  };
  for (std::size_t i = 0; i < s.size();) {
    const auto d = decode(s, i);
    if (is_word(d.cp)) {
      if (!in_token) {
        in_token = true;
        cur.begin = i;
      }
      if (!is_combining(d.cp)) encode(fold(d.cp), cur.text);
    } else if (in_token && (d.cp == '.' || d.cp == ',') && is_digit(prev) &&
               i + 1 < s.size() && is_digit(static_cast<unsigned char>(s[i + 1]))) {
      cur.text.push_back(static_cast<char>(d.cp));
    } else {
      flush(i);
    }
    prev = d.cp;
    i += d.len;
  }
  flush(s.size());
  return tokens;
}

std::vector<std::string> normalize_tokens(std::string_view s) {
  std::vector<std::string> out;
  for (auto& t : tokenize(s)) out.push_back(std::move(t.text));
  return out;
}

std::string normalize(std::string_view s) {
  std::string out;
  for (const auto& t : tokenize(s)) {
    if (!out.empty()) out.push_back(' ');
    out += t.text;
  }
  return out;
}

bool is_number_token(std::string_view token) noexcept {
  if (token.empty() || !is_digit(static_cast<unsigned char>(token.front()))) return false;
  return std::all_of(token.begin(), token.end(),
                     [](char c) { return is_digit(static_cast<unsigned char>(c)) || c == '.' || c == ','; });
}

std::optional<double> parse_number(std::string_view token) noexcept {
  if (!is_number_token(token)) return std::nullopt;
  std::string t(token);
  std::replace(t.begin(), t.end(), ',', '.');
  if (std::count(t.begin(), t.end(), '.') > 1) return std::nullopt;
  try {
    return std::stod(t);
  } catch (...) {
    return std::nullopt;
  }
}

std::vector<std::string_view> split_sentences(std::string_view s) {
  std::vector<std::string_view> out;
  auto emit = [&](std::size_t b, std::size_t e) {
    auto piece = trim(s.substr(b, e - b));
    if (!piece.empty()) out.push_back(piece);
  };
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i + 1;
      while (j < s.size() && (s[j] == '.' || s[j] == '!' || s[j] == '?')) ++j;
      // absorb closing quotes and brackets
      while (j < s.size()) {
        if (s[j] == '"' || s[j] == '\'' || s[j] == ')' || s[j] == ']') {
          ++j;
        } else if (s.compare(j, 3, "\xE2\x80\x9D") == 0 || s.compare(j, 3, "\xE2\x80\x99") == 0) {
          j += 3;
        } else {
          break;
        }
      }
      if (j >= s.size() || is_space_byte(s[j])) {
        emit(start, j);
        start = j;
        i = j;
        continue;
      }
      i = j;
      continue;
    }
    if (c == '\n') {
      std::size_t j = i + 1;
      while (j < s.size() && (s[j] == ' ' || s[j] == '\t' || s[j] == '\r')) ++j;
      if (j < s.size() && s[j] == '\n') {
        emit(start, i);
        start = j;
        i = j;
        continue;
      }
    }
    ++i;
  }
  emit(start, s.size());
  return out;
}

std::string_view first_sentence(std::string_view s) {
  auto sentences = split_sentences(s);
  return sentences.empty() ? std::string_view{} : sentences.front();
}

std::string_view first_clause(std::string_view s) {
  s = trim(s);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == ';' || c == ':' || c == '!' || c == '?' || c == '\n') return trim(s.substr(0, i));
    if (c == ',' || c == '.') {
      const bool decimal = i > 0 && i + 1 < s.size() &&
                           is_digit(static_cast<unsigned char>(s[i - 1])) &&
                           is_digit(static_cast<unsigned char>(s[i + 1]));
      if (!decimal) return trim(s.substr(0, i));
    }
  }
  return s;
}

std::vector<Cue> parse_cues(const std::vector<std::string>& lines) {
  std::vector<Cue> cues;
  for (const auto& raw : lines) {
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    Cue cue;
    if (line.front() == '!') {
      cue.interjection = true;
      line.remove_prefix(1);
    }
    cue.tokens = normalize_tokens(line);
    if (!cue.tokens.empty()) cues.push_back(std::move(cue));
  }
  return cues;
}

std::optional<std::size_t> find_cue(const std::vector<Token>& tokens, std::string_view source,
                                    const Cue& cue) {
  const std::size_t n = cue.tokens.size();
  if (n == 0 || tokens.size() < n) return std::nullopt;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < n && match; ++k) match = tokens[i + k].text == cue.tokens[k];
    if (!match) continue;
    if (cue.interjection) {
      std::size_t j = tokens[i + n - 1].end;
      while (j < source.size() && (source[j] == ' ' || source[j] == '\t')) ++j;
      const bool terminated =
          j >= source.size() || source[j] == ',' || source[j] == '.' || source[j] == '!' ||
          source[j] == ';' || source[j] == ':' || source[j] == '\n' ||
          source.compare(j, 3, "\xE2\x80\x94") == 0 || source[j] == '-';
      if (!terminated) continue;
    }
    return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> find_any_cue(const std::vector<Token>& tokens, std::string_view source,
                                        const std::vector<Cue>& cues) {
  std::optional<std::size_t> best;
  for (const auto& cue : cues) {
    auto pos = find_cue(tokens, source, cue);
    if (pos && (!best || *pos < *best)) best = pos;
  }
  return best;
}

std::vector<std::string> read_lexicon_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open lexicon " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (!is_valid_utf8(t)) throw Error(ErrorCode::InvalidEncoding, path.string());
    lines.emplace_back(t);
  }
  return lines;
}

namespace builtin {

const std::vector<std::string>& stop_words() {
  static const std::vector<std::string> words = {
      // English
      "a", "an", "the", "and", "or", "nor", "but", "of", "to", "in", "on", "at", "by", "for",
      "from", "with", "within", "without", "into", "onto", "about", "as", "per", "via", "is",
      "are", "was", "were", "be", "been", "being", "am", "it", "its", "this", "that", "these",
      "those", "there", "here", "which", "who", "whom", "whose", "what", "when", "where",
      "why", "how", "i", "you", "he", "she", "we", "they", "me", "my", "your", "yours", "our",
      "their", "his", "her", "them", "us", "do", "does", "did", "done", "doing", "can",
      "could", "may", "might", "must", "shall", "should", "will", "would", "not", "no",
      "yes", "if", "then", "than", "so", "such", "any", "all", "each", "every", "some",
      "also", "only", "upon", "s", "t", "has", "have", "had", "having", "cannot", "according",
      "regarding", "during", "after", "before", "under", "over", "between", "both", "either",
      "neither", "other", "own", "same", "very", "just", "up", "down", "out", "off", "again",
      "further", "once", "more", "most", "less", "least",
      // Turkish
      "ve", "veya", "ya", "ile", "bir", "bu", "şu", "o", "da", "de", "ki", "mi", "mı", "mu",
      "mü", "için", "gibi", "daha", "en", "çok", "her", "ise", "ama", "fakat", "ancak",
      "olarak", "olan", "kadar", "sonra", "önce", "göre", "değil", "evet", "hayır", "ne",
      "nasıl", "hangi", "veyahut", "yani", "hem", "ben", "sen", "biz", "siz", "onlar"};
  return words;
}

const std::vector<std::string>& refusal_cues() {
  static const std::vector<std::string> cues = {
      "!no", "!nope", "not possible", "is not possible", "impossible", "cannot", "can not",
      "can't", "may not", "must not", "not allowed", "not permitted", "not eligible",
      "not accepted", "unable to", "is prohibited", "are prohibited", "is forbidden",
      "!hayır", "mümkün değil", "mümkün değildir", "yapılamaz", "edilemez", "olamaz",
      "alınamaz", "izin verilmez", "kabul edilmez"};
  return cues;
}

const std::vector<std::string>& affirmation_cues() {
  static const std::vector<std::string> cues = {
      "!yes", "!sure", "!evet", "of course", "you can", "you may", "can be", "may be",
      "is possible", "it is possible", "is allowed", "are allowed", "is permitted",
      "are permitted", "is accepted", "are accepted", "accepted", "allowed", "permitted",
      "eligible", "mümkündür", "yapılabilir", "alabilirsiniz", "olabilir", "kabul edilir"};
  return cues;
}

const std::vector<std::string>& negation_cues() {
  static const std::vector<std::string> cues = {
      "not", "no", "never", "cannot", "can't", "nor", "neither", "prohibited", "forbidden",
      "impossible", "değil", "değildir", "yasak", "yasaktır", "yapılamaz", "edilemez",
      "olamaz", "alınamaz"};
  return cues;
}

const std::vector<std::string>& numerals() {
  static const std::vector<std::string> entries = {
      "zero 0", "one 1", "two 2", "three 3", "four 4", "five 5", "six 6", "seven 7",
      "eight 8", "nine 9", "ten 10", "eleven 11", "twelve 12", "thirteen 13",
      "fourteen 14", "fifteen 15", "sixteen 16", "seventeen 17", "eighteen 18",
      "nineteen 19", "twenty 20", "thirty 30", "forty 40", "fifty 50", "sixty 60",
      "seventy 70", "eighty 80", "ninety 90", "hundred 100",
      // Turkish; "on" (ten) is omitted because it collides with the English preposition
      "sıfır 0", "iki 2", "üç 3", "dört 4", "beş 5", "altı 6", "yedi 7", "sekiz 8",
      "dokuz 9", "yirmi 20", "otuz 30", "kırk 40", "elli 50", "altmış 60", "yetmiş 70",
      "seksen 80", "doksan 90", "yüz 100"};
  return entries;
}

}  // namespace builtin

namespace {

std::unordered_set<std::string> make_word_set(const std::vector<std::string>& lines) {
  std::unordered_set<std::string> set;
  for (const auto& l : lines) {
    for (auto& t : normalize_tokens(l)) set.insert(std::move(t));
  }
  return set;
}

std::unordered_map<std::string, std::string> make_numerals(const std::vector<std::string>& lines) {
  std::unordered_map<std::string, std::string> map;
  for (const auto& l : lines) {
    auto toks = normalize_tokens(l);
    if (toks.size() == 2 && is_number_token(toks[1])) map[toks[0]] = toks[1];
  }
  return map;
}

}  // namespace

bool Lexicons::is_stop_word(std::string_view token) const {
  return stop_words.count(std::string(token)) > 0;
}

const Lexicons& Lexicons::defaults() {
  static const Lexicons lex = [] {
    Lexicons l;
    l.stop_words = make_word_set(builtin::stop_words());
    l.refusal_cues = parse_cues(builtin::refusal_cues());
    l.affirmation_cues = parse_cues(builtin::affirmation_cues());
    l.negation_cues = parse_cues(builtin::negation_cues());
    l.numerals = make_numerals(builtin::numerals());
    return l;
  }();
  return lex;
}

Lexicons Lexicons::load(const std::filesystem::path& dir) {
  Lexicons l = defaults();
  auto file = [&](const char* name) { return dir / name; };
  if (std::filesystem::exists(file("stop_words.txt"))) {
    l.stop_words = make_word_set(read_lexicon_file(file("stop_words.txt")));
  }
  if (std::filesystem::exists(file("refusal.txt"))) {
    l.refusal_cues = parse_cues(read_lexicon_file(file("refusal.txt")));
  }
  if (std::filesystem::exists(file("affirmation.txt"))) {
    l.affirmation_cues = parse_cues(read_lexicon_file(file("affirmation.txt")));
  }
  if (std::filesystem::exists(file("negation.txt"))) {
    l.negation_cues = parse_cues(read_lexicon_file(file("negation.txt")));
  }
  if (std::filesystem::exists(file("numerals.txt"))) {
    l.numerals = make_numerals(read_lexicon_file(file("numerals.txt")));
  }
  return l;
}

std::vector<std::string> content_tokens(std::string_view s, const Lexicons& lex) {
  std::vector<std::string> out;
  for (auto& t : tokenize(s)) {
    if (!lex.is_stop_word(t.text)) out.push_back(std::move(t.text));
  }
  return out;
}

std::vector<std::string> canonical_numerals(std::vector<std::string> tokens, const Lexicons& lex) {
  for (auto& t : tokens) {
    auto it = lex.numerals.find(t);
    if (it != lex.numerals.end()) t = it->second;
  }
  return tokens;
}

}  // namespace regdistill::text
