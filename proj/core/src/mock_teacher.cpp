#include <algorithm>
#include <array>
#include <regex>

#include "regdistill/audit.hpp"
#include "regdistill/error.hpp"
#include "regdistill/random.hpp"
#include "regdistill/teacher.hpp"
#include "regdistill/text.hpp"

namespace regdistill::teacher {
namespace {

using dataset::InstructionRecord;
using Lines = std::vector<std::string>;

const text::Lexicons& lex() { return text::Lexicons::defaults(); }

std::string_view block_or_all(std::string_view user, std::string_view name) {
  if (auto b = extract_block(user, name)) return *b;
  return user;
}

std::string heading_of(std::string_view user) {
  static constexpr std::string_view kPrefix = "Article heading: ";
  const auto pos = user.find(kPrefix);
  if (pos == std::string_view::npos) return {};
  auto rest = user.substr(pos + kPrefix.size());
  return std::string(text::trim(rest.substr(0, rest.find('\n'))));
}

std::string lower_initial(std::string s) {
  if (s.size() > 1 && s[0] >= 'A' && s[0] <= 'Z' && s[1] >= 'a' && s[1] <= 'z') {
    s[0] = static_cast<char>(s[0] - 'A' + 'a');
  }
  return s;
}

// First eight words, trailing punctuation removed, sentence-initial capital lowered.
std::string key_phrase(std::string_view sentence) {
  std::string out;
  std::size_t words = 0;
  std::size_t i = 0;
  while (i < sentence.size() && words < 8) {
    while (i < sentence.size() && (sentence[i] == ' ' || sentence[i] == '\n' || sentence[i] == '\t')) ++i;
    const auto start = i;
    while (i < sentence.size() && sentence[i] != ' ' && sentence[i] != '\n' && sentence[i] != '\t') ++i;
    if (i > start) {
      if (!out.empty()) out.push_back(' ');
      out.append(sentence.substr(start, i - start));
      ++words;
    }
  }
  while (!out.empty() && std::string_view(".,;:!?\"')").find(out.back()) != std::string_view::npos) {
    out.pop_back();
  }
  return lower_initial(std::move(out));
}

std::vector<std::string_view> usable_sentences(std::string_view body) {
  auto all = text::split_sentences(body);
  std::vector<std::string_view> rich;
  for (auto s : all) {
    if (text::content_tokens(s, lex()).size() >= 3) rich.push_back(s);
  }
  return rich.empty() ? all : rich;
}

std::string fenced(const Lines& lines) {
  std::string out = "```jsonl\n";
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  out += "```\n";
  return out;
}

InstructionRecord make(std::string instruction, std::string input, std::string output) {
  InstructionRecord r;
  r.instruction = std::move(instruction);
  r.input = std::move(input);
  r.output = std::move(output);
  return r;
}

std::string question_for(std::size_t k, const std::string& heading, std::string_view sentence) {
  const std::string h = heading.empty() ? "the regulation" : heading;
  const auto kp = key_phrase(sentence);
  switch (k % 4) {
    case 0: return "According to " + h + ", what applies regarding " + kp + "?";
    case 1: return "What does " + h + " state about " + kp + "?";
    case 2: return "Under " + h + ", what is the rule on " + kp + "?";
    default: return "What is specified in " + h + " concerning " + kp + "?";
  }
}

std::size_t question_count(SeededRng& rng, std::size_t n_sentences) {
  const auto n = n_sentences + static_cast<std::size_t>(rng.below(3));
  return std::clamp<std::size_t>(n, 5, 12);
}

// Trimmed paragraphs (blank-line separated) of `s`.
std::vector<std::string_view> paragraphs(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find("\n\n", start);
    if (end == std::string_view::npos) end = s.size();
    auto p = text::trim(s.substr(start, end - start));
    if (!p.empty()) out.push_back(p);
    start = end + 2;
  }
  return out;
}

std::string_view containing_paragraph(std::string_view reference, std::string_view sentence) {
  for (auto p : paragraphs(reference)) {
    if (p.find(sentence) != std::string_view::npos && p.size() >= 20) return p;
  }
  return text::trim(reference);
}

Lines memorization(std::string_view body, const std::string& heading, SeededRng& rng) {
  const auto sentences = usable_sentences(body);
  Lines out;
  if (sentences.empty()) return out;
  const auto count = question_count(rng, sentences.size());
  for (std::size_t k = 0; k < count; ++k) {
    const auto s = sentences[k % sentences.size()];
    out.push_back(dataset::to_json_line(make(question_for(k, heading, s), "", std::string(s))));
  }
  return out;
}

Lines id_card(std::string_view card, SeededRng& rng) {
  std::vector<std::pair<std::string, std::string>> fields;
  static const std::regex sep(R"([,\n])");
  const std::string card_s(card);
  for (std::sregex_token_iterator it(card_s.begin(), card_s.end(), sep, -1), end; it != end; ++it) {
    const std::string part = it->str();
    const auto colon = part.find(':');
    if (colon == std::string::npos) continue;
    auto key = std::string(text::trim(std::string_view(part).substr(0, colon)));
    auto value = std::string(text::trim(std::string_view(part).substr(colon + 1)));
    if (!key.empty() && !value.empty()) fields.emplace_back(std::move(key), std::move(value));
  }
  Lines out;
  if (fields.empty()) return out;
  const std::string name = fields.front().second;
  std::vector<std::pair<std::string, std::string>> facts(fields.begin() + (fields.size() > 1 ? 1 : 0),
                                                         fields.end());
  static constexpr std::array<std::string_view, 4> kFrames = {
      "What is the {k} of {n}?", "Could you tell me the {k} for {n}?",
      "I need the {k} of {n}.", "Which {k} is listed for {n}?"};
  const auto count = static_cast<std::size_t>(rng.between(6, 10));
  for (std::size_t i = 0; i < count; ++i) {
    const auto& [key, value] = facts[i % facts.size()];
    std::string q(kFrames[(i / facts.size() + i) % kFrames.size()]);
    q = std::regex_replace(q, std::regex(R"(\{k\})"), key);
    q = std::regex_replace(q, std::regex(R"(\{n\})"), name);
    const std::string a = "The " + key + " of " + name + " is " + value + ".";
    out.push_back(dataset::to_json_line(make(std::move(q), "", a)));
  }
  return out;
}

Lines audit_qc(std::string_view source, std::string_view records) {
  Lines out;
  for (auto& r : parse_generated(records).records) {
    if (!r.input.empty()) continue;
    if (audit::grounding_score(r.output, source, lex()) < 0.6) continue;
    out.push_back(dataset::to_json_line(r));
  }
  return out;
}

Lines context_aware(std::string_view reference, SeededRng& rng) {
  const auto sentences = usable_sentences(reference);
  Lines out;
  if (sentences.empty()) return out;
  const auto count = question_count(rng, sentences.size());
  for (std::size_t k = 0; k < count; ++k) {
    const auto s = sentences[k % sentences.size()];
    out.push_back(dataset::to_json_line(make(question_for(k, "", s),
                                             std::string(containing_paragraph(reference, s)),
                                             std::string(s))));
  }
  return out;
}

Lines context_injection(std::string_view source, std::string_view records) {
  const auto paras = paragraphs(source);
  Lines out;
  for (auto& r : parse_generated(records).records) {
    std::optional<std::string_view> best;
    double best_score = 0.0;
    for (auto p : paras) {
      if (p.size() < 20) continue;
      const double score = audit::grounding_score(r.output, p, lex());
      if (score > best_score) {
        best = p;
        best_score = score;
      }
    }
    if (!best || best_score < 0.6) continue;
    r.input = std::string(*best);
    out.push_back(dataset::to_json_line(r));
  }
  return out;
}

std::optional<std::string> flip_negation(std::string_view sentence) {
  static const std::array<std::pair<std::regex, std::string>, 10> kFlips = {{
      {std::regex(R"(\bcannot\b)", std::regex::icase), "can"},
      {std::regex(R"(\bcan not\b)", std::regex::icase), "can"},
      {std::regex(R"(\bmay not\b)", std::regex::icase), "may"},
      {std::regex(R"(\bmust not\b)", std::regex::icase), "may"},
      {std::regex(R"(\bis not\b)", std::regex::icase), "is"},
      {std::regex(R"(\bare not\b)", std::regex::icase), "are"},
      {std::regex(R"(\bwill not\b)", std::regex::icase), "will"},
      {std::regex(R"(\bshall not\b)", std::regex::icase), "shall"},
      {std::regex(R"(\bdoes not\b)", std::regex::icase), "does"},
      {std::regex(R"(\bdo not\b)", std::regex::icase), "do"},
  }};
  const std::string s(sentence);
  for (const auto& [re, repl] : kFlips) {
    if (std::regex_search(s, re)) return std::regex_replace(s, re, repl);
  }
  return std::nullopt;
}

std::string strip_final_period(std::string s) {
  while (!s.empty() && (s.back() == '.' || s.back() == ' ')) s.pop_back();
  return s;
}

Lines adversarial(std::string_view article, SeededRng& rng) {
  static constexpr std::array<std::string_view, 3> kOpeners = {
      "No, according to the regulations, it is not possible.", "No, that is not possible.",
      "No, this is not permitted."};
  const auto evidence = text::trim(article);
  std::vector<std::string_view> eligible;
  for (auto s : text::split_sentences(evidence)) {
    if (text::content_tokens(s, lex()).size() < 2) continue;
    if (audit::polarity(text::first_clause(s), lex()) == audit::Polarity::Positive) continue;
    eligible.push_back(s);
  }
  Lines out;
  if (eligible.empty()) return out;
  // Explicit prohibitions make the strongest traps, so they go first.
  const auto prohibitions = std::stable_partition(
      eligible.begin(), eligible.end(), [](std::string_view s) { return flip_negation(s).has_value(); });
  if (prohibitions != eligible.end()) {
    const auto rest = static_cast<std::size_t>(eligible.end() - prohibitions);
    std::rotate(prohibitions, prohibitions + static_cast<std::ptrdiff_t>(rng.below(rest)), eligible.end());
  }
  const auto want = std::min<std::size_t>(eligible.size(), 2 + rng.below(3));
  for (std::size_t i = 0; i < want; ++i) {
    const auto s = eligible[i];
    std::string q;
    if (auto flipped = flip_negation(s)) {
      q = "I heard that " + lower_initial(strip_final_period(*flipped)) + ". Is that right?";
    } else if (rng.below(2) == 0) {
      q = "Can an exception be made to the rule that " + key_phrase(s) + "?";
    } else {
      q = "Is it acceptable to disregard the rule that " + key_phrase(s) + "?";
    }
    const std::string answer = std::string(kOpeners[rng.below(kOpeners.size())]) + " " + std::string(s);
    out.push_back(dataset::to_json_line(make(std::move(q), std::string(evidence), answer)));
  }
  return out;
}

Lines data_audit(std::string_view records) {
  Lines out;
  for (auto& r : parse_generated(records).records) {
    const auto fixed = audit::repair_record(r);
    const InstructionRecord& view = fixed ? *fixed : r;
    if (view.input.empty() || view.instruction.empty() || view.output.empty()) continue;
    if (audit::contradiction_check(view.input, view.output, lex()).contradicts) continue;
    out.push_back(dataset::to_json_line(view));
  }
  return out;
}

}  // namespace

std::string mock_complete(const ChatExchange& exchange, std::uint64_t seed) {
  const auto id = marker_of(exchange);
  if (!id) throw Error(ErrorCode::UnknownTemplateMarker, "exchange carries no template marker");
  SeededRng rng(mix_seed(seed, fnv1a(*id)));
  const std::string_view user = exchange.user;

  if (*id == ids::kSystem) return fenced(memorization(block_or_all(user, "SOURCE TEXT"), "", rng));
  if (*id == ids::kRawConverter) {
    return fenced(memorization(block_or_all(user, "ARTICLE"), heading_of(user), rng));
  }
  if (*id == ids::kIdProcessor) return fenced(id_card(block_or_all(user, "CARD"), rng));
  if (*id == ids::kAuditQc) {
    return fenced(audit_qc(block_or_all(user, "SOURCE TEXT"), block_or_all(user, "RECORDS")));
  }
  if (*id == ids::kGlobalSystem) {
    return fenced(context_aware(block_or_all(user, "REFERENCE TEXT"), rng));
  }
  if (*id == ids::kContextInjection) {
    return fenced(
        context_injection(block_or_all(user, "SOURCE TEXT"), block_or_all(user, "RECORDS")));
  }
  if (*id == ids::kAdversarialSampling) return fenced(adversarial(block_or_all(user, "ARTICLE"), rng));
  if (*id == ids::kDataAudit) return fenced(data_audit(block_or_all(user, "RECORDS")));
  throw Error(ErrorCode::UnknownTemplateMarker, "unknown template '" + *id + "'");
}

}  // namespace regdistill::teacher
