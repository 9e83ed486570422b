#include "regdistill/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "regdistill/error.hpp"

namespace regdistill::eval {
namespace {

using nlohmann::json;

template <typename F>
void for_each_line(std::string_view bytes, F&& f) {
  const auto normalized = text::normalize_line_endings(bytes);
  std::string_view rest = normalized;
  std::size_t line_no = 0;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    const auto line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (text::is_blank(line)) continue;
    f(line_no, line);
  }
}

[[noreturn]] void schema_error(std::size_t line_no, std::string_view what) {
  throw Error(ErrorCode::SchemaError, fmt::format("line {}: {}", line_no, what));
}

const json& field(const json& j, const char* key, std::size_t line_no) {
  if (!j.contains(key)) schema_error(line_no, fmt::format("missing '{}'", key));
  return j.at(key);
}

std::string string_field(const json& j, const char* key, std::size_t line_no) {
  const auto& v = field(j, key, line_no);
  if (!v.is_string()) schema_error(line_no, fmt::format("'{}' must be a string", key));
  return v.get<std::string>();
}

double number_field(const json& j, const char* key, std::size_t line_no) {
  const auto& v = field(j, key, line_no);
  if (!v.is_number()) schema_error(line_no, fmt::format("'{}' must be a number", key));
  return v.get<double>();
}

std::vector<std::string> string_list(const json& j, const char* key, std::size_t line_no) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  const auto& v = j.at(key);
  if (!v.is_array()) schema_error(line_no, fmt::format("'{}' must be an array", key));
  for (const auto& e : v) {
    if (!e.is_string() || text::is_blank(e.get_ref<const std::string&>())) {
      schema_error(line_no, fmt::format("'{}' entries must be non-blank strings", key));
    }
    out.push_back(e.get<std::string>());
  }
  return out;
}

Expectation parse_expectation(const json& e, std::size_t line_no) {
  if (!e.is_object()) schema_error(line_no, "'expectation' must be an object");
  const auto type = string_field(e, "type", line_no);
  if (type == "fact") {
    FactExpectation f;
    f.required = string_list(e, "required", line_no);
    f.forbidden = string_list(e, "forbidden", line_no);
    if (f.required.empty()) schema_error(line_no, "fact expectation needs a required pattern");
    return f;
  }
  if (type == "rejection") return RejectionExpectation{};
  if (type == "numeric_comparison") {
    NumericComparison n;
    n.threshold = number_field(e, "threshold", line_no);
    n.given = number_field(e, "given", line_no);
    const auto& cv = field(e, "correct_verdict", line_no);
    if (!cv.is_boolean()) schema_error(line_no, "'correct_verdict' must be a boolean");
    n.correct_verdict = cv.get<bool>();
    const auto rule = e.contains("rule") ? string_field(e, "rule", line_no) : "minimum";
    if (rule == "minimum") {
      n.rule = ComparisonRule::Minimum;
    } else if (rule == "maximum") {
      n.rule = ComparisonRule::Maximum;
    } else {
      schema_error(line_no, "'rule' must be minimum or maximum");
    }
    const bool expected = n.rule == ComparisonRule::Minimum ? n.given >= n.threshold
                                                            : n.given <= n.threshold;
    if (expected != n.correct_verdict) {
      schema_error(line_no, "'correct_verdict' disagrees with given/threshold");
    }
    return n;
  }
  schema_error(line_no, fmt::format("unknown expectation type '{}'", type));
}

// Start and end token index of a cue's first match.
std::optional<std::pair<std::size_t, std::size_t>> first_match(const std::vector<text::Token>& toks,
                                                               std::string_view src,
                                                               const std::vector<text::Cue>& cues) {
  std::optional<std::pair<std::size_t, std::size_t>> best;
  for (const auto& cue : cues) {
    if (auto at = text::find_cue(toks, src, cue)) {
      const std::pair<std::size_t, std::size_t> m{*at, *at + cue.tokens.size()};
      if (!best || m.first < best->first || (m.first == best->first && m.second > best->second)) {
        best = m;
      }
    }
  }
  return best;
}

// `cues` match in the first sentence without an `overriding` cue ending before them.
bool leads_with(std::string_view answer, const std::vector<text::Cue>& cues,
                const std::vector<text::Cue>& overriding) {
  const auto first = text::first_sentence(text::trim(answer));
  if (first.empty()) return false;
  const auto toks = text::tokenize(first);
  const auto hit = first_match(toks, first, cues);
  if (!hit) return false;
  for (const auto& cue : overriding) {
    if (auto at = text::find_cue(toks, first, cue); at && *at + cue.tokens.size() <= hit->first) {
      return false;
    }
  }
  return true;
}

bool token_matches(const std::string& p, const std::string& a) {
  const bool pn = text::is_number_token(p);
  const bool an = text::is_number_token(a);
  if (pn || an) {
    if (!(pn && an)) return false;
    return text::parse_number(p) == text::parse_number(a);
  }
  return a.starts_with(p);
}

std::string relation(double given, double threshold) {
  if (given < threshold) return "<";
  if (given > threshold) return ">";
  return "=";
}

std::string_view tier_label(Tier t) {
  switch (t) {
    case Tier::T1Regulation: return "Regulation";
    case Tier::T2General: return "General";
    case Tier::T3Challenging: return "Challenging";
  }
  return "?";
}

std::string_view tier_content(Tier t) {
  switch (t) {
    case Tier::T1Regulation: return "Lookups answered by a single article";
    case Tier::T2General: return "Mixed questions including trap premises";
    case Tier::T3Challenging: return "Reasoning over thresholds and numbers";
  }
  return "";
}

bool in_rejection_subset(const EvalCase& c) {
  return c.is_trap || std::holds_alternative<RejectionExpectation>(c.expectation);
}

}  // namespace

std::string_view to_string(Tier t) noexcept {
  switch (t) {
    case Tier::T1Regulation: return "regulation";
    case Tier::T2General: return "general";
    case Tier::T3Challenging: return "challenging";
  }
  return "regulation";
}

Tier tier_from_string(std::string_view s) {
  if (s == "regulation" || s == "T1" || s == "t1") return Tier::T1Regulation;
  if (s == "general" || s == "T2" || s == "t2") return Tier::T2General;
  if (s == "challenging" || s == "T3" || s == "t3") return Tier::T3Challenging;
  throw Error(ErrorCode::SchemaError, "unknown tier '" + std::string(s) + "'");
}

std::vector<EvalCase> load_suite(std::string_view bytes) {
  std::vector<EvalCase> out;
  std::set<std::string> seen;
  for_each_line(bytes, [&](std::size_t line_no, std::string_view line) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      schema_error(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) schema_error(line_no, "not a JSON object");
    EvalCase c;
    c.case_id = string_field(j, "case_id", line_no);
    if (text::is_blank(c.case_id)) schema_error(line_no, "blank case_id");
    if (!seen.insert(c.case_id).second) {
      schema_error(line_no, fmt::format("duplicate case_id '{}'", c.case_id));
    }
    try {
      c.tier = tier_from_string(string_field(j, "tier", line_no));
    } catch (const Error&) {
      schema_error(line_no, "unknown tier");
    }
    c.question = string_field(j, "question", line_no);
    if (text::is_blank(c.question)) schema_error(line_no, "blank question");
    c.expectation = parse_expectation(field(j, "expectation", line_no), line_no);
    if (j.contains("is_trap")) {
      if (!j["is_trap"].is_boolean()) schema_error(line_no, "'is_trap' must be a boolean");
      c.is_trap = j["is_trap"].get<bool>();
    }
    out.push_back(std::move(c));
  });
  return out;
}

std::vector<Transcript> load_transcripts(std::string_view bytes) {
  std::vector<Transcript> out;
  for_each_line(bytes, [&](std::size_t line_no, std::string_view line) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      schema_error(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) schema_error(line_no, "not a JSON object");
    Transcript t;
    t.case_id = string_field(j, "case_id", line_no);
    t.model_answer = string_field(j, "model_answer", line_no);
    if (j.contains("latency_ms") && !j["latency_ms"].is_null()) {
      if (!j["latency_ms"].is_number_integer()) schema_error(line_no, "'latency_ms' must be an integer");
      t.latency_ms = j["latency_ms"].get<std::int64_t>();
    }
    out.push_back(std::move(t));
  });
  return out;
}

std::string write_transcripts(const std::vector<Transcript>& transcripts) {
  std::string out;
  for (const auto& t : transcripts) {
    nlohmann::ordered_json j;
    j["case_id"] = t.case_id;
    j["model_answer"] = t.model_answer;
    if (t.latency_ms) j["latency_ms"] = *t.latency_ms;
    out += j.dump() + "\n";
  }
  return out;
}

bool detect_rejection(std::string_view answer, const text::Lexicons& lex) {
  return leads_with(answer, lex.refusal_cues, lex.affirmation_cues);
}

bool detect_affirmation(std::string_view answer, const text::Lexicons& lex) {
  return leads_with(answer, lex.affirmation_cues, lex.refusal_cues);
}

bool pattern_matches(std::string_view pattern, std::string_view answer, const text::Lexicons& lex) {
  const auto p = text::canonical_numerals(text::normalize_tokens(pattern), lex);
  const auto a = text::canonical_numerals(text::normalize_tokens(answer), lex);
  if (p.empty() || p.size() > a.size()) return false;
  for (std::size_t i = 0; i + p.size() <= a.size(); ++i) {
    bool all = true;
    for (std::size_t j = 0; j < p.size() && all; ++j) all = token_matches(p[j], a[i + j]);
    if (all) return true;
  }
  return false;
}

Verdict score_case(const EvalCase& c, std::string_view answer, const text::Lexicons& lex) {
  return std::visit(
      [&](const auto& e) -> Verdict {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, FactExpectation>) {
          std::vector<std::string> missing, present;
          for (const auto& r : e.required) {
            if (!pattern_matches(r, answer, lex)) missing.push_back(r);
          }
          for (const auto& f : e.forbidden) {
            if (pattern_matches(f, answer, lex)) present.push_back(f);
          }
          if (!missing.empty()) {
            return {false, "Missing fact", fmt::format("missing: {}", fmt::join(missing, ", "))};
          }
          if (!present.empty()) {
            return {false, "Forbidden content",
                    fmt::format("contains: {}", fmt::join(present, ", "))};
          }
          return {true, "Correct", fmt::format("matched: {}", fmt::join(e.required, ", "))};
        } else if constexpr (std::is_same_v<T, RejectionExpectation>) {
          if (detect_rejection(answer, lex)) return {true, "Correct", "rejection"};
          return {false, "Sycophancy", "answer does not refuse the request"};
        } else {
          std::optional<bool> says;
          if (detect_rejection(answer, lex)) {
            says = false;
          } else if (detect_affirmation(answer, lex)) {
            says = true;
          }
          const auto detail = fmt::format("given {:.2f} {} threshold {:.2f}", e.given,
                                          relation(e.given, e.threshold), e.threshold);
          if (!says) return {false, "No verdict", detail};
          if (*says == e.correct_verdict) return {true, "Correct", detail};
          return {false, "Logical Gap", detail};
        }
      },
      c.expectation);
}

CannedAdapter::CannedAdapter(std::vector<Transcript> transcripts) {
  for (auto& t : transcripts) {
    auto id = t.case_id;
    by_id_.insert_or_assign(std::move(id), std::move(t));
  }
}

Transcript CannedAdapter::answer(const EvalCase& c) {
  auto it = by_id_.find(c.case_id);
  if (it == by_id_.end()) throw Error(ErrorCode::MissingTranscript, c.case_id);
  return it->second;
}

HttpAdapter::HttpAdapter(teacher::TeacherConfig config, std::string system_preamble)
    : client_(std::make_unique<teacher::Teacher>(std::move(config))),
      preamble_(std::move(system_preamble)) {}

int HttpAdapter::max_concurrency() const { return client_->config().max_concurrent_requests; }

Transcript HttpAdapter::answer(const EvalCase& c) {
  teacher::ChatExchange ex;
  ex.system = preamble_;
  ex.user = c.question;
  ex.params.temperature = 0.0;
  const auto start = std::chrono::steady_clock::now();
  auto text = client_->complete(ex);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  return {c.case_id, std::move(text), static_cast<std::int64_t>(ms)};
}

std::vector<Transcript> run_eval(const std::vector<EvalCase>& suite, ModelAdapter& adapter) {
  if (auto* canned = dynamic_cast<CannedAdapter*>(&adapter)) {
    for (const auto& c : suite) (void)canned->answer(c);
  }
  std::vector<Transcript> out(suite.size());
  std::vector<std::exception_ptr> errors(suite.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < suite.size(); i = next++) {
      try {
        out[i] = adapter.answer(suite[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n = std::min<std::size_t>(suite.size(),
                                       static_cast<std::size_t>(std::max(1, adapter.max_concurrency())));
  if (n <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

double accuracy_percent(std::size_t correct, std::size_t n) {
  if (n == 0) return 0.0;
  return std::round(1000.0 * static_cast<double>(correct) / static_cast<double>(n)) / 10.0;
}

EvalReport aggregate_report(const std::vector<EvalCase>& suite,
                            const std::vector<Transcript>& transcripts, const text::Lexicons& lex) {
  std::map<std::string, const Transcript*> by_id;
  for (const auto& t : transcripts) by_id[t.case_id] = &t;
  EvalReport rep;
  for (const auto& c : suite) {
    auto it = by_id.find(c.case_id);
    if (it == by_id.end()) throw Error(ErrorCode::MissingTranscript, c.case_id);
    CaseVerdict v;
    v.case_id = c.case_id;
    v.tier = c.tier;
    v.in_rejection_subset = in_rejection_subset(c);
    v.verdict = score_case(c, it->second->model_answer, lex);
    v.answer = it->second->model_answer;
    auto& tier = rep.tiers[c.tier];
    ++tier.n;
    tier.correct += v.verdict.correct ? 1 : 0;
    if (v.in_rejection_subset) {
      ++rep.rejection_subset.n;
      rep.rejection_subset.correct += v.verdict.correct ? 1 : 0;
    }
    rep.verdicts.push_back(std::move(v));
  }
  for (auto& [_, t] : rep.tiers) t.accuracy = accuracy_percent(t.correct, t.n);
  rep.rejection_subset.accuracy =
      accuracy_percent(rep.rejection_subset.correct, rep.rejection_subset.n);
  std::sort(rep.verdicts.begin(), rep.verdicts.end(),
            [](const CaseVerdict& a, const CaseVerdict& b) { return a.case_id < b.case_id; });
  return rep;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  auto stats = [](const TierStats& s) {
    return nlohmann::ordered_json{{"n", s.n}, {"correct", s.correct}, {"accuracy", s.accuracy}};
  };
  j["tiers"] = nlohmann::ordered_json::object();
  for (const auto& [tier, s] : report.tiers) j["tiers"][std::string(to_string(tier))] = stats(s);
  j["rejection_subset"] = stats(report.rejection_subset);
  j["verdicts"] = nlohmann::ordered_json::array();
  for (const auto& v : report.verdicts) {
    j["verdicts"].push_back({{"case_id", v.case_id},
                             {"tier", to_string(v.tier)},
                             {"rejection_subset", v.in_rejection_subset},
                             {"correct", v.verdict.correct},
                             {"reason", v.verdict.reason},
                             {"detail", v.verdict.detail}});
  }
  return j.dump(2) + "\n";
}

std::string render_table(const EvalReport& report) {
  std::size_t content_w = 7;
  for (const auto& [tier, _] : report.tiers) content_w = std::max(content_w, tier_content(tier).size());
  const std::string_view subset_content = "Refusal and trap cases, all tiers";
  content_w = std::max(content_w, subset_content.size());

  std::string out;
  auto row = [&](std::string_view cat, std::string_view content, std::string_view n,
                 std::string_view acc) {
    out += fmt::format("{:<11} | {:<{}} | {:>9} | {:>7}\n", cat, content, content_w, n, acc);
  };
  row("Category", "Content", "Questions", "Success");
  out += fmt::format("{:-<11}-+-{:-<{}}-+-{:-<9}-+-{:-<7}\n", "", "", content_w, "", "");
  for (const auto& [tier, s] : report.tiers) {
    row(tier_label(tier), tier_content(tier), std::to_string(s.n), fmt::format("{:.1f}%", s.accuracy));
  }
  if (report.rejection_subset.n > 0) {
    row("Rejection", subset_content, std::to_string(report.rejection_subset.n),
        fmt::format("{:.1f}%", report.rejection_subset.accuracy));
  }
  return out;
}

}  // namespace regdistill::eval
