#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "regdistill/teacher.hpp"
#include "regdistill/text.hpp"

namespace regdistill::eval {

enum class Tier { T1Regulation, T2General, T3Challenging };
std::string_view to_string(Tier t) noexcept;  // "regulation" | "general" | "challenging"
Tier tier_from_string(std::string_view s);

struct FactExpectation {
  std::vector<std::string> required;   // at least one
  std::vector<std::string> forbidden;
};
struct RejectionExpectation {};

enum class ComparisonRule { Minimum, Maximum };

/// A yes/no question comparing a stated value against a threshold rule.
/// correct_verdict is whether the asker qualifies.
struct NumericComparison {
  double threshold = 0.0;
  double given = 0.0;
  bool correct_verdict = false;
  ComparisonRule rule = ComparisonRule::Minimum;
};

using Expectation = std::variant<FactExpectation, RejectionExpectation, NumericComparison>;

struct EvalCase {
  std::string case_id;
  Tier tier = Tier::T1Regulation;
  std::string question;
  Expectation expectation;
  bool is_trap = false;
};

/// One case per JSONL line:
///   {"case_id","tier","question","expectation":{"type":"fact"|"rejection"|
///    "numeric_comparison",...},"is_trap"}
/// Throws SchemaError naming the line on any violation, including duplicate ids.
std::vector<EvalCase> load_suite(std::string_view bytes);

struct Transcript {
  std::string case_id;
  std::string model_answer;
  std::optional<std::int64_t> latency_ms;
};

/// {"case_id","model_answer","latency_ms"?} per line. Throws SchemaError.
std::vector<Transcript> load_transcripts(std::string_view bytes);
std::string write_transcripts(const std::vector<Transcript>& transcripts);

/// True when a refusal cue occurs in the answer's first sentence and no
/// affirmation cue ends before it.
bool detect_rejection(std::string_view answer,
                      const text::Lexicons& lex = text::Lexicons::defaults());

/// True when an affirmation cue occurs in the first sentence and no refusal
/// cue ends before it.
bool detect_affirmation(std::string_view answer,
                        const text::Lexicons& lex = text::Lexicons::defaults());

/// Contiguous, number-aware token match: numbers (digits or numeral words)
/// must be equal, words match by prefix so "day" matches "days".
bool pattern_matches(std::string_view pattern, std::string_view answer,
                     const text::Lexicons& lex = text::Lexicons::defaults());

struct Verdict {
  bool correct = false;
  std::string reason;  // e.g. "Logical Gap", "Sycophancy", "Missing fact"
  std::string detail;
};

Verdict score_case(const EvalCase& c, std::string_view answer,
                   const text::Lexicons& lex = text::Lexicons::defaults());

class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;
  /// Thread-safe.
  virtual Transcript answer(const EvalCase& c) = 0;
  virtual int max_concurrency() const { return 1; }
};

/// Replays recorded answers. Construction checks nothing; answering a case
/// without a transcript throws MissingTranscript.
class CannedAdapter : public ModelAdapter {
 public:
  explicit CannedAdapter(std::vector<Transcript> transcripts);
  Transcript answer(const EvalCase& c) override;

 private:
  std::map<std::string, Transcript> by_id_;
};

/// Sends each question to a chat endpoint behind an optional system preamble.
class HttpAdapter : public ModelAdapter {
 public:
  HttpAdapter(teacher::TeacherConfig config, std::string system_preamble);
  Transcript answer(const EvalCase& c) override;
  int max_concurrency() const override;

 private:
  std::unique_ptr<teacher::Teacher> client_;
  std::string preamble_;
};

/// One transcript per case, in suite order. In canned mode every id must be
/// covered (MissingTranscript otherwise), checked before any case runs.
std::vector<Transcript> run_eval(const std::vector<EvalCase>& suite, ModelAdapter& adapter);

struct TierStats {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;  // percent, one decimal
};

/// round(100 * correct / n, 1); 0 when n is 0.
double accuracy_percent(std::size_t correct, std::size_t n);

struct CaseVerdict {
  std::string case_id;
  Tier tier = Tier::T1Regulation;
  bool in_rejection_subset = false;
  Verdict verdict;
  std::string answer;
};

struct EvalReport {
  std::map<Tier, TierStats> tiers;  // only tiers present in the suite
  TierStats rejection_subset;       // Rejection expectations plus trap cases
  std::vector<CaseVerdict> verdicts;  // ordered by case_id
};

/// Transcripts must cover the suite (MissingTranscript otherwise).
EvalReport aggregate_report(const std::vector<EvalCase>& suite,
                            const std::vector<Transcript>& transcripts,
                            const text::Lexicons& lex = text::Lexicons::defaults());

std::string report_json(const EvalReport& report);

/// Category / content / questions / success table.
std::string render_table(const EvalReport& report);

}  // namespace regdistill::eval
