#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "regdistill/audit.hpp"
#include "regdistill/corpus.hpp"
#include "regdistill/dataset.hpp"
#include "regdistill/teacher.hpp"

namespace regdistill::generate {

using corpus::Article;
using corpus::CorpusIndex;
using dataset::DatasetPhase;
using dataset::InstructionRecord;

enum class InjectionMode { Lexical, TeacherAssisted };
std::string_view to_string(InjectionMode m) noexcept;
InjectionMode injection_mode_from_string(std::string_view s);

struct GenerationPlan {
  DatasetPhase phase = DatasetPhase::P3ContextAware;
  std::size_t target_size = 500;
  double adversarial_fraction = 0.2;
  std::pair<std::size_t, std::size_t> per_article_range{5, 12};
  std::uint64_t seed = 42;
  InjectionMode injection = InjectionMode::Lexical;
  double dedupe_threshold = 0.9;
  double grounding_threshold = 0.6;
  audit::ContradictionMode contradiction = audit::ContradictionMode::Heuristic;
  /// Prompt templates to render; the built-in registry when null.
  std::shared_ptr<const std::vector<teacher::PromptTemplate>> templates;

  /// Throws InvalidArgument when a field is out of range.
  void validate() const;
};

struct StageCounts {
  std::size_t sources = 0;     // articles or cards sent to the teacher
  std::size_t empty_completions = 0;
  std::size_t candidates = 0;  // records parsed from teacher output
  std::size_t parse_rejected = 0;
  std::size_t repaired = 0;
  std::size_t invalid = 0;     // failed a phase rule or a stage filter
  std::size_t capped = 0;      // over per_article_range.second
  std::size_t kept = 0;
};

struct GenerationResult {
  std::vector<InstructionRecord> records;
  StageCounts counts;
  /// Fewer records than the stage needed; the partial output is still returned.
  bool insufficient_yield = false;
  std::vector<std::string> warnings;
};

/// Memorization Q&A from raw_converter, one request per article. Stops once
/// target_size records are collected; insufficient_yield when fewer than half
/// of target_size were produced. Ids: "<doc>:<ordinal>:qa:<k>".
GenerationResult generate_phase2(const std::vector<Article>& articles, teacher::Teacher& teacher,
                                 const GenerationPlan& plan);
GenerationResult generate_phase2(const std::vector<Article>& articles,
                                 const teacher::TeacherConfig& config, const GenerationPlan& plan);

/// Memorization Q&A from information cards through id_processor.
/// Each card is (card_id, card text). Ids: "<card_id>:card:<k>".
GenerationResult generate_from_cards(const std::vector<std::pair<std::string, std::string>>& cards,
                                     teacher::Teacher& teacher, const GenerationPlan& plan);

struct InjectionResult {
  std::vector<InstructionRecord> records;  // valid Phase III records
  std::vector<std::string> unsupported;    // record ids excluded
  std::size_t requests = 0;
};

/// Fills each record's input with the verbatim body of its supporting article.
/// Lexical: top find_supporting_article hit when score >= grounding_threshold.
/// TeacherAssisted: context_injection per source article, keeping only
/// returned inputs found verbatim in the corpus. Records that end up failing
/// validate_record(P3) are reported as unsupported.
InjectionResult inject_context(const std::vector<InstructionRecord>& records,
                               const CorpusIndex& index, teacher::Teacher& teacher,
                               const GenerationPlan& plan);
InjectionResult inject_context(const std::vector<InstructionRecord>& records,
                               const CorpusIndex& index, const teacher::TeacherConfig& config,
                               const GenerationPlan& plan);

/// Misconception records from adversarial_sampling. Keeps a candidate only
/// when its output reads as a refusal, its input occurs verbatim in the
/// corpus, and it satisfies validate_record(P3). Ids: "<doc>:<ordinal>:adv:<k>".
GenerationResult generate_adversarial(const std::vector<Article>& articles,
                                      const CorpusIndex& index, teacher::Teacher& teacher,
                                      const GenerationPlan& plan);
GenerationResult generate_adversarial(const std::vector<Article>& articles,
                                      const CorpusIndex& index,
                                      const teacher::TeacherConfig& config,
                                      const GenerationPlan& plan);

struct BuildReport {
  GenerationPlan plan;
  StageCounts qa;
  std::size_t injected = 0;
  std::size_t unsupported = 0;
  StageCounts adversarial;
  std::size_t deduped_in = 0;
  std::size_t duplicates_removed = 0;
  audit::AuditCounts audit;
  std::size_t not_verbatim = 0;
  std::size_t available_normal = 0;
  std::size_t available_adversarial = 0;
  std::size_t selected_normal = 0;
  std::size_t selected_adversarial = 0;
  std::size_t teacher_requests = 0;
  bool insufficient_yield = false;
  std::vector<std::string> warnings;
};

struct BuildResult {
  std::vector<InstructionRecord> records;
  BuildReport report;
};

/// Full context-aware dataset: Q&A, context injection, adversarial sampling,
/// dedupe, audit, then a seeded selection of target_size records holding
/// round(target_size * adversarial_fraction) adversarial ones. Selected
/// records keep their pipeline order.
BuildResult build_phase3(const CorpusIndex& corpus, teacher::Teacher& teacher,
                         const GenerationPlan& plan);
BuildResult build_phase3(const CorpusIndex& corpus, const teacher::TeacherConfig& config,
                         const GenerationPlan& plan);

std::string build_report_json(const BuildReport& report);

}  // namespace regdistill::generate
