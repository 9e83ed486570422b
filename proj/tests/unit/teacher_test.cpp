#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "regdistill/corpus.hpp"
#include "regdistill/error.hpp"
#include "regdistill/teacher.hpp"
#include "regdistill/text.hpp"

using namespace regdistill;
namespace rdt = regdistill::testing;
using namespace regdistill::teacher;
using dataset::DatasetPhase;

namespace {

const PromptTemplate& tmpl(std::string_view id) {
  static const auto reg = registry();
  return find_template(reg, id);
}

ChatExchange render_article(std::string_view id, const std::string& body, const std::string& heading) {
  return render_prompt(tmpl(id), {{"ARTICLE_TEXT", body}, {"ARTICLE_HEADING", heading}});
}

const std::string kSixSentences =
    "Students apply for a leave of absence at the Registrar. The request must include supporting "
    "documents. A leave of absence cannot exceed four semesters in total. Students on leave do not "
    "pay tuition fees. The faculty board decides on each request within 15 days. Decisions are "
    "announced on the student portal.";

}  // namespace

TEST(Registry, EightTemplatesWithUniqueIdsAndPhases) {
  const auto reg = registry();
  ASSERT_EQ(reg.size(), 8u);
  std::set<std::string> ids;
  std::size_t p2 = 0, p3 = 0;
  for (const auto& t : reg) {
    ids.insert(t.template_id);
    (t.phase == DatasetPhase::P2Memorization ? p2 : p3)++;
    const auto ph = placeholders_in(t.user_template);
    EXPECT_EQ(std::set<std::string>(ph.begin(), ph.end()), t.required_placeholders) << t.template_id;
  }
  EXPECT_EQ(ids.size(), 8u);
  EXPECT_EQ(p2, 4u);
  EXPECT_EQ(p3, 4u);
  for (auto id : {"system", "raw_converter", "id_processor", "audit_qc"}) {
    EXPECT_EQ(find_template(reg, id).phase, DatasetPhase::P2Memorization);
  }
  for (auto id : {"global_system", "context_injection", "adversarial_sampling", "data_audit"}) {
    EXPECT_EQ(find_template(reg, id).phase, DatasetPhase::P3ContextAware);
  }
  EXPECT_NE(tmpl(ids::kRawConverter).user_template.find("5-12 questions"), std::string::npos);
  EXPECT_NE(tmpl(ids::kAdversarialSampling).user_template.find("must be a rejection"), std::string::npos);
}

TEST(Registry, OverrideDirectoryReplacesTexts) {
  const auto dir = rdt::temp_dir("tmpl");
  rdt::write_file(dir / "raw_converter.user.txt", "Only {{ARTICLE_TEXT}} here");
  const auto reg = registry(dir);
  const auto& t = find_template(reg, ids::kRawConverter);
  EXPECT_EQ(t.user_template, "Only {{ARTICLE_TEXT}} here");
  EXPECT_EQ(t.required_placeholders, std::set<std::string>{"ARTICLE_TEXT"});
  EXPECT_EQ(find_template(reg, ids::kAuditQc).system_text, tmpl(ids::kAuditQc).system_text);
}

TEST(Render, SubstitutesVerbatimAndIsDeterministic) {
  const auto a = render_prompt(tmpl(ids::kIdProcessor), {{"CARD_TEXT", "Name: X, Ext: 1234"}});
  EXPECT_NE(a.user.find("Name: X, Ext: 1234"), std::string::npos);
  EXPECT_EQ(a.user.find("{{"), std::string::npos);
  const auto b = render_prompt(tmpl(ids::kIdProcessor), {{"CARD_TEXT", "Name: X, Ext: 1234"}});
  EXPECT_EQ(a.system, b.system);
  EXPECT_EQ(a.user, b.user);
  EXPECT_EQ(marker_of(a), std::string(ids::kIdProcessor));
  EXPECT_DOUBLE_EQ(a.params.temperature, 0.7);
  const auto audit = render_prompt(tmpl(ids::kDataAudit), {{"RECORDS", "x"}});
  EXPECT_DOUBLE_EQ(audit.params.temperature, 0.0);
}

TEST(Render, BindingErrors) {
  try {
    render_prompt(tmpl(ids::kRawConverter), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingBinding);
    EXPECT_NE(std::string(e.what()).find("ARTICLE_TEXT"), std::string::npos);
  }
  RenderOptions strict;
  strict.strict = true;
  try {
    render_prompt(tmpl(ids::kIdProcessor), {{"CARD_TEXT", "c"}, {"EXTRA", "e"}}, strict);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownBinding);
  }
  EXPECT_NO_THROW(render_prompt(tmpl(ids::kIdProcessor), {{"CARD_TEXT", "c"}, {"EXTRA", "e"}}));
}

TEST(Render, BoundTextWithBracesIsNotReexpanded) {
  const auto ex = render_prompt(tmpl(ids::kIdProcessor), {{"CARD_TEXT", "literal {{CARD_TEXT}}"}});
  EXPECT_NE(ex.user.find("literal {{CARD_TEXT}}"), std::string::npos);
}

TEST(Blocks, ExtractRoundTrip) {
  const auto b = block("SOURCE TEXT", "line a\nline b");
  EXPECT_EQ(extract_block("pre\n" + b + "\npost", "SOURCE TEXT"), "line a\nline b");
  EXPECT_FALSE(extract_block(b, "RECORDS").has_value());
}

TEST(Backoff, ExponentialCappedAndRetryAfter) {
  RetryPolicy p{5, 100, 350};
  EXPECT_EQ(backoff_delay_ms(p, 1), 100);
  EXPECT_EQ(backoff_delay_ms(p, 2), 200);
  EXPECT_EQ(backoff_delay_ms(p, 3), 350);
  EXPECT_EQ(backoff_delay_ms(p, 4), 350);
  EXPECT_EQ(backoff_delay_ms(p, 1, 1000), 1000);
  EXPECT_EQ(backoff_delay_ms(p, 2, 10), 200);
}

TEST(ParseGenerated, StripsFencesAndProse) {
  const std::string raw =
      "Here are the questions:\n```jsonl\n"
      "{\"instruction\":\"a\",\"input\":\"\",\"output\":\"1\"}\n"
      "{\"instruction\":\"b\",\"input\":\"\",\"output\":\"2\"}\n"
      "{\"instruction\":\"c\",\"input\":\"\",\"output\":\"3\"}\n"
      "{\"instruction\":\"d\",\"input\":\"\",\"output\":\"4\"}\n```\nHope this helps.";
  const auto r = parse_generated(raw);
  EXPECT_EQ(r.records.size(), 4u);
  EXPECT_EQ(r.rejected.size(), 2u);  // the two prose lines
  EXPECT_TRUE(r.repaired.empty());
}

TEST(ParseGenerated, RepairsTrailingComma) {
  const auto r = parse_generated("{\"instruction\":\"a\",\"input\":\"\",\"output\":\"1\",}\n");
  ASSERT_EQ(r.records.size(), 1u);
  ASSERT_EQ(r.repaired.size(), 1u);
  EXPECT_EQ(r.records[0].output, "1");
  const auto line_end = parse_generated("{\"instruction\":\"a\",\"input\":\"\",\"output\":\"1\"},\n");
  EXPECT_EQ(line_end.records.size(), 1u);
  EXPECT_EQ(line_end.repaired.size(), 1u);
}

TEST(ParseGenerated, RepairsUnescapedInnerQuotes) {
  const auto r = parse_generated(
      "{\"instruction\":\"What does \"petition\" mean?\",\"input\":\"\",\"output\":\"A written \"request\"\"}");
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].instruction, "What does \"petition\" mean?");
  EXPECT_EQ(r.records[0].output, "A written \"request\"");
  EXPECT_EQ(r.repaired.size(), 1u);
}

TEST(ParseGenerated, ProseOnlyYieldsDiagnostics) {
  const auto r = parse_generated("I could not find any questions in this article.");
  EXPECT_TRUE(r.records.empty());
  EXPECT_GE(r.rejected.size(), 1u);
}

TEST(Mock, RawConverterYieldsFiveToTwelveEmptyInputLines) {
  const auto ex = render_article(ids::kRawConverter, kSixSentences, "Article 7 - Leave of Absence");
  const auto raw = mock_complete(ex, 3);
  EXPECT_EQ(raw, mock_complete(ex, 3));
  const auto r = parse_generated(raw);
  EXPECT_GE(r.records.size(), 5u);
  EXPECT_LE(r.records.size(), 12u);
  EXPECT_TRUE(r.rejected.empty());
  for (const auto& rec : r.records) EXPECT_EQ(rec.input, "");
}

TEST(Mock, IdProcessorBuildsSixToTenQueries) {
  const auto ex = render_prompt(tmpl(ids::kIdProcessor),
                                {{"CARD_TEXT", "Name: Dr. A. Yilmaz, Ext: 1234, Office: B-204, Email: a@x.edu"}});
  const auto r = parse_generated(mock_complete(ex, 1));
  EXPECT_GE(r.records.size(), 6u);
  EXPECT_LE(r.records.size(), 10u);
  bool mentions_ext = false;
  for (const auto& rec : r.records) {
    EXPECT_EQ(rec.input, "");
    mentions_ext |= rec.output.find("1234") != std::string::npos;
  }
  EXPECT_TRUE(mentions_ext);
}

TEST(Mock, ContextInjectionInputsAreVerbatimSource) {
  const std::string source = "Article 6 - Objection\nYou must apply within 7 days from the date the grade is "
                             "announced.\n\nThe department head responds within 15 days.";
  const std::string records =
      "{\"instruction\":\"How long to object?\",\"input\":\"\",\"output\":\"You must apply within 7 days.\"}\n"
      "{\"instruction\":\"Who responds?\",\"input\":\"\",\"output\":\"The department head responds within 15 days.\"}";
  const auto ex = render_prompt(tmpl(ids::kContextInjection), {{"SOURCE_TEXT", source}, {"RECORDS", records}});
  const auto r = parse_generated(mock_complete(ex, 9));
  ASSERT_EQ(r.records.size(), 2u);
  for (const auto& rec : r.records) {
    EXPECT_FALSE(rec.input.empty());
    EXPECT_NE(source.find(rec.input), std::string::npos) << rec.input;
  }
}

TEST(Mock, AdversarialOutputsAreRefusalsWithEvidence) {
  const auto ex = render_article(ids::kAdversarialSampling, kSixSentences, "Article 7 - Leave of Absence");
  const auto r = parse_generated(mock_complete(ex, 5));
  ASSERT_FALSE(r.records.empty());
  for (const auto& rec : r.records) {
    EXPECT_EQ(rec.output.rfind("No", 0), 0u) << rec.output;
    EXPECT_NE(kSixSentences.find(rec.input), std::string::npos);
  }
}

TEST(Mock, PhaseConformanceAndSafetyOverCorpus) {
  const auto doc = corpus::ingest_document(rdt::synthetic_regulation(20), "syn", "t");
  for (const auto& a : corpus::segment_articles(doc)) {
    if (!a.has_text()) continue;
    for (auto id : {ids::kRawConverter, ids::kSystem}) {
      const auto ex = id == ids::kSystem ? render_prompt(tmpl(id), {{"SOURCE_TEXT", std::string(a.evidence())}})
                                         : render_article(id, std::string(a.evidence()), a.heading);
      const auto r = parse_generated(mock_complete(ex, a.ordinal));
      EXPECT_GE(r.records.size(), 1u);
      for (const auto& rec : r.records) EXPECT_EQ(rec.input, "");
    }
    const auto gs = render_prompt(tmpl(ids::kGlobalSystem), {{"REFERENCE_TEXT", std::string(a.evidence())}});
    const auto r = parse_generated(mock_complete(gs, 2));
    EXPECT_GE(r.records.size(), 1u);
    for (const auto& rec : r.records) EXPECT_FALSE(rec.input.empty());
  }
}

TEST(Mock, UnknownMarkerRejected) {
  ChatExchange ex;
  ex.system = "no marker";
  ex.user = "text";
  try {
    mock_complete(ex, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownTemplateMarker);
  }
  ex.system = template_marker("made_up");
  EXPECT_THROW(mock_complete(ex, 1), Error);
}

TEST(TeacherClient, MockModeIsDeterministic) {
  TeacherConfig cfg;
  cfg.mode = TeacherMode::Mock;
  auto ex = render_article(ids::kRawConverter, kSixSentences, "Article 7");
  ex.params.seed = 1;
  EXPECT_EQ(complete(cfg, ex), complete(cfg, ex));
}
