#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "stub_server.hpp"
#include "regdistill/audit.hpp"
#include "regdistill/corpus.hpp"
#include "regdistill/error.hpp"
#include "regdistill/eval.hpp"
#include "regdistill/generate.hpp"

using namespace regdistill;
namespace rdt = regdistill::testing;
using namespace regdistill::generate;
using dataset::RecordKind;

namespace {

teacher::TeacherConfig mock_config() {
  teacher::TeacherConfig c;
  c.mode = teacher::TeacherMode::Mock;
  return c;
}

corpus::CorpusIndex index_of(const std::string& text, const std::string& id = "syn") {
  return corpus::CorpusIndex(corpus::segment_articles(corpus::ingest_document(text, id, "t")));
}

const corpus::CorpusIndex& sample() {
  static const auto idx = [] {
    const auto doc = corpus::ingest_file((rdt::data_dir() / "corpus/sample_regulation.txt").string(), "sample");
    return corpus::CorpusIndex(corpus::segment_articles(doc));
  }();
  return idx;
}

GenerationPlan p2_plan(std::size_t target) {
  GenerationPlan p;
  p.phase = dataset::DatasetPhase::P2Memorization;
  p.target_size = target;
  return p;
}

}  // namespace

TEST(Plan, Validation) {
  GenerationPlan p;
  EXPECT_NO_THROW(p.validate());
  p.adversarial_fraction = 1.0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.per_article_range = {8, 5};
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.target_size = 0;
  EXPECT_THROW(p.validate(), Error);
  EXPECT_EQ(injection_mode_from_string("teacher"), InjectionMode::TeacherAssisted);
  EXPECT_THROW(injection_mode_from_string("bogus"), Error);
}

TEST(Phase2, TenArticleRunMeetsBounds) {
  const auto idx = index_of(rdt::synthetic_regulation(10));
  std::vector<corpus::Article> arts;
  for (const auto& a : idx.articles()) {
    if (!a.heading.empty()) arts.push_back(a);
  }
  ASSERT_EQ(arts.size(), 10u);
  const auto res = generate_phase2(arts, mock_config(), p2_plan(60));
  EXPECT_GE(res.counts.candidates, 50u);
  EXPECT_LE(res.counts.candidates, 120u);
  EXPECT_GE(res.records.size(), 50u);
  EXPECT_FALSE(res.insufficient_yield);
  std::set<std::string> ids;
  for (const auto& r : res.records) {
    EXPECT_EQ(r.input, "");
    EXPECT_TRUE(ids.insert(r.meta.record_id).second);
    EXPECT_EQ(r.meta.phase, dataset::DatasetPhase::P2Memorization);
    ASSERT_TRUE(r.meta.source_ordinal.has_value());
  }
}

TEST(Phase2, SingleArticleBoundary) {
  const auto& arts = sample().articles();
  const auto res = generate_phase2({arts[3]}, mock_config(), p2_plan(5));
  EXPECT_TRUE(res.records.size() >= 5 || res.insufficient_yield);
  const auto big = generate_phase2({arts[3]}, mock_config(), p2_plan(100));
  EXPECT_TRUE(big.insufficient_yield);
  EXPECT_FALSE(big.records.empty());
}

TEST(Phase2, RejectsWrongPhasePlan) {
  GenerationPlan p;
  EXPECT_THROW(generate_phase2(sample().articles(), mock_config(), p), Error);
}

TEST(Cards, QueriesFromInformationCards) {
  teacher::Teacher t(mock_config());
  const auto res = generate_from_cards({{"staff-1", "Name: Dr. Ayse Kaya, Ext: 4411, Office: A-12"}}, t,
                                       p2_plan(6));
  EXPECT_GE(res.records.size(), 6u);
  for (const auto& r : res.records) {
    EXPECT_EQ(r.input, "");
    EXPECT_EQ(r.meta.kind, RecordKind::IdCard);
  }
}

TEST(Inject, LexicalUsesSupportingArticleBody) {
  InstructionRecord r;
  r.meta.record_id = "q1";
  r.instruction = "How long do I have to object to a grade?";
  r.output = "You must apply within 7 days.";
  InstructionRecord none = r;
  none.meta.record_id = "q2";
  none.output = "Parking permits cost nothing.";
  GenerationPlan plan;
  const auto res = inject_context({r, none}, sample(), mock_config(), plan);
  ASSERT_EQ(res.records.size(), 1u);
  const auto* art = sample().find("sample", 7);
  ASSERT_NE(art, nullptr);
  EXPECT_EQ(res.records[0].input, art->evidence());
  EXPECT_EQ(res.unsupported, std::vector<std::string>{"q2"});
  EXPECT_TRUE(dataset::validate_record(res.records[0], dataset::DatasetPhase::P3ContextAware).ok());
}

TEST(Inject, TeacherAssistedInputsAreVerbatim) {
  const auto& arts = sample().articles();
  const auto qa = generate_phase2(arts, mock_config(), p2_plan(40));
  GenerationPlan plan;
  plan.injection = InjectionMode::TeacherAssisted;
  const auto res = inject_context(qa.records, sample(), mock_config(), plan);
  ASSERT_FALSE(res.records.empty());
  EXPECT_GT(res.requests, 0u);
  for (const auto& r : res.records) {
    EXPECT_TRUE(sample().contains_verbatim(r.input)) << r.input;
    EXPECT_TRUE(dataset::validate_record(r, dataset::DatasetPhase::P3ContextAware).ok());
  }
  EXPECT_EQ(res.records.size() + res.unsupported.size(), qa.records.size());
}

TEST(Adversarial, RefusalsGroundedInCorpus) {
  GenerationPlan plan;
  const auto res = generate_adversarial(sample().articles(), sample(), mock_config(), plan);
  ASSERT_FALSE(res.records.empty());
  bool mail = false;
  for (const auto& r : res.records) {
    EXPECT_TRUE(eval::detect_rejection(r.output)) << r.output;
    EXPECT_TRUE(sample().contains_verbatim(r.input));
    EXPECT_TRUE(dataset::validate_record(r, dataset::DatasetPhase::P3ContextAware).ok());
    EXPECT_EQ(r.meta.kind, RecordKind::Adversarial);
    EXPECT_EQ(r.output.rfind("No, ", 0), 0u);
    mail |= r.output.find("Registration cannot be done by mail.") != std::string::npos;
  }
  EXPECT_TRUE(mail);
}

TEST(Adversarial, AffirmativeCandidatesFiltered) {
  // Every teacher answer is affirmative, so nothing survives the refusal filter.
  rdt::StubChatServer::Options o;
  o.hold_ms = 1;
  o.responder = [](const std::string&, const std::string&) {
    return std::string(
        "{\"instruction\":\"Can I register by mail?\",\"input\":\"Registration cannot be done by mail.\","
        "\"output\":\"Yes, you can.\"}");
  };
  rdt::StubChatServer server(o);
  ::setenv("REGDISTILL_TEST_KEY", "k", 1);
  auto cfg = mock_config();
  cfg.mode = teacher::TeacherMode::Remote;
  cfg.endpoint_url = server.url();
  cfg.api_key_env_var = "REGDISTILL_TEST_KEY";
  GenerationPlan plan;
  const auto res = generate_adversarial({sample().articles()[3]}, sample(), cfg, plan);
  EXPECT_TRUE(res.records.empty());
  EXPECT_EQ(res.counts.candidates, 1u);
  EXPECT_EQ(res.counts.invalid, 1u);
}

TEST(Adversarial, TeacherOutageSurfacesAsTeacherUnavailable) {
  rdt::StubChatServer::Options o;
  o.status_override = 500;
  o.hold_ms = 1;
  rdt::StubChatServer server(o);
  ::setenv("REGDISTILL_TEST_KEY", "k", 1);
  auto cfg = mock_config();
  cfg.mode = teacher::TeacherMode::Remote;
  cfg.endpoint_url = server.url();
  cfg.api_key_env_var = "REGDISTILL_TEST_KEY";
  cfg.retry = {2, 1, 2};
  try {
    generate_adversarial({sample().articles()[3]}, sample(), cfg, GenerationPlan{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TeacherUnavailable);
  }
}

TEST(Build, SmallCorpusFlagsInsufficientYield) {
  const auto idx = index_of(rdt::synthetic_regulation(2));
  GenerationPlan plan;
  plan.target_size = 10;
  plan.adversarial_fraction = 0.2;
  const auto small = build_phase3(idx, mock_config(), plan);
  EXPECT_EQ(small.records.size(), 10u);
  plan.target_size = 500;
  const auto res = build_phase3(idx, mock_config(), plan);
  EXPECT_TRUE(res.report.insufficient_yield);
  EXPECT_LT(res.records.size(), 500u);
  EXPECT_FALSE(res.report.warnings.empty());
}

TEST(Build, PhasePurityDeterminismAndReport) {
  const auto idx = index_of(rdt::synthetic_regulation(20));
  GenerationPlan plan;
  plan.target_size = 120;
  const auto a = build_phase3(idx, mock_config(), plan);
  const auto b = build_phase3(idx, mock_config(), plan);
  ASSERT_EQ(a.records.size(), 120u);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].meta.record_id, b.records[i].meta.record_id);
  }
  EXPECT_EQ(dataset::write_jsonl(a.records), dataset::write_jsonl(b.records));
  std::size_t adv = 0;
  for (const auto& r : a.records) {
    EXPECT_FALSE(r.input.empty());
    EXPECT_TRUE(idx.contains_verbatim(r.input));
    if (r.meta.kind == RecordKind::Adversarial) {
      ++adv;
      EXPECT_TRUE(eval::detect_rejection(r.output));
    }
  }
  EXPECT_EQ(adv, 24u);
  EXPECT_EQ(audit::audit_phase3(a.records).counts.deleted, 0u);
  EXPECT_EQ(a.report.selected_normal + a.report.selected_adversarial, 120u);
  EXPECT_EQ(a.report.deduped_in, a.report.qa.kept - a.report.unsupported + a.report.adversarial.kept);
  const auto json = build_report_json(a.report);
  EXPECT_NE(json.find("\"selected_adversarial\": 24"), std::string::npos);

  GenerationPlan other = plan;
  other.seed = 7;
  const auto c = build_phase3(idx, mock_config(), other);
  EXPECT_NE(dataset::write_jsonl(c.records), dataset::write_jsonl(a.records));
}

TEST(Build, RemoteTeacherMatchesMockThroughStub) {
  // A stub that answers with the mock teacher proves the remote path plumbs
  // seeds and prompts exactly as the offline path does.
  rdt::StubChatServer::Options o;
  o.hold_ms = 0;
  o.responder = [](const std::string& system, const std::string& user) {
    teacher::ChatExchange ex;
    ex.system = system;
    ex.user = user;
    return teacher::mock_complete(ex, 0);
  };
  rdt::StubChatServer server(o);
  ::setenv("REGDISTILL_TEST_KEY", "k", 1);
  auto cfg = mock_config();
  cfg.mode = teacher::TeacherMode::Remote;
  cfg.endpoint_url = server.url();
  cfg.api_key_env_var = "REGDISTILL_TEST_KEY";
  GenerationPlan plan;
  plan.target_size = 40;
  const auto res = build_phase3(sample(), cfg, plan);
  EXPECT_EQ(res.records.size(), 40u);
  EXPECT_LE(server.peak_in_flight(), cfg.max_concurrent_requests);
}
