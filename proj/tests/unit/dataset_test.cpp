#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include <json.hpp>

#include "fixtures.hpp"
#include "regdistill/dataset.hpp"
#include "regdistill/error.hpp"
#include "regdistill/text.hpp"

using namespace regdistill;
namespace rdt = regdistill::testing;
using namespace regdistill::dataset;

namespace {

InstructionRecord rec(std::string id, std::string instr, std::string input, std::string output,
                      DatasetPhase phase = DatasetPhase::P1General) {
  InstructionRecord r;
  r.instruction = std::move(instr);
  r.input = std::move(input);
  r.output = std::move(output);
  r.meta.record_id = std::move(id);
  r.meta.phase = phase;
  return r;
}

// All-pairs reference: a record is removed when some earlier surviving record
// has the same normalized instruction or shingle Jaccard >= threshold.
std::vector<std::pair<std::string, std::string>> brute_dedupe(const std::vector<InstructionRecord>& rs,
                                                              double threshold) {
  auto shingles = [](const std::string& s) {
    const auto t = text::normalize_tokens(s);
    std::set<std::vector<std::string>> out;
    if (t.size() < 3) {
      if (!t.empty()) out.insert(t);
    } else {
      for (std::size_t i = 0; i + 3 <= t.size(); ++i) out.insert({t[i], t[i + 1], t[i + 2]});
    }
    return out;
  };
  std::vector<std::size_t> kept;
  std::vector<std::pair<std::string, std::string>> removed;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto si = shingles(rs[i].instruction);
    bool dup = false;
    for (auto k : kept) {
      const auto sk = shingles(rs[k].instruction);
      std::size_t inter = 0;
      for (const auto& s : si) inter += sk.count(s);
      const double uni = static_cast<double>(si.size() + sk.size() - inter);
      const double j = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
      if (text::normalize(rs[i].instruction) == text::normalize(rs[k].instruction) || j >= threshold) {
        removed.emplace_back(rs[i].meta.record_id, rs[k].meta.record_id);
        dup = true;
        break;
      }
    }
    if (!dup) kept.push_back(i);
  }
  return removed;
}

}  // namespace

TEST(Jsonl, ParsesSingleLine) {
  const auto r = parse_jsonl("{\"instruction\":\"Q\",\"input\":\"\",\"output\":\"A\"}\n", ParseMode::Strict);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_TRUE(r.diagnostics.empty());
  EXPECT_EQ(r.records[0].instruction, "Q");
}

TEST(Jsonl, StrictRejectsWrongCaseKey) {
  try {
    parse_jsonl("{\"Instruction\":\"Q\",\"input\":\"\",\"output\":\"A\"}", ParseMode::Strict);
    FAIL();
  } catch (const MalformedLineError& e) {
    EXPECT_EQ(e.line_no(), 1u);
    EXPECT_NE(e.reason().find("unknown key"), std::string::npos);
  }
}

TEST(Jsonl, StrictRejectsNonStringsAndExtraKeys) {
  EXPECT_THROW(parse_jsonl("{\"instruction\":1,\"input\":\"\",\"output\":\"A\"}", ParseMode::Strict),
               MalformedLineError);
  EXPECT_THROW(parse_jsonl("{\"instruction\":\"Q\",\"input\":\"\",\"output\":\"A\",\"x\":\"\"}",
                           ParseMode::Strict),
               MalformedLineError);
  EXPECT_THROW(parse_jsonl("[1,2]", ParseMode::Strict), MalformedLineError);
}

TEST(Jsonl, LenientCollectsDiagnostics) {
  const std::string bytes =
      "{\"instruction\":\"a\",\"input\":\"\",\"output\":\"1\"}\n"
      "{\"instruction\":\"b\",\"input\":\"\",\"output\":\"2\"}\n"
      "{\"instruction\":\"c\",\"input\":\"\",\"outp\n"
      "{\"instruction\":\"d\",\"input\":\"\",\"output\":\"4\"}\n";
  const auto r = parse_jsonl(bytes, ParseMode::Lenient);
  EXPECT_EQ(r.records.size(), 3u);
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].line_no, 3u);
}

TEST(Jsonl, WriteEmptyAndEscapedNewline) {
  EXPECT_EQ(write_jsonl({}), "");
  const auto out = write_jsonl({rec("1", "Q", "", "line one\nline two")});
  EXPECT_EQ(out, "{\"instruction\":\"Q\",\"input\":\"\",\"output\":\"line one\\nline two\"}\n");
  EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 1);
}

TEST(Jsonl, MinimalEscaping) {
  const auto line = to_json_line(rec("1", "\"q\"\\/", "", "\xc3\xa7\x01\x7f"));
  EXPECT_EQ(line, "{\"instruction\":\"\\\"q\\\"\\\\/\",\"input\":\"\",\"output\":\"\xc3\xa7\\u0001\x7f\"}");
}

TEST(Jsonl, WriteRejectsInvalidRecord) {
  try {
    write_jsonl({rec("7", "Q", "Article 5 text", "A", DatasetPhase::P2Memorization)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidRecord);
  }
}

TEST(Jsonl, RoundTripAndFixedPointOnRandomRecords) {
  SeededRng rng(2024);
  for (auto phase : {DatasetPhase::P1General, DatasetPhase::P2Memorization, DatasetPhase::P3ContextAware}) {
    const auto rs = rdt::random_records(rng, 300, phase);
    const auto bytes = write_jsonl(rs);
    const auto back = parse_jsonl(bytes, ParseMode::Strict, phase);
    ASSERT_EQ(back.records.size(), rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) EXPECT_TRUE(back.records[i].same_fields(rs[i])) << i;
    EXPECT_EQ(write_jsonl(back.records), bytes);
    // Output is also valid JSON for an independent parser.
    std::size_t pos = 0;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const auto nl = bytes.find('\n', pos);
      const auto j = nlohmann::json::parse(bytes.substr(pos, nl - pos));
      EXPECT_EQ(j["output"].get<std::string>(), rs[i].output);
      pos = nl + 1;
    }
  }
}

TEST(Validate, PhaseRules) {
  auto v = validate_record(rec("1", "Q", "Article 5 text", "A"), DatasetPhase::P2Memorization);
  EXPECT_TRUE(v.has(ViolationCode::InputMustBeEmpty));
  v = validate_record(rec("1", "Q", "", "A"), DatasetPhase::P3ContextAware);
  EXPECT_TRUE(v.has(ViolationCode::InputMustCarryEvidence));
  EXPECT_TRUE(validate_record(rec("1", "Q", "", "A"), DatasetPhase::P2Memorization).ok());
  v = validate_record(rec("1", "Q", "too short", "A"), DatasetPhase::P3ContextAware);
  EXPECT_TRUE(v.has(ViolationCode::EvidenceTooShort));
  v = validate_record(rec("1", " ", "", ""), DatasetPhase::P2Memorization);
  EXPECT_TRUE(v.has(ViolationCode::EmptyInstruction));
  EXPECT_TRUE(v.has(ViolationCode::EmptyOutput));
  auto adv = rec("1", "Q", "", "A");
  adv.meta.kind = RecordKind::Adversarial;
  EXPECT_TRUE(validate_record(adv, DatasetPhase::P2Memorization).has(ViolationCode::AdversarialOutsidePhase3));
}

TEST(Validate, PhaseTwoValidIffInputEmpty) {
  SeededRng rng(3);
  for (int i = 0; i < 500; ++i) {
    auto r = rec("x", "Q " + rdt::random_text(rng, 20), "", "A");
    if (rng.below(2)) r.input = rdt::random_text(rng, 40);
    EXPECT_EQ(validate_record(r, DatasetPhase::P2Memorization).ok(), r.input.empty());
    if (validate_record(r, DatasetPhase::P3ContextAware).ok()) EXPECT_FALSE(r.input.empty());
  }
}

TEST(Dedupe, ExactAndThresholdOne) {
  auto d = dedupe({rec("1", "Same question?", "", "A"), rec("2", "Same question?", "", "A")});
  ASSERT_EQ(d.removed.size(), 1u);
  EXPECT_EQ(d.removed[0], std::make_pair(std::string("2"), std::string("1")));
  d = dedupe({rec("1", "alpha beta gamma", "", "A"), rec("2", "delta epsilon zeta", "", "A")}, 1.0);
  EXPECT_TRUE(d.removed.empty());
  EXPECT_THROW(dedupe({}, 0.0), Error);
}

TEST(Dedupe, MatchesAllPairsOracleOnParaphraseFixture) {
  const std::vector<InstructionRecord> rs = {
      rec("1", "How many days do I have to object to an exam grade after it is announced?", "", "a"),
      rec("2", "How many days do I have to object to an exam grade after it is announced", "", "a"),
      rec("3", "Can I register for courses by mail?", "", "a"),
      rec("4", "What GPA lets me take courses from the next semester?", "", "a"),
      rec("5", "How long can a leave of absence last in total?", "", "a"),
      rec("6", "can i register for courses by mail", "", "a"),
      rec("7", "Who answers grade objections?", "", "a"),
      rec("8", "How long does the department head take to answer an objection?", "", "a"),
      rec("9", "What is the make-up exam deadline?", "", "a"),
      rec("10", "How many ECTS credits must a student take per semester?", "", "a"),
  };
  const auto d = dedupe(rs, 0.9);
  EXPECT_EQ(d.removed, brute_dedupe(rs, 0.9));
  EXPECT_EQ(d.removed.size(), 2u);
}

TEST(Dedupe, OracleAndIdempotenceOnRandomFixtures) {
  SeededRng rng(99);
  const std::vector<std::string> words = {"grade", "exam", "days", "apply", "register", "mail",
                                          "course", "credit", "leave", "board"};
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<InstructionRecord> rs;
    for (int i = 0; i < 30; ++i) {
      std::string s;
      const auto n = 2 + rng.below(6);
      for (std::uint64_t k = 0; k < n; ++k) s += words[rng.below(words.size())] + " ";
      rs.push_back(rec(std::to_string(i), s, "", "a"));
    }
    for (double th : {0.5, 0.9, 1.0}) {
      const auto d = dedupe(rs, th);
      EXPECT_EQ(d.removed, brute_dedupe(rs, th));
      EXPECT_TRUE(dedupe(d.kept, th).removed.empty());
    }
  }
}

TEST(Split, SizesDeterminismAndPartition) {
  std::vector<InstructionRecord> rs;
  for (int i = 0; i < 500; ++i) rs.push_back(rec(std::to_string(i), "Q" + std::to_string(i), "", "A"));
  auto s = split_dataset(rs, 0.9, 42);
  EXPECT_EQ(s.train.size(), 450u);
  EXPECT_EQ(s.eval.size(), 50u);
  std::set<std::string> ids;
  for (const auto& r : s.train) ids.insert(r.meta.record_id);
  for (const auto& r : s.eval) EXPECT_TRUE(ids.insert(r.meta.record_id).second);
  EXPECT_EQ(ids.size(), rs.size());

  std::vector<InstructionRecord> ten(rs.begin(), rs.begin() + 10);
  const auto a = split_dataset(ten, 0.8, 7);
  const auto b = split_dataset(ten, 0.8, 7);
  ASSERT_EQ(a.train.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(a.train[i].meta.record_id, b.train[i].meta.record_id);
  const auto c = split_dataset(ten, 0.8, 8);
  bool differs = false;
  for (std::size_t i = 0; i < 8; ++i) differs |= a.train[i].meta.record_id != c.train[i].meta.record_id;
  EXPECT_TRUE(differs);
}

TEST(Split, Errors) {
  try {
    split_dataset({rec("1", "Q", "", "A")}, 0.5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFew);
  }
  EXPECT_THROW(split_dataset({rec("1", "Q", "", "A"), rec("2", "R", "", "A")}, 1.0, 1), Error);
}

TEST(Stats, FractionsAndSources) {
  EXPECT_EQ(compute_stats({}).record_count, 0u);
  std::vector<InstructionRecord> rs;
  for (int i = 0; i < 2000; ++i) {
    auto r = rec(std::to_string(i), "Q", "", "A", DatasetPhase::P2Memorization);
    if (i % 2 == 0) {
      r.meta.source_doc = "d";
      r.meta.source_ordinal = static_cast<std::size_t>(i % 5);
    }
    rs.push_back(r);
  }
  const auto st = compute_stats(rs);
  EXPECT_EQ(st.record_count, 2000u);
  EXPECT_DOUBLE_EQ(st.empty_input_fraction, 1.0);
  std::size_t sum = st.sourceless;
  for (const auto& [k, v] : st.per_source) sum += v;
  EXPECT_EQ(sum, st.record_count);

  std::vector<InstructionRecord> p3;
  for (int i = 0; i < 500; ++i) {
    auto r = rec(std::to_string(i), "Q", "Evidence text long enough to pass", "A", DatasetPhase::P3ContextAware);
    if (i < 100) r.meta.kind = RecordKind::Adversarial;
    p3.push_back(r);
  }
  const auto s3 = compute_stats(p3);
  EXPECT_EQ(s3.record_count, 500u);
  EXPECT_DOUBLE_EQ(s3.empty_input_fraction, 0.0);
  EXPECT_DOUBLE_EQ(s3.adversarial_fraction, 0.2);
  EXPECT_NE(stats_json(s3).find("\"record_count\": 500"), std::string::npos);
}

TEST(Stats, MedianOfEvenCount) {
  const auto st = compute_stats({rec("1", "ab", "", "x"), rec("2", "abcd", "", "x")});
  EXPECT_DOUBLE_EQ(st.instruction.mean, 3.0);
  EXPECT_DOUBLE_EQ(st.instruction.median, 3.0);
}

TEST(Meta, SidecarRoundTrip) {
  auto r = rec("a:1:qa:0", "Q", "", "A", DatasetPhase::P2Memorization);
  r.meta.source_doc = "doc";
  r.meta.source_ordinal = 3;
  r.meta.origin = RecordOrigin::Mock;
  auto q = rec("a:1:qa:1", "Q2", "", "A", DatasetPhase::P2Memorization);
  const auto json = write_meta_json({r, q});
  auto parsed = parse_jsonl(write_jsonl({r, q}), ParseMode::Strict);
  attach_meta(parsed.records, json);
  EXPECT_EQ(parsed.records[0].meta, r.meta);
  EXPECT_EQ(parsed.records[1].meta, q.meta);
}
