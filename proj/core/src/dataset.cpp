#include "regdistill/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "regdistill/error.hpp"
#include "regdistill/random.hpp"
#include "regdistill/text.hpp"

namespace regdistill::dataset {

std::string_view to_string(DatasetPhase p) noexcept {
  switch (p) {
    case DatasetPhase::P1General: return "P1General";
    case DatasetPhase::P2Memorization: return "P2Memorization";
    case DatasetPhase::P3ContextAware: return "P3ContextAware";
  }
  return "P1General";
}

std::string_view to_string(RecordKind k) noexcept {
  switch (k) {
    case RecordKind::Normal: return "Normal";
    case RecordKind::Adversarial: return "Adversarial";
    case RecordKind::IdCard: return "IdCard";
  }
  return "Normal";
}

std::string_view to_string(RecordOrigin o) noexcept {
  switch (o) {
    case RecordOrigin::Teacher: return "Teacher";
    case RecordOrigin::Mock: return "Mock";
    case RecordOrigin::Imported: return "Imported";
  }
  return "Imported";
}

DatasetPhase phase_from_string(std::string_view s) {
  if (s == "P1General" || s == "1" || s == "p1") return DatasetPhase::P1General;
  if (s == "P2Memorization" || s == "2" || s == "p2") return DatasetPhase::P2Memorization;
  if (s == "P3ContextAware" || s == "3" || s == "p3") return DatasetPhase::P3ContextAware;
  throw Error(ErrorCode::InvalidArgument, "unknown phase '" + std::string(s) + "'");
}

RecordKind kind_from_string(std::string_view s) {
  if (s == "Normal") return RecordKind::Normal;
  if (s == "Adversarial") return RecordKind::Adversarial;
  if (s == "IdCard") return RecordKind::IdCard;
  throw Error(ErrorCode::InvalidArgument, "unknown record kind '" + std::string(s) + "'");
}

RecordOrigin origin_from_string(std::string_view s) {
  if (s == "Teacher") return RecordOrigin::Teacher;
  if (s == "Mock") return RecordOrigin::Mock;
  if (s == "Imported") return RecordOrigin::Imported;
  throw Error(ErrorCode::InvalidArgument, "unknown record origin '" + std::string(s) + "'");
}

std::string_view to_string(ViolationCode c) noexcept {
  switch (c) {
    case ViolationCode::EmptyInstruction: return "EmptyInstruction";
    case ViolationCode::EmptyOutput: return "EmptyOutput";
    case ViolationCode::InputMustBeEmpty: return "InputMustBeEmpty";
    case ViolationCode::InputMustCarryEvidence: return "InputMustCarryEvidence";
    case ViolationCode::EvidenceTooShort: return "EvidenceTooShort";
    case ViolationCode::AdversarialOutsidePhase3: return "AdversarialOutsidePhase3";
  }
  return "Unknown";
}

bool ValidationResult::has(ViolationCode c) const noexcept {
  return std::any_of(violations.begin(), violations.end(),
                     [c](const Violation& v) { return v.code == c; });
}

ValidationResult validate_record(const InstructionRecord& record, DatasetPhase phase,
                                 const ValidationOptions& opts) {
  ValidationResult r;
  if (text::is_blank(record.instruction)) {
    r.violations.push_back({ViolationCode::EmptyInstruction, "instruction must not be empty"});
  }
  if (text::is_blank(record.output)) {
    r.violations.push_back({ViolationCode::EmptyOutput, "output must not be empty"});
  }
  switch (phase) {
    case DatasetPhase::P1General:
      break;
    case DatasetPhase::P2Memorization:
      if (!record.input.empty()) {
        r.violations.push_back({ViolationCode::InputMustBeEmpty, "input must be empty"});
      }
      break;
    case DatasetPhase::P3ContextAware: {
      const auto evidence = text::trim(record.input);
      if (evidence.empty()) {
        r.violations.push_back(
            {ViolationCode::InputMustCarryEvidence, "input must carry evidence"});
      } else if (text::codepoint_count(evidence) < opts.min_evidence_chars) {
        r.violations.push_back({ViolationCode::EvidenceTooShort,
                                "input shorter than " + std::to_string(opts.min_evidence_chars) +
                                    " characters"});
      }
      break;
    }
  }
  if (record.meta.kind == RecordKind::Adversarial && phase != DatasetPhase::P3ContextAware) {
    r.violations.push_back({ViolationCode::AdversarialOutsidePhase3,
                            "adversarial records only exist in the context-aware phase"});
  }
  return r;
}

std::vector<std::string> word_shingles(std::string_view s, std::size_t width) {
  const auto toks = text::normalize_tokens(s);
  std::vector<std::string> out;
  if (toks.empty()) return out;
  auto join = [&](std::size_t b, std::size_t e) {
    std::string sh;
    for (std::size_t i = b; i < e; ++i) {
      if (i > b) sh.push_back('\x1f');
      sh += toks[i];
    }
    return sh;
  };
  if (toks.size() < width) {
    out.push_back(join(0, toks.size()));
  } else {
    for (std::size_t i = 0; i + width <= toks.size(); ++i) out.push_back(join(i, i + width));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  // both sorted and unique
  if (a.empty() && b.empty()) return 1.0;
  std::size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

DedupeResult dedupe(const std::vector<InstructionRecord>& records, double jaccard_threshold) {
  if (!(jaccard_threshold > 0.0 && jaccard_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "jaccard threshold must be in (0, 1]");
  }
  DedupeResult result;
  std::unordered_map<std::string, std::size_t> exact;  // normalized instruction -> kept index
  std::vector<std::vector<std::string>> kept_shingles;
  std::unordered_map<std::string, std::vector<std::size_t>> postings;  // shingle -> kept indices

  for (const auto& rec : records) {
    const auto norm = text::normalize(rec.instruction);
    if (auto it = exact.find(norm); it != exact.end()) {
      result.removed.emplace_back(rec.meta.record_id, result.kept[it->second].meta.record_id);
      continue;
    }
    auto sh = word_shingles(rec.instruction);
    // A pair with no shared shingle has similarity 0, below any valid threshold.
    std::vector<std::size_t> candidates;
    for (const auto& s : sh) {
      if (auto p = postings.find(s); p != postings.end()) {
        candidates.insert(candidates.end(), p->second.begin(), p->second.end());
      }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    std::optional<std::size_t> dup;
    for (auto c : candidates) {
      if (jaccard(sh, kept_shingles[c]) >= jaccard_threshold) {
        dup = c;
        break;
      }
    }
    if (dup) {
      result.removed.emplace_back(rec.meta.record_id, result.kept[*dup].meta.record_id);
      continue;
    }
    const std::size_t idx = result.kept.size();
    exact.emplace(norm, idx);
    for (const auto& s : sh) postings[s].push_back(idx);
    kept_shingles.push_back(std::move(sh));
    result.kept.push_back(rec);
  }
  return result;
}

SplitResult split_dataset(const std::vector<InstructionRecord>& records, double train_fraction,
                          std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "train fraction must be in (0, 1)");
  }
  if (records.size() < 2) throw Error(ErrorCode::TooFew, "need at least 2 records to split");
  const auto n = records.size();
  // The epsilon keeps products such as 0.29 * 100 from flooring to 28.
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction + 1e-9));
  const auto perm = seeded_permutation(n, seed);
  SplitResult out;
  out.train.reserve(n_train);
  out.eval.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? out.train : out.eval).push_back(records[perm[i]]);
  }
  return out;
}

namespace {

LengthStats length_stats(std::vector<std::size_t> lengths) {
  LengthStats s;
  if (lengths.empty()) return s;
  double sum = 0.0;
  for (auto l : lengths) sum += static_cast<double>(l);
  s.mean = sum / static_cast<double>(lengths.size());
  std::sort(lengths.begin(), lengths.end());
  const auto n = lengths.size();
  s.median = n % 2 ? static_cast<double>(lengths[n / 2])
                   : (static_cast<double>(lengths[n / 2 - 1]) + static_cast<double>(lengths[n / 2])) / 2.0;
  return s;
}

}  // namespace

DatasetStats compute_stats(const std::vector<InstructionRecord>& records) {
  DatasetStats st;
  st.record_count = records.size();
  if (records.empty()) return st;
  std::vector<std::size_t> li, ln, lo;
  std::size_t empty_input = 0, adversarial = 0;
  for (const auto& r : records) {
    li.push_back(text::codepoint_count(r.instruction));
    ln.push_back(text::codepoint_count(r.input));
    lo.push_back(text::codepoint_count(r.output));
    if (r.input.empty()) ++empty_input;
    if (r.meta.kind == RecordKind::Adversarial) ++adversarial;
    if (!r.meta.source_doc.empty() && r.meta.source_ordinal) {
      ++st.per_source[r.meta.source_doc + "#" + std::to_string(*r.meta.source_ordinal)];
    } else {
      ++st.sourceless;
    }
  }
  st.instruction = length_stats(std::move(li));
  st.input = length_stats(std::move(ln));
  st.output = length_stats(std::move(lo));
  const auto n = static_cast<double>(records.size());
  st.empty_input_fraction = static_cast<double>(empty_input) / n;
  st.adversarial_fraction = static_cast<double>(adversarial) / n;
  return st;
}

std::string stats_json(const DatasetStats& s) {
  nlohmann::ordered_json j;
  j["record_count"] = s.record_count;
  auto lens = [](const LengthStats& l) {
    nlohmann::ordered_json o;
    o["mean"] = l.mean;
    o["median"] = l.median;
    return o;
  };
  j["instruction_length"] = lens(s.instruction);
  j["input_length"] = lens(s.input);
  j["output_length"] = lens(s.output);
  j["empty_input_fraction"] = s.empty_input_fraction;
  j["adversarial_fraction"] = s.adversarial_fraction;
  j["per_source"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.per_source) j["per_source"][k] = v;
  j["sourceless"] = s.sourceless;
  return j.dump(2) + "\n";
}

}  // namespace regdistill::dataset
