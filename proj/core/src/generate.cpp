#include "regdistill/generate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "regdistill/error.hpp"
#include "regdistill/eval.hpp"
#include "regdistill/random.hpp"

namespace regdistill::generate {
namespace {

using dataset::RecordKind;
using dataset::RecordOrigin;

const std::vector<teacher::PromptTemplate>& templates(const GenerationPlan& plan) {
  static const auto builtin = teacher::registry();
  return plan.templates ? *plan.templates : builtin;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results land in
// index order; the first failure by index is rethrown.
template <typename T>
std::vector<T> parallel_map(std::size_t n, int workers, const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    run();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(run);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

RecordOrigin origin_of(const teacher::Teacher& t) {
  return t.config().mode == teacher::TeacherMode::Mock ? RecordOrigin::Mock : RecordOrigin::Teacher;
}

std::uint64_t request_seed(std::uint64_t seed, std::string_view stage, std::string_view source) {
  return mix_seed(seed, fnv1a(std::string(stage) + "|" + std::string(source)));
}

/// nullopt on an empty completion; transport failures become TeacherUnavailable.
std::optional<std::string> ask(teacher::Teacher& t, const teacher::ChatExchange& ex) {
  try {
    return t.complete(ex);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyCompletion) return std::nullopt;
    if (is_transport_error(e.code())) throw Error(ErrorCode::TeacherUnavailable, e.what());
    throw;
  }
}

std::string heading_label(const Article& a) {
  if (!a.heading.empty()) return std::string(text::trim(a.heading));
  return a.article_id;
}

struct SourceOutput {
  bool empty_completion = false;
  teacher::GeneratedParse parsed;
};

void merge_counts(StageCounts& c, const SourceOutput& s) {
  ++c.sources;
  if (s.empty_completion) ++c.empty_completions;
  c.candidates += s.parsed.records.size();
  c.parse_rejected += s.parsed.rejected.size();
  c.repaired += s.parsed.repaired.size();
}

std::vector<std::size_t> usable(const std::vector<Article>& articles) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < articles.size(); ++i) {
    if (articles[i].has_text()) idx.push_back(i);
  }
  return idx;
}

// Calls `tmpl` once per article (waves of max_concurrent_requests) and hands
// each parsed output to `accept` in article order until it returns false.
void per_article(const std::vector<Article>& articles, teacher::Teacher& teacher,
                 const GenerationPlan& plan, std::string_view template_id, StageCounts& counts,
                 const std::function<bool(const Article&, SourceOutput&)>& accept) {
  const auto& tmpl = teacher::find_template(templates(plan), template_id);
  const auto idx = usable(articles);
  const auto wave = static_cast<std::size_t>(std::max(1, teacher.config().max_concurrent_requests));
  for (std::size_t start = 0; start < idx.size(); start += wave) {
    const auto n = std::min(wave, idx.size() - start);
    auto outputs = parallel_map<SourceOutput>(
        n, static_cast<int>(wave), [&](std::size_t i) {
          const auto& a = articles[idx[start + i]];
          teacher::RenderOptions ro;
          ro.seed = request_seed(plan.seed, template_id,
                                 fmt::format("{}#{}", a.doc_id, a.ordinal));
          auto ex = teacher::render_prompt(
              tmpl, {{"ARTICLE_TEXT", std::string(a.evidence())}, {"ARTICLE_HEADING", heading_label(a)}},
              ro);
          SourceOutput out;
          if (auto raw = ask(teacher, ex)) {
            out.parsed = teacher::parse_generated(*raw);
          } else {
            out.empty_completion = true;
          }
          return out;
        });
    for (std::size_t i = 0; i < n; ++i) {
      merge_counts(counts, outputs[i]);
      if (!accept(articles[idx[start + i]], outputs[i])) return;
    }
  }
}

void stamp(InstructionRecord& r, std::string id, DatasetPhase phase, const Article& a,
           RecordKind kind, RecordOrigin origin) {
  r.meta.record_id = std::move(id);
  r.meta.phase = phase;
  r.meta.source_doc = a.doc_id;
  r.meta.source_ordinal = a.ordinal;
  r.meta.kind = kind;
  r.meta.origin = origin;
}

// Memorization Q&A from every article, up to `limit` records in total.
GenerationResult collect_qa(const std::vector<Article>& articles, teacher::Teacher& teacher,
                            const GenerationPlan& plan, std::size_t limit) {
  GenerationResult res;
  const auto origin = origin_of(teacher);
  per_article(articles, teacher, plan, teacher::ids::kRawConverter, res.counts,
              [&](const Article& a, SourceOutput& out) {
                std::size_t k = 0;
                for (auto& r : out.parsed.records) {
                  if (!dataset::validate_record(r, DatasetPhase::P2Memorization).ok()) {
                    ++res.counts.invalid;
                    continue;
                  }
                  if (k >= plan.per_article_range.second) {
                    ++res.counts.capped;
                    continue;
                  }
                  stamp(r, fmt::format("{}:{}:qa:{}", a.doc_id, a.ordinal, ++k),
                        DatasetPhase::P2Memorization, a, RecordKind::Normal, origin);
                  res.records.push_back(std::move(r));
                  if (res.records.size() >= limit) return false;
                }
                if (k < plan.per_article_range.first) {
                  res.warnings.push_back(fmt::format("{}#{}: {} records, below minimum {}",
                                                     a.doc_id, a.ordinal, k,
                                                     plan.per_article_range.first));
                }
                return true;
              });
  res.counts.kept = res.records.size();
  return res;
}

InjectionResult inject_lexical(const std::vector<InstructionRecord>& records,
                               const CorpusIndex& index, const GenerationPlan& plan) {
  InjectionResult res;
  for (const auto& rec : records) {
    InstructionRecord r = rec;
    std::vector<corpus::ArticleHit> hits;
    if (!text::content_tokens(r.output, index.lexicons()).empty()) {
      hits = corpus::find_supporting_article(index, r.output, 1);
    }
    if (hits.empty() || hits.front().score < plan.grounding_threshold) {
      res.unsupported.push_back(r.meta.record_id);
      continue;
    }
    const auto& a = index.articles()[hits.front().position];
    r.input = std::string(a.evidence());
    r.meta.phase = DatasetPhase::P3ContextAware;
    r.meta.source_doc = a.doc_id;
    r.meta.source_ordinal = a.ordinal;
    if (!dataset::validate_record(r, DatasetPhase::P3ContextAware).ok()) {
      res.unsupported.push_back(r.meta.record_id);
      continue;
    }
    res.records.push_back(std::move(r));
  }
  return res;
}

InjectionResult inject_assisted(const std::vector<InstructionRecord>& records,
                                const CorpusIndex& index, teacher::Teacher& teacher,
                                const GenerationPlan& plan) {
  // Group records by the article that will be offered as SOURCE TEXT.
  std::vector<std::size_t> source(records.size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& m = records[i].meta;
    if (m.source_ordinal) {
      if (const auto* a = index.find(m.source_doc, *m.source_ordinal)) {
        source[i] = static_cast<std::size_t>(a - index.articles().data());
        continue;
      }
    }
    if (!text::content_tokens(records[i].output, index.lexicons()).empty()) {
      source[i] = corpus::find_supporting_article(index, records[i].output, 1).front().position;
    }
  }
  std::vector<std::size_t> groups;  // article positions in first-seen order
  for (auto s : source) {
    if (s != std::numeric_limits<std::size_t>::max() &&
        std::find(groups.begin(), groups.end(), s) == groups.end()) {
      groups.push_back(s);
    }
  }

  const auto& tmpl = teacher::find_template(templates(plan), teacher::ids::kContextInjection);
  auto outputs = parallel_map<std::vector<InstructionRecord>>(
      groups.size(), teacher.config().max_concurrent_requests, [&](std::size_t g) {
        const auto& a = index.articles()[groups[g]];
        std::string lines;
        for (std::size_t i = 0; i < records.size(); ++i) {
          if (source[i] != groups[g]) continue;
          auto blank = records[i];
          blank.input.clear();
          lines += dataset::to_json_line(blank) + "\n";
        }
        if (!lines.empty()) lines.pop_back();
        teacher::RenderOptions ro;
        ro.seed = request_seed(plan.seed, teacher::ids::kContextInjection,
                               fmt::format("{}#{}", a.doc_id, a.ordinal));
        auto ex = teacher::render_prompt(
            tmpl, {{"SOURCE_TEXT", std::string(a.evidence())}, {"RECORDS", lines}}, ro);
        auto raw = ask(teacher, ex);
        return raw ? teacher::parse_generated(*raw).records : std::vector<InstructionRecord>{};
      });

  InjectionResult res;
  res.requests = groups.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto g = std::find(groups.begin(), groups.end(), source[i]);
    std::optional<InstructionRecord> match;
    if (g != groups.end()) {
      for (const auto& cand : outputs[static_cast<std::size_t>(g - groups.begin())]) {
        if (text::trim(cand.instruction) == text::trim(records[i].instruction) &&
            text::trim(cand.output) == text::trim(records[i].output)) {
          match = cand;
          break;
        }
      }
    }
    if (!match || match->input.empty() || !index.contains_verbatim(match->input)) {
      res.unsupported.push_back(records[i].meta.record_id);
      continue;
    }
    InstructionRecord r = records[i];
    r.input = match->input;
    r.meta.phase = DatasetPhase::P3ContextAware;
    const auto& a = index.articles()[source[i]];
    r.meta.source_doc = a.doc_id;
    r.meta.source_ordinal = a.ordinal;
    if (!dataset::validate_record(r, DatasetPhase::P3ContextAware).ok()) {
      res.unsupported.push_back(r.meta.record_id);
      continue;
    }
    res.records.push_back(std::move(r));
  }
  return res;
}

// Seeded choice of `k` items of `pool`, returned in pool order.
std::vector<std::size_t> choose(const std::vector<std::size_t>& pool, std::size_t k,
                                std::uint64_t seed) {
  auto perm = seeded_permutation(pool.size(), seed);
  perm.resize(std::min(k, pool.size()));
  std::vector<std::size_t> out;
  out.reserve(perm.size());
  for (auto p : perm) out.push_back(pool[p]);
  std::sort(out.begin(), out.end());
  return out;
}

nlohmann::ordered_json counts_json(const StageCounts& c) {
  return {{"sources", c.sources},         {"empty_completions", c.empty_completions},
          {"candidates", c.candidates},   {"parse_rejected", c.parse_rejected},
          {"repaired", c.repaired},       {"invalid", c.invalid},
          {"capped", c.capped},           {"kept", c.kept}};
}

}  // namespace

std::string_view to_string(InjectionMode m) noexcept {
  return m == InjectionMode::Lexical ? "lexical" : "teacher";
}

InjectionMode injection_mode_from_string(std::string_view s) {
  if (s == "lexical") return InjectionMode::Lexical;
  if (s == "teacher" || s == "teacher-assisted") return InjectionMode::TeacherAssisted;
  throw Error(ErrorCode::InvalidArgument, "unknown injection mode '" + std::string(s) + "'");
}

void GenerationPlan::validate() const {
  if (target_size < 1) throw Error(ErrorCode::InvalidArgument, "target_size must be >= 1");
  if (!(adversarial_fraction >= 0.0 && adversarial_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "adversarial_fraction must be in [0, 1)");
  }
  if (per_article_range.first < 1 || per_article_range.first > per_article_range.second) {
    throw Error(ErrorCode::InvalidArgument, "per_article_range must satisfy 1 <= min <= max");
  }
  if (!(dedupe_threshold > 0.0 && dedupe_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "dedupe_threshold must be in (0, 1]");
  }
  if (!(grounding_threshold >= 0.0 && grounding_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "grounding_threshold must be in [0, 1]");
  }
}

GenerationResult generate_phase2(const std::vector<Article>& articles, teacher::Teacher& teacher,
                                 const GenerationPlan& plan) {
  plan.validate();
  if (plan.phase != DatasetPhase::P2Memorization) {
    throw Error(ErrorCode::InvalidArgument, "generate_phase2 needs a memorization plan");
  }
  auto res = collect_qa(articles, teacher, plan, plan.target_size);
  if (res.records.size() * 2 < plan.target_size) {
    res.insufficient_yield = true;
    res.warnings.push_back(fmt::format("insufficient yield: {} of {} requested records",
                                       res.records.size(), plan.target_size));
  }
  return res;
}

GenerationResult generate_phase2(const std::vector<Article>& articles,
                                 const teacher::TeacherConfig& config, const GenerationPlan& plan) {
  teacher::Teacher t(config);
  return generate_phase2(articles, t, plan);
}

GenerationResult generate_from_cards(const std::vector<std::pair<std::string, std::string>>& cards,
                                     teacher::Teacher& teacher, const GenerationPlan& plan) {
  plan.validate();
  const auto& tmpl = teacher::find_template(templates(plan), teacher::ids::kIdProcessor);
  auto outputs = parallel_map<SourceOutput>(
      cards.size(), teacher.config().max_concurrent_requests, [&](std::size_t i) {
        teacher::RenderOptions ro;
        ro.seed = request_seed(plan.seed, teacher::ids::kIdProcessor, cards[i].first);
        auto ex = teacher::render_prompt(tmpl, {{"CARD_TEXT", cards[i].second}}, ro);
        SourceOutput out;
        if (auto raw = ask(teacher, ex)) {
          out.parsed = teacher::parse_generated(*raw);
        } else {
          out.empty_completion = true;
        }
        return out;
      });
  GenerationResult res;
  const auto origin = origin_of(teacher);
  for (std::size_t i = 0; i < cards.size(); ++i) {
    merge_counts(res.counts, outputs[i]);
    std::size_t k = 0;
    for (auto& r : outputs[i].parsed.records) {
      if (!dataset::validate_record(r, DatasetPhase::P2Memorization).ok()) {
        ++res.counts.invalid;
        continue;
      }
      r.meta.record_id = fmt::format("{}:card:{}", cards[i].first, ++k);
      r.meta.phase = DatasetPhase::P2Memorization;
      r.meta.source_doc = cards[i].first;
      r.meta.kind = RecordKind::IdCard;
      r.meta.origin = origin;
      res.records.push_back(std::move(r));
    }
  }
  res.counts.kept = res.records.size();
  return res;
}

InjectionResult inject_context(const std::vector<InstructionRecord>& records,
                               const CorpusIndex& index, teacher::Teacher& teacher,
                               const GenerationPlan& plan) {
  if (index.empty()) throw Error(ErrorCode::InvalidArgument, "corpus index is empty");
  if (plan.injection == InjectionMode::Lexical) return inject_lexical(records, index, plan);
  return inject_assisted(records, index, teacher, plan);
}

InjectionResult inject_context(const std::vector<InstructionRecord>& records,
                               const CorpusIndex& index, const teacher::TeacherConfig& config,
                               const GenerationPlan& plan) {
  teacher::Teacher t(config);
  return inject_context(records, index, t, plan);
}

GenerationResult generate_adversarial(const std::vector<Article>& articles,
                                      const CorpusIndex& index, teacher::Teacher& teacher,
                                      const GenerationPlan& plan) {
  plan.validate();
  if (!(plan.adversarial_fraction > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "adversarial sampling needs adversarial_fraction > 0");
  }
  GenerationResult res;
  const auto origin = origin_of(teacher);
  per_article(articles, teacher, plan, teacher::ids::kAdversarialSampling, res.counts,
              [&](const Article& a, SourceOutput& out) {
                std::size_t k = 0;
                for (auto& r : out.parsed.records) {
                  const bool ok = eval::detect_rejection(r.output, index.lexicons()) &&
                                  !r.input.empty() && index.contains_verbatim(r.input) &&
                                  dataset::validate_record(r, DatasetPhase::P3ContextAware).ok();
                  if (!ok) {
                    ++res.counts.invalid;
                    continue;
                  }
                  stamp(r, fmt::format("{}:{}:adv:{}", a.doc_id, a.ordinal, ++k),
                        DatasetPhase::P3ContextAware, a, RecordKind::Adversarial, origin);
                  res.records.push_back(std::move(r));
                }
                return true;
              });
  res.counts.kept = res.records.size();
  return res;
}

GenerationResult generate_adversarial(const std::vector<Article>& articles,
                                      const CorpusIndex& index,
                                      const teacher::TeacherConfig& config,
                                      const GenerationPlan& plan) {
  teacher::Teacher t(config);
  return generate_adversarial(articles, index, t, plan);
}

BuildResult build_phase3(const CorpusIndex& corpus, teacher::Teacher& teacher,
                         const GenerationPlan& plan) {
  plan.validate();
  if (plan.phase != DatasetPhase::P3ContextAware) {
    throw Error(ErrorCode::InvalidArgument, "build_phase3 needs a context-aware plan");
  }
  if (corpus.empty()) throw Error(ErrorCode::InvalidArgument, "corpus index is empty");
  BuildResult out;
  auto& rep = out.report;
  rep.plan = plan;
  const auto& articles = corpus.articles();

  auto qa = collect_qa(articles, teacher, plan, std::numeric_limits<std::size_t>::max());
  rep.qa = qa.counts;
  rep.teacher_requests += qa.counts.sources;
  for (auto& w : qa.warnings) rep.warnings.push_back(std::move(w));

  auto injected = inject_context(qa.records, corpus, teacher, plan);
  rep.injected = injected.records.size();
  rep.unsupported = injected.unsupported.size();
  rep.teacher_requests += injected.requests;

  std::vector<InstructionRecord> pool = std::move(injected.records);
  if (plan.adversarial_fraction > 0.0) {
    auto adv = generate_adversarial(articles, corpus, teacher, plan);
    rep.adversarial = adv.counts;
    rep.teacher_requests += adv.counts.sources;
    for (auto& r : adv.records) pool.push_back(std::move(r));
  }

  rep.deduped_in = pool.size();
  auto deduped = dataset::dedupe(pool, plan.dedupe_threshold);
  rep.duplicates_removed = deduped.removed.size();

  audit::Phase3AuditOptions ao;
  ao.mode = plan.contradiction;
  ao.teacher = &teacher;
  ao.lexicons = &corpus.lexicons();
  const auto report = audit::audit_phase3(deduped.kept, ao);
  rep.audit = report.counts;
  auto audited = audit::apply_report(deduped.kept, report);

  std::vector<InstructionRecord> clean;
  clean.reserve(audited.size());
  for (auto& r : audited) {
    if (corpus.contains_verbatim(r.input)) {
      clean.push_back(std::move(r));
    } else {
      ++rep.not_verbatim;
    }
  }

  std::vector<std::size_t> normal, adversarial;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    (clean[i].meta.kind == RecordKind::Adversarial ? adversarial : normal).push_back(i);
  }
  rep.available_normal = normal.size();
  rep.available_adversarial = adversarial.size();

  const auto want_adv = static_cast<std::size_t>(
      std::llround(static_cast<double>(plan.target_size) * plan.adversarial_fraction));
  const auto want_normal = plan.target_size - want_adv;
  auto take_adv = std::min(want_adv, adversarial.size());
  auto take_normal = std::min(want_normal, normal.size());
  // Backfill from the other pool when one runs short.
  if (take_normal < want_normal) {
    take_adv = std::min(adversarial.size(), plan.target_size - take_normal);
  }
  if (take_adv < want_adv) take_normal = std::min(normal.size(), plan.target_size - take_adv);

  auto picked = choose(normal, take_normal, mix_seed(plan.seed, fnv1a("select:normal")));
  const auto picked_adv =
      choose(adversarial, take_adv, mix_seed(plan.seed, fnv1a("select:adversarial")));
  picked.insert(picked.end(), picked_adv.begin(), picked_adv.end());
  std::sort(picked.begin(), picked.end());
  out.records.reserve(picked.size());
  for (auto i : picked) out.records.push_back(std::move(clean[i]));
  rep.selected_normal = take_normal;
  rep.selected_adversarial = take_adv;

  if (out.records.size() < plan.target_size) {
    rep.insufficient_yield = true;
    rep.warnings.push_back(fmt::format("insufficient yield: {} of {} requested records",
                                       out.records.size(), plan.target_size));
  }
  if (take_adv != want_adv) {
    rep.warnings.push_back(
        fmt::format("adversarial share {} differs from requested {}", take_adv, want_adv));
  }
  return out;
}

BuildResult build_phase3(const CorpusIndex& corpus, const teacher::TeacherConfig& config,
                         const GenerationPlan& plan) {
  teacher::Teacher t(config);
  return build_phase3(corpus, t, plan);
}

std::string build_report_json(const BuildReport& r) {
  nlohmann::ordered_json j;
  j["plan"] = {{"phase", dataset::to_string(r.plan.phase)},
               {"target_size", r.plan.target_size},
               {"adversarial_fraction", r.plan.adversarial_fraction},
               {"per_article_range", {r.plan.per_article_range.first, r.plan.per_article_range.second}},
               {"seed", r.plan.seed},
               {"injection", to_string(r.plan.injection)},
               {"dedupe_threshold", r.plan.dedupe_threshold},
               {"grounding_threshold", r.plan.grounding_threshold}};
  j["stages"] = {
      {"qa", counts_json(r.qa)},
      {"inject", {{"injected", r.injected}, {"unsupported", r.unsupported}}},
      {"adversarial", counts_json(r.adversarial)},
      {"dedupe", {{"input", r.deduped_in}, {"removed", r.duplicates_removed}}},
      {"audit",
       {{"examined", r.audit.examined},
        {"deleted", r.audit.deleted},
        {"repaired", r.audit.repaired},
        {"kept", r.audit.kept}}},
      {"verbatim_filter", {{"removed", r.not_verbatim}}},
      {"select",
       {{"available_normal", r.available_normal},
        {"available_adversarial", r.available_adversarial},
        {"selected_normal", r.selected_normal},
        {"selected_adversarial", r.selected_adversarial}}}};
  j["teacher_requests"] = r.teacher_requests;
  j["insufficient_yield"] = r.insufficient_yield;
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

}  // namespace regdistill::generate
