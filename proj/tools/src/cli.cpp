#include "regdistill/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "regdistill/audit.hpp"
#include "regdistill/corpus.hpp"
#include "regdistill/dataset.hpp"
#include "regdistill/error.hpp"
#include "regdistill/eval.hpp"
#include "regdistill/generate.hpp"
#include "regdistill/resources.hpp"
#include "regdistill/teacher.hpp"
#include "regdistill/text.hpp"

namespace regdistill::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using dataset::DatasetPhase;
using dataset::InstructionRecord;

// ---------------------------------------------------------------------------
// configuration

struct EvalConfig {
  std::string adapter = "canned";
  std::string system_preamble =
      "You answer questions about the institution's regulations. Refuse requests the "
      "regulations do not allow.";
  teacher::TeacherConfig http;
};

struct PipelineConfig {
  std::vector<std::string> corpus;
  std::vector<std::string> heading_patterns;
  std::string lexicon_dir;
  std::string template_dir;
  teacher::TeacherConfig teacher;
  generate::GenerationPlan plan;
  double audit_grounding_threshold = 0.6;
  audit::ContradictionMode contradiction = audit::ContradictionMode::Heuristic;
  EvalConfig eval;
  std::string out_dir = "out";
  std::uint64_t seed = 42;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_exists(const std::string& p, std::string_view what) {
  if (p.empty()) throw Error(ErrorCode::InvalidArgument, fmt::format("{} path not given", what));
  if (!fs::exists(p)) throw Error(ErrorCode::Io, fmt::format("{} not found: {}", what, p));
}

teacher::TeacherMode mode_from_string(std::string_view s) {
  if (s == "mock") return teacher::TeacherMode::Mock;
  if (s == "remote") return teacher::TeacherMode::Remote;
  throw Error(ErrorCode::InvalidArgument, "teacher mode must be mock or remote");
}

audit::ContradictionMode contradiction_from_string(std::string_view s) {
  if (s == "heuristic") return audit::ContradictionMode::Heuristic;
  if (s == "teacher") return audit::ContradictionMode::TeacherAssisted;
  throw Error(ErrorCode::InvalidArgument, "contradiction mode must be heuristic or teacher");
}

void read_teacher(const nlohmann::json& j, teacher::TeacherConfig& t) {
  if (j.contains("mode")) t.mode = mode_from_string(j["mode"].get<std::string>());
  t.endpoint_url = j.value("endpoint_url", t.endpoint_url);
  t.model_name = j.value("model_name", t.model_name);
  t.api_key_env_var = j.value("api_key_env_var", t.api_key_env_var);
  t.max_concurrent_requests = j.value("max_concurrent_requests", t.max_concurrent_requests);
  t.timeout_ms = j.value("timeout_ms", t.timeout_ms);
  if (j.contains("retry")) {
    const auto& r = j["retry"];
    t.retry.max_attempts = r.value("max_attempts", t.retry.max_attempts);
    t.retry.base_backoff_ms = r.value("base_backoff_ms", t.retry.base_backoff_ms);
    t.retry.max_backoff_ms = r.value("max_backoff_ms", t.retry.max_backoff_ms);
  }
}

PipelineConfig load_config(const std::string& path) {
  PipelineConfig c;
  if (path.empty()) return c;
  require_exists(path, "config");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
    c.corpus = j.value("corpus", c.corpus);
    c.heading_patterns = j.value("heading_patterns", c.heading_patterns);
    c.lexicon_dir = j.value("lexicon_dir", c.lexicon_dir);
    c.template_dir = j.value("template_dir", c.template_dir);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    if (j.contains("teacher")) read_teacher(j["teacher"], c.teacher);
    if (j.contains("plan")) {
      const auto& p = j["plan"];
      c.plan.target_size = p.value("target_size", c.plan.target_size);
      c.plan.adversarial_fraction = p.value("adversarial_fraction", c.plan.adversarial_fraction);
      if (p.contains("per_article_range")) {
        c.plan.per_article_range = {p["per_article_range"].at(0).get<std::size_t>(),
                                    p["per_article_range"].at(1).get<std::size_t>()};
      }
      if (p.contains("injection")) {
        c.plan.injection = generate::injection_mode_from_string(p["injection"].get<std::string>());
      }
      c.plan.dedupe_threshold = p.value("dedupe_threshold", c.plan.dedupe_threshold);
      c.plan.grounding_threshold = p.value("grounding_threshold", c.plan.grounding_threshold);
    }
    if (j.contains("audit")) {
      const auto& a = j["audit"];
      c.audit_grounding_threshold = a.value("grounding_threshold", c.audit_grounding_threshold);
      if (a.contains("contradiction")) {
        c.contradiction = contradiction_from_string(a["contradiction"].get<std::string>());
      }
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      c.eval.adapter = e.value("adapter", c.eval.adapter);
      c.eval.system_preamble = e.value("system_preamble", c.eval.system_preamble);
      c.eval.http.mode = teacher::TeacherMode::Remote;
      if (e.contains("endpoint")) read_teacher(e["endpoint"], c.eval.http);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("bad config {}: {}", path, e.what()));
  }
  return c;
}

ordered_json teacher_json(const teacher::TeacherConfig& t) {
  return {{"mode", t.mode == teacher::TeacherMode::Mock ? "mock" : "remote"},
          {"endpoint_url", t.endpoint_url},
          {"model_name", t.model_name},
          {"api_key_env_var", t.api_key_env_var},
          {"max_concurrent_requests", t.max_concurrent_requests},
          {"retry",
           {{"max_attempts", t.retry.max_attempts},
            {"base_backoff_ms", t.retry.base_backoff_ms},
            {"max_backoff_ms", t.retry.max_backoff_ms}}}};
}

ordered_json config_json(const PipelineConfig& c) {
  return {{"corpus", c.corpus},
          {"heading_patterns", c.heading_patterns},
          {"lexicon_dir", c.lexicon_dir},
          {"template_dir", c.template_dir},
          {"teacher", teacher_json(c.teacher)},
          {"plan",
           {{"target_size", c.plan.target_size},
            {"adversarial_fraction", c.plan.adversarial_fraction},
            {"per_article_range", {c.plan.per_article_range.first, c.plan.per_article_range.second}},
            {"injection", generate::to_string(c.plan.injection)},
            {"dedupe_threshold", c.plan.dedupe_threshold},
            {"grounding_threshold", c.plan.grounding_threshold}}},
          {"audit",
           {{"grounding_threshold", c.audit_grounding_threshold},
            {"contradiction",
             c.contradiction == audit::ContradictionMode::Heuristic ? "heuristic" : "teacher"}}},
          {"eval", {{"adapter", c.eval.adapter}}},
          {"out_dir", c.out_dir},
          {"seed", c.seed}};
}

// ---------------------------------------------------------------------------
// run context shared by the subcommands

class Run {
 public:
  Run(std::string command, PipelineConfig config, std::ostream& out)
      : command_(std::move(command)), config_(std::move(config)), out_(out) {
    lex_ = config_.lexicon_dir.empty() ? text::Lexicons::defaults()
                                       : text::Lexicons::load(config_.lexicon_dir);
    config_.plan.seed = config_.seed;
    if (!config_.template_dir.empty()) {
      config_.plan.templates = std::make_shared<const std::vector<teacher::PromptTemplate>>(
          teacher::registry(config_.template_dir));
    }
  }

  PipelineConfig& config() { return config_; }
  const text::Lexicons& lex() const { return lex_; }
  std::ostream& out() { return out_; }

  void input(const std::string& path) {
    require_exists(path, "input");
    inputs_.push_back(path);
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path dir(config_.out_dir);
    fs::create_directories(dir);
    const auto path = dir / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
    f << content;
    if (!f) throw Error(ErrorCode::Io, "write failed for " + path.string());
    outputs_.push_back(path.string());
  }

  void write_dataset(const std::string& stem, const std::vector<InstructionRecord>& records) {
    const auto jsonl = dataset::write_jsonl(records);
    write(stem + ".jsonl", jsonl);
    write(stem + ".meta.json", dataset::write_meta_json(records));
  }

  /// Loads corpus files given on the command line, else those in the config.
  const corpus::CorpusIndex& corpus(const std::vector<std::string>& override_paths = {}) {
    if (index_) return *index_;
    const auto& paths = override_paths.empty() ? config_.corpus : override_paths;
    if (paths.empty()) throw Error(ErrorCode::InvalidArgument, "no corpus files configured");
    std::vector<corpus::HeadingPattern> patterns;
    for (const auto& p : config_.heading_patterns) patterns.emplace_back(p);
    if (patterns.empty()) patterns = corpus::default_heading_patterns();
    std::vector<corpus::Article> all;
    for (const auto& p : paths) {
      input(p);
      docs_.push_back(corpus::ingest_file(p));
      articles_.push_back(corpus::segment_articles(docs_.back(), patterns));
      all.insert(all.end(), articles_.back().begin(), articles_.back().end());
    }
    index_.emplace(std::move(all), lex_);
    return *index_;
  }
  const std::vector<corpus::RegulationDocument>& docs() const { return docs_; }
  const std::vector<std::vector<corpus::Article>>& doc_articles() const { return articles_; }

  /// Strict parse plus the sidecar from `meta` or, if present, <stem>.meta.json.
  std::vector<InstructionRecord> load_dataset(const std::string& path, const std::string& meta,
                                              std::optional<DatasetPhase> phase) {
    input(path);
    auto parsed = dataset::parse_jsonl(read_file(path), dataset::ParseMode::Strict,
                                       phase.value_or(DatasetPhase::P1General));
    std::string sidecar = meta;
    if (sidecar.empty()) {
      fs::path guess(path);
      guess.replace_extension(".meta.json");
      if (fs::exists(guess)) sidecar = guess.string();
    }
    if (!sidecar.empty()) {
      input(sidecar);
      dataset::attach_meta(parsed.records, read_file(sidecar));
    }
    if (phase) {
      for (auto& r : parsed.records) r.meta.phase = *phase;
    }
    return std::move(parsed.records);
  }

  void finish() {
    ordered_json m;
    m["command"] = command_;
    m["seed"] = config_.seed;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["config"] = config_json(config_);
    write(command_ + ".manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  PipelineConfig config_;
  std::ostream& out_;
  text::Lexicons lex_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  std::vector<corpus::RegulationDocument> docs_;
  std::vector<std::vector<corpus::Article>> articles_;
  std::optional<corpus::CorpusIndex> index_;
};

std::optional<DatasetPhase> phase_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return dataset::phase_from_string(s);
}

void print_counts(std::ostream& out, std::string_view label, const generate::StageCounts& c) {
  out << fmt::format("{}: {} sources, {} candidates, {} kept ({} invalid, {} rejected lines, {} repaired)\n",
                     label, c.sources, c.candidates, c.kept, c.invalid, c.parse_rejected, c.repaired);
}

void print_warnings(std::ostream& out, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) out << "warning: " << w << "\n";
}

// ---------------------------------------------------------------------------
// subcommands

struct GlobalOpts {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string teacher_mode;
  std::string endpoint;
  std::string model;
};

struct Opts {
  std::vector<std::string> corpus;
  std::vector<std::string> patterns;
  std::string phase;
  std::optional<std::size_t> target;
  std::optional<double> adv_frac;
  std::string injection;
  std::string in;
  std::string meta;
  std::optional<double> threshold;
  std::string contradiction;
  double fraction = 0.9;
  std::string suite;
  std::string transcripts;
  std::string adapter;
  std::vector<std::string> profiles;
  std::string log;
  std::size_t window = 1;
  double tolerance = 0.05;
  // export-train-config
  std::string base_model = "Qwen/Qwen2.5-7B-Instruct";
  int steps = 100;
  int lora_rank = 16;
  int lora_alpha = 32;
  double lora_dropout = 0.05;
  bool load_in_4bit = true;
  double learning_rate = 2e-4;
  int batch_size = 2;
  int grad_accum = 4;
  int max_seq_len = 2048;
  int warmup_steps = 5;
  std::string train_file;
};

int cmd_ingest(Run& run, const Opts& o) {
  if (!o.patterns.empty()) run.config().heading_patterns = o.patterns;
  const auto& index = run.corpus(o.corpus);
  run.write("corpus_manifest.json", corpus::corpus_manifest_json(run.docs(), run.doc_articles()));
  for (std::size_t i = 0; i < run.docs().size(); ++i) {
    run.out() << fmt::format("{}: {} articles\n", run.docs()[i].doc_id, run.doc_articles()[i].size());
  }
  run.out() << fmt::format("total: {} articles\n", index.size());
  return kOk;
}

void apply_plan_opts(Run& run, const Opts& o) {
  auto& plan = run.config().plan;
  if (o.target) plan.target_size = *o.target;
  if (o.adv_frac) plan.adversarial_fraction = *o.adv_frac;
  if (!o.injection.empty()) plan.injection = generate::injection_mode_from_string(o.injection);
}

int cmd_generate(Run& run, const Opts& o) {
  apply_plan_opts(run, o);
  auto plan = run.config().plan;
  const auto phase = phase_opt(o.phase).value_or(DatasetPhase::P3ContextAware);
  const auto& index = run.corpus(o.corpus);
  teacher::Teacher t(run.config().teacher);
  plan.phase = phase;
  if (phase == DatasetPhase::P2Memorization) {
    auto res = generate::generate_phase2(index.articles(), t, plan);
    run.write_dataset("phase2", res.records);
    ordered_json rep = {{"records", res.records.size()},
                        {"insufficient_yield", res.insufficient_yield},
                        {"warnings", res.warnings}};
    run.write("generate_report.json", rep.dump(2) + "\n");
    print_counts(run.out(), "phase2", res.counts);
    print_warnings(run.out(), res.warnings);
    run.out() << fmt::format("wrote {} records\n", res.records.size());
    return kOk;
  }
  if (phase != DatasetPhase::P3ContextAware) {
    throw Error(ErrorCode::InvalidArgument, "generate supports phase 2 or 3");
  }
  auto res = generate::build_phase3(index, t, plan);
  run.write_dataset("phase3", res.records);
  run.write("build_report.json", generate::build_report_json(res.report));
  print_counts(run.out(), "qa", res.report.qa);
  print_counts(run.out(), "adversarial", res.report.adversarial);
  print_warnings(run.out(), res.report.warnings);
  run.out() << fmt::format("wrote {} records ({} adversarial)\n", res.records.size(),
                           res.report.selected_adversarial);
  return kOk;
}

int cmd_inject(Run& run, const Opts& o) {
  apply_plan_opts(run, o);
  auto records = run.load_dataset(o.in, o.meta, std::nullopt);
  const auto& index = run.corpus(o.corpus);
  teacher::Teacher t(run.config().teacher);
  auto res = generate::inject_context(records, index, t, run.config().plan);
  run.write_dataset("injected", res.records);
  ordered_json rep = {{"input", records.size()},
                      {"injected", res.records.size()},
                      {"unsupported", res.unsupported}};
  run.write("inject_report.json", rep.dump(2) + "\n");
  run.out() << fmt::format("injected {} of {} records; {} unsupported\n", res.records.size(),
                           records.size(), res.unsupported.size());
  return kOk;
}

int cmd_adversarial(Run& run, const Opts& o) {
  apply_plan_opts(run, o);
  auto plan = run.config().plan;
  plan.phase = DatasetPhase::P3ContextAware;
  const auto& index = run.corpus(o.corpus);
  teacher::Teacher t(run.config().teacher);
  auto res = generate::generate_adversarial(index.articles(), index, t, plan);
  run.write_dataset("adversarial", res.records);
  print_counts(run.out(), "adversarial", res.counts);
  run.out() << fmt::format("wrote {} records\n", res.records.size());
  return kOk;
}

int cmd_audit(Run& run, const Opts& o) {
  const auto phase = dataset::phase_from_string(o.phase);
  auto records = run.load_dataset(o.in, o.meta, phase);
  audit::AuditReport report;
  if (phase == DatasetPhase::P2Memorization) {
    const auto& index = run.corpus(o.corpus);
    std::map<std::string, std::string> evidence;
    for (const auto& r : records) {
      if (!r.meta.source_ordinal) continue;
      if (const auto* a = index.find(r.meta.source_doc, *r.meta.source_ordinal)) {
        evidence[r.meta.record_id] = std::string(a->evidence());
      }
    }
    report = audit::audit_phase2(records, evidence,
                                 o.threshold.value_or(run.config().audit_grounding_threshold),
                                 run.lex());
  } else if (phase == DatasetPhase::P3ContextAware) {
    audit::Phase3AuditOptions ao;
    ao.mode = o.contradiction.empty() ? run.config().contradiction
                                      : contradiction_from_string(o.contradiction);
    ao.lexicons = &run.lex();
    std::optional<teacher::Teacher> t;
    if (ao.mode == audit::ContradictionMode::TeacherAssisted) {
      t.emplace(run.config().teacher);
      ao.teacher = &*t;
    }
    report = audit::audit_phase3(records, ao);
  } else {
    throw Error(ErrorCode::InvalidArgument, "audit supports phase 2 or 3");
  }
  run.write("audit_report.json", audit::report_json(report));
  const auto kept = audit::apply_report(records, report);
  run.write_dataset("audited", kept);
  run.out() << fmt::format("examined {}: {} deleted, {} repaired, {} kept\n", report.counts.examined,
                           report.counts.deleted, report.counts.repaired, report.counts.kept);
  for (const auto& f : report.findings) {
    if (f.action == audit::AuditAction::Keep) continue;
    run.out() << fmt::format("  {} {} ({}): {}\n", audit::to_string(f.action), f.record_id,
                             f.rule ? audit::to_string(*f.rule) : "-", f.detail);
  }
  return kOk;
}

int cmd_dedupe(Run& run, const Opts& o) {
  auto records = run.load_dataset(o.in, o.meta, phase_opt(o.phase));
  auto res = dataset::dedupe(records, o.threshold.value_or(run.config().plan.dedupe_threshold));
  run.write_dataset("deduped", res.kept);
  ordered_json removed = ordered_json::array();
  for (const auto& [id, of] : res.removed) removed.push_back({{"record_id", id}, {"duplicate_of", of}});
  run.write("dedupe_report.json", ordered_json{{"kept", res.kept.size()}, {"removed", removed}}.dump(2) + "\n");
  run.out() << fmt::format("kept {}, removed {}\n", res.kept.size(), res.removed.size());
  return kOk;
}

int cmd_split(Run& run, const Opts& o) {
  auto records = run.load_dataset(o.in, o.meta, phase_opt(o.phase));
  auto res = dataset::split_dataset(records, o.fraction, run.config().seed);
  run.write_dataset("train", res.train);
  run.write_dataset("eval", res.eval);
  run.out() << fmt::format("train {}, eval {}\n", res.train.size(), res.eval.size());
  return kOk;
}

int cmd_stats(Run& run, const Opts& o) {
  auto records = run.load_dataset(o.in, o.meta, phase_opt(o.phase));
  const auto json = dataset::stats_json(dataset::compute_stats(records));
  run.write("stats.json", json);
  run.out() << json;
  return kOk;
}

int cmd_eval(Run& run, const Opts& o) {
  run.input(o.suite);
  const auto suite = eval::load_suite(read_file(o.suite));
  const auto adapter = o.adapter.empty() ? run.config().eval.adapter : o.adapter;
  std::vector<eval::Transcript> transcripts;
  if (adapter == "canned") {
    run.input(o.transcripts);
    eval::CannedAdapter canned(eval::load_transcripts(read_file(o.transcripts)));
    transcripts = eval::run_eval(suite, canned);
  } else if (adapter == "http") {
    auto cfg = run.config().eval.http;
    cfg.mode = teacher::TeacherMode::Remote;
    eval::HttpAdapter http(cfg, run.config().eval.system_preamble);
    transcripts = eval::run_eval(suite, http);
    run.write("transcripts.jsonl", eval::write_transcripts(transcripts));
  } else {
    throw Error(ErrorCode::InvalidArgument, "eval adapter must be canned or http");
  }
  const auto report = eval::aggregate_report(suite, transcripts, run.lex());
  const auto table = eval::render_table(report);
  run.write("eval_report.json", eval::report_json(report));
  run.write("eval_table.txt", table);
  run.out() << table;
  return kOk;
}

int cmd_estimate(Run& run, const Opts& o) {
  auto names = o.profiles.empty() ? resources::preset_names() : o.profiles;
  ordered_json all = ordered_json::array();
  for (const auto& n : names) {
    resources::ModelProfile p;
    if (fs::exists(n)) {
      run.input(n);
      p = resources::profile_from_json(read_file(n));
    } else {
      p = resources::preset(n);
    }
    const auto e = resources::estimate_vram(p);
    all.push_back(ordered_json::parse(resources::estimate_json(p, e)));
    run.out() << fmt::format(
        "{:<12} weights {:7.2f} GB  gradients {:6.2f} GB  optimizer {:6.2f} GB  activations "
        "{:5.2f} GB  total {:7.2f} GB\n",
        p.name, e.weights_gb, e.gradients_gb, e.optimizer_gb, e.activations_gb, e.total_gb);
  }
  run.write("estimate.json", all.dump(2) + "\n");
  return kOk;
}

int cmd_convergence(Run& run, const Opts& o) {
  run.input(o.log);
  const auto points = resources::parse_loss_csv(read_file(o.log));
  const auto r = resources::analyze_convergence(points, o.window, o.tolerance);
  const auto json = resources::convergence_json(r);
  run.write("convergence.json", json);
  run.out() << json;
  return kOk;
}

int cmd_export_train_config(Run& run, const Opts& o) {
  ordered_json j;
  j["base_model"] = o.base_model;
  j["train_file"] = o.train_file;
  j["max_steps"] = o.steps;
  j["lora"] = {{"rank", o.lora_rank}, {"alpha", o.lora_alpha}, {"dropout", o.lora_dropout}};
  j["load_in_4bit"] = o.load_in_4bit;
  j["learning_rate"] = o.learning_rate;
  j["per_device_batch_size"] = o.batch_size;
  j["gradient_accumulation_steps"] = o.grad_accum;
  j["max_seq_length"] = o.max_seq_len;
  j["warmup_steps"] = o.warmup_steps;
  j["seed"] = run.config().seed;
  j["note"] =
      "Defaults are documented starting points, not verified values from any published run. "
      "Only max_steps = 100 follows the reference training length.";
  run.write("train_config.json", j.dump(2) + "\n");
  run.out() << j.dump(2) << "\n";
  return kOk;
}

int exit_code_for(const Error& e) {
  return is_transport_error(e.code()) ? kTransportFailure : kValidationFailure;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Regulation-grounded instruction dataset pipeline", "regdistill"};
  app.require_subcommand(1, 1);
  GlobalOpts g;
  Opts o;
  app.add_option("--config", g.config, "Pipeline configuration (JSON)");
  app.add_option("--out-dir", g.out_dir, "Directory for every output file");
  app.add_option("--seed", g.seed, "Seed recorded in every manifest");
  app.add_option("--teacher", g.teacher_mode, "Teacher mode: mock or remote");
  app.add_option("--endpoint", g.endpoint, "Chat-completions endpoint URL");
  app.add_option("--model", g.model, "Teacher model name");

  auto sub = [&](const char* name, const char* desc) {
    auto* s = app.add_subcommand(name, desc);
    s->fallthrough();
    return s;
  };
  auto corpus_opt = [&](CLI::App* s) {
    s->add_option("--corpus", o.corpus, "Regulation text files (overrides config)");
  };

  auto* ingest = sub("ingest", "Segment regulation files and write the corpus manifest");
  corpus_opt(ingest);
  ingest->add_option("--pattern", o.patterns, "Heading regex (repeatable)");

  auto* gen = sub("generate", "Generate a phase 2 or phase 3 dataset from the corpus");
  corpus_opt(gen);
  gen->add_option("--phase", o.phase, "2 or 3 (default 3)");
  gen->add_option("--target", o.target, "Target record count");
  gen->add_option("--adv-frac", o.adv_frac, "Adversarial fraction (phase 3)");
  gen->add_option("--injection", o.injection, "lexical or teacher");

  auto* inject = sub("inject", "Fill records' input with their supporting article");
  corpus_opt(inject);
  inject->add_option("--in", o.in, "Records (JSONL)")->required();
  inject->add_option("--meta", o.meta, "Sidecar meta JSON");
  inject->add_option("--injection", o.injection, "lexical or teacher");

  auto* adv = sub("adversarial", "Generate misconception records with refuting evidence");
  corpus_opt(adv);
  adv->add_option("--adv-frac", o.adv_frac, "Adversarial fraction (must be > 0)");

  auto* aud = sub("audit", "Apply the phase audit rules and write the report");
  corpus_opt(aud);
  aud->add_option("--phase", o.phase, "2 or 3")->required();
  aud->add_option("--in", o.in, "Records (JSONL)")->required();
  aud->add_option("--meta", o.meta, "Sidecar meta JSON");
  aud->add_option("--threshold", o.threshold, "Grounding threshold (phase 2)");
  aud->add_option("--contradiction", o.contradiction, "heuristic or teacher (phase 3)");

  auto* dd = sub("dedupe", "Remove exact and near-duplicate instructions");
  dd->add_option("--in", o.in, "Records (JSONL)")->required();
  dd->add_option("--meta", o.meta, "Sidecar meta JSON");
  dd->add_option("--phase", o.phase, "Dataset phase");
  dd->add_option("--threshold", o.threshold, "Jaccard threshold");

  auto* sp = sub("split", "Seeded train/eval split");
  sp->add_option("--in", o.in, "Records (JSONL)")->required();
  sp->add_option("--meta", o.meta, "Sidecar meta JSON");
  sp->add_option("--phase", o.phase, "Dataset phase");
  sp->add_option("--fraction", o.fraction, "Train fraction")->capture_default_str();

  auto* st = sub("stats", "Dataset statistics");
  st->add_option("--in", o.in, "Records (JSONL)")->required();
  st->add_option("--meta", o.meta, "Sidecar meta JSON");
  st->add_option("--phase", o.phase, "Dataset phase");

  auto* ev = sub("eval", "Score transcripts against an evaluation suite");
  ev->add_option("--suite", o.suite, "Suite (JSONL)")->required();
  ev->add_option("--transcripts", o.transcripts, "Canned transcripts (JSONL)");
  ev->add_option("--adapter", o.adapter, "canned or http");

  auto* est = sub("estimate", "Training memory estimate");
  est->add_option("--profile", o.profiles, "Preset name or profile JSON (repeatable)");

  auto* conv = sub("convergence", "Analyze a step,loss CSV");
  conv->add_option("--log", o.log, "Loss log CSV")->required();
  conv->add_option("--window", o.window, "Stabilization window")->capture_default_str();
  conv->add_option("--tolerance", o.tolerance, "Stabilization tolerance")->capture_default_str();

  auto* etc = sub("export-train-config", "Write a fine-tuning profile for external runners");
  etc->add_option("--base-model", o.base_model, "Student model id")->capture_default_str();
  etc->add_option("--train-file", o.train_file, "Training JSONL to reference");
  etc->add_option("--steps", o.steps, "Training steps")->capture_default_str();
  etc->add_option("--lora-rank", o.lora_rank, "LoRA rank")->capture_default_str();
  etc->add_option("--lora-alpha", o.lora_alpha, "LoRA alpha")->capture_default_str();
  etc->add_option("--lora-dropout", o.lora_dropout, "LoRA dropout")->capture_default_str();
  etc->add_option("--load-in-4bit", o.load_in_4bit, "4-bit base weights")->capture_default_str();
  etc->add_option("--learning-rate", o.learning_rate, "Learning rate")->capture_default_str();
  etc->add_option("--batch-size", o.batch_size, "Per-device batch size")->capture_default_str();
  etc->add_option("--grad-accum", o.grad_accum, "Gradient accumulation")->capture_default_str();
  etc->add_option("--max-seq-len", o.max_seq_len, "Max sequence length")->capture_default_str();
  etc->add_option("--warmup-steps", o.warmup_steps, "Warmup steps")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    auto cfg = load_config(g.config);
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    if (g.seed) cfg.seed = *g.seed;
    if (!g.teacher_mode.empty()) cfg.teacher.mode = mode_from_string(g.teacher_mode);
    if (!g.endpoint.empty()) {
      cfg.teacher.endpoint_url = g.endpoint;
      cfg.eval.http.endpoint_url = g.endpoint;
    }
    if (!g.model.empty()) {
      cfg.teacher.model_name = g.model;
      cfg.eval.http.model_name = g.model;
    }
    const auto* chosen = app.get_subcommands().front();
    Run run(chosen->get_name(), std::move(cfg), out);
    const std::string& name = chosen->get_name();
    int rc = kOk;
    if (name == "ingest") rc = cmd_ingest(run, o);
    else if (name == "generate") rc = cmd_generate(run, o);
    else if (name == "inject") rc = cmd_inject(run, o);
    else if (name == "adversarial") rc = cmd_adversarial(run, o);
    else if (name == "audit") rc = cmd_audit(run, o);
    else if (name == "dedupe") rc = cmd_dedupe(run, o);
    else if (name == "split") rc = cmd_split(run, o);
    else if (name == "stats") rc = cmd_stats(run, o);
    else if (name == "eval") rc = cmd_eval(run, o);
    else if (name == "estimate") rc = cmd_estimate(run, o);
    else if (name == "convergence") rc = cmd_convergence(run, o);
    else if (name == "export-train-config") rc = cmd_export_train_config(run, o);
    run.finish();
    return rc;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  }
}

int run_command(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace regdistill::cli
