#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "regdistill/dataset.hpp"

namespace regdistill::teacher {

using dataset::DatasetPhase;

namespace ids {
inline constexpr std::string_view kSystem = "system";
inline constexpr std::string_view kRawConverter = "raw_converter";
inline constexpr std::string_view kIdProcessor = "id_processor";
inline constexpr std::string_view kAuditQc = "audit_qc";
inline constexpr std::string_view kGlobalSystem = "global_system";
inline constexpr std::string_view kContextInjection = "context_injection";
inline constexpr std::string_view kAdversarialSampling = "adversarial_sampling";
inline constexpr std::string_view kDataAudit = "data_audit";
}  // namespace ids

struct PromptTemplate {
  std::string template_id;
  DatasetPhase phase = DatasetPhase::P2Memorization;
  std::string role_label;
  std::string system_text;
  std::string user_template;  // {{PLACEHOLDER}} slots
  std::set<std::string> required_placeholders;
  bool is_audit = false;
};

/// Placeholder names in order of first appearance.
std::vector<std::string> placeholders_in(std::string_view tmpl);

/// The eight built-in prompt modules (four memorization, four context-aware).
std::vector<PromptTemplate> registry();

/// Built-ins with `<id>.system.txt` / `<id>.user.txt` from `override_dir`
/// replacing the matching texts. Placeholder sets are recomputed.
std::vector<PromptTemplate> registry(const std::filesystem::path& override_dir);

const PromptTemplate& find_template(const std::vector<PromptTemplate>& templates,
                                    std::string_view template_id);

struct ChatParams {
  double temperature = 0.7;
  int max_output_tokens = 4096;
  std::optional<std::uint64_t> seed;
};

struct ChatExchange {
  std::string system;
  std::string user;
  ChatParams params;
};

/// The line appended to every rendered system text so the exchange can be
/// traced back to its template.
std::string template_marker(std::string_view template_id);
std::optional<std::string> marker_of(const ChatExchange& exchange);

struct RenderOptions {
  bool strict = false;  // reject bindings the template does not use
  std::optional<std::uint64_t> seed;
};

/// Substitutes every {{NAME}} verbatim. Generation templates default to
/// temperature 0.7, audit templates to 0.0.
ChatExchange render_prompt(const PromptTemplate& tmpl,
                           const std::map<std::string, std::string>& bindings,
                           const RenderOptions& opts = {});

/// Marker-delimited blocks inside rendered user text:
///   === BEGIN NAME ===\n ... \n=== END NAME ===
std::string block(std::string_view name, std::string_view body);
std::optional<std::string_view> extract_block(std::string_view text, std::string_view name);

enum class TeacherMode { Remote, Mock };

struct RetryPolicy {
  int max_attempts = 4;
  int base_backoff_ms = 500;
  int max_backoff_ms = 30000;
};

struct TeacherConfig {
  std::string endpoint_url;  // e.g. http://localhost:8000/v1/chat/completions
  std::string model_name = "gpt-4o-mini";
  std::string api_key_env_var = "OPENAI_API_KEY";
  int max_concurrent_requests = 4;
  RetryPolicy retry;
  TeacherMode mode = TeacherMode::Mock;
  int timeout_ms = 120000;
};

/// Delay before retry number `attempt` (1-based): base * 2^(attempt-1),
/// capped, or the server's Retry-After when it is larger.
int backoff_delay_ms(const RetryPolicy& policy, int attempt,
                     std::optional<int> retry_after_ms = std::nullopt);

/// Limits the number of simultaneously held slots.
class ConcurrencyGate {
 public:
  explicit ConcurrencyGate(int limit);
  void acquire();
  void release();
  int limit() const noexcept { return limit_; }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int held_ = 0;
};

/// Teacher endpoint. Remote mode speaks the chat-completions JSON protocol;
/// Mock mode answers with mock_complete. Safe for concurrent use: at most
/// max_concurrent_requests requests are outstanding at any instant.
class Teacher {
 public:
  explicit Teacher(TeacherConfig config);

  std::string complete(const ChatExchange& exchange);

  const TeacherConfig& config() const noexcept { return config_; }
  /// HTTP attempts made so far, including retries.
  std::size_t attempts() const noexcept { return attempts_.load(); }

 private:
  std::string complete_remote(const ChatExchange& exchange);

  TeacherConfig config_;
  ConcurrencyGate gate_;
  std::atomic<std::size_t> attempts_{0};
};

/// One-shot convenience over a temporary Teacher.
std::string complete(const TeacherConfig& config, const ChatExchange& exchange);

/// Chat-completions request body for an exchange.
std::string chat_request_json(const TeacherConfig& config, const ChatExchange& exchange);
/// First choice's message content; throws TransportError on a malformed body.
std::string parse_chat_response(std::string_view body);

/// Deterministic offline teacher. Reads the template marker and the bound
/// blocks out of the exchange and synthesizes output in the template's phase
/// format; audit templates echo the records that survive the stated rules.
std::string mock_complete(const ChatExchange& exchange, std::uint64_t seed);

struct GeneratedParse {
  std::vector<dataset::InstructionRecord> records;
  std::vector<dataset::LineDiagnostic> rejected;
  std::vector<dataset::LineDiagnostic> repaired;  // lines kept after a repair
};

/// Strips code fences and surrounding prose, parses the remaining JSON lines
/// leniently, and repairs a single trailing comma or unescaped inner quotes.
GeneratedParse parse_generated(std::string_view raw);

}  // namespace regdistill::teacher
