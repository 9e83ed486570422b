#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "regdistill/error.hpp"
#include "regdistill/teacher.hpp"
#include "regdistill/text.hpp"

namespace regdistill::teacher {
namespace {

struct Endpoint {
  std::string scheme_host_port;
  std::string path;
};

Endpoint split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, re)) {
    throw Error(ErrorCode::TransportError, "invalid endpoint url '" + url + "'");
  }
  return {m[1].str(), m[2].matched ? m[2].str() : "/v1/chat/completions"};
}

std::optional<int> retry_after_ms(const httplib::Result& res) {
  if (!res || !res->has_header("Retry-After")) return std::nullopt;
  try {
    return static_cast<int>(std::stod(res->get_header_value("Retry-After")) * 1000.0);
  } catch (...) {
    return std::nullopt;
  }
}

class GateSlot {
 public:
  explicit GateSlot(ConcurrencyGate& g) : g_(g) { g_.acquire(); }
  ~GateSlot() { g_.release(); }
  GateSlot(const GateSlot&) = delete;
  GateSlot& operator=(const GateSlot&) = delete;

 private:
  ConcurrencyGate& g_;
};

}  // namespace

int backoff_delay_ms(const RetryPolicy& policy, int attempt, std::optional<int> retry_after) {
  long long delay = policy.base_backoff_ms;
  for (int i = 1; i < attempt && delay < policy.max_backoff_ms; ++i) delay *= 2;
  delay = std::min<long long>(delay, policy.max_backoff_ms);
  if (retry_after && *retry_after > delay) delay = *retry_after;
  return static_cast<int>(std::max<long long>(delay, 0));
}

ConcurrencyGate::ConcurrencyGate(int limit) : limit_(limit) {
  if (limit < 1) throw Error(ErrorCode::InvalidArgument, "concurrency limit must be >= 1");
}

void ConcurrencyGate::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return held_ < limit_; });
  ++held_;
}

void ConcurrencyGate::release() {
  {
    std::lock_guard lock(mu_);
    --held_;
  }
  cv_.notify_one();
}

Teacher::Teacher(TeacherConfig config)
    : config_(std::move(config)), gate_(config_.max_concurrent_requests) {
  if (config_.mode == TeacherMode::Remote && config_.endpoint_url.empty()) {
    throw Error(ErrorCode::InvalidArgument, "remote teacher requires endpoint_url");
  }
  if (config_.retry.max_attempts < 1) {
    throw Error(ErrorCode::InvalidArgument, "retry.max_attempts must be >= 1");
  }
}

std::string Teacher::complete(const ChatExchange& exchange) {
  if (text::is_blank(exchange.user)) {
    throw Error(ErrorCode::InvalidArgument, "chat exchange has an empty user message");
  }
  if (config_.mode == TeacherMode::Mock) {
    auto out = mock_complete(exchange, exchange.params.seed.value_or(0));
    if (text::is_blank(out)) throw Error(ErrorCode::EmptyCompletion, "mock produced no text");
    return out;
  }
  return complete_remote(exchange);
}

std::string chat_request_json(const TeacherConfig& config, const ChatExchange& exchange) {
  nlohmann::ordered_json body;
  body["model"] = config.model_name;
  body["messages"] = nlohmann::ordered_json::array(
      {{{"role", "system"}, {"content", exchange.system}},
       {{"role", "user"}, {"content", exchange.user}}});
  body["temperature"] = exchange.params.temperature;
  body["max_tokens"] = exchange.params.max_output_tokens;
  if (exchange.params.seed) body["seed"] = *exchange.params.seed;
  return body.dump();
}

std::string parse_chat_response(std::string_view body) {
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& choice = j.at("choices").at(0);
    if (choice.contains("message")) {
      const auto& content = choice["message"].at("content");
      return content.is_null() ? std::string{} : content.get<std::string>();
    }
    return choice.at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::TransportError, std::string("malformed chat response: ") + e.what());
  }
}

std::string Teacher::complete_remote(const ChatExchange& exchange) {
  const char* key = std::getenv(config_.api_key_env_var.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::AuthError,
                "environment variable " + config_.api_key_env_var + " is not set");
  }
  const auto ep = split_url(config_.endpoint_url);
  const auto payload = chat_request_json(config_, exchange);
  const httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);

  std::string last_error;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    std::optional<int> retry_after;
    {
      GateSlot slot(gate_);
      ++attempts_;
      httplib::Client cli(ep.scheme_host_port);
      cli.set_connection_timeout(timeout);
      cli.set_read_timeout(timeout);
      cli.set_write_timeout(timeout);
      auto res = cli.Post(ep.path, headers, payload, "application/json");
      if (!res) {
        last_error = "transport: " + httplib::to_string(res.error());
      } else if (res->status == 200) {
        auto text = parse_chat_response(res->body);
        if (text::is_blank(text)) throw Error(ErrorCode::EmptyCompletion, "empty completion");
        return text;
      } else if (res->status == 401 || res->status == 403) {
        throw Error(ErrorCode::AuthError, "HTTP " + std::to_string(res->status));
      } else if (res->status == 429) {
        last_error = "rate limited (HTTP 429)";
        retry_after = retry_after_ms(res);
      } else if (res->status >= 500 || res->status == 408) {
        last_error = "HTTP " + std::to_string(res->status);
        retry_after = retry_after_ms(res);
      } else {
        throw Error(ErrorCode::TransportError,
                    "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
      }
    }
    if (attempt < config_.retry.max_attempts) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(backoff_delay_ms(config_.retry, attempt, retry_after)));
    }
  }
  throw Error(ErrorCode::TransportError, "gave up after " +
                                             std::to_string(config_.retry.max_attempts) +
                                             " attempts; last error: " + last_error);
}

std::string complete(const TeacherConfig& config, const ChatExchange& exchange) {
  Teacher t(config);
  return t.complete(exchange);
}

}  // namespace regdistill::teacher
