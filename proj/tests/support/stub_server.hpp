#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace regdistill::testing {

/// Local chat-completions endpoint for client tests. Tracks how many
/// requests are in flight and can answer the first attempts of each distinct
/// request body with HTTP 429.
class StubChatServer {
 public:
  struct Options {
    int rate_limit_first = 0;  // 429s served per distinct body before success
    int hold_ms = 20;          // time each request is held open
    int status_override = 0;   // nonzero: always answer with this status
    bool send_retry_after = false;
    /// Computes the completion text from (system, user); echoes the user text
    /// when empty.
    std::function<std::string(const std::string&, const std::string&)> responder;
  };

  explicit StubChatServer(Options opts);
  ~StubChatServer();
  StubChatServer(const StubChatServer&) = delete;
  StubChatServer& operator=(const StubChatServer&) = delete;

  std::string url() const;
  int peak_in_flight() const noexcept { return peak_.load(); }
  int requests() const noexcept { return requests_.load(); }
  int rate_limited() const noexcept { return limited_.load(); }
  int successes() const noexcept { return ok_.load(); }
  std::string last_authorization() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  Options opts_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  std::atomic<int> requests_{0};
  std::atomic<int> limited_{0};
  std::atomic<int> ok_{0};
  mutable std::mutex mu_;
  std::map<std::string, int> seen_;
  std::string last_auth_;
};

}  // namespace regdistill::testing
