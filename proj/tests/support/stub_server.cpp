#include "stub_server.hpp"

#include <chrono>

#include <httplib.h>
#include <json.hpp>

namespace regdistill::testing {

struct StubChatServer::Impl {
  httplib::Server server;
};

StubChatServer::StubChatServer(Options opts) : impl_(std::make_unique<Impl>()), opts_(std::move(opts)) {
  auto& svr = impl_->server;
  svr.new_task_queue = [] { return new httplib::ThreadPool(32); };
  svr.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
    const int now = ++in_flight_;
    int prev = peak_.load();
    while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
    }
    ++requests_;
    std::this_thread::sleep_for(std::chrono::milliseconds(opts_.hold_ms));

    int attempt = 0;
    {
      std::lock_guard lock(mu_);
      attempt = ++seen_[req.body];
      last_auth_ = req.get_header_value("Authorization");
    }
    if (opts_.status_override != 0) {
      res.status = opts_.status_override;
      res.set_content("{\"error\":\"forced\"}", "application/json");
    } else if (attempt <= opts_.rate_limit_first) {
      ++limited_;
      res.status = 429;
      if (opts_.send_retry_after) res.set_header("Retry-After", "0.01");
      res.set_content("{\"error\":\"rate limited\"}", "application/json");
    } else {
      const auto body = nlohmann::json::parse(req.body);
      const auto system = body["messages"][0]["content"].get<std::string>();
      const auto user = body["messages"][1]["content"].get<std::string>();
      const auto text = opts_.responder ? opts_.responder(system, user) : user;
      nlohmann::json reply = {
          {"choices", nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", text}}}}})}};
      ++ok_;
      res.set_content(reply.dump(), "application/json");
    }
    --in_flight_;
  });
  port_ = svr.bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

StubChatServer::~StubChatServer() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

std::string StubChatServer::url() const {
  return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
}

std::string StubChatServer::last_authorization() const {
  std::lock_guard lock(mu_);
  return last_auth_;
}

}  // namespace regdistill::testing
