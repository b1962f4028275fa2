#pragma once

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <string>

#include "json.hpp"

#include "logohall/common/digest.hpp"
#include "logohall/querent/transport.hpp"

namespace logohall {

inline std::string utc_now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// OpenAI-style chat completion with one inline PNG image.
inline nlohmann::json chat_request_body(const ModelEndpoint& ep, const QueryRequest& req) {
  using nlohmann::json;
  const std::string data_uri = "data:image/png;base64," + base64_encode(req.png);
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", req.prompt}});
  content.push_back({{"type", "image_url"}, {"image_url", {{"url", data_uri}}}});
  return {{"model", ep.remote_model.empty() ? ep.model_id : ep.remote_model},
          {"temperature", req.decoding.temperature},
          {"max_tokens", req.decoding.max_tokens},
          {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
}

// Pulls the assistant text out of a chat completion body.
inline std::string chat_response_text(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw TransportError(FailureKind::Malformed, 200, "response body is not JSON");
  }
  const auto* content = [&]() -> const nlohmann::json* {
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) return nullptr;
    const auto& msg = j["choices"][0];
    if (!msg.contains("message") || !msg["message"].contains("content")) return nullptr;
    return &msg["message"]["content"];
  }();
  if (content == nullptr) throw TransportError(FailureKind::Malformed, 200, "response has no choices[0].message.content");
  if (content->is_string()) return content->get<std::string>();
  if (content->is_array()) {
    std::string text;
    for (const auto& part : *content)
      if (part.contains("text") && part["text"].is_string()) text += part["text"].get<std::string>();
    return text;
  }
  throw TransportError(FailureKind::Malformed, 200, "message content is neither string nor parts");
}

class HttpChatTransport final : public Transport {
 public:
  explicit HttpChatTransport(ModelEndpoint endpoint) : ep_(std::move(endpoint)) {
    if (!ep_.auth_env.empty()) {
      const char* v = std::getenv(ep_.auth_env.c_str());
      if (v == nullptr || *v == '\0')
        throw ConfigError("endpoint '" + ep_.model_id + "': env var " + ep_.auth_env + " is not set");
      token_ = v;
    }
  }

  QueryReply send(const QueryRequest& req) override {
    httplib::Client client(ep_.base_url);
    client.set_connection_timeout(ep_.timeout_s, 0);
    client.set_read_timeout(ep_.timeout_s, 0);
    client.set_write_timeout(ep_.timeout_s, 0);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    const auto body = chat_request_body(ep_, req).dump();
    auto res = client.Post(ep_.path, headers, body, "application/json");
    if (!res)
      throw TransportError(FailureKind::Transient, 0, "no response: " + httplib::to_string(res.error()));
    const int status = res->status;
    if (status == 401 || status == 403)
      throw TransportError(FailureKind::Auth, status, "authentication rejected (HTTP " + std::to_string(status) + ")");
    if (status == 408 || status == 429 || status >= 500)
      throw TransportError(FailureKind::Transient, status, "HTTP " + std::to_string(status));
    if (status < 200 || status >= 300)
      throw TransportError(FailureKind::Permanent, status, "HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200));
    return {chat_response_text(res->body), utc_now_iso8601()};
  }

 private:
  ModelEndpoint ep_;
  std::string token_;
};

}  // namespace logohall
