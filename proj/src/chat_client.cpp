#include "kgqa/chat_client.hpp"

#include <cstdlib>
#include <thread>

#include "json.hpp"

#include "kgqa/error.hpp"

namespace kgqa {

namespace {

std::string snippet(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

}  // namespace

void ReasonerClientConfig::validate() const {
  if (base_url.empty()) throw ConfigError("reasoner base_url is empty");
  if (model_name.empty()) throw ConfigError("reasoner model_name is empty");
  if (timeout.count() <= 0) throw ConfigError("reasoner timeout must be > 0");
  if (max_in_flight == 0) throw ConfigError("reasoner max_in_flight must be > 0");
  http::parse_url(base_url);
}

std::string chat_request_body(const ReasonerClientConfig& config,
                              const std::vector<ChatMessage>& messages) {
  nlohmann::json body;
  body["model"] = config.model_name;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  body["temperature"] = config.temperature;
  return body.dump();
}

std::string parse_chat_response(const std::string& body) {
  try {
    const auto doc = nlohmann::json::parse(body);
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw std::invalid_argument("content is not a string");
    return content.get<std::string>();
  } catch (const std::exception& e) {
    throw RemoteError(std::string("malformed chat-completion response (") +
                      e.what() + "): " + snippet(body));
  }
}

HttpChatClient::HttpChatClient(ReasonerClientConfig config)
    : config_(std::move(config)),
      url_(http::parse_url(config_.base_url)),
      limiter_(static_cast<std::ptrdiff_t>(config_.max_in_flight)) {
  config_.validate();
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw ConfigError("environment variable " + config_.api_key_env +
                        " (reasoner API key) is not set");
    }
    api_key_ = key;
  }
}

std::string HttpChatClient::complete(const std::vector<ChatMessage>& messages) {
  const auto body = chat_request_body(config_, messages);
  std::vector<http::Header> headers = {{"Accept", "application/json"}};
  if (!api_key_.empty()) headers.push_back({"Authorization", "Bearer " + api_key_});

  std::string last_error;
  int last_status = 0;
  for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.backoff.delay(attempt - 1));
    http::Response resp;
    try {
      auto permit = limiter_.acquire();
      resp = http::post(url_, headers, body, "application/json", config_.timeout);
    } catch (const RemoteError& e) {
      last_error = e.what();
      last_status = 0;
      continue;
    }
    if (resp.status >= 200 && resp.status < 300) return parse_chat_response(resp.body);
    last_status = resp.status;
    last_error = "HTTP " + std::to_string(resp.status) + ": " + snippet(resp.body);
    if (!http::is_retryable_status(resp.status)) break;
  }
  throw RemoteError("chat completion failed after retries: " + last_error,
                    last_status);
}

}  // namespace kgqa
