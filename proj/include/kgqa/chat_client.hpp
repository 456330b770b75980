#pragma once
// Chat-completion client used by the remote disambiguation and generation
// backends. The wire shape is the common {model, messages, temperature}
// request with the reply text at choices[0].message.content.

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "kgqa/http.hpp"

namespace kgqa {

struct ChatMessage {
  std::string role;
  std::string content;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Returns the assistant message text. Throws RemoteError.
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

struct ReasonerClientConfig {
  std::string base_url;
  std::string model_name;
  std::string api_key_env = "OPENAI_API_KEY";  // empty: no Authorization header
  std::chrono::milliseconds timeout{60000};
  std::size_t max_retries = 3;
  double temperature = 0.0;
  std::size_t max_in_flight = 4;
  http::Backoff backoff{};

  void validate() const;  // throws ConfigError
};

std::string chat_request_body(const ReasonerClientConfig& config,
                              const std::vector<ChatMessage>& messages);
// Throws RemoteError when the body lacks choices[0].message.content.
std::string parse_chat_response(const std::string& body);

class HttpChatClient final : public ChatClient {
 public:
  // Reads the API key from the configured environment variable; throws
  // ConfigError when the variable is named but unset.
  explicit HttpChatClient(ReasonerClientConfig config);

  std::string complete(const std::vector<ChatMessage>& messages) override;

  const ReasonerClientConfig& config() const noexcept { return config_; }

 private:
  ReasonerClientConfig config_;
  http::Url url_;
  std::string api_key_;
  http::InFlightLimiter limiter_;
};

}  // namespace kgqa
