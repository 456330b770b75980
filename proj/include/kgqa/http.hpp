#pragma once
// Minimal HTTP plumbing shared by the chat-completion and SPARQL clients:
// URL splitting, bounded in-flight requests and exponential backoff.

#include <chrono>
#include <cstddef>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kgqa::http {

struct Url {
  std::string scheme;  // "http" or "https"
  std::string host;
  int port = 0;
  std::string path;  // always starts with '/'

  std::string origin() const;  // scheme://host:port
};

Url parse_url(std::string_view url);  // throws ConfigError

std::string url_encode(std::string_view text);

struct Header {
  std::string name;
  std::string value;
};

struct Response {
  int status = 0;
  std::string body;
  std::string retry_after;  // raw header value, empty if absent
};

// One blocking request. Throws RemoteError on transport failure (no status).
Response get(const Url& base, const std::string& path_and_query,
             const std::vector<Header>& headers,
             std::chrono::milliseconds timeout);
Response post(const Url& base, const std::vector<Header>& headers,
              const std::string& body, const std::string& content_type,
              std::chrono::milliseconds timeout);

struct Backoff {
  std::chrono::milliseconds base{500};
  std::chrono::milliseconds cap{30000};

  // base * 2^attempt, capped; attempt counts from 0.
  std::chrono::milliseconds delay(std::size_t attempt) const;
};

bool is_retryable_status(int status) noexcept;  // 429 and 5xx

// Caps the number of concurrent requests issued through one client.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::ptrdiff_t max_in_flight);

  class Permit {
   public:
    explicit Permit(InFlightLimiter& owner) : owner_(&owner) {
      owner_->slots_.acquire();
    }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;
    ~Permit() { owner_->slots_.release(); }

   private:
    InFlightLimiter* owner_;
  };

  Permit acquire() { return Permit(*this); }

 private:
  std::counting_semaphore<4096> slots_;
};

}  // namespace kgqa::http
