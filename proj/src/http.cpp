#include "kgqa/http.hpp"

#include <algorithm>
#include <cctype>

#include "httplib.h"
#include "kgqa/error.hpp"

namespace kgqa::http {

namespace {

httplib::Headers to_headers(const std::vector<Header>& headers) {
  httplib::Headers out;
  for (const auto& h : headers) out.emplace(h.name, h.value);
  return out;
}

httplib::Client make_client(const Url& base, std::chrono::milliseconds timeout) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (base.scheme == "https") {
    throw ConfigError("https URLs need TLS support, which this build lacks: " + base.origin());
  }
#endif
  httplib::Client client(base.origin());
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  client.set_follow_location(true);
  return client;
}

Response convert(const httplib::Result& result, const Url& base) {
  if (!result) {
    throw RemoteError("request to " + base.origin() + base.path +
                      " failed: " + httplib::to_string(result.error()));
  }
  Response r;
  r.status = result->status;
  r.body = result->body;
  r.retry_after = result->get_header_value("Retry-After");
  return r;
}

}  // namespace

std::string Url::origin() const {
  return scheme + "://" + host + ":" + std::to_string(port);
}

Url parse_url(std::string_view url) {
  Url out;
  const auto sep = url.find("://");
  if (sep == std::string_view::npos) {
    throw ConfigError("URL \"" + std::string(url) + "\" has no scheme");
  }
  out.scheme = std::string(url.substr(0, sep));
  std::transform(out.scheme.begin(), out.scheme.end(), out.scheme.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (out.scheme != "http" && out.scheme != "https") {
    throw ConfigError("unsupported URL scheme \"" + out.scheme + "\"");
  }
  auto rest = url.substr(sep + 3);
  const auto slash = rest.find('/');
  auto authority = rest.substr(0, slash);
  out.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  const auto colon = authority.rfind(':');
  if (colon != std::string_view::npos && authority.find(']') == std::string_view::npos) {
    const auto port_text = std::string(authority.substr(colon + 1));
    try {
      std::size_t used = 0;
      out.port = std::stoi(port_text, &used);
      if (used != port_text.size()) throw std::invalid_argument("port");
    } catch (const std::exception&) {
      throw ConfigError("invalid port in URL \"" + std::string(url) + "\"");
    }
    authority = authority.substr(0, colon);
  } else {
    out.port = out.scheme == "https" ? 443 : 80;
  }
  if (authority.empty()) {
    throw ConfigError("URL \"" + std::string(url) + "\" has no host");
  }
  out.host = std::string(authority);
  return out;
}

std::string url_encode(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(text.size() * 3);
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0x0F]);
    }
  }
  return out;
}

Response get(const Url& base, const std::string& path_and_query,
             const std::vector<Header>& headers,
             std::chrono::milliseconds timeout) {
  auto client = make_client(base, timeout);
  return convert(client.Get(path_and_query, to_headers(headers)), base);
}

Response post(const Url& base, const std::vector<Header>& headers,
              const std::string& body, const std::string& content_type,
              std::chrono::milliseconds timeout) {
  auto client = make_client(base, timeout);
  return convert(client.Post(base.path, to_headers(headers), body, content_type),
                 base);
}

std::chrono::milliseconds Backoff::delay(std::size_t attempt) const {
  auto d = base;
  for (std::size_t i = 0; i < attempt && d < cap; ++i) d *= 2;
  return std::min(d, cap);
}

bool is_retryable_status(int status) noexcept {
  return status == 429 || (status >= 500 && status <= 599);
}

InFlightLimiter::InFlightLimiter(std::ptrdiff_t max_in_flight)
    : slots_(std::clamp<std::ptrdiff_t>(max_in_flight, 1, 4096)) {}

}  // namespace kgqa::http
