#include <iostream>
#include <thread>

#include "json.hpp"

#include "kgqa/sparql.hpp"

namespace kgqa::sparql {

namespace {

std::string snippet(std::string_view body) {
  constexpr std::size_t kMax = 200;
  return std::string(body.size() <= kMax ? body : body.substr(0, kMax));
}

std::string strip_namespace(std::string_view value, std::string_view ns, char lead) {
  if (value.substr(0, ns.size()) != ns) return {};
  const auto local = value.substr(ns.size());
  if (local.size() < 2 || local[0] != lead) return {};
  for (char c : local.substr(1)) {
    if (c < '0' || c > '9') return {};
  }
  return std::string(local);
}

std::string binding_text(const nlohmann::json& cell) {
  const auto& type = cell.at("type").get_ref<const std::string&>();
  const auto& value = cell.at("value").get_ref<const std::string&>();
  if (type == "uri") return normalize_term(value);
  if (type == "bnode") return "_:" + value;
  return value;  // literal / typed-literal
}

}  // namespace

std::string normalize_term(std::string_view value) {
  for (std::string_view scheme : {"http://", "https://"}) {
    if (value.substr(0, scheme.size()) != scheme) continue;
    const std::string tail(value.substr(scheme.size()));
    const std::string canonical_entity(kEntityNamespace.substr(7));
    const std::string canonical_property(kDirectPropertyNamespace.substr(7));
    if (auto id = strip_namespace(tail, canonical_entity, 'Q'); !id.empty()) return id;
    if (auto id = strip_namespace(tail, canonical_property, 'P'); !id.empty()) return id;
  }
  return std::string(value);
}

AnswerSet normalize(const AnswerSet& answers) {
  AnswerSet out;
  out.truth = answers.truth;
  for (const auto& t : answers.terms) out.terms.insert(normalize_term(t));
  out.rows = answers.rows;
  return out;
}

AnswerSet parse_results_document(std::string_view body) {
  AnswerSet answers;
  try {
    const auto doc = nlohmann::json::parse(body);
    if (auto it = doc.find("boolean"); it != doc.end()) {
      answers.truth = it->get<bool>();
      return answers;
    }
    std::vector<std::string> vars;
    for (const auto& v : doc.at("head").at("vars")) vars.push_back(v.get<std::string>());
    const auto& bindings = doc.at("results").at("bindings");
    if (!bindings.is_array()) throw std::invalid_argument("bindings is not an array");
    if (vars.empty()) return answers;
    std::size_t seen = 0;
    for (const auto& row : bindings) {
      if (++seen > kMaxRemoteRows) {
        std::cerr << "warning: endpoint returned more than " << kMaxRemoteRows
                  << " rows; the answer set is truncated\n";
        break;
      }
      if (auto cell = row.find(vars.front()); cell != row.end()) {
        answers.terms.insert(binding_text(*cell));
      }
      if (vars.size() > 1) {
        std::string joined;
        for (std::size_t i = 0; i < vars.size(); ++i) {
          if (i > 0) joined += '|';
          if (auto cell = row.find(vars[i]); cell != row.end()) joined += binding_text(*cell);
        }
        answers.rows.push_back(std::move(joined));
      }
    }
  } catch (const RemoteError&) {
    throw;
  } catch (const std::exception& e) {
    throw RemoteError(std::string("malformed SPARQL results document (") + e.what() +
                      "): " + snippet(body));
  }
  std::sort(answers.rows.begin(), answers.rows.end());
  answers.rows.erase(std::unique(answers.rows.begin(), answers.rows.end()), answers.rows.end());
  return answers;
}

void EndpointConfig::validate() const {
  if (timeout.count() <= 0) throw ConfigError("endpoint timeout must be > 0");
  if (user_agent.empty()) throw ConfigError("endpoint user agent must not be empty");
  if (max_in_flight == 0) throw ConfigError("endpoint max_in_flight must be > 0");
  if (politeness_delay.count() < 0) throw ConfigError("politeness delay must be >= 0");
  http::parse_url(base_url);
}

RemoteEndpoint::RemoteEndpoint(EndpointConfig config)
    : config_(std::move(config)),
      url_(http::parse_url(config_.base_url)),
      limiter_(static_cast<std::ptrdiff_t>(config_.max_in_flight)) {
  config_.validate();
}

void RemoteEndpoint::wait_politely() {
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(pace_mutex_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_slot_);
    next_slot_ = slot + config_.politeness_delay;
  }
  std::this_thread::sleep_until(slot);
}

AnswerSet RemoteEndpoint::execute(std::string_view query_text) {
  const std::vector<http::Header> headers = {
      {"Accept", "application/sparql-results+json"},
      {"User-Agent", config_.user_agent},
  };
  const bool use_post = query_text.size() > kPostThresholdBytes;
  const std::string encoded = "query=" + http::url_encode(query_text);
  const std::string target =
      url_.path + (url_.path.find('?') == std::string::npos ? "?" : "&") + encoded;

  std::string last_error;
  int last_status = 0;
  for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.backoff.delay(attempt - 1));
    http::Response resp;
    {
      auto permit = limiter_.acquire();
      wait_politely();
      resp = use_post ? http::post(url_, headers, encoded,
                                   "application/x-www-form-urlencoded", config_.timeout)
                      : http::get(url_, target, headers, config_.timeout);
    }
    if (resp.status >= 200 && resp.status < 300) return parse_results_document(resp.body);
    last_status = resp.status;
    last_error = "HTTP " + std::to_string(resp.status) + ": " + snippet(resp.body);
    if (resp.status != 429 && resp.status != 503) break;
  }
  throw RemoteError("SPARQL endpoint request failed: " + last_error, last_status);
}

}  // namespace kgqa::sparql
