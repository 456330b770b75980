#pragma once
// Restricted SPARQL: conjunctive basic graph patterns with SELECT (DISTINCT),
// SELECT (COUNT(...) AS ?c), ASK and LIMIT. Queries run either locally over a
// Snapshot by backtracking join, or against a remote SPARQL endpoint.

#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/error.hpp"
#include "kgqa/http.hpp"
#include "kgqa/kgstore.hpp"

namespace kgqa::sparql {

inline constexpr std::string_view kEntityNamespace = "http://www.wikidata.org/entity/";
inline constexpr std::string_view kDirectPropertyNamespace =
    "http://www.wikidata.org/prop/direct/";

enum class ParseErrorKind { kSyntax, kUnsupportedConstruct };

std::string_view to_string(ParseErrorKind kind) noexcept;

class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, std::size_t offset, std::string token,
             const std::string& message);

  ParseErrorKind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }
  const std::string& token() const noexcept { return token_; }

 private:
  ParseErrorKind kind_;
  std::size_t offset_;
  std::string token_;
};

// Local evaluation failures, e.g. a projected variable bound by no pattern.
class ExecutionError : public Error {
 public:
  explicit ExecutionError(const std::string& message)
      : Error(ErrorCode::kData, message) {}
};

enum class TermKind { kVariable, kEntity, kPredicate, kLiteral };

struct Term {
  TermKind kind = TermKind::kVariable;
  std::string value;     // variable name without '?', "Q42", "P31" or lexical form
  std::string language;  // literals only
  std::string datatype;  // literals only, as written after ^^

  static Term variable(std::string name) { return {TermKind::kVariable, std::move(name), {}, {}}; }
  static Term entity(std::string id) { return {TermKind::kEntity, std::move(id), {}, {}}; }
  static Term predicate(std::string id) { return {TermKind::kPredicate, std::move(id), {}, {}}; }
  static Term literal(std::string text) { return {TermKind::kLiteral, std::move(text), {}, {}}; }

  bool is_variable() const noexcept { return kind == TermKind::kVariable; }

  friend bool operator==(const Term&, const Term&) = default;
};

struct TriplePattern {
  Term subject;
  Term predicate;
  Term object;

  friend bool operator==(const TriplePattern&, const TriplePattern&) = default;
};

enum class QueryForm { kSelect, kAsk, kCount };

struct QueryAst {
  QueryForm form = QueryForm::kSelect;
  bool distinct = false;                // SELECT DISTINCT / COUNT(DISTINCT ..)
  std::vector<std::string> projection;  // kSelect
  std::string count_variable;           // kCount
  std::string count_alias;              // kCount
  std::vector<TriplePattern> patterns;
  std::optional<std::size_t> limit;

  friend bool operator==(const QueryAst&, const QueryAst&) = default;
};

QueryAst parse(std::string_view query_text);

// Canonical single-line serialization; parse(render(a)) == a.
std::string render(const QueryAst& ast);

struct AnswerSet {
  std::set<std::string> terms;
  std::optional<bool> truth;      // ASK results
  std::vector<std::string> rows;  // "|"-joined tuples for multi-variable SELECT

  // No terms and no truth value.
  bool empty() const noexcept { return terms.empty() && !truth.has_value(); }

  friend bool operator==(const AnswerSet&, const AnswerSet&) = default;
};

// Maps Wikidata entity / direct-property IRIs to their terminal id; all other
// values pass through unchanged.
std::string normalize_term(std::string_view value);
AnswerSet normalize(const AnswerSet& answers);

AnswerSet execute_local(const QueryAst& ast, const Snapshot& snapshot);

// Parses an application/sparql-results+json document. Throws RemoteError.
AnswerSet parse_results_document(std::string_view body);

inline constexpr std::size_t kMaxRemoteRows = 10000;
inline constexpr std::size_t kPostThresholdBytes = 2000;

struct EndpointConfig {
  std::string base_url = "https://query.wikidata.org/sparql";
  std::chrono::milliseconds timeout{60000};
  std::size_t max_retries = 3;
  std::chrono::milliseconds politeness_delay{1000};
  std::string user_agent = "kgqa/0.1 (knowledge-graph QA pipeline)";
  std::size_t max_in_flight = 2;
  http::Backoff backoff{};

  void validate() const;  // throws ConfigError
};

class RemoteEndpoint {
 public:
  explicit RemoteEndpoint(EndpointConfig config);

  // GET with a url-encoded query parameter, or a form POST for long queries.
  AnswerSet execute(std::string_view query_text);

  const EndpointConfig& config() const noexcept { return config_; }

 private:
  void wait_politely();

  EndpointConfig config_;
  http::Url url_;
  http::InFlightLimiter limiter_;
  std::mutex pace_mutex_;
  std::chrono::steady_clock::time_point next_slot_{};
};

// Uniform execution handle used by the guard and the evaluation harness.
class QueryExecutor {
 public:
  virtual ~QueryExecutor() = default;
  // Throws ParseError (local syntax checks), ExecutionError or RemoteError.
  virtual AnswerSet execute(std::string_view query_text) = 0;
  virtual std::string_view name() const noexcept = 0;
};

class LocalExecutor final : public QueryExecutor {
 public:
  explicit LocalExecutor(const Snapshot& snapshot) : snapshot_(&snapshot) {}
  AnswerSet execute(std::string_view query_text) override;
  std::string_view name() const noexcept override { return "local"; }

 private:
  const Snapshot* snapshot_;
};

class RemoteExecutor final : public QueryExecutor {
 public:
  explicit RemoteExecutor(EndpointConfig config) : endpoint_(std::move(config)) {}
  AnswerSet execute(std::string_view query_text) override {
    return endpoint_.execute(query_text);
  }
  std::string_view name() const noexcept override { return "remote"; }

 private:
  RemoteEndpoint endpoint_;
};

}  // namespace kgqa::sparql
