#pragma once
// Rejection of unanswerable generations: entity-to-predicate ontology
// filtering before generation, and execution-based rejection afterwards.

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/kgstore.hpp"
#include "kgqa/sparql.hpp"

namespace kgqa {

enum class GuardStage { kPreGenerationFilter, kParse, kExecutionError, kEmptyResult, kAccepted };

std::string_view to_string(GuardStage stage) noexcept;

struct GuardVerdict {
  bool accepted = true;
  GuardStage stage = GuardStage::kAccepted;
  std::string detail;

  static GuardVerdict accept() { return {}; }
  static GuardVerdict reject(GuardStage stage, std::string detail) {
    return {false, stage, std::move(detail)};
  }
};

enum class FilterMode { kOff, kAlg1, kStrict };

std::string_view to_string(FilterMode mode) noexcept;
FilterMode parse_filter_mode(std::string_view text);  // off|alg1|strict

struct GuardPolicy {
  FilterMode filter = FilterMode::kAlg1;
  bool execution = true;
};

// True unless some entity's incoming or outgoing relations touch a predicate
// in `predicates`. Empty inputs count as a mismatch; unknown ids contribute
// no relations.
bool check_entity_mismatch(const Snapshot& snapshot, const std::vector<std::string>& entities,
                           const std::vector<std::string>& predicates);

// True when any entity fails to touch the predicate set.
bool strict_check_entity_mismatch(const Snapshot& snapshot,
                                  const std::vector<std::string>& entities,
                                  const std::vector<std::string>& predicates);

// Dispatches on the mode; kOff never reports a mismatch.
bool entity_mismatch(FilterMode mode, const Snapshot& snapshot,
                     const std::vector<std::string>& entities,
                     const std::vector<std::string>& predicates);

GuardVerdict pre_generation_filter(FilterMode mode, const Snapshot& snapshot,
                                   const std::vector<std::string>& entities,
                                   const std::vector<std::string>& predicates);

// Executes the query and classifies the outcome. Parse failures and execution
// errors always reject; empty results reject only when `execution_policy` is on.
// ASK answers, true or false, are never empty results.
GuardVerdict guard_execution(std::string_view query_text, sparql::QueryExecutor& executor,
                             bool execution_policy, sparql::AnswerSet& answers);

struct GuardContext {
  const Snapshot* snapshot = nullptr;
  std::vector<std::string> entities;
  std::vector<std::string> predicates;
  std::function<std::string()> generate;  // invoked only past the filter
  sparql::QueryExecutor* executor = nullptr;
  GuardPolicy policy;
};

struct GuardOutcome {
  GuardVerdict verdict;
  bool generated = false;
  std::string query_text;
  sparql::AnswerSet answers;
};

// Filter, then generate, then execute. Exceptions thrown by `generate`
// propagate to the caller.
GuardOutcome guard_pipeline(const GuardContext& context);

// One labeled generation, as seen by each rejection policy.
struct RejectionObservation {
  bool correct = false;
  bool llm_rejected = false;
  bool execution_rejected = false;
  bool filter_mismatch = false;
};

struct PolicyRates {
  std::size_t incorrect = 0;
  std::size_t rejected_incorrect = 0;
  std::size_t correct = 0;
  std::size_t rejected_correct = 0;

  // Share of incorrect generations rejected; nullopt without incorrect ones.
  std::optional<double> caught() const;
  // Share of correct generations rejected; nullopt without correct ones.
  std::optional<double> false_rejection() const;
};

struct RejectionReport {
  std::string dataset;
  PolicyRates llm_rejection;
  PolicyRates execution;
  PolicyRates filtering_and_execution;
  bool llm_observed = true;  // false: the LLM columns print n/a
};

RejectionReport rejection_report(std::string dataset,
                                 const std::vector<RejectionObservation>& observations);

// dataset, llm_rejection, execution, filtering_and_execution, then the three
// false-rejection columns. Percentages with one decimal, "n/a" when undefined.
std::string rejection_csv(const std::vector<RejectionReport>& reports);

}  // namespace kgqa
