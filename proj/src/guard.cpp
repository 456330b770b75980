#include "kgqa/guard.hpp"

#include <algorithm>
#include <cstdio>

namespace kgqa {

namespace {

bool touches(const EntityRelationProfile* profile, const std::vector<std::string>& predicates) {
  if (profile == nullptr) return false;
  return std::any_of(predicates.begin(), predicates.end(), [&](const std::string& p) {
    return profile->incoming.contains(p) || profile->outgoing.contains(p);
  });
}

std::string percent(std::optional<double> share) {
  if (!share) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", *share * 100.0);
  return buf;
}

void tally(PolicyRates& rates, bool correct, bool rejected) {
  if (correct) {
    ++rates.correct;
    if (rejected) ++rates.rejected_correct;
  } else {
    ++rates.incorrect;
    if (rejected) ++rates.rejected_incorrect;
  }
}

}  // namespace

std::string_view to_string(GuardStage stage) noexcept {
  switch (stage) {
    case GuardStage::kPreGenerationFilter:
      return "pre-generation-filter";
    case GuardStage::kParse:
      return "parse";
    case GuardStage::kExecutionError:
      return "execution-error";
    case GuardStage::kEmptyResult:
      return "empty-result";
    case GuardStage::kAccepted:
      return "accepted";
  }
  return "unknown";
}

std::string_view to_string(FilterMode mode) noexcept {
  switch (mode) {
    case FilterMode::kOff:
      return "off";
    case FilterMode::kAlg1:
      return "alg1";
    case FilterMode::kStrict:
      return "strict";
  }
  return "unknown";
}

FilterMode parse_filter_mode(std::string_view text) {
  if (text == "off") return FilterMode::kOff;
  if (text == "alg1") return FilterMode::kAlg1;
  if (text == "strict") return FilterMode::kStrict;
  throw ConfigError("unknown filter mode \"" + std::string(text) + "\" (expected off|alg1|strict)");
}

bool check_entity_mismatch(const Snapshot& snapshot, const std::vector<std::string>& entities,
                           const std::vector<std::string>& predicates) {
  bool mismatch = true;
  for (const auto& e : entities) {
    if (touches(snapshot.find_relations(e), predicates)) {
      mismatch = false;
      break;
    }
  }
  return mismatch;
}

bool strict_check_entity_mismatch(const Snapshot& snapshot,
                                  const std::vector<std::string>& entities,
                                  const std::vector<std::string>& predicates) {
  if (entities.empty() || predicates.empty()) return true;
  return std::any_of(entities.begin(), entities.end(), [&](const std::string& e) {
    return !touches(snapshot.find_relations(e), predicates);
  });
}

bool entity_mismatch(FilterMode mode, const Snapshot& snapshot,
                     const std::vector<std::string>& entities,
                     const std::vector<std::string>& predicates) {
  switch (mode) {
    case FilterMode::kOff:
      return false;
    case FilterMode::kAlg1:
      return check_entity_mismatch(snapshot, entities, predicates);
    case FilterMode::kStrict:
      return strict_check_entity_mismatch(snapshot, entities, predicates);
  }
  return false;
}

GuardVerdict pre_generation_filter(FilterMode mode, const Snapshot& snapshot,
                                   const std::vector<std::string>& entities,
                                   const std::vector<std::string>& predicates) {
  if (!entity_mismatch(mode, snapshot, entities, predicates)) return GuardVerdict::accept();
  std::string detail;
  if (entities.empty()) {
    detail = "no entities selected";
  } else if (predicates.empty()) {
    detail = "no predicates selected";
  } else {
    detail = std::string(to_string(mode)) + ": selected entities and predicates are disconnected";
  }
  return GuardVerdict::reject(GuardStage::kPreGenerationFilter, std::move(detail));
}

GuardVerdict guard_execution(std::string_view query_text, sparql::QueryExecutor& executor,
                             bool execution_policy, sparql::AnswerSet& answers) {
  try {
    answers = executor.execute(query_text);
  } catch (const sparql::ParseError& e) {
    answers = {};
    return GuardVerdict::reject(GuardStage::kParse, e.what());
  } catch (const Error& e) {
    answers = {};
    return GuardVerdict::reject(GuardStage::kExecutionError, e.what());
  }
  if (execution_policy && answers.empty()) {
    return GuardVerdict::reject(GuardStage::kEmptyResult, "query returned no answers");
  }
  return GuardVerdict::accept();
}

GuardOutcome guard_pipeline(const GuardContext& context) {
  GuardOutcome out;
  out.verdict = pre_generation_filter(context.policy.filter, *context.snapshot,
                                      context.entities, context.predicates);
  if (!out.verdict.accepted) return out;
  out.query_text = context.generate();
  out.generated = true;
  out.verdict = guard_execution(out.query_text, *context.executor, context.policy.execution,
                                out.answers);
  return out;
}

std::optional<double> PolicyRates::caught() const {
  if (incorrect == 0) return std::nullopt;
  return static_cast<double>(rejected_incorrect) / static_cast<double>(incorrect);
}

std::optional<double> PolicyRates::false_rejection() const {
  if (correct == 0) return std::nullopt;
  return static_cast<double>(rejected_correct) / static_cast<double>(correct);
}

RejectionReport rejection_report(std::string dataset,
                                 const std::vector<RejectionObservation>& observations) {
  RejectionReport report;
  report.dataset = std::move(dataset);
  for (const auto& o : observations) {
    tally(report.llm_rejection, o.correct, o.llm_rejected);
    tally(report.execution, o.correct, o.execution_rejected);
    tally(report.filtering_and_execution, o.correct, o.filter_mismatch || o.execution_rejected);
  }
  return report;
}

std::string rejection_csv(const std::vector<RejectionReport>& reports) {
  std::string csv =
      "dataset,llm_rejection,execution,filtering_and_execution,"
      "false_llm_rejection,false_execution,false_filtering_and_execution\n";
  for (const auto& r : reports) {
    const auto unobserved = std::optional<double>{};
    csv += r.dataset + "," +
           percent(r.llm_observed ? r.llm_rejection.caught() : unobserved) + "," +
           percent(r.execution.caught()) + "," + percent(r.filtering_and_execution.caught()) +
           "," + percent(r.llm_observed ? r.llm_rejection.false_rejection() : unobserved) + "," +
           percent(r.execution.false_rejection()) + "," +
           percent(r.filtering_and_execution.false_rejection()) + "\n";
  }
  return csv;
}

}  // namespace kgqa
