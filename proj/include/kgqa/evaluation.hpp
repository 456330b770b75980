#pragma once
// Datasets, execution-match metrics and the end-to-end evaluation harness.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/disambiguation.hpp"
#include "kgqa/generation.hpp"
#include "kgqa/guard.hpp"
#include "kgqa/kgstore.hpp"
#include "kgqa/retrieval.hpp"
#include "kgqa/sparql.hpp"

namespace kgqa {

enum class Split { kTrain, kTest };

std::string_view to_string(Split split) noexcept;

struct QaExample {
  std::string id;
  std::string question;
  std::string gold_query;
  std::vector<std::string> gold_entities;
  std::vector<std::string> gold_predicates;
  std::optional<sparql::AnswerSet> gold_answers;
  std::string dataset;
  Split split = Split::kTest;
};

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct DatasetLoad {
  std::vector<QaExample> examples;
  std::vector<LineError> errors;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
};

// JSON Lines with keys id, question, sparql, entities, split; optional
// predicates, answers and dataset. Missing predicates are read off the gold
// query's wdt: terms. `dataset_name` overrides per-line dataset keys; when
// both are absent the file stem is used. Throws DataError if nothing loads.
DatasetLoad load_dataset(const std::filesystem::path& path, std::string dataset_name = {});

// Predicate ids referenced by a query, in order of first appearance; empty
// when the query does not parse.
std::vector<std::string> query_predicates(std::string_view query_text);

struct MetricRecord {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int acc_at_1 = 0;
};

// Terms compared by the metrics: answer terms plus "true"/"false" for ASK.
std::set<std::string> scoring_terms(const sparql::AnswerSet& answers);

MetricRecord score(const sparql::AnswerSet& gold, const sparql::AnswerSet& predicted);
MetricRecord score_sets(const std::set<std::string>& gold, const std::set<std::string>& predicted);

// 1 iff the trimmed, case-folded answer sets are equal.
int exact_match_score(const std::vector<std::string>& gold_labels,
                      const std::vector<std::string>& predicted);

struct PipelineConfig {
  const Snapshot* snapshot = nullptr;
  const Bm25Index* entity_index = nullptr;
  const Bm25Index* predicate_index = nullptr;
  std::size_t entity_k = kShortlistK;
  std::size_t predicate_k = kShortlistK;
  const Disambiguator* disambiguator = nullptr;
  const Generator* generator = nullptr;
  std::vector<FewShotExample> fewshot;
  sparql::QueryExecutor* executor = nullptr;
  GuardPolicy policy;
  // Variant used to record the mismatch flag when policy.filter is off.
  FilterMode observed_filter = FilterMode::kAlg1;
  std::size_t workers = 1;
};

struct PipelineOutcome {
  std::string id;
  std::string dataset;
  std::string question;
  CandidateSet entity_candidates;
  CandidateSet predicate_candidates;
  DisambiguationResult entity_selection;
  DisambiguationResult predicate_selection;
  bool filter_mismatch = false;
  bool generated = false;
  std::string query;
  GuardVerdict verdict;
  // accepted, a guard stage, disambiguation-error or generation-error.
  std::string final_stage = "accepted";
  std::string error;
  sparql::AnswerSet raw_answers;  // before rejection
  sparql::AnswerSet predicted;    // empty when rejected
  sparql::AnswerSet gold;
  MetricRecord metrics;
  bool correct = false;             // raw answers reach Acc@1 = 1
  bool execution_rejected = false;  // error, parse failure or empty raw answers
  bool llm_rejected = false;

  bool rejected() const noexcept { return final_stage != "accepted"; }
};

inline constexpr std::string_view kFinalStages[] = {
    "disambiguation-error", "pre-generation-filter", "generation-error",
    "parse",                "execution-error",       "empty-result"};

struct DatasetSummary {
  std::string dataset;
  std::size_t n = 0;
  double f1 = 0.0;
  double acc_at_1 = 0.0;
  double rejected_share = 0.0;
  std::map<std::string, std::size_t> stage_failures;
};

struct EvaluationReport {
  std::vector<DatasetSummary> datasets;  // sorted by name
  std::vector<PipelineOutcome> outcomes; // input order
};

// Executes gold queries for examples without cached answers. Failures leave
// an empty answer set and are returned as messages.
std::vector<std::string> resolve_gold_answers(std::vector<QaExample>& examples,
                                              sparql::QueryExecutor& executor);

// Gold answers cached on disk with a fetch timestamp, keyed by dataset, id
// and gold query text.
class GoldAnswerCache {
 public:
  static GoldAnswerCache load(const std::filesystem::path& path);  // missing file: empty

  // Fills cached answers, executes the rest and records them.
  std::vector<std::string> resolve(std::vector<QaExample>& examples,
                                   sparql::QueryExecutor& executor);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const noexcept { return entries_.size(); }

 private:
  struct Entry {
    std::string query;
    sparql::AnswerSet answers;
    std::string fetched_at;
  };
  std::map<std::string, Entry> entries_;
};

PipelineOutcome run_pipeline(const QaExample& example, const PipelineConfig& config);

EvaluationReport evaluate_end_to_end(const std::vector<QaExample>& examples,
                                     const PipelineConfig& config);

EvaluationReport summarize(std::vector<PipelineOutcome> outcomes);

std::string report_csv(const EvaluationReport& report);
std::string outcome_json(const PipelineOutcome& outcome);  // one line
std::string trace_jsonl(const EvaluationReport& report);

RejectionObservation observe(const PipelineOutcome& outcome);
std::vector<RejectionReport> rejection_reports(const EvaluationReport& report);

std::vector<RecallExample> recall_examples(const std::vector<QaExample>& examples,
                                           CatalogKind kind);

struct GeneralizationSplit {
  std::vector<QaExample> train;
  std::vector<QaExample> test;
};

// Train splits of every dataset except `held_out` (ordered by dataset name,
// then example id) against the test split of `held_out`.
GeneralizationSplit make_generalization_splits(
    const std::map<std::string, std::vector<QaExample>>& datasets, std::string_view held_out);

std::vector<TrainingSource> training_sources(const std::vector<QaExample>& examples);

}  // namespace kgqa
