#pragma once
// Okapi BM25 retrieval over the entity and predicate catalogs.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgqa/kgstore.hpp"

namespace kgqa {

enum class CatalogKind { kEntity, kPredicate };

std::string_view to_string(CatalogKind kind) noexcept;
CatalogKind parse_catalog_kind(std::string_view text);  // throws ConfigError

// Lowercases (ASCII, Latin-1, Latin Extended-A, Greek, Cyrillic) and splits
// on runs of non-alphanumeric code points. No stemming, no stopwords.
std::vector<std::string> tokenize(std::string_view text);

// Applies the tokenizer's lowercase mapping to every code point.
std::string fold_case(std::string_view text);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;

  // Throws ConfigError unless k1 >= 0 and 0 <= b <= 1.
  void validate() const;

  friend bool operator==(const Bm25Params&, const Bm25Params&) = default;
};

struct DatasetPreset {
  std::string_view name;
  std::string_view display_name;
  Bm25Params entity;
  Bm25Params predicate;
};

// Per-dataset (k1, b) pairs tuned for recall.
const std::vector<DatasetPreset>& dataset_presets();
const DatasetPreset& find_preset(std::string_view name);  // throws ConfigError

inline constexpr std::size_t kShortlistK = 10;
inline constexpr std::size_t kWideK = 100;

struct Document {
  std::string id;
  std::string text;
};

// label + " " + description + " " + space-joined aliases.
std::vector<Document> entity_documents(
    const Snapshot& snapshot, const std::set<std::string>* keep_ids = nullptr);
std::vector<Document> predicate_documents(
    const Snapshot& snapshot, const std::set<std::string>* keep_ids = nullptr);

struct Hit {
  std::string id;
  double score = 0.0;

  friend bool operator==(const Hit&, const Hit&) = default;
};

struct CandidateSet {
  std::string query;
  CatalogKind kind = CatalogKind::kEntity;
  std::vector<Hit> hits;  // score descending, then id ascending

  std::vector<std::string> ids() const;
  bool empty() const noexcept { return hits.empty(); }
};

class Bm25Index {
 public:
  // Throws DataError when `documents` is empty.
  Bm25Index(CatalogKind kind, std::vector<Document> documents,
            Bm25Params params);

  static Bm25Index build(const Snapshot& snapshot, CatalogKind kind,
                         Bm25Params params,
                         const std::set<std::string>* pruned_ids = nullptr);

  // Top-k documents with a positive score. k must be >= 1.
  CandidateSet search(std::string_view query, std::size_t k) const;

  // Raw BM25 score of a single document (by position) for a query.
  double score(std::string_view query, std::size_t doc) const;

  std::size_t size() const noexcept { return doc_ids_.size(); }
  CatalogKind kind() const noexcept { return kind_; }
  const Bm25Params& params() const noexcept { return params_; }
  bool contains(std::string_view id) const;

  // Line-oriented persistence with a version header.
  void save(const std::filesystem::path& path) const;
  static Bm25Index load(const std::filesystem::path& path);

 private:
  struct Posting {
    std::size_t doc;
    std::size_t tf;
  };

  Bm25Index(CatalogKind kind, Bm25Params params, std::vector<std::string> ids,
            std::vector<std::vector<std::string>> doc_tokens);
  void index_tokens();
  double term_weight(std::size_t df, std::size_t tf, std::size_t doc_len) const;

  CatalogKind kind_;
  Bm25Params params_;
  std::vector<std::string> doc_ids_;
  std::vector<std::vector<std::string>> doc_tokens_;
  std::vector<std::size_t> doc_len_;
  double avg_doc_len_ = 0.0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::unordered_map<std::string, std::size_t> id_pos_;
};

struct RecallExample {
  std::string query;
  std::set<std::string> gold;
};

struct RecallResult {
  double recall = 0.0;  // 0 when no example was evaluated
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // examples with an empty gold set
};

// Mean over examples of |gold ∩ top-k| / |gold|.
RecallResult recall_at_k(const Bm25Index& index,
                         const std::vector<RecallExample>& examples,
                         std::size_t k);

struct SweepRow {
  Bm25Params params;
  RecallResult result;
};

struct SweepResult {
  Bm25Params best;
  double best_recall = 0.0;
  std::vector<SweepRow> table;  // k1-major grid order
};

using IndexBuilder = std::function<Bm25Index(const Bm25Params&)>;

// Exhaustive grid search. Ties resolve toward the lexicographically smaller
// (k1, b). Cells are evaluated on up to `workers` threads.
SweepResult sweep(const IndexBuilder& builder,
                  const std::vector<RecallExample>& examples,
                  const std::vector<double>& k1_grid,
                  const std::vector<double>& b_grid, std::size_t k,
                  std::size_t workers = 1);

// "lo:hi:step" (inclusive) or a single value.
std::vector<double> parse_grid(std::string_view spec);

std::string sweep_csv(const SweepResult& result);

}  // namespace kgqa
