#pragma once
// Query generation backends, the direct-answer baseline, and training-file
// preparation with BM25 distractor candidates.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/chat_client.hpp"
#include "kgqa/error.hpp"
#include "kgqa/kgstore.hpp"
#include "kgqa/retrieval.hpp"

namespace kgqa {

struct CandidateLine {
  std::string id;
  std::string label;
  std::string description;

  friend bool operator==(const CandidateLine&, const CandidateLine&) = default;
};

struct FewShotExample {
  std::string question;
  std::string query;
};

struct GenerationRequest {
  std::string question;
  std::vector<CandidateLine> entities;
  std::vector<CandidateLine> predicates;
  std::vector<FewShotExample> fewshot_examples;
};

// Resolves ids against the catalog; unknown ids render with empty fields.
std::vector<CandidateLine> entity_lines(const Snapshot& snapshot,
                                        const std::vector<std::string>& ids);
std::vector<CandidateLine> predicate_lines(const Snapshot& snapshot,
                                           const std::vector<std::string>& ids);

std::string assemble_prompt(const GenerationRequest& request);

enum class GeneratorBackend { kRemoteLlm, kTemplate, kGoldPassthrough };

std::string_view to_string(GeneratorBackend backend) noexcept;
GeneratorBackend parse_generator_backend(std::string_view text);

class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& message, ErrorCode code = ErrorCode::kData)
      : Error(code, message) {}
};

struct GenerationResult {
  std::string query_text;
  GeneratorBackend backend = GeneratorBackend::kTemplate;
  std::string raw_response;
};

// Words that mark conversational prose in front of a query.
const std::vector<std::string>& prose_stoplist();

// Removes code fences and any leading prose before the query keyword.
std::string strip_query_markup(std::string_view response);

std::vector<FewShotExample> load_fewshot_file(const std::filesystem::path& path);

class Generator {
 public:
  static Generator remote(std::shared_ptr<ChatClient> client);
  static Generator template_baseline();
  static Generator gold_passthrough();

  GeneratorBackend backend() const noexcept { return backend_; }

  // `gold_query` feeds the gold-passthrough backend only. Throws
  // GenerationError (insufficient candidates, missing gold) or RemoteError.
  GenerationResult generate(const GenerationRequest& request,
                            std::string_view gold_query = {}) const;

 private:
  Generator(GeneratorBackend backend, std::shared_ptr<ChatClient> client)
      : backend_(backend), client_(std::move(client)) {}

  GeneratorBackend backend_;
  std::shared_ptr<ChatClient> client_;
};

struct DirectAnswer {
  std::vector<std::string> answers;
  bool llm_rejected = false;
  std::string raw_response;
};

std::vector<std::string> default_refusal_phrases();

std::string direct_answer_prompt(std::string_view question);

// Parses a direct-answer reply: refusal phrases (case-insensitive) yield an
// empty, llm_rejected answer; otherwise the marker body split on commas.
DirectAnswer parse_direct_answer(std::string_view response,
                                 const std::vector<std::string>& refusal_phrases);

DirectAnswer direct_answer(std::string_view question, ChatClient& client,
                           const std::vector<std::string>& refusal_phrases);

// Seeded generator with a fixed, platform-independent draw procedure.
class SeededShuffler {
 public:
  explicit SeededShuffler(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  std::uint64_t below(std::uint64_t bound);  // uniform in [0, bound)

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_;
};

struct TrainingSource {
  std::string question_id;
  std::string question;
  std::string gold_query;
  std::vector<std::string> gold_entities;
  std::vector<std::string> gold_predicates;
};

struct TrainingPair {
  std::string question_id;
  std::string prompt;
  std::string target;
  std::vector<std::string> entity_ids;     // after augmentation and shuffling
  std::vector<std::string> predicate_ids;
};

struct AugmentationResult {
  std::vector<TrainingPair> pairs;
  std::size_t skipped = 0;  // examples with a gold id missing from an index
};

inline constexpr std::size_t kDefaultDistractors = 5;

// Adds up to `n_distractors` BM25 neighbours (queried by label) per gold item.
AugmentationResult augment_training_pairs(const std::vector<TrainingSource>& examples,
                                          const Snapshot& snapshot,
                                          const Bm25Index& entity_index,
                                          const Bm25Index& predicate_index,
                                          std::size_t n_distractors, std::uint64_t seed);

// JSON Lines with keys prompt, target, question_id.
void write_training_file(const std::filesystem::path& path,
                         const std::vector<TrainingPair>& pairs);

}  // namespace kgqa
