#pragma once
// Candidate selection: a reasoning prompt against a chat-completion model,
// or one of two deterministic oracle backends.

#include <cstddef>
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

inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

enum class DisambiguationBackend { kRemote, kOracleLabel, kOracleGold };

std::string_view to_string(DisambiguationBackend backend) noexcept;
DisambiguationBackend parse_disambiguation_backend(std::string_view text);

// The model reply carried no <answer>...</answer> pair.
class AnswerMarkerError : public Error {
 public:
  explicit AnswerMarkerError(const std::string& message)
      : Error(ErrorCode::kRemote, message) {}
};

struct DisambiguationResult {
  std::vector<std::string> selected;
  std::string raw_response;
  DisambiguationBackend backend = DisambiguationBackend::kOracleLabel;
  bool rejected = false;     // no usable selection could be obtained
  std::size_t off_list = 0;  // proposed ids that were not offered
  std::size_t attempts = 0;  // remote calls made
};

// Question, one "<id> | <label> | <description>" line per candidate, then the
// reasoning and answer-marker instruction.
std::string build_disambiguation_prompt(std::string_view question,
                                        const CandidateSet& candidates,
                                        const Snapshot& catalog);

// Text between the last <answer>...</answer> pair, split on commas, trimmed.
// Throws AnswerMarkerError when no pair exists.
std::vector<std::string> extract_answer_items(std::string_view raw_response);

struct Selection {
  std::vector<std::string> ids;
  std::size_t off_list = 0;
};

// Ids from the last marker pair that are offered, first occurrence kept.
Selection parse_selection(std::string_view raw_response,
                          const std::set<std::string>& offered_ids);

std::string render_selection(const std::vector<std::string>& ids);

class Disambiguator {
 public:
  static Disambiguator remote(std::shared_ptr<ChatClient> client,
                              std::size_t max_parse_retries);
  static Disambiguator oracle_label();
  static Disambiguator oracle_gold();

  DisambiguationBackend backend() const noexcept { return backend_; }

  // `gold` is consulted only by the oracle-gold backend. Remote transport
  // failures surface as RemoteError.
  DisambiguationResult disambiguate(std::string_view question,
                                    const CandidateSet& candidates,
                                    const Snapshot& catalog,
                                    const std::set<std::string>* gold = nullptr) const;

 private:
  Disambiguator(DisambiguationBackend backend, std::shared_ptr<ChatClient> client,
                std::size_t max_parse_retries)
      : backend_(backend), client_(std::move(client)), max_parse_retries_(max_parse_retries) {}

  DisambiguationBackend backend_;
  std::shared_ptr<ChatClient> client_;
  std::size_t max_parse_retries_ = 0;
};

}  // namespace kgqa
