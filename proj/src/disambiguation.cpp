#include "kgqa/disambiguation.hpp"

#include <algorithm>

namespace kgqa {

namespace {

std::string one_line(std::string_view text) {
  std::string out(text);
  std::replace(out.begin(), out.end(), '\n', ' ');
  std::replace(out.begin(), out.end(), '\r', ' ');
  return out;
}

std::string_view trim(std::string_view s, std::string_view chars = " \t\r\n") {
  const auto first = s.find_first_not_of(chars);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(chars);
  return s.substr(first, last - first + 1);
}

std::string_view last_marker_body(std::string_view raw) {
  const auto close = raw.rfind(kAnswerClose);
  if (close == std::string_view::npos) {
    throw AnswerMarkerError("response has no <answer>...</answer> pair");
  }
  const auto open = raw.substr(0, close).rfind(kAnswerOpen);
  if (open == std::string_view::npos) {
    throw AnswerMarkerError("response has </answer> without a matching <answer>");
  }
  const auto start = open + kAnswerOpen.size();
  return raw.substr(start, close - start);
}

bool looks_like_id(std::string_view token) {
  return is_entity_id(token) || is_predicate_id(token);
}

}  // namespace

std::string_view to_string(DisambiguationBackend backend) noexcept {
  switch (backend) {
    case DisambiguationBackend::kRemote:
      return "remote";
    case DisambiguationBackend::kOracleLabel:
      return "oracle-label";
    case DisambiguationBackend::kOracleGold:
      return "oracle-gold";
  }
  return "unknown";
}

DisambiguationBackend parse_disambiguation_backend(std::string_view text) {
  if (text == "remote") return DisambiguationBackend::kRemote;
  if (text == "oracle-label") return DisambiguationBackend::kOracleLabel;
  if (text == "oracle-gold") return DisambiguationBackend::kOracleGold;
  throw ConfigError("unknown disambiguator \"" + std::string(text) +
                    "\" (expected remote|oracle-label|oracle-gold)");
}

std::string build_disambiguation_prompt(std::string_view question,
                                        const CandidateSet& candidates,
                                        const Snapshot& catalog) {
  const bool entities = candidates.kind == CatalogKind::kEntity;
  std::string prompt;
  prompt += "You link a question to knowledge-graph ";
  prompt += entities ? "entities" : "predicates";
  prompt += ".\nQuestion: ";
  prompt += one_line(question);
  prompt += "\nCandidates (id | label | description):\n";
  for (const auto& hit : candidates.hits) {
    std::string label, description;
    if (entities) {
      if (const auto* e = catalog.find_entity(hit.id)) {
        label = e->label;
        description = e->description;
      }
    } else if (const auto* p = catalog.find_predicate(hit.id)) {
      label = p->label;
      description = p->description;
    }
    prompt += hit.id + " | " + one_line(label) + " | " + one_line(description) + "\n";
  }
  prompt += "Think step by step about which candidates the question refers to. "
            "Select all ids that the question mentions. Finish with the chosen ids, "
            "comma-separated, between <answer> and </answer>.\n";
  return prompt;
}

std::vector<std::string> extract_answer_items(std::string_view raw_response) {
  const auto body = last_marker_body(raw_response);
  std::vector<std::string> items;
  std::size_t start = 0;
  while (start <= body.size()) {
    const auto comma = body.find(',', start);
    const auto end = comma == std::string_view::npos ? body.size() : comma;
    const auto item = trim(body.substr(start, end - start));
    if (!item.empty()) items.emplace_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return items;
}

Selection parse_selection(std::string_view raw_response,
                          const std::set<std::string>& offered_ids) {
  const auto body = last_marker_body(raw_response);
  Selection out;
  std::set<std::string> seen;
  std::size_t i = 0;
  while (i < body.size()) {
    const auto start = body.find_first_not_of(", \t\r\n", i);
    if (start == std::string_view::npos) break;
    auto end = body.find_first_of(", \t\r\n", start);
    if (end == std::string_view::npos) end = body.size();
    const auto token = trim(body.substr(start, end - start), "\"'`[](){}.;:");
    i = end;
    if (!looks_like_id(token)) continue;
    std::string id(token);
    if (!offered_ids.contains(id)) {
      ++out.off_list;
      continue;
    }
    if (seen.insert(id).second) out.ids.push_back(std::move(id));
  }
  return out;
}

std::string render_selection(const std::vector<std::string>& ids) {
  std::string out(kAnswerOpen);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ", ";
    out += ids[i];
  }
  out += kAnswerClose;
  return out;
}

Disambiguator Disambiguator::remote(std::shared_ptr<ChatClient> client,
                                    std::size_t max_parse_retries) {
  if (!client) throw ConfigError("remote disambiguator needs a chat client");
  return Disambiguator(DisambiguationBackend::kRemote, std::move(client),
                       max_parse_retries);
}

Disambiguator Disambiguator::oracle_label() {
  return Disambiguator(DisambiguationBackend::kOracleLabel, nullptr, 0);
}

Disambiguator Disambiguator::oracle_gold() {
  return Disambiguator(DisambiguationBackend::kOracleGold, nullptr, 0);
}

DisambiguationResult Disambiguator::disambiguate(
    std::string_view question, const CandidateSet& candidates,
    const Snapshot& catalog, const std::set<std::string>* gold) const {
  DisambiguationResult result;
  result.backend = backend_;

  switch (backend_) {
    case DisambiguationBackend::kOracleLabel: {
      const auto folded_question = fold_case(question);
      for (const auto& hit : candidates.hits) {
        std::string label;
        if (candidates.kind == CatalogKind::kEntity) {
          if (const auto* e = catalog.find_entity(hit.id)) label = e->label;
        } else if (const auto* p = catalog.find_predicate(hit.id)) {
          label = p->label;
        }
        if (!label.empty() &&
            folded_question.find(fold_case(label)) != std::string::npos) {
          result.selected.push_back(hit.id);
        }
      }
      break;
    }
    case DisambiguationBackend::kOracleGold: {
      if (gold == nullptr) {
        throw ConfigError("oracle-gold disambiguation needs a gold id set");
      }
      for (const auto& hit : candidates.hits) {
        if (gold->contains(hit.id)) result.selected.push_back(hit.id);
      }
      break;
    }
    case DisambiguationBackend::kRemote: {
      if (candidates.empty()) break;
      const auto ids = candidates.ids();
      const std::set<std::string> offered(ids.begin(), ids.end());
      const std::vector<ChatMessage> messages = {
          {"user", build_disambiguation_prompt(question, candidates, catalog)}};
      for (std::size_t attempt = 0; attempt <= max_parse_retries_; ++attempt) {
        ++result.attempts;
        try {
          result.raw_response = client_->complete(messages);
        } catch (const RemoteError& e) {
          throw RemoteError(std::string("disambiguation (") +
                                std::string(to_string(candidates.kind)) +
                                ") failed: " + e.what(),
                            e.status());
        }
        try {
          auto selection = parse_selection(result.raw_response, offered);
          result.selected = std::move(selection.ids);
          result.off_list += selection.off_list;
          break;
        } catch (const AnswerMarkerError&) {
          // retried below
        }
      }
      break;
    }
  }
  result.rejected = result.selected.empty();
  return result;
}

}  // namespace kgqa
