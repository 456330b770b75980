#include "kgqa/generation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"

#include "kgqa/disambiguation.hpp"

namespace kgqa {

namespace {

std::string one_line(std::string_view text) {
  std::string out(text);
  std::replace(out.begin(), out.end(), '\n', ' ');
  std::replace(out.begin(), out.end(), '\r', ' ');
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void render_lines(std::string& out, const std::vector<CandidateLine>& lines) {
  for (const auto& l : lines) {
    out += one_line(l.id) + " | " + one_line(l.label) + " | " + one_line(l.description) + "\n";
  }
}

bool keyword_at(std::string_view text, std::size_t pos) {
  static constexpr std::string_view kKeywords[] = {"prefix", "select", "ask"};
  if (pos > 0) {
    const auto prev = static_cast<unsigned char>(text[pos - 1]);
    if (std::isalnum(prev) || prev == '_') return false;
  }
  for (auto kw : kKeywords) {
    if (text.size() - pos < kw.size()) continue;
    if (lower_ascii(text.substr(pos, kw.size())) != kw) continue;
    const auto end = pos + kw.size();
    if (end == text.size()) return true;
    const auto next = static_cast<unsigned char>(text[end]);
    if (!std::isalnum(next) && next != '_') return true;
  }
  return false;
}

bool has_keyword(std::string_view text) {
  for (std::size_t pos = 0; pos < text.size(); ++pos) {
    if (keyword_at(text, pos)) return true;
  }
  return false;
}

}  // namespace

std::vector<CandidateLine> entity_lines(const Snapshot& snapshot,
                                        const std::vector<std::string>& ids) {
  std::vector<CandidateLine> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto* e = snapshot.find_entity(id);
    out.push_back({id, e ? e->label : "", e ? e->description : ""});
  }
  return out;
}

std::vector<CandidateLine> predicate_lines(const Snapshot& snapshot,
                                           const std::vector<std::string>& ids) {
  std::vector<CandidateLine> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto* p = snapshot.find_predicate(id);
    out.push_back({id, p ? p->label : "", p ? p->description : ""});
  }
  return out;
}

std::string assemble_prompt(const GenerationRequest& request) {
  std::string out =
      "Write a SPARQL query over Wikidata that answers the question. Use only the "
      "entities and predicates listed below; some of them may be irrelevant. "
      "Reply with the query only.\n";
  if (!request.fewshot_examples.empty()) {
    out += "\nExamples:\n";
    for (const auto& ex : request.fewshot_examples) {
      out += "Question: " + one_line(ex.question) + "\n";
      out += "SPARQL: " + one_line(ex.query) + "\n";
    }
  }
  out += "\nQuestion: " + one_line(request.question) + "\n";
  out += "Entities:\n";
  render_lines(out, request.entities);
  out += "Predicates:\n";
  render_lines(out, request.predicates);
  out += "SPARQL:";
  return out;
}

std::string_view to_string(GeneratorBackend backend) noexcept {
  switch (backend) {
    case GeneratorBackend::kRemoteLlm:
      return "remote-llm";
    case GeneratorBackend::kTemplate:
      return "template";
    case GeneratorBackend::kGoldPassthrough:
      return "gold-passthrough";
  }
  return "unknown";
}

GeneratorBackend parse_generator_backend(std::string_view text) {
  if (text == "remote-llm") return GeneratorBackend::kRemoteLlm;
  if (text == "template") return GeneratorBackend::kTemplate;
  if (text == "gold-passthrough") return GeneratorBackend::kGoldPassthrough;
  throw ConfigError("unknown generator \"" + std::string(text) +
                    "\" (expected remote-llm|template|gold-passthrough)");
}

const std::vector<std::string>& prose_stoplist() {
  static const std::vector<std::string> kWords = {"Sure", "Here", "Certainly", "The",
                                                  "This", "Below", "Okay", "Of"};
  return kWords;
}

std::string strip_query_markup(std::string_view response) {
  std::string_view text = response;
  std::string unfenced;
  if (const auto open = text.find("```"); open != std::string_view::npos) {
    auto body_start = text.find('\n', open);
    body_start = body_start == std::string_view::npos ? text.size() : body_start + 1;
    const auto close = text.find("```", body_start);
    unfenced = std::string(
        text.substr(body_start, close == std::string_view::npos ? std::string_view::npos
                                                                : close - body_start));
    if (has_keyword(unfenced)) {
      text = unfenced;
    } else {
      // The query sits outside the fenced block, e.g. on the fence line.
      unfenced = std::string(response);
      for (auto f = unfenced.find("```"); f != std::string::npos; f = unfenced.find("```")) {
        unfenced.erase(f, 3);
      }
      text = unfenced;
    }
  }
  text = trim(text);
  if (!text.empty() && !keyword_at(text, 0)) {
    for (std::size_t pos = 1; pos < text.size(); ++pos) {
      if (keyword_at(text, pos)) {
        text = text.substr(pos);
        break;
      }
    }
  }
  std::string out(trim(text));
  for (auto fence = out.find("```"); fence != std::string::npos; fence = out.find("```")) {
    out.erase(fence, 3);
  }
  return std::string(trim(out));
}

std::vector<FewShotExample> load_fewshot_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<FewShotExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      out.push_back({obj.at("question").get<std::string>(), obj.at("query").get<std::string>()});
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": malformed few-shot line: " + e.what());
    }
  }
  return out;
}

Generator Generator::remote(std::shared_ptr<ChatClient> client) {
  if (!client) throw ConfigError("remote generator needs a chat client");
  return Generator(GeneratorBackend::kRemoteLlm, std::move(client));
}

Generator Generator::template_baseline() {
  return Generator(GeneratorBackend::kTemplate, nullptr);
}

Generator Generator::gold_passthrough() {
  return Generator(GeneratorBackend::kGoldPassthrough, nullptr);
}

GenerationResult Generator::generate(const GenerationRequest& request,
                                     std::string_view gold_query) const {
  GenerationResult result;
  result.backend = backend_;
  switch (backend_) {
    case GeneratorBackend::kTemplate:
      if (request.entities.empty() || request.predicates.empty()) {
        throw GenerationError("insufficient candidates for the template generator");
      }
      result.query_text = "SELECT ?x WHERE { wd:" + request.entities.front().id + " wdt:" +
                          request.predicates.front().id + " ?x }";
      break;
    case GeneratorBackend::kGoldPassthrough:
      if (gold_query.empty()) throw GenerationError("gold-passthrough needs a gold query");
      result.query_text = std::string(gold_query);
      break;
    case GeneratorBackend::kRemoteLlm: {
      try {
        result.raw_response = client_->complete({{"user", assemble_prompt(request)}});
      } catch (const RemoteError& e) {
        throw GenerationError(std::string("query generation failed: ") + e.what(),
                              ErrorCode::kRemote);
      }
      result.query_text = strip_query_markup(result.raw_response);
      break;
    }
  }
  return result;
}

std::vector<std::string> default_refusal_phrases() {
  return {"I cannot answer", "I can't answer", "I can not answer", "I don't know",
          "I do not know", "unable to answer"};
}

std::string direct_answer_prompt(std::string_view question) {
  return "Answer the question using your own knowledge. If you cannot answer, say "
         "\"I cannot answer\". Otherwise give the answer, with several answers "
         "comma-separated, between <answer> and </answer>.\nQuestion: " +
         one_line(question) + "\n";
}

DirectAnswer parse_direct_answer(std::string_view response,
                                 const std::vector<std::string>& refusal_phrases) {
  DirectAnswer out;
  out.raw_response = std::string(response);
  const auto folded = lower_ascii(response);
  for (const auto& phrase : refusal_phrases) {
    if (!phrase.empty() && folded.find(lower_ascii(phrase)) != std::string::npos) {
      out.llm_rejected = true;
      return out;
    }
  }
  try {
    out.answers = extract_answer_items(response);
  } catch (const AnswerMarkerError&) {
    // No markers: the whole reply is the single answer.
    if (auto t = trim(response); !t.empty()) out.answers.emplace_back(t);
  }
  return out;
}

DirectAnswer direct_answer(std::string_view question, ChatClient& client,
                           const std::vector<std::string>& refusal_phrases) {
  return parse_direct_answer(client.complete({{"user", direct_answer_prompt(question)}}),
                             refusal_phrases);
}

std::uint64_t SeededShuffler::next() {
  // splitmix64
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t SeededShuffler::below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t v = next();
  while (v >= limit) v = next();
  return v % bound;
}

namespace {

std::vector<std::string> with_distractors(const std::vector<std::string>& gold,
                                          const Bm25Index& index,
                                          const std::vector<std::string>& labels,
                                          std::size_t n_distractors) {
  std::vector<std::string> chosen = gold;
  std::set<std::string> taken(gold.begin(), gold.end());
  if (n_distractors == 0) return chosen;
  for (std::size_t g = 0; g < gold.size(); ++g) {
    const auto hits = index.search(labels[g], n_distractors + taken.size());
    std::size_t added = 0;
    for (const auto& hit : hits.hits) {
      if (added == n_distractors) break;
      if (taken.insert(hit.id).second) {
        chosen.push_back(hit.id);
        ++added;
      }
    }
  }
  return chosen;
}

}  // namespace

AugmentationResult augment_training_pairs(const std::vector<TrainingSource>& examples,
                                          const Snapshot& snapshot,
                                          const Bm25Index& entity_index,
                                          const Bm25Index& predicate_index,
                                          std::size_t n_distractors, std::uint64_t seed) {
  AugmentationResult out;
  SeededShuffler rng(seed);
  for (const auto& ex : examples) {
    const bool complete =
        std::all_of(ex.gold_entities.begin(), ex.gold_entities.end(),
                    [&](const auto& id) { return entity_index.contains(id); }) &&
        std::all_of(ex.gold_predicates.begin(), ex.gold_predicates.end(),
                    [&](const auto& id) { return predicate_index.contains(id); });
    if (!complete) {
      ++out.skipped;
      continue;
    }
    std::vector<std::string> entity_labels, predicate_labels;
    for (const auto& id : ex.gold_entities) entity_labels.push_back(snapshot.find_entity(id) ? snapshot.find_entity(id)->label : id);
    for (const auto& id : ex.gold_predicates) predicate_labels.push_back(snapshot.find_predicate(id) ? snapshot.find_predicate(id)->label : id);

    TrainingPair pair;
    pair.question_id = ex.question_id;
    pair.target = ex.gold_query;
    pair.entity_ids = with_distractors(ex.gold_entities, entity_index, entity_labels, n_distractors);
    pair.predicate_ids =
        with_distractors(ex.gold_predicates, predicate_index, predicate_labels, n_distractors);
    rng.shuffle(pair.entity_ids);
    rng.shuffle(pair.predicate_ids);

    GenerationRequest request;
    request.question = ex.question;
    request.entities = entity_lines(snapshot, pair.entity_ids);
    request.predicates = predicate_lines(snapshot, pair.predicate_ids);
    pair.prompt = assemble_prompt(request);
    out.pairs.push_back(std::move(pair));
  }
  return out;
}

void write_training_file(const std::filesystem::path& path,
                         const std::vector<TrainingPair>& pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& p : pairs) {
    nlohmann::ordered_json line;
    line["prompt"] = p.prompt;
    line["target"] = p.target;
    line["question_id"] = p.question_id;
    out << line.dump() << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace kgqa
