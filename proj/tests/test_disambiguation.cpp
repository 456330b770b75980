#include "doctest.h"

#include <algorithm>

#include "kgqa/disambiguation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace kgqa;

namespace {

CandidateSet candidates(std::vector<std::string> ids, CatalogKind kind = CatalogKind::kEntity) {
  CandidateSet out;
  out.kind = kind;
  double score = static_cast<double>(ids.size());
  for (auto& id : ids) out.hits.push_back({std::move(id), score--});
  return out;
}

std::size_t count_lines_with(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    if (text.substr(start, end - start).find(needle) != std::string::npos) ++n;
    start = end + 1;
  }
  return n;
}

Snapshot catalog_of(std::size_t n) { return oracle::make_catalog(n, 3).snapshot(); }

}  // namespace

TEST_SUITE("disambiguation") {

TEST_CASE("prompt with a single candidate") {
  const auto snap = catalog_of(3);
  const auto prompt = build_disambiguation_prompt("Which one?", candidates({"Q2"}), snap);
  CHECK(prompt.find("Which one?") != std::string::npos);
  CHECK(count_lines_with(prompt, " | entity ") == 1);
  CHECK(prompt.find("Q2 | entity 2 | \n") != std::string::npos);
  CHECK(prompt.find("<answer>") != std::string::npos);
  CHECK(prompt.find("</answer>") != std::string::npos);
  CHECK(prompt.find("step by step") != std::string::npos);
  CHECK(prompt.find("Which one?") < prompt.find("Q2 |"));
  CHECK(prompt.find("Q2 |") < prompt.find("step by step"));
}

TEST_CASE("prompt with a hundred candidates keeps their order") {
  const auto snap = catalog_of(100);
  std::vector<std::string> ids;
  for (int i = 100; i >= 1; --i) ids.push_back("Q" + std::to_string(i));
  const auto prompt = build_disambiguation_prompt("q", candidates(ids), snap);
  CHECK(count_lines_with(prompt, " | entity ") == 100);
  std::size_t last = 0;
  for (const auto& id : ids) {
    const auto pos = prompt.find("\n" + id + " | ");
    REQUIRE(pos != std::string::npos);
    CHECK(pos >= last);
    last = pos;
  }
}

TEST_CASE("prompt lines for predicates and unknown ids") {
  auto kg = oracle::make_catalog(1, 2);
  kg.predicates[1].description = "multi\nline";
  const auto snap = kg.snapshot();
  const auto prompt =
      build_disambiguation_prompt("q", candidates({"P2", "P7"}, CatalogKind::kPredicate), snap);
  CHECK(prompt.find("P2 | predicate 2 | multi line\n") != std::string::npos);
  CHECK(prompt.find("P7 |  | \n") != std::string::npos);
  CHECK(prompt.find("predicates") != std::string::npos);
}

TEST_CASE("selection parsing") {
  const std::set<std::string> offered = {"Q42", "Q1"};
  SUBCASE("happy path") {
    const auto s = parse_selection("Thinking... Q7 is wrong. <answer>Q42, Q1</answer>", offered);
    CHECK(s.ids == std::vector<std::string>{"Q42", "Q1"});
    CHECK(s.off_list == 0);
  }
  SUBCASE("off-list ids are dropped and tallied") {
    const auto s = parse_selection("<answer>Q42, Q99</answer>", offered);
    CHECK(s.ids == std::vector<std::string>{"Q42"});
    CHECK(s.off_list == 1);
  }
  SUBCASE("no markers") {
    CHECK_THROWS_AS(parse_selection("Q42 is the answer", offered), AnswerMarkerError);
    CHECK_THROWS_AS(parse_selection("<answer>Q42", offered), AnswerMarkerError);
    CHECK_THROWS_AS(parse_selection("Q42</answer>", offered), AnswerMarkerError);
  }
  SUBCASE("last pair wins, whitespace separates, duplicates collapse") {
    const auto s = parse_selection("<answer>Q1</answer> then <answer>Q42 Q1\nQ42</answer>", offered);
    CHECK(s.ids == std::vector<std::string>{"Q42", "Q1"});
  }
  SUBCASE("non-id tokens are ignored") {
    const auto s = parse_selection("<answer>none, [Q1], \"Q42\".</answer>", offered);
    CHECK(s.ids == std::vector<std::string>{"Q1", "Q42"});
    CHECK(s.off_list == 0);
  }
  SUBCASE("empty body") {
    CHECK(parse_selection("<answer></answer>", offered).ids.empty());
  }
}

TEST_CASE("answer item extraction") {
  CHECK(extract_answer_items("<answer> Paris , Lyon </answer>") == std::vector<std::string>{"Paris", "Lyon"});
  CHECK(extract_answer_items("<answer></answer>").empty());
  CHECK_THROWS_AS(extract_answer_items("Paris"), AnswerMarkerError);
}

TEST_CASE("fuzzed responses never select an id that was not offered") {
  oracle::Rng rng(77);
  const std::vector<std::string> pieces = {"<answer>", "</answer>", "Q1", "Q2", "Q3", "Q10", "Q99",
                                           "P5",       ",",         " ",  "\n", "foo", "<answer",
                                           "Q",        "q3",        ";",  "[",  "]",   "Q2Q3"};
  const std::set<std::string> offered = {"Q1", "Q2", "Q3", "P5"};
  std::size_t parsed = 0;
  for (int i = 0; i < 1000; ++i) {
    std::string response;
    const auto n = oracle::pick(rng, 25);
    for (std::size_t k = 0; k < n; ++k) response += pieces[oracle::pick(rng, pieces.size())];
    try {
      const auto s = parse_selection(response, offered);
      ++parsed;
      std::set<std::string> seen;
      for (const auto& id : s.ids) {
        REQUIRE(offered.contains(id));
        REQUIRE(seen.insert(id).second);
      }
    } catch (const AnswerMarkerError&) {
      const auto close = response.rfind("</answer>");
      REQUIRE((close == std::string::npos || response.substr(0, close).rfind("<answer>") == std::string::npos));
    }
  }
  CHECK(parsed > 100);
}

TEST_CASE("parsing is idempotent on its rendered output") {
  oracle::Rng rng(8);
  std::set<std::string> offered;
  for (int i = 1; i <= 20; ++i) offered.insert("Q" + std::to_string(i));
  for (int i = 0; i < 500; ++i) {
    std::string response = "reasoning <answer>";
    const auto n = oracle::pick(rng, 8);
    for (std::size_t k = 0; k < n; ++k) response += "Q" + std::to_string(1 + oracle::pick(rng, 30)) + ", ";
    response += "</answer>";
    const auto once = parse_selection(response, offered);
    const auto twice = parse_selection(render_selection(once.ids), offered);
    REQUIRE(twice.ids == once.ids);
    REQUIRE(twice.off_list == 0);
  }
  CHECK(render_selection({"Q1", "Q2"}) == "<answer>Q1, Q2</answer>");
}

TEST_CASE("oracle-label selects labels contained in the question") {
  std::vector<EntityRecord> ents = {{"Q25188", "Inception", "2010 film", {}, 0},
                                    {"Q1", "Inception Point", "", {}, 0},
                                    {"Q2", "", "", {}, 0}};
  const auto snap = Snapshot::build(ents, {{"P57", "director", ""}}, {});
  const auto d = Disambiguator::oracle_label();
  const auto r = d.disambiguate("Who directed Inception?", candidates({"Q1", "Q25188", "Q2"}), snap);
  CHECK(r.selected == std::vector<std::string>{"Q25188"});
  CHECK_FALSE(r.rejected);
  CHECK(r.backend == DisambiguationBackend::kOracleLabel);
  CHECK(d.disambiguate("WHO DIRECTED INCEPTION", candidates({"Q25188"}), snap).selected.size() == 1);
  const auto none = d.disambiguate("Who directed Memento?", candidates({"Q25188"}), snap);
  CHECK(none.selected.empty());
  CHECK(none.rejected);
}

TEST_CASE("oracle-gold intersects with the gold set") {
  const auto snap = catalog_of(3);
  const std::set<std::string> gold = {"Q1"};
  const auto r = Disambiguator::oracle_gold().disambiguate("q", candidates({"Q1", "Q2"}), snap, &gold);
  CHECK(r.selected == std::vector<std::string>{"Q1"});
  CHECK_THROWS_AS(Disambiguator::oracle_gold().disambiguate("q", candidates({"Q1"}), snap), ConfigError);
}

TEST_CASE("oracle backends are deterministic") {
  const auto snap = Snapshot::load(support::toy("entities.jsonl"), support::toy("predicates.jsonl"),
                                   support::toy("triples.tsv"));
  std::vector<std::string> ids;
  for (const auto& e : snap.entities()) ids.push_back(e.id);
  const auto c = candidates(ids);
  const auto d = Disambiguator::oracle_label();
  const auto a = d.disambiguate("Where was Marie Curie born?", c, snap);
  const auto b = d.disambiguate("Where was Marie Curie born?", c, snap);
  CHECK(a.selected == b.selected);
  CHECK(std::find(a.selected.begin(), a.selected.end(), "Q27") != a.selected.end());
}

TEST_CASE("remote backend with a scripted model") {
  const auto snap = catalog_of(12);
  std::vector<std::string> ids;
  for (int i = 1; i <= 10; ++i) ids.push_back("Q" + std::to_string(i));
  const auto c = candidates(ids);

  SUBCASE("selection stays within the offered ids") {
    auto chat = std::make_shared<support::ScriptedChat>(
        std::vector<std::string>{"I think <answer>Q3, Q11, Q99, Q3</answer>"});
    const auto r = Disambiguator::remote(chat, 2).disambiguate("q", c, snap);
    CHECK(r.selected == std::vector<std::string>{"Q3"});
    CHECK(r.off_list == 2);
    CHECK(r.attempts == 1);
    CHECK(chat->prompts.front().find("Q10 | entity 10 | ") != std::string::npos);
  }
  SUBCASE("marker-less replies are retried") {
    auto chat = std::make_shared<support::ScriptedChat>(
        std::vector<std::string>{"hmm", "still thinking", "<answer>Q2</answer>"});
    const auto r = Disambiguator::remote(chat, 2).disambiguate("q", c, snap);
    CHECK(r.selected == std::vector<std::string>{"Q2"});
    CHECK(r.attempts == 3);
  }
  SUBCASE("retries exhausted gives a rejected selection") {
    auto chat = std::make_shared<support::ScriptedChat>(std::vector<std::string>{"no markers"});
    const auto r = Disambiguator::remote(chat, 1).disambiguate("q", c, snap);
    CHECK(r.selected.empty());
    CHECK(r.rejected);
    CHECK(r.attempts == 2);
  }
  SUBCASE("transport failure surfaces as a remote error") {
    auto chat = std::make_shared<support::ScriptedChat>(std::vector<std::string>{""});
    CHECK_THROWS_AS(Disambiguator::remote(chat, 2).disambiguate("q", c, snap), RemoteError);
  }
  SUBCASE("no candidates means no call") {
    auto chat = std::make_shared<support::ScriptedChat>(std::vector<std::string>{"<answer>Q1</answer>"});
    const auto r = Disambiguator::remote(chat, 2).disambiguate("q", CandidateSet{}, snap);
    CHECK(r.rejected);
    CHECK(chat->calls == 0);
  }
  CHECK_THROWS_AS(Disambiguator::remote(nullptr, 1), ConfigError);
}

TEST_CASE("backend names") {
  CHECK(parse_disambiguation_backend("oracle-gold") == DisambiguationBackend::kOracleGold);
  CHECK(to_string(DisambiguationBackend::kRemote) == "remote");
  CHECK_THROWS_AS(parse_disambiguation_backend("llm"), ConfigError);
}

}
