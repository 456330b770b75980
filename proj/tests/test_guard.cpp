#include "doctest.h"

#include "kgqa/guard.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace kgqa;

namespace {

Snapshot kg_of(std::vector<Triple> triples, std::size_t n_entities = 5, std::size_t n_predicates = 10) {
  auto kg = oracle::make_catalog(n_entities, n_predicates);
  for (auto& t : triples) t.object_is_entity = is_entity_id(t.object);
  return Snapshot::build(kg.entities, kg.predicates, std::move(triples));
}

std::vector<std::string> random_ids(oracle::Rng& rng, char prefix, std::size_t n_max, std::size_t pool) {
  std::vector<std::string> out;
  for (std::size_t i = 0, n = oracle::pick(rng, n_max + 1); i < n; ++i) {
    out.push_back(prefix + std::to_string(1 + oracle::pick(rng, pool)));
  }
  return out;
}

// Executor whose transport always fails.
class ThrowingExecutor : public sparql::QueryExecutor {
 public:
  sparql::AnswerSet execute(std::string_view) override { throw RemoteError("endpoint down", 500); }
  std::string_view name() const noexcept override { return "throwing"; }
};

}  // namespace

TEST_SUITE("guard") {

TEST_CASE("mismatch examples") {
  const auto snap = kg_of({{"Q1", "P1", "Q2"}});
  CHECK_FALSE(check_entity_mismatch(snap, {"Q1"}, {"P1"}));
  CHECK(check_entity_mismatch(snap, {"Q1"}, {"P9"}));
  CHECK_FALSE(check_entity_mismatch(snap, {"Q2"}, {"P1"}));
  CHECK(check_entity_mismatch(snap, {}, {"P1"}));
  CHECK(check_entity_mismatch(snap, {"Q1"}, {}));
  CHECK(check_entity_mismatch(snap, {"Q77"}, {"P1"}));
}

TEST_CASE("any connected entity clears the set, unlike the strict variant") {
  const auto snap = kg_of({{"Q1", "P1", "Q2"}, {"Q3", "P9", "Q4"}});
  CHECK_FALSE(check_entity_mismatch(snap, {"Q1", "Q3"}, {"P9"}));
  CHECK(strict_check_entity_mismatch(snap, {"Q1", "Q3"}, {"P9"}));
  CHECK_FALSE(strict_check_entity_mismatch(snap, {"Q1", "Q3"}, {"P1", "P9"}));
  CHECK_FALSE(strict_check_entity_mismatch(snap, {"Q3"}, {"P9"}));
  CHECK_FALSE(check_entity_mismatch(snap, {"Q3"}, {"P9"}));
  CHECK(strict_check_entity_mismatch(snap, {}, {"P9"}));
  CHECK_FALSE(entity_mismatch(FilterMode::kOff, snap, {}, {}));
  CHECK(entity_mismatch(FilterMode::kStrict, snap, {"Q1", "Q3"}, {"P9"}));
  CHECK_FALSE(entity_mismatch(FilterMode::kAlg1, snap, {"Q1", "Q3"}, {"P9"}));
}

TEST_CASE("mismatch equals the double-loop reference on random graphs") {
  oracle::Rng rng(2718);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto kg = oracle::random_kg(rng, 1 + oracle::pick(rng, 10), 1 + oracle::pick(rng, 8), 100);
    const auto snap = kg.snapshot();
    const auto e = random_ids(rng, 'Q', 4, kg.entities.size() + 2);
    const auto p = random_ids(rng, 'P', 4, kg.predicates.size() + 2);
    REQUIRE(check_entity_mismatch(snap, e, p) == oracle::mismatch(kg.triples, e, p));
    const bool strict = strict_check_entity_mismatch(snap, e, p);
    REQUIRE(strict == oracle::strict_mismatch(kg.triples, e, p));
    if (!strict) REQUIRE_FALSE(check_entity_mismatch(snap, e, p));
  }
}

TEST_CASE("adding a triple never creates a mismatch") {
  oracle::Rng rng(31415);
  for (int trial = 0; trial < 1000; ++trial) {
    auto kg = oracle::random_kg(rng, 1 + oracle::pick(rng, 8), 1 + oracle::pick(rng, 6), 40);
    const auto e = random_ids(rng, 'Q', 3, kg.entities.size());
    const auto p = random_ids(rng, 'P', 3, kg.predicates.size());
    const bool before = check_entity_mismatch(kg.snapshot(), e, p);
    Triple extra{kg.entities[oracle::pick(rng, kg.entities.size())].id, kg.predicates[oracle::pick(rng, kg.predicates.size())].id,
                 kg.entities[oracle::pick(rng, kg.entities.size())].id, true};
    kg.triples.push_back(extra);
    const bool after = check_entity_mismatch(kg.snapshot(), e, p);
    REQUIRE((before || !after));
  }
}

TEST_CASE("pipeline stages") {
  const auto snap = kg_of({{"Q1", "P1", "Q2"}, {"Q3", "P2", "Q4"}});
  sparql::LocalExecutor exec(snap);
  std::size_t calls = 0;
  auto generator = [&](std::string q) {
    return [&calls, q] {
      ++calls;
      return q;
    };
  };
  GuardContext ctx;
  ctx.snapshot = &snap;
  ctx.executor = &exec;

  SUBCASE("disconnected candidates stop before generation") {
    ctx.entities = {"Q1"};
    ctx.predicates = {"P2"};
    ctx.generate = generator("SELECT ?x WHERE { wd:Q1 wdt:P2 ?x }");
    const auto out = guard_pipeline(ctx);
    CHECK_FALSE(out.verdict.accepted);
    CHECK(out.verdict.stage == GuardStage::kPreGenerationFilter);
    CHECK_FALSE(out.generated);
    CHECK(calls == 0);
  }
  SUBCASE("empty result") {
    ctx.entities = {"Q1"};
    ctx.predicates = {"P1"};
    ctx.generate = generator("SELECT ?x WHERE { wd:Q2 wdt:P1 ?x }");
    const auto out = guard_pipeline(ctx);
    CHECK(out.verdict.stage == GuardStage::kEmptyResult);
    CHECK(out.generated);
    CHECK(calls == 1);
  }
  SUBCASE("accepted") {
    ctx.entities = {"Q1"};
    ctx.predicates = {"P1"};
    ctx.generate = generator("SELECT ?x WHERE { wd:Q1 wdt:P1 ?x }");
    const auto out = guard_pipeline(ctx);
    CHECK(out.verdict.accepted);
    CHECK(out.verdict.stage == GuardStage::kAccepted);
    CHECK(out.answers.terms == std::set<std::string>{"Q2"});
  }
  SUBCASE("parse failure") {
    ctx.entities = {"Q1"};
    ctx.predicates = {"P1"};
    ctx.generate = generator("Sorry, no idea");
    CHECK(guard_pipeline(ctx).verdict.stage == GuardStage::kParse);
    ctx.generate = generator("SELECT ?x WHERE { ?x wdt:P1 ?y FILTER(?y) }");
    CHECK(guard_pipeline(ctx).verdict.stage == GuardStage::kParse);
  }
  SUBCASE("execution error") {
    ctx.entities = {"Q1"};
    ctx.predicates = {"P1"};
    ctx.generate = generator("SELECT ?z WHERE { wd:Q1 wdt:P1 ?x }");
    CHECK(guard_pipeline(ctx).verdict.stage == GuardStage::kExecutionError);
    ThrowingExecutor down;
    ctx.executor = &down;
    ctx.generate = generator("SELECT ?x WHERE { wd:Q1 wdt:P1 ?x }");
    CHECK(guard_pipeline(ctx).verdict.stage == GuardStage::kExecutionError);
  }
  SUBCASE("a false ASK is an answer") {
    ctx.entities = {"Q1"};
    ctx.predicates = {"P1"};
    ctx.generate = generator("ASK { wd:Q1 wdt:P1 wd:Q4 }");
    const auto out = guard_pipeline(ctx);
    CHECK(out.verdict.accepted);
    CHECK(out.answers.truth == std::optional<bool>{false});
  }
  SUBCASE("all policies off") {
    ctx.policy = {FilterMode::kOff, false};
    ctx.entities = {};
    ctx.predicates = {};
    ctx.generate = generator("SELECT ?x WHERE { wd:Q2 wdt:P1 ?x }");
    const auto out = guard_pipeline(ctx);
    CHECK(out.verdict.accepted);
    CHECK(out.answers.empty());
  }
  SUBCASE("generator exceptions propagate") {
    ctx.entities = {"Q1"};
    ctx.predicates = {"P1"};
    ctx.generate = []() -> std::string { throw DataError("boom"); };
    CHECK_THROWS_AS(guard_pipeline(ctx), DataError);
  }
}

TEST_CASE("with every policy off, any query that executes is accepted") {
  oracle::Rng rng(55);
  for (int trial = 0; trial < 300; ++trial) {
    const auto kg = oracle::random_kg(rng, 1 + oracle::pick(rng, 6), 1 + oracle::pick(rng, 3), 30);
    const auto snap = kg.snapshot();
    sparql::LocalExecutor exec(snap);
    const auto text = sparql::render(oracle::random_query(rng, kg));
    GuardContext ctx{&snap, {}, {}, [&] { return text; }, &exec, {FilterMode::kOff, false}};
    REQUIRE(guard_pipeline(ctx).verdict.accepted);
  }
}

TEST_CASE("rejection arithmetic") {
  std::vector<RejectionObservation> obs;
  for (int i = 0; i < 10; ++i) obs.push_back({false, false, i < 6, false});
  auto report = rejection_report("toy", obs);
  CHECK(report.execution.caught() == doctest::Approx(0.6));
  CHECK_FALSE(report.execution.false_rejection().has_value());
  report.llm_observed = false;
  CHECK(rejection_csv({report}) ==
        "dataset,llm_rejection,execution,filtering_and_execution,false_llm_rejection,false_execution,"
        "false_filtering_and_execution\n"
        "toy,n/a,60.0,60.0,n/a,n/a,n/a\n");

  std::vector<RejectionObservation> good(4, {true, false, false, false});
  good[0].filter_mismatch = true;
  good[1].llm_rejected = true;
  const auto none_incorrect = rejection_report("ok", good);
  CHECK(rejection_csv({none_incorrect}).find("ok,n/a,n/a,n/a,25.0,0.0,25.0\n") != std::string::npos);
}

TEST_CASE("names round trip") {
  CHECK(to_string(GuardStage::kPreGenerationFilter) == "pre-generation-filter");
  CHECK(to_string(GuardStage::kEmptyResult) == "empty-result");
  CHECK(to_string(GuardStage::kExecutionError) == "execution-error");
  CHECK(parse_filter_mode("strict") == FilterMode::kStrict);
  CHECK(to_string(FilterMode::kAlg1) == "alg1");
  CHECK_THROWS_AS(parse_filter_mode("loose"), ConfigError);
}

}
