#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "kgqa/evaluation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace kgqa;

namespace {

std::set<std::string> ids(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

void check_metrics(const MetricRecord& m, double p, double r, double f1, int acc) {
  CHECK(m.precision == doctest::Approx(p).epsilon(1e-12));
  CHECK(m.recall == doctest::Approx(r).epsilon(1e-12));
  CHECK(m.f1 == doctest::Approx(f1).epsilon(1e-12));
  CHECK(m.acc_at_1 == acc);
}

std::set<std::string> random_set(oracle::Rng& rng) {
  std::set<std::string> out;
  for (std::size_t i = 0, n = oracle::pick(rng, 6); i < n; ++i) out.insert("Q" + std::to_string(oracle::pick(rng, 8)));
  return out;
}

QaExample example(std::string id, std::string dataset, Split split) {
  QaExample e;
  e.id = std::move(id);
  e.dataset = std::move(dataset);
  e.split = split;
  e.question = "q" + e.id;
  e.gold_query = "ASK { wd:Q1 wdt:P1 wd:Q2 }";
  e.gold_entities = {"Q1"};
  return e;
}

// Replaces the first predicate of a gold query with one the graph lacks.
std::string corrupt(const std::string& query) {
  const auto pos = query.find("wdt:P");
  auto end = pos + 5;
  while (end < query.size() && std::isdigit(static_cast<unsigned char>(query[end]))) ++end;
  return query.substr(0, pos) + "wdt:P999" + query.substr(end);
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("metric examples") {
  check_metrics(score_sets(ids({"Q1", "Q2"}), ids({"Q1", "Q2"})), 1, 1, 1, 1);
  check_metrics(score_sets(ids({"Q1", "Q2"}), ids({"Q1", "Q2", "Q3"})), 2.0 / 3.0, 1, 0.8, 1);
  check_metrics(score_sets(ids({"Q1", "Q2"}), ids({"Q3"})), 0, 0, 0, 0);
  check_metrics(score_sets({}, {}), 1, 1, 1, 1);
  check_metrics(score_sets({}, ids({"Q1"})), 0, 0, 0, 0);
  check_metrics(score_sets(ids({"Q1"}), {}), 0, 0, 0, 0);
  check_metrics(score_sets(ids({"Q1", "Q2"}), ids({"Q1"})), 1, 0.5, 2.0 / 3.0, 0);
}

TEST_CASE("ASK answers score as truth terms") {
  sparql::AnswerSet yes, no;
  yes.truth = true;
  no.truth = false;
  CHECK(scoring_terms(yes) == ids({"true"}));
  check_metrics(score(yes, yes), 1, 1, 1, 1);
  check_metrics(score(yes, no), 0, 0, 0, 0);
  check_metrics(score(no, no), 1, 1, 1, 1);
  check_metrics(score(no, sparql::AnswerSet{}), 0, 0, 0, 0);
}

TEST_CASE("metric properties on random sets") {
  oracle::Rng rng(60);
  for (int i = 0; i < 10000; ++i) {
    const auto t = random_set(rng);
    const auto that = random_set(rng);
    const auto m = score_sets(t, that);
    const auto o = oracle::metrics(t, that);
    REQUIRE(std::abs(m.precision - o.p) < 1e-12);
    REQUIRE(std::abs(m.recall - o.r) < 1e-12);
    REQUIRE(std::abs(m.f1 - o.f1) < 1e-12);
    REQUIRE(m.acc_at_1 == o.acc);
    REQUIRE((m.precision >= 0 && m.precision <= 1 && m.recall >= 0 && m.recall <= 1 && m.f1 >= 0 && m.f1 <= 1));
    const auto swapped = score_sets(that, t);
    REQUIRE(swapped.precision == m.recall);
    REQUIRE(swapped.recall == m.precision);
    REQUIRE(std::abs(swapped.f1 - m.f1) < 1e-12);
    if (!t.empty() || !that.empty()) {
      std::size_t common = 0;
      for (const auto& x : t) common += that.count(x);
      REQUIRE((m.f1 == 0.0) == (common == 0));
    }
    if (!t.empty() && !that.empty()) REQUIRE((m.acc_at_1 == 1) == (m.recall == 1.0));
  }
}

TEST_CASE("exact match") {
  CHECK(exact_match_score({"Paris"}, {"paris "}) == 1);
  CHECK(exact_match_score({"Paris"}, {"Paris", "Lyon"}) == 0);
  CHECK(exact_match_score({}, {}) == 1);
  CHECK(exact_match_score({"MÁLAGA"}, {" málaga"}) == 1);
  CHECK(exact_match_score({"a", "b"}, {"B", "A", "a"}) == 1);
}

TEST_CASE("dataset loading") {
  support::TempDir dir;
  const std::string good1 = R"({"id":1,"question":"Q one?","sparql":"SELECT ?x WHERE { wd:Q1 wdt:P1 ?x }","entities":["Q1"],"split":"train"})";
  const std::string good2 = R"({"id":"b","question":"Q two?","sparql":"ASK { wd:Q1 wdt:P2 wd:Q2 }","entities":["Q1","Q2"],"predicates":["P2"],"answers":true,"split":"test","dataset":"x"})";
  SUBCASE("two well-formed lines") {
    const auto load = load_dataset(dir.write("ds.jsonl", good1 + "\n" + good2 + "\n"));
    REQUIRE(load.examples.size() == 2);
    CHECK(load.errors.empty());
    CHECK(load.train_count == 1);
    CHECK(load.test_count == 1);
    CHECK(load.examples[0].id == "1");
    CHECK(load.examples[0].dataset == "ds");
    CHECK(load.examples[0].gold_predicates == std::vector<std::string>{"P1"});
    CHECK_FALSE(load.examples[0].gold_answers.has_value());
    CHECK(load.examples[1].dataset == "x");
    CHECK(load.examples[1].gold_answers->truth == std::optional<bool>{true});
    CHECK(load_dataset(dir.path() / "ds.jsonl", "named").examples[1].dataset == "named");
  }
  SUBCASE("a line missing sparql is reported, the rest load") {
    const std::string bad = R"({"id":2,"question":"no query","entities":["Q1"],"split":"test"})";
    const auto load = load_dataset(dir.write("ds.jsonl", good1 + "\n" + bad + "\n" + good2 + "\nnot json\n"));
    CHECK(load.examples.size() == 2);
    REQUIRE(load.errors.size() == 2);
    CHECK(load.errors[0].line == 2);
    CHECK(load.errors[0].message.find("sparql") != std::string::npos);
    CHECK(load.errors[1].line == 4);
  }
  SUBCASE("invalid values") {
    const std::string bad_split = R"({"id":3,"question":"q","sparql":"ASK {}","entities":["Q1"],"split":"dev"})";
    const std::string bad_entity = R"({"id":4,"question":"q","sparql":"ASK {}","entities":["X1"],"split":"test"})";
    CHECK_THROWS_AS(load_dataset(dir.write("bad.jsonl", bad_split + "\n" + bad_entity + "\n")), DataError);
    CHECK_THROWS_AS(load_dataset(dir.path() / "none.jsonl"), DataError);
  }
  SUBCASE("answer normalization") {
    const std::string line = R"({"id":5,"question":"q","sparql":"ASK {}","entities":[],"split":"test","answers":["http://www.wikidata.org/entity/Q5", 42, "x"]})";
    const auto load = load_dataset(dir.write("n.jsonl", line + "\n"));
    CHECK(load.examples[0].gold_answers->terms == ids({"Q5", "42", "x"}));
  }
}

TEST_CASE("predicates read off a query") {
  CHECK(query_predicates("SELECT ?c WHERE { wd:Q27 wdt:P9 ?x . ?x wdt:P2 ?c . ?c wdt:P9 ?y }") ==
        std::vector<std::string>{"P9", "P2"});
  CHECK(query_predicates("not sparql").empty());
}

TEST_CASE("toy dataset answers agree with the local graph") {
  support::ToyWorld world;
  auto examples = world.questions();
  REQUIRE(examples.size() == 20);
  auto executed = examples;
  for (auto& e : executed) e.gold_answers.reset();
  CHECK(resolve_gold_answers(executed, world.executor).empty());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    INFO(examples[i].id);
    CHECK(scoring_terms(*executed[i].gold_answers) == scoring_terms(*examples[i].gold_answers));
  }
}

TEST_CASE("gold answer cache") {
  support::TempDir dir;
  support::ToyWorld world;
  auto examples = world.questions();
  for (auto& e : examples) e.gold_answers.reset();
  auto cache = GoldAnswerCache::load(dir.path() / "cache.jsonl");
  CHECK(cache.size() == 0);
  CHECK(cache.resolve(examples, world.executor).empty());
  cache.save(dir.path() / "cache.jsonl");
  CHECK(cache.size() == 20);

  // A second run is served from disk: an empty graph would answer nothing.
  const auto empty = oracle::make_catalog(1, 1).snapshot();
  sparql::LocalExecutor blank(empty);
  auto again = world.questions();
  for (auto& e : again) e.gold_answers.reset();
  auto reloaded = GoldAnswerCache::load(dir.path() / "cache.jsonl");
  reloaded.resolve(again, blank);
  for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i].gold_answers == examples[i].gold_answers);
  const auto text = support::read(dir.path() / "cache.jsonl");
  CHECK(text.find("\"fetched_at\":\"20") != std::string::npos);

  // A changed gold query is executed afresh.
  again[0].gold_answers.reset();
  again[0].gold_query = "SELECT ?x WHERE { wd:Q3 wdt:P3 ?x }";
  reloaded.resolve(again, world.executor);
  CHECK(again[0].gold_answers->terms == ids({"Q7"}));
  CHECK_THROWS_AS(GoldAnswerCache::load(dir.write("bad.jsonl", "{}\n")), DataError);
}

TEST_CASE("oracle pipeline on the toy set is perfect") {
  support::ToyWorld world;
  const auto report = evaluate_end_to_end(world.questions(), world.oracle_config());
  REQUIRE(report.datasets.size() == 1);
  const auto& s = report.datasets[0];
  CHECK(s.n == 20);
  CHECK(s.f1 == 1.0);
  CHECK(s.acc_at_1 == 1.0);
  CHECK(s.rejected_share == 0.0);
  for (const auto& o : report.outcomes) {
    CHECK(o.final_stage == "accepted");
    CHECK(o.correct);
    CHECK_FALSE(o.filter_mismatch);
  }
  CHECK(report_csv(report) ==
        "dataset,n,f1,acc_at_1,rejected_pct,disambiguation_error,pre_generation_filter,generation_error,"
        "parse,execution_error,empty_result\n"
        "toy,20,1.000000,1.000000,0.0,0,0,0,0,0,0\n");
}

TEST_CASE("one corrupted gold query out of ten costs a tenth of F1") {
  support::ToyWorld world;
  auto examples = world.questions();
  examples.resize(10);
  REQUIRE(examples[0].gold_query.find("wdt:P3") != std::string::npos);
  examples[0].gold_query = corrupt(examples[0].gold_query);
  const auto report = evaluate_end_to_end(examples, world.oracle_config());
  CHECK(report.datasets[0].f1 == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(report.datasets[0].acc_at_1 == doctest::Approx(0.9).epsilon(1e-12));
  const auto& bad = report.outcomes[0];
  CHECK(bad.rejected());
  CHECK(bad.final_stage == "empty-result");
  CHECK(bad.execution_rejected);
  CHECK_FALSE(bad.correct);
  CHECK(report.datasets[0].stage_failures.at("empty-result") == 1);
  const auto rej = rejection_reports(report);
  REQUIRE(rej.size() == 1);
  CHECK(rej[0].execution.caught() == std::optional<double>{1.0});
  CHECK(rej[0].execution.false_rejection() == std::optional<double>{0.0});
}

TEST_CASE("template generation, label disambiguation and stage tallies") {
  support::ToyWorld world;
  const auto label = Disambiguator::oracle_label();
  const auto templ = Generator::template_baseline();
  auto config = world.oracle_config();
  config.disambiguator = &label;
  config.generator = &templ;
  const auto report = evaluate_end_to_end(world.questions(), config);
  const auto& s = report.datasets[0];
  double f1 = 0.0;
  std::size_t rejected = 0;
  for (const auto& o : report.outcomes) {
    f1 += o.metrics.f1;
    rejected += o.rejected();
    if (o.rejected()) CHECK(std::find(std::begin(kFinalStages), std::end(kFinalStages), o.final_stage) != std::end(kFinalStages));
    if (o.rejected()) CHECK(o.predicted.empty());
  }
  CHECK(std::abs(s.f1 - f1 / 20.0) < 1e-9);
  CHECK(std::abs(s.rejected_share - static_cast<double>(rejected) / 20.0) < 1e-9);
  std::size_t tallied = 0;
  for (const auto& [stage, n] : s.stage_failures) tallied += n;
  CHECK(tallied == rejected);
  CHECK(s.f1 >= 0.0);
  CHECK(s.f1 <= 1.0);
}

TEST_CASE("disambiguation and generation errors become stages") {
  support::ToyWorld world;
  auto chat = std::make_shared<support::ScriptedChat>(std::vector<std::string>{""});
  const auto remote = Disambiguator::remote(chat, 0);
  auto config = world.oracle_config();
  config.disambiguator = &remote;
  auto ex = world.questions().front();
  const auto a = run_pipeline(ex, config);
  CHECK(a.final_stage == "disambiguation-error");
  CHECK(a.execution_rejected);
  CHECK(a.predicted.empty());
  CHECK(a.metrics.f1 == 0.0);

  const auto templ = Generator::template_baseline();
  config = world.oracle_config();
  config.generator = &templ;
  config.policy.filter = FilterMode::kOff;
  ex.gold_entities.clear();
  const auto b = run_pipeline(ex, config);
  CHECK(b.final_stage == "generation-error");
  CHECK(b.filter_mismatch);
}

TEST_CASE("execution policy off keeps empty answers as predictions") {
  support::ToyWorld world;
  auto config = world.oracle_config();
  config.policy.execution = false;
  auto ex = world.questions().front();
  ex.gold_query = corrupt(ex.gold_query);
  const auto o = run_pipeline(ex, config);
  CHECK(o.final_stage == "accepted");
  CHECK(o.execution_rejected);
  CHECK(o.metrics.f1 == 0.0);
}

TEST_CASE("reports are deterministic across worker counts") {
  support::ToyWorld world;
  const auto label = Disambiguator::oracle_label();
  const auto templ = Generator::template_baseline();
  auto config = world.oracle_config();
  config.disambiguator = &label;
  config.generator = &templ;
  const auto one = evaluate_end_to_end(world.questions(), config);
  config.workers = 4;
  const auto four = evaluate_end_to_end(world.questions(), config);
  CHECK(report_csv(one) == report_csv(four));
  CHECK(trace_jsonl(one) == trace_jsonl(four));
  const auto first = trace_jsonl(one).substr(0, trace_jsonl(one).find('\n'));
  CHECK(first.rfind("{\"id\":\"1\",\"dataset\":\"toy\"", 0) == 0);
}

TEST_CASE("summaries group by dataset") {
  std::vector<PipelineOutcome> outcomes(3);
  outcomes[0].dataset = "b";
  outcomes[0].metrics.f1 = 1.0;
  outcomes[0].metrics.acc_at_1 = 1;
  outcomes[1].dataset = "a";
  outcomes[1].final_stage = "parse";
  outcomes[2].dataset = "b";
  outcomes[2].metrics.f1 = 0.5;
  const auto r = summarize(outcomes);
  REQUIRE(r.datasets.size() == 2);
  CHECK(r.datasets[0].dataset == "a");
  CHECK(r.datasets[0].rejected_share == 1.0);
  CHECK(r.datasets[1].f1 == 0.75);
  CHECK(r.datasets[1].acc_at_1 == 0.5);
  CHECK(report_csv(r).find("a,1,0.000000,0.000000,100.0,0,0,0,1,0,0\n") != std::string::npos);
}

TEST_CASE("generalization splits") {
  std::map<std::string, std::vector<QaExample>> sets;
  for (const char* name : {"qald10", "rubq2", "pat", "lcquad2"}) {
    for (const char* id : {"3", "1", "2"}) sets[name].push_back(example(id, name, Split::kTrain));
    sets[name].push_back(example("9", name, Split::kTest));
  }
  const auto split = make_generalization_splits(sets, "qald10");
  REQUIRE(split.train.size() == 9);
  CHECK(split.train[0].dataset == "lcquad2");
  CHECK(split.train[0].id == "1");
  CHECK(split.train[2].id == "3");
  CHECK(split.train[3].dataset == "pat");
  CHECK(split.train[8].dataset == "rubq2");
  for (const auto& e : split.train) CHECK(e.dataset != "qald10");
  REQUIRE(split.test.size() == 1);
  CHECK(split.test[0].dataset == "qald10");
  CHECK_THROWS_AS(make_generalization_splits(sets, "webqsp"), ConfigError);

  std::map<std::string, std::vector<QaExample>> two = {{"a", sets["pat"]}, {"b", sets["rubq2"]}};
  const auto pair = make_generalization_splits(two, "a");
  CHECK(pair.train.size() == 3);
  CHECK(pair.train[0].dataset == "rubq2");
  CHECK(training_sources(pair.train)[0].question_id == "1");
}

TEST_CASE("recall examples follow the gold ids") {
  auto e = example("1", "d", Split::kTest);
  e.gold_predicates = {"P1", "P2"};
  const auto r = recall_examples({e}, CatalogKind::kPredicate);
  CHECK(r[0].gold == ids({"P1", "P2"}));
  CHECK(r[0].query == "q1");
}

}
