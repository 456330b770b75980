// kgqa: command-line front end for every pipeline stage.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "kgqa/chat_client.hpp"
#include "kgqa/disambiguation.hpp"
#include "kgqa/error.hpp"
#include "kgqa/evaluation.hpp"
#include "kgqa/generation.hpp"
#include "kgqa/guard.hpp"
#include "kgqa/kgstore.hpp"
#include "kgqa/retrieval.hpp"
#include "kgqa/sparql.hpp"

#ifndef KGQA_DATA_DIR
#define KGQA_DATA_DIR "data/toy"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace kgqa::cli {
namespace {

constexpr const char* kFooter = R"(Output files (under --out):
  index-build     entity.index, predicate.index, index_build.json
  index-sweep     sweep_entity.csv or sweep_predicate.csv
  retrieve        retrieve.json
  disambiguate    disambiguate.json
  generate        query.sparql
  filter-check    filter_check.txt
  execute         answers.json
  evaluate        report.csv, trace.jsonl
  reject-report   rejection.csv, rejection_trace.jsonl
  make-splits     train.jsonl, test.jsonl, train_pairs.jsonl
  augment-train   train_augmented.jsonl

Configuration precedence: flags > --config JSON file > built-in defaults.
API keys are read only from the environment variables named in the config
file (reasoner.api_key_env, generator_client.api_key_env).

Exit codes: 0 success, 2 config error, 3 data error, 4 remote-service error.
Errors are printed to stderr as one line: kgqa: error=<kind> code=<n> message=<text>)";

struct ClientSettings {
  std::string base_url;
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  std::int64_t timeout_ms = 60000;
  std::size_t max_retries = 3;
  double temperature = 0.0;
  std::size_t max_in_flight = 4;

  ReasonerClientConfig to_config() const {
    ReasonerClientConfig c;
    c.base_url = base_url;
    c.model_name = model;
    c.api_key_env = api_key_env;
    c.timeout = std::chrono::milliseconds(timeout_ms);
    c.max_retries = max_retries;
    c.temperature = temperature;
    c.max_in_flight = max_in_flight;
    return c;
  }
};

struct RunConfig {
  fs::path kg_entities = fs::path(KGQA_DATA_DIR) / "entities.jsonl";
  fs::path kg_predicates = fs::path(KGQA_DATA_DIR) / "predicates.jsonl";
  fs::path kg_triples = fs::path(KGQA_DATA_DIR) / "triples.tsv";
  fs::path dataset = fs::path(KGQA_DATA_DIR) / "questions.jsonl";
  std::string split = "all";
  fs::path index_dir;
  std::string preset;
  std::optional<double> entity_k1, entity_b, predicate_k1, predicate_b;
  std::size_t min_degree = kDefaultMinDegree;
  std::size_t entity_k = kShortlistK;
  std::size_t predicate_k = kShortlistK;
  std::string disambiguator = "oracle-label";
  std::size_t max_parse_retries = 2;
  ClientSettings reasoner;
  std::string generator = "template";
  ClientSettings generator_client;
  fs::path fewshot;
  std::vector<std::string> refusal_phrases = default_refusal_phrases();
  std::string filter = "alg1";
  bool execution_policy = true;
  std::string executor = "local";
  sparql::EndpointConfig endpoint;
  fs::path gold_cache;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  fs::path out = "kgqa-out";
};

// Flag values; unset options leave the config-file or default value alone.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> kg_entities, kg_predicates, kg_triples, dataset, split, index_dir;
  std::optional<std::string> preset;
  std::optional<double> entity_k1, entity_b, predicate_k1, predicate_b;
  std::optional<std::size_t> min_degree, entity_k, predicate_k;
  std::optional<std::string> disambiguator;
  std::optional<std::size_t> max_parse_retries;
  std::optional<std::string> reasoner_url, reasoner_model;
  std::optional<std::string> generator, generator_url, generator_model, fewshot;
  std::optional<std::string> filter, execution_policy;
  std::optional<std::string> executor, endpoint, gold_cache;
  std::optional<std::int64_t> endpoint_timeout_ms;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> out;
};

// ---- config file ----------------------------------------------------------

template <typename T>
T typed(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key \"" + key + "\" has the wrong type");
  }
}

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError("config \"" + where + "\" must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError("unknown config key \"" + where + it.key() + "\"");
  }
}

void apply_client(ClientSettings& c, const json& obj, const std::string& where) {
  reject_unknown(obj, where + ".", {"base_url", "model", "api_key_env", "timeout_ms", "max_retries",
                                    "temperature", "max_in_flight"});
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const auto key = where + "." + it.key();
    if (it.key() == "base_url") c.base_url = typed<std::string>(*it, key);
    if (it.key() == "model") c.model = typed<std::string>(*it, key);
    if (it.key() == "api_key_env") c.api_key_env = typed<std::string>(*it, key);
    if (it.key() == "timeout_ms") c.timeout_ms = typed<std::int64_t>(*it, key);
    if (it.key() == "max_retries") c.max_retries = typed<std::size_t>(*it, key);
    if (it.key() == "temperature") c.temperature = typed<double>(*it, key);
    if (it.key() == "max_in_flight") c.max_in_flight = typed<std::size_t>(*it, key);
  }
}

void apply_bm25(std::optional<double>& k1, std::optional<double>& b, const json& obj,
                const std::string& where) {
  reject_unknown(obj, where + ".", {"k1", "b"});
  if (obj.contains("k1")) k1 = typed<double>(obj["k1"], where + ".k1");
  if (obj.contains("b")) b = typed<double>(obj["b"], where + ".b");
}

void apply_config_file(RunConfig& rc, const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  reject_unknown(doc, "",
                 {"kg", "dataset", "split", "index_dir", "preset", "entity_bm25", "predicate_bm25",
                  "min_degree", "entity_k", "predicate_k", "disambiguator", "max_parse_retries",
                  "reasoner", "generator", "generator_client", "fewshot", "refusal_phrases",
                  "filter", "execution_policy", "executor", "endpoint", "gold_cache", "seed",
                  "workers", "out"});
  // Relative paths in the file resolve against the file's directory.
  const auto base = path.parent_path();
  auto path_at = [&](const json& v, const std::string& key) {
    fs::path p = typed<std::string>(v, key);
    return p.is_relative() ? base / p : p;
  };
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const auto& key = it.key();
    const auto& v = *it;
    if (key == "kg") {
      reject_unknown(v, "kg.", {"entities", "predicates", "triples"});
      if (v.contains("entities")) rc.kg_entities = path_at(v["entities"], "kg.entities");
      if (v.contains("predicates")) rc.kg_predicates = path_at(v["predicates"], "kg.predicates");
      if (v.contains("triples")) rc.kg_triples = path_at(v["triples"], "kg.triples");
    } else if (key == "dataset") {
      rc.dataset = path_at(v, key);
    } else if (key == "split") {
      rc.split = typed<std::string>(v, key);
    } else if (key == "index_dir") {
      rc.index_dir = path_at(v, key);
    } else if (key == "preset") {
      rc.preset = typed<std::string>(v, key);
    } else if (key == "entity_bm25") {
      apply_bm25(rc.entity_k1, rc.entity_b, v, key);
    } else if (key == "predicate_bm25") {
      apply_bm25(rc.predicate_k1, rc.predicate_b, v, key);
    } else if (key == "min_degree") {
      rc.min_degree = typed<std::size_t>(v, key);
    } else if (key == "entity_k") {
      rc.entity_k = typed<std::size_t>(v, key);
    } else if (key == "predicate_k") {
      rc.predicate_k = typed<std::size_t>(v, key);
    } else if (key == "disambiguator") {
      rc.disambiguator = typed<std::string>(v, key);
    } else if (key == "max_parse_retries") {
      rc.max_parse_retries = typed<std::size_t>(v, key);
    } else if (key == "reasoner") {
      apply_client(rc.reasoner, v, key);
    } else if (key == "generator") {
      rc.generator = typed<std::string>(v, key);
    } else if (key == "generator_client") {
      apply_client(rc.generator_client, v, key);
    } else if (key == "fewshot") {
      rc.fewshot = path_at(v, key);
    } else if (key == "refusal_phrases") {
      rc.refusal_phrases = typed<std::vector<std::string>>(v, key);
    } else if (key == "filter") {
      rc.filter = typed<std::string>(v, key);
    } else if (key == "execution_policy") {
      rc.execution_policy = typed<bool>(v, key);
    } else if (key == "executor") {
      rc.executor = typed<std::string>(v, key);
    } else if (key == "endpoint") {
      reject_unknown(v, "endpoint.", {"base_url", "timeout_ms", "max_retries", "politeness_ms",
                                      "user_agent", "max_in_flight"});
      auto& e = rc.endpoint;
      if (v.contains("base_url")) e.base_url = typed<std::string>(v["base_url"], "endpoint.base_url");
      if (v.contains("timeout_ms")) {
        e.timeout = std::chrono::milliseconds(typed<std::int64_t>(v["timeout_ms"], "endpoint.timeout_ms"));
      }
      if (v.contains("max_retries")) e.max_retries = typed<std::size_t>(v["max_retries"], "endpoint.max_retries");
      if (v.contains("politeness_ms")) {
        e.politeness_delay =
            std::chrono::milliseconds(typed<std::int64_t>(v["politeness_ms"], "endpoint.politeness_ms"));
      }
      if (v.contains("user_agent")) e.user_agent = typed<std::string>(v["user_agent"], "endpoint.user_agent");
      if (v.contains("max_in_flight")) {
        e.max_in_flight = typed<std::size_t>(v["max_in_flight"], "endpoint.max_in_flight");
      }
    } else if (key == "gold_cache") {
      rc.gold_cache = path_at(v, key);
    } else if (key == "seed") {
      rc.seed = typed<std::uint64_t>(v, key);
    } else if (key == "workers") {
      rc.workers = typed<std::size_t>(v, key);
    } else if (key == "out") {
      rc.out = path_at(v, key);
    }
  }
}

template <typename T, typename U>
void overlay(T& target, const std::optional<U>& flag) {
  if (flag) target = *flag;
}

RunConfig resolve(const Flags& f) {
  RunConfig rc;
  if (f.config) apply_config_file(rc, *f.config);
  overlay(rc.kg_entities, f.kg_entities);
  overlay(rc.kg_predicates, f.kg_predicates);
  overlay(rc.kg_triples, f.kg_triples);
  overlay(rc.dataset, f.dataset);
  overlay(rc.split, f.split);
  overlay(rc.index_dir, f.index_dir);
  overlay(rc.preset, f.preset);
  if (f.entity_k1) rc.entity_k1 = f.entity_k1;
  if (f.entity_b) rc.entity_b = f.entity_b;
  if (f.predicate_k1) rc.predicate_k1 = f.predicate_k1;
  if (f.predicate_b) rc.predicate_b = f.predicate_b;
  overlay(rc.min_degree, f.min_degree);
  overlay(rc.entity_k, f.entity_k);
  overlay(rc.predicate_k, f.predicate_k);
  overlay(rc.disambiguator, f.disambiguator);
  overlay(rc.max_parse_retries, f.max_parse_retries);
  overlay(rc.reasoner.base_url, f.reasoner_url);
  overlay(rc.reasoner.model, f.reasoner_model);
  overlay(rc.generator, f.generator);
  overlay(rc.generator_client.base_url, f.generator_url);
  overlay(rc.generator_client.model, f.generator_model);
  overlay(rc.fewshot, f.fewshot);
  overlay(rc.filter, f.filter);
  if (f.execution_policy) rc.execution_policy = *f.execution_policy == "on";
  overlay(rc.executor, f.executor);
  overlay(rc.endpoint.base_url, f.endpoint);
  if (f.endpoint_timeout_ms) rc.endpoint.timeout = std::chrono::milliseconds(*f.endpoint_timeout_ms);
  overlay(rc.gold_cache, f.gold_cache);
  overlay(rc.seed, f.seed);
  overlay(rc.workers, f.workers);
  overlay(rc.out, f.out);

  if (rc.split != "all" && rc.split != "train" && rc.split != "test") {
    throw ConfigError("split must be all, train or test");
  }
  if (rc.executor != "local" && rc.executor != "remote") {
    throw ConfigError("executor must be local or remote, got \"" + rc.executor + "\"");
  }
  if (rc.entity_k == 0 || rc.predicate_k == 0) throw ConfigError("shortlist sizes must be >= 1");
  if (rc.workers == 0) throw ConfigError("workers must be >= 1");
  parse_filter_mode(rc.filter);
  parse_disambiguation_backend(rc.disambiguator);
  parse_generator_backend(rc.generator);
  if (!rc.preset.empty()) find_preset(rc.preset);
  return rc;
}

// ---- flag registration ------------------------------------------------------

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
  app->add_option("--out", f.out, "output directory (default kgqa-out)");
  app->add_option("--seed", f.seed, "random seed (default 0)");
}

void add_kg(CLI::App* app, Flags& f) {
  app->add_option("--kg-entities", f.kg_entities, "entity catalog (JSON Lines)");
  app->add_option("--kg-predicates", f.kg_predicates, "predicate catalog (JSON Lines)");
  app->add_option("--kg-triples", f.kg_triples, "triples (TSV: subject, predicate, object)");
}

void add_index(CLI::App* app, Flags& f) {
  app->add_option("--preset", f.preset, "BM25 preset: qald10|lcquad2|rubq2|pat");
  app->add_option("--entity-k1", f.entity_k1, "entity index k1 (overrides the preset)");
  app->add_option("--entity-b", f.entity_b, "entity index b (overrides the preset)");
  app->add_option("--predicate-k1", f.predicate_k1, "predicate index k1 (overrides the preset)");
  app->add_option("--predicate-b", f.predicate_b, "predicate index b (overrides the preset)");
  app->add_option("--min-degree", f.min_degree, "drop entities with fewer distinct predicates (default 10)");
  app->add_option("--index-dir", f.index_dir, "load entity.index and predicate.index from here");
}

void add_shortlist(CLI::App* app, Flags& f) {
  app->add_option("--entity-k", f.entity_k, "entity candidates kept (default 10)");
  app->add_option("--predicate-k", f.predicate_k, "predicate candidates kept (default 10)");
}

void add_disambiguation(CLI::App* app, Flags& f) {
  app->add_option("--disambiguator", f.disambiguator, "remote|oracle-label|oracle-gold (default oracle-label)");
  app->add_option("--max-parse-retries", f.max_parse_retries, "re-asks when the reply lacks answer markers (default 2)");
  app->add_option("--reasoner-url", f.reasoner_url, "chat-completions URL for the remote disambiguator");
  app->add_option("--reasoner-model", f.reasoner_model, "model name for the remote disambiguator");
}

void add_generation(CLI::App* app, Flags& f) {
  app->add_option("--generator", f.generator, "remote-llm|template|gold-passthrough (default template)");
  app->add_option("--generator-url", f.generator_url, "chat-completions URL for the remote generator");
  app->add_option("--generator-model", f.generator_model, "model name for the remote generator");
  app->add_option("--fewshot", f.fewshot, "few-shot examples (JSON Lines with question, sparql)");
}

void add_guard(CLI::App* app, Flags& f) {
  app->add_option("--filter", f.filter, "pre-generation filter: off|alg1|strict (default alg1)");
  app->add_option("--execution-policy", f.execution_policy, "reject empty results: on|off (default on)")
      ->check(CLI::IsMember({"on", "off"}));
}

void add_executor(CLI::App* app, Flags& f) {
  app->add_option("--executor", f.executor, "local|remote (default local)");
  app->add_option("--endpoint", f.endpoint, "SPARQL endpoint URL for the remote executor");
  app->add_option("--endpoint-timeout-ms", f.endpoint_timeout_ms, "remote query timeout (default 60000)");
}

void add_dataset(CLI::App* app, Flags& f) {
  app->add_option("--dataset", f.dataset, "question file (JSON Lines)");
  app->add_option("--split", f.split, "all|train|test (default all)");
}

// ---- shared plumbing --------------------------------------------------------

Snapshot load_snapshot(const RunConfig& rc) {
  return Snapshot::load(rc.kg_entities, rc.kg_predicates, rc.kg_triples);
}

Bm25Params params_for(const RunConfig& rc, CatalogKind kind) {
  Bm25Params p;
  if (!rc.preset.empty()) {
    const auto& preset = find_preset(rc.preset);
    p = kind == CatalogKind::kEntity ? preset.entity : preset.predicate;
  }
  const auto& k1 = kind == CatalogKind::kEntity ? rc.entity_k1 : rc.predicate_k1;
  const auto& b = kind == CatalogKind::kEntity ? rc.entity_b : rc.predicate_b;
  if (k1) p.k1 = *k1;
  if (b) p.b = *b;
  p.validate();
  return p;
}

Bm25Index build_index(const RunConfig& rc, const Snapshot& snap, CatalogKind kind) {
  if (kind == CatalogKind::kEntity) {
    const auto kept = snap.prune_by_degree(rc.min_degree);
    return Bm25Index::build(snap, kind, params_for(rc, kind), &kept);
  }
  return Bm25Index::build(snap, kind, params_for(rc, kind));
}

struct Indexes {
  Bm25Index entity;
  Bm25Index predicate;
};

Indexes indexes_for(const RunConfig& rc, const Snapshot& snap) {
  if (!rc.index_dir.empty()) {
    auto e = Bm25Index::load(rc.index_dir / "entity.index");
    auto p = Bm25Index::load(rc.index_dir / "predicate.index");
    if (e.kind() != CatalogKind::kEntity || p.kind() != CatalogKind::kPredicate) {
      throw DataError("index files in " + rc.index_dir.string() + " have the wrong kinds");
    }
    return {std::move(e), std::move(p)};
  }
  return {build_index(rc, snap, CatalogKind::kEntity), build_index(rc, snap, CatalogKind::kPredicate)};
}

std::shared_ptr<ChatClient> chat_client(const ClientSettings& settings) {
  auto config = settings.to_config();
  config.validate();
  return std::make_shared<HttpChatClient>(std::move(config));
}

Disambiguator make_disambiguator(const RunConfig& rc) {
  switch (parse_disambiguation_backend(rc.disambiguator)) {
    case DisambiguationBackend::kRemote:
      return Disambiguator::remote(chat_client(rc.reasoner), rc.max_parse_retries);
    case DisambiguationBackend::kOracleLabel:
      return Disambiguator::oracle_label();
    case DisambiguationBackend::kOracleGold:
      return Disambiguator::oracle_gold();
  }
  throw ConfigError("unknown disambiguator");
}

Generator make_generator(const RunConfig& rc) {
  switch (parse_generator_backend(rc.generator)) {
    case GeneratorBackend::kRemoteLlm:
      return Generator::remote(chat_client(rc.generator_client));
    case GeneratorBackend::kTemplate:
      return Generator::template_baseline();
    case GeneratorBackend::kGoldPassthrough:
      return Generator::gold_passthrough();
  }
  throw ConfigError("unknown generator");
}

std::unique_ptr<sparql::QueryExecutor> make_executor(const RunConfig& rc, const Snapshot* snap) {
  if (rc.executor == "remote") {
    rc.endpoint.validate();
    return std::make_unique<sparql::RemoteExecutor>(rc.endpoint);
  }
  return std::make_unique<sparql::LocalExecutor>(*snap);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << content)) throw DataError("cannot write " + path.string());
}

fs::path prepare_out(const RunConfig& rc) {
  std::error_code ec;
  fs::create_directories(rc.out, ec);
  if (ec) throw ConfigError("cannot create output directory " + rc.out.string() + ": " + ec.message());
  return rc.out;
}

std::vector<std::string> split_ids(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& item : raw) {
    std::stringstream ss(item);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) out.push_back(tok);
    }
  }
  return out;
}

std::vector<QaExample> load_examples(const RunConfig& rc) {
  auto load = load_dataset(rc.dataset);
  for (const auto& e : load.errors) {
    std::cerr << "kgqa: warning: " << rc.dataset.string() << ":" << e.line << ": " << e.message << "\n";
  }
  std::cerr << "kgqa: loaded " << load.examples.size() << " examples from " << rc.dataset.string()
            << " (train " << load.train_count << ", test " << load.test_count << ", "
            << load.errors.size() << " rejected lines)\n";
  std::vector<QaExample> out;
  for (auto& ex : load.examples) {
    if (rc.split == "all" || rc.split == to_string(ex.split)) out.push_back(std::move(ex));
  }
  if (out.empty()) throw DataError("no examples in split " + rc.split + " of " + rc.dataset.string());
  return out;
}

void fill_gold(const RunConfig& rc, std::vector<QaExample>& examples, sparql::QueryExecutor& executor) {
  std::vector<std::string> problems;
  if (!rc.gold_cache.empty()) {
    auto cache = GoldAnswerCache::load(rc.gold_cache);
    problems = cache.resolve(examples, executor);
    cache.save(rc.gold_cache);
  } else {
    problems = resolve_gold_answers(examples, executor);
  }
  for (const auto& p : problems) std::cerr << "kgqa: warning: " << p << "\n";
}

ordered_json hits_json(const CandidateSet& set, const Snapshot& snap) {
  ordered_json arr = ordered_json::array();
  for (const auto& h : set.hits) {
    std::string label;
    if (const auto* e = snap.find_entity(h.id)) label = e->label;
    if (const auto* p = snap.find_predicate(h.id)) label = p->label;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", h.score);
    arr.push_back({{"id", h.id}, {"label", label}, {"score", std::string(buf)}});
  }
  return arr;
}

ordered_json answers_json(const sparql::AnswerSet& a) {
  ordered_json j;
  j["terms"] = a.terms;
  if (a.truth) j["truth"] = *a.truth;
  if (!a.rows.empty()) j["rows"] = a.rows;
  return j;
}

std::string example_line(const QaExample& ex) {
  ordered_json j;
  j["id"] = ex.id;
  j["question"] = ex.question;
  j["sparql"] = ex.gold_query;
  j["entities"] = ex.gold_entities;
  j["predicates"] = ex.gold_predicates;
  if (ex.gold_answers) {
    if (ex.gold_answers->truth) {
      j["answers"] = *ex.gold_answers->truth;
    } else {
      j["answers"] = ex.gold_answers->terms;
    }
  }
  j["split"] = std::string(to_string(ex.split));
  j["dataset"] = ex.dataset;
  return j.dump();
}

PipelineConfig pipeline_config(const RunConfig& rc, const Snapshot& snap, const Indexes& idx,
                               const Disambiguator& dis, const Generator& gen,
                               sparql::QueryExecutor& exec) {
  PipelineConfig pc;
  pc.snapshot = &snap;
  pc.entity_index = &idx.entity;
  pc.predicate_index = &idx.predicate;
  pc.entity_k = rc.entity_k;
  pc.predicate_k = rc.predicate_k;
  pc.disambiguator = &dis;
  pc.generator = &gen;
  if (!rc.fewshot.empty()) pc.fewshot = load_fewshot_file(rc.fewshot);
  pc.executor = &exec;
  pc.policy = {parse_filter_mode(rc.filter), rc.execution_policy};
  pc.workers = rc.workers;
  return pc;
}

// ---- subcommands ------------------------------------------------------------

int cmd_index_build(const RunConfig& rc) {
  const auto snap = load_snapshot(rc);
  const auto dir = prepare_out(rc);
  const auto kept = snap.prune_by_degree(rc.min_degree);
  const auto e = Bm25Index::build(snap, CatalogKind::kEntity, params_for(rc, CatalogKind::kEntity), &kept);
  const auto p = build_index(rc, snap, CatalogKind::kPredicate);
  e.save(dir / "entity.index");
  p.save(dir / "predicate.index");
  ordered_json summary;
  summary["entities_total"] = snap.entities().size();
  summary["entities_indexed"] = e.size();
  summary["min_degree"] = rc.min_degree;
  summary["predicates_indexed"] = p.size();
  summary["entity_k1"] = e.params().k1;
  summary["entity_b"] = e.params().b;
  summary["predicate_k1"] = p.params().k1;
  summary["predicate_b"] = p.params().b;
  write_file(dir / "index_build.json", summary.dump(2) + "\n");
  std::cout << "indexed " << e.size() << " of " << snap.entities().size() << " entities and "
            << p.size() << " predicates into " << dir.string() << "\n";
  return 0;
}

struct SweepArgs {
  std::string kind = "entity";
  std::string k1 = "0.5:3.0:0.5";
  std::string b = "0.0:1.0:0.25";
  std::size_t k = kShortlistK;
};

int cmd_index_sweep(const RunConfig& rc, const SweepArgs& args) {
  const auto kind = parse_catalog_kind(args.kind);
  const auto k1_grid = parse_grid(args.k1);
  const auto b_grid = parse_grid(args.b);
  if (args.k == 0) throw ConfigError("--k must be >= 1");
  const auto snap = load_snapshot(rc);
  const auto examples = recall_examples(load_examples(rc), kind);
  const auto kept = snap.prune_by_degree(rc.min_degree);
  const std::set<std::string>* keep = kind == CatalogKind::kEntity ? &kept : nullptr;
  const IndexBuilder builder = [&](const Bm25Params& params) {
    return Bm25Index::build(snap, kind, params, keep);
  };
  const auto result = sweep(builder, examples, k1_grid, b_grid, args.k, rc.workers);
  const auto dir = prepare_out(rc);
  const auto file = dir / ("sweep_" + std::string(to_string(kind)) + ".csv");
  write_file(file, sweep_csv(result));
  std::printf("best k1=%g b=%g recall@%zu=%.6f (%zu cells) -> %s\n", result.best.k1, result.best.b,
              args.k, result.best_recall, result.table.size(), file.string().c_str());
  return 0;
}

int cmd_retrieve(const RunConfig& rc, const std::string& question) {
  const auto snap = load_snapshot(rc);
  const auto idx = indexes_for(rc, snap);
  const auto ents = idx.entity.search(question, rc.entity_k);
  const auto preds = idx.predicate.search(question, rc.predicate_k);
  ordered_json j;
  j["question"] = question;
  j["entities"] = hits_json(ents, snap);
  j["predicates"] = hits_json(preds, snap);
  const auto text = j.dump(2) + "\n";
  write_file(prepare_out(rc) / "retrieve.json", text);
  std::cout << text;
  return 0;
}

int cmd_disambiguate(const RunConfig& rc, const std::string& question,
                     const std::vector<std::string>& gold_raw) {
  const auto snap = load_snapshot(rc);
  const auto idx = indexes_for(rc, snap);
  const auto dis = make_disambiguator(rc);
  const auto gold_ids = split_ids(gold_raw);
  const std::set<std::string> gold(gold_ids.begin(), gold_ids.end());
  const auto ents = idx.entity.search(question, rc.entity_k);
  const auto preds = idx.predicate.search(question, rc.predicate_k);
  const auto* gold_ptr = gold_raw.empty() ? nullptr : &gold;
  const auto e = dis.disambiguate(question, ents, snap, gold_ptr);
  const auto p = dis.disambiguate(question, preds, snap, gold_ptr);
  ordered_json j;
  j["question"] = question;
  j["backend"] = std::string(to_string(dis.backend()));
  j["entities"] = e.selected;
  j["predicates"] = p.selected;
  j["entities_rejected"] = e.rejected;
  j["predicates_rejected"] = p.rejected;
  const auto text = j.dump(2) + "\n";
  write_file(prepare_out(rc) / "disambiguate.json", text);
  std::cout << text;
  return 0;
}

int cmd_generate(const RunConfig& rc, const std::string& question,
                 const std::vector<std::string>& entities, const std::vector<std::string>& predicates,
                 const std::string& gold_query) {
  const auto snap = load_snapshot(rc);
  const auto gen = make_generator(rc);
  GenerationRequest req;
  req.question = question;
  req.entities = entity_lines(snap, split_ids(entities));
  req.predicates = predicate_lines(snap, split_ids(predicates));
  if (!rc.fewshot.empty()) req.fewshot_examples = load_fewshot_file(rc.fewshot);
  const auto result = gen.generate(req, gold_query);
  write_file(prepare_out(rc) / "query.sparql", result.query_text + "\n");
  std::cout << result.query_text << "\n";
  return 0;
}

int cmd_filter_check(const RunConfig& rc, const std::vector<std::string>& entities,
                     const std::vector<std::string>& predicates) {
  const auto snap = load_snapshot(rc);
  const auto verdict = pre_generation_filter(parse_filter_mode(rc.filter), snap, split_ids(entities),
                                             split_ids(predicates));
  const std::string line = verdict.accepted ? "ACCEPT" : "REJECT " + std::string(to_string(verdict.stage));
  write_file(prepare_out(rc) / "filter_check.txt", line + "\n");
  std::cout << line << "\n";
  return 0;
}

int cmd_execute(const RunConfig& rc, std::string query, const std::string& query_file) {
  if (!query_file.empty()) {
    std::ifstream in(query_file, std::ios::binary);
    if (!in) throw DataError("cannot open " + query_file);
    query.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  if (query.empty()) throw ConfigError("execute needs --query or --query-file");
  std::optional<Snapshot> snap;
  if (rc.executor == "local") snap = load_snapshot(rc);
  auto exec = make_executor(rc, snap ? &*snap : nullptr);
  const auto answers = exec->execute(query);
  const auto text = answers_json(answers).dump(2) + "\n";
  write_file(prepare_out(rc) / "answers.json", text);
  std::cout << text;
  return 0;
}

int cmd_evaluate(const RunConfig& rc) {
  const auto snap = load_snapshot(rc);
  const auto idx = indexes_for(rc, snap);
  const auto dis = make_disambiguator(rc);
  const auto gen = make_generator(rc);
  auto exec = make_executor(rc, &snap);
  auto examples = load_examples(rc);
  fill_gold(rc, examples, *exec);
  const auto pc = pipeline_config(rc, snap, idx, dis, gen, *exec);
  const auto report = evaluate_end_to_end(examples, pc);
  const auto dir = prepare_out(rc);
  const auto csv = report_csv(report);
  write_file(dir / "report.csv", csv);
  write_file(dir / "trace.jsonl", trace_jsonl(report));
  std::cout << csv;
  return 0;
}

int cmd_reject_report(const RunConfig& rc, bool llm_baseline) {
  const auto snap = load_snapshot(rc);
  const auto idx = indexes_for(rc, snap);
  const auto dis = make_disambiguator(rc);
  const auto gen = make_generator(rc);
  auto exec = make_executor(rc, &snap);
  auto examples = load_examples(rc);
  fill_gold(rc, examples, *exec);
  auto pc = pipeline_config(rc, snap, idx, dis, gen, *exec);
  // Every generation runs to completion; the filter verdict is recorded, not enforced.
  pc.observed_filter = parse_filter_mode(rc.filter) == FilterMode::kOff ? FilterMode::kAlg1
                                                                         : parse_filter_mode(rc.filter);
  pc.policy = {FilterMode::kOff, false};
  auto report = evaluate_end_to_end(examples, pc);
  if (llm_baseline) {
    auto client = chat_client(rc.generator_client);
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto direct = direct_answer(examples[i].question, *client, rc.refusal_phrases);
      report.outcomes[i].llm_rejected = direct.llm_rejected;
    }
  }
  const auto dir = prepare_out(rc);
  auto reports = rejection_reports(report);
  for (auto& r : reports) r.llm_observed = llm_baseline;
  const auto csv = rejection_csv(reports);
  write_file(dir / "rejection.csv", csv);
  write_file(dir / "rejection_trace.jsonl", trace_jsonl(report));
  std::cout << csv;
  return 0;
}

int cmd_make_splits(const RunConfig& rc, const std::vector<std::string>& inputs,
                    const std::string& held_out, std::size_t distractors) {
  std::map<std::string, std::vector<QaExample>> datasets;
  for (const auto& spec : inputs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw ConfigError("--input expects name=path, got \"" + spec + "\"");
    }
    const auto name = spec.substr(0, eq);
    if (datasets.contains(name)) throw ConfigError("dataset \"" + name + "\" given twice");
    datasets[name] = load_dataset(spec.substr(eq + 1), name).examples;
  }
  const auto split = make_generalization_splits(datasets, held_out);
  const auto dir = prepare_out(rc);
  std::string train, test;
  for (const auto& ex : split.train) train += example_line(ex) + "\n";
  for (const auto& ex : split.test) test += example_line(ex) + "\n";
  write_file(dir / "train.jsonl", train);
  write_file(dir / "test.jsonl", test);
  const auto snap = load_snapshot(rc);
  const auto idx = indexes_for(rc, snap);
  const auto pairs = augment_training_pairs(training_sources(split.train), snap, idx.entity,
                                            idx.predicate, distractors, rc.seed);
  write_training_file(dir / "train_pairs.jsonl", pairs.pairs);
  std::cout << "train " << split.train.size() << ", test " << split.test.size() << " (held out "
            << held_out << "), " << pairs.pairs.size() << " training pairs, " << pairs.skipped
            << " skipped\n";
  return 0;
}

int cmd_augment_train(const RunConfig& rc, std::size_t distractors) {
  const auto snap = load_snapshot(rc);
  const auto idx = indexes_for(rc, snap);
  const auto examples = load_examples(rc);
  const auto result = augment_training_pairs(training_sources(examples), snap, idx.entity,
                                             idx.predicate, distractors, rc.seed);
  const auto file = prepare_out(rc) / "train_augmented.jsonl";
  write_training_file(file, result.pairs);
  std::cout << result.pairs.size() << " training pairs, " << result.skipped << " skipped -> "
            << file.string() << "\n";
  return 0;
}

std::string one_line(std::string text) {
  for (auto& c : text) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return text;
}

int fail(ErrorCode code, const std::string& message) {
  std::cerr << "kgqa: error=" << error_code_name(code) << " code=" << static_cast<int>(code)
            << " message=" << one_line(message) << "\n";
  return static_cast<int>(code);
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Knowledge-graph question answering pipeline"};
  app.footer(kFooter);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  Flags f;
  std::string question, query, query_file, gold_query, held_out;
  std::vector<std::string> entities, predicates, gold, inputs;
  SweepArgs sweep_args;
  std::size_t distractors = kDefaultDistractors;
  bool llm_baseline = false;

  auto* index_build = app.add_subcommand("index-build", "build and save BM25 indexes");
  add_common(index_build, f);
  add_kg(index_build, f);
  add_index(index_build, f);

  auto* index_sweep = app.add_subcommand("index-sweep", "grid-search BM25 k1 and b for recall@k");
  add_common(index_sweep, f);
  add_kg(index_sweep, f);
  add_dataset(index_sweep, f);
  index_sweep->add_option("--min-degree", f.min_degree, "drop entities with fewer distinct predicates (default 10)");
  index_sweep->add_option("--kind", sweep_args.kind, "entity|predicate (default entity)");
  index_sweep->add_option("--k1", sweep_args.k1, "k1 grid, lo:hi:step or a,b,c (default 0.5:3.0:0.5)");
  index_sweep->add_option("--b", sweep_args.b, "b grid, lo:hi:step or a,b,c (default 0.0:1.0:0.25)");
  index_sweep->add_option("--k", sweep_args.k, "recall cutoff (default 10)");
  index_sweep->add_option("--workers", f.workers, "threads (default 1)");

  auto* retrieve = app.add_subcommand("retrieve", "BM25 candidates for a question");
  add_common(retrieve, f);
  add_kg(retrieve, f);
  add_index(retrieve, f);
  add_shortlist(retrieve, f);
  retrieve->add_option("--question", question, "question text")->required();

  auto* disambiguate = app.add_subcommand("disambiguate", "retrieve, then select candidate ids");
  add_common(disambiguate, f);
  add_kg(disambiguate, f);
  add_index(disambiguate, f);
  add_shortlist(disambiguate, f);
  add_disambiguation(disambiguate, f);
  disambiguate->add_option("--question", question, "question text")->required();
  disambiguate->add_option("--gold", gold, "gold ids for the oracle-gold backend (comma-separated)");

  auto* generate = app.add_subcommand("generate", "produce a SPARQL query");
  add_common(generate, f);
  add_kg(generate, f);
  add_generation(generate, f);
  generate->add_option("--question", question, "question text")->required();
  generate->add_option("--entities", entities, "entity ids (comma-separated)");
  generate->add_option("--predicates", predicates, "predicate ids (comma-separated)");
  generate->add_option("--gold-query", gold_query, "query returned by gold-passthrough");

  auto* filter_check = app.add_subcommand("filter-check", "pre-generation entity/predicate filter");
  add_common(filter_check, f);
  add_kg(filter_check, f);
  filter_check->add_option("--filter", f.filter, "off|alg1|strict (default alg1)");
  filter_check->add_option("--entities", entities, "entity ids (comma-separated)")->required();
  filter_check->add_option("--predicates", predicates, "predicate ids (comma-separated)")->required();

  auto* execute = app.add_subcommand("execute", "run a SPARQL query");
  add_common(execute, f);
  add_kg(execute, f);
  add_executor(execute, f);
  auto* q_opt = execute->add_option("--query", query, "query text");
  auto* qf_opt = execute->add_option("--query-file", query_file, "file holding the query");
  q_opt->excludes(qf_opt);

  auto* evaluate = app.add_subcommand("evaluate", "end-to-end evaluation with execution-match metrics");
  auto* reject = app.add_subcommand("reject-report", "rejection-policy comparison");
  for (auto* sub : {evaluate, reject}) {
    add_common(sub, f);
    add_kg(sub, f);
    add_index(sub, f);
    add_shortlist(sub, f);
    add_disambiguation(sub, f);
    add_generation(sub, f);
    add_executor(sub, f);
    add_dataset(sub, f);
    sub->add_option("--gold-cache", f.gold_cache, "cache file for gold answers fetched by execution");
    sub->add_option("--workers", f.workers, "parallel questions (default 1)");
  }
  add_guard(evaluate, f);
  reject->add_option("--filter", f.filter, "filter variant recorded: alg1|strict (default alg1)");
  reject->add_flag("--llm-baseline", llm_baseline, "ask the generator model directly to fill the LLM-rejection column");

  auto* make_splits = app.add_subcommand("make-splits", "leave-one-dataset-out splits");
  add_common(make_splits, f);
  add_kg(make_splits, f);
  add_index(make_splits, f);
  make_splits->add_option("--input", inputs, "name=path, repeatable")->required();
  make_splits->add_option("--held-out", held_out, "dataset used for testing")->required();
  make_splits->add_option("--distractors", distractors, "distractors per gold id in train_pairs.jsonl (default 5)");

  auto* augment = app.add_subcommand("augment-train", "training pairs with BM25 distractors");
  add_common(augment, f);
  add_kg(augment, f);
  add_index(augment, f);
  add_dataset(augment, f);
  augment->add_option("--distractors", distractors, "distractors per gold id (default 5)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(ErrorCode::kConfig, e.what());
  }

  try {
    const auto rc = resolve(f);
    if (*index_build) return cmd_index_build(rc);
    if (*index_sweep) return cmd_index_sweep(rc, sweep_args);
    if (*retrieve) return cmd_retrieve(rc, question);
    if (*disambiguate) return cmd_disambiguate(rc, question, gold);
    if (*generate) return cmd_generate(rc, question, entities, predicates, gold_query);
    if (*filter_check) return cmd_filter_check(rc, entities, predicates);
    if (*execute) return cmd_execute(rc, query, query_file);
    if (*evaluate) return cmd_evaluate(rc);
    if (*reject) return cmd_reject_report(rc, llm_baseline);
    if (*make_splits) return cmd_make_splits(rc, inputs, held_out, distractors);
    if (*augment) return cmd_augment_train(rc, distractors);
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::exception& e) {
    return fail(ErrorCode::kData, e.what());
  }
  return 0;
}

}  // namespace kgqa::cli

int main(int argc, char** argv) { return kgqa::cli::run(argc, argv); }
