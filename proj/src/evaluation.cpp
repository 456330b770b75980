#include "kgqa/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <thread>

#include "json.hpp"

namespace kgqa {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string id_text(const nlohmann::json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<long long>());
  throw std::invalid_argument("\"id\" must be a string or an integer");
}

std::vector<std::string> id_list(const nlohmann::json& value, const char* key,
                                 bool (*valid)(std::string_view) noexcept) {
  if (!value.is_array()) throw std::invalid_argument(std::string("\"") + key + "\" must be an array");
  std::vector<std::string> out;
  for (const auto& v : value) {
    if (!v.is_string()) throw std::invalid_argument(std::string("\"") + key + "\" holds a non-string");
    auto id = v.get<std::string>();
    if (!valid(id)) throw std::invalid_argument("invalid id \"" + id + "\" in \"" + key + "\"");
    if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(std::move(id));
  }
  return out;
}

sparql::AnswerSet answers_from_json(const nlohmann::json& value) {
  sparql::AnswerSet out;
  if (value.is_boolean()) {
    out.truth = value.get<bool>();
    return out;
  }
  if (!value.is_array()) throw std::invalid_argument("\"answers\" must be an array or a boolean");
  for (const auto& v : value) {
    if (v.is_string()) {
      out.terms.insert(sparql::normalize_term(v.get<std::string>()));
    } else if (v.is_number() || v.is_boolean()) {
      out.terms.insert(v.dump());
    } else {
      throw std::invalid_argument("\"answers\" holds an unsupported value");
    }
  }
  return out;
}

ordered_json answers_to_json(const sparql::AnswerSet& answers) {
  ordered_json out;
  out["terms"] = answers.terms;
  if (answers.truth) out["truth"] = *answers.truth;
  if (!answers.rows.empty()) out["rows"] = answers.rows;
  return out;
}

sparql::AnswerSet answers_from_cache(const nlohmann::json& value) {
  sparql::AnswerSet out;
  for (const auto& t : value.at("terms")) out.terms.insert(t.get<std::string>());
  if (auto it = value.find("truth"); it != value.end()) out.truth = it->get<bool>();
  if (auto it = value.find("rows"); it != value.end()) {
    for (const auto& r : *it) out.rows.push_back(r.get<std::string>());
  }
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

ordered_json candidates_json(const CandidateSet& set) {
  ordered_json arr = ordered_json::array();
  for (const auto& h : set.hits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", h.score);
    arr.push_back({{"id", h.id}, {"score", std::string(buf)}});
  }
  return arr;
}

ordered_json selection_json(const DisambiguationResult& r) {
  ordered_json out;
  out["backend"] = std::string(to_string(r.backend));
  out["selected"] = r.selected;
  out["rejected"] = r.rejected;
  out["off_list"] = r.off_list;
  if (!r.raw_response.empty()) out["raw_response"] = r.raw_response;
  return out;
}

std::string cache_key(const QaExample& ex) { return ex.dataset + "\t" + ex.id; }

}  // namespace

std::string_view to_string(Split split) noexcept {
  return split == Split::kTrain ? "train" : "test";
}

std::vector<std::string> query_predicates(std::string_view query_text) {
  std::vector<std::string> out;
  try {
    const auto ast = sparql::parse(query_text);
    for (const auto& p : ast.patterns) {
      if (p.predicate.kind == sparql::TermKind::kPredicate &&
          std::find(out.begin(), out.end(), p.predicate.value) == out.end()) {
        out.push_back(p.predicate.value);
      }
    }
  } catch (const sparql::ParseError&) {
    out.clear();
  }
  return out;
}

DatasetLoad load_dataset(const std::filesystem::path& path, std::string dataset_name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  DatasetLoad load;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      if (!obj.is_object()) throw std::invalid_argument("not a JSON object");
      QaExample ex;
      for (const char* key : {"id", "question", "sparql", "entities", "split"}) {
        if (!obj.contains(key)) throw std::invalid_argument(std::string("missing key \"") + key + "\"");
      }
      ex.id = id_text(obj.at("id"));
      ex.question = obj.at("question").get<std::string>();
      ex.gold_query = obj.at("sparql").get<std::string>();
      if (trim(ex.question).empty()) throw std::invalid_argument("empty question");
      if (trim(ex.gold_query).empty()) throw std::invalid_argument("empty sparql");
      ex.gold_entities = id_list(obj.at("entities"), "entities", is_entity_id);
      if (auto it = obj.find("predicates"); it != obj.end() && !it->is_null()) {
        ex.gold_predicates = id_list(*it, "predicates", is_predicate_id);
      } else {
        ex.gold_predicates = query_predicates(ex.gold_query);
      }
      if (auto it = obj.find("answers"); it != obj.end() && !it->is_null()) {
        ex.gold_answers = answers_from_json(*it);
      }
      const auto split = obj.at("split").get<std::string>();
      if (split == "train") {
        ex.split = Split::kTrain;
      } else if (split == "test") {
        ex.split = Split::kTest;
      } else {
        throw std::invalid_argument("split must be train or test, got \"" + split + "\"");
      }
      if (!dataset_name.empty()) {
        ex.dataset = dataset_name;
      } else if (auto it = obj.find("dataset"); it != obj.end() && it->is_string()) {
        ex.dataset = it->get<std::string>();
      } else {
        ex.dataset = path.stem().string();
      }
      (ex.split == Split::kTrain ? load.train_count : load.test_count)++;
      load.examples.push_back(std::move(ex));
    } catch (const std::exception& e) {
      load.errors.push_back({line_no, e.what()});
    }
  }
  if (load.examples.empty()) {
    std::string msg = path.string() + ": no valid examples";
    for (std::size_t i = 0; i < load.errors.size() && i < 10; ++i) {
      msg += "; line " + std::to_string(load.errors[i].line) + ": " + load.errors[i].message;
    }
    throw DataError(msg);
  }
  return load;
}

std::set<std::string> scoring_terms(const sparql::AnswerSet& answers) {
  std::set<std::string> out = answers.terms;
  if (answers.truth) out.insert(*answers.truth ? "true" : "false");
  return out;
}

MetricRecord score_sets(const std::set<std::string>& gold, const std::set<std::string>& predicted) {
  MetricRecord m;
  if (gold.empty() && predicted.empty()) {
    return {1.0, 1.0, 1.0, 1};
  }
  if (gold.empty() || predicted.empty()) return m;
  std::size_t common = 0;
  for (const auto& t : predicted) {
    if (gold.contains(t)) ++common;
  }
  m.precision = static_cast<double>(common) / static_cast<double>(predicted.size());
  m.recall = static_cast<double>(common) / static_cast<double>(gold.size());
  const double sum = m.precision + m.recall;
  m.f1 = sum > 0.0 ? 2.0 * m.precision * m.recall / sum : 0.0;
  m.acc_at_1 = common == gold.size() ? 1 : 0;
  return m;
}

MetricRecord score(const sparql::AnswerSet& gold, const sparql::AnswerSet& predicted) {
  return score_sets(scoring_terms(gold), scoring_terms(predicted));
}

int exact_match_score(const std::vector<std::string>& gold_labels,
                      const std::vector<std::string>& predicted) {
  auto normalize = [](const std::vector<std::string>& labels) {
    std::set<std::string> out;
    for (const auto& l : labels) out.insert(fold_case(trim(l)));
    return out;
  };
  return normalize(gold_labels) == normalize(predicted) ? 1 : 0;
}

std::vector<std::string> resolve_gold_answers(std::vector<QaExample>& examples,
                                              sparql::QueryExecutor& executor) {
  std::vector<std::string> problems;
  for (auto& ex : examples) {
    if (ex.gold_answers) continue;
    try {
      ex.gold_answers = executor.execute(ex.gold_query);
    } catch (const Error& e) {
      ex.gold_answers = sparql::AnswerSet{};
      problems.push_back(ex.dataset + "/" + ex.id + ": gold query failed: " + e.what());
    }
  }
  return problems;
}

GoldAnswerCache GoldAnswerCache::load(const std::filesystem::path& path) {
  GoldAnswerCache cache;
  std::ifstream in(path, std::ios::binary);
  if (!in) return cache;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      Entry e;
      e.query = obj.at("query").get<std::string>();
      e.answers = answers_from_cache(obj.at("answers"));
      e.fetched_at = obj.at("fetched_at").get<std::string>();
      cache.entries_[obj.at("dataset").get<std::string>() + "\t" + obj.at("id").get<std::string>()] =
          std::move(e);
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": malformed gold cache line: " + e.what());
    }
  }
  return cache;
}

std::vector<std::string> GoldAnswerCache::resolve(std::vector<QaExample>& examples,
                                                  sparql::QueryExecutor& executor) {
  std::vector<std::string> problems;
  for (auto& ex : examples) {
    if (ex.gold_answers) continue;
    const auto key = cache_key(ex);
    if (auto it = entries_.find(key); it != entries_.end() && it->second.query == ex.gold_query) {
      ex.gold_answers = it->second.answers;
      continue;
    }
    try {
      ex.gold_answers = executor.execute(ex.gold_query);
      entries_[key] = {ex.gold_query, *ex.gold_answers, utc_timestamp()};
    } catch (const Error& e) {
      ex.gold_answers = sparql::AnswerSet{};
      problems.push_back(ex.dataset + "/" + ex.id + ": gold query failed: " + e.what());
    }
  }
  return problems;
}

void GoldAnswerCache::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& [key, e] : entries_) {
    const auto tab = key.find('\t');
    ordered_json line;
    line["dataset"] = key.substr(0, tab);
    line["id"] = key.substr(tab + 1);
    line["query"] = e.query;
    line["answers"] = answers_to_json(e.answers);
    line["fetched_at"] = e.fetched_at;
    out << line.dump() << '\n';
  }
}

PipelineOutcome run_pipeline(const QaExample& example, const PipelineConfig& config) {
  const Snapshot& snapshot = *config.snapshot;
  PipelineOutcome out;
  out.id = example.id;
  out.dataset = example.dataset;
  out.question = example.question;
  out.gold = example.gold_answers.value_or(sparql::AnswerSet{});

  auto finish = [&]() -> PipelineOutcome {
    out.predicted = out.final_stage == "accepted" ? out.raw_answers : sparql::AnswerSet{};
    out.metrics = score(out.gold, out.predicted);
    out.correct = score(out.gold, out.raw_answers).acc_at_1 == 1;
    return std::move(out);
  };

  out.entity_candidates = config.entity_index->search(example.question, config.entity_k);
  out.predicate_candidates = config.predicate_index->search(example.question, config.predicate_k);

  const std::set<std::string> gold_entities(example.gold_entities.begin(),
                                            example.gold_entities.end());
  const std::set<std::string> gold_predicates(example.gold_predicates.begin(),
                                              example.gold_predicates.end());
  try {
    out.entity_selection = config.disambiguator->disambiguate(
        example.question, out.entity_candidates, snapshot, &gold_entities);
    out.predicate_selection = config.disambiguator->disambiguate(
        example.question, out.predicate_candidates, snapshot, &gold_predicates);
  } catch (const Error& e) {
    out.final_stage = "disambiguation-error";
    out.error = e.what();
    out.execution_rejected = true;
    return finish();
  }

  const auto& entities = out.entity_selection.selected;
  const auto& predicates = out.predicate_selection.selected;
  const FilterMode observed =
      config.policy.filter == FilterMode::kOff ? config.observed_filter : config.policy.filter;
  out.filter_mismatch = entity_mismatch(observed, snapshot, entities, predicates);

  GuardContext ctx;
  ctx.snapshot = &snapshot;
  ctx.entities = entities;
  ctx.predicates = predicates;
  ctx.executor = config.executor;
  ctx.policy = config.policy;
  ctx.generate = [&] {
    GenerationRequest request;
    request.question = example.question;
    request.entities = entity_lines(snapshot, entities);
    request.predicates = predicate_lines(snapshot, predicates);
    request.fewshot_examples = config.fewshot;
    return config.generator->generate(request, example.gold_query).query_text;
  };

  GuardOutcome guarded;
  try {
    guarded = guard_pipeline(ctx);
  } catch (const Error& e) {
    out.final_stage = "generation-error";
    out.error = e.what();
    out.execution_rejected = true;
    return finish();
  }
  out.verdict = guarded.verdict;
  out.generated = guarded.generated;
  out.query = guarded.query_text;
  out.raw_answers = guarded.answers;
  out.final_stage = std::string(to_string(guarded.verdict.stage));
  if (!guarded.verdict.accepted) out.error = guarded.verdict.detail;
  out.execution_rejected =
      guarded.generated && (out.verdict.stage == GuardStage::kParse ||
                            out.verdict.stage == GuardStage::kExecutionError ||
                            out.raw_answers.empty());
  return finish();
}

EvaluationReport evaluate_end_to_end(const std::vector<QaExample>& examples,
                                     const PipelineConfig& config) {
  std::vector<PipelineOutcome> outcomes(examples.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < examples.size(); i = next++) {
      outcomes[i] = run_pipeline(examples[i], config);
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(config.workers, 1, std::max<std::size_t>(1, examples.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return summarize(std::move(outcomes));
}

EvaluationReport summarize(std::vector<PipelineOutcome> outcomes) {
  EvaluationReport report;
  std::map<std::string, DatasetSummary> by_name;
  for (const auto& o : outcomes) {
    auto& s = by_name[o.dataset];
    s.dataset = o.dataset;
    ++s.n;
    s.f1 += o.metrics.f1;
    s.acc_at_1 += o.metrics.acc_at_1;
    if (o.rejected()) {
      s.rejected_share += 1.0;
      ++s.stage_failures[o.final_stage];
    }
  }
  for (auto& [name, s] : by_name) {
    const double n = static_cast<double>(s.n);
    s.f1 /= n;
    s.acc_at_1 /= n;
    s.rejected_share /= n;
    report.datasets.push_back(std::move(s));
  }
  report.outcomes = std::move(outcomes);
  return report;
}

std::string report_csv(const EvaluationReport& report) {
  std::string csv = "dataset,n,f1,acc_at_1,rejected_pct";
  for (auto stage : kFinalStages) {
    std::string column(stage);
    std::replace(column.begin(), column.end(), '-', '_');
    csv += "," + column;
  }
  csv += "\n";
  for (const auto& s : report.datasets) {
    csv += s.dataset + "," + std::to_string(s.n) + "," + fixed(s.f1, 6) + "," +
           fixed(s.acc_at_1, 6) + "," + fixed(s.rejected_share * 100.0, 1);
    for (auto stage : kFinalStages) {
      auto it = s.stage_failures.find(std::string(stage));
      csv += "," + std::to_string(it == s.stage_failures.end() ? 0 : it->second);
    }
    csv += "\n";
  }
  return csv;
}

std::string outcome_json(const PipelineOutcome& o) {
  ordered_json j;
  j["id"] = o.id;
  j["dataset"] = o.dataset;
  j["question"] = o.question;
  j["entity_candidates"] = candidates_json(o.entity_candidates);
  j["predicate_candidates"] = candidates_json(o.predicate_candidates);
  j["entity_selection"] = selection_json(o.entity_selection);
  j["predicate_selection"] = selection_json(o.predicate_selection);
  j["filter_mismatch"] = o.filter_mismatch;
  j["generated"] = o.generated;
  j["query"] = o.query;
  j["stage"] = o.final_stage;
  j["accepted"] = !o.rejected();
  if (!o.error.empty()) j["error"] = o.error;
  j["raw_answers"] = answers_to_json(o.raw_answers);
  j["predicted"] = answers_to_json(o.predicted);
  j["gold"] = answers_to_json(o.gold);
  j["precision"] = fixed(o.metrics.precision, 6);
  j["recall"] = fixed(o.metrics.recall, 6);
  j["f1"] = fixed(o.metrics.f1, 6);
  j["acc_at_1"] = o.metrics.acc_at_1;
  j["correct"] = o.correct;
  j["execution_rejected"] = o.execution_rejected;
  j["llm_rejected"] = o.llm_rejected;
  return j.dump();
}

std::string trace_jsonl(const EvaluationReport& report) {
  std::string out;
  for (const auto& o : report.outcomes) out += outcome_json(o) + "\n";
  return out;
}

RejectionObservation observe(const PipelineOutcome& o) {
  return {o.correct, o.llm_rejected, o.execution_rejected, o.filter_mismatch};
}

std::vector<RejectionReport> rejection_reports(const EvaluationReport& report) {
  std::map<std::string, std::vector<RejectionObservation>> by_name;
  for (const auto& o : report.outcomes) by_name[o.dataset].push_back(observe(o));
  std::vector<RejectionReport> out;
  for (const auto& [name, obs] : by_name) out.push_back(rejection_report(name, obs));
  return out;
}

std::vector<RecallExample> recall_examples(const std::vector<QaExample>& examples,
                                           CatalogKind kind) {
  std::vector<RecallExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    const auto& ids = kind == CatalogKind::kEntity ? ex.gold_entities : ex.gold_predicates;
    out.push_back({ex.question, std::set<std::string>(ids.begin(), ids.end())});
  }
  return out;
}

GeneralizationSplit make_generalization_splits(
    const std::map<std::string, std::vector<QaExample>>& datasets, std::string_view held_out) {
  auto held = datasets.find(std::string(held_out));
  if (held == datasets.end()) {
    std::string names;
    for (const auto& [name, _] : datasets) names += (names.empty() ? "" : ", ") + name;
    throw ConfigError("held-out dataset \"" + std::string(held_out) +
                      "\" is not among the inputs (" + names + ")");
  }
  auto by_id = [](const QaExample& a, const QaExample& b) { return a.id < b.id; };
  GeneralizationSplit split;
  for (const auto& [name, examples] : datasets) {
    if (name == held_out) continue;
    std::vector<QaExample> train;
    std::copy_if(examples.begin(), examples.end(), std::back_inserter(train),
                 [](const QaExample& e) { return e.split == Split::kTrain; });
    std::stable_sort(train.begin(), train.end(), by_id);
    split.train.insert(split.train.end(), train.begin(), train.end());
  }
  std::copy_if(held->second.begin(), held->second.end(), std::back_inserter(split.test),
               [](const QaExample& e) { return e.split == Split::kTest; });
  std::stable_sort(split.test.begin(), split.test.end(), by_id);
  return split;
}

std::vector<TrainingSource> training_sources(const std::vector<QaExample>& examples) {
  std::vector<TrainingSource> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    out.push_back({ex.id, ex.question, ex.gold_query, ex.gold_entities, ex.gold_predicates});
  }
  return out;
}

}  // namespace kgqa
