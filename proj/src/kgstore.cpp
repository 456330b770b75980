#include "kgqa/kgstore.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <tuple>

#include "json.hpp"

#include "kgqa/error.hpp"

namespace kgqa {

namespace {

constexpr std::size_t kMaxReportedOffenders = 10;

bool is_prefixed_number(std::string_view token, char prefix) noexcept {
  if (token.size() < 2 || token.front() != prefix) return false;
  return std::all_of(token.begin() + 1, token.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t") == std::string_view::npos;
}

std::string string_field(const nlohmann::json& obj, const char* key,
                         bool required) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw std::invalid_argument(std::string("missing key \"") + key + "\"");
    return {};
  }
  if (!it->is_string()) {
    throw std::invalid_argument(std::string("key \"") + key + "\" is not a string");
  }
  return it->get<std::string>();
}

template <typename Record, typename Parse>
std::vector<Record> read_jsonl(const std::filesystem::path& path, Parse parse) {
  auto in = open_input(path);
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (is_blank(line)) continue;
    try {
      auto obj = nlohmann::json::parse(line);
      if (!obj.is_object()) throw std::invalid_argument("not a JSON object");
      out.push_back(parse(obj));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": malformed line: " + e.what());
    }
  }
  return out;
}

EntityRecord parse_entity(const nlohmann::json& obj) {
  EntityRecord rec;
  rec.id = string_field(obj, "id", true);
  if (!is_entity_id(rec.id)) {
    throw std::invalid_argument("entity id \"" + rec.id + "\" is not Q+digits");
  }
  rec.label = string_field(obj, "label", true);
  rec.description = string_field(obj, "description", false);
  if (auto it = obj.find("aliases"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) throw std::invalid_argument("aliases is not an array");
    for (const auto& alias : *it) {
      if (!alias.is_string()) throw std::invalid_argument("alias is not a string");
      rec.aliases.push_back(alias.get<std::string>());
    }
  }
  return rec;
}

PredicateRecord parse_predicate(const nlohmann::json& obj) {
  PredicateRecord rec;
  rec.id = string_field(obj, "id", true);
  if (!is_predicate_id(rec.id)) {
    throw std::invalid_argument("predicate id \"" + rec.id + "\" is not P+digits");
  }
  rec.label = string_field(obj, "label", true);
  if (rec.label.empty()) throw std::invalid_argument("empty predicate label");
  rec.description = string_field(obj, "description", false);
  return rec;
}

using LocatedTriple = std::pair<Triple, std::string>;

std::vector<LocatedTriple> read_triples(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<LocatedTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (is_blank(line)) continue;
    const auto location = path.string() + ":" + std::to_string(line_no);
    const auto tab1 = line.find('\t');
    const auto tab2 =
        tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos || line.find('\t', tab2 + 1) != std::string::npos) {
      throw DataError(location + ": malformed line: expected 3 tab-separated columns");
    }
    Triple t;
    t.subject = line.substr(0, tab1);
    t.predicate = line.substr(tab1 + 1, tab2 - tab1 - 1);
    t.object = line.substr(tab2 + 1);
    t.object_is_entity = is_entity_id(t.object);
    out.push_back({std::move(t), location});
  }
  return out;
}

}  // namespace

bool is_entity_id(std::string_view token) noexcept {
  return is_prefixed_number(token, 'Q');
}

bool is_predicate_id(std::string_view token) noexcept {
  return is_prefixed_number(token, 'P');
}

Snapshot Snapshot::load(const std::filesystem::path& entity_file,
                        const std::filesystem::path& predicate_file,
                        const std::filesystem::path& triple_file) {
  auto entities = read_jsonl<EntityRecord>(entity_file, parse_entity);
  auto predicates = read_jsonl<PredicateRecord>(predicate_file, parse_predicate);
  auto triples = read_triples(triple_file);
  return assemble(std::move(entities), std::move(predicates), std::move(triples));
}

Snapshot Snapshot::build(std::vector<EntityRecord> entities,
                         std::vector<PredicateRecord> predicates,
                         std::vector<Triple> triples) {
  std::vector<LocatedTriple> located;
  located.reserve(triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i) {
    auto& t = triples[i];
    t.object_is_entity = is_entity_id(t.object);
    located.push_back({std::move(t), "triple #" + std::to_string(i + 1)});
  }
  return assemble(std::move(entities), std::move(predicates), std::move(located));
}

Snapshot Snapshot::assemble(std::vector<EntityRecord> entities,
                            std::vector<PredicateRecord> predicates,
                            SourcedTriples triples) {
  std::unordered_map<std::string, std::size_t> entity_pos;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (!is_entity_id(entities[i].id)) {
      throw DataError("entity id \"" + entities[i].id + "\" is not Q+digits");
    }
    if (!entity_pos.emplace(entities[i].id, i).second) {
      throw DataError("duplicate entity id " + entities[i].id);
    }
  }
  std::unordered_map<std::string, std::size_t> predicate_pos;
  for (std::size_t i = 0; i < predicates.size(); ++i) {
    if (!is_predicate_id(predicates[i].id)) {
      throw DataError("predicate id \"" + predicates[i].id + "\" is not P+digits");
    }
    if (predicates[i].label.empty()) {
      throw DataError("predicate " + predicates[i].id + " has an empty label");
    }
    if (!predicate_pos.emplace(predicates[i].id, i).second) {
      throw DataError("duplicate predicate id " + predicates[i].id);
    }
  }

  std::vector<std::string> offenders;
  std::size_t offender_count = 0;
  auto offend = [&](const LocatedTriple& lt, const std::string& what) {
    ++offender_count;
    if (offenders.size() < kMaxReportedOffenders) {
      offenders.push_back(lt.second + ": " + what);
    }
  };
  for (const auto& lt : triples) {
    const auto& t = lt.first;
    if (!predicate_pos.contains(t.predicate)) {
      offend(lt, "unknown predicate " + t.predicate);
    }
    if (!entity_pos.contains(t.subject)) {
      offend(lt, "unknown subject " + t.subject);
    }
    if (t.object_is_entity && !entity_pos.contains(t.object)) {
      offend(lt, "unknown object " + t.object);
    }
  }
  if (offender_count > 0) {
    std::ostringstream msg;
    msg << offender_count << " triple reference error(s)";
    for (const auto& o : offenders) msg << "; " << o;
    throw DataError(msg.str());
  }

  // Repeated triples are kept once, at their first position.
  std::vector<Triple> plain;
  plain.reserve(triples.size());
  std::set<std::tuple<std::string_view, std::string_view, std::string_view>> seen;
  for (const auto& lt : triples) {
    const auto& t = lt.first;
    if (seen.emplace(t.subject, t.predicate, t.object).second) plain.push_back(t);
  }

  Snapshot snap;
  snap.entities_ = std::move(entities);
  snap.predicates_ = std::move(predicates);
  snap.triples_ = std::move(plain);
  snap.entity_pos_ = std::move(entity_pos);
  snap.predicate_pos_ = std::move(predicate_pos);
  snap.materialize();
  return snap;
}

void Snapshot::materialize() {
  profiles_.resize(entities_.size());
  for (std::size_t i = 0; i < entities_.size(); ++i) {
    profiles_[i].entity = entities_[i].id;
  }
  for (std::size_t i = 0; i < triples_.size(); ++i) {
    const auto& t = triples_[i];
    by_subject_[t.subject].push_back(i);
    by_predicate_[t.predicate].push_back(i);
    by_object_[t.object].push_back(i);
    // A self-loop (e, r, e) is recorded as incoming only: the object test
    // takes precedence over the subject test.
    if (t.object_is_entity) {
      profiles_[entity_pos_.at(t.object)].incoming.insert(t.predicate);
      if (t.object == t.subject) continue;
    }
    profiles_[entity_pos_.at(t.subject)].outgoing.insert(t.predicate);
  }
  for (std::size_t i = 0; i < entities_.size(); ++i) {
    std::set<std::string> all = profiles_[i].incoming;
    all.insert(profiles_[i].outgoing.begin(), profiles_[i].outgoing.end());
    entities_[i].degree = all.size();
  }
}

const EntityRecord* Snapshot::find_entity(std::string_view id) const {
  auto it = entity_pos_.find(std::string(id));
  return it == entity_pos_.end() ? nullptr : &entities_[it->second];
}

const PredicateRecord* Snapshot::find_predicate(std::string_view id) const {
  auto it = predicate_pos_.find(std::string(id));
  return it == predicate_pos_.end() ? nullptr : &predicates_[it->second];
}

const EntityRelationProfile* Snapshot::find_relations(
    std::string_view id) const {
  auto it = entity_pos_.find(std::string(id));
  return it == entity_pos_.end() ? nullptr : &profiles_[it->second];
}

const EntityRelationProfile& Snapshot::entity_relations(
    std::string_view id) const {
  if (const auto* p = find_relations(id)) return *p;
  throw NotFoundError("unknown entity " + std::string(id));
}

std::set<std::string> Snapshot::prune_by_degree(std::size_t min_degree) const {
  std::set<std::string> kept;
  for (const auto& e : entities_) {
    if (e.degree >= min_degree) kept.insert(e.id);
  }
  return kept;
}

namespace {
const std::vector<std::size_t>& lookup(
    const std::unordered_map<std::string, std::vector<std::size_t>>& index,
    std::string_view key) {
  static const std::vector<std::size_t> kEmpty;
  auto it = index.find(std::string(key));
  return it == index.end() ? kEmpty : it->second;
}
}  // namespace

const std::vector<std::size_t>& Snapshot::triples_with_subject(
    std::string_view id) const {
  return lookup(by_subject_, id);
}

const std::vector<std::size_t>& Snapshot::triples_with_predicate(
    std::string_view id) const {
  return lookup(by_predicate_, id);
}

const std::vector<std::size_t>& Snapshot::triples_with_object(
    std::string_view value) const {
  return lookup(by_object_, value);
}

}  // namespace kgqa
