#pragma once
// Immutable knowledge-graph snapshot.
//
// A snapshot holds the entity catalog, the predicate catalog and the triple
// set. Per-entity relation profiles (incoming / outgoing predicate sets) and
// positional triple indexes are materialized once at load time; nothing can
// be mutated afterwards, so a const Snapshot is safe to share across threads.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kgqa {

inline constexpr std::size_t kDefaultMinDegree = 10;

bool is_entity_id(std::string_view token) noexcept;     // "Q" + digits
bool is_predicate_id(std::string_view token) noexcept;  // "P" + digits

struct EntityRecord {
  std::string id;
  std::string label;
  std::string description;
  std::vector<std::string> aliases;
  // Distinct predicates incident to the entity in either direction.
  std::size_t degree = 0;
};

struct PredicateRecord {
  std::string id;
  std::string label;
  std::string description;
};

struct Triple {
  std::string subject;
  std::string predicate;
  std::string object;
  bool object_is_entity = false;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct EntityRelationProfile {
  std::string entity;
  std::set<std::string> incoming;
  std::set<std::string> outgoing;

  friend bool operator==(const EntityRelationProfile&,
                         const EntityRelationProfile&) = default;
};

class Snapshot {
 public:
  // Reads the three snapshot files. Throws DataError on malformed lines,
  // duplicate ids or dangling triple references.
  static Snapshot load(const std::filesystem::path& entity_file,
                       const std::filesystem::path& predicate_file,
                       const std::filesystem::path& triple_file);

  // Same validation as load(), from in-memory records. Input degree values
  // are ignored and recomputed.
  static Snapshot build(std::vector<EntityRecord> entities,
                        std::vector<PredicateRecord> predicates,
                        std::vector<Triple> triples);

  const std::vector<EntityRecord>& entities() const noexcept {
    return entities_;
  }
  const std::vector<PredicateRecord>& predicates() const noexcept {
    return predicates_;
  }
  const std::vector<Triple>& triples() const noexcept { return triples_; }

  const EntityRecord* find_entity(std::string_view id) const;
  const PredicateRecord* find_predicate(std::string_view id) const;

  // Throws NotFoundError for ids missing from the entity catalog.
  const EntityRelationProfile& entity_relations(std::string_view id) const;
  // nullptr when the id is unknown.
  const EntityRelationProfile* find_relations(std::string_view id) const;

  std::set<std::string> prune_by_degree(
      std::size_t min_degree = kDefaultMinDegree) const;

  // Triple positions (indexes into triples()) keyed by each column.
  const std::vector<std::size_t>& triples_with_subject(
      std::string_view id) const;
  const std::vector<std::size_t>& triples_with_predicate(
      std::string_view id) const;
  const std::vector<std::size_t>& triples_with_object(
      std::string_view value) const;

 private:
  Snapshot() = default;

  // Triples paired with a human-readable source location for diagnostics.
  using SourcedTriples = std::vector<std::pair<Triple, std::string>>;
  static Snapshot assemble(std::vector<EntityRecord> entities,
                           std::vector<PredicateRecord> predicates,
                           SourcedTriples triples);
  void materialize();

  using PositionIndex =
      std::unordered_map<std::string, std::vector<std::size_t>>;

  std::vector<EntityRecord> entities_;
  std::vector<PredicateRecord> predicates_;
  std::vector<Triple> triples_;
  std::unordered_map<std::string, std::size_t> entity_pos_;
  std::unordered_map<std::string, std::size_t> predicate_pos_;
  std::vector<EntityRelationProfile> profiles_;  // parallel to entities_
  PositionIndex by_subject_;
  PositionIndex by_predicate_;
  PositionIndex by_object_;
};

}  // namespace kgqa
