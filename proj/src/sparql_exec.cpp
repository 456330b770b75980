#include <algorithm>
#include <array>
#include <optional>
#include <map>

#include "kgqa/sparql.hpp"

namespace kgqa::sparql {

namespace {

enum class ValueKind { kEntity, kPredicate, kLiteral };

struct Value {
  ValueKind kind = ValueKind::kEntity;
  const std::string* text = nullptr;  // points into the snapshot's triples

  bool same(const Value& other) const {
    return kind == other.kind && *text == *other.text;
  }
};

// A pattern with variables replaced by slot indexes.
struct CompiledPattern {
  std::array<const Term*, 3> terms{};
  std::array<int, 3> slots{-1, -1, -1};  // variable slot per position, -1 if concrete
};

class Matcher {
 public:
  Matcher(const QueryAst& ast, const Snapshot& snapshot) : snapshot_(snapshot) {
    for (const auto& p : ast.patterns) {
      CompiledPattern cp;
      cp.terms = {&p.subject, &p.predicate, &p.object};
      for (int i = 0; i < 3; ++i) {
        if (cp.terms[i]->is_variable()) cp.slots[i] = slot_of(cp.terms[i]->value);
      }
      patterns_.push_back(cp);
    }
    bindings_.resize(slot_names_.size());
    done_.assign(patterns_.size(), false);
  }

  std::optional<int> find_slot(const std::string& name) const {
    auto it = slot_index_.find(name);
    if (it == slot_index_.end()) return std::nullopt;
    return it->second;
  }

  // Calls visit(bindings) once per solution.
  template <typename Visit>
  void solve(Visit&& visit) {
    search(0, visit);
  }

 private:
  int slot_of(const std::string& name) {
    auto [it, inserted] = slot_index_.emplace(name, static_cast<int>(slot_names_.size()));
    if (inserted) slot_names_.push_back(name);
    return it->second;
  }

  bool bound(const CompiledPattern& p, int pos) const {
    return p.slots[pos] < 0 || bindings_[p.slots[pos]].has_value();
  }

  // The unprocessed pattern with the most bound positions, earliest on ties.
  std::size_t pick_next() const {
    std::size_t best = patterns_.size();
    int best_bound = -1;
    for (std::size_t i = 0; i < patterns_.size(); ++i) {
      if (done_[i]) continue;
      int n = 0;
      for (int pos = 0; pos < 3; ++pos) n += bound(patterns_[i], pos) ? 1 : 0;
      if (n > best_bound) {
        best = i;
        best_bound = n;
      }
    }
    return best;
  }

  // Concrete string required at a position, or nullptr when unconstrained.
  // Sets `impossible` when the term can never match that position.
  const std::string* required(const CompiledPattern& p, int pos, bool& impossible) const {
    if (p.slots[pos] >= 0) {
      const auto& b = bindings_[p.slots[pos]];
      if (!b) return nullptr;
      const ValueKind want = pos == 0   ? ValueKind::kEntity
                             : pos == 1 ? ValueKind::kPredicate
                                        : b->kind;
      if (b->kind != want || (pos == 2 && b->kind == ValueKind::kPredicate)) impossible = true;
      return b->text;
    }
    const Term& t = *p.terms[pos];
    switch (pos) {
      case 0:
        if (t.kind != TermKind::kEntity) impossible = true;
        break;
      case 1:
        if (t.kind != TermKind::kPredicate) impossible = true;
        break;
      default:
        if (t.kind == TermKind::kPredicate) impossible = true;
    }
    return &t.value;
  }

  template <typename Visit>
  void search(std::size_t depth, Visit& visit) {
    if (depth == patterns_.size()) {
      visit(bindings_);
      return;
    }
    const std::size_t idx = pick_next();
    const auto& p = patterns_[idx];
    bool impossible = false;
    const std::string* s = required(p, 0, impossible);
    const std::string* pr = required(p, 1, impossible);
    const std::string* o = required(p, 2, impossible);
    if (impossible) return;

    // Object kind constraint for concrete or bound objects.
    std::optional<bool> object_entity;
    if (o) {
      if (p.slots[2] >= 0) {
        object_entity = bindings_[p.slots[2]]->kind == ValueKind::kEntity;
      } else {
        object_entity = p.terms[2]->kind == TermKind::kEntity;
      }
    }

    const std::vector<std::size_t>* candidates = nullptr;
    if (s) {
      candidates = &snapshot_.triples_with_subject(*s);
    } else if (o) {
      candidates = &snapshot_.triples_with_object(*o);
    } else if (pr) {
      candidates = &snapshot_.triples_with_predicate(*pr);
    }

    done_[idx] = true;
    auto try_triple = [&](const Triple& t) {
      if (s && t.subject != *s) return;
      if (pr && t.predicate != *pr) return;
      if (o && (t.object != *o || t.object_is_entity != *object_entity)) return;
      std::array<bool, 3> assigned{false, false, false};
      const std::array<Value, 3> values = {
          Value{ValueKind::kEntity, &t.subject}, Value{ValueKind::kPredicate, &t.predicate},
          Value{t.object_is_entity ? ValueKind::kEntity : ValueKind::kLiteral, &t.object}};
      bool ok = true;
      for (int pos = 0; pos < 3 && ok; ++pos) {
        const int slot = p.slots[pos];
        if (slot < 0) continue;
        auto& b = bindings_[slot];
        if (b) {
          ok = b->same(values[pos]);
        } else {
          b = values[pos];
          assigned[pos] = true;
        }
      }
      if (ok) search(depth + 1, visit);
      for (int pos = 0; pos < 3; ++pos) {
        if (assigned[pos]) bindings_[p.slots[pos]].reset();
      }
    };
    if (candidates) {
      for (auto i : *candidates) try_triple(snapshot_.triples()[i]);
    } else {
      for (const auto& t : snapshot_.triples()) try_triple(t);
    }
    done_[idx] = false;
  }

  const Snapshot& snapshot_;
  std::vector<CompiledPattern> patterns_;
  std::map<std::string, int> slot_index_;
  std::vector<std::string> slot_names_;
  std::vector<std::optional<Value>> bindings_;
  std::vector<bool> done_;
};

std::string join_row(const std::vector<std::string>& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) out += '|';
    out += row[i];
  }
  return out;
}

}  // namespace

AnswerSet execute_local(const QueryAst& ast, const Snapshot& snapshot) {
  Matcher matcher(ast, snapshot);
  AnswerSet answers;

  if (ast.form == QueryForm::kAsk) {
    bool any = false;
    matcher.solve([&](const auto&) { any = true; });
    answers.truth = any;
    return answers;
  }

  if (ast.form == QueryForm::kCount) {
    const auto slot = matcher.find_slot(ast.count_variable);
    if (!slot) {
      throw ExecutionError("counted variable ?" + ast.count_variable +
                           " is not bound by any pattern");
    }
    std::size_t count = 0;
    std::set<std::string> distinct;
    matcher.solve([&](const auto& bindings) {
      if (ast.distinct) {
        distinct.insert(*bindings[*slot]->text);
      } else {
        ++count;
      }
    });
    answers.terms.insert(std::to_string(ast.distinct ? distinct.size() : count));
    return answers;
  }

  std::vector<int> slots;
  for (const auto& name : ast.projection) {
    const auto slot = matcher.find_slot(name);
    if (!slot) {
      throw ExecutionError("projected variable ?" + name + " is not bound by any pattern");
    }
    slots.push_back(*slot);
  }
  std::vector<std::vector<std::string>> rows;
  matcher.solve([&](const auto& bindings) {
    std::vector<std::string> row;
    row.reserve(slots.size());
    for (int slot : slots) row.push_back(*bindings[slot]->text);
    rows.push_back(std::move(row));
  });
  std::sort(rows.begin(), rows.end());
  if (ast.distinct) rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  if (ast.limit && rows.size() > *ast.limit) rows.resize(*ast.limit);

  for (const auto& row : rows) answers.terms.insert(row.front());
  if (slots.size() > 1) {
    for (const auto& row : rows) answers.rows.push_back(join_row(row));
    answers.rows.erase(std::unique(answers.rows.begin(), answers.rows.end()),
                       answers.rows.end());
  }
  return answers;
}

AnswerSet LocalExecutor::execute(std::string_view query_text) {
  return execute_local(parse(query_text), *snapshot_);
}

}  // namespace kgqa::sparql
