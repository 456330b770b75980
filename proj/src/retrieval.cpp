#include "kgqa/retrieval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>
#include <tuple>

#include "kgqa/error.hpp"

namespace kgqa {

namespace {

constexpr std::string_view kIndexMagic = "kgqa-bm25-index";
constexpr int kIndexVersion = 1;

// Decodes one UTF-8 sequence starting at text[i]. Returns the code point and
// advances i; malformed bytes decode to U+FFFD-like sentinel 0 (a separator).
char32_t next_code_point(std::string_view text, std::size_t& i) {
  const auto lead = static_cast<unsigned char>(text[i]);
  std::size_t len = 0;
  char32_t cp = 0;
  if (lead < 0x80) {
    ++i;
    return lead;
  } else if ((lead & 0xE0) == 0xC0) {
    len = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
    cp = lead & 0x07;
  } else {
    ++i;
    return 0;
  }
  if (i + len > text.size()) {
    ++i;
    return 0;
  }
  for (std::size_t j = 1; j < len; ++j) {
    const auto cont = static_cast<unsigned char>(text[i + j]);
    if ((cont & 0xC0) != 0x80) {
      ++i;
      return 0;
    }
    cp = (cp << 6) | (cont & 0x3F);
  }
  i += len;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_word_char(char32_t cp) {
  if (cp == 0) return false;
  if (cp < 0x80) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') ||
           (cp >= 'A' && cp <= 'Z');
  }
  if (cp <= 0xBF) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (cp == 0x37E || cp == 0x387) return false;
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;  // punctuation, symbols
  if (cp >= 0x2E00 && cp <= 0x2E7F) return false;
  if (cp >= 0x3000 && cp <= 0x303F) return false;
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
  if (cp == 0xFEFF || cp == 0xFFFD) return false;
  return true;
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp < 0xC0) return cp;
  if (cp <= 0xDE) return cp == 0xD7 ? cp : cp + 32;
  if (cp >= 0x100 && cp <= 0x17F) {
    if (cp == 0x130) return 'i';
    if (cp == 0x178) return 0xFF;
    if ((cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E)) {
      return (cp % 2 == 1) ? cp + 1 : cp;
    }
    if (cp == 0x131 || cp == 0x138 || cp == 0x149 || cp == 0x17F) return cp;
    return (cp % 2 == 0) ? cp + 1 : cp;
  }
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 32;
  if (cp == 0x386) return 0x3AC;
  if (cp >= 0x388 && cp <= 0x38A) return cp + 37;
  if (cp == 0x38C) return 0x3CC;
  if (cp == 0x38E || cp == 0x38F) return cp + 63;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
  return cp;
}

std::string join_document(const std::string& label,
                          const std::string& description,
                          const std::vector<std::string>& aliases) {
  std::string text = label + " " + description + " ";
  for (std::size_t i = 0; i < aliases.size(); ++i) {
    if (i > 0) text += ' ';
    text += aliases[i];
  }
  return text;
}

void sort_hits(std::vector<Hit>& hits) {
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(CatalogKind kind) noexcept {
  return kind == CatalogKind::kEntity ? "entity" : "predicate";
}

CatalogKind parse_catalog_kind(std::string_view text) {
  if (text == "entity") return CatalogKind::kEntity;
  if (text == "predicate") return CatalogKind::kPredicate;
  throw ConfigError("unknown catalog kind \"" + std::string(text) +
                    "\" (expected entity|predicate)");
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = next_code_point(text, i);
    if (is_word_char(cp)) {
      append_utf8(current, to_lower(cp));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string fold_case(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    const char32_t cp = next_code_point(text, i);
    if (cp == 0 && text[start] != '\0') {
      out.append(text.substr(start, i - start));
    } else {
      append_utf8(out, to_lower(cp));
    }
  }
  return out;
}

void Bm25Params::validate() const {
  if (!(k1 >= 0.0) || !std::isfinite(k1)) {
    throw ConfigError("BM25 k1 must be a finite value >= 0, got " + format_double(k1));
  }
  if (!(b >= 0.0 && b <= 1.0)) {
    throw ConfigError("BM25 b must lie in [0, 1], got " + format_double(b));
  }
}

const std::vector<DatasetPreset>& dataset_presets() {
  static const std::vector<DatasetPreset> kPresets = {
      {"qald10", "QALD-10", {2.95, 0.2}, {5.18, 0.01}},
      {"lcquad2", "LC-QuAD 2.0", {2.45, 0.2}, {2.95, 0.01}},
      {"rubq2", "RuBQ 2.0", {1.39, 0.4}, {2.0, 0.01}},
      {"pat", "PAT", {1.0, 0.7}, {0.1, 0.01}},
  };
  return kPresets;
}

const DatasetPreset& find_preset(std::string_view name) {
  for (const auto& p : dataset_presets()) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown preset \"" + std::string(name) +
                    "\" (expected qald10|lcquad2|rubq2|pat)");
}

std::vector<Document> entity_documents(const Snapshot& snapshot,
                                       const std::set<std::string>* keep_ids) {
  std::vector<Document> docs;
  for (const auto& e : snapshot.entities()) {
    if (keep_ids && !keep_ids->contains(e.id)) continue;
    docs.push_back({e.id, join_document(e.label, e.description, e.aliases)});
  }
  return docs;
}

std::vector<Document> predicate_documents(
    const Snapshot& snapshot, const std::set<std::string>* keep_ids) {
  std::vector<Document> docs;
  for (const auto& p : snapshot.predicates()) {
    if (keep_ids && !keep_ids->contains(p.id)) continue;
    docs.push_back({p.id, join_document(p.label, p.description, {})});
  }
  return docs;
}

std::vector<std::string> CandidateSet::ids() const {
  std::vector<std::string> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(h.id);
  return out;
}

Bm25Index::Bm25Index(CatalogKind kind, std::vector<Document> documents,
                     Bm25Params params)
    : kind_(kind), params_(params) {
  params_.validate();
  if (documents.empty()) {
    throw DataError(std::string("cannot build a BM25 index over an empty ") +
                    std::string(to_string(kind)) + " catalog");
  }
  doc_ids_.reserve(documents.size());
  doc_tokens_.reserve(documents.size());
  for (auto& d : documents) {
    doc_ids_.push_back(std::move(d.id));
    doc_tokens_.push_back(tokenize(d.text));
  }
  index_tokens();
}

Bm25Index::Bm25Index(CatalogKind kind, Bm25Params params,
                     std::vector<std::string> ids,
                     std::vector<std::vector<std::string>> doc_tokens)
    : kind_(kind),
      params_(params),
      doc_ids_(std::move(ids)),
      doc_tokens_(std::move(doc_tokens)) {
  params_.validate();
  if (doc_ids_.empty()) throw DataError("BM25 index file holds no documents");
  index_tokens();
}

Bm25Index Bm25Index::build(const Snapshot& snapshot, CatalogKind kind,
                           Bm25Params params,
                           const std::set<std::string>* pruned_ids) {
  auto docs = kind == CatalogKind::kEntity
                  ? entity_documents(snapshot, pruned_ids)
                  : predicate_documents(snapshot, pruned_ids);
  return Bm25Index(kind, std::move(docs), params);
}

void Bm25Index::index_tokens() {
  doc_len_.resize(doc_ids_.size());
  std::size_t total = 0;
  for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
    if (!id_pos_.emplace(doc_ids_[d], d).second) {
      throw DataError("duplicate document id " + doc_ids_[d]);
    }
    doc_len_[d] = doc_tokens_[d].size();
    total += doc_len_[d];
    std::unordered_map<std::string, std::size_t> tf;
    for (const auto& tok : doc_tokens_[d]) ++tf[tok];
    for (auto& [tok, n] : tf) postings_[tok].push_back({d, n});
  }
  avg_doc_len_ = static_cast<double>(total) / static_cast<double>(doc_ids_.size());
}

double Bm25Index::term_weight(std::size_t df, std::size_t tf,
                              std::size_t doc_len) const {
  const double n = static_cast<double>(doc_ids_.size());
  const double dfd = static_cast<double>(df);
  const double idf = std::log((n - dfd + 0.5) / (dfd + 0.5) + 1.0);
  const double tfd = static_cast<double>(tf);
  const double len_ratio =
      avg_doc_len_ > 0.0 ? static_cast<double>(doc_len) / avg_doc_len_ : 0.0;
  const double norm = params_.k1 * (1.0 - params_.b + params_.b * len_ratio);
  return idf * (tfd * (params_.k1 + 1.0)) / (tfd + norm);
}

double Bm25Index::score(std::string_view query, std::size_t doc) const {
  double total = 0.0;
  for (const auto& tok : tokenize(query)) {
    auto it = postings_.find(tok);
    if (it == postings_.end()) continue;
    for (const auto& p : it->second) {
      if (p.doc == doc) total += term_weight(it->second.size(), p.tf, doc_len_[doc]);
    }
  }
  return total;
}

CandidateSet Bm25Index::search(std::string_view query, std::size_t k) const {
  if (k == 0) throw ConfigError("search k must be >= 1");
  CandidateSet out{std::string(query), kind_, {}};
  std::unordered_map<std::size_t, double> acc;
  for (const auto& tok : tokenize(query)) {
    auto it = postings_.find(tok);
    if (it == postings_.end()) continue;
    const std::size_t df = it->second.size();
    for (const auto& p : it->second) {
      acc[p.doc] += term_weight(df, p.tf, doc_len_[p.doc]);
    }
  }
  out.hits.reserve(acc.size());
  for (const auto& [doc, s] : acc) {
    if (s > 0.0) out.hits.push_back({doc_ids_[doc], s});
  }
  sort_hits(out.hits);
  if (out.hits.size() > k) out.hits.resize(k);
  return out;
}

bool Bm25Index::contains(std::string_view id) const {
  return id_pos_.contains(std::string(id));
}

void Bm25Index::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << kIndexMagic << ' ' << kIndexVersion << '\n'
      << "kind " << to_string(kind_) << '\n'
      << "k1 " << format_double(params_.k1) << '\n'
      << "b " << format_double(params_.b) << '\n'
      << "docs " << doc_ids_.size() << '\n';
  for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
    out << doc_ids_[d] << '\t';
    for (std::size_t t = 0; t < doc_tokens_[d].size(); ++t) {
      if (t > 0) out << ' ';
      out << doc_tokens_[d][t];
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  auto fail = [&](const std::string& what) -> DataError {
    return DataError(path.string() + ": " + what);
  };
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kIndexMagic) throw fail("not a BM25 index file");
  if (version != kIndexVersion) {
    throw fail("unsupported index version " + std::to_string(version));
  }
  std::string key, kind_text;
  Bm25Params params;
  std::size_t n = 0;
  in >> key >> kind_text;
  if (key != "kind") throw fail("expected kind line");
  in >> key >> params.k1;
  if (key != "k1") throw fail("expected k1 line");
  in >> key >> params.b;
  if (key != "b") throw fail("expected b line");
  in >> key >> n;
  if (key != "docs" || !in) throw fail("expected docs line");
  std::string line;
  std::getline(in, line);
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> tokens;
  ids.reserve(n);
  tokens.reserve(n);
  for (std::size_t d = 0; d < n; ++d) {
    if (!std::getline(in, line)) throw fail("truncated document list");
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw fail("malformed document line");
    ids.push_back(line.substr(0, tab));
    std::istringstream toks(line.substr(tab + 1));
    std::vector<std::string> doc;
    for (std::string t; toks >> t;) doc.push_back(t);
    tokens.push_back(std::move(doc));
  }
  CatalogKind kind;
  try {
    kind = parse_catalog_kind(kind_text);
  } catch (const ConfigError& e) {
    throw fail(e.what());
  }
  return Bm25Index(kind, params, std::move(ids), std::move(tokens));
}

RecallResult recall_at_k(const Bm25Index& index,
                         const std::vector<RecallExample>& examples,
                         std::size_t k) {
  RecallResult r;
  double sum = 0.0;
  for (const auto& ex : examples) {
    if (ex.gold.empty()) {
      ++r.skipped;
      continue;
    }
    const auto found = index.search(ex.query, k);
    std::size_t hit = 0;
    for (const auto& h : found.hits) {
      if (ex.gold.contains(h.id)) ++hit;
    }
    sum += static_cast<double>(hit) / static_cast<double>(ex.gold.size());
    ++r.evaluated;
  }
  if (r.evaluated > 0) r.recall = sum / static_cast<double>(r.evaluated);
  return r;
}

SweepResult sweep(const IndexBuilder& builder,
                  const std::vector<RecallExample>& examples,
                  const std::vector<double>& k1_grid,
                  const std::vector<double>& b_grid, std::size_t k,
                  std::size_t workers) {
  if (k1_grid.empty() || b_grid.empty()) {
    throw ConfigError("sweep grids must be non-empty");
  }
  SweepResult out;
  for (double k1 : k1_grid) {
    for (double b : b_grid) {
      Bm25Params p{k1, b};
      p.validate();
      out.table.push_back({p, {}});
    }
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < out.table.size(); i = next++) {
      const auto index = builder(out.table[i].params);
      out.table[i].result = recall_at_k(index, examples, k);
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, out.table.size());
  if (workers == 1) {
    run();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
  }

  const SweepRow* best = nullptr;
  for (const auto& row : out.table) {
    const bool better =
        !best || row.result.recall > best->result.recall ||
        (row.result.recall == best->result.recall &&
         std::tie(row.params.k1, row.params.b) <
             std::tie(best->params.k1, best->params.b));
    if (better) best = &row;
  }
  out.best = best->params;
  out.best_recall = best->result.recall;
  return out;
}

std::vector<double> parse_grid(std::string_view spec) {
  auto to_double = [&](std::string_view s) {
    std::string text(s);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size() || text.empty()) {
      throw ConfigError("invalid grid value \"" + text + "\"");
    }
    return v;
  };
  std::vector<double> out;
  if (spec.find(':') == std::string_view::npos) {
    std::size_t start = 0;
    while (start <= spec.size()) {
      const auto comma = spec.find(',', start);
      const auto end = comma == std::string_view::npos ? spec.size() : comma;
      out.push_back(to_double(spec.substr(start, end - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  }
  const auto c1 = spec.find(':');
  const auto c2 = spec.find(':', c1 + 1);
  if (c2 == std::string_view::npos) {
    throw ConfigError("grid \"" + std::string(spec) + "\" must be lo:hi:step");
  }
  const double lo = to_double(spec.substr(0, c1));
  const double hi = to_double(spec.substr(c1 + 1, c2 - c1 - 1));
  const double step = to_double(spec.substr(c2 + 1));
  if (!(step > 0.0) || hi < lo) {
    throw ConfigError("grid \"" + std::string(spec) + "\" needs lo <= hi and step > 0");
  }
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e9) / 1e9);
  }
  return out;
}

std::string sweep_csv(const SweepResult& result) {
  std::string csv = "k1,b,recall_at_k\n";
  char buf[128];
  for (const auto& row : result.table) {
    std::snprintf(buf, sizeof(buf), "%g,%g,%.6f\n", row.params.k1, row.params.b,
                  row.result.recall);
    csv += buf;
  }
  return csv;
}

}  // namespace kgqa
