#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "kgqa/chat_client.hpp"
#include "kgqa/error.hpp"
#include "kgqa/evaluation.hpp"

#ifndef KGQA_DATA_DIR
#define KGQA_DATA_DIR "data/toy"
#endif

namespace support {

inline std::filesystem::path toy(const std::string& name) {
  return std::filesystem::path(KGQA_DATA_DIR) / name;
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("kgqa-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

  std::filesystem::path write(const std::string& name, const std::string& content) const {
    const auto p = path_ / name;
    std::ofstream(p, std::ios::binary) << content;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// The toy graph indexed the way the command-line front end does by default.
struct ToyWorld {
  kgqa::Snapshot snapshot = kgqa::Snapshot::load(toy("entities.jsonl"), toy("predicates.jsonl"),
                                                 toy("triples.tsv"));
  std::set<std::string> kept = snapshot.prune_by_degree();
  kgqa::Bm25Index entities = kgqa::Bm25Index::build(snapshot, kgqa::CatalogKind::kEntity,
                                                    kgqa::find_preset("rubq2").entity, &kept);
  kgqa::Bm25Index predicates = kgqa::Bm25Index::build(snapshot, kgqa::CatalogKind::kPredicate,
                                                      kgqa::find_preset("rubq2").predicate);
  kgqa::sparql::LocalExecutor executor{snapshot};
  kgqa::Disambiguator gold_disambiguator = kgqa::Disambiguator::oracle_gold();
  kgqa::Generator passthrough = kgqa::Generator::gold_passthrough();

  std::vector<kgqa::QaExample> questions() const {
    return kgqa::load_dataset(toy("questions.jsonl")).examples;
  }

  // Oracle disambiguation, gold-passthrough generation, local execution.
  kgqa::PipelineConfig oracle_config() {
    kgqa::PipelineConfig c;
    c.snapshot = &snapshot;
    c.entity_index = &entities;
    c.predicate_index = &predicates;
    c.disambiguator = &gold_disambiguator;
    c.generator = &passthrough;
    c.executor = &executor;
    return c;
  }
};

// Replays canned replies in order; the last one repeats. An empty reply
// string stands for a transport failure.
class ScriptedChat : public kgqa::ChatClient {
 public:
  explicit ScriptedChat(std::vector<std::string> replies) : replies_(std::move(replies)) {}

  std::string complete(const std::vector<kgqa::ChatMessage>& messages) override {
    prompts.push_back(messages.empty() ? "" : messages.back().content);
    const auto& r = replies_[std::min(calls++, replies_.size() - 1)];
    if (r.empty()) throw kgqa::RemoteError("scripted failure", 503);
    return r;
  }

  std::size_t calls = 0;
  std::vector<std::string> prompts;

 private:
  std::vector<std::string> replies_;
};

}  // namespace support
