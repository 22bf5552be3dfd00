// SPDX-License-Identifier: Apache-2.0
//
// On-disk corpus layout: queries.jsonl, passages.jsonl, qrels.txt (TREC
// 4-column), candidates.jsonl. Candidate lists are ingested, never computed.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace conductor::corpus {

struct Query {
  std::string qid;
  std::string text;
};

struct Passage {
  std::string pid;
  std::string text;
};

struct Corpus {
  std::string dataset_id;
  std::vector<Query> queries;
  std::vector<Passage> passages;
  /// qid -> pid -> relevance grade. Grade 0 lines are explicit non-relevant
  /// assessments; absent pairs are unjudged.
  std::map<std::string, std::map<std::string, int>> qrels;
  /// qid -> candidate pids, in file order.
  std::map<std::string, std::vector<std::string>> candidates;

  const Passage& passage(const std::string& pid) const;
  const Query& query(const std::string& qid) const;
  /// Relevance grade, or nullopt when the pair is unjudged.
  std::optional<int> grade(const std::string& qid, const std::string& pid) const;
  /// pid -> passage text, for hot lookup paths.
  std::map<std::string, std::string> passage_texts() const;
};

void write_corpus(const Corpus& c, const std::string& dir);
Corpus load_corpus(const std::string& dir, const std::string& dataset_id);

}  // namespace conductor::corpus
