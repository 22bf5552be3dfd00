// SPDX-License-Identifier: Apache-2.0

#include "conductor/corpus.hpp"

#include <functional>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "conductor/util.hpp"

namespace conductor::corpus {

using nlohmann::json;

const Passage& Corpus::passage(const std::string& pid) const {
  for (const Passage& p : passages) {
    if (p.pid == pid) return p;
  }
  throw std::invalid_argument("corpus " + dataset_id + ": unknown passage id " + pid);
}

const Query& Corpus::query(const std::string& qid) const {
  for (const Query& q : queries) {
    if (q.qid == qid) return q;
  }
  throw std::invalid_argument("corpus " + dataset_id + ": unknown query id " + qid);
}

std::optional<int> Corpus::grade(const std::string& qid, const std::string& pid) const {
  auto qit = qrels.find(qid);
  if (qit == qrels.end()) return std::nullopt;
  auto pit = qit->second.find(pid);
  if (pit == qit->second.end()) return std::nullopt;
  return pit->second;
}

std::map<std::string, std::string> Corpus::passage_texts() const {
  std::map<std::string, std::string> out;
  for (const Passage& p : passages) out[p.pid] = p.text;
  return out;
}

void write_corpus(const Corpus& c, const std::string& dir) {
  std::string queries_out, passages_out, qrels_out, candidates_out;
  for (const Query& q : c.queries) {
    queries_out += json{{"qid", q.qid}, {"text", q.text}}.dump() + "\n";
  }
  for (const Passage& p : c.passages) {
    passages_out += json{{"pid", p.pid}, {"text", p.text}}.dump() + "\n";
  }
  for (const auto& [qid, by_pid] : c.qrels) {
    for (const auto& [pid, rel] : by_pid) {
      qrels_out += qid + " 0 " + pid + " " + std::to_string(rel) + "\n";
    }
  }
  for (const auto& [qid, pids] : c.candidates) {
    candidates_out += json{{"qid", qid}, {"pids", pids}}.dump() + "\n";
  }
  util::write_file(dir + "/queries.jsonl", queries_out);
  util::write_file(dir + "/passages.jsonl", passages_out);
  util::write_file(dir + "/qrels.txt", qrels_out);
  util::write_file(dir + "/candidates.jsonl", candidates_out);
}

namespace {

void for_each_line(const std::string& text, const std::string& what,
                   const std::function<void(const std::string&, std::size_t)>& fn) {
  std::istringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      fn(line, lineno);
    } catch (const std::exception& e) {
      throw std::runtime_error(what + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

Corpus load_corpus(const std::string& dir, const std::string& dataset_id) {
  Corpus c;
  c.dataset_id = dataset_id;

  for_each_line(util::read_file(dir + "/queries.jsonl"), dir + "/queries.jsonl",
                [&](const std::string& line, std::size_t) {
                  json j = json::parse(line);
                  c.queries.push_back({j.at("qid").get<std::string>(),
                                       j.at("text").get<std::string>()});
                });
  for_each_line(util::read_file(dir + "/passages.jsonl"), dir + "/passages.jsonl",
                [&](const std::string& line, std::size_t) {
                  json j = json::parse(line);
                  c.passages.push_back({j.at("pid").get<std::string>(),
                                        j.at("text").get<std::string>()});
                });
  for_each_line(util::read_file(dir + "/qrels.txt"), dir + "/qrels.txt",
                [&](const std::string& line, std::size_t) {
                  std::istringstream ls(line);
                  std::string qid, zero, pid;
                  int rel;
                  if (!(ls >> qid >> zero >> pid >> rel)) {
                    throw std::runtime_error("expected 'qid 0 pid rel'");
                  }
                  c.qrels[qid][pid] = rel;
                });
  for_each_line(util::read_file(dir + "/candidates.jsonl"), dir + "/candidates.jsonl",
                [&](const std::string& line, std::size_t) {
                  json j = json::parse(line);
                  c.candidates[j.at("qid").get<std::string>()] =
                      j.at("pids").get<std::vector<std::string>>();
                });
  return c;
}

}  // namespace conductor::corpus
