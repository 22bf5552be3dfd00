// SPDX-License-Identifier: Apache-2.0

#include "conductor/tokenizer.hpp"

#include <sstream>
#include <stdexcept>

namespace conductor::model {

Vocabulary Vocabulary::with_content(std::vector<std::string> content_tokens) {
  std::vector<std::string> all = {"[PAD]", "[CLS]", "[SEP]"};
  all.insert(all.end(), content_tokens.begin(), content_tokens.end());
  return from_tokens(std::move(all));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumSpecialTokens || tokens[0] != "[PAD]" || tokens[1] != "[CLS]" ||
      tokens[2] != "[SEP]") {
    throw std::invalid_argument("Vocabulary: token list must start with [PAD] [CLS] [SEP]");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], i).second) {
      throw std::invalid_argument("Vocabulary: duplicate token " + v.tokens_[i]);
    }
  }
  return v;
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw std::invalid_argument("Vocabulary: unknown token '" + token + "'");
  return it->second;
}

std::vector<std::size_t> Vocabulary::encode(const std::string& text) const {
  std::vector<std::size_t> out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) out.push_back(id(tok));
  return out;
}

TokenizedPair tokenize_pair(const Vocabulary& vocab, const std::string& query_text,
                            const std::string& passage_text, std::size_t max_seq_len,
                            std::size_t pad_to_len) {
  std::vector<std::size_t> q = vocab.encode(query_text);
  std::vector<std::size_t> p = vocab.encode(passage_text);

  TokenizedPair tp;
  tp.token_ids.push_back(kClsId);
  tp.query_begin = tp.token_ids.size();
  tp.token_ids.insert(tp.token_ids.end(), q.begin(), q.end());
  tp.query_end = tp.token_ids.size();
  tp.token_ids.push_back(kSepId);
  tp.passage_begin = tp.token_ids.size();
  tp.token_ids.insert(tp.token_ids.end(), p.begin(), p.end());
  tp.passage_end = tp.token_ids.size();
  tp.token_ids.push_back(kSepId);
  while (pad_to_len > 0 && tp.token_ids.size() < pad_to_len) tp.token_ids.push_back(kPadId);

  if (tp.token_ids.size() > max_seq_len) {
    throw std::invalid_argument("tokenize_pair: sequence length " +
                                std::to_string(tp.token_ids.size()) + " exceeds max_seq_len " +
                                std::to_string(max_seq_len));
  }
  tp.segment_ids.assign(tp.token_ids.size(), 1);
  for (std::size_t i = 0; i <= tp.query_end && i < tp.token_ids.size(); ++i) {
    tp.segment_ids[i] = 0;  // CLS, query tokens and the first SEP
  }
  return tp;
}

}  // namespace conductor::model
