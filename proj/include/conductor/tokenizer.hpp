// SPDX-License-Identifier: Apache-2.0
//
// Closed-vocabulary whitespace tokenizer and the query/passage pair layout
// [CLS] query [SEP] passage [SEP] [PAD]...
#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace conductor::model {

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kClsId = 1;
inline constexpr std::size_t kSepId = 2;
inline constexpr std::size_t kNumSpecialTokens = 3;

class Vocabulary {
 public:
  Vocabulary() = default;

  /// Builds [PAD], [CLS], [SEP] followed by the given content tokens.
  static Vocabulary with_content(std::vector<std::string> content_tokens);

  /// Rebuilds from a full token list (as stored in a checkpoint).
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }

  /// Id of a token; throws on unknown (the vocabulary is closed).
  std::size_t id(const std::string& token) const;

  /// Whitespace-splits and maps every token.
  std::vector<std::size_t> encode(const std::string& text) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Label { relevant = 0, non_relevant = 1 };

inline const char* label_name(Label l) {
  return l == Label::relevant ? "relevant" : "non_relevant";
}

struct TokenizedPair {
  std::vector<std::size_t> token_ids;
  std::vector<int> segment_ids;  // 0 through the first [SEP], 1 after
  std::size_t query_begin = 0, query_end = 0;      // [begin, end) content positions
  std::size_t passage_begin = 0, passage_end = 0;  // [begin, end) content positions

  std::size_t length() const { return token_ids.size(); }
  bool in_query_span(std::size_t pos) const { return pos >= query_begin && pos < query_end; }
  bool in_passage_span(std::size_t pos) const {
    return pos >= passage_begin && pos < passage_end;
  }
  /// [CLS], [SEP] and trailing [PAD] positions.
  bool is_special(std::size_t pos) const {
    return !in_query_span(pos) && !in_passage_span(pos);
  }
};

/// Lays out [CLS] query [SEP] passage [SEP], then pads with [PAD] up to
/// pad_to_len (0 = no padding). Throws if the result exceeds max_seq_len.
TokenizedPair tokenize_pair(const Vocabulary& vocab, const std::string& query_text,
                            const std::string& passage_text, std::size_t max_seq_len,
                            std::size_t pad_to_len = 0);

struct LabeledPair {
  TokenizedPair pair;
  Label gold = Label::relevant;
  std::string dataset_id;
  std::string query_id;
  std::string passage_id;
};

}  // namespace conductor::model
