// SPDX-License-Identifier: Apache-2.0
//
// Synthetic retrieval corpora over a closed, topic-clustered vocabulary.
//
// Relevance rule: a passage is relevant to a query iff it contains at least
// `min_overlap` of the query's content tokens. The distributions also carry
// passage-internal evidence, the way judged passages in real collections
// look answer-like beyond their query terms: relevant passages stay inside
// the query's topic and include one of the topic's designated answer-marker
// tokens; distractors miss the overlap threshold, never contain markers,
// and mix in tokens from a second topic.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conductor/corpus.hpp"
#include "conductor/tokenizer.hpp"

namespace conductor::synth {

struct SyntheticSpec {
  int topics = 8;
  int tokens_per_topic = 12;
  /// Trailing tokens of each topic vocabulary reserved as answer markers.
  int markers_per_topic = 2;
  int query_len = 3;
  int min_overlap = 2;  // k in the relevance rule
  int passage_min_len = 6;
  int passage_max_len = 10;
  int distractors_per_query = 20;
  int queries = 60;
  /// Fraction of a distractor's non-overlap tokens drawn from a second topic.
  double distractor_mix = 0.5;
  /// Max query tokens a distractor may contain (clamped to min_overlap - 1).
  int distractor_max_overlap = 1;
  /// Emit only relevant qrels lines (datasets lacking negative assessments).
  bool relevant_only_qrels = false;

  void validate() const;
};

/// The vocabulary is a pure function of (topics, tokens_per_topic): token
/// t<i>w<j> for topic i, word j. Every corpus from the same-shaped spec
/// shares it, and the model checkpoint stores it.
model::Vocabulary vocab_for(const SyntheticSpec& spec);

/// Deterministic per (spec, seed). Query ids <prefix>q<n>, passage ids
/// <prefix>p<n>; every query gets exactly one relevant passage and
/// `distractors_per_query` distractors in its candidate list.
corpus::Corpus generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed,
                                         const std::string& dataset_id);

/// True iff `passage_text` contains >= min_overlap of the query's tokens
/// (distinct). This is the ground-truth rule the qrels encode.
bool satisfies_relevance_rule(const SyntheticSpec& spec, const std::string& query_text,
                              const std::string& passage_text);

}  // namespace conductor::synth
