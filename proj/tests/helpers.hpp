// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures: tiny model configs, random pairs and a hand-instrumented
// reference forward pass kept independent of the traced implementation.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "conductor/model.hpp"
#include "conductor/synthetic.hpp"
#include "conductor/train.hpp"
#include "conductor/util.hpp"

namespace testutil {

using conductor::model::CrossEncoder;
using conductor::model::ModelConfig;
using conductor::model::TokenizedPair;
using conductor::model::Vocabulary;
using conductor::synth::SyntheticSpec;
using conductor::tape::Tensor;

/// Small config used by the gradient and conductance tests.
inline ModelConfig tiny_config(int layers = 2, int d_model = 8, int heads = 2, int d_ff = 16) {
  ModelConfig cfg;
  cfg.num_layers = layers;
  cfg.d_model = d_model;
  cfg.num_heads = heads;
  cfg.d_ff = d_ff;
  cfg.max_seq_len = 16;
  cfg.seed = 42;
  return cfg;
}

inline SyntheticSpec tiny_synth() {
  SyntheticSpec s;
  s.topics = 4;
  s.tokens_per_topic = 8;
  s.query_len = 3;
  s.min_overlap = 2;
  s.passage_min_len = 4;
  s.passage_max_len = 6;
  s.distractors_per_query = 5;
  s.queries = 8;
  return s;
}

/// Untrained tiny model over the tiny synthetic vocabulary.
inline CrossEncoder tiny_model(const ModelConfig& cfg = tiny_config()) {
  Vocabulary vocab = conductor::synth::vocab_for(tiny_synth());
  ModelConfig c = cfg;
  c.vocab_size = static_cast<int>(vocab.size());
  return CrossEncoder(c, vocab);
}

/// A valid pair over the tiny vocabulary; `salt` varies the tokens.
inline TokenizedPair tiny_pair(const CrossEncoder& m, std::uint64_t salt = 0) {
  conductor::util::Rng rng(1000 + salt);
  auto tok = [&](int topic) {
    return "t" + std::to_string(topic) + "w" + std::to_string(rng.below(8));
  };
  int topic = static_cast<int>(rng.below(4));
  std::string q = tok(topic) + " " + tok(topic) + " " + tok(topic);
  std::string p = tok(topic) + " " + tok(topic) + " " + tok(topic) + " " + tok(topic);
  return conductor::model::encode_pair(m, q, p);
}

/// Random embeddings shaped like a model input.
inline Tensor random_embeddings(const CrossEncoder& m, std::size_t seq, std::uint64_t seed) {
  conductor::util::Rng rng(seed);
  Tensor t = Tensor::matrix(seq, m.config().d_model);
  for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal();
  return t;
}

/// Reference forward pass written with plain loops, independent of the
/// trace engine. Supports the same masking semantics: each masked site
/// output column is forced to zero post-bias before downstream use.
std::vector<double> reference_forward(const CrossEncoder& m, const Tensor& embeddings,
                                      const conductor::model::PruningMask* mask);

/// One model trained with the frozen default budget, built on first use and
/// shared across test cases (training is the slow part of the suite).
const CrossEncoder& shared_trained_model(conductor::train::TrainReport* report = nullptr);

}  // namespace testutil
