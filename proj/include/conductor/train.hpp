// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale trainer: cross-entropy, plain SGD with global-norm gradient
// clipping, single-threaded and deterministic for a given seed.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conductor/model.hpp"
#include "conductor/synthetic.hpp"

namespace conductor::train {

struct TrainSpec {
  synth::SyntheticSpec synth{.queries = 400};
  int epochs = 150;
  double lr = 0.08;
  /// Linear decay: epoch e trains at lr * (1 - e/epochs). Late epochs then
  /// average the per-sample updates instead of oscillating with them.
  bool lr_linear_decay = true;
  double clip_norm = 0.3;
  std::uint64_t seed = 17;
  /// Fraction of queries held out for the accuracy report.
  double holdout_fraction = 0.2;
  /// Negatives sampled per query, keeping the pair classes balanced.
  int negatives_per_query = 1;
  /// Span-dropout probabilities (label unchanged). When a dropout fires,
  /// the span's token embeddings are replaced by the [PAD] embedding or by
  /// zero vectors (picked 50/50). Query dropout trains the passage-side
  /// relevance evidence; blank dropout teaches the model that contentless
  /// inputs are uninformative.
  double query_dropout = 0.25;
  double blank_dropout = 0.1;
};

struct TrainReport {
  int train_pairs = 0;
  int holdout_pairs = 0;
  double holdout_accuracy = 0.0;
  std::vector<double> epoch_mean_loss;
};

/// Builds a synthetic corpus from spec.synth (seed spec.seed), trains a
/// fresh model initialized from cfg.seed, and reports held-out accuracy.
/// Throws on non-finite loss with epoch/step diagnostics.
model::CrossEncoder train_toy(const model::ModelConfig& cfg, const TrainSpec& spec,
                              TrainReport* report = nullptr);

/// Accuracy of `m` on balanced (relevant, non_relevant) pairs drawn from
/// `held_out`; used for the report and the untrained-model sanity check.
double pair_accuracy(const model::CrossEncoder& m,
                     const std::vector<model::LabeledPair>& pairs);

/// Balanced labeled pairs for a corpus: for every query, its relevant
/// passage plus `negatives_per_query` judged-non-relevant candidates.
std::vector<model::LabeledPair> balanced_pairs(const corpus::Corpus& corpus,
                                               const model::Vocabulary& vocab,
                                               std::size_t max_seq_len, std::size_t pad_to_len,
                                               int negatives_per_query, std::uint64_t seed);

}  // namespace conductor::train
