// SPDX-License-Identifier: Apache-2.0
//
// Path baselines: replace the token-embedding component of content
// positions by the [PAD] embedding or by zeros, for all tokens or the query
// span only. Position/segment components and special-token rows are always
// preserved. Strategy selection compares how strongly each baseline
// suppresses the relevance signal.
#pragma once

#include <string>
#include <vector>

#include "conductor/model.hpp"

namespace conductor::baseline {

enum class BaselineStrategy { all_pad, query_pad, all_zero, query_zero };

inline constexpr std::array<BaselineStrategy, 4> kAllStrategies = {
    BaselineStrategy::all_pad, BaselineStrategy::query_pad, BaselineStrategy::all_zero,
    BaselineStrategy::query_zero};

const char* strategy_name(BaselineStrategy s);
BaselineStrategy strategy_from_name(const std::string& name);

/// Baseline embeddings x' for a pair under the given strategy.
tape::Tensor build_baseline(const model::CrossEncoder& m, const model::TokenizedPair& pair,
                            BaselineStrategy strategy);

struct SuppressionScore {
  double baseline_mean = 0.0;  // mean of p(rel) - p(non_rel) at the baseline
  double original_mean = 0.0;  // same statistic at the original embeddings
  int n_pairs = 0;
};

/// Mean signed difference p(relevant) - p(non_relevant) over the pairs,
/// evaluated at baseline embeddings, with the original-input value for
/// reference. Errors on an empty pair set.
SuppressionScore suppression_score(const model::CrossEncoder& m,
                                   const std::vector<model::LabeledPair>& pairs,
                                   BaselineStrategy strategy, int workers = 1);

struct BaselineReportRow {
  std::string strategy;  // "original" or a strategy name
  double mean_signed_diff = 0.0;
  int n_pairs = 0;
};

/// One row per strategy plus the original-embedding reference row.
std::vector<BaselineReportRow> baseline_report(const model::CrossEncoder& m,
                                               const std::vector<model::LabeledPair>& pairs,
                                               int workers = 1);

/// argmin |mean_signed_diff| over the four strategies.
BaselineStrategy select_default_strategy(const std::vector<BaselineReportRow>& report);

std::string report_to_csv(const std::vector<BaselineReportRow>& report);

}  // namespace conductor::baseline
