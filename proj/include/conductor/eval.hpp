// SPDX-License-Identifier: Apache-2.0
//
// Pruning ablation harness: re-rank candidate lists with masked and
// unmasked models, score with nDCG@10, aggregate percentage differences and
// test per-query deltas with a paired two-tailed t-test.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "conductor/corpus.hpp"
#include "conductor/model.hpp"
#include "conductor/schemes.hpp"

namespace conductor::eval {

struct RankedItem {
  std::string pid;
  double score = 0.0;
};

/// Per-query ranked candidate lists; each list is a permutation of the
/// query's candidates with non-increasing scores.
struct RankingRun {
  std::map<std::string, std::vector<RankedItem>> by_query;
};

/// Scores every candidate with the (optionally pruned) model and sorts by
/// score descending, ties by passage id ascending. Unknown pids error.
std::vector<RankedItem> rerank(const model::CrossEncoder& m, const corpus::Corpus& corpus,
                               const std::string& qid, const std::vector<std::string>& pids,
                               const model::PruningMask* mask = nullptr);

/// Re-ranks every candidate list in the corpus.
RankingRun rank_corpus(const model::CrossEncoder& m, const corpus::Corpus& corpus,
                       const model::PruningMask* mask = nullptr, int workers = 1);

/// DCG@k / IDCG@k with gain 2^rel - 1 and discount 1/log2(rank + 1), rank
/// starting at 1. Returns nullopt when the query has no relevant passage in
/// the qrels (the caller skips it with a warning).
std::optional<double> ndcg_at_k(const std::vector<RankedItem>& ranking,
                                const std::map<std::string, int>& qrels_for_query, int k = 10);

/// 100 * (orig - pruned) / orig; positive = degradation. orig must be > 0.
double pct_diff(double orig_mean, double pruned_mean);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  bool degenerate_variance = false;  // zero-variance, nonzero-mean deltas
};

/// Paired two-tailed Student's t-test on per-query deltas (orig - pruned),
/// p from the t distribution with n-1 degrees of freedom. All-zero deltas
/// give t=0, p=1; zero variance with nonzero mean reports the p->0 sentinel
/// with the degenerate flag set.
TTestResult paired_ttest(const std::vector<double>& per_query_orig,
                         const std::vector<double>& per_query_pruned);

/// Regularized incomplete beta I_x(a, b); exposed for the t CDF and its test
/// oracle.
double incomplete_beta(double a, double b, double x);

/// Two-tailed p for |t| with nu degrees of freedom.
double t_two_tailed_p(double t, int nu);

struct AblationRow {
  std::string scheme;
  std::string dataset;
  double level = 0.0;  // pruning percent
  int n_queries = 0;
  double mean_ndcg_orig = 0.0;
  double mean_ndcg_pruned = 0.0;
  double pct_diff = 0.0;
  double t = 0.0;
  double p = 1.0;
  bool degenerate = false;
};

struct RandomBaselineStats {
  std::string matched_to;
  std::string dataset;
  double level = 0.0;
  std::vector<double> rep_pct_diffs;  // one per repetition
  double mean = 0.0;
  double median = 0.0;
  double p975 = 0.0;  // 97.5th percentile
};

struct AblationOptions {
  int random_reps = 50;
  std::uint64_t seed = 1234;
  int ndcg_k = 10;
  int workers = 1;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::vector<RandomBaselineStats> random_rows;
  std::vector<std::string> warnings;
};

/// Runs every named set against every evaluation corpus. Sets are given per
/// level (name -> level -> set). Random layer-matched baselines (one per
/// repetition, seeds seed+i) are run for the sets named in
/// `random_matched_names`. Model-hash mismatches error.
AblationReport ablation_study(
    const model::CrossEncoder& m,
    const std::map<std::string, std::map<double, sets::NeuronSet>>& named_sets,
    const std::vector<corpus::Corpus>& eval_corpora,
    const std::vector<std::string>& random_matched_names, const AblationOptions& opts);

/// TREC 6-column run file ("qid Q0 pid rank score tag").
std::string run_to_trec(const RankingRun& run, const std::string& tag);

/// CSV with one row per (scheme, dataset, level): scheme, dataset, level,
/// pct_diff, p, n_sig. n_sig counts datasets with p <= 0.05 for the same
/// (scheme, level).
std::string report_to_csv(const AblationReport& report);

}  // namespace conductor::eval
