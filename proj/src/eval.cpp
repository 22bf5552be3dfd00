// SPDX-License-Identifier: Apache-2.0

#include "conductor/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "conductor/util.hpp"

namespace conductor::eval {

using model::CrossEncoder;
using model::PruningMask;

std::vector<RankedItem> rerank(const CrossEncoder& m, const corpus::Corpus& corpus,
                               const std::string& qid, const std::vector<std::string>& pids,
                               const PruningMask* mask) {
  if (pids.empty()) throw std::invalid_argument("rerank: empty candidate list");
  auto texts = corpus.passage_texts();
  const corpus::Query& q = corpus.query(qid);

  std::vector<RankedItem> out;
  out.reserve(pids.size());
  for (const std::string& pid : pids) {
    auto it = texts.find(pid);
    if (it == texts.end()) {
      throw std::invalid_argument("rerank: unknown passage id " + pid);
    }
    model::TokenizedPair pair = model::encode_pair(m, q.text, it->second);
    out.push_back({pid, m.relevant_logit(pair, mask)});
  }
  std::sort(out.begin(), out.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.pid < b.pid;
  });
  return out;
}

RankingRun rank_corpus(const CrossEncoder& m, const corpus::Corpus& corpus,
                       const PruningMask* mask, int workers) {
  std::vector<std::pair<std::string, std::vector<std::string>>> lists(
      corpus.candidates.begin(), corpus.candidates.end());
  std::vector<std::vector<RankedItem>> ranked(lists.size());
  util::parallel_for(lists.size(), workers, [&](std::size_t i) {
    ranked[i] = rerank(m, corpus, lists[i].first, lists[i].second, mask);
  });
  RankingRun run;
  for (std::size_t i = 0; i < lists.size(); ++i) run.by_query[lists[i].first] = ranked[i];
  return run;
}

std::optional<double> ndcg_at_k(const std::vector<RankedItem>& ranking,
                                const std::map<std::string, int>& qrels_for_query, int k) {
  std::vector<int> grades;
  for (const auto& [pid, rel] : qrels_for_query) {
    if (rel > 0) grades.push_back(rel);
  }
  if (grades.empty()) return std::nullopt;

  auto gain = [](int rel) { return std::pow(2.0, rel) - 1.0; };
  double dcg = 0.0;
  for (std::size_t i = 0; i < ranking.size() && i < static_cast<std::size_t>(k); ++i) {
    auto it = qrels_for_query.find(ranking[i].pid);
    int rel = it == qrels_for_query.end() ? 0 : it->second;
    if (rel > 0) dcg += gain(rel) / std::log2(double(i) + 2.0);
  }
  std::sort(grades.begin(), grades.end(), std::greater<int>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < grades.size() && i < static_cast<std::size_t>(k); ++i) {
    idcg += gain(grades[i]) / std::log2(double(i) + 2.0);
  }
  return dcg / idcg;
}

double pct_diff(double orig_mean, double pruned_mean) {
  if (!(orig_mean > 0.0)) {
    throw std::invalid_argument("pct_diff: original mean must be > 0");
  }
  return 100.0 * (orig_mean - pruned_mean) / orig_mean;
}

namespace {

// Lentz continued fraction for the regularized incomplete beta.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("incomplete_beta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                    b * std::log(1.0 - x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double t_two_tailed_p(double t, int nu) {
  if (nu < 1) throw std::invalid_argument("t_two_tailed_p: degrees of freedom must be >= 1");
  double x = double(nu) / (double(nu) + t * t);
  return incomplete_beta(double(nu) / 2.0, 0.5, x);
}

TTestResult paired_ttest(const std::vector<double>& per_query_orig,
                         const std::vector<double>& per_query_pruned) {
  if (per_query_orig.size() != per_query_pruned.size()) {
    throw std::invalid_argument("paired_ttest: length mismatch");
  }
  const std::size_t n = per_query_orig.size();
  if (n < 2) throw std::invalid_argument("paired_ttest: needs at least two pairs");

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += per_query_orig[i] - per_query_pruned[i];
  mean /= double(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = per_query_orig[i] - per_query_pruned[i] - mean;
    ss += d * d;
  }
  double sd = std::sqrt(ss / double(n - 1));

  TTestResult r;
  if (sd == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      // Identical nonzero shift on every query: the statistic diverges.
      r.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
      r.degenerate_variance = true;
    }
    return r;
  }
  r.t = mean / (sd / std::sqrt(double(n)));
  r.p = t_two_tailed_p(r.t, static_cast<int>(n) - 1);
  return r;
}

namespace {

/// Per-query nDCG for all judged queries; skipped queries are reported.
std::map<std::string, double> corpus_ndcg(const CrossEncoder& m, const corpus::Corpus& corpus,
                                          const PruningMask* mask, int k, int workers,
                                          std::vector<std::string>* warnings) {
  RankingRun run = rank_corpus(m, corpus, mask, workers);
  std::map<std::string, double> out;
  for (const auto& [qid, ranking] : run.by_query) {
    auto qit = corpus.qrels.find(qid);
    if (qit == corpus.qrels.end()) {
      if (warnings) {
        warnings->push_back("query " + qid + " skipped: no assessments");
      }
      continue;
    }
    std::optional<double> score = ndcg_at_k(ranking, qit->second, k);
    if (!score) {
      if (warnings) {
        warnings->push_back("query " + qid + " skipped: no relevant passage judged");
      }
      continue;
    }
    out[qid] = *score;
  }
  return out;
}

model::PruningMask mask_from_set(const sets::NeuronSet& set) {
  model::PruningMask mask;
  mask.neurons.insert(set.members.begin(), set.members.end());
  return mask;
}

}  // namespace

AblationReport ablation_study(
    const CrossEncoder& m,
    const std::map<std::string, std::map<double, sets::NeuronSet>>& named_sets,
    const std::vector<corpus::Corpus>& eval_corpora,
    const std::vector<std::string>& random_matched_names, const AblationOptions& opts) {
  const std::string model_hash = m.content_hash();
  for (const auto& [name, by_level] : named_sets) {
    for (const auto& [level, set] : by_level) {
      if (!set.model_hash.empty() && set.model_hash != model_hash) {
        throw std::invalid_argument("ablation_study: set " + name +
                                    " was computed for a different model (hash mismatch)");
      }
    }
  }

  AblationReport report;

  // Original per-query scores, once per corpus.
  std::map<std::string, std::map<std::string, double>> orig_scores;
  for (const corpus::Corpus& c : eval_corpora) {
    orig_scores[c.dataset_id] =
        corpus_ndcg(m, c, nullptr, opts.ndcg_k, opts.workers, &report.warnings);
    if (orig_scores[c.dataset_id].empty()) {
      throw std::runtime_error("ablation_study: no scoreable query in dataset " + c.dataset_id);
    }
  }

  struct MaskEval {
    double mean_orig = 0.0;
    double mean_pruned = 0.0;
    double pct = 0.0;
    TTestResult ttest;
    int n_queries = 0;
  };
  auto evaluate_mask = [&](const corpus::Corpus& c, const sets::NeuronSet& set,
                           const std::map<std::string, double>& orig) -> MaskEval {
    model::PruningMask mask = mask_from_set(set);
    std::map<std::string, double> pruned =
        corpus_ndcg(m, c, set.members.empty() ? nullptr : &mask, opts.ndcg_k, opts.workers,
                    nullptr);
    std::vector<double> o, p;
    for (const auto& [qid, v] : orig) {
      auto it = pruned.find(qid);
      if (it != pruned.end()) {
        o.push_back(v);
        p.push_back(it->second);
      }
    }
    MaskEval r;
    for (double v : o) r.mean_orig += v;
    for (double v : p) r.mean_pruned += v;
    r.mean_orig /= double(o.size());
    r.mean_pruned /= double(p.size());
    r.pct = pct_diff(r.mean_orig, r.mean_pruned);
    r.ttest = paired_ttest(o, p);
    r.n_queries = static_cast<int>(o.size());
    return r;
  };

  for (const auto& [name, by_level] : named_sets) {
    for (const auto& [level, set] : by_level) {
      for (const corpus::Corpus& c : eval_corpora) {
        MaskEval e = evaluate_mask(c, set, orig_scores[c.dataset_id]);
        AblationRow row;
        row.scheme = name;
        row.dataset = c.dataset_id;
        row.level = level;
        row.n_queries = e.n_queries;
        row.mean_ndcg_orig = e.mean_orig;
        row.mean_ndcg_pruned = e.mean_pruned;
        row.pct_diff = e.pct;
        row.t = e.ttest.t;
        row.p = e.ttest.p;
        row.degenerate = e.ttest.degenerate_variance;
        report.rows.push_back(row);
      }
    }
  }

  // Layer-matched random baselines, averaged over repetitions.
  for (const std::string& name : random_matched_names) {
    auto nit = named_sets.find(name);
    if (nit == named_sets.end()) {
      throw std::invalid_argument("ablation_study: unknown reference set " + name);
    }
    for (const auto& [level, set] : nit->second) {
      if (set.members.empty()) continue;
      for (const corpus::Corpus& c : eval_corpora) {
        RandomBaselineStats stats;
        stats.matched_to = name;
        stats.dataset = c.dataset_id;
        stats.level = level;
        for (int rep = 0; rep < opts.random_reps; ++rep) {
          sets::NeuronSet rnd =
              sets::random_matched_set(m.config(), set, opts.seed + static_cast<std::uint64_t>(rep));
          stats.rep_pct_diffs.push_back(
              evaluate_mask(c, rnd, orig_scores[c.dataset_id]).pct);
        }
        std::vector<double> sorted = stats.rep_pct_diffs;
        std::sort(sorted.begin(), sorted.end());
        for (double v : sorted) stats.mean += v;
        stats.mean /= double(sorted.size());
        stats.median = sorted[sorted.size() / 2];
        std::size_t hi = static_cast<std::size_t>(std::ceil(0.975 * double(sorted.size()))) - 1;
        stats.p975 = sorted[std::min(hi, sorted.size() - 1)];
        report.random_rows.push_back(std::move(stats));
      }
    }
  }
  return report;
}

std::string run_to_trec(const RankingRun& run, const std::string& tag) {
  std::string out;
  for (const auto& [qid, ranking] : run.by_query) {
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      out += qid + " Q0 " + ranking[i].pid + " " + std::to_string(i + 1) + " " +
             util::format_double(ranking[i].score) + " " + tag + "\n";
    }
  }
  return out;
}

std::string report_to_csv(const AblationReport& report) {
  // n_sig counts datasets with p <= 0.05 for each (scheme, level).
  std::map<std::pair<std::string, double>, int> n_sig;
  for (const AblationRow& row : report.rows) {
    if (row.p <= 0.05) n_sig[{row.scheme, row.level}]++;
  }
  std::string csv = "scheme,dataset,level,pct_diff,p,n_sig\n";
  for (const AblationRow& row : report.rows) {
    csv += row.scheme + "," + row.dataset + "," + util::format_double(row.level) + "," +
           util::format_double(row.pct_diff) + "," + util::format_double(row.p) + "," +
           std::to_string(n_sig[{row.scheme, row.level}]) + "\n";
  }
  for (const RandomBaselineStats& s : report.random_rows) {
    csv += "random(" + s.matched_to + ")," + s.dataset + "," + util::format_double(s.level) +
           "," + util::format_double(s.mean) + ",," + "\n";
  }
  return csv;
}

}  // namespace conductor::eval
