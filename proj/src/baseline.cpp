// SPDX-License-Identifier: Apache-2.0

#include "conductor/baseline.hpp"

#include <cmath>
#include <stdexcept>

#include "conductor/util.hpp"

namespace conductor::baseline {

using model::TokenizedPair;
using tape::Tensor;

const char* strategy_name(BaselineStrategy s) {
  switch (s) {
    case BaselineStrategy::all_pad: return "all_pad";
    case BaselineStrategy::query_pad: return "query_pad";
    case BaselineStrategy::all_zero: return "all_zero";
    case BaselineStrategy::query_zero: return "query_zero";
  }
  return "?";
}

BaselineStrategy strategy_from_name(const std::string& name) {
  for (BaselineStrategy s : kAllStrategies) {
    if (name == strategy_name(s)) return s;
  }
  throw std::invalid_argument("unknown baseline strategy: " + name);
}

Tensor build_baseline(const model::CrossEncoder& m, const TokenizedPair& pair,
                      BaselineStrategy strategy) {
  const bool query_only =
      strategy == BaselineStrategy::query_pad || strategy == BaselineStrategy::query_zero;
  const bool to_pad =
      strategy == BaselineStrategy::all_pad || strategy == BaselineStrategy::query_pad;

  const Tensor& tok = m.param("tok_emb");
  const Tensor& pos = m.param("pos_emb");
  const Tensor& seg = m.param("seg_emb");
  const std::size_t d = m.config().d_model;

  // Replaced rows are rebuilt with the same term order as embed(), so a
  // no-op replacement (PAD -> PAD) is bitwise identical to the original.
  Tensor out = m.embed(pair);
  for (std::size_t p = 0; p < pair.length(); ++p) {
    if (pair.is_special(p)) continue;  // [CLS]/[SEP]/[PAD] rows stay untouched
    if (query_only && !pair.in_query_span(p)) continue;
    const std::size_t s = static_cast<std::size_t>(pair.segment_ids[p]);
    for (std::size_t j = 0; j < d; ++j) {
      // Swap only the token-embedding component; position/segment terms stay.
      out(p, j) = to_pad ? tok(model::kPadId, j) + pos(p, j) + seg(s, j)
                         : pos(p, j) + seg(s, j);
    }
  }
  return out;
}

SuppressionScore suppression_score(const model::CrossEncoder& m,
                                   const std::vector<model::LabeledPair>& pairs,
                                   BaselineStrategy strategy, int workers) {
  if (pairs.empty()) throw std::invalid_argument("suppression_score: empty pair set");

  std::vector<double> base_diff(pairs.size()), orig_diff(pairs.size());
  util::parallel_for(pairs.size(), workers, [&](std::size_t i) {
    const TokenizedPair& pair = pairs[i].pair;
    Tensor lb = m.forward(build_baseline(m, pair, strategy));
    auto pb = model::softmax2(lb.at(0), lb.at(1));
    base_diff[i] = pb[0] - pb[1];
    Tensor lo = m.forward(m.embed(pair));
    auto po = model::softmax2(lo.at(0), lo.at(1));
    orig_diff[i] = po[0] - po[1];
  });

  SuppressionScore s;
  s.n_pairs = static_cast<int>(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {  // fixed order reduction
    s.baseline_mean += base_diff[i];
    s.original_mean += orig_diff[i];
  }
  s.baseline_mean /= double(pairs.size());
  s.original_mean /= double(pairs.size());
  return s;
}

std::vector<BaselineReportRow> baseline_report(const model::CrossEncoder& m,
                                               const std::vector<model::LabeledPair>& pairs,
                                               int workers) {
  std::vector<BaselineReportRow> rows;
  bool first = true;
  for (BaselineStrategy s : kAllStrategies) {
    SuppressionScore score = suppression_score(m, pairs, s, workers);
    if (first) {
      rows.push_back({"original", score.original_mean, score.n_pairs});
      first = false;
    }
    rows.push_back({strategy_name(s), score.baseline_mean, score.n_pairs});
  }
  return rows;
}

BaselineStrategy select_default_strategy(const std::vector<BaselineReportRow>& report) {
  const BaselineReportRow* best = nullptr;
  for (const BaselineReportRow& row : report) {
    if (row.strategy == "original") continue;
    if (!best || std::abs(row.mean_signed_diff) < std::abs(best->mean_signed_diff)) {
      best = &row;
    }
  }
  if (!best) throw std::invalid_argument("select_default_strategy: no strategy rows");
  return strategy_from_name(best->strategy);
}

std::string report_to_csv(const std::vector<BaselineReportRow>& report) {
  std::string csv = "strategy,mean_signed_diff,n_pairs\n";
  for (const BaselineReportRow& row : report) {
    csv += row.strategy + "," + util::format_double(row.mean_signed_diff) + "," +
           std::to_string(row.n_pairs) + "\n";
  }
  return csv;
}

}  // namespace conductor::baseline
