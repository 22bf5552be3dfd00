// SPDX-License-Identifier: Apache-2.0
//
// Attribution-set algebra: top-percent selection, intersection, fusion,
// layer-matched random sets, intersection curves and layer histograms.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "conductor/conductance.hpp"
#include "conductor/model.hpp"

namespace conductor::sets {

struct NeuronSet {
  std::string provenance;  // expression that produced the set
  double percent = 0.0;    // selection level X; -1 when operands mixed levels
  std::string model_hash;
  std::vector<model::NeuronId> members;  // sorted, unique

  bool contains(const model::NeuronId& n) const;
  std::string to_json() const;
  static NeuronSet from_json(const std::string& text);
};

/// The ceil(X/100 * total) neurons with the largest mean conductance,
/// ranked most-positive first; ties broken by (layer, site, unit) order.
/// 0 < X <= 100.
NeuronSet top_percent(const model::ModelConfig& cfg, const nig::AttributionScheme& scheme,
                      double percent);

/// Set intersection; all operands must come from the same model.
NeuronSet intersect(const std::vector<NeuronSet>& operands);

/// Elementwise mean of >= 2 schemes over the same neuron space; the result
/// label is "fused".
nig::AttributionScheme fuse(const std::vector<nig::AttributionScheme>& schemes);

/// Uniformly random neurons with the reference's per-layer counts (site
/// unconstrained within a layer). Deterministic per seed.
NeuronSet random_matched_set(const model::ModelConfig& cfg, const NeuronSet& reference,
                             std::uint64_t seed);

struct CurvePoint {
  double percent = 0.0;
  double intersection_pct = 0.0;  // 100 * |top(a) ∩ top(b)| / |top(a)|
};

std::vector<CurvePoint> intersection_curve(const model::ModelConfig& cfg,
                                           const nig::AttributionScheme& a,
                                           const nig::AttributionScheme& b,
                                           const std::vector<double>& percent_grid);

std::string curve_to_csv(const std::vector<CurvePoint>& curve);

/// Per-(layer, site) member counts, including zero rows, summing to |set|.
std::map<std::pair<int, model::Site>, std::size_t> layer_distribution(
    const model::ModelConfig& cfg, const NeuronSet& set);

std::string distribution_to_csv(const model::ModelConfig& cfg, const NeuronSet& set);

}  // namespace conductor::sets
