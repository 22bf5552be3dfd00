// SPDX-License-Identifier: Apache-2.0
//
// Neuron conductance via Riemann-sum path integration. For a straight-line
// path from the baseline x' to the input x, each neuron element accumulates
// dF/d(activation) times the step difference of its recorded activation, so
// the per-element sum of activation deltas telescopes to the total change.
// Token positions of one unit are then summed into a single neuron value.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conductor/baseline.hpp"
#include "conductor/model.hpp"

namespace conductor::nig {

enum class Quadrature { riemann_left, riemann_trapezoid };

const char* quadrature_name(Quadrature q);
Quadrature quadrature_from_name(const std::string& name);

struct PathSpec {
  int steps = 100;
  Quadrature quadrature = Quadrature::riemann_trapezoid;

  void validate() const;
};

/// Which scalar F the path gradients target. The default is the pre-softmax
/// logit of the target label; the softmax probability is kept behind this
/// switch for sensitivity runs.
enum class TargetKind { logit, probability };

struct AttributionRecord {
  model::NeuronId neuron;
  std::vector<double> per_token;
  double token_sum = 0.0;
};

/// Per-neuron mean token-summed conductance for one (dataset, label).
struct AttributionScheme {
  std::string dataset_id;
  std::string label;  // "relevant", "non_relevant" or "fused"
  int n_samples = 0;
  PathSpec path;
  std::string model_hash;
  std::vector<double> values;  // enumerate_neurons order

  std::string to_json() const;
  static AttributionScheme from_json(const std::string& text);
};

/// gamma(t) = x' + t * (x - x'), elementwise. Shapes must match, t in [0,1].
tape::Tensor path_point(const tape::Tensor& x, const tape::Tensor& x_baseline, double t);

struct PathRunResult {
  std::vector<tape::Tensor> conductance;  // one tensor per watched node
  double f_x = 0.0;
  double f_baseline = 0.0;
};

/// Core integrator over an arbitrary recorded single-input trace: for each
/// watched node, accumulates quadrature(grad) * step-difference(activation)
/// per element along the straight-line path. Asserts the telescoping
/// property of the step differences. Errors on non-finite gradients naming
/// the step.
PathRunResult path_conductance(const tape::Trace& trace, tape::NodeRef target,
                               const tape::Tensor& x, const tape::Tensor& x_baseline,
                               const PathSpec& path, const std::vector<int>& watched);

/// Conductance of every neuron-output element for one pair, token-summed.
/// Records are in enumerate_neurons order.
std::vector<AttributionRecord> nig_attribute(const model::CrossEncoder& m,
                                             const model::TokenizedPair& pair,
                                             baseline::BaselineStrategy strategy,
                                             model::Label target_label, const PathSpec& path,
                                             TargetKind target = TargetKind::logit);

struct InputAttribution {
  tape::Tensor attributions;  // [seq x d_model]
  double completeness_residual = 0.0;
  double f_x = 0.0;
  double f_baseline = 0.0;
};

/// Integrated gradients on the embedding elements, with the completeness
/// residual |sum - (F(x) - F(x'))|.
InputAttribution ig_input(const model::CrossEncoder& m, const model::TokenizedPair& pair,
                          baseline::BaselineStrategy strategy, model::Label target_label,
                          const PathSpec& path, TargetKind target = TargetKind::logit);

struct CutCompleteness {
  std::vector<double> boundary_sums;  // summed conductance per residual-stream boundary
  double f_x = 0.0;
  double f_baseline = 0.0;
};

/// Summed conductance over every residual-stream layer boundary. Each sum
/// approximates F(x) - F(x') since a boundary is a cut between input and
/// output; individual projection sites are not cuts and carry no such claim.
CutCompleteness cut_completeness(const model::CrossEncoder& m, const model::TokenizedPair& pair,
                                 baseline::BaselineStrategy strategy, model::Label target_label,
                                 const PathSpec& path, TargetKind target = TargetKind::logit);

struct DatasetStats {
  int included = 0;
  int excluded_other_label = 0;        // gold label differs from the scheme's
  int excluded_prediction_mismatch = 0;  // model prediction disagrees with gold
};

/// Mean token-summed conductance over pairs whose gold label matches
/// `label` and whose prediction matches their gold label. Errors when no
/// pair qualifies, listing the exclusion reasons.
AttributionScheme attribute_dataset(const model::CrossEncoder& m,
                                    const std::vector<model::LabeledPair>& pairs,
                                    model::Label label, baseline::BaselineStrategy strategy,
                                    const PathSpec& path, int workers = 1,
                                    DatasetStats* stats = nullptr,
                                    TargetKind target = TargetKind::logit);

/// Reference integrator: same contract as nig_attribute, trapezoid rule at
/// dense_steps >= 10000 resolution. Test use only.
std::vector<AttributionRecord> oracle_nig(const model::CrossEncoder& m,
                                          const model::TokenizedPair& pair,
                                          baseline::BaselineStrategy strategy,
                                          model::Label target_label, int dense_steps,
                                          TargetKind target = TargetKind::logit);

}  // namespace conductor::nig
