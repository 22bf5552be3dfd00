// SPDX-License-Identifier: Apache-2.0

#include "conductor/conductance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "conductor/autodiff.hpp"
#include "conductor/util.hpp"

namespace conductor::nig {

using baseline::BaselineStrategy;
using model::CrossEncoder;
using model::Label;
using model::TokenizedPair;
using tape::Tensor;
using tape::Trace;

const char* quadrature_name(Quadrature q) {
  return q == Quadrature::riemann_left ? "riemann_left" : "riemann_trapezoid";
}

Quadrature quadrature_from_name(const std::string& name) {
  if (name == "riemann_left") return Quadrature::riemann_left;
  if (name == "riemann_trapezoid") return Quadrature::riemann_trapezoid;
  throw std::invalid_argument("unknown quadrature: " + name);
}

void PathSpec::validate() const {
  if (steps < 1) throw std::invalid_argument("PathSpec: steps must be >= 1");
}

Tensor path_point(const Tensor& x, const Tensor& x_baseline, double t) {
  if (!x.same_shape(x_baseline)) {
    throw std::invalid_argument("path_point: shape mismatch " + x.shape_string() + " vs " +
                                x_baseline.shape_string());
  }
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("path_point: t must be in [0,1]");
  Tensor out = x_baseline;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out.at(i) += t * (x.at(i) - x_baseline.at(i));
  }
  return out;
}

namespace {

// Activation deltas accumulated over the path must reproduce the total
// activation change; rounding in the summed deltas is the only slack.
constexpr double kTelescopeTol = 1e-9;

struct PathTarget {
  int node = -1;
  std::size_t elem = 0;
};

/// Extends a traced forward with the target scalar (logit or probability).
PathTarget make_target(model::TracedForward& tf, Label label, TargetKind kind) {
  std::size_t col = label == Label::relevant ? 0 : 1;
  if (kind == TargetKind::logit) return {tf.logits_node, col};
  return {tf.trace.softmax(tf.logits_node), col};
}

}  // namespace

PathRunResult path_conductance(const Trace& trace, tape::NodeRef target, const Tensor& x,
                               const Tensor& x_base, const PathSpec& path,
                               const std::vector<int>& watched) {
  path.validate();
  const int n = path.steps;
  const bool trapezoid = path.quadrature == Quadrature::riemann_trapezoid;

  PathRunResult run;
  run.conductance.reserve(watched.size());

  std::vector<Tensor> prev_act(watched.size()), prev_grad(watched.size());
  std::vector<Tensor> delta_sum(watched.size()), first_act(watched.size());
  double target_at_0 = 0.0, target_at_1 = 0.0;

  for (int k = 0; k <= n; ++k) {
    double t = double(k) / double(n);
    Tensor point = path_point(x, x_base, t);
    std::vector<Tensor> vals = trace.replay({point});
    std::vector<Tensor> adj = tape::backward(trace, vals, target);

    double f = vals[target.node].at(target.elem);
    if (!std::isfinite(f)) {
      throw std::runtime_error("path integration: non-finite target at step " +
                               std::to_string(k));
    }
    if (k == 0) target_at_0 = f;
    if (k == n) target_at_1 = f;

    for (std::size_t w = 0; w < watched.size(); ++w) {
      const Tensor& act = vals[watched[w]];
      const Tensor& grad = adj[watched[w]];
      if (!grad.all_finite()) {
        throw std::runtime_error("path integration: non-finite gradient at step " +
                                 std::to_string(k));
      }
      if (k == 0) {
        run.conductance.push_back(Tensor(act.shape()));
        delta_sum[w] = Tensor(act.shape());
        first_act[w] = act;
      } else {
        Tensor& acc = run.conductance[w];
        for (std::size_t e = 0; e < act.numel(); ++e) {
          double delta = act.at(e) - prev_act[w].at(e);
          double factor =
              trapezoid ? 0.5 * (prev_grad[w].at(e) + grad.at(e)) : prev_grad[w].at(e);
          acc.at(e) += factor * delta;
          delta_sum[w].at(e) += delta;
        }
      }
      prev_act[w] = act;
      prev_grad[w] = grad;
    }
  }

  // Telescoping check: summed deltas equal total activation change.
  for (std::size_t w = 0; w < watched.size(); ++w) {
    for (std::size_t e = 0; e < delta_sum[w].numel(); ++e) {
      double total = prev_act[w].at(e) - first_act[w].at(e);
      double err = std::abs(delta_sum[w].at(e) - total);
      if (err > kTelescopeTol * std::max(1.0, std::abs(total))) {
        throw std::logic_error("path integration: telescoping violated (err " +
                               std::to_string(err) + ")");
      }
    }
  }

  run.f_baseline = target_at_0;
  run.f_x = target_at_1;
  return run;
}

namespace {

std::vector<AttributionRecord> records_from_sites(const model::ModelConfig& cfg,
                                                  const std::vector<Tensor>& site_cond) {
  std::vector<AttributionRecord> records;
  records.reserve(model::neuron_count(cfg));
  std::size_t idx = 0;
  for (int layer = 0; layer < cfg.num_layers; ++layer) {
    for (model::Site site : model::kAllSites) {
      const Tensor& c = site_cond[idx++];
      const std::size_t width = model::site_width(cfg, site);
      const std::size_t seq = c.rows();
      for (std::size_t unit = 0; unit < width; ++unit) {
        AttributionRecord rec;
        rec.neuron = model::NeuronId{layer, site, static_cast<int>(unit)};
        rec.per_token.resize(seq);
        double sum = 0.0;
        for (std::size_t tokpos = 0; tokpos < seq; ++tokpos) {
          rec.per_token[tokpos] = c(tokpos, unit);
          sum += c(tokpos, unit);
        }
        rec.token_sum = sum;
        records.push_back(std::move(rec));
      }
    }
  }
  return records;
}

std::vector<int> site_watch_list(const model::TracedForward& tf) {
  std::vector<int> watched;
  for (const auto& layer_sites : tf.site_nodes) {
    for (int node : layer_sites) watched.push_back(node);
  }
  return watched;
}

}  // namespace

std::vector<AttributionRecord> nig_attribute(const CrossEncoder& m, const TokenizedPair& pair,
                                             BaselineStrategy strategy, Label target_label,
                                             const PathSpec& path, TargetKind target) {
  Tensor x = m.embed(pair);
  Tensor x_base = baseline::build_baseline(m, pair, strategy);
  model::TracedForward tf = m.traced_forward(x);
  PathTarget tgt = make_target(tf, target_label, target);

  PathRunResult run =
      path_conductance(tf.trace, {tgt.node, tgt.elem}, x, x_base, path, site_watch_list(tf));
  return records_from_sites(m.config(), run.conductance);
}

InputAttribution ig_input(const CrossEncoder& m, const TokenizedPair& pair,
                          BaselineStrategy strategy, Label target_label, const PathSpec& path,
                          TargetKind target) {
  Tensor x = m.embed(pair);
  Tensor x_base = baseline::build_baseline(m, pair, strategy);
  model::TracedForward tf = m.traced_forward(x);
  PathTarget tgt = make_target(tf, target_label, target);

  PathRunResult run =
      path_conductance(tf.trace, {tgt.node, tgt.elem}, x, x_base, path, {tf.input_node});

  InputAttribution out;
  out.attributions = run.conductance[0];
  out.f_x = run.f_x;
  out.f_baseline = run.f_baseline;
  double sum = 0.0;
  for (std::size_t e = 0; e < out.attributions.numel(); ++e) sum += out.attributions.at(e);
  out.completeness_residual = std::abs(sum - (run.f_x - run.f_baseline));
  return out;
}

CutCompleteness cut_completeness(const CrossEncoder& m, const TokenizedPair& pair,
                                 BaselineStrategy strategy, Label target_label,
                                 const PathSpec& path, TargetKind target) {
  Tensor x = m.embed(pair);
  Tensor x_base = baseline::build_baseline(m, pair, strategy);
  model::TracedForward tf = m.traced_forward(x);
  PathTarget tgt = make_target(tf, target_label, target);

  PathRunResult run =
      path_conductance(tf.trace, {tgt.node, tgt.elem}, x, x_base, path, tf.boundary_nodes);

  CutCompleteness out;
  out.f_x = run.f_x;
  out.f_baseline = run.f_baseline;
  for (const Tensor& c : run.conductance) {
    double sum = 0.0;
    for (std::size_t e = 0; e < c.numel(); ++e) sum += c.at(e);
    out.boundary_sums.push_back(sum);
  }
  return out;
}

AttributionScheme attribute_dataset(const CrossEncoder& m,
                                    const std::vector<model::LabeledPair>& pairs, Label label,
                                    BaselineStrategy strategy, const PathSpec& path, int workers,
                                    DatasetStats* stats, TargetKind target) {
  path.validate();
  DatasetStats local;
  std::vector<const model::LabeledPair*> included;
  for (const model::LabeledPair& lp : pairs) {
    if (lp.gold != label) {
      ++local.excluded_other_label;
      continue;
    }
    if (m.predict_label(lp.pair).label != lp.gold) {
      ++local.excluded_prediction_mismatch;
      continue;
    }
    included.push_back(&lp);
  }
  local.included = static_cast<int>(included.size());
  if (stats) *stats = local;

  if (included.empty()) {
    throw std::runtime_error(
        "attribute_dataset: no pair qualifies for label '" + std::string(label_name(label)) +
        "' (" + std::to_string(local.excluded_other_label) + " have the other gold label, " +
        std::to_string(local.excluded_prediction_mismatch) +
        " excluded because the model prediction disagrees with the assessment)");
  }

  // Deterministic merge order regardless of worker count.
  std::sort(included.begin(), included.end(),
            [](const model::LabeledPair* a, const model::LabeledPair* b) {
              return std::tie(a->dataset_id, a->query_id, a->passage_id) <
                     std::tie(b->dataset_id, b->query_id, b->passage_id);
            });

  const std::size_t n_neurons = model::neuron_count(m.config());
  std::vector<std::vector<double>> per_pair(included.size());
  util::parallel_for(included.size(), workers, [&](std::size_t i) {
    std::vector<AttributionRecord> recs =
        nig_attribute(m, included[i]->pair, strategy, label, path, target);
    std::vector<double> sums(n_neurons);
    for (std::size_t r = 0; r < recs.size(); ++r) sums[r] = recs[r].token_sum;
    per_pair[i] = std::move(sums);
  });

  AttributionScheme scheme;
  scheme.dataset_id = included[0]->dataset_id;
  scheme.label = label_name(label);
  scheme.n_samples = static_cast<int>(included.size());
  scheme.path = path;
  scheme.model_hash = m.content_hash();
  scheme.values.assign(n_neurons, 0.0);
  for (std::size_t i = 0; i < per_pair.size(); ++i) {  // fixed order
    for (std::size_t r = 0; r < n_neurons; ++r) scheme.values[r] += per_pair[i][r];
  }
  for (double& v : scheme.values) v /= double(included.size());
  return scheme;
}

std::vector<AttributionRecord> oracle_nig(const CrossEncoder& m, const TokenizedPair& pair,
                                          BaselineStrategy strategy, Label target_label,
                                          int dense_steps, TargetKind target) {
  if (dense_steps < 10000) {
    throw std::invalid_argument("oracle_nig: dense_steps must be >= 10000");
  }
  // Plain trapezoid accumulation, written as its own loop so the production
  // integrator is checked against a straightforward reference.
  Tensor x = m.embed(pair);
  Tensor x_base = baseline::build_baseline(m, pair, strategy);
  model::TracedForward tf = m.traced_forward(x);
  PathTarget tgt = make_target(tf, target_label, target);
  std::vector<int> watched = site_watch_list(tf);

  std::vector<Tensor> acc;
  std::vector<Tensor> prev_act(watched.size()), prev_grad(watched.size());
  for (int k = 0; k <= dense_steps; ++k) {
    double t = double(k) / double(dense_steps);
    Tensor point = path_point(x, x_base, t);
    std::vector<Tensor> vals = tf.trace.replay({point});
    std::vector<Tensor> adj = tape::backward(tf.trace, vals, {tgt.node, tgt.elem});
    for (std::size_t w = 0; w < watched.size(); ++w) {
      const Tensor& act = vals[watched[w]];
      const Tensor& grad = adj[watched[w]];
      if (!grad.all_finite()) {
        throw std::runtime_error("oracle_nig: non-finite gradient at step " + std::to_string(k));
      }
      if (k == 0) {
        acc.push_back(Tensor(act.shape()));
      } else {
        for (std::size_t e = 0; e < act.numel(); ++e) {
          acc[w].at(e) += 0.5 * (prev_grad[w].at(e) + grad.at(e)) *
                          (act.at(e) - prev_act[w].at(e));
        }
      }
      prev_act[w] = act;
      prev_grad[w] = grad;
    }
  }
  return records_from_sites(m.config(), acc);
}

std::string AttributionScheme::to_json() const {
  nlohmann::json j;
  j["dataset"] = dataset_id;
  j["label"] = label;
  j["n_samples"] = n_samples;
  j["path"] = {{"N", path.steps}, {"quadrature", quadrature_name(path.quadrature)}};
  j["model_hash"] = model_hash;
  j["values"] = values;
  return j.dump(2) + "\n";
}

AttributionScheme AttributionScheme::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  AttributionScheme s;
  s.dataset_id = j.at("dataset").get<std::string>();
  s.label = j.at("label").get<std::string>();
  s.n_samples = j.at("n_samples").get<int>();
  s.path.steps = j.at("path").at("N").get<int>();
  s.path.quadrature = quadrature_from_name(j.at("path").at("quadrature").get<std::string>());
  s.model_hash = j.at("model_hash").get<std::string>();
  s.values = j.at("values").get<std::vector<double>>();
  return s;
}

}  // namespace conductor::nig
