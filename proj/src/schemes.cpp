// SPDX-License-Identifier: Apache-2.0

#include "conductor/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "conductor/util.hpp"

namespace conductor::sets {

using model::ModelConfig;
using model::NeuronId;

bool NeuronSet::contains(const NeuronId& n) const {
  return std::binary_search(members.begin(), members.end(), n);
}

NeuronSet top_percent(const ModelConfig& cfg, const nig::AttributionScheme& scheme,
                      double percent) {
  if (!(percent > 0.0) || percent > 100.0) {
    throw std::invalid_argument("top_percent: X must be in (0, 100]");
  }
  const std::size_t total = model::neuron_count(cfg);
  if (scheme.values.size() != total) {
    throw std::invalid_argument("top_percent: scheme does not cover this model's neurons");
  }
  const std::size_t count =
      std::min<std::size_t>(total, static_cast<std::size_t>(
                                       std::ceil(percent / 100.0 * double(total))));

  // Rank by value descending; ties fall back to neuron order, which is the
  // index order of the scheme vector.
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scheme.values[a] > scheme.values[b];
  });

  std::vector<NeuronId> all = model::enumerate_neurons(cfg);
  NeuronSet out;
  out.provenance = "top(" + scheme.dataset_id + ":" + scheme.label + "," +
                   util::format_double(percent) + "%)";
  out.percent = percent;
  out.model_hash = scheme.model_hash;
  out.members.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.members.push_back(all[idx[i]]);
  std::sort(out.members.begin(), out.members.end());
  return out;
}

NeuronSet intersect(const std::vector<NeuronSet>& operands) {
  if (operands.empty()) throw std::invalid_argument("intersect: needs at least one set");
  for (const NeuronSet& s : operands) {
    if (s.model_hash != operands[0].model_hash) {
      throw std::invalid_argument("intersect: sets come from different models (hash mismatch)");
    }
  }
  NeuronSet out;
  out.members = operands[0].members;
  for (std::size_t i = 1; i < operands.size(); ++i) {
    std::vector<NeuronId> next;
    std::set_intersection(out.members.begin(), out.members.end(), operands[i].members.begin(),
                          operands[i].members.end(), std::back_inserter(next));
    out.members = std::move(next);
  }
  out.model_hash = operands[0].model_hash;
  out.percent = operands[0].percent;
  std::string prov = "inter(";
  for (std::size_t i = 0; i < operands.size(); ++i) {
    if (i) prov += ",";
    prov += operands[i].provenance;
    if (operands[i].percent != out.percent) out.percent = -1.0;
  }
  out.provenance = prov + ")";
  return out;
}

nig::AttributionScheme fuse(const std::vector<nig::AttributionScheme>& schemes) {
  if (schemes.size() < 2) throw std::invalid_argument("fuse: needs at least two schemes");
  const std::size_t n = schemes[0].values.size();
  for (const nig::AttributionScheme& s : schemes) {
    if (s.values.size() != n) {
      throw std::invalid_argument("fuse: schemes cover different neuron spaces");
    }
    if (s.model_hash != schemes[0].model_hash) {
      throw std::invalid_argument("fuse: schemes come from different models (hash mismatch)");
    }
  }
  nig::AttributionScheme out;
  std::string name = "fuse(";
  for (std::size_t i = 0; i < schemes.size(); ++i) {
    if (i) name += ",";
    name += schemes[i].dataset_id + ":" + schemes[i].label;
    out.n_samples += schemes[i].n_samples;
  }
  out.dataset_id = name + ")";
  out.label = "fused";
  out.path = schemes[0].path;
  out.model_hash = schemes[0].model_hash;
  out.values.assign(n, 0.0);
  for (const nig::AttributionScheme& s : schemes) {
    for (std::size_t i = 0; i < n; ++i) out.values[i] += s.values[i];
  }
  for (double& v : out.values) v /= double(schemes.size());
  return out;
}

NeuronSet random_matched_set(const ModelConfig& cfg, const NeuronSet& reference,
                             std::uint64_t seed) {
  if (reference.members.empty()) {
    throw std::invalid_argument("random_matched_set: reference set is empty");
  }
  std::vector<std::size_t> per_layer(cfg.num_layers, 0);
  for (const NeuronId& n : reference.members) {
    per_layer.at(n.layer)++;
  }

  util::Rng rng(seed);
  NeuronSet out;
  out.provenance = "random_matched(" + reference.provenance + ")";
  out.percent = reference.percent;
  out.model_hash = reference.model_hash;
  for (int layer = 0; layer < cfg.num_layers; ++layer) {
    if (per_layer[layer] == 0) continue;
    std::vector<NeuronId> pool;
    for (model::Site site : model::kAllSites) {
      for (std::size_t u = 0; u < model::site_width(cfg, site); ++u) {
        pool.push_back(NeuronId{layer, site, static_cast<int>(u)});
      }
    }
    if (per_layer[layer] > pool.size()) {
      throw std::invalid_argument("random_matched_set: reference exceeds layer capacity");
    }
    rng.shuffle(pool);
    for (std::size_t i = 0; i < per_layer[layer]; ++i) out.members.push_back(pool[i]);
  }
  std::sort(out.members.begin(), out.members.end());
  return out;
}

std::vector<CurvePoint> intersection_curve(const ModelConfig& cfg,
                                           const nig::AttributionScheme& a,
                                           const nig::AttributionScheme& b,
                                           const std::vector<double>& percent_grid) {
  std::vector<CurvePoint> out;
  for (double x : percent_grid) {
    NeuronSet sa = top_percent(cfg, a, x);
    NeuronSet sb = top_percent(cfg, b, x);
    NeuronSet both = intersect({sa, sb});
    out.push_back({x, 100.0 * double(both.members.size()) / double(sa.members.size())});
  }
  return out;
}

std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::string csv = "X,intersection_pct\n";
  for (const CurvePoint& p : curve) {
    csv += util::format_double(p.percent) + "," + util::format_double(p.intersection_pct) + "\n";
  }
  return csv;
}

std::map<std::pair<int, model::Site>, std::size_t> layer_distribution(const ModelConfig& cfg,
                                                                      const NeuronSet& set) {
  std::map<std::pair<int, model::Site>, std::size_t> hist;
  for (int layer = 0; layer < cfg.num_layers; ++layer) {
    for (model::Site site : model::kAllSites) hist[{layer, site}] = 0;
  }
  for (const NeuronId& n : set.members) {
    hist.at({n.layer, n.site})++;
  }
  return hist;
}

std::string distribution_to_csv(const ModelConfig& cfg, const NeuronSet& set) {
  auto hist = layer_distribution(cfg, set);
  std::string csv = "layer,site,count\n";
  for (int layer = 0; layer < cfg.num_layers; ++layer) {
    for (model::Site site : model::kAllSites) {
      csv += std::to_string(layer) + "," + site_name(site) + "," +
             std::to_string(hist.at({layer, site})) + "\n";
    }
  }
  return csv;
}

std::string NeuronSet::to_json() const {
  nlohmann::json j;
  j["provenance"] = provenance;
  j["X"] = percent;
  j["model_hash"] = model_hash;
  nlohmann::json ids = nlohmann::json::array();
  for (const NeuronId& n : members) {
    ids.push_back({{"layer", n.layer}, {"site", site_name(n.site)}, {"unit", n.unit}});
  }
  j["neuron_ids"] = std::move(ids);
  return j.dump(2) + "\n";
}

NeuronSet NeuronSet::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  NeuronSet s;
  s.provenance = j.at("provenance").get<std::string>();
  s.percent = j.at("X").get<double>();
  s.model_hash = j.at("model_hash").get<std::string>();
  for (const auto& e : j.at("neuron_ids")) {
    s.members.push_back(NeuronId{e.at("layer").get<int>(),
                                 model::site_from_name(e.at("site").get<std::string>()),
                                 e.at("unit").get<int>()});
  }
  std::sort(s.members.begin(), s.members.end());
  return s;
}

}  // namespace conductor::sets
