// SPDX-License-Identifier: Apache-2.0

#include "conductor/config.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include "conductor/baseline.hpp"
#include "conductor/util.hpp"

namespace conductor::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueTree KeyValueTree::parse(const std::string& text) {
  KeyValueTree tree;
  std::istringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected 'key = value'");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    }
    if (!tree.entries_.emplace(key, value).second) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": duplicate key '" +
                                  key + "'");
    }
  }
  return tree;
}

KeyValueTree KeyValueTree::parse_file(const std::string& path) {
  return parse(util::read_file(path));
}

bool KeyValueTree::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KeyValueTree::get_string(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  consumed_[key] = true;
  return it == entries_.end() ? fallback : it->second;
}

std::string KeyValueTree::require_string(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw std::invalid_argument("config: missing required key '" + key + "'");
  consumed_[key] = true;
  return it->second;
}

long KeyValueTree::get_int(const std::string& key, long fallback) const {
  auto it = entries_.find(key);
  consumed_[key] = true;
  if (it == entries_.end()) return fallback;
  std::size_t pos = 0;
  long v = std::stol(it->second, &pos);
  if (pos != it->second.size()) {
    throw std::invalid_argument("config: key '" + key + "' is not an integer: " + it->second);
  }
  return v;
}

double KeyValueTree::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  consumed_[key] = true;
  if (it == entries_.end()) return fallback;
  std::size_t pos = 0;
  double v = std::stod(it->second, &pos);
  if (pos != it->second.size()) {
    throw std::invalid_argument("config: key '" + key + "' is not a number: " + it->second);
  }
  return v;
}

bool KeyValueTree::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  consumed_[key] = true;
  if (it == entries_.end()) return fallback;
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw std::invalid_argument("config: key '" + key + "' must be true or false");
}

std::vector<double> KeyValueTree::get_double_list(const std::string& key,
                                                  const std::vector<double>& fallback) const {
  auto it = entries_.find(key);
  consumed_[key] = true;
  if (it == entries_.end()) return fallback;
  std::vector<double> out;
  std::stringstream ss(it->second);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    out.push_back(std::stod(part));
  }
  if (out.empty()) throw std::invalid_argument("config: key '" + key + "' has no values");
  return out;
}

std::vector<std::string> KeyValueTree::children(const std::string& prefix) const {
  std::set<std::string> names;
  std::string p = prefix + ".";
  for (const auto& [key, value] : entries_) {
    if (key.rfind(p, 0) == 0) {
      std::string rest = key.substr(p.size());
      std::size_t dot = rest.find('.');
      names.insert(dot == std::string::npos ? rest : rest.substr(0, dot));
    }
  }
  return {names.begin(), names.end()};
}

void KeyValueTree::reject_unknown_keys() const {
  for (const auto& [key, value] : entries_) {
    if (!consumed_.count(key)) {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
}

namespace {

synth::SyntheticSpec read_synth(const KeyValueTree& kv, const std::string& prefix,
                                const synth::SyntheticSpec& defaults) {
  synth::SyntheticSpec s = defaults;
  s.topics = static_cast<int>(kv.get_int(prefix + ".topics", s.topics));
  s.tokens_per_topic =
      static_cast<int>(kv.get_int(prefix + ".tokens_per_topic", s.tokens_per_topic));
  s.query_len = static_cast<int>(kv.get_int(prefix + ".query_len", s.query_len));
  s.min_overlap = static_cast<int>(kv.get_int(prefix + ".min_overlap", s.min_overlap));
  s.passage_min_len =
      static_cast<int>(kv.get_int(prefix + ".passage_min_len", s.passage_min_len));
  s.passage_max_len =
      static_cast<int>(kv.get_int(prefix + ".passage_max_len", s.passage_max_len));
  s.distractors_per_query =
      static_cast<int>(kv.get_int(prefix + ".distractors_per_query", s.distractors_per_query));
  s.queries = static_cast<int>(kv.get_int(prefix + ".queries", s.queries));
  s.distractor_mix = kv.get_double(prefix + ".distractor_mix", s.distractor_mix);
  s.distractor_max_overlap = static_cast<int>(
      kv.get_int(prefix + ".distractor_max_overlap", s.distractor_max_overlap));
  s.relevant_only_qrels = kv.get_bool(prefix + ".relevant_only_qrels", s.relevant_only_qrels);
  return s;
}

}  // namespace

void WorkbenchConfig::validate() const {
  int n_attr = 0, n_eval = 0;
  std::set<std::string> ids;
  for (const DatasetSpec& d : datasets) {
    if (!ids.insert(d.id).second) {
      throw std::invalid_argument("config: duplicate dataset id " + d.id);
    }
    if (d.role == "attribution") ++n_attr;
    else if (d.role == "evaluation") ++n_eval;
    else throw std::invalid_argument("config: dataset " + d.id + " has invalid role '" + d.role +
                                     "' (attribution|evaluation)");
    if (d.domain != "in_domain" && d.domain != "out_of_domain") {
      throw std::invalid_argument("config: dataset " + d.id + " has invalid domain '" + d.domain +
                                  "' (in_domain|out_of_domain)");
    }
    if (!d.generate && d.path.empty()) {
      throw std::invalid_argument("config: dataset " + d.id + " needs a path or gen.* keys");
    }
  }
  if (n_attr < 1 || n_eval < 1) {
    throw std::invalid_argument("config: need at least one attribution and one evaluation dataset");
  }
  for (double x : levels) {
    if (!(x > 0.0) || x > 100.0) {
      throw std::invalid_argument("config: pruning levels must be in (0, 100]");
    }
  }
  if (baseline_strategy != "auto") baseline::strategy_from_name(baseline_strategy);
  path.validate();
}

const DatasetSpec& WorkbenchConfig::dataset(const std::string& id) const {
  for (const DatasetSpec& d : datasets) {
    if (d.id == id) return d;
  }
  throw std::invalid_argument("config: unknown dataset id " + id);
}

std::vector<const DatasetSpec*> WorkbenchConfig::by_role(const std::string& role) const {
  std::vector<const DatasetSpec*> out;
  for (const DatasetSpec& d : datasets) {
    if (d.role == role) out.push_back(&d);
  }
  return out;
}

WorkbenchConfig WorkbenchConfig::from_text(const std::string& text) {
  KeyValueTree kv = KeyValueTree::parse(text);
  WorkbenchConfig c;

  c.model_cfg.num_layers = static_cast<int>(kv.get_int("model.num_layers", 2));
  c.model_cfg.d_model = static_cast<int>(kv.get_int("model.d_model", 32));
  c.model_cfg.num_heads = static_cast<int>(kv.get_int("model.num_heads", 4));
  c.model_cfg.d_ff = static_cast<int>(kv.get_int("model.d_ff", 64));
  c.model_cfg.max_seq_len = static_cast<int>(kv.get_int("model.max_seq_len", 32));
  c.model_cfg.seed = static_cast<std::uint32_t>(kv.get_int("model.seed", 1));
  // vocab_size is derived from the synthetic vocabulary at train time.

  c.train_spec.synth = read_synth(kv, "train.synth", synth::SyntheticSpec{});
  c.train_spec.epochs = static_cast<int>(kv.get_int("train.epochs", c.train_spec.epochs));
  c.train_spec.lr = kv.get_double("train.lr", c.train_spec.lr);
  c.train_spec.clip_norm = kv.get_double("train.clip_norm", c.train_spec.clip_norm);
  c.train_spec.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", 17));
  c.train_spec.holdout_fraction = kv.get_double("train.holdout_fraction", 0.2);
  c.train_spec.negatives_per_query =
      static_cast<int>(kv.get_int("train.negatives_per_query", 1));
  c.train_spec.query_dropout = kv.get_double("train.query_dropout", c.train_spec.query_dropout);
  c.train_spec.blank_dropout = kv.get_double("train.blank_dropout", c.train_spec.blank_dropout);
  c.train_spec.lr_linear_decay = kv.get_bool("train.lr_decay", c.train_spec.lr_linear_decay);

  c.baseline_strategy = kv.get_string("baseline.strategy", "auto");
  c.baseline_sample_size = static_cast<int>(kv.get_int("baseline.sample_size", 200));
  c.baseline_use_all_pairs = kv.get_bool("baseline.use_all_pairs", false);

  c.path.steps = static_cast<int>(kv.get_int("path.steps", 100));
  std::string quad = kv.get_string("path.quadrature", "riemann_trapezoid");
  c.path.quadrature = nig::quadrature_from_name(quad);
  c.target_probability = kv.get_bool("path.target_probability", false);

  c.levels = kv.get_double_list("levels", c.levels);
  c.curve_grid = kv.get_double_list("curves.grid", c.curve_grid);

  c.attribute_max_pairs_per_label =
      static_cast<int>(kv.get_int("attribute.max_pairs_per_label", 60));
  c.attribute_seed = static_cast<std::uint64_t>(kv.get_int("attribute.seed", 23));

  c.ablation_random_reps = static_cast<int>(kv.get_int("ablation.random_reps", 50));
  c.ablation_seed = static_cast<std::uint64_t>(kv.get_int("ablation.seed", 1234));

  c.workers = static_cast<int>(kv.get_int("workers", 1));

  for (const std::string& id : kv.children("dataset")) {
    DatasetSpec d;
    d.id = id;
    std::string prefix = "dataset." + id;
    d.role = kv.require_string(prefix + ".role");
    d.domain = kv.get_string(prefix + ".domain", "in_domain");
    d.path = kv.get_string(prefix + ".path", "");
    if (kv.has(prefix + ".gen.seed")) {
      d.generate = true;
      d.gen_seed = static_cast<std::uint64_t>(kv.get_int(prefix + ".gen.seed", 0));
      d.gen = read_synth(kv, prefix + ".gen", c.train_spec.synth);
      if (d.gen.topics != c.train_spec.synth.topics ||
          d.gen.tokens_per_topic != c.train_spec.synth.tokens_per_topic) {
        throw std::invalid_argument("config: dataset " + id +
                                    " would use a different vocabulary than the trained model "
                                    "(topics/tokens_per_topic must match train.synth)");
      }
    }
    c.datasets.push_back(std::move(d));
  }

  for (const std::string& name : kv.children("combine")) {
    c.combine_extra[name] = kv.require_string("combine." + name);
  }

  kv.reject_unknown_keys();
  c.validate();
  return c;
}

WorkbenchConfig WorkbenchConfig::from_file(const std::string& path) {
  try {
    return from_text(util::read_file(path));
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace conductor::cli
