// SPDX-License-Identifier: Apache-2.0
//
// Workbench configuration: a line-based key-value tree ("a.b.c = value",
// '#' comments). The schema is documented in the README.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "conductor/model.hpp"
#include "conductor/conductance.hpp"
#include "conductor/train.hpp"

namespace conductor::cli {

/// Flat parsed key-value file. Typed getters track which keys were read so
/// unknown (misspelled) keys can be rejected afterwards.
class KeyValueTree {
 public:
  static KeyValueTree parse(const std::string& text);
  static KeyValueTree parse_file(const std::string& path);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  long get_int(const std::string& key, long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

  /// Keys under `prefix.`, with the prefix stripped up to the next dot:
  /// children("dataset") over dataset.msa.role yields {"msa"}.
  std::vector<std::string> children(const std::string& prefix) const;

  /// Throws if any key was never read by a getter.
  void reject_unknown_keys() const;

 private:
  std::map<std::string, std::string> entries_;
  mutable std::map<std::string, bool> consumed_;
};

struct DatasetSpec {
  std::string id;
  std::string role;    // "attribution" | "evaluation"
  std::string domain;  // "in_domain" | "out_of_domain"
  std::string path;    // ingest from here when non-empty
  bool generate = false;
  synth::SyntheticSpec gen;
  std::uint64_t gen_seed = 0;
};

struct WorkbenchConfig {
  model::ModelConfig model_cfg;
  train::TrainSpec train_spec;

  std::string baseline_strategy = "auto";  // or a strategy name
  int baseline_sample_size = 200;
  bool baseline_use_all_pairs = false;

  nig::PathSpec path;
  bool target_probability = false;  // sensitivity switch; default is the logit

  std::vector<double> levels = {0.01, 0.1, 1.0};
  std::vector<double> curve_grid = {0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0};

  int attribute_max_pairs_per_label = 60;
  std::uint64_t attribute_seed = 23;

  int ablation_random_reps = 50;
  std::uint64_t ablation_seed = 1234;

  int workers = 1;

  std::vector<DatasetSpec> datasets;
  /// Extra combine-stage expressions: output set name -> expression.
  std::map<std::string, std::string> combine_extra;

  void validate() const;
  const DatasetSpec& dataset(const std::string& id) const;
  std::vector<const DatasetSpec*> by_role(const std::string& role) const;

  static WorkbenchConfig from_text(const std::string& text);
  static WorkbenchConfig from_file(const std::string& path);
};

}  // namespace conductor::cli
