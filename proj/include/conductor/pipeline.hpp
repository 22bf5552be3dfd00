// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration. Every stage reads only prior-stage artifacts
// from the output directory, so each is independently re-runnable and a
// rerun with the same config and seeds reproduces artifacts byte-for-byte.
#pragma once

#include <string>
#include <vector>

#include "conductor/config.hpp"
#include "conductor/corpus.hpp"
#include "conductor/eval.hpp"

namespace conductor::cli {

class Pipeline {
 public:
  /// config_text is hashed into the manifest under the key "config".
  Pipeline(WorkbenchConfig cfg, std::string out_dir, std::string config_text);

  void gen_corpus();
  void train();
  void baseline_stage();
  void attribute();
  void combine();
  /// One extra expression evaluated against the scheme files.
  void combine_single(const std::string& name, const std::string& expr);
  void ablate();
  void report();

  /// All stages in order; a failure stops the run naming the stage,
  /// keeping partial artifacts.
  void run_all();

  const std::string& out_dir() const { return out_; }

  // -- artifact access (used by stages, the CLI and tests) --
  std::string corpus_dir(const std::string& dataset_id) const;
  corpus::Corpus load_dataset(const std::string& dataset_id) const;
  model::CrossEncoder load_model() const;
  baseline::BaselineStrategy selected_strategy() const;
  nig::AttributionScheme load_scheme(const std::string& name) const;
  sets::NeuronSet load_set(const std::string& name) const;
  std::vector<std::string> list_set_names() const;

  /// Labeled pairs for a dataset from its qrels, tokenized with the model's
  /// padding policy, ordered by (qid, pid).
  static std::vector<model::LabeledPair> labeled_pairs(const corpus::Corpus& c,
                                                       const model::CrossEncoder& m);

  /// Set file base name for a family name and level, e.g. "P_msa@1".
  static std::string set_file_name(const std::string& base, double level);

 private:
  void write_artifact(const std::string& rel_path, const std::string& contents) const;
  std::string scheme_dataset_id(const std::string& name) const;

  WorkbenchConfig cfg_;
  std::string out_;
  std::string config_text_;
};

}  // namespace conductor::cli
