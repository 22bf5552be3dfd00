// SPDX-License-Identifier: Apache-2.0
//
// conductor <subcommand> --config <path> [--out <dir>] [--workers N] [--seed S]
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "conductor/pipeline.hpp"
#include "conductor/util.hpp"

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("CONDUCTOR_OUT");
  return env ? env : "conductor_out";
}

void apply_seed_override(conductor::cli::WorkbenchConfig& cfg, long seed) {
  cfg.model_cfg.seed = static_cast<std::uint32_t>(seed);
  cfg.train_spec.seed = static_cast<std::uint64_t>(seed) + 1;
  cfg.attribute_seed = static_cast<std::uint64_t>(seed) + 2;
  cfg.ablation_seed = static_cast<std::uint64_t>(seed) + 3;
  std::uint64_t i = 0;
  for (auto& d : cfg.datasets) {
    if (d.generate) d.gen_seed = static_cast<std::uint64_t>(seed) + 100 + i;
    ++i;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conductor: neuron-conductance attribution and pruning workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = default_out_dir();
  int workers = 0;
  long seed = -1;
  app.add_option("--config", config_path, "workbench config file")->required();
  app.add_option("--out", out_dir, "output directory (default $CONDUCTOR_OUT or ./conductor_out)");
  app.add_option("--workers", workers, "worker threads (overrides config)");
  app.add_option("--seed", seed, "base seed overriding model/train/attribute/ablation seeds");

  auto* cmd_gen = app.add_subcommand("gen-corpus", "generate configured synthetic corpora");
  auto* cmd_train = app.add_subcommand("train", "train the toy cross-encoder");
  auto* cmd_base = app.add_subcommand("baseline-report", "score baseline strategies (Table-1 shape)");
  auto* cmd_attr = app.add_subcommand("attribute", "compute attribution schemes per dataset/label");
  auto* cmd_comb = app.add_subcommand("combine", "derive neuron sets, curves and histograms");
  std::string expr, expr_name;
  cmd_comb->add_option("--expr", expr, "extra set expression, e.g. top(fuse(P_msa,N_msa),1%)");
  cmd_comb->add_option("--name", expr_name, "output name for --expr");
  auto* cmd_abl = app.add_subcommand("ablate", "pruning ablations with nDCG@10 and t-tests");
  auto* cmd_rep = app.add_subcommand("report", "write the manifest of all artifacts");
  auto* cmd_run = app.add_subcommand("run", "run the whole pipeline");

  CLI11_PARSE(app, argc, argv);

  try {
    std::string config_text = conductor::util::read_file(config_path);
    conductor::cli::WorkbenchConfig cfg = conductor::cli::WorkbenchConfig::from_text(config_text);
    if (workers > 0) cfg.workers = workers;
    if (seed >= 0) apply_seed_override(cfg, seed);

    conductor::cli::Pipeline pipeline(cfg, out_dir, config_text);

    if (cmd_gen->parsed()) pipeline.gen_corpus();
    if (cmd_train->parsed()) pipeline.train();
    if (cmd_base->parsed()) pipeline.baseline_stage();
    if (cmd_attr->parsed()) pipeline.attribute();
    if (cmd_comb->parsed()) {
      if (!expr.empty() || !expr_name.empty()) {
        if (expr.empty() || expr_name.empty()) {
          std::cerr << "combine: --expr and --name must be given together\n";
          return 2;
        }
        pipeline.combine_single(expr_name, expr);
      } else {
        pipeline.combine();
      }
    }
    if (cmd_abl->parsed()) pipeline.ablate();
    if (cmd_rep->parsed()) pipeline.report();
    if (cmd_run->parsed()) pipeline.run_all();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
