// SPDX-License-Identifier: Apache-2.0

#include "conductor/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "conductor/expr.hpp"
#include "conductor/util.hpp"

namespace conductor::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Pipeline::Pipeline(WorkbenchConfig cfg, std::string out_dir, std::string config_text)
    : cfg_(std::move(cfg)), out_(std::move(out_dir)), config_text_(std::move(config_text)) {
  cfg_.validate();
}

void Pipeline::write_artifact(const std::string& rel_path, const std::string& contents) const {
  util::write_file(out_ + "/" + rel_path, contents);
}

std::string Pipeline::corpus_dir(const std::string& dataset_id) const {
  const DatasetSpec& d = cfg_.dataset(dataset_id);
  return d.generate ? out_ + "/corpora/" + dataset_id : d.path;
}

corpus::Corpus Pipeline::load_dataset(const std::string& dataset_id) const {
  return corpus::load_corpus(corpus_dir(dataset_id), dataset_id);
}

model::CrossEncoder Pipeline::load_model() const {
  std::string path = out_ + "/model.json";
  if (!fs::exists(path)) {
    throw std::runtime_error("no model checkpoint at " + path + " (run the train stage first)");
  }
  return model::CrossEncoder::load(path);
}

std::string Pipeline::set_file_name(const std::string& base, double level) {
  return base + "@" + util::format_double(level);
}

void Pipeline::gen_corpus() {
  for (const DatasetSpec& d : cfg_.datasets) {
    if (!d.generate) continue;
    corpus::Corpus c = synth::generate_synthetic_corpus(d.gen, d.gen_seed, d.id);
    std::string dir = out_ + "/corpora/" + d.id;
    corpus::write_corpus(c, dir);
    json vocab_json = synth::vocab_for(d.gen).tokens();
    util::write_file(dir + "/vocab.json", vocab_json.dump(2) + "\n");
  }
}

void Pipeline::train() {
  train::TrainReport report;
  model::CrossEncoder m = train::train_toy(cfg_.model_cfg, cfg_.train_spec, &report);
  m.save(out_ + "/model.json");
  json j;
  j["train_pairs"] = report.train_pairs;
  j["holdout_pairs"] = report.holdout_pairs;
  j["holdout_accuracy"] = report.holdout_accuracy;
  j["epoch_mean_loss"] = report.epoch_mean_loss;
  j["model_hash"] = m.content_hash();
  write_artifact("train_report.json", j.dump(2) + "\n");
}

std::vector<model::LabeledPair> Pipeline::labeled_pairs(const corpus::Corpus& c,
                                                        const model::CrossEncoder& m) {
  auto texts = c.passage_texts();
  std::map<std::string, std::string> qtexts;
  for (const corpus::Query& q : c.queries) qtexts[q.qid] = q.text;

  std::vector<model::LabeledPair> out;
  for (const auto& [qid, by_pid] : c.qrels) {
    auto qt = qtexts.find(qid);
    if (qt == qtexts.end()) {
      throw std::runtime_error("dataset " + c.dataset_id + ": qrels reference unknown query " + qid);
    }
    for (const auto& [pid, rel] : by_pid) {
      auto pt = texts.find(pid);
      if (pt == texts.end()) {
        throw std::runtime_error("dataset " + c.dataset_id + ": qrels reference unknown passage " +
                                 pid);
      }
      model::LabeledPair lp;
      lp.pair = model::encode_pair(m, qt->second, pt->second);
      lp.gold = rel >= 1 ? model::Label::relevant : model::Label::non_relevant;
      lp.dataset_id = c.dataset_id;
      lp.query_id = qid;
      lp.passage_id = pid;
      out.push_back(std::move(lp));
    }
  }
  return out;
}

void Pipeline::baseline_stage() {
  model::CrossEncoder m = load_model();

  // Pair pool: the in-domain attribution dataset (falling back to the first
  // attribution dataset), filtered to model-predicted-relevant pairs unless
  // configured to use all pairs.
  auto attribution = cfg_.by_role("attribution");
  const DatasetSpec* source = attribution.front();
  for (const DatasetSpec* d : attribution) {
    if (d->domain == "in_domain") {
      source = d;
      break;
    }
  }
  std::vector<model::LabeledPair> pool = labeled_pairs(load_dataset(source->id), m);
  std::vector<model::LabeledPair> pairs;
  for (const model::LabeledPair& lp : pool) {
    if (static_cast<int>(pairs.size()) >= cfg_.baseline_sample_size) break;
    if (!cfg_.baseline_use_all_pairs &&
        m.predict_label(lp.pair).label != model::Label::relevant) {
      continue;
    }
    pairs.push_back(lp);
  }
  if (pairs.empty()) {
    throw std::runtime_error("baseline-report: no qualifying pairs in dataset " + source->id);
  }

  auto report = baseline::baseline_report(m, pairs, cfg_.workers);
  write_artifact("baseline_report.csv", baseline::report_to_csv(report));

  std::string strategy = cfg_.baseline_strategy;
  std::string mode = "fixed";
  if (strategy == "auto") {
    strategy = baseline::strategy_name(baseline::select_default_strategy(report));
    mode = "auto";
  }
  json j;
  j["strategy"] = strategy;
  j["mode"] = mode;
  j["source_dataset"] = source->id;
  j["n_pairs"] = static_cast<int>(pairs.size());
  write_artifact("baseline_selected.json", j.dump(2) + "\n");
}

baseline::BaselineStrategy Pipeline::selected_strategy() const {
  if (cfg_.baseline_strategy != "auto") {
    return baseline::strategy_from_name(cfg_.baseline_strategy);
  }
  std::string path = out_ + "/baseline_selected.json";
  if (!fs::exists(path)) {
    throw std::runtime_error("baseline strategy is 'auto' but " + path +
                             " is missing (run the baseline-report stage first)");
  }
  json j = json::parse(util::read_file(path));
  return baseline::strategy_from_name(j.at("strategy").get<std::string>());
}

void Pipeline::attribute() {
  model::CrossEncoder m = load_model();
  baseline::BaselineStrategy strategy = selected_strategy();
  nig::TargetKind target =
      cfg_.target_probability ? nig::TargetKind::probability : nig::TargetKind::logit;

  json report;
  report["datasets"] = json::object();
  std::vector<std::string> warnings;

  for (const DatasetSpec* d : cfg_.by_role("attribution")) {
    corpus::Corpus c = load_dataset(d->id);
    std::vector<model::LabeledPair> all = labeled_pairs(c, m);

    std::vector<model::LabeledPair> rel, nonrel;
    for (model::LabeledPair& lp : all) {
      (lp.gold == model::Label::relevant ? rel : nonrel).push_back(std::move(lp));
    }
    util::Rng rng(cfg_.attribute_seed);
    rng.shuffle(rel);
    rng.shuffle(nonrel);
    auto cap = [&](std::vector<model::LabeledPair>& v) {
      if (static_cast<int>(v.size()) > cfg_.attribute_max_pairs_per_label) {
        v.resize(cfg_.attribute_max_pairs_per_label);
      }
    };
    cap(rel);
    cap(nonrel);

    json dj;
    {
      nig::DatasetStats stats;
      nig::AttributionScheme p = nig::attribute_dataset(m, rel, model::Label::relevant, strategy,
                                                        cfg_.path, cfg_.workers, &stats, target);
      p.dataset_id = d->id;
      write_artifact("schemes/P_" + d->id + ".json", p.to_json());
      dj["P"] = {{"included", stats.included},
                 {"excluded_prediction_mismatch", stats.excluded_prediction_mismatch}};
    }
    if (nonrel.empty()) {
      // Datasets with only relevant assessments get no N scheme.
      warnings.push_back("dataset " + d->id +
                         ": non_relevant scheme skipped (no non-relevant assessments)");
      dj["N"] = "skipped";
    } else {
      nig::DatasetStats stats;
      nig::AttributionScheme n =
          nig::attribute_dataset(m, nonrel, model::Label::non_relevant, strategy, cfg_.path,
                                 cfg_.workers, &stats, target);
      n.dataset_id = d->id;
      write_artifact("schemes/N_" + d->id + ".json", n.to_json());
      dj["N"] = {{"included", stats.included},
                 {"excluded_prediction_mismatch", stats.excluded_prediction_mismatch}};
    }
    report["datasets"][d->id] = dj;
  }
  report["warnings"] = warnings;
  report["baseline_strategy"] = baseline::strategy_name(strategy);
  write_artifact("attribute_report.json", report.dump(2) + "\n");
}

nig::AttributionScheme Pipeline::load_scheme(const std::string& name) const {
  std::string path = out_ + "/schemes/" + name + ".json";
  if (!fs::exists(path)) {
    throw std::invalid_argument("unknown scheme '" + name + "' (no " + path + ")");
  }
  return nig::AttributionScheme::from_json(util::read_file(path));
}

sets::NeuronSet Pipeline::load_set(const std::string& name) const {
  return sets::NeuronSet::from_json(util::read_file(out_ + "/sets/" + name + ".json"));
}

std::vector<std::string> Pipeline::list_set_names() const {
  std::vector<std::string> names;
  fs::path dir = out_ + "/sets";
  if (!fs::exists(dir)) return names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") names.push_back(entry.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

void Pipeline::combine() {
  model::CrossEncoder m = load_model();
  const model::ModelConfig& mc = m.config();

  std::vector<std::string> all_ids, ood_ids, neg_ids, ood_neg_ids;
  std::map<std::string, nig::AttributionScheme> p_schemes, n_schemes;
  for (const DatasetSpec* d : cfg_.by_role("attribution")) {
    all_ids.push_back(d->id);
    p_schemes[d->id] = load_scheme("P_" + d->id);
    if (fs::exists(out_ + "/schemes/N_" + d->id + ".json")) {
      n_schemes[d->id] = load_scheme("N_" + d->id);
      neg_ids.push_back(d->id);
      if (d->domain == "out_of_domain") ood_neg_ids.push_back(d->id);
    }
    if (d->domain == "out_of_domain") ood_ids.push_back(d->id);
  }

  // Fusions: F_<id> per dataset with both labels; F_A over every base scheme.
  std::map<std::string, nig::AttributionScheme> f_schemes;
  for (const std::string& id : neg_ids) {
    f_schemes[id] = sets::fuse({p_schemes[id], n_schemes[id]});
  }
  std::vector<nig::AttributionScheme> all_base;
  for (const std::string& id : all_ids) all_base.push_back(p_schemes[id]);
  for (const std::string& id : neg_ids) all_base.push_back(n_schemes[id]);
  bool have_fa = all_base.size() >= 2;
  nig::AttributionScheme f_all;
  if (have_fa) f_all = sets::fuse(all_base);

  auto write_set = [&](const std::string& base, double level, const sets::NeuronSet& s) {
    std::string name = set_file_name(base, level);
    write_artifact("sets/" + name + ".json", s.to_json());
    write_artifact("hists/" + name + ".csv", sets::distribution_to_csv(mc, s));
  };

  for (double level : cfg_.levels) {
    std::map<std::string, sets::NeuronSet> p_sets, n_sets, f_sets;
    for (const std::string& id : all_ids) {
      p_sets[id] = sets::top_percent(mc, p_schemes[id], level);
      write_set("P_" + id, level, p_sets[id]);
    }
    for (const std::string& id : neg_ids) {
      n_sets[id] = sets::top_percent(mc, n_schemes[id], level);
      write_set("N_" + id, level, n_sets[id]);
      f_sets[id] = sets::top_percent(mc, f_schemes[id], level);
      write_set("F_" + id, level, f_sets[id]);
    }

    auto collect = [](const std::map<std::string, sets::NeuronSet>& sets_by_id,
                      const std::vector<std::string>& ids) {
      std::vector<sets::NeuronSet> out;
      for (const std::string& id : ids) out.push_back(sets_by_id.at(id));
      return out;
    };
    write_set("interP_A", level, sets::intersect(collect(p_sets, all_ids)));
    if (!neg_ids.empty()) {
      write_set("interN_A", level, sets::intersect(collect(n_sets, neg_ids)));
      write_set("interF_A", level, sets::intersect(collect(f_sets, neg_ids)));
    }
    if (!ood_ids.empty()) {
      write_set("interP_O", level, sets::intersect(collect(p_sets, ood_ids)));
    }
    if (!ood_neg_ids.empty()) {
      write_set("interN_O", level, sets::intersect(collect(n_sets, ood_neg_ids)));
      write_set("interF_O", level, sets::intersect(collect(f_sets, ood_neg_ids)));
    }
    if (have_fa) {
      write_set("F_A", level, sets::top_percent(mc, f_all, level));
    }
  }

  // Intersection curves for every same-label scheme pair (the figures'
  // pairwise comparisons).
  for (std::size_t i = 0; i < all_ids.size(); ++i) {
    for (std::size_t j = i + 1; j < all_ids.size(); ++j) {
      auto curve = sets::intersection_curve(mc, p_schemes[all_ids[i]], p_schemes[all_ids[j]],
                                            cfg_.curve_grid);
      write_artifact("curves/P_" + all_ids[i] + "__P_" + all_ids[j] + ".csv",
                     sets::curve_to_csv(curve));
    }
  }
  for (std::size_t i = 0; i < neg_ids.size(); ++i) {
    for (std::size_t j = i + 1; j < neg_ids.size(); ++j) {
      auto curve = sets::intersection_curve(mc, n_schemes[neg_ids[i]], n_schemes[neg_ids[j]],
                                            cfg_.curve_grid);
      write_artifact("curves/N_" + neg_ids[i] + "__N_" + neg_ids[j] + ".csv",
                     sets::curve_to_csv(curve));
    }
  }

  // Label-scheme disjointness report: overlap(P_x, N_x) at each level.
  std::string overlap_csv = "dataset,X,overlap_pct\n";
  for (const std::string& id : neg_ids) {
    for (double level : cfg_.levels) {
      sets::NeuronSet p = sets::top_percent(mc, p_schemes[id], level);
      sets::NeuronSet n = sets::top_percent(mc, n_schemes[id], level);
      double pct =
          100.0 * double(sets::intersect({p, n}).members.size()) / double(p.members.size());
      overlap_csv += id + "," + util::format_double(level) + "," + util::format_double(pct) + "\n";
    }
  }
  write_artifact("report/overlap_pn.csv", overlap_csv);

  for (const auto& [name, expr] : cfg_.combine_extra) {
    combine_single(name, expr);
  }
}

void Pipeline::combine_single(const std::string& name, const std::string& expr) {
  model::CrossEncoder m = load_model();
  SchemeResolver resolver = [&](const std::string& ident) { return load_scheme(ident); };
  sets::NeuronSet s = eval_set_expr(m.config(), resolver, expr);
  write_artifact("sets/" + name + ".json", s.to_json());
  write_artifact("hists/" + name + ".csv", sets::distribution_to_csv(m.config(), s));
}

void Pipeline::ablate() {
  model::CrossEncoder m = load_model();

  std::map<std::string, std::map<double, sets::NeuronSet>> named_sets;
  for (const std::string& name : list_set_names()) {
    sets::NeuronSet s = load_set(name);
    std::string base = name;
    std::size_t at = name.rfind('@');
    if (at != std::string::npos) base = name.substr(0, at);
    named_sets[base][s.percent] = std::move(s);
  }
  if (named_sets.empty()) {
    throw std::runtime_error("ablate: no set files (run the combine stage first)");
  }

  std::vector<corpus::Corpus> eval_corpora;
  for (const DatasetSpec* d : cfg_.by_role("evaluation")) {
    eval_corpora.push_back(load_dataset(d->id));
  }

  // Random baselines are layer-matched to the fused in-domain scheme (the
  // paper's strongest comparator), falling back to its P scheme.
  std::string ref_base;
  auto attribution = cfg_.by_role("attribution");
  const DatasetSpec* in_domain = attribution.front();
  for (const DatasetSpec* d : attribution) {
    if (d->domain == "in_domain") {
      in_domain = d;
      break;
    }
  }
  if (named_sets.count("F_" + in_domain->id)) ref_base = "F_" + in_domain->id;
  else if (named_sets.count("P_" + in_domain->id)) ref_base = "P_" + in_domain->id;

  eval::AblationOptions opts;
  opts.random_reps = cfg_.ablation_random_reps;
  opts.seed = cfg_.ablation_seed;
  opts.workers = cfg_.workers;
  std::vector<std::string> random_names;
  if (!ref_base.empty()) random_names.push_back(ref_base);

  eval::AblationReport report = eval::ablation_study(m, named_sets, eval_corpora, random_names, opts);

  write_artifact("ablation_report.csv", eval::report_to_csv(report));

  json details;
  details["rows"] = json::array();
  for (const eval::AblationRow& r : report.rows) {
    details["rows"].push_back({{"scheme", r.scheme},
                               {"dataset", r.dataset},
                               {"level", r.level},
                               {"n_queries", r.n_queries},
                               {"mean_ndcg_orig", r.mean_ndcg_orig},
                               {"mean_ndcg_pruned", r.mean_ndcg_pruned},
                               {"pct_diff", r.pct_diff},
                               {"t", r.degenerate ? json() : json(r.t)},
                               {"p", r.p},
                               {"degenerate_variance", r.degenerate}});
  }
  details["random"] = json::array();
  for (const eval::RandomBaselineStats& s : report.random_rows) {
    details["random"].push_back({{"matched_to", s.matched_to},
                                 {"dataset", s.dataset},
                                 {"level", s.level},
                                 {"rep_pct_diffs", s.rep_pct_diffs},
                                 {"mean", s.mean},
                                 {"median", s.median},
                                 {"p975", s.p975}});
  }
  details["warnings"] = report.warnings;
  write_artifact("ablation_details.json", details.dump(2) + "\n");

  // TREC run files: the original ranking and, per level, the ranking under
  // the reference scheme's pruning.
  for (const corpus::Corpus& c : eval_corpora) {
    eval::RankingRun run = eval::rank_corpus(m, c, nullptr, cfg_.workers);
    write_artifact("runs/original_" + c.dataset_id + ".trec",
                   eval::run_to_trec(run, "original"));
    if (!ref_base.empty()) {
      for (const auto& [level, set] : named_sets.at(ref_base)) {
        model::PruningMask mask;
        mask.neurons.insert(set.members.begin(), set.members.end());
        eval::RankingRun pruned = eval::rank_corpus(m, c, &mask, cfg_.workers);
        std::string tag = set_file_name(ref_base, level);
        write_artifact("runs/" + tag + "_" + c.dataset_id + ".trec",
                       eval::run_to_trec(pruned, tag));
      }
    }
  }
}

void Pipeline::report() {
  json files = json::object();

  std::vector<std::string> rel_paths;
  for (const auto& entry : fs::recursive_directory_iterator(out_)) {
    if (!entry.is_regular_file()) continue;
    std::string rel = fs::relative(entry.path(), out_).generic_string();
    if (rel == "manifest.json") continue;
    rel_paths.push_back(rel);
  }
  std::sort(rel_paths.begin(), rel_paths.end());
  for (const std::string& rel : rel_paths) {
    files[rel] = util::sha256_file(out_ + "/" + rel);
  }

  // Ingested (non-generated) corpora live outside the output directory but
  // are still part of what the run read.
  for (const DatasetSpec& d : cfg_.datasets) {
    if (d.generate) continue;
    for (const char* name : {"queries.jsonl", "passages.jsonl", "qrels.txt", "candidates.jsonl"}) {
      files[std::string("external:") + d.id + "/" + name] =
          util::sha256_file(d.path + "/" + std::string(name));
    }
  }

  json manifest;
  manifest["config"] = util::sha256_hex(config_text_);
  manifest["files"] = std::move(files);
  write_artifact("manifest.json", manifest.dump(2) + "\n");
}

void Pipeline::run_all() {
  struct Stage {
    const char* name;
    void (Pipeline::*fn)();
  };
  const Stage stages[] = {
      {"gen-corpus", &Pipeline::gen_corpus}, {"train", &Pipeline::train},
      {"baseline-report", &Pipeline::baseline_stage}, {"attribute", &Pipeline::attribute},
      {"combine", &Pipeline::combine},       {"ablate", &Pipeline::ablate},
      {"report", &Pipeline::report},
  };
  for (const Stage& stage : stages) {
    try {
      (this->*stage.fn)();
    } catch (const std::exception& e) {
      throw std::runtime_error("stage " + std::string(stage.name) + " failed: " + e.what());
    }
  }
}

}  // namespace conductor::cli
