// SPDX-License-Identifier: Apache-2.0

#include "conductor/train.hpp"

#include <cmath>
#include <stdexcept>

#include "conductor/autodiff.hpp"
#include "conductor/baseline.hpp"
#include "conductor/util.hpp"

namespace conductor::train {

using model::CrossEncoder;
using model::Label;
using model::LabeledPair;
using model::TokenizedPair;
using tape::Tensor;

std::vector<LabeledPair> balanced_pairs(const corpus::Corpus& corpus,
                                        const model::Vocabulary& vocab,
                                        std::size_t max_seq_len, std::size_t pad_to_len,
                                        int negatives_per_query, std::uint64_t seed) {
  util::Rng rng(seed);
  auto texts = corpus.passage_texts();
  std::vector<LabeledPair> out;
  for (const corpus::Query& q : corpus.queries) {
    auto qit = corpus.qrels.find(q.qid);
    if (qit == corpus.qrels.end()) continue;
    std::vector<std::string> positives, negatives;
    for (const auto& [pid, rel] : qit->second) {
      (rel >= 1 ? positives : negatives).push_back(pid);
    }
    for (const std::string& pid : positives) {
      out.push_back({model::tokenize_pair(vocab, q.text, texts.at(pid), max_seq_len, pad_to_len),
                     Label::relevant, corpus.dataset_id, q.qid, pid});
    }
    rng.shuffle(negatives);
    int take = std::min<int>(negatives_per_query * static_cast<int>(positives.size()),
                             static_cast<int>(negatives.size()));
    for (int i = 0; i < take; ++i) {
      out.push_back(
          {model::tokenize_pair(vocab, q.text, texts.at(negatives[i]), max_seq_len, pad_to_len),
           Label::non_relevant, corpus.dataset_id, q.qid, negatives[i]});
    }
  }
  return out;
}

double pair_accuracy(const CrossEncoder& m, const std::vector<LabeledPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("pair_accuracy: no pairs");
  int correct = 0;
  for (const LabeledPair& lp : pairs) {
    if (m.predict_label(lp.pair).label == lp.gold) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

namespace {

/// Appends -log softmax(logits)[gold] to the trace.
int cross_entropy_node(tape::Trace& tr, int logits_node, Label gold) {
  int probs = tr.softmax(logits_node);
  int logp = tr.log_ew(probs);
  std::size_t g = gold == Label::relevant ? 0 : 1;
  int picked = tr.slice_cols(logp, g, g + 1);
  return tr.scale(picked, -1.0);
}

}  // namespace

CrossEncoder train_toy(const model::ModelConfig& cfg, const TrainSpec& spec,
                       TrainReport* report) {
  corpus::Corpus corpus = synth::generate_synthetic_corpus(spec.synth, spec.seed, "train");
  model::Vocabulary vocab = synth::vocab_for(spec.synth);

  model::ModelConfig mc = cfg;
  mc.vocab_size = static_cast<int>(vocab.size());
  const std::size_t pad_to = 3 + spec.synth.query_len + spec.synth.passage_max_len;
  if (pad_to > static_cast<std::size_t>(mc.max_seq_len)) {
    throw std::invalid_argument("train_toy: max_seq_len too small for the synthetic spec");
  }
  mc.pad_to_len = static_cast<int>(pad_to);
  CrossEncoder m(mc, vocab);

  // Split by query, then build balanced pairs per split.
  util::Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::string> qids;
  for (const corpus::Query& q : corpus.queries) qids.push_back(q.qid);
  rng.shuffle(qids);
  std::size_t holdout_n = static_cast<std::size_t>(std::round(qids.size() * spec.holdout_fraction));
  std::set<std::string> holdout_qids(qids.begin(), qids.begin() + holdout_n);

  corpus::Corpus train_c = corpus, hold_c = corpus;
  train_c.queries.clear();
  hold_c.queries.clear();
  for (const corpus::Query& q : corpus.queries) {
    (holdout_qids.count(q.qid) ? hold_c : train_c).queries.push_back(q);
  }

  std::vector<LabeledPair> train_pairs = balanced_pairs(
      train_c, m.vocab(), mc.max_seq_len, pad_to, spec.negatives_per_query, spec.seed + 1);
  std::vector<LabeledPair> hold_pairs = balanced_pairs(
      hold_c, m.vocab(), mc.max_seq_len, pad_to, spec.negatives_per_query, spec.seed + 2);
  if (train_pairs.empty()) throw std::invalid_argument("train_toy: no training pairs");

  if (report) {
    report->train_pairs = static_cast<int>(train_pairs.size());
    report->holdout_pairs = static_cast<int>(hold_pairs.size());
  }

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    const double lr = spec.lr_linear_decay
                          ? spec.lr * (1.0 - double(epoch) / double(spec.epochs))
                          : spec.lr;
    std::vector<std::size_t> order(train_pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const LabeledPair& lp = train_pairs[order[step]];

      // Span dropout: blank the query (or the whole pair) with the token
      // embeddings replaced by [PAD] rows or zero vectors.
      TokenizedPair input = lp.pair;
      std::vector<bool> zeroed(input.length(), false);
      double roll = rng.uniform();
      bool drop_all = roll < spec.blank_dropout;
      bool drop_query = !drop_all && roll < spec.blank_dropout + spec.query_dropout;
      if (drop_all || drop_query) {
        bool to_zero = rng.uniform() < 0.5;
        for (std::size_t p = 0; p < input.length(); ++p) {
          if (input.is_special(p)) continue;
          if (!drop_all && !input.in_query_span(p)) continue;
          if (to_zero) zeroed[p] = true;
          else input.token_ids[p] = model::kPadId;
        }
      }

      Tensor emb = m.embed(input);
      const Tensor& tok_table = m.param("tok_emb");
      for (std::size_t p = 0; p < input.length(); ++p) {
        if (!zeroed[p]) continue;
        for (std::size_t j = 0; j < static_cast<std::size_t>(mc.d_model); ++j) {
          emb(p, j) -= tok_table(input.token_ids[p], j);
        }
      }

      model::TracedForward tf = m.traced_forward(emb);
      int loss_node = cross_entropy_node(tf.trace, tf.logits_node, lp.gold);
      double loss = tf.trace.value(loss_node).at(0);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_toy: non-finite loss at epoch " + std::to_string(epoch) +
                                 " step " + std::to_string(step) + " (query " + lp.query_id +
                                 ", passage " + lp.passage_id + ")");
      }
      loss_sum += loss;

      std::vector<Tensor> adj = tape::backward(tf.trace, {loss_node, 0});

      // One gradient slot per parameter tensor; a parameter recorded at
      // several trace nodes accumulates over all of them.
      std::map<std::string, Tensor> grads;
      auto add_grad = [&](const std::string& name, const Tensor& g) {
        auto [it, fresh] = grads.emplace(name, g);
        if (!fresh) {
          for (std::size_t i = 0; i < g.numel(); ++i) it->second.at(i) += g.at(i);
        }
      };
      for (const auto& [node_id, name] : tf.param_nodes) {
        add_grad(name, adj[node_id]);
      }

      // Embedding gradients from the input adjoint. Zeroed positions have
      // no token-embedding contribution, so no token row gets their grad.
      const Tensor& gin = adj[tf.input_node];
      Tensor g_tok(m.param("tok_emb").shape());
      Tensor g_pos(m.param("pos_emb").shape());
      Tensor g_seg(m.param("seg_emb").shape());
      for (std::size_t p = 0; p < input.length(); ++p) {
        std::size_t id = input.token_ids[p];
        std::size_t s = static_cast<std::size_t>(input.segment_ids[p]);
        for (std::size_t j = 0; j < static_cast<std::size_t>(mc.d_model); ++j) {
          if (!zeroed[p]) g_tok(id, j) += gin(p, j);
          g_pos(p, j) += gin(p, j);
          g_seg(s, j) += gin(p, j);
        }
      }
      add_grad("tok_emb", g_tok);
      add_grad("pos_emb", g_pos);
      add_grad("seg_emb", g_seg);

      // Global-norm clip and SGD step.
      double sq = 0.0;
      for (const auto& [name, g] : grads) {
        for (std::size_t i = 0; i < g.numel(); ++i) sq += g.at(i) * g.at(i);
      }
      double norm = std::sqrt(sq);
      double scale = (spec.clip_norm > 0.0 && norm > spec.clip_norm) ? spec.clip_norm / norm : 1.0;
      for (const auto& [name, g] : grads) {
        Tensor& p = m.param(name);
        for (std::size_t i = 0; i < g.numel(); ++i) p.at(i) -= lr * scale * g.at(i);
      }
    }
    if (report) report->epoch_mean_loss.push_back(loss_sum / double(train_pairs.size()));
  }

  if (report && !hold_pairs.empty()) {
    report->holdout_accuracy = pair_accuracy(m, hold_pairs);
  }
  return m;
}

}  // namespace conductor::train
