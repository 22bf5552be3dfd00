// SPDX-License-Identifier: Apache-2.0

#include "conductor/model.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "conductor/util.hpp"

namespace conductor::model {

using tape::Tensor;
using tape::Trace;

namespace {
constexpr double kLayerNormEps = 1e-12;
constexpr double kInitStd = 0.1;
constexpr double kEmbedInitStd = 0.5;
}  // namespace

void ModelConfig::validate() const {
  if (num_layers < 1 || d_model < 1 || num_heads < 1 || d_ff < 1 || vocab_size < 1 ||
      max_seq_len < 1) {
    throw std::invalid_argument("ModelConfig: all dimensions must be >= 1");
  }
  if (d_model % num_heads != 0) {
    throw std::invalid_argument("ModelConfig: d_model must be divisible by num_heads");
  }
  if (vocab_size < static_cast<int>(kNumSpecialTokens)) {
    throw std::invalid_argument("ModelConfig: vocab_size must cover the special tokens");
  }
}

const char* site_name(Site s) {
  switch (s) {
    case Site::query_proj: return "query_proj";
    case Site::key_proj: return "key_proj";
    case Site::value_proj: return "value_proj";
    case Site::attention_output: return "attention_output";
    case Site::ffn_intermediate: return "ffn_intermediate";
    case Site::ffn_output: return "ffn_output";
  }
  return "?";
}

Site site_from_name(const std::string& name) {
  for (Site s : kAllSites) {
    if (name == site_name(s)) return s;
  }
  throw std::invalid_argument("unknown site name: " + name);
}

std::size_t site_width(const ModelConfig& cfg, Site s) {
  return s == Site::ffn_intermediate ? static_cast<std::size_t>(cfg.d_ff)
                                     : static_cast<std::size_t>(cfg.d_model);
}

std::string neuron_to_string(const NeuronId& n) {
  return "L" + std::to_string(n.layer) + "." + site_name(n.site) + "." + std::to_string(n.unit);
}

std::size_t neuron_count(const ModelConfig& cfg) {
  return static_cast<std::size_t>(cfg.num_layers) *
         (5 * static_cast<std::size_t>(cfg.d_model) + static_cast<std::size_t>(cfg.d_ff));
}

std::vector<NeuronId> enumerate_neurons(const ModelConfig& cfg) {
  std::vector<NeuronId> out;
  out.reserve(neuron_count(cfg));
  for (int layer = 0; layer < cfg.num_layers; ++layer) {
    for (Site site : kAllSites) {
      const std::size_t width = site_width(cfg, site);
      for (std::size_t unit = 0; unit < width; ++unit) {
        out.push_back(NeuronId{layer, site, static_cast<int>(unit)});
      }
    }
  }
  return out;
}

std::size_t neuron_index(const ModelConfig& cfg, const NeuronId& n) {
  if (n.layer < 0 || n.layer >= cfg.num_layers || n.unit < 0 ||
      static_cast<std::size_t>(n.unit) >= site_width(cfg, n.site)) {
    throw std::invalid_argument("neuron_index: invalid neuron " + neuron_to_string(n));
  }
  const std::size_t per_layer = 5 * cfg.d_model + cfg.d_ff;
  std::size_t idx = static_cast<std::size_t>(n.layer) * per_layer;
  for (Site s : kAllSites) {
    if (s == n.site) break;
    idx += site_width(cfg, s);
  }
  return idx + n.unit;
}

void PruningMask::validate(const ModelConfig& cfg) const {
  for (const NeuronId& n : neurons) {
    if (n.layer < 0 || n.layer >= cfg.num_layers) {
      throw std::invalid_argument("PruningMask: layer out of range for " + neuron_to_string(n));
    }
    if (n.unit < 0 || static_cast<std::size_t>(n.unit) >= site_width(cfg, n.site)) {
      throw std::invalid_argument("PruningMask: unit out of range for " + neuron_to_string(n));
    }
  }
}

std::array<double, 2> softmax2(double a, double b) {
  double m = std::max(a, b);
  double ea = std::exp(a - m), eb = std::exp(b - m);
  double z = ea + eb;
  return {ea / z, eb / z};
}

CrossEncoder::CrossEncoder(ModelConfig cfg, Vocabulary vocab)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  cfg_.validate();
  if (static_cast<int>(vocab_.size()) != cfg_.vocab_size) {
    throw std::invalid_argument("CrossEncoder: vocab size " + std::to_string(vocab_.size()) +
                                " does not match config vocab_size " +
                                std::to_string(cfg_.vocab_size));
  }
  init_params();
}

void CrossEncoder::init_params() {
  util::Rng rng(cfg_.seed);
  const std::size_t d = cfg_.d_model, ff = cfg_.d_ff;

  auto gaussian = [&](std::vector<std::size_t> shape, double std) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal() * std;
    return t;
  };
  auto zeros = [](std::vector<std::size_t> shape) { return Tensor(std::move(shape)); };
  auto ones = [](std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = 1.0;
    return t;
  };

  params_.clear();
  params_.emplace("tok_emb", gaussian({static_cast<std::size_t>(cfg_.vocab_size), d}, kEmbedInitStd));
  params_.emplace("pos_emb", gaussian({static_cast<std::size_t>(cfg_.max_seq_len), d}, kEmbedInitStd));
  params_.emplace("seg_emb", gaussian({2, d}, kEmbedInitStd));
  for (int l = 0; l < cfg_.num_layers; ++l) {
    std::string p = "L" + std::to_string(l) + ".";
    params_.emplace(p + "Wq", gaussian({d, d}, kInitStd));
    params_.emplace(p + "bq", zeros({d}));
    params_.emplace(p + "Wk", gaussian({d, d}, kInitStd));
    params_.emplace(p + "bk", zeros({d}));
    params_.emplace(p + "Wv", gaussian({d, d}, kInitStd));
    params_.emplace(p + "bv", zeros({d}));
    params_.emplace(p + "Wo", gaussian({d, d}, kInitStd));
    params_.emplace(p + "bo", zeros({d}));
    params_.emplace(p + "ln1_g", ones({d}));
    params_.emplace(p + "ln1_b", zeros({d}));
    params_.emplace(p + "W1", gaussian({d, ff}, kInitStd));
    params_.emplace(p + "b1", zeros({ff}));
    params_.emplace(p + "W2", gaussian({ff, d}, kInitStd));
    params_.emplace(p + "b2", zeros({d}));
    params_.emplace(p + "ln2_g", ones({d}));
    params_.emplace(p + "ln2_b", zeros({d}));
  }
  params_.emplace("cls_W", gaussian({d, 2}, kInitStd));
  params_.emplace("cls_b", zeros({2}));
}

Tensor& CrossEncoder::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

const Tensor& CrossEncoder::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

Tensor CrossEncoder::embed(const TokenizedPair& pair) const {
  const std::size_t seq = pair.length();
  if (seq > static_cast<std::size_t>(cfg_.max_seq_len)) {
    throw std::invalid_argument("embed: sequence longer than max_seq_len");
  }
  const Tensor& tok = param("tok_emb");
  const Tensor& pos = param("pos_emb");
  const Tensor& seg = param("seg_emb");
  Tensor out = Tensor::matrix(seq, cfg_.d_model);
  for (std::size_t p = 0; p < seq; ++p) {
    std::size_t id = pair.token_ids[p];
    if (id >= static_cast<std::size_t>(cfg_.vocab_size)) {
      throw std::invalid_argument("embed: token id " + std::to_string(id) +
                                  " out of range for vocab_size " +
                                  std::to_string(cfg_.vocab_size));
    }
    int s = pair.segment_ids[p];
    for (std::size_t j = 0; j < static_cast<std::size_t>(cfg_.d_model); ++j) {
      out(p, j) = tok(id, j) + pos(p, j) + seg(static_cast<std::size_t>(s), j);
    }
  }
  return out;
}

TracedForward CrossEncoder::traced_forward(const Tensor& embeddings,
                                           const PruningMask* mask) const {
  if (embeddings.rank() != 2 || embeddings.cols() != static_cast<std::size_t>(cfg_.d_model)) {
    throw std::invalid_argument("traced_forward: embeddings must be [seq x d_model]");
  }
  if (mask) mask->validate(cfg_);

  TracedForward tf;
  Trace& tr = tf.trace;
  tf.input_node = tr.add_input(embeddings);

  const std::size_t d = cfg_.d_model;
  const std::size_t dh = d / cfg_.num_heads;

  // 0/1 column mask for a site, or -1 when nothing is masked there. The
  // unmasked path records no extra nodes, so an empty mask is bitwise
  // identical to no mask.
  auto site_mask_node = [&](int layer, Site site) -> int {
    if (!mask) return -1;
    Tensor m({site_width(cfg_, site)});
    bool any = false;
    for (std::size_t u = 0; u < m.numel(); ++u) m.at(u) = 1.0;
    for (const NeuronId& n : mask->neurons) {
      if (n.layer == layer && n.site == site) {
        m.at(static_cast<std::size_t>(n.unit)) = 0.0;
        any = true;
      }
    }
    return any ? tr.add_param(m) : -1;
  };

  auto add_param = [&](const std::string& name) {
    int id = tr.add_param(param(name));
    tf.param_nodes.emplace(id, name);
    return id;
  };
  auto linear = [&](int x, const std::string& w, const std::string& b) {
    int y = tr.matmul(x, add_param(w));
    return tr.add_rowvec(y, add_param(b));
  };
  auto apply_mask = [&](int x, int layer, Site site) {
    int mnode = site_mask_node(layer, site);
    return mnode >= 0 ? tr.mul_rowvec(x, mnode) : x;
  };
  auto ln_affine = [&](int x, const std::string& g, const std::string& b) {
    int y = tr.layer_norm(x, kLayerNormEps);
    y = tr.mul_rowvec(y, add_param(g));
    return tr.add_rowvec(y, add_param(b));
  };

  int x = tf.input_node;
  tf.boundary_nodes.push_back(x);
  tf.site_nodes.resize(cfg_.num_layers);

  for (int l = 0; l < cfg_.num_layers; ++l) {
    std::string p = "L" + std::to_string(l) + ".";
    auto& sites = tf.site_nodes[l];

    int q = linear(x, p + "Wq", p + "bq");
    sites[static_cast<int>(Site::query_proj)] = q;
    q = apply_mask(q, l, Site::query_proj);

    int k = linear(x, p + "Wk", p + "bk");
    sites[static_cast<int>(Site::key_proj)] = k;
    k = apply_mask(k, l, Site::key_proj);

    int v = linear(x, p + "Wv", p + "bv");
    sites[static_cast<int>(Site::value_proj)] = v;
    v = apply_mask(v, l, Site::value_proj);

    std::vector<int> head_ctx;
    for (int h = 0; h < cfg_.num_heads; ++h) {
      std::size_t c0 = h * dh, c1 = (h + 1) * dh;
      int qh = tr.slice_cols(q, c0, c1);
      int kh = tr.slice_cols(k, c0, c1);
      int vh = tr.slice_cols(v, c0, c1);
      int scores = tr.scale(tr.matmul(qh, tr.transpose(kh)), 1.0 / std::sqrt(double(dh)));
      int attn = tr.softmax(scores);
      head_ctx.push_back(tr.matmul(attn, vh));
    }
    int ctx = cfg_.num_heads == 1 ? head_ctx[0] : tr.concat_cols(head_ctx);

    int ao = linear(ctx, p + "Wo", p + "bo");
    sites[static_cast<int>(Site::attention_output)] = ao;
    ao = apply_mask(ao, l, Site::attention_output);

    int h1 = ln_affine(tr.add(x, ao), p + "ln1_g", p + "ln1_b");

    int fi = linear(h1, p + "W1", p + "b1");
    sites[static_cast<int>(Site::ffn_intermediate)] = fi;
    fi = apply_mask(fi, l, Site::ffn_intermediate);

    int fo = linear(tr.gelu(fi), p + "W2", p + "b2");
    sites[static_cast<int>(Site::ffn_output)] = fo;
    fo = apply_mask(fo, l, Site::ffn_output);

    x = ln_affine(tr.add(h1, fo), p + "ln2_g", p + "ln2_b");
    tf.boundary_nodes.push_back(x);
  }

  int cls = tr.slice_rows(x, 0, 1);
  tf.logits_node = linear(cls, "cls_W", "cls_b");
  return tf;
}

Tensor CrossEncoder::forward(const Tensor& embeddings, const PruningMask* mask) const {
  TracedForward tf = traced_forward(embeddings, mask);
  const Tensor& logits = tf.trace.value(tf.logits_node);
  return Tensor({2}, {logits.at(0), logits.at(1)});
}

CrossEncoder::Prediction CrossEncoder::predict_label(const TokenizedPair& pair) const {
  Tensor logits = forward(embed(pair));
  auto probs = softmax2(logits.at(0), logits.at(1));
  Label label = probs[0] >= probs[1] ? Label::relevant : Label::non_relevant;
  return {label, probs};
}

double CrossEncoder::relevant_logit(const TokenizedPair& pair, const PruningMask* mask) const {
  return forward(embed(pair), mask).at(0);
}

std::string CrossEncoder::checkpoint_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["config"] = {{"num_layers", cfg_.num_layers}, {"d_model", cfg_.d_model},
                 {"num_heads", cfg_.num_heads},   {"d_ff", cfg_.d_ff},
                 {"vocab_size", cfg_.vocab_size}, {"max_seq_len", cfg_.max_seq_len},
                 {"pad_to_len", cfg_.pad_to_len}, {"seed", cfg_.seed}};
  j["vocab"] = vocab_.tokens();
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, tensor] : params_) {
    params[name] = {{"shape", tensor.shape()}, {"data", tensor.values()}};
  }
  j["params"] = std::move(params);
  return j.dump();
}

void CrossEncoder::save(const std::string& path) const {
  util::write_file(path, checkpoint_json());
}

CrossEncoder CrossEncoder::load_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1) {
    throw std::invalid_argument("checkpoint: unsupported or missing format_version");
  }
  CrossEncoder m;
  const auto& c = j.at("config");
  m.cfg_.num_layers = c.at("num_layers").get<int>();
  m.cfg_.d_model = c.at("d_model").get<int>();
  m.cfg_.num_heads = c.at("num_heads").get<int>();
  m.cfg_.d_ff = c.at("d_ff").get<int>();
  m.cfg_.vocab_size = c.at("vocab_size").get<int>();
  m.cfg_.max_seq_len = c.at("max_seq_len").get<int>();
  m.cfg_.pad_to_len = c.value("pad_to_len", 0);
  m.cfg_.seed = c.at("seed").get<std::uint32_t>();
  m.cfg_.validate();
  m.vocab_ = Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>());
  for (const auto& [name, entry] : j.at("params").items()) {
    auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    auto data = entry.at("data").get<std::vector<double>>();
    m.params_.emplace(name, Tensor(std::move(shape), std::move(data)));
  }
  return m;
}

CrossEncoder CrossEncoder::load(const std::string& path) {
  return load_json(util::read_file(path));
}

std::string CrossEncoder::content_hash() const {
  return util::sha256_hex(checkpoint_json());
}

TokenizedPair encode_pair(const CrossEncoder& m, const std::string& query_text,
                          const std::string& passage_text) {
  return tokenize_pair(m.vocab(), query_text, passage_text, m.config().max_seq_len,
                       m.config().pad_to_len);
}

}  // namespace conductor::model
