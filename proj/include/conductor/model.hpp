// SPDX-License-Identifier: Apache-2.0
//
// MonoBERT-style cross-encoder over the recorded-trace engine: token +
// position + segment embeddings, post-LN transformer layers, CLS-pooled
// two-class head. Neurons are the outputs of the six linear-transformation
// sites per layer; a pruning mask zeroes a site output column (post-bias)
// across all token positions.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "conductor/tensor.hpp"
#include "conductor/tokenizer.hpp"
#include "conductor/trace.hpp"

namespace conductor::model {

struct ModelConfig {
  int num_layers = 2;
  int d_model = 32;
  int num_heads = 4;
  int d_ff = 64;
  int vocab_size = 0;
  int max_seq_len = 32;
  /// Pairs shorter than this are padded with [PAD] at tokenization time
  /// (0 = no padding). Set by the trainer so inference matches training.
  int pad_to_len = 0;
  std::uint32_t seed = 1;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class Site {
  query_proj = 0,
  key_proj = 1,
  value_proj = 2,
  attention_output = 3,
  ffn_intermediate = 4,
  ffn_output = 5,
};

inline constexpr std::array<Site, 6> kAllSites = {
    Site::query_proj,        Site::key_proj,        Site::value_proj,
    Site::attention_output,  Site::ffn_intermediate, Site::ffn_output};

const char* site_name(Site s);
Site site_from_name(const std::string& name);

/// Output width of a site's linear transformation.
std::size_t site_width(const ModelConfig& cfg, Site s);

struct NeuronId {
  int layer = 0;
  Site site = Site::query_proj;
  int unit = 0;

  friend auto operator<=>(const NeuronId&, const NeuronId&) = default;
};

std::string neuron_to_string(const NeuronId& n);

/// Total neurons: num_layers * (5 * d_model + d_ff).
std::size_t neuron_count(const ModelConfig& cfg);

/// All neurons in deterministic (layer, site, unit) order.
std::vector<NeuronId> enumerate_neurons(const ModelConfig& cfg);

/// Flat index of a neuron in enumerate_neurons order.
std::size_t neuron_index(const ModelConfig& cfg, const NeuronId& n);

struct PruningMask {
  std::set<NeuronId> neurons;

  bool empty() const { return neurons.empty(); }
  void validate(const ModelConfig& cfg) const;
};

/// A recorded forward pass with the landmarks attribution needs.
struct TracedForward {
  tape::Trace trace;
  int input_node = -1;   // embeddings [seq x d_model]
  int logits_node = -1;  // [1 x 2], column 0 = relevant
  /// Residual-stream states: index 0 = embeddings, index l = output of layer l.
  std::vector<int> boundary_nodes;
  /// Post-bias linear outputs, indexed [layer][site].
  std::vector<std::array<int, 6>> site_nodes;
  /// Trace node id -> parameter name, for gradient readout.
  std::map<int, std::string> param_nodes;
};

class CrossEncoder {
 public:
  /// Fresh model with seeded random initialization.
  CrossEncoder(ModelConfig cfg, Vocabulary vocab);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }

  /// Token + position + segment embedding per position.
  tape::Tensor embed(const TokenizedPair& pair) const;

  /// Records the full forward pass from embeddings to logits.
  TracedForward traced_forward(const tape::Tensor& embeddings,
                               const PruningMask* mask = nullptr) const;

  /// Logits (relevant, non_relevant) as a rank-1 tensor of length 2.
  tape::Tensor forward(const tape::Tensor& embeddings, const PruningMask* mask = nullptr) const;

  struct Prediction {
    Label label;
    std::array<double, 2> probs;  // softmax over (relevant, non_relevant)
  };
  Prediction predict_label(const TokenizedPair& pair) const;

  /// Ranking score: the pre-softmax relevant logit (monotone in the
  /// softmax probability).
  double relevant_logit(const TokenizedPair& pair, const PruningMask* mask = nullptr) const;

  // -- parameters --
  const std::map<std::string, tape::Tensor>& params() const { return params_; }
  tape::Tensor& param(const std::string& name);
  const tape::Tensor& param(const std::string& name) const;

  // -- persistence --
  std::string checkpoint_json() const;
  void save(const std::string& path) const;
  static CrossEncoder load_json(const std::string& json_text);
  static CrossEncoder load(const std::string& path);

  /// SHA-256 of the checkpoint serialization; identifies the model in
  /// scheme and set files.
  std::string content_hash() const;

 private:
  CrossEncoder() = default;
  void init_params();

  ModelConfig cfg_;
  Vocabulary vocab_;
  std::map<std::string, tape::Tensor> params_;
};

/// Softmax over two logits.
std::array<double, 2> softmax2(double a, double b);

/// Tokenizes with the model's own max length and padding policy.
TokenizedPair encode_pair(const CrossEncoder& m, const std::string& query_text,
                          const std::string& passage_text);

}  // namespace conductor::model
