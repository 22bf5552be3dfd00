// SPDX-License-Identifier: Apache-2.0
//
// Recorded forward computation. A Trace is an append-only sequence of
// primitive applications in topological order; node ids are positions in
// that sequence. Replaying a trace on new inputs reuses the recorded
// structure, which is what the path integrator and the finite-difference
// oracle rely on.
#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "conductor/tensor.hpp"

namespace conductor::tape {

enum class OpKind {
  input,        // leaf, replaced on replay
  param,        // leaf, fixed across replays
  matmul,       // [m x k] * [k x n]
  transpose,    // [m x n] -> [n x m]
  add,          // elementwise, same shape
  add_rowvec,   // [n x d] + [d], broadcast over rows
  mul,          // elementwise, same shape
  mul_rowvec,   // [n x d] * [d], broadcast over rows
  scale,        // multiply by a fixed scalar
  layer_norm,   // row-wise (x - mean) / sqrt(var + eps), no affine
  softmax,      // row-wise
  gelu,         // elementwise, exact erf form
  log_ew,       // elementwise natural log
  sum_all,      // -> [1 x 1]
  slice_rows,   // rows [a, b)
  slice_cols,   // cols [a, b)
  concat_cols,  // horizontal concatenation
};

const char* op_name(OpKind k);

struct Node {
  OpKind kind;
  std::vector<int> inputs;
  Tensor value;
  double c = 0.0;     // scale factor / layer_norm epsilon
  std::size_t a = 0;  // slice begin
  std::size_t b = 0;  // slice end
};

/// Identifies one element of one node's output.
struct NodeRef {
  int node = -1;
  std::size_t elem = 0;

  bool operator==(const NodeRef& o) const { return node == o.node && elem == o.elem; }
  bool operator<(const NodeRef& o) const {
    return node != o.node ? node < o.node : elem < o.elem;
  }
};

class Trace {
 public:
  // -- construction (records eagerly; every op validates shapes and
  //    finiteness of its output) --
  int add_input(Tensor value);
  int add_param(Tensor value);
  int matmul(int a, int b);
  int transpose(int a);
  int add(int a, int b);
  int add_rowvec(int a, int v);
  int mul(int a, int b);
  int mul_rowvec(int a, int v);
  int scale(int a, double factor);
  int layer_norm(int a, double eps);
  int softmax(int a);
  int gelu(int a);
  int log_ew(int a);
  int sum_all(int a);
  int slice_rows(int a, std::size_t r0, std::size_t r1);
  int slice_cols(int a, std::size_t c0, std::size_t c1);
  int concat_cols(const std::vector<int>& parts);

  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_.at(id); }
  const Tensor& value(int id) const { return nodes_.at(id).value; }
  const std::vector<int>& input_ids() const { return input_ids_; }

  /// Optional additive bump applied to one node's output right after it is
  /// computed during replay. This is how the finite-difference oracle
  /// perturbs an intermediate activation.
  struct Bump {
    int node = -1;
    std::size_t elem = 0;
    double delta = 0.0;
  };

  /// Recomputes every node value for new inputs (positional, matching the
  /// order add_input was called in). The recorded values are not touched.
  std::vector<Tensor> replay(const std::vector<Tensor>& inputs,
                             const Bump* bump = nullptr) const;

 private:
  int push(Node n);
  static void eval(const Node& n, const std::vector<const Tensor*>& vals, Tensor& out);

  std::vector<Node> nodes_;
  std::vector<int> input_ids_;
};

/// A function assembled from trace primitives: takes the trace under
/// construction plus the ids of its input nodes, returns the output node id.
using ApplyFn = std::function<int(Trace&, const std::vector<int>&)>;

struct Recorded {
  Tensor output;
  Trace trace;
  int output_node = -1;
};

/// Records fn applied to the given inputs. Returns the output tensor, the
/// trace that reproduces it, and the output's node id.
Recorded record_forward(const ApplyFn& fn, const std::vector<Tensor>& inputs);

}  // namespace conductor::tape
