// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode accumulation over a recorded trace. One sweep yields the
// gradient of a scalar output element with respect to every node value,
// including intermediate activations — which is what conductance needs.
#pragma once

#include <map>
#include <vector>

#include "conductor/trace.hpp"

namespace conductor::tape {

/// Adjoints of every node for d(values[target.node][target.elem]) / d(node).
/// `values` must come from trace.replay (or be the recorded values).
/// Elements with no computational path to the target are exactly 0.
std::vector<Tensor> backward(const Trace& trace, const std::vector<Tensor>& values,
                             NodeRef target);

/// Convenience over the recorded values of `trace`.
std::vector<Tensor> backward(const Trace& trace, NodeRef target);

/// Gradient of the target element with respect to each requested element.
/// Errors if the target node output is used as a non-scalar (the element
/// index selects the scalar) or if a wrt node comes after the target.
std::map<NodeRef, double> grad(const Trace& trace, NodeRef target,
                               const std::vector<NodeRef>& wrt);

/// Where a central difference perturbs the computation.
struct WrtSpec {
  enum class Kind { input_element, node_element };
  Kind kind = Kind::input_element;
  int index = 0;         // input ordinal, or trace node id
  std::size_t elem = 0;  // flat element index
};

/// Central difference (F(a+step) - F(a-step)) / (2*step) of output element
/// `target_elem` with respect to the described input or activation element.
/// Used as the independent oracle for `grad`.
double finite_diff(const ApplyFn& fn, const std::vector<Tensor>& inputs,
                   std::size_t target_elem, const WrtSpec& wrt, double step);

}  // namespace conductor::tape
