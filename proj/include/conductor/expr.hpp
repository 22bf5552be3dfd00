// SPDX-License-Identifier: Apache-2.0
//
// Combine-stage expression language over scheme files:
//
//   set    := "top" "(" scheme "," percent ")" | "inter" "(" set {"," set} ")"
//   scheme := identifier | "fuse" "(" scheme {"," scheme} ")"
//   percent := number ["%"]
//
// Identifiers name attribution schemes (P_<dataset>, N_<dataset>, ...).
// Parse errors carry the 1-based character position.
#pragma once

#include <functional>
#include <string>

#include "conductor/schemes.hpp"

namespace conductor::cli {

/// Resolves a scheme identifier; throws std::invalid_argument for unknown
/// names (the error text names the identifier).
using SchemeResolver = std::function<nig::AttributionScheme(const std::string&)>;

struct ExprError : std::invalid_argument {
  std::size_t position;  // 1-based character offset
  ExprError(const std::string& msg, std::size_t pos)
      : std::invalid_argument(msg + " at position " + std::to_string(pos)), position(pos) {}
};

/// Evaluates a set expression (top-level must be top(...) or inter(...)).
sets::NeuronSet eval_set_expr(const model::ModelConfig& cfg, const SchemeResolver& resolve,
                              const std::string& text);

/// Evaluates a scheme expression (identifier or fuse(...)).
nig::AttributionScheme eval_scheme_expr(const model::ModelConfig& cfg,
                                        const SchemeResolver& resolve, const std::string& text);

}  // namespace conductor::cli
