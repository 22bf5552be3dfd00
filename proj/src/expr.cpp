// SPDX-License-Identifier: Apache-2.0

#include "conductor/expr.hpp"

#include <cctype>

namespace conductor::cli {

namespace {

class Parser {
 public:
  Parser(const model::ModelConfig& cfg, const SchemeResolver& resolve, const std::string& text)
      : cfg_(cfg), resolve_(resolve), text_(text) {}

  sets::NeuronSet parse_set_toplevel() {
    sets::NeuronSet s = parse_set();
    skip_ws();
    if (pos_ < text_.size()) throw ExprError("unexpected trailing input", pos_ + 1);
    return s;
  }

  nig::AttributionScheme parse_scheme_toplevel() {
    nig::AttributionScheme s = parse_scheme();
    skip_ws();
    if (pos_ < text_.size()) throw ExprError("unexpected trailing input", pos_ + 1);
    return s;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool peek_char(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  void expect_char(char c) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != c) {
      throw ExprError(std::string("expected '") + c + "'", pos_ + 1);
    }
    ++pos_;
  }

  std::string parse_ident() {
    skip_ws();
    std::size_t start = pos_;
    if (pos_ >= text_.size() ||
        !(std::isalpha(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      throw ExprError("expected identifier", pos_ + 1);
    }
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    return text_.substr(start, pos_ - start);
  }

  double parse_percent() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
            text_[pos_] == '-' || text_[pos_] == '+')) {
      ++pos_;
    }
    if (pos_ == start) throw ExprError("expected a percentage", pos_ + 1);
    double v;
    try {
      v = std::stod(text_.substr(start, pos_ - start));
    } catch (const std::exception&) {
      throw ExprError("malformed percentage", start + 1);
    }
    if (peek_char('%')) ++pos_;
    return v;
  }

  sets::NeuronSet parse_set() {
    skip_ws();
    std::size_t at = pos_;
    std::string head = parse_ident();
    if (head == "top") {
      expect_char('(');
      nig::AttributionScheme scheme = parse_scheme();
      expect_char(',');
      double pct = parse_percent();
      expect_char(')');
      try {
        return sets::top_percent(cfg_, scheme, pct);
      } catch (const std::invalid_argument& e) {
        throw ExprError(e.what(), at + 1);
      }
    }
    if (head == "inter") {
      expect_char('(');
      std::vector<sets::NeuronSet> operands;
      operands.push_back(parse_set());
      while (peek_char(',')) {
        expect_char(',');
        operands.push_back(parse_set());
      }
      expect_char(')');
      return sets::intersect(operands);
    }
    throw ExprError("expected top(...) or inter(...), got '" + head + "'", at + 1);
  }

  nig::AttributionScheme parse_scheme() {
    skip_ws();
    std::size_t at = pos_;
    std::string head = parse_ident();
    if (head == "fuse") {
      expect_char('(');
      std::vector<nig::AttributionScheme> operands;
      operands.push_back(parse_scheme());
      while (peek_char(',')) {
        expect_char(',');
        operands.push_back(parse_scheme());
      }
      expect_char(')');
      try {
        return sets::fuse(operands);
      } catch (const std::invalid_argument& e) {
        throw ExprError(e.what(), at + 1);
      }
    }
    try {
      return resolve_(head);
    } catch (const std::invalid_argument& e) {
      throw ExprError(e.what(), at + 1);
    }
  }

  const model::ModelConfig& cfg_;
  const SchemeResolver& resolve_;
  const std::string& text_;
  std::size_t pos_ = 0;
};

}  // namespace

sets::NeuronSet eval_set_expr(const model::ModelConfig& cfg, const SchemeResolver& resolve,
                              const std::string& text) {
  return Parser(cfg, resolve, text).parse_set_toplevel();
}

nig::AttributionScheme eval_scheme_expr(const model::ModelConfig& cfg,
                                        const SchemeResolver& resolve, const std::string& text) {
  return Parser(cfg, resolve, text).parse_scheme_toplevel();
}

}  // namespace conductor::cli
