// SPDX-License-Identifier: Apache-2.0

#include "conductor/trace.hpp"

#include <cmath>
#include <stdexcept>

namespace conductor::tape {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::input: return "input";
    case OpKind::param: return "param";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::add: return "add";
    case OpKind::add_rowvec: return "add_rowvec";
    case OpKind::mul: return "mul";
    case OpKind::mul_rowvec: return "mul_rowvec";
    case OpKind::scale: return "scale";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::softmax: return "softmax";
    case OpKind::gelu: return "gelu";
    case OpKind::log_ew: return "log";
    case OpKind::sum_all: return "sum";
    case OpKind::slice_rows: return "slice_rows";
    case OpKind::slice_cols: return "slice_cols";
    case OpKind::concat_cols: return "concat_cols";
  }
  return "?";
}

namespace {

[[noreturn]] void op_error(OpKind k, const std::string& msg) {
  throw std::invalid_argument(std::string(op_name(k)) + ": " + msg);
}

void require_rank2(OpKind k, const Tensor& t, const char* which) {
  if (t.rank() != 2) op_error(k, std::string(which) + " must be rank-2, got " + t.shape_string());
}

double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

}  // namespace

void Trace::eval(const Node& n, const std::vector<const Tensor*>& vals, Tensor& out) {
  auto in = [&](std::size_t i) -> const Tensor& { return *vals[n.inputs[i]]; };
  switch (n.kind) {
    case OpKind::input:
    case OpKind::param:
      // Leaves keep their assigned value; replay overwrites inputs directly.
      return;
    case OpKind::matmul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      require_rank2(n.kind, a, "lhs");
      require_rank2(n.kind, b, "rhs");
      if (a.cols() != b.rows()) {
        op_error(n.kind, "inner dimensions differ: " + a.shape_string() + " * " + b.shape_string());
      }
      std::size_t m = a.rows(), k = a.cols(), p = b.cols();
      out = Tensor::matrix(m, p);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
          double av = a(i, l);
          for (std::size_t j = 0; j < p; ++j) out(i, j) += av * b(l, j);
        }
      }
      return;
    }
    case OpKind::transpose: {
      const Tensor& a = in(0);
      require_rank2(n.kind, a, "operand");
      out = Tensor::matrix(a.cols(), a.rows());
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
      return;
    }
    case OpKind::add:
    case OpKind::mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (!a.same_shape(b)) {
        op_error(n.kind, "shape mismatch: " + a.shape_string() + " vs " + b.shape_string());
      }
      out = a;
      if (n.kind == OpKind::add) {
        for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) += b.at(i);
      } else {
        for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) *= b.at(i);
      }
      return;
    }
    case OpKind::add_rowvec:
    case OpKind::mul_rowvec: {
      const Tensor& a = in(0);
      const Tensor& v = in(1);
      require_rank2(n.kind, a, "lhs");
      if (v.rank() != 1 || v.numel() != a.cols()) {
        op_error(n.kind, "rhs must be rank-1 of length " + std::to_string(a.cols()));
      }
      out = a;
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
          if (n.kind == OpKind::add_rowvec) out(i, j) += v.at(j);
          else out(i, j) *= v.at(j);
        }
      }
      return;
    }
    case OpKind::scale: {
      out = in(0);
      for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) *= n.c;
      return;
    }
    case OpKind::layer_norm: {
      const Tensor& a = in(0);
      require_rank2(n.kind, a, "operand");
      out = a;
      std::size_t d = a.cols();
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += a(i, j);
        mean /= double(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          double c = a(i, j) - mean;
          var += c * c;
        }
        var /= double(d);
        double inv = 1.0 / std::sqrt(var + n.c);
        for (std::size_t j = 0; j < d; ++j) out(i, j) = (a(i, j) - mean) * inv;
      }
      return;
    }
    case OpKind::softmax: {
      const Tensor& a = in(0);
      require_rank2(n.kind, a, "operand");
      out = a;
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double mx = a(i, 0);
        for (std::size_t j = 1; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
          out(i, j) = std::exp(a(i, j) - mx);
          z += out(i, j);
        }
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) /= z;
      }
      return;
    }
    case OpKind::gelu: {
      out = in(0);
      for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = gelu_scalar(out.at(i));
      return;
    }
    case OpKind::log_ew: {
      out = in(0);
      for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = std::log(out.at(i));
      return;
    }
    case OpKind::sum_all: {
      double s = 0.0;
      const Tensor& a = in(0);
      for (std::size_t i = 0; i < a.numel(); ++i) s += a.at(i);
      out = Tensor({1, 1}, {s});
      return;
    }
    case OpKind::slice_rows: {
      const Tensor& a = in(0);
      require_rank2(n.kind, a, "operand");
      if (n.a >= n.b || n.b > a.rows()) op_error(n.kind, "row range out of bounds");
      out = Tensor::matrix(n.b - n.a, a.cols());
      for (std::size_t i = n.a; i < n.b; ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i - n.a, j) = a(i, j);
      return;
    }
    case OpKind::slice_cols: {
      const Tensor& a = in(0);
      require_rank2(n.kind, a, "operand");
      if (n.a >= n.b || n.b > a.cols()) op_error(n.kind, "column range out of bounds");
      out = Tensor::matrix(a.rows(), n.b - n.a);
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = n.a; j < n.b; ++j) out(i, j - n.a) = a(i, j);
      return;
    }
    case OpKind::concat_cols: {
      if (n.inputs.empty()) op_error(n.kind, "needs at least one operand");
      std::size_t rows = in(0).rows(), total = 0;
      for (std::size_t p = 0; p < n.inputs.size(); ++p) {
        require_rank2(n.kind, in(p), "operand");
        if (in(p).rows() != rows) op_error(n.kind, "row counts differ");
        total += in(p).cols();
      }
      out = Tensor::matrix(rows, total);
      std::size_t off = 0;
      for (std::size_t p = 0; p < n.inputs.size(); ++p) {
        const Tensor& t = in(p);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < t.cols(); ++j) out(i, off + j) = t(i, j);
        off += t.cols();
      }
      return;
    }
  }
  op_error(n.kind, "unsupported primitive");
}

int Trace::push(Node n) {
  for (int id : n.inputs) {
    if (id < 0 || id >= size()) {
      op_error(n.kind, "input node id out of range: " + std::to_string(id));
    }
  }
  if (n.kind != OpKind::input && n.kind != OpKind::param) {
    Tensor out;
    std::vector<const Tensor*> view;
    view.reserve(nodes_.size());
    for (const Node& m : nodes_) view.push_back(&m.value);
    eval(n, view, out);
    n.value = std::move(out);
  }
  if (!n.value.all_finite()) {
    op_error(n.kind, "non-finite output");
  }
  nodes_.push_back(std::move(n));
  return size() - 1;
}

int Trace::add_input(Tensor value) {
  if (!value.all_finite()) op_error(OpKind::input, "non-finite value");
  Node n{OpKind::input, {}, std::move(value)};
  nodes_.push_back(std::move(n));
  input_ids_.push_back(size() - 1);
  return size() - 1;
}

int Trace::add_param(Tensor value) {
  if (!value.all_finite()) op_error(OpKind::param, "non-finite value");
  Node n{OpKind::param, {}, std::move(value)};
  nodes_.push_back(std::move(n));
  return size() - 1;
}

int Trace::matmul(int a, int b) { return push(Node{OpKind::matmul, {a, b}, {}}); }
int Trace::transpose(int a) { return push(Node{OpKind::transpose, {a}, {}}); }
int Trace::add(int a, int b) { return push(Node{OpKind::add, {a, b}, {}}); }
int Trace::add_rowvec(int a, int v) { return push(Node{OpKind::add_rowvec, {a, v}, {}}); }
int Trace::mul(int a, int b) { return push(Node{OpKind::mul, {a, b}, {}}); }
int Trace::mul_rowvec(int a, int v) { return push(Node{OpKind::mul_rowvec, {a, v}, {}}); }

int Trace::scale(int a, double factor) {
  Node n{OpKind::scale, {a}, {}};
  n.c = factor;
  return push(std::move(n));
}

int Trace::layer_norm(int a, double eps) {
  if (!(eps > 0.0)) op_error(OpKind::layer_norm, "epsilon must be positive");
  Node n{OpKind::layer_norm, {a}, {}};
  n.c = eps;
  return push(std::move(n));
}

int Trace::softmax(int a) { return push(Node{OpKind::softmax, {a}, {}}); }
int Trace::gelu(int a) { return push(Node{OpKind::gelu, {a}, {}}); }
int Trace::log_ew(int a) { return push(Node{OpKind::log_ew, {a}, {}}); }
int Trace::sum_all(int a) { return push(Node{OpKind::sum_all, {a}, {}}); }

int Trace::slice_rows(int a, std::size_t r0, std::size_t r1) {
  Node n{OpKind::slice_rows, {a}, {}};
  n.a = r0;
  n.b = r1;
  return push(std::move(n));
}

int Trace::slice_cols(int a, std::size_t c0, std::size_t c1) {
  Node n{OpKind::slice_cols, {a}, {}};
  n.a = c0;
  n.b = c1;
  return push(std::move(n));
}

int Trace::concat_cols(const std::vector<int>& parts) {
  return push(Node{OpKind::concat_cols, parts, {}});
}

std::vector<Tensor> Trace::replay(const std::vector<Tensor>& inputs, const Bump* bump) const {
  if (inputs.size() != input_ids_.size()) {
    throw std::invalid_argument("replay: expected " + std::to_string(input_ids_.size()) +
                                " inputs, got " + std::to_string(inputs.size()));
  }
  std::vector<Tensor> vals(nodes_.size());
  std::vector<const Tensor*> view(nodes_.size(), nullptr);
  std::size_t next_input = 0;
  for (int id = 0; id < size(); ++id) {
    const Node& n = nodes_[id];
    if (n.kind == OpKind::input) {
      const Tensor& repl = inputs[next_input++];
      if (!repl.same_shape(n.value)) {
        throw std::invalid_argument("replay: input shape " + repl.shape_string() +
                                    " does not match recorded " + n.value.shape_string());
      }
      vals[id] = repl;
    } else if (n.kind == OpKind::param) {
      vals[id] = n.value;
    } else {
      eval(n, view, vals[id]);
    }
    if (bump && bump->node == id) {
      vals[id].at(bump->elem) += bump->delta;
    }
    view[id] = &vals[id];
  }
  return vals;
}

Recorded record_forward(const ApplyFn& fn, const std::vector<Tensor>& inputs) {
  Trace trace;
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (const Tensor& t : inputs) ids.push_back(trace.add_input(t));
  int out = fn(trace, ids);
  if (out < 0 || out >= trace.size()) {
    throw std::invalid_argument("record_forward: function returned invalid node id");
  }
  return {trace.value(out), std::move(trace), out};
}

}  // namespace conductor::tape
