// SPDX-License-Identifier: Apache-2.0

#include "conductor/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace conductor::tape {

namespace {

// d/dx of 0.5*x*(1+erf(x/sqrt(2))) = Phi(x) + x*phi(x)
double gelu_derivative(double x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
  double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

}  // namespace

std::vector<Tensor> backward(const Trace& trace, const std::vector<Tensor>& values,
                             NodeRef target) {
  if (target.node < 0 || target.node >= trace.size()) {
    throw std::invalid_argument("backward: target node out of range");
  }
  if (values.size() != static_cast<std::size_t>(trace.size())) {
    throw std::invalid_argument("backward: values/trace size mismatch");
  }
  const Tensor& tv = values[target.node];
  if (target.elem >= tv.numel()) {
    throw std::invalid_argument("backward: target element out of range");
  }

  std::vector<Tensor> adj(trace.size());
  for (int id = 0; id < trace.size(); ++id) {
    adj[id] = Tensor(values[id].shape());  // zero-filled
  }
  adj[target.node].at(target.elem) = 1.0;

  for (int id = target.node; id >= 0; --id) {
    const Node& n = trace.node(id);
    const Tensor& g = adj[id];
    auto val = [&](std::size_t i) -> const Tensor& { return values[n.inputs[i]]; };
    auto gin = [&](std::size_t i) -> Tensor& { return adj[n.inputs[i]]; };
    switch (n.kind) {
      case OpKind::input:
      case OpKind::param:
        break;
      case OpKind::matmul: {
        const Tensor& a = val(0);
        const Tensor& b = val(1);
        Tensor& ga = gin(0);
        Tensor& gb = gin(1);
        std::size_t m = a.rows(), k = a.cols(), p = b.cols();
        // dA += g * B^T ; dB += A^T * g
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t l = 0; l < k; ++l) {
            double s = 0.0;
            for (std::size_t j = 0; j < p; ++j) s += g(i, j) * b(l, j);
            ga(i, l) += s;
          }
        }
        for (std::size_t l = 0; l < k; ++l) {
          for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += a(i, l) * g(i, j);
            gb(l, j) += s;
          }
        }
        break;
      }
      case OpKind::transpose: {
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
        break;
      }
      case OpKind::add: {
        Tensor& ga = gin(0);
        Tensor& gb = gin(1);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          ga.at(i) += g.at(i);
          gb.at(i) += g.at(i);
        }
        break;
      }
      case OpKind::add_rowvec: {
        Tensor& ga = gin(0);
        Tensor& gv = gin(1);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < g.cols(); ++j) {
            ga(i, j) += g(i, j);
            gv.at(j) += g(i, j);
          }
        }
        break;
      }
      case OpKind::mul: {
        const Tensor& a = val(0);
        const Tensor& b = val(1);
        Tensor& ga = gin(0);
        Tensor& gb = gin(1);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          ga.at(i) += g.at(i) * b.at(i);
          gb.at(i) += g.at(i) * a.at(i);
        }
        break;
      }
      case OpKind::mul_rowvec: {
        const Tensor& a = val(0);
        const Tensor& v = val(1);
        Tensor& ga = gin(0);
        Tensor& gv = gin(1);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < g.cols(); ++j) {
            ga(i, j) += g(i, j) * v.at(j);
            gv.at(j) += g(i, j) * a(i, j);
          }
        }
        break;
      }
      case OpKind::scale: {
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) * n.c;
        break;
      }
      case OpKind::layer_norm: {
        const Tensor& a = val(0);
        const Tensor& y = values[id];
        Tensor& ga = gin(0);
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
          double gmean = 0.0, gymean = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            gmean += g(i, j);
            gymean += g(i, j) * y(i, j);
          }
          gmean /= double(d);
          gymean /= double(d);
          for (std::size_t j = 0; j < d; ++j) {
            ga(i, j) += inv * (g(i, j) - gmean - y(i, j) * gymean);
          }
        }
        break;
      }
      case OpKind::softmax: {
        // Jacobian-vector form: dx_j = p_j * (g_j - sum_k g_k p_k), per row.
        const Tensor& p = values[id];
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < p.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < p.cols(); ++j) dot += g(i, j) * p(i, j);
          for (std::size_t j = 0; j < p.cols(); ++j) {
            ga(i, j) += p(i, j) * (g(i, j) - dot);
          }
        }
        break;
      }
      case OpKind::gelu: {
        const Tensor& a = val(0);
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          ga.at(i) += g.at(i) * gelu_derivative(a.at(i));
        }
        break;
      }
      case OpKind::log_ew: {
        const Tensor& a = val(0);
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) / a.at(i);
        break;
      }
      case OpKind::sum_all: {
        Tensor& ga = gin(0);
        double s = g.at(0);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga.at(i) += s;
        break;
      }
      case OpKind::slice_rows: {
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(i + n.a, j) += g(i, j);
        break;
      }
      case OpKind::slice_cols: {
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j + n.a) += g(i, j);
        break;
      }
      case OpKind::concat_cols: {
        std::size_t off = 0;
        for (std::size_t p = 0; p < n.inputs.size(); ++p) {
          Tensor& ga = adj[n.inputs[p]];
          for (std::size_t i = 0; i < ga.rows(); ++i)
            for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, off + j);
          off += ga.cols();
        }
        break;
      }
    }
  }
  return adj;
}

std::vector<Tensor> backward(const Trace& trace, NodeRef target) {
  std::vector<Tensor> values;
  values.reserve(trace.size());
  for (int id = 0; id < trace.size(); ++id) values.push_back(trace.value(id));
  return backward(trace, values, target);
}

std::map<NodeRef, double> grad(const Trace& trace, NodeRef target,
                               const std::vector<NodeRef>& wrt) {
  if (target.node < 0 || target.node >= trace.size()) {
    throw std::invalid_argument("grad: target node out of range");
  }
  if (target.elem >= trace.value(target.node).numel()) {
    throw std::invalid_argument("grad: target is not a scalar element of its node");
  }
  for (const NodeRef& r : wrt) {
    if (r.node < 0 || r.node >= trace.size()) {
      throw std::invalid_argument("grad: wrt node out of range");
    }
    if (r.node > target.node) {
      throw std::invalid_argument("grad: wrt node " + std::to_string(r.node) +
                                  " appears after target node " + std::to_string(target.node));
    }
    if (r.elem >= trace.value(r.node).numel()) {
      throw std::invalid_argument("grad: wrt element out of range");
    }
  }
  std::vector<Tensor> adj = backward(trace, target);
  std::map<NodeRef, double> out;
  for (const NodeRef& r : wrt) out[r] = adj[r.node].at(r.elem);
  return out;
}

double finite_diff(const ApplyFn& fn, const std::vector<Tensor>& inputs,
                   std::size_t target_elem, const WrtSpec& wrt, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff: step must be > 0");

  double fplus = 0.0, fminus = 0.0;
  if (wrt.kind == WrtSpec::Kind::input_element) {
    if (wrt.index < 0 || static_cast<std::size_t>(wrt.index) >= inputs.size()) {
      throw std::invalid_argument("finite_diff: input ordinal out of range");
    }
    auto eval_at = [&](double delta) {
      std::vector<Tensor> in = inputs;
      in[wrt.index].at(wrt.elem) += delta;
      return record_forward(fn, in).output.at(target_elem);
    };
    fplus = eval_at(step);
    fminus = eval_at(-step);
  } else {
    Recorded rec = record_forward(fn, inputs);
    if (target_elem >= rec.output.numel()) {
      throw std::invalid_argument("finite_diff: target element out of range");
    }
    Trace::Bump bump{wrt.index, wrt.elem, step};
    std::vector<Tensor> vplus = rec.trace.replay(inputs, &bump);
    bump.delta = -step;
    std::vector<Tensor> vminus = rec.trace.replay(inputs, &bump);
    fplus = vplus[rec.output_node].at(target_elem);
    fminus = vminus[rec.output_node].at(target_elem);
  }
  double d = (fplus - fminus) / (2.0 * step);
  if (!std::isfinite(d)) throw std::runtime_error("finite_diff: non-finite result");
  return d;
}

}  // namespace conductor::tape
