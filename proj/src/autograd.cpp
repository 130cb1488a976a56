// SPDX-License-Identifier: Apache-2.0
#include "vittle/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

namespace vittle {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using StridedConst = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using StridedMut = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

thread_local bool g_grad_enabled = true;

Var make_result(Tensor value, std::vector<Var> inputs, const char* op,
                std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  if (g_grad_enabled) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& in : inputs) node->parents.push_back(in.node());
      node->backward_fn = std::move(fn);
    }
  }
  return Var(std::move(node));
}

// Accumulate into parent i's gradient only if it participates.
Node* grad_target(Node& self, std::size_t i) {
  Node* p = self.parents[i].get();
  return p->requires_grad ? p : nullptr;
}

void require_same(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

void require_rank2(const char* op, const Var& a) {
  if (a.value().rank() != 2) throw ShapeError(op, "expected rank 2, got " + shape_str(a.shape()));
}

void require_row(const char* op, const Var& a, const Var& row) {
  require_rank2(op, a);
  if (row.value().size() != a.shape()[1]) throw ShapeError(op, a.shape(), row.shape());
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError(op, "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <class F>
Var unary(const Var& a, const char* op, F&& f, std::function<void(Node&)> bw) {
  Tensor out(a.shape());
  auto src = a.value().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = f(src[i]);
  return make_result(std::move(out), {a}, op, std::move(bw));
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->op = "parameter";
  node->grad_buffer();
  return Var(std::move(node));
}

const Tensor& Var::grad() const { return node_->grad_buffer(); }

void Var::zero_grad() { node_->grad_buffer().fill(0.0); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

void backward(const Var& root) {
  if (!root.valid()) throw std::invalid_argument("backward: empty root");
  if (root.value().size() != 1) {
    throw ShapeError("backward", "root must be a scalar, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (!n->parents.empty()) n->grad_buffer().fill(0.0);
  }
  Tensor& seed = root.node()->grad_buffer();
  if (root.is_leaf()) {
    seed[0] += 1.0;
    return;
  }
  seed[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

Var add(const Var& a, const Var& b) {
  require_same("add", a, b);
  Tensor out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  return make_result(std::move(out), {a, b}, "add", [](Node& self) {
    auto g = self.grad.data();
    for (std::size_t k = 0; k < 2; ++k) {
      if (Node* p = grad_target(self, k)) {
        auto pg = p->grad_buffer().data();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same("sub", a, b);
  Tensor out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  return make_result(std::move(out), {a, b}, "sub", [](Node& self) {
    auto g = self.grad.data();
    if (Node* p = grad_target(self, 0)) {
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
    if (Node* p = grad_target(self, 1)) {
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same("mul", a, b);
  Tensor out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  return make_result(std::move(out), {a, b}, "mul", [](Node& self) {
    auto g = self.grad.data();
    auto x = self.parents[0]->value.data();
    auto y = self.parents[1]->value.data();
    if (Node* p = grad_target(self, 0)) {
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * y[i];
    }
    if (Node* p = grad_target(self, 1)) {
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * x[i];
    }
  });
}

Var add_row(const Var& a, const Var& row) {
  require_row("add_row", a, row);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out(a.shape());
  auto x = a.value().data(), r = row.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = x[i * n + j] + r[j];
  return make_result(std::move(out), {a, row}, "add_row", [m, n](Node& self) {
    auto g = self.grad.data();
    if (Node* p = grad_target(self, 0)) {
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
    if (Node* p = grad_target(self, 1)) {
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) pg[j] += g[i * n + j];
    }
  });
}

Var sub_row(const Var& a, const Var& row) {
  require_row("sub_row", a, row);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out(a.shape());
  auto x = a.value().data(), r = row.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = x[i * n + j] - r[j];
  return make_result(std::move(out), {a, row}, "sub_row", [m, n](Node& self) {
    auto g = self.grad.data();
    if (Node* p = grad_target(self, 0)) {
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
    if (Node* p = grad_target(self, 1)) {
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) pg[j] -= g[i * n + j];
    }
  });
}

Var mul_row(const Var& a, const Var& row) {
  require_row("mul_row", a, row);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out(a.shape());
  auto x = a.value().data(), r = row.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = x[i * n + j] * r[j];
  return make_result(std::move(out), {a, row}, "mul_row", [m, n](Node& self) {
    auto g = self.grad.data();
    auto x = self.parents[0]->value.data();
    auto r = self.parents[1]->value.data();
    if (Node* p = grad_target(self, 0)) {
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) pg[i * n + j] += g[i * n + j] * r[j];
    }
    if (Node* p = grad_target(self, 1)) {
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) pg[j] += g[i * n + j] * x[i * n + j];
    }
  });
}

Var affine(const Var& a, double s, double c) {
  return unary(a, "affine", [s, c](double x) { return s * x + c; }, [s](Node& self) {
    if (Node* p = grad_target(self, 0)) {
      auto g = self.grad.data();
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += s * g[i];
    }
  });
}

Var neg(const Var& a) { return affine(a, -1.0, 0.0); }

Var exp(const Var& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](Node& self) {
    if (Node* p = grad_target(self, 0)) {
      auto g = self.grad.data();
      auto y = self.value.data();
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * y[i];
    }
  });
}

Var square(const Var& a) {
  return unary(a, "square", [](double x) { return x * x; }, [](Node& self) {
    if (Node* p = grad_target(self, 0)) {
      auto g = self.grad.data();
      auto x = self.parents[0]->value.data();
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += 2.0 * x[i] * g[i];
    }
  });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); }, [lo, hi](Node& self) {
    if (Node* p = grad_target(self, 0)) {
      auto g = self.grad.data();
      auto x = self.parents[0]->value.data();
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > lo && x[i] < hi) pg[i] += g[i];
    }
  });
}

Var gelu(const Var& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  return unary(
      a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](Node& self) {
        if (Node* p = grad_target(self, 0)) {
          const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
          auto g = self.grad.data();
          auto x = self.parents[0]->value.data();
          auto pg = p->grad_buffer().data();
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double cdf = 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
            pg[i] += g[i] * (cdf + x[i] * pdf);
          }
        }
      });
}

Var matmul(const Var& a, const Var& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) throw ShapeError("matmul", a.shape(), b.shape());
  Tensor out(Shape{m, n});
  MutMap(out.data().data(), m, n).noalias() =
      ConstMap(a.value().data().data(), m, k) * ConstMap(b.value().data().data(), k, n);
  return make_result(std::move(out), {a, b}, "matmul", [m, k, n](Node& self) {
    ConstMap g(self.grad.data().data(), m, n);
    if (Node* p = grad_target(self, 0)) {
      MutMap(p->grad_buffer().data().data(), m, k).noalias() +=
          g * ConstMap(self.parents[1]->value.data().data(), k, n).transpose();
    }
    if (Node* p = grad_target(self, 1)) {
      MutMap(p->grad_buffer().data().data(), k, n).noalias() +=
          ConstMap(self.parents[0]->value.data().data(), m, k).transpose() * g;
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_row("layer_norm", x, gamma);
  require_row("layer_norm", x, beta);
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  auto in = x.value().data(), gm = gamma.value().data(), bt = beta.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += in[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = in[i * n + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (in[i * n + j] - mu) * is;
      (*xhat)[i * n + j] = h;
      o[i * n + j] = h * gm[j] + bt[j];
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, "layer_norm", [m, n, xhat, inv_std](Node& self) {
    auto g = self.grad.data();
    auto gm = self.parents[1]->value.data();
    if (Node* p = grad_target(self, 0)) {
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i) {
        double mean_d = 0.0, mean_dh = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = g[i * n + j] * gm[j];
          mean_d += d;
          mean_dh += d * (*xhat)[i * n + j];
        }
        mean_d /= static_cast<double>(n);
        mean_dh /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          const double d = g[i * n + j] * gm[j];
          pg[i * n + j] += (*inv_std)[i] * (d - mean_d - (*xhat)[i * n + j] * mean_dh);
        }
      }
    }
    if (Node* p = grad_target(self, 1)) {
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) pg[j] += g[i * n + j] * (*xhat)[i * n + j];
    }
    if (Node* p = grad_target(self, 2)) {
      auto pg = p->grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) pg[j] += g[i * n + j];
    }
  });
}

Var softmax(const Var& x, std::size_t axis) {
  const auto sp = split_axis("softmax", x.shape(), axis);
  Tensor out(x.shape());
  auto in = x.value().data();
  auto o = out.data();
  for (std::size_t a = 0; a < sp.outer; ++a) {
    for (std::size_t c = 0; c < sp.inner; ++c) {
      const std::size_t base = a * sp.n * sp.inner + c;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < sp.n; ++i) mx = std::max(mx, in[base + i * sp.inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < sp.n; ++i) {
        const double e = std::exp(in[base + i * sp.inner] - mx);
        o[base + i * sp.inner] = e;
        z += e;
      }
      for (std::size_t i = 0; i < sp.n; ++i) o[base + i * sp.inner] /= z;
    }
  }
  return make_result(std::move(out), {x}, "softmax", [sp](Node& self) {
    Node* p = grad_target(self, 0);
    if (!p) return;
    auto g = self.grad.data();
    auto y = self.value.data();
    auto pg = p->grad_buffer().data();
    for (std::size_t a = 0; a < sp.outer; ++a) {
      for (std::size_t c = 0; c < sp.inner; ++c) {
        const std::size_t base = a * sp.n * sp.inner + c;
        double dot = 0.0;
        for (std::size_t i = 0; i < sp.n; ++i) dot += g[base + i * sp.inner] * y[base + i * sp.inner];
        for (std::size_t i = 0; i < sp.n; ++i) {
          const std::size_t idx = base + i * sp.inner;
          pg[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  require_rank2("cross_entropy", logits);
  const std::size_t m = logits.shape()[0], n = logits.shape()[1];
  if (targets.size() != m) {
    throw ShapeError("cross_entropy", logits.shape(), Shape{targets.size()});
  }
  auto probs = std::make_shared<std::vector<double>>(m * n);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  auto in = logits.value().data();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (tgt[i] >= n) throw ShapeError("cross_entropy", "target " + std::to_string(tgt[i]) + " out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(in[i * n + j] - mx);
      (*probs)[i * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) (*probs)[i * n + j] /= z;
    total += std::log(z) + mx - in[i * n + tgt[i]];
  }
  return make_result(Tensor::scalar(total / static_cast<double>(m)), {logits}, "cross_entropy",
                     [m, n, probs, tgt = std::move(tgt)](Node& self) {
                       Node* p = grad_target(self, 0);
                       if (!p) return;
                       const double g = self.grad[0] / static_cast<double>(m);
                       auto pg = p->grad_buffer().data();
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) pg[i * n + j] += g * (*probs)[i * n + j];
                         pg[i * n + tgt[i]] -= g;
                       }
                     });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", "no inputs");
  const Shape& s0 = parts.front().shape();
  Shape out_shape = s0;
  split_axis("concat", s0, axis);
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == s0[i];
    if (!ok) throw ShapeError("concat", s0, s);
    widths.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const auto so = split_axis("concat", out_shape, axis);
  Tensor out(out_shape);
  auto o = out.data();
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto src = parts[k].value().data();
    const std::size_t w = widths[k];
    for (std::size_t a = 0; a < so.outer; ++a)
      std::copy_n(src.begin() + a * w * so.inner, w * so.inner,
                  o.begin() + (a * so.n + offset) * so.inner);
    offset += w;
  }
  return make_result(std::move(out), parts, "concat", [so, widths](Node& self) {
    auto g = self.grad.data();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const std::size_t w = widths[k];
      if (Node* p = grad_target(self, k)) {
        auto pg = p->grad_buffer().data();
        for (std::size_t a = 0; a < so.outer; ++a)
          for (std::size_t i = 0; i < w * so.inner; ++i)
            pg[a * w * so.inner + i] += g[(a * so.n + offset) * so.inner + i];
      }
      offset += w;
    }
  });
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto sp = split_axis("slice", x.shape(), axis);
  if (begin >= end || end > sp.n) {
    throw ShapeError("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                                  ") invalid for " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  const std::size_t w = end - begin;
  out_shape[axis] = w;
  Tensor out(out_shape);
  auto src = x.value().data();
  auto o = out.data();
  for (std::size_t a = 0; a < sp.outer; ++a)
    std::copy_n(src.begin() + (a * sp.n + begin) * sp.inner, w * sp.inner, o.begin() + a * w * sp.inner);
  return make_result(std::move(out), {x}, "slice", [sp, begin, w](Node& self) {
    Node* p = grad_target(self, 0);
    if (!p) return;
    auto g = self.grad.data();
    auto pg = p->grad_buffer().data();
    for (std::size_t a = 0; a < sp.outer; ++a)
      for (std::size_t i = 0; i < w * sp.inner; ++i)
        pg[(a * sp.n + begin) * sp.inner + i] += g[a * w * sp.inner + i];
  });
}

Var gather_rows(const Var& table, std::span<const std::size_t> indices) {
  require_rank2("gather_rows", table);
  const std::size_t m = table.shape()[0], n = table.shape()[1];
  if (indices.empty()) throw ShapeError("gather_rows", "empty index list");
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out(Shape{idx.size(), n});
  auto src = table.value().data();
  auto o = out.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m) {
      throw ShapeError("gather_rows", "row " + std::to_string(idx[r]) + " out of range for " + shape_str(table.shape()));
    }
    std::copy_n(src.begin() + idx[r] * n, n, o.begin() + r * n);
  }
  return make_result(std::move(out), {table}, "gather_rows", [n, idx = std::move(idx)](Node& self) {
    Node* p = grad_target(self, 0);
    if (!p) return;
    auto g = self.grad.data();
    auto pg = p->grad_buffer().data();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) pg[idx[r] * n + j] += g[r * n + j];
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make_result(Tensor::scalar(s), {x}, "sum", [](Node& self) {
    if (Node* p = grad_target(self, 0)) {
      const double g = self.grad[0];
      for (auto& v : p->grad_buffer().data()) v += g;
    }
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make_result(Tensor::scalar(s / n), {x}, "mean", [n](Node& self) {
    if (Node* p = grad_target(self, 0)) {
      const double g = self.grad[0] / n;
      for (auto& v : p->grad_buffer().data()) v += g;
    }
  });
}

Var causal_attention(const Var& q, const Var& k, const Var& v, std::size_t batch, std::size_t seq,
                     std::size_t heads) {
  require_rank2("causal_attention", q);
  require_same("causal_attention", q, k);
  require_same("causal_attention", q, v);
  const std::size_t width = q.shape()[1];
  if (q.shape()[0] != batch * seq) {
    throw ShapeError("causal_attention", q.shape(), Shape{batch * seq, width});
  }
  if (heads == 0 || width % heads != 0) {
    throw ShapeError("causal_attention", "width " + std::to_string(width) + " not divisible by heads");
  }
  const std::size_t dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto T = static_cast<Eigen::Index>(seq);
  const auto D = static_cast<Eigen::Index>(dh);
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(width));

  auto probs = std::make_shared<std::vector<double>>(batch * heads * seq * seq, 0.0);
  Tensor out(q.shape());
  RowMat scores(T, T);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = b * seq * width + h * dh;
      StridedConst Q(q.value().data().data() + off, T, D, stride);
      StridedConst K(k.value().data().data() + off, T, D, stride);
      StridedConst V(v.value().data().data() + off, T, D, stride);
      scores.noalias() = (Q * K.transpose()) * scale;
      MutMap P(probs->data() + (b * heads + h) * seq * seq, T, T);
      for (Eigen::Index i = 0; i < T; ++i) {
        const double mx = scores.row(i).head(i + 1).maxCoeff();
        double z = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          const double e = std::exp(scores(i, j) - mx);
          P(i, j) = e;
          z += e;
        }
        P.row(i).head(i + 1) /= z;
      }
      StridedMut O(out.data().data() + off, T, D, stride);
      O.noalias() = P * V;
    }
  }
  return make_result(std::move(out), {q, k, v}, "causal_attention",
                     [batch, seq, heads, dh, width, scale, probs](Node& self) {
                       const auto T = static_cast<Eigen::Index>(seq);
                       const auto D = static_cast<Eigen::Index>(dh);
                       const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(width));
                       Node* pq = grad_target(self, 0);
                       Node* pk = grad_target(self, 1);
                       Node* pv = grad_target(self, 2);
                       RowMat dP(T, T), dS(T, T);
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t h = 0; h < heads; ++h) {
                           const std::size_t off = b * seq * width + h * dh;
                           StridedConst Q(self.parents[0]->value.data().data() + off, T, D, stride);
                           StridedConst K(self.parents[1]->value.data().data() + off, T, D, stride);
                           StridedConst V(self.parents[2]->value.data().data() + off, T, D, stride);
                           StridedConst dO(self.grad.data().data() + off, T, D, stride);
                           ConstMap P(probs->data() + (b * heads + h) * seq * seq, T, T);
                           if (pv) {
                             StridedMut dV(pv->grad_buffer().data().data() + off, T, D, stride);
                             dV.noalias() += P.transpose() * dO;
                           }
                           if (!pq && !pk) continue;
                           dP.noalias() = dO * V.transpose();
                           for (Eigen::Index i = 0; i < T; ++i) {
                             const double dot = P.row(i).dot(dP.row(i));
                             dS.row(i) = P.row(i).cwiseProduct((dP.row(i).array() - dot).matrix());
                           }
                           dS *= scale;
                           if (pq) {
                             StridedMut dQ(pq->grad_buffer().data().data() + off, T, D, stride);
                             dQ.noalias() += dS * K;
                           }
                           if (pk) {
                             StridedMut dK(pk->grad_buffer().data().data() + off, T, D, stride);
                             dK.noalias() += dS.transpose() * Q;
                           }
                         }
                       }
                     });
}

}  // namespace vittle
