#include "daml/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "daml/errors.hpp"

namespace daml {

namespace {

thread_local bool g_grad_enabled = true;
thread_local bool g_grl_sign_fault = false;

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

void require_same(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape())
    shape_fail(op, "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

// Builds the output node: checks finiteness and keeps parents only when a
// gradient can flow back through them.
Var make_node(const char* op, Tensor value, std::vector<NodePtr> parents,
              std::function<void(Node&)> backward_fn) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite output");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  const bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                   [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

// dst[i,j] += sum_k a[i,k] * b[k,j]
void gemm_nn(const double* a, const double* b, double* dst, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* out = dst + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
    }
  }
}

// dst[i,j] += sum_k a[i,k] * b[j,k]
void gemm_nt(const double* a, const double* b, double* dst, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      dst[i * n + j] += acc;
    }
  }
}

// dst[i,j] += sum_r a[r,i] * b[r,j]
void gemm_tn(const double* a, const double* b, double* dst, std::size_t rows, std::size_t m, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* arow = a + r * m;
    const double* brow = b + r * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* out = dst + i * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
    }
  }
}

template <class F, class D>
Var unary(const char* op, const Var& a, F f, D dfdx_from_xy) {
  Tensor out(a.shape());
  const auto x = a.value().data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make_node(op, std::move(out), {a.node()}, [dfdx_from_xy](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& pg = p.ensure_grad();
    const auto x = p.value.data();
    const auto y = self.value.data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * dfdx_from_xy(x[i], y[i]);
  });
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.shape() != value.shape()) grad = Tensor::zeros_like(value);
  return grad;
}

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->grad = Tensor::zeros_like(node->value);
  node->requires_grad = true;
  node->op = "parameter";
  return Var(std::move(node));
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return Var(std::move(node));
}

const Tensor& Var::grad() const { return node_->ensure_grad(); }

void Var::zero_grad() {
  node_->ensure_grad().fill(0.0);
  node_->grad_populated = false;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

ScopedGrlSignFault::ScopedGrlSignFault() : previous_(g_grl_sign_fault) { g_grl_sign_fault = true; }
ScopedGrlSignFault::~ScopedGrlSignFault() { g_grl_sign_fault = previous_; }

Var matmul(const Var& a, const Var& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (bv.rank() != 2 || av.cols() != bv.shape()[0])
    shape_fail("matmul", to_string(av.shape()) + " x " + to_string(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  return make_node("matmul", std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.data().data();
    if (pa.requires_grad)  // dA = G B^T
      gemm_nt(g, pb.value.data().data(), pa.ensure_grad().data().data(), m, n, k);
    if (pb.requires_grad)  // dB = A^T G
      gemm_tn(pa.value.data().data(), g, pb.ensure_grad().data().data(), m, k, n);
  });
}

Var matmul_bt(const Var& a, const Var& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.cols())
    shape_fail("matmul_bt", to_string(av.shape()) + " x " + to_string(bv.shape()) + "^T");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out({m, n});
  gemm_nt(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  return make_node("matmul_bt", std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.data().data();
    if (pa.requires_grad)  // dA = G B
      gemm_nn(g, pb.value.data().data(), pa.ensure_grad().data().data(), m, n, k);
    if (pb.requires_grad)  // dB = G^T A
      gemm_tn(g, pa.value.data().data(), pb.ensure_grad().data().data(), m, n, k);
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  const auto& bv = bias.value();
  if (wv.rank() != 2 || xv.cols() != wv.cols() || bv.size() != wv.rows())
    shape_fail("linear", "x " + to_string(xv.shape()) + ", W " + to_string(wv.shape()) + ", b " +
                             to_string(bv.shape()));
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.rows();
  Tensor out({m, n});
  auto o = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = bv[j];
  gemm_nt(xv.data().data(), wv.data().data(), o.data(), m, k, n);
  return make_node("linear", std::move(out), {x.node(), weight.node(), bias.node()}, [m, k, n](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    const double* g = self.grad.data().data();
    if (px.requires_grad) gemm_nn(g, pw.value.data().data(), px.ensure_grad().data().data(), m, n, k);
    if (pw.requires_grad) gemm_tn(g, px.value.data().data(), pw.ensure_grad().data().data(), m, n, k);
    if (pb.requires_grad) {
      auto bg = pb.ensure_grad().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) bg[j] += g[i * n + j];
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same("add", a, b);
  Tensor out = a.value();
  auto o = out.data();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return make_node("add", std::move(out), {a.node(), b.node()}, [](Node& self) {
    const auto g = self.grad.data();
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto pg = p->ensure_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same("sub", a, b);
  Tensor out = a.value();
  auto o = out.data();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return make_node("sub", std::move(out), {a.node(), b.node()}, [](Node& self) {
    const auto g = self.grad.data();
    if (self.parents[0]->requires_grad) {
      auto pg = self.parents[0]->ensure_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
    if (self.parents[1]->requires_grad) {
      auto pg = self.parents[1]->ensure_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same("mul", a, b);
  Tensor out = a.value();
  auto o = out.data();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return make_node("mul", std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto g = self.grad.data();
    if (pa.requires_grad) {
      auto pg = pa.ensure_grad().data();
      const auto bv = pb.value.data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * bv[i];
    }
    if (pb.requires_grad) {
      auto pg = pb.ensure_grad().data();
      const auto av = pa.value.data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * av[i];
    }
  });
}

Var maximum(const Var& a, double floor) {
  return unary(
      "maximum", a, [floor](double x) { return std::max(x, floor); },
      [floor](double x, double) { return x >= floor ? 1.0 : 0.0; });
}

Var affine(const Var& a, double s, double t) {
  return unary(
      "affine", a, [s, t](double x) { return s * x + t; }, [s](double, double) { return s; });
}

Var add_row(const Var& a, const Var& row) {
  const std::size_t n = a.value().cols();
  if (row.value().size() != n)
    shape_fail("add_row", to_string(a.shape()) + " + row " + to_string(row.shape()));
  Tensor out = a.value();
  auto o = out.data();
  const auto r = row.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += r[i % n];
  return make_node("add_row", std::move(out), {a.node(), row.node()}, [n](Node& self) {
    const auto g = self.grad.data();
    if (self.parents[0]->requires_grad) {
      auto pg = self.parents[0]->ensure_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
    if (self.parents[1]->requires_grad) {
      auto pg = self.parents[1]->ensure_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i % n] += g[i];
    }
  });
}

Var mul_col(const Var& a, const Var& col) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (col.value().size() != m)
    shape_fail("mul_col", to_string(a.shape()) + " * col " + to_string(col.shape()));
  Tensor out = a.value();
  auto o = out.data();
  const auto c = col.value().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] *= c[i];
  return make_node("mul_col", std::move(out), {a.node(), col.node()}, [m, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pc = *self.parents[1];
    const auto g = self.grad.data();
    if (pa.requires_grad) {
      auto pg = pa.ensure_grad().data();
      const auto c = pc.value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) pg[i * n + j] += g[i * n + j] * c[i];
    }
    if (pc.requires_grad) {
      auto pg = pc.ensure_grad().data();
      const auto av = pa.value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) pg[i] += g[i * n + j] * av[i * n + j];
    }
  });
}

Var tanh(const Var& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      "log", a, [](double x) { return std::log(std::max(x, kLogFloor)); },
      [](double x, double) { return x > kLogFloor ? 1.0 / x : 0.0; });
}

namespace {

Var softmax_impl(const char* op, const Var& a, const Tensor* mask) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  Tensor out(a.shape());
  const auto x = a.value().data();
  auto y = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = x.data() + i * n;
    double* yr = y.data() + i * n;
    const double* mr = mask ? mask->data().data() + i * n : nullptr;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j)
      if (!mr || mr[j] != 0.0) mx = std::max(mx, xr[j]);
    if (mx == -INFINITY) throw Error(std::string(op) + ": row " + std::to_string(i) + " is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = (!mr || mr[j] != 0.0) ? std::exp(xr[j] - mx) : 0.0;
      z += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
  }
  return make_node(op, std::move(out), {a.node()}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto pg = p.ensure_grad().data();
    const auto y = self.value.data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) pg[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

}  // namespace

Var softmax(const Var& a) { return softmax_impl("softmax", a, nullptr); }

Var masked_softmax(const Var& a, const Tensor& mask) {
  if (mask.shape() != a.shape())
    shape_fail("masked_softmax", "mask " + to_string(mask.shape()) + " vs input " + to_string(a.shape()));
  return softmax_impl("masked_softmax", a, &mask);
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_node("sum", Tensor::scalar(s), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double g = self.grad[0];
    for (auto& v : p.ensure_grad().data()) v += g;
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_node("mean", Tensor::scalar(s / n), {a.node()}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double g = self.grad[0] / n;
    for (auto& v : p.ensure_grad().data()) v += g;
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) shape_fail("concat_cols", "no inputs");
  const std::size_t m = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    if (p.value().rows() != m)
      shape_fail("concat_cols", "row mismatch " + to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
    total += p.value().cols();
    parents.push_back(p.node());
  }
  Tensor out({m, total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.value().cols();
    const auto src = p.value().data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(src.data() + i * c, c, out.data().data() + i * total + offset);
    offset += c;
  }
  return make_node("concat_cols", std::move(out), std::move(parents), [m, total](Node& self) {
    const auto g = self.grad.data();
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      const std::size_t c = p->value.cols();
      if (p->requires_grad) {
        auto pg = p->ensure_grad().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) pg[i * c + j] += g[i * total + offset + j];
      }
      offset += c;
    }
  });
}

Var gather_rows(const Var& table, std::span<const std::int64_t> ids) {
  const std::size_t vocab = table.value().rows(), n = table.value().cols();
  if (ids.empty()) shape_fail("gather_rows", "empty id list");
  Tensor out({ids.size(), n});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab)
      throw Error("gather_rows: id " + std::to_string(ids[i]) + " out of range for table with " +
                  std::to_string(vocab) + " rows");
    std::copy_n(table.value().data().data() + ids[i] * n, n, out.data().data() + i * n);
  }
  std::vector<std::int64_t> saved(ids.begin(), ids.end());
  return make_node("gather_rows", std::move(out), {table.node()}, [saved = std::move(saved), n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto pg = p.ensure_grad().data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < saved.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) pg[saved[i] * n + j] += g[i * n + j];
  });
}

Var weighted_sum(std::span<const Var> states, const Var& alpha) {
  const std::size_t count = states.size();
  if (count == 0) shape_fail("weighted_sum", "no states");
  const std::size_t m = states[0].value().rows(), n = states[0].value().cols();
  if (alpha.value().rows() != m || alpha.value().cols() != count)
    shape_fail("weighted_sum", "alpha " + to_string(alpha.shape()) + " for " + std::to_string(count) +
                                   " states of " + to_string(states[0].shape()));
  std::vector<NodePtr> parents{alpha.node()};
  Tensor out({m, n});
  auto o = out.data();
  const auto a = alpha.value().data();
  for (std::size_t k = 0; k < count; ++k) {
    if (states[k].shape() != states[0].shape())
      shape_fail("weighted_sum", "state shape mismatch " + to_string(states[k].shape()));
    const auto h = states[k].value().data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) o[i * n + j] += a[i * count + k] * h[i * n + j];
    parents.push_back(states[k].node());
  }
  return make_node("weighted_sum", std::move(out), std::move(parents), [m, n, count](Node& self) {
    Node& pa = *self.parents[0];
    const auto g = self.grad.data();
    const auto a = pa.value.data();
    for (std::size_t k = 0; k < count; ++k) {
      Node& ph = *self.parents[k + 1];
      const auto h = ph.value.data();
      if (ph.requires_grad) {
        auto hg = ph.ensure_grad().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) hg[i * n + j] += a[i * count + k] * g[i * n + j];
      }
      if (pa.requires_grad) {
        auto ag = pa.ensure_grad().data();
        for (std::size_t i = 0; i < m; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * h[i * n + j];
          ag[i * count + k] += dot;
        }
      }
    }
  });
}

Var grad_reverse(const Var& x, double eta) {
  if (!(eta >= 0.0)) throw Error("grad_reverse: eta must be >= 0, got " + std::to_string(eta));
  const double factor = g_grl_sign_fault ? eta : -eta;
  return make_node("grad_reverse", x.value(), {x.node()}, [factor](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto pg = p.ensure_grad().data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) pg[i] += factor * g[i];
  });
}

Var detach(const Var& x) { return Var::constant(x.value()); }

void backward(const Var& root) {
  if (root.value().size() != 1)
    throw ShapeError("backward: root must be a scalar, got shape " + to_string(root.shape()));
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order)
    if (n->backward_fn) n->ensure_grad().fill(0.0);
  root.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    n->grad_populated = true;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

void zero_grads(std::span<Var> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace daml
