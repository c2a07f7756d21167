#include "sa/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sa/kernels.hpp"

namespace sa::nn {

namespace {
constexpr double kProbEps = 1e-7;
}

double clamp_probability(double p) { return std::min(1.0 - kProbEps, std::max(kProbEps, p)); }

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size()) throw std::logic_error("invalid tape var");
  return nodes_[static_cast<size_t>(v.id)];
}
const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size()) throw std::logic_error("invalid tape var");
  return nodes_[static_cast<size_t>(v.id)];
}

Var Tape::push(Tensor value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::param(Tensor& t) {
  Var v = push(t, t.requires_grad);
  node(v).external = &t;
  return v;
}

Var Tape::constant(Tensor t) { return push(std::move(t), false); }

Var Tape::input(Tensor t, bool needs_grad) { return push(std::move(t), needs_grad); }

Tensor* Tape::grad_buf(Var v) {
  Node& n = node(v);
  if (!n.needs_grad) return nullptr;
  Tensor& g = grads_[static_cast<size_t>(v.id)];
  if (g.data.size() != n.value.data.size()) {
    g.shape = n.value.shape;
    g.data.assign(n.value.data.size(), 0.0);
  }
  return &g;
}

const Tensor& Tape::grad(Var v) const {
  const Tensor& g = grads_.at(static_cast<size_t>(v.id));
  if (g.data.empty()) throw std::logic_error("no gradient recorded for this var; run backward first");
  return g;
}

void Tape::backward(Var out) {
  Node& last = node(out);
  if (last.value.numel() != 1)
    throw std::invalid_argument("backward target must be scalar, got shape " + shape_str(last.value.shape));
  grads_.assign(nodes_.size(), Tensor());
  if (!last.needs_grad) return;
  Tensor* seed = grad_buf(out);
  seed->data[0] = 1.0;
  for (int32_t id = out.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    Tensor& g = grads_[static_cast<size_t>(id)];
    if (g.data.empty() || !n.backward) continue;
    n.backward(*this, g);
  }
  for (size_t id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (n.external && n.needs_grad && !grads_[id].data.empty()) {
      n.external->ensure_grad();
      const auto& src = grads_[id].data;
      auto& dst = n.external->grad;
      for (size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    }
  }
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  check_same_shape(ta, tb, "add");
  Tensor out = ta;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  Var v = push(std::move(out), needs(a) || needs(b));
  if (node(v).needs_grad)
    node(v).backward = [a, b](Tape& t, const Tensor& g) {
      if (Tensor* ga = t.grad_buf(a))
        for (size_t i = 0; i < g.data.size(); ++i) ga->data[i] += g.data[i];
      if (Tensor* gb = t.grad_buf(b))
        for (size_t i = 0; i < g.data.size(); ++i) gb->data[i] += g.data[i];
    };
  return v;
}

Var Tape::add_bias(Var a, Var bias) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(bias);
  if (tb.ndim() != 1 || tb.shape[0] != ta.shape.back())
    throw std::invalid_argument("add_bias: bias " + shape_str(tb.shape) + " does not match last dim of " +
                                shape_str(ta.shape));
  Tensor out = ta;
  const int64_t n = tb.shape[0];
  const int64_t rows = out.numel() / n;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < n; ++j) out.data[static_cast<size_t>(r * n + j)] += tb.data[static_cast<size_t>(j)];
  Var v = push(std::move(out), needs(a) || needs(bias));
  if (node(v).needs_grad)
    node(v).backward = [a, bias, n, rows](Tape& t, const Tensor& g) {
      if (Tensor* ga = t.grad_buf(a))
        for (size_t i = 0; i < g.data.size(); ++i) ga->data[i] += g.data[i];
      if (Tensor* gb = t.grad_buf(bias))
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < n; ++j) gb->data[static_cast<size_t>(j)] += g.data[static_cast<size_t>(r * n + j)];
    };
  return v;
}

Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  check_same_shape(ta, tb, "mul");
  Tensor out = ta;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  Var v = push(std::move(out), needs(a) || needs(b));
  if (node(v).needs_grad)
    node(v).backward = [a, b](Tape& t, const Tensor& g) {
      const Tensor& ta = t.val(a);
      const Tensor& tb = t.val(b);
      if (Tensor* ga = t.grad_buf(a))
        for (size_t i = 0; i < g.data.size(); ++i) ga->data[i] += g.data[i] * tb.data[i];
      if (Tensor* gb = t.grad_buf(b))
        for (size_t i = 0; i < g.data.size(); ++i) gb->data[i] += g.data[i] * ta.data[i];
    };
  return v;
}

Var Tape::scale(Var a, double s) {
  Tensor out = val(a);
  for (double& x : out.data) x *= s;
  Var v = push(std::move(out), needs(a));
  if (node(v).needs_grad)
    node(v).backward = [a, s](Tape& t, const Tensor& g) {
      if (Tensor* ga = t.grad_buf(a))
        for (size_t i = 0; i < g.data.size(); ++i) ga->data[i] += s * g.data[i];
    };
  return v;
}

// Supported matmul cases (M = product of leading dims):
//   A) lhs [..., m, k] x rhs [k, n]          -> [..., m, n]   (rhs shared)
//   B) lhs [L.., m, k] x rhs [L.., k, n]     -> [L.., m, n]   (batched)
//   C) lhs [m, k]      x rhs [L.., k, n]     -> [L.., m, n]   (lhs shared)
Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  const int ra = ta.ndim();
  const int rb = tb.ndim();
  if (ra < 2 || rb < 2)
    throw std::invalid_argument("matmul: operands must have rank >= 2, got " + shape_str(ta.shape) + " and " +
                                shape_str(tb.shape));
  auto dim_error = [&]() {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(ta.shape) + " and " +
                                shape_str(tb.shape));
  };

  using kernels::Trans;
  if (rb == 2) {  // case A
    const int64_t k = ta.shape.back();
    if (k != tb.shape[0]) dim_error();
    const int64_t n = tb.shape[1];
    const int64_t rows = ta.numel() / k;
    Shape os(ta.shape.begin(), ta.shape.end() - 1);
    os.push_back(n);
    Tensor out(os);
    kernels::gemm(Trans::N, Trans::N, rows, n, k, ta.data.data(), tb.data.data(), out.data.data());
    Var v = push(std::move(out), needs(a) || needs(b));
    if (node(v).needs_grad)
      node(v).backward = [a, b, rows, n, k](Tape& t, const Tensor& g) {
        const Tensor& ta = t.val(a);
        const Tensor& tb = t.val(b);
        if (Tensor* ga = t.grad_buf(a))
          kernels::gemm(Trans::N, Trans::T, rows, k, n, g.data.data(), tb.data.data(), ga->data.data(), true);
        if (Tensor* gb = t.grad_buf(b))
          kernels::gemm(Trans::T, Trans::N, k, n, rows, ta.data.data(), g.data.data(), gb->data.data(), true);
      };
    return v;
  }

  if (ra == 2) {  // case C
    const int64_t m = ta.shape[0];
    const int64_t k = ta.shape[1];
    if (tb.shape[static_cast<size_t>(rb - 2)] != k) dim_error();
    const int64_t n = tb.shape.back();
    const int64_t batch = tb.numel() / (k * n);
    Shape os(tb.shape.begin(), tb.shape.end() - 2);
    os.push_back(m);
    os.push_back(n);
    Tensor out(os);
    kernels::parallel_for(batch, [&](int64_t i) {
      kernels::gemm_serial(Trans::N, Trans::N, m, n, k, ta.data.data(), tb.data.data() + i * k * n,
                           out.data.data() + i * m * n, false);
    });
    Var v = push(std::move(out), needs(a) || needs(b));
    if (node(v).needs_grad)
      node(v).backward = [a, b, m, n, k, batch](Tape& t, const Tensor& g) {
        const Tensor& ta = t.val(a);
        const Tensor& tb = t.val(b);
        if (Tensor* ga = t.grad_buf(a))
          for (int64_t i = 0; i < batch; ++i)  // shared lhs: accumulate in fixed order
            kernels::gemm_serial(Trans::N, Trans::T, m, k, n, g.data.data() + i * m * n,
                                 tb.data.data() + i * k * n, ga->data.data(), true);
        if (Tensor* gb = t.grad_buf(b))
          kernels::parallel_for(batch, [&](int64_t i) {
            kernels::gemm_serial(Trans::T, Trans::N, k, n, m, ta.data.data(), g.data.data() + i * m * n,
                                 gb->data.data() + i * k * n, true);
          });
      };
    return v;
  }

  // case B
  if (ra != rb) dim_error();
  for (int i = 0; i < ra - 2; ++i)
    if (ta.shape[static_cast<size_t>(i)] != tb.shape[static_cast<size_t>(i)]) dim_error();
  const int64_t m = ta.shape[static_cast<size_t>(ra - 2)];
  const int64_t k = ta.shape.back();
  if (tb.shape[static_cast<size_t>(rb - 2)] != k) dim_error();
  const int64_t n = tb.shape.back();
  const int64_t batch = ta.numel() / (m * k);
  Shape os(ta.shape.begin(), ta.shape.end() - 2);
  os.push_back(m);
  os.push_back(n);
  Tensor out(os);
  kernels::parallel_for(batch, [&](int64_t i) {
    kernels::gemm_serial(Trans::N, Trans::N, m, n, k, ta.data.data() + i * m * k, tb.data.data() + i * k * n,
                         out.data.data() + i * m * n, false);
  });
  Var v = push(std::move(out), needs(a) || needs(b));
  if (node(v).needs_grad)
    node(v).backward = [a, b, m, n, k, batch](Tape& t, const Tensor& g) {
      const Tensor& ta = t.val(a);
      const Tensor& tb = t.val(b);
      if (Tensor* ga = t.grad_buf(a))
        kernels::parallel_for(batch, [&](int64_t i) {
          kernels::gemm_serial(Trans::N, Trans::T, m, k, n, g.data.data() + i * m * n,
                               tb.data.data() + i * k * n, ga->data.data() + i * m * k, true);
        });
      if (Tensor* gb = t.grad_buf(b))
        kernels::parallel_for(batch, [&](int64_t i) {
          kernels::gemm_serial(Trans::T, Trans::N, k, n, m, ta.data.data() + i * m * k,
                               g.data.data() + i * m * n, gb->data.data() + i * k * n, true);
        });
    };
  return v;
}

Var Tape::relu(Var a) {
  Tensor out = val(a);
  for (double& x : out.data) x = x > 0.0 ? x : 0.0;
  Var v = push(std::move(out), needs(a));
  if (node(v).needs_grad)
    node(v).backward = [a](Tape& t, const Tensor& g) {
      const Tensor& ta = t.val(a);
      if (Tensor* ga = t.grad_buf(a))
        for (size_t i = 0; i < g.data.size(); ++i)
          if (ta.data[i] > 0.0) ga->data[i] += g.data[i];
    };
  return v;
}

Var Tape::sigmoid(Var a) {
  Tensor out = val(a);
  for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
  Var v = push(std::move(out), needs(a));
  if (node(v).needs_grad)
    node(v).backward = [a, v](Tape& t, const Tensor& g) {
      const Tensor& y = t.val(v);
      if (Tensor* ga = t.grad_buf(a))
        for (size_t i = 0; i < g.data.size(); ++i) ga->data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
    };
  return v;
}

Var Tape::softmax(Var a, int axis) {
  const Tensor& ta = val(a);
  if (axis < 0) axis += ta.ndim();
  if (axis < 0 || axis >= ta.ndim())
    throw std::invalid_argument("softmax: axis out of range for shape " + shape_str(ta.shape));
  const int64_t lane = ta.shape[static_cast<size_t>(axis)];
  int64_t inner = 1;
  for (int i = axis + 1; i < ta.ndim(); ++i) inner *= ta.shape[static_cast<size_t>(i)];
  const int64_t outer = ta.numel() / (lane * inner);

  Tensor out = ta;
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      double* base = out.data.data() + o * lane * inner + i;
      double mx = base[0];
      for (int64_t l = 1; l < lane; ++l) mx = std::max(mx, base[l * inner]);
      double sum = 0.0;
      for (int64_t l = 0; l < lane; ++l) {
        double e = std::exp(base[l * inner] - mx);
        base[l * inner] = e;
        sum += e;
      }
      for (int64_t l = 0; l < lane; ++l) base[l * inner] /= sum;
    }
  Var v = push(std::move(out), needs(a));
  if (node(v).needs_grad)
    node(v).backward = [a, v, lane, inner, outer](Tape& t, const Tensor& g) {
      const Tensor& y = t.val(v);
      Tensor* ga = t.grad_buf(a);
      if (!ga) return;
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
          const int64_t off = o * lane * inner + i;
          double dot = 0.0;
          for (int64_t l = 0; l < lane; ++l) dot += g.data[static_cast<size_t>(off + l * inner)] *
                                                    y.data[static_cast<size_t>(off + l * inner)];
          for (int64_t l = 0; l < lane; ++l) {
            const size_t idx = static_cast<size_t>(off + l * inner);
            ga->data[idx] += y.data[idx] * (g.data[idx] - dot);
          }
        }
    };
  return v;
}

Var Tape::reshape(Var a, Shape s) {
  const Tensor& ta = val(a);
  if (shape_numel(s) != ta.numel())
    throw std::invalid_argument("reshape: " + shape_str(ta.shape) + " to " + shape_str(s) +
                                " changes element count");
  Tensor out(std::move(s), ta.data);
  Var v = push(std::move(out), needs(a));
  if (node(v).needs_grad)
    node(v).backward = [a](Tape& t, const Tensor& g) {
      if (Tensor* ga = t.grad_buf(a))
        for (size_t i = 0; i < g.data.size(); ++i) ga->data[i] += g.data[i];
    };
  return v;
}

namespace {
// strides of a row-major shape
std::vector<int64_t> row_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[static_cast<size_t>(i)] = st[static_cast<size_t>(i + 1)] * s[static_cast<size_t>(i + 1)];
  return st;
}

void permute_into(const Tensor& src, const std::vector<int>& perm, Tensor& dst) {
  const auto src_st = row_strides(src.shape);
  const auto dst_st = row_strides(dst.shape);
  const int nd = src.ndim();
  const int64_t n = src.numel();
  std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
  for (int64_t flat = 0; flat < n; ++flat) {
    int64_t rem = flat;
    int64_t src_off = 0;
    for (int d = 0; d < nd; ++d) {
      idx[static_cast<size_t>(d)] = rem / dst_st[static_cast<size_t>(d)];
      rem %= dst_st[static_cast<size_t>(d)];
    }
    for (int d = 0; d < nd; ++d) src_off += idx[static_cast<size_t>(d)] * src_st[static_cast<size_t>(perm[static_cast<size_t>(d)])];
    dst.data[static_cast<size_t>(flat)] = src.data[static_cast<size_t>(src_off)];
  }
}
}  // namespace

Var Tape::transpose(Var a, std::vector<int> perm) {
  const Tensor& ta = val(a);
  const int nd = ta.ndim();
  if (static_cast<int>(perm.size()) != nd) throw std::invalid_argument("transpose: permutation rank mismatch");
  Shape os(static_cast<size_t>(nd));
  for (int d = 0; d < nd; ++d) os[static_cast<size_t>(d)] = ta.shape[static_cast<size_t>(perm[static_cast<size_t>(d)])];
  Tensor out(os);
  permute_into(ta, perm, out);
  Var v = push(std::move(out), needs(a));
  if (node(v).needs_grad) {
    std::vector<int> inv(perm.size());
    for (size_t d = 0; d < perm.size(); ++d) inv[static_cast<size_t>(perm[d])] = static_cast<int>(d);
    node(v).backward = [a, inv](Tape& t, const Tensor& g) {
      Tensor* ga = t.grad_buf(a);
      if (!ga) return;
      Tensor tmp(ga->shape);
      permute_into(g, inv, tmp);
      for (size_t i = 0; i < tmp.data.size(); ++i) ga->data[i] += tmp.data[i];
    };
  }
  return v;
}

Var Tape::dropout(Var a, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1)");
  if (!training || rate == 0.0) return a;
  const Tensor& ta = val(a);
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(ta.data.size());
  Tensor out = ta;
  for (size_t i = 0; i < out.data.size(); ++i) {
    double m = rng.uniform() < rate ? 0.0 : keep_scale;
    (*mask)[i] = m;
    out.data[i] *= m;
  }
  Var v = push(std::move(out), needs(a));
  if (node(v).needs_grad)
    node(v).backward = [a, mask](Tape& t, const Tensor& g) {
      if (Tensor* ga = t.grad_buf(a))
        for (size_t i = 0; i < g.data.size(); ++i) ga->data[i] += g.data[i] * (*mask)[i];
    };
  return v;
}

Var Tape::mean_all(Var a) {
  const Tensor& ta = val(a);
  const double n = static_cast<double>(ta.numel());
  double s = 0.0;
  for (double x : ta.data) s += x;
  Var v = push(Tensor::scalar(s / n), needs(a));
  if (node(v).needs_grad)
    node(v).backward = [a, n](Tape& t, const Tensor& g) {
      if (Tensor* ga = t.grad_buf(a)) {
        const double go = g.data[0] / n;
        for (double& x : ga->data) x += go;
      }
    };
  return v;
}

Var Tape::bce_loss(Var pred, const Tensor& target) {
  const Tensor& p = val(pred);
  check_same_shape(p, target, "bce_loss");
  const double n = static_cast<double>(p.numel());
  double loss = 0.0;
  for (size_t i = 0; i < p.data.size(); ++i) {
    const double ph = clamp_probability(p.data[i]);
    const double y = target.data[i];
    loss -= y * std::log(ph) + (1.0 - y) * std::log(1.0 - ph);
  }
  Var v = push(Tensor::scalar(loss / n), needs(pred));
  if (node(v).needs_grad)
    node(v).backward = [pred, target, n](Tape& t, const Tensor& g) {
      const Tensor& p = t.val(pred);
      Tensor* gp = t.grad_buf(pred);
      if (!gp) return;
      const double go = g.data[0] / n;
      for (size_t i = 0; i < p.data.size(); ++i) {
        if (p.data[i] <= kProbEps || p.data[i] >= 1.0 - kProbEps) continue;  // clamped: flat
        const double ph = p.data[i];
        gp->data[i] += go * (ph - target.data[i]) / (ph * (1.0 - ph));
      }
    };
  return v;
}

Var Tape::cce_loss(Var pred, const Tensor& target) {
  const Tensor& p = val(pred);
  check_same_shape(p, target, "cce_loss");
  if (p.ndim() != 2) throw std::invalid_argument("cce_loss expects [batch, classes], got " + shape_str(p.shape));
  const int64_t rows = p.shape[0];
  double loss = 0.0;
  for (size_t i = 0; i < p.data.size(); ++i)
    if (target.data[i] != 0.0) loss -= target.data[i] * std::log(clamp_probability(p.data[i]));
  Var v = push(Tensor::scalar(loss / static_cast<double>(rows)), needs(pred));
  if (node(v).needs_grad)
    node(v).backward = [pred, target, rows](Tape& t, const Tensor& g) {
      const Tensor& p = t.val(pred);
      Tensor* gp = t.grad_buf(pred);
      if (!gp) return;
      const double go = g.data[0] / static_cast<double>(rows);
      for (size_t i = 0; i < p.data.size(); ++i) {
        if (target.data[i] == 0.0) continue;
        if (p.data[i] <= kProbEps || p.data[i] >= 1.0 - kProbEps) continue;
        gp->data[i] -= go * target.data[i] / p.data[i];
      }
    };
  return v;
}

Var Tape::mse_loss(Var pred, const Tensor& target) {
  const Tensor& p = val(pred);
  check_same_shape(p, target, "mse_loss");
  const double n = static_cast<double>(p.numel());
  double loss = 0.0;
  for (size_t i = 0; i < p.data.size(); ++i) {
    const double d = p.data[i] - target.data[i];
    loss += d * d;
  }
  Var v = push(Tensor::scalar(loss / n), needs(pred));
  if (node(v).needs_grad)
    node(v).backward = [pred, target, n](Tape& t, const Tensor& g) {
      const Tensor& p = t.val(pred);
      Tensor* gp = t.grad_buf(pred);
      if (!gp) return;
      const double go = 2.0 * g.data[0] / n;
      for (size_t i = 0; i < p.data.size(); ++i) gp->data[i] += go * (p.data[i] - target.data[i]);
    };
  return v;
}

}  // namespace sa::nn
