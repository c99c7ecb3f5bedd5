// Arithmetic, shape plumbing, and linear algebra. Inner loops run on the
// kernel backend; accumulation order per output element is fixed (k
// ascending) regardless of backend, so results do not depend on dispatch.

#include "htc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "htc/kernels.hpp"

namespace htc {

namespace {

using Node = Tensor::Node;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

/// dst[j*m + i] = src[i*n + j]; pure permutation, no FP arithmetic.
void transpose2d(const double* src, int m, int n, double* dst) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  }
}

/// C += A * B with A: m x k, B: k x n. ikj order: each C[i][j] accumulates
/// over ascending p through the axpy kernel.
void mm_accum(double* c, const double* a, const double* b, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* c_row = c + static_cast<std::size_t>(i) * n;
    const double* a_row = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      kernels::axpy(static_cast<std::size_t>(n), a_row[p], b + static_cast<std::size_t>(p) * n,
                    c_row);
    }
  }
}

std::vector<std::size_t> strides_of(const std::vector<int>& shape) {
  std::vector<std::size_t> st(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] =
        st[static_cast<std::size_t>(i) + 1] * static_cast<std::size_t>(shape[static_cast<std::size_t>(i) + 1]);
  }
  return st;
}

std::vector<std::size_t> build_perm_map(const std::vector<int>& in_shape,
                                        const std::vector<int>& perm) {
  const std::size_t r = in_shape.size();
  std::vector<int> out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[static_cast<std::size_t>(perm[i])];
  const auto in_strides = strides_of(in_shape);
  const auto out_strides = strides_of(out_shape);
  const std::size_t n = shape_numel(in_shape);
  std::vector<std::size_t> map(n);
  for (std::size_t of = 0; of < n; ++of) {
    std::size_t rem = of;
    std::size_t in_flat = 0;
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t coord = rem / out_strides[i];
      rem %= out_strides[i];
      in_flat += coord * in_strides[static_cast<std::size_t>(perm[i])];
    }
    map[of] = in_flat;
  }
  return map;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::make_node(a.shape(), a.requires_grad() || b.requires_grad());
  const std::size_t n = a.size();
  kernels::vadd(n, a.data().data(), b.data().data(), out.data_mut().data());
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {a.node(), b.node()};
    Node* ap = a.node().get();
    Node* bp = b.node().get();
    on->backward = [on, ap, bp, n] {
      if (ap->requires_grad) {
        ap->ensure_grad();
        kernels::axpy(n, 1.0, on->grad.data(), ap->grad.data());
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        kernels::axpy(n, 1.0, on->grad.data(), bp->grad.data());
      }
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::make_node(a.shape(), a.requires_grad() || b.requires_grad());
  const std::size_t n = a.size();
  kernels::vsub(n, a.data().data(), b.data().data(), out.data_mut().data());
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {a.node(), b.node()};
    Node* ap = a.node().get();
    Node* bp = b.node().get();
    on->backward = [on, ap, bp, n] {
      if (ap->requires_grad) {
        ap->ensure_grad();
        kernels::axpy(n, 1.0, on->grad.data(), ap->grad.data());
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        kernels::axpy(n, -1.0, on->grad.data(), bp->grad.data());
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::make_node(a.shape(), a.requires_grad() || b.requires_grad());
  const std::size_t n = a.size();
  kernels::vmul(n, a.data().data(), b.data().data(), out.data_mut().data());
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {a.node(), b.node()};
    Node* ap = a.node().get();
    Node* bp = b.node().get();
    on->backward = [on, ap, bp, n] {
      if (ap->requires_grad) {
        ap->ensure_grad();
        kernels::vmac(n, on->grad.data(), bp->data.data(), ap->grad.data());
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        kernels::vmac(n, on->grad.data(), ap->data.data(), bp->grad.data());
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::make_node(a.shape(), a.requires_grad());
  const std::size_t n = a.size();
  out.data_mut() = a.data();
  kernels::vscale(n, c, out.data_mut().data());
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {a.node()};
    Node* ap = a.node().get();
    on->backward = [on, ap, c, n] {
      ap->ensure_grad();
      kernels::axpy(n, c, on->grad.data(), ap->grad.data());
    };
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() < 1 || x.shape().back() != bias.dim(0)) {
    throw std::invalid_argument("add_bias: bias " + shape_str(bias.shape()) +
                                " does not match trailing dim of " + shape_str(x.shape()));
  }
  const std::size_t f = bias.size();
  const std::size_t rows = x.size() / f;
  Tensor out = Tensor::make_node(x.shape(), x.requires_grad() || bias.requires_grad());
  const double* xd = x.data().data();
  const double* bd = bias.data().data();
  double* od = out.data_mut().data();
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::vadd(f, xd + r * f, bd, od + r * f);
  }
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node(), bias.node()};
    Node* xp = x.node().get();
    Node* bp = bias.node().get();
    on->backward = [on, xp, bp, rows, f] {
      if (xp->requires_grad) {
        xp->ensure_grad();
        kernels::axpy(rows * f, 1.0, on->grad.data(), xp->grad.data());
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          kernels::axpy(f, 1.0, on->grad.data() + r * f, bp->grad.data());
        }
      }
    };
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::make_node(x.shape(), x.requires_grad());
  const std::size_t n = x.size();
  kernels::vrelu(n, x.data().data(), out.data_mut().data());
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node()};
    Node* xp = x.node().get();
    std::vector<double> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = x.data()[i] > 0.0 ? 1.0 : 0.0;
    on->backward = [on, xp, n, mask = std::move(mask)] {
      xp->ensure_grad();
      kernels::vmac(n, on->grad.data(), mask.data(), xp->grad.data());
    };
  }
  return out;
}

Tensor tanh_t(const Tensor& x) {
  Tensor out = Tensor::make_node(x.shape(), x.requires_grad());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) out.data_mut()[i] = std::tanh(x.data()[i]);
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node()};
    Node* xp = x.node().get();
    on->backward = [on, xp, n] {
      xp->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double y = on->data[i];
        xp->grad[i] += on->grad[i] * (1.0 - y * y);
      }
    };
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::make_node(x.shape(), x.requires_grad());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x.data()[i];
    out.data_mut()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                 : std::exp(v) / (1.0 + std::exp(v));
  }
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node()};
    Node* xp = x.node().get();
    on->backward = [on, xp, n] {
      xp->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double y = on->data[i];
        xp->grad[i] += on->grad[i] * y * (1.0 - y);
      }
    };
  }
  return out;
}

Tensor log_clamped(const Tensor& x, double floor) {
  Tensor out = Tensor::make_node(x.shape(), x.requires_grad());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.data_mut()[i] = std::log(x.data()[i] > floor ? x.data()[i] : floor);
  }
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node()};
    Node* xp = x.node().get();
    on->backward = [on, xp, n, floor] {
      xp->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        if (xp->data[i] > floor) xp->grad[i] += on->grad[i] / xp->data[i];
      }
    };
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = Tensor::make_node({1}, x.requires_grad());
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  out.data_mut()[0] = acc;
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node()};
    Node* xp = x.node().get();
    const std::size_t n = x.size();
    on->backward = [on, xp, n] {
      xp->ensure_grad();
      const double g = on->grad[0];
      for (std::size_t i = 0; i < n; ++i) xp->grad[i] += g;
    };
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<int> new_shape) {
  if (shape_numel(new_shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(new_shape));
  }
  Tensor out = Tensor::make_node(std::move(new_shape), x.requires_grad());
  out.data_mut() = x.data();
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node()};
    Node* xp = x.node().get();
    const std::size_t n = x.size();
    on->backward = [on, xp, n] {
      xp->ensure_grad();
      kernels::axpy(n, 1.0, on->grad.data(), xp->grad.data());
    };
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  const std::size_t r = x.shape().size();
  if (perm.size() != r) throw std::invalid_argument("permute: rank mismatch");
  std::vector<bool> seen(r, false);
  for (int p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= r || seen[static_cast<std::size_t>(p)]) {
      throw std::invalid_argument("permute: invalid permutation");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
  std::vector<int> out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(perm[i]);
  Tensor out = Tensor::make_node(out_shape, x.requires_grad());
  const auto map = build_perm_map(x.shape(), perm);
  const double* xd = x.data().data();
  double* od = out.data_mut().data();
  for (std::size_t i = 0; i < map.size(); ++i) od[i] = xd[map[i]];
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node()};
    Node* xp = x.node().get();
    const std::vector<int> in_shape = x.shape();
    const std::vector<int> perm_copy = perm;
    on->backward = [on, xp, in_shape, perm_copy] {
      xp->ensure_grad();
      const auto m = build_perm_map(in_shape, perm_copy);
      for (std::size_t i = 0; i < m.size(); ++i) xp->grad[m[i]] += on->grad[i];
    };
  }
  return out;
}

Tensor concat_lastdim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_lastdim: no inputs");
  std::vector<int> lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  int f_total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    std::vector<int> pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead) {
      throw std::invalid_argument("concat_lastdim: leading dims mismatch " +
                                  shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    f_total += p.shape().back();
    rg = rg || p.requires_grad();
  }
  std::vector<int> out_shape = lead;
  out_shape.push_back(f_total);
  Tensor out = Tensor::make_node(out_shape, rg);
  const std::size_t rows = shape_numel(lead);
  double* od = out.data_mut().data();
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t f = static_cast<std::size_t>(p.shape().back());
    const double* pd = p.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < f; ++j) od[r * static_cast<std::size_t>(f_total) + off + j] = pd[r * f + j];
    }
    off += f;
  }
  if (out.requires_grad()) {
    auto* on = out.node().get();
    std::vector<Node*> raw;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
      on->parents.push_back(p.node());
      raw.push_back(p.node().get());
      widths.push_back(static_cast<std::size_t>(p.shape().back()));
    }
    const std::size_t ft = static_cast<std::size_t>(f_total);
    on->backward = [on, raw, widths, rows, ft] {
      std::size_t off2 = 0;
      for (std::size_t k = 0; k < raw.size(); ++k) {
        Node* p = raw[k];
        const std::size_t f = widths[k];
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            kernels::axpy(f, 1.0, on->grad.data() + r * ft + off2, p->grad.data() + r * f);
          }
        }
        off2 += f;
      }
    };
  }
  return out;
}

Tensor select_time(const Tensor& x, int t) {
  if (x.rank() != 3) throw std::invalid_argument("select_time: need [B x T x D], got " + shape_str(x.shape()));
  const int b_n = x.dim(0), t_n = x.dim(1), d_n = x.dim(2);
  if (t < 0 || t >= t_n) throw std::out_of_range("select_time: t out of range");
  Tensor out = Tensor::make_node({b_n, d_n}, x.requires_grad());
  const double* xd = x.data().data();
  double* od = out.data_mut().data();
  const std::size_t d = static_cast<std::size_t>(d_n);
  for (int b = 0; b < b_n; ++b) {
    const std::size_t src = (static_cast<std::size_t>(b) * t_n + static_cast<std::size_t>(t)) * d;
    for (std::size_t j = 0; j < d; ++j) od[static_cast<std::size_t>(b) * d + j] = xd[src + j];
  }
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node()};
    Node* xp = x.node().get();
    on->backward = [on, xp, b_n, t_n, t, d] {
      xp->ensure_grad();
      for (int b = 0; b < b_n; ++b) {
        const std::size_t dst = (static_cast<std::size_t>(b) * t_n + static_cast<std::size_t>(t)) * d;
        kernels::axpy(d, 1.0, on->grad.data() + static_cast<std::size_t>(b) * d, xp->grad.data() + dst);
      }
    };
  }
  return out;
}

Tensor stack_time(const std::vector<Tensor>& steps) {
  if (steps.empty()) throw std::invalid_argument("stack_time: no inputs");
  const int b_n = steps[0].dim(0), d_n = steps[0].dim(1);
  bool rg = false;
  for (const Tensor& s : steps) {
    if (s.rank() != 2 || s.dim(0) != b_n || s.dim(1) != d_n) {
      throw std::invalid_argument("stack_time: step shape mismatch " + shape_str(s.shape()));
    }
    rg = rg || s.requires_grad();
  }
  const int t_n = static_cast<int>(steps.size());
  Tensor out = Tensor::make_node({b_n, t_n, d_n}, rg);
  const std::size_t d = static_cast<std::size_t>(d_n);
  double* od = out.data_mut().data();
  for (int t = 0; t < t_n; ++t) {
    const double* sd = steps[static_cast<std::size_t>(t)].data().data();
    for (int b = 0; b < b_n; ++b) {
      const std::size_t dst = (static_cast<std::size_t>(b) * t_n + static_cast<std::size_t>(t)) * d;
      for (std::size_t j = 0; j < d; ++j) od[dst + j] = sd[static_cast<std::size_t>(b) * d + j];
    }
  }
  if (out.requires_grad()) {
    auto* on = out.node().get();
    std::vector<Node*> raw;
    for (const Tensor& s : steps) {
      on->parents.push_back(s.node());
      raw.push_back(s.node().get());
    }
    on->backward = [on, raw, b_n, t_n, d] {
      for (int t = 0; t < t_n; ++t) {
        Node* p = raw[static_cast<std::size_t>(t)];
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (int b = 0; b < b_n; ++b) {
          const std::size_t src = (static_cast<std::size_t>(b) * t_n + static_cast<std::size_t>(t)) * d;
          kernels::axpy(d, 1.0, on->grad.data() + src, p->grad.data() + static_cast<std::size_t>(b) * d);
        }
      }
    };
  }
  return out;
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank()) {
    throw std::invalid_argument("batched_matmul: rank mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const int r = a.rank();
  for (int i = 0; i < r - 2; ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw std::invalid_argument("batched_matmul: batch dims mismatch " + shape_str(a.shape()) +
                                  " vs " + shape_str(b.shape()));
    }
  }
  const int m = a.dim(r - 2), k = a.dim(r - 1);
  const int bk = transpose_b ? b.dim(r - 1) : b.dim(r - 2);
  const int n = transpose_b ? b.dim(r - 2) : b.dim(r - 1);
  if (bk != k) {
    throw std::invalid_argument("batched_matmul: inner dimensions disagree: " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                                (transpose_b ? " (b transposed)" : ""));
  }
  std::vector<int> out_shape(a.shape().begin(), a.shape().end() - 2);
  std::size_t batches = shape_numel(out_shape);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out = Tensor::make_node(out_shape, a.requires_grad() || b.requires_grad());

  const std::size_t a_sz = static_cast<std::size_t>(m) * k;
  const std::size_t b_sz = static_cast<std::size_t>(k) * n;
  const std::size_t o_sz = static_cast<std::size_t>(m) * n;
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data_mut().data();
  std::vector<double> scratch;
  if (transpose_b) scratch.resize(b_sz);
  for (std::size_t s = 0; s < batches; ++s) {
    const double* b_slice = bd + s * b_sz;
    if (transpose_b) {
      transpose2d(b_slice, n, k, scratch.data());
      b_slice = scratch.data();
    }
    mm_accum(od + s * o_sz, ad + s * a_sz, b_slice, m, k, n);
  }

  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {a.node(), b.node()};
    Node* ap = a.node().get();
    Node* bp = b.node().get();
    on->backward = [on, ap, bp, batches, m, k, n, a_sz, b_sz, o_sz, transpose_b] {
      std::vector<double> tmp(std::max(a_sz, std::max(b_sz, o_sz)));
      for (std::size_t s = 0; s < batches; ++s) {
        const double* g = on->grad.data() + s * o_sz;
        const double* a_slice = ap->data.data() + s * a_sz;
        const double* b_slice = bp->data.data() + s * b_sz;
        if (!transpose_b) {
          if (ap->requires_grad) {
            ap->ensure_grad();
            transpose2d(b_slice, k, n, tmp.data());  // [n x k]
            mm_accum(ap->grad.data() + s * a_sz, g, tmp.data(), m, n, k);
          }
          if (bp->requires_grad) {
            bp->ensure_grad();
            transpose2d(a_slice, m, k, tmp.data());  // [k x m]
            mm_accum(bp->grad.data() + s * b_sz, tmp.data(), g, k, m, n);
          }
        } else {
          // out = A * B^T with B: [n x k]
          if (ap->requires_grad) {
            ap->ensure_grad();
            mm_accum(ap->grad.data() + s * a_sz, g, b_slice, m, n, k);
          }
          if (bp->requires_grad) {
            bp->ensure_grad();
            transpose2d(g, m, n, tmp.data());  // [n x m]
            mm_accum(bp->grad.data() + s * b_sz, tmp.data(), a_slice, n, m, k);
          }
        }
      }
    };
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw std::invalid_argument("matmul: need 2-D operands, got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  }
  if (a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  return batched_matmul(a, b, false);
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.rank() != 3 || kernel.rank() != 3 || bias.rank() != 1) {
    throw std::invalid_argument("conv1d: need x [B x T x d], kernel [d x k x F], bias [F]; got " +
                                shape_str(x.shape()) + ", " + shape_str(kernel.shape()) + ", " +
                                shape_str(bias.shape()));
  }
  const int b_n = x.dim(0), t_n = x.dim(1), d_n = x.dim(2);
  const int kd = kernel.dim(0), k = kernel.dim(1), f_n = kernel.dim(2);
  if (kd != d_n) {
    throw std::invalid_argument("conv1d: feature dims disagree: x " + shape_str(x.shape()) +
                                " vs kernel " + shape_str(kernel.shape()));
  }
  if (bias.dim(0) != f_n) {
    throw std::invalid_argument("conv1d: bias " + shape_str(bias.shape()) + " vs filters " +
                                std::to_string(f_n));
  }
  if (k > t_n) {
    throw std::invalid_argument("conv1d: sequence too short: kernel width " + std::to_string(k) +
                                " exceeds sequence length " + std::to_string(t_n));
  }
  const int to_n = t_n - k + 1;
  Tensor out = Tensor::make_node({b_n, to_n, f_n}, x.requires_grad() || kernel.requires_grad() ||
                                                       bias.requires_grad());
  const std::size_t d = static_cast<std::size_t>(d_n);
  const std::size_t f = static_cast<std::size_t>(f_n);
  const double* xd = x.data().data();
  const double* kv = kernel.data().data();
  const double* bv = bias.data().data();
  double* od = out.data_mut().data();
  for (int b = 0; b < b_n; ++b) {
    for (int t = 0; t < to_n; ++t) {
      double* out_row = od + (static_cast<std::size_t>(b) * to_n + static_cast<std::size_t>(t)) * f;
      for (std::size_t j = 0; j < f; ++j) out_row[j] = bv[j];
      for (int m = 0; m < k; ++m) {
        const double* x_row = xd + (static_cast<std::size_t>(b) * t_n + static_cast<std::size_t>(t + m)) * d;
        for (int i = 0; i < d_n; ++i) {
          kernels::axpy(f, x_row[static_cast<std::size_t>(i)],
                        kv + (static_cast<std::size_t>(i) * k + static_cast<std::size_t>(m)) * f, out_row);
        }
      }
    }
  }
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node(), kernel.node(), bias.node()};
    Node* xp = x.node().get();
    Node* kp = kernel.node().get();
    Node* bp = bias.node().get();
    on->backward = [on, xp, kp, bp, b_n, t_n, to_n, d_n, k, f_n, d, f] {
      const double* g_all = on->grad.data();
      if (bp->requires_grad) {
        bp->ensure_grad();
        for (int b = 0; b < b_n; ++b) {
          for (int t = 0; t < to_n; ++t) {
            kernels::axpy(f, 1.0,
                          g_all + (static_cast<std::size_t>(b) * to_n + static_cast<std::size_t>(t)) * f,
                          bp->grad.data());
          }
        }
      }
      if (kp->requires_grad) {
        kp->ensure_grad();
        for (int b = 0; b < b_n; ++b) {
          for (int t = 0; t < to_n; ++t) {
            const double* g_row =
                g_all + (static_cast<std::size_t>(b) * to_n + static_cast<std::size_t>(t)) * f;
            for (int m = 0; m < k; ++m) {
              const double* x_row =
                  xp->data.data() + (static_cast<std::size_t>(b) * t_n + static_cast<std::size_t>(t + m)) * d;
              for (int i = 0; i < d_n; ++i) {
                kernels::axpy(f, x_row[static_cast<std::size_t>(i)], g_row,
                              kp->grad.data() + (static_cast<std::size_t>(i) * k + static_cast<std::size_t>(m)) * f);
              }
            }
          }
        }
      }
      if (xp->requires_grad) {
        xp->ensure_grad();
        // kernel rearranged to [k x F x d] so dx rows are contiguous axpys.
        std::vector<double> kt(static_cast<std::size_t>(k) * f * d);
        for (int i = 0; i < d_n; ++i) {
          for (int m = 0; m < k; ++m) {
            for (int j = 0; j < f_n; ++j) {
              kt[(static_cast<std::size_t>(m) * f + static_cast<std::size_t>(j)) * d + static_cast<std::size_t>(i)] =
                  kp->data[(static_cast<std::size_t>(i) * k + static_cast<std::size_t>(m)) * f + static_cast<std::size_t>(j)];
            }
          }
        }
        for (int b = 0; b < b_n; ++b) {
          for (int t = 0; t < to_n; ++t) {
            const double* g_row =
                g_all + (static_cast<std::size_t>(b) * to_n + static_cast<std::size_t>(t)) * f;
            for (int m = 0; m < k; ++m) {
              double* dx_row =
                  xp->grad.data() + (static_cast<std::size_t>(b) * t_n + static_cast<std::size_t>(t + m)) * d;
              for (int j = 0; j < f_n; ++j) {
                kernels::axpy(d, g_row[static_cast<std::size_t>(j)],
                              kt.data() + (static_cast<std::size_t>(m) * f + static_cast<std::size_t>(j)) * d, dx_row);
              }
            }
          }
        }
      }
    };
  }
  return out;
}

}  // namespace htc
