// Normalization, dropout, softmax, and sequence-model ops.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

#include "htc/kernels.hpp"
#include "htc/ops.hpp"

namespace htc {

namespace {

using Node = Tensor::Node;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int normalize_axis(int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw std::invalid_argument("axis out of range");
  return axis;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const int ax = normalize_axis(axis, x.rank());
  const std::size_t len = static_cast<std::size_t>(x.dim(ax));
  std::size_t inner = 1;
  for (int i = ax + 1; i < x.rank(); ++i) inner *= static_cast<std::size_t>(x.dim(i));
  const std::size_t outer = x.size() / (len * inner);

  for (double v : x.data()) {
    if (std::isnan(v)) throw std::domain_error("softmax: NaN in input");
  }

  Tensor out = Tensor::make_node(x.shape(), x.requires_grad());
  const double* xd = x.data().data();
  double* od = out.data_mut().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = kNegInf;
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xd[base + j * inner]);
      if (mx == kNegInf) {
        throw std::domain_error("softmax: slice contains only -inf scores (degenerate)");
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(xd[base + j * inner] - mx);
        od[base + j * inner] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (std::size_t j = 0; j < len; ++j) od[base + j * inner] *= inv;
    }
  }
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node()};
    Node* xp = x.node().get();
    on->backward = [on, xp, outer, inner, len] {
      xp->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < len; ++j) {
            dot += on->grad[base + j * inner] * on->data[base + j * inner];
          }
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t idx = base + j * inner;
            xp->grad[idx] += on->data[idx] * (on->grad[idx] - dot);
          }
        }
      }
    };
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t f = static_cast<std::size_t>(x.shape().back());
  if (gamma.size() != f || beta.size() != f) {
    throw std::invalid_argument("layer_norm: affine params " + shape_str(gamma.shape()) + "/" +
                                shape_str(beta.shape()) + " do not match feature dim " +
                                std::to_string(f));
  }
  const std::size_t rows = x.size() / f;
  Tensor out = Tensor::make_node(x.shape(), x.requires_grad() || gamma.requires_grad() ||
                                                beta.requires_grad());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  const double* xd = x.data().data();
  const double* gd = gamma.data().data();
  const double* bd = beta.data().data();
  double* od = out.data_mut().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd + r * f;
    double mean = 0.0;
    for (std::size_t j = 0; j < f; ++j) mean += row[j];
    mean /= static_cast<double>(f);
    double var = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(f);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < f; ++j) {
      const double xh = (row[j] - mean) * inv;
      xhat[r * f + j] = xh;
      od[r * f + j] = gd[j] * xh + bd[j];
    }
  }
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node(), gamma.node(), beta.node()};
    Node* xp = x.node().get();
    Node* gp = gamma.node().get();
    Node* bp = beta.node().get();
    on->backward = [on, xp, gp, bp, rows, f, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g = on->grad.data() + r * f;
        const double* xh = xhat.data() + r * f;
        if (gp->requires_grad) {
          gp->ensure_grad();
          for (std::size_t j = 0; j < f; ++j) gp->grad[j] += g[j] * xh[j];
        }
        if (bp->requires_grad) {
          bp->ensure_grad();
          kernels::axpy(f, 1.0, g, bp->grad.data());
        }
        if (xp->requires_grad) {
          xp->ensure_grad();
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < f; ++j) {
            const double dxh = g[j] * gp->data[j];
            m1 += dxh;
            m2 += dxh * xh[j];
          }
          m1 /= static_cast<double>(f);
          m2 /= static_cast<double>(f);
          double* dx = xp->grad.data() + r * f;
          for (std::size_t j = 0; j < f; ++j) {
            const double dxh = g[j] * gp->data[j];
            dx[j] += inv_std[r] * (dxh - m1 - xh[j] * m2);
          }
        }
      }
    };
  }
  return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum, double eps) {
  const std::size_t f = static_cast<std::size_t>(x.shape().back());
  if (gamma.size() != f || beta.size() != f || running_mean.size() != f ||
      running_var.size() != f) {
    throw std::invalid_argument("batch_norm: parameter/buffer sizes do not match feature dim " +
                                std::to_string(f));
  }
  const std::size_t rows = x.size() / f;
  if (training && rows < 2) {
    throw std::invalid_argument(
        "batch_norm: degenerate batch (training mode needs at least 2 rows, got " +
        std::to_string(rows) + ")");
  }
  Tensor out = Tensor::make_node(x.shape(), x.requires_grad() || gamma.requires_grad() ||
                                                beta.requires_grad());
  std::vector<double> mean(f), var(f);
  if (training) {
    const double* xd = x.data().data();
    for (std::size_t j = 0; j < f; ++j) mean[j] = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < f; ++j) mean[j] += xd[r * f + j];
    }
    for (std::size_t j = 0; j < f; ++j) mean[j] /= static_cast<double>(rows);
    for (std::size_t j = 0; j < f; ++j) var[j] = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < f; ++j) {
        const double d = xd[r * f + j] - mean[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < f; ++j) var[j] /= static_cast<double>(rows);
    double* rm = running_mean.data_mut().data();
    double* rv = running_var.data_mut().data();
    for (std::size_t j = 0; j < f; ++j) {
      rm[j] = (1.0 - momentum) * rm[j] + momentum * mean[j];
      rv[j] = (1.0 - momentum) * rv[j] + momentum * var[j];
    }
  } else {
    mean = running_mean.data();
    var = running_var.data();
  }

  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(f);
  for (std::size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  {
    const double* xd = x.data().data();
    const double* gd = gamma.data().data();
    const double* bd = beta.data().data();
    double* od = out.data_mut().data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < f; ++j) {
        const double xh = (xd[r * f + j] - mean[j]) * inv_std[j];
        xhat[r * f + j] = xh;
        od[r * f + j] = gd[j] * xh + bd[j];
      }
    }
  }

  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node(), gamma.node(), beta.node()};
    Node* xp = x.node().get();
    Node* gp = gamma.node().get();
    Node* bp = beta.node().get();
    on->backward = [on, xp, gp, bp, rows, f, training, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)] {
      if (gp->requires_grad) {
        gp->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < f; ++j) {
            gp->grad[j] += on->grad[r * f + j] * xhat[r * f + j];
          }
        }
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          kernels::axpy(f, 1.0, on->grad.data() + r * f, bp->grad.data());
        }
      }
      if (xp->requires_grad) {
        xp->ensure_grad();
        if (training) {
          // Batch statistics carry gradient: standard BN backward.
          std::vector<double> m1(f, 0.0), m2(f, 0.0);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < f; ++j) {
              const double dxh = on->grad[r * f + j] * gp->data[j];
              m1[j] += dxh;
              m2[j] += dxh * xhat[r * f + j];
            }
          }
          for (std::size_t j = 0; j < f; ++j) {
            m1[j] /= static_cast<double>(rows);
            m2[j] /= static_cast<double>(rows);
          }
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < f; ++j) {
              const double dxh = on->grad[r * f + j] * gp->data[j];
              xp->grad[r * f + j] += inv_std[j] * (dxh - m1[j] - xhat[r * f + j] * m2[j]);
            }
          }
        } else {
          // Running statistics are constants.
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < f; ++j) {
              xp->grad[r * f + j] += on->grad[r * f + j] * gp->data[j] * inv_std[j];
            }
          }
        }
      }
    };
  }
  return out;
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) {
    throw std::invalid_argument("dropout: p must be in [0, 1), got " + std::to_string(p));
  }
  const std::size_t n = x.size();
  Tensor out = Tensor::make_node(x.shape(), x.requires_grad());
  if (!training || p == 0.0) {
    out.data_mut() = x.data();
    if (out.requires_grad()) {
      auto* on = out.node().get();
      on->parents = {x.node()};
      Node* xp = x.node().get();
      on->backward = [on, xp, n] {
        xp->ensure_grad();
        kernels::axpy(n, 1.0, on->grad.data(), xp->grad.data());
      };
    }
    return out;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> factor(n);
  for (std::size_t i = 0; i < n; ++i) factor[i] = rng.uniform() < p ? 0.0 : keep_scale;
  kernels::vmul(n, x.data().data(), factor.data(), out.data_mut().data());
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node()};
    Node* xp = x.node().get();
    on->backward = [on, xp, n, factor = std::move(factor)] {
      xp->ensure_grad();
      kernels::vmac(n, on->grad.data(), factor.data(), xp->grad.data());
    };
  }
  return out;
}

Tensor embedding(const std::vector<int>& ids, int batch, int seq_len, const Tensor& table) {
  if (static_cast<std::size_t>(batch) * static_cast<std::size_t>(seq_len) != ids.size()) {
    throw std::invalid_argument("embedding: ids length does not match batch*seq_len");
  }
  if (table.rank() != 2) throw std::invalid_argument("embedding: table must be [V x d]");
  const int v_n = table.dim(0);
  const std::size_t d = static_cast<std::size_t>(table.dim(1));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= v_n) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " at position " +
                              std::to_string(i) + " outside vocabulary [0, " +
                              std::to_string(v_n) + ")");
    }
  }
  Tensor out = Tensor::make_node({batch, seq_len, static_cast<int>(d)}, table.requires_grad());
  const double* td = table.data().data();
  double* od = out.data_mut().data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double* row = td + static_cast<std::size_t>(ids[i]) * d;
    for (std::size_t j = 0; j < d; ++j) od[i * d + j] = row[j];
  }
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {table.node()};
    Node* tp = table.node().get();
    std::vector<int> ids_copy = ids;
    on->backward = [on, tp, d, ids_copy = std::move(ids_copy)] {
      tp->ensure_grad();
      for (std::size_t i = 0; i < ids_copy.size(); ++i) {
        kernels::axpy(d, 1.0, on->grad.data() + i * d,
                      tp->grad.data() + static_cast<std::size_t>(ids_copy[i]) * d);
      }
    };
  }
  return out;
}

Tensor max_over_time(const Tensor& x) {
  if (x.rank() != 3) {
    throw std::invalid_argument("max_over_time: need [B x T x F], got " + shape_str(x.shape()));
  }
  const int b_n = x.dim(0), t_n = x.dim(1), f_n = x.dim(2);
  const std::size_t f = static_cast<std::size_t>(f_n);
  Tensor out = Tensor::make_node({b_n, f_n}, x.requires_grad());
  std::vector<int> argmax(static_cast<std::size_t>(b_n) * f);
  const double* xd = x.data().data();
  double* od = out.data_mut().data();
  for (int b = 0; b < b_n; ++b) {
    for (std::size_t j = 0; j < f; ++j) {
      double best = xd[(static_cast<std::size_t>(b) * t_n) * f + j];
      int best_t = 0;
      for (int t = 1; t < t_n; ++t) {
        const double v = xd[(static_cast<std::size_t>(b) * t_n + static_cast<std::size_t>(t)) * f + j];
        if (v > best) {
          best = v;
          best_t = t;
        }
      }
      od[static_cast<std::size_t>(b) * f + j] = best;
      argmax[static_cast<std::size_t>(b) * f + j] = best_t;
    }
  }
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {x.node()};
    Node* xp = x.node().get();
    on->backward = [on, xp, b_n, t_n, f, argmax = std::move(argmax)] {
      xp->ensure_grad();
      for (int b = 0; b < b_n; ++b) {
        for (std::size_t j = 0; j < f; ++j) {
          const int t = argmax[static_cast<std::size_t>(b) * f + j];
          xp->grad[(static_cast<std::size_t>(b) * t_n + static_cast<std::size_t>(t)) * f + j] +=
              on->grad[static_cast<std::size_t>(b) * f + j];
        }
      }
    };
  }
  return out;
}

namespace {

Tensor mask_scores_impl(const Tensor& scores, const std::vector<double>& mask, int b_n, int tk_n,
                        std::size_t repeat_per_key, const char* what) {
  if (mask.size() != static_cast<std::size_t>(b_n) * static_cast<std::size_t>(tk_n)) {
    throw std::invalid_argument(std::string(what) + ": mask length does not match scores");
  }
  for (int b = 0; b < b_n; ++b) {
    bool any = false;
    for (int t = 0; t < tk_n && !any; ++t) {
      any = mask[static_cast<std::size_t>(b) * tk_n + static_cast<std::size_t>(t)] != 0.0;
    }
    if (!any) {
      throw std::runtime_error(std::string(what) + ": all positions masked for batch row " +
                               std::to_string(b));
    }
  }
  Tensor out = Tensor::make_node(scores.shape(), scores.requires_grad());
  // keep[i]: 1 where the score passes through, 0 where it is pinned to -inf.
  const std::size_t n = scores.size();
  std::vector<double> keep(n, 1.0);
  const std::size_t per_batch = n / static_cast<std::size_t>(b_n);
  for (int b = 0; b < b_n; ++b) {
    for (int t = 0; t < tk_n; ++t) {
      if (mask[static_cast<std::size_t>(b) * tk_n + static_cast<std::size_t>(t)] == 0.0) {
        for (std::size_t r = 0; r < repeat_per_key; ++r) {
          keep[static_cast<std::size_t>(b) * per_batch + r * static_cast<std::size_t>(tk_n) +
               static_cast<std::size_t>(t)] = 0.0;
        }
      }
    }
  }
  const double* sd = scores.data().data();
  double* od = out.data_mut().data();
  for (std::size_t i = 0; i < n; ++i) {
    od[i] = keep[i] != 0.0 ? sd[i] : -std::numeric_limits<double>::infinity();
  }
  if (out.requires_grad()) {
    auto* on = out.node().get();
    on->parents = {scores.node()};
    Node* sp = scores.node().get();
    on->backward = [on, sp, n, keep = std::move(keep)] {
      sp->ensure_grad();
      kernels::vmac(n, on->grad.data(), keep.data(), sp->grad.data());
    };
  }
  return out;
}

}  // namespace

Tensor mask_attention_scores(const Tensor& scores, const std::vector<double>& mask) {
  if (scores.rank() != 4) {
    throw std::invalid_argument("mask_attention_scores: need [B x H x Tq x Tk], got " +
                                shape_str(scores.shape()));
  }
  const int b_n = scores.dim(0), h_n = scores.dim(1), tq_n = scores.dim(2), tk_n = scores.dim(3);
  return mask_scores_impl(scores, mask, b_n, tk_n,
                          static_cast<std::size_t>(h_n) * static_cast<std::size_t>(tq_n),
                          "attention");
}

Tensor mask_time_scores(const Tensor& scores, const std::vector<double>& mask) {
  if (scores.rank() != 2) {
    throw std::invalid_argument("mask_time_scores: need [B x T], got " + shape_str(scores.shape()));
  }
  return mask_scores_impl(scores, mask, scores.dim(0), scores.dim(1), 1, "attention pool");
}

}  // namespace htc
