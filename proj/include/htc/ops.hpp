#pragma once

#include <vector>

#include "htc/rng.hpp"
#include "htc/tensor.hpp"

namespace htc {

// Elementwise / broadcast arithmetic -----------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
/// x: [... x F], bias: [F]; adds bias to every trailing row.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor tanh_t(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// log(max(x, floor)); flat (zero-gradient) below the floor.
Tensor log_clamped(const Tensor& x, double floor = 1e-12);

Tensor sum_all(const Tensor& x);

// Shape plumbing --------------------------------------------------------------

Tensor reshape(const Tensor& x, std::vector<int> new_shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor concat_lastdim(const std::vector<Tensor>& parts);
/// x: [B x T x D] -> [B x D] slice at time t.
Tensor select_time(const Tensor& x, int t);
/// steps: T tensors of [B x D] -> [B x T x D].
Tensor stack_time(const std::vector<Tensor>& steps);

// Linear algebra --------------------------------------------------------------

/// a: [m x k], b: [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// a: [... x m x k], b: [... x k x n] (or [... x n x k] when transpose_b);
/// leading dims must match elementwise.
Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

/// x: [B x T x d], kernel: [d x k x F], bias: [F] -> [B x (T-k+1) x F].
/// Valid cross-correlation; activation is the caller's business.
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

// Normalization / regularization ----------------------------------------------

/// Stabilized softmax along `axis`. -inf scores are allowed (exact zero
/// weight); a slice of only -inf or any NaN input throws.
Tensor softmax(const Tensor& x, int axis);

/// Per-row normalization over the last dim, then affine. eps keeps the
/// pre-affine variance within 1e-9 of one on non-degenerate rows.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-12);

/// Feature = last dim; statistics over all other dims. Training mode uses
/// batch statistics and folds them into the running buffers (momentum on the
/// new batch); eval mode uses the running buffers. Training on fewer than
/// two rows throws.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, bool training,
                  double momentum = 0.1, double eps = 1e-5);

/// Inverted dropout: training zeroes each element with probability p and
/// scales survivors by 1/(1-p); eval mode is the identity.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

// Sequence ops ----------------------------------------------------------------

/// ids: B*T indices into table [V x d] -> [B x T x d].
Tensor embedding(const std::vector<int>& ids, int batch, int seq_len, const Tensor& table);

/// x: [B x T x F] -> [B x F], max over time; gradient routes to the first
/// maximizing position.
Tensor max_over_time(const Tensor& x);

/// scores: [B x H x Tq x Tk], mask: length B*Tk of {0,1}. Masked key
/// positions become -inf (zero weight after softmax); a fully masked row
/// throws a degenerate-attention error.
Tensor mask_attention_scores(const Tensor& scores, const std::vector<double>& mask);

/// scores: [B x T], mask: length B*T of {0,1}; same -inf convention.
Tensor mask_time_scores(const Tensor& scores, const std::vector<double>& mask);

}  // namespace htc
