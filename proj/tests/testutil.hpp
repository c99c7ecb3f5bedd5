#pragma once

// Shared helpers for the test binaries: random tensors and the central
// finite-difference gradient oracle. The oracle only re-evaluates the loss
// callable; it never touches the backward implementations it checks.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "htc/rng.hpp"
#include "htc/tensor.hpp"

namespace htc::test {

inline Tensor randn(std::vector<int> shape, Rng& rng, bool requires_grad = true,
                    double stddev = 0.5) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.data_mut()) v = rng.normal(0.0, stddev);
  return t;
}

struct GradCheckReport {
  double max_rel = 0.0;
  std::string worst;

  void fold(double analytic, double fd, const std::string& where) {
    const double denom = std::abs(analytic) > 1e-8 ? std::abs(analytic) : 1e-8;
    const double rel = std::abs(analytic - fd) / denom;
    if (rel > max_rel) {
      max_rel = rel;
      worst = where + " analytic=" + std::to_string(analytic) + " fd=" + std::to_string(fd);
    }
  }
};

/// Central-difference check of d(make_loss)/d(param) for every element of
/// every listed parameter. make_loss must rebuild the graph from the current
/// leaf values and be deterministic (fix internal seeds).
template <typename LossFn>
GradCheckReport grad_check(LossFn&& make_loss,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double h = 1e-5) {
  for (const auto& [name, p] : params) {
    Tensor mutable_p = p;
    mutable_p.zero_grad();
  }
  Tensor loss = make_loss();
  loss.backward();

  GradCheckReport report;
  for (const auto& [name, p] : params) {
    Tensor leaf = p;
    const std::vector<double> analytic = leaf.grad();
    std::vector<double>& data = leaf.data_mut();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double keep = data[i];
      data[i] = keep + h;
      const double lp = make_loss().value();
      data[i] = keep - h;
      const double lm = make_loss().value();
      data[i] = keep;
      const double fd = (lp - lm) / (2.0 * h);
      report.fold(analytic[i], fd, name + "[" + std::to_string(i) + "]");
    }
  }
  return report;
}

}  // namespace htc::test
