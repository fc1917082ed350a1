#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "cae/tensor.hpp"

namespace cae::testing {

// Central finite differences against the analytic gradients of a scalar loss.
//
// `forward` must rebuild the loss from scratch on every call (it is invoked
// once under a tape for the analytic pass and twice per coordinate for the
// numeric pass). Returns the max relative error over all coordinates of all
// params, with the denominator floored at 1e-3 so near-zero gradients are
// compared absolutely.
inline double max_grad_rel_error(const std::function<Tensor()>& forward,
                                 const std::vector<Tensor>& params, double h = 1e-5) {
  for (const Tensor& p : params) {
    Tensor q = p;
    q.zero_grad();
  }
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = forward();
    backward(loss, tape);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) {
    analytic.emplace_back(p.grad().begin(), p.grad().end());
  }

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double saved = p.values()[i];
      p.mutable_values()[i] = saved + h;
      const double up = forward().scalar_value();
      p.mutable_values()[i] = saved - h;
      const double down = forward().scalar_value();
      p.mutable_values()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-3});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  }
  return worst;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0, bool param = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> vals(shape_numel(shape));
  for (double& v : vals) v = dist(rng);
  if (param) return Tensor::parameter(std::move(shape), std::move(vals), "p");
  return Tensor::from_values(std::move(shape), std::move(vals));
}

}  // namespace cae::testing
