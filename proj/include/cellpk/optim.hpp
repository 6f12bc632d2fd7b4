#pragma once

#include <cstdint>
#include <vector>

#include "cellpk/graph.hpp"

namespace cellpk {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment estimates per parameter tensor, plus the step count.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;

  static AdamState zeros_like(const std::vector<Parameter<T>>& params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.emplace_back(p.value.shape());
      s.v.emplace_back(p.value.shape());
    }
    return s;
  }
};

/// One bias-corrected Adam update in place:
///   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2,
///   w -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
template <typename T>
void adam_step(std::vector<Parameter<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               double learning_rate, const AdamHyper& hyper = {});

extern template void adam_step(std::vector<Parameter<float>>&, const std::vector<Tensor<float>>&, AdamState<float>&,
                               double, const AdamHyper&);
extern template void adam_step(std::vector<Parameter<double>>&, const std::vector<Tensor<double>>&,
                               AdamState<double>&, double, const AdamHyper&);

}  // namespace cellpk
