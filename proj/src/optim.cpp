#include "cellpk/optim.hpp"

#include <cmath>

namespace cellpk {

template <typename T>
void adam_step(std::vector<Parameter<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               double learning_rate, const AdamHyper& hyper) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (grads[i].shape() != params[i].value.shape() || state.m[i].shape() != params[i].value.shape() ||
        state.v[i].shape() != params[i].value.shape())
      throw ShapeError("adam_step: shape mismatch for '" + params[i].name + "'");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);
  const T b1 = static_cast<T>(hyper.beta1);
  const T b2 = static_cast<T>(hyper.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].value.values();
    auto g = grads[i].values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (T{1} - b1) * g[k];
      v[k] = b2 * v[k] + (T{1} - b2) * g[k] * g[k];
      const double m_hat = static_cast<double>(m[k]) / correction1;
      const double v_hat = static_cast<double>(v[k]) / correction2;
      w[k] = static_cast<T>(static_cast<double>(w[k]) - learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon));
    }
  }
}

template void adam_step(std::vector<Parameter<float>>&, const std::vector<Tensor<float>>&, AdamState<float>&, double,
                        const AdamHyper&);
template void adam_step(std::vector<Parameter<double>>&, const std::vector<Tensor<double>>&, AdamState<double>&,
                        double, const AdamHyper&);

}  // namespace cellpk
