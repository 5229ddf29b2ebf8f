#include "fluidsformer/optim.hpp"

#include <cmath>

namespace fluidsformer {

template <typename T>
void adam_step(ParameterStore<T> &params, const std::vector<Tensor<T>> &grads,
               AdamState<T> &state, const AdamConfig &config) {
  if (grads.size() != params.size())
    throw ShapeError("adam_step: " + std::to_string(grads.size()) +
                     " gradients for " + std::to_string(params.size()) +
                     " parameters");
  if (state.m.empty()) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      state.m.push_back(Tensor<T>::zeros(params[k].shape()));
      state.v.push_back(Tensor<T>::zeros(params[k].shape()));
    }
  }
  ++state.step;
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(config.beta1, state.step));
  const T c2 = static_cast<T>(1.0 - std::pow(config.beta2, state.step));
  const T lr = static_cast<T>(config.lr);
  const T eps = static_cast<T>(config.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].shape() != params[k].shape())
      throw ShapeError("adam_step: gradient shape " +
                       shape_string(grads[k].shape()) + " for parameter '" +
                       params.name(k) + "' " + shape_string(params[k].shape()));
    auto g = grads[k].data().array();
    auto m = state.m[k].data().array();
    auto v = state.v[k].data().array();
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.square();
    params[k].data().array() -= lr * (m / c1) / ((v / c2).sqrt() + eps);
  }
}

template void adam_step(ParameterStore<float> &, const std::vector<Tensor<float>> &,
                        AdamState<float> &, const AdamConfig &);
template void adam_step(ParameterStore<double> &,
                        const std::vector<Tensor<double>> &, AdamState<double> &,
                        const AdamConfig &);

} // namespace fluidsformer
