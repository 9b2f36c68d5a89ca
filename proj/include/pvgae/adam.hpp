#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pvgae/tensor.hpp"

namespace pvgae {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment estimates for one parameter group. Moment tensors mirror the
// shapes of the parameters they belong to.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step_count = 0;
  AdamConfig config{};

  static AdamState for_params(std::span<const Tensor> params,
                              AdamConfig cfg = {}) {
    AdamState st;
    st.config = cfg;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const auto& p : params) {
      st.m.push_back(Tensor::zeros(p.shape()));
      st.v.push_back(Tensor::zeros(p.shape()));
    }
    return st;
  }
};

// Bias-corrected Adam update applied in place.
inline void adam_step(std::span<Tensor> params, std::span<const Tensor> grads,
                      AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() ||
        params[i].shape() != state.m[i].shape()) {
      throw DimensionError("adam_step: shape mismatch at parameter " +
                           std::to_string(i) + ": param " +
                           shape_str(params[i].shape()) + ", grad " +
                           shape_str(grads[i].shape()));
    }
  }
  state.step_count += 1;
  const auto& cfg = state.config;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

}  // namespace pvgae
