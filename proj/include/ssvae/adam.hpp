#pragma once

#include "ssvae/tensor.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace ssvae {

/// Adam with bias correction. Moment buffers are allocated lazily on the
/// first step and must keep matching the parameter list thereafter.
template <typename S>
struct AdamState {
  long step_count = 0;
  std::vector<typename Tensor<S>::Buffer> first_moment;
  std::vector<typename Tensor<S>::Buffer> second_moment;
  S learning_rate = S(1e-3);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S epsilon = S(1e-8);
};

template <typename S>
void adam_step(std::vector<Tensor<S>>& params, AdamState<S>& state) {
  using Buffer = typename Tensor<S>::Buffer;
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i] = Buffer::Zero(params[i].numel());
      state.second_moment[i] = Buffer::Zero(params[i].numel());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: state tracks " +
                                std::to_string(state.first_moment.size()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      const std::string who =
          params[i].name().empty() ? "#" + std::to_string(i) : params[i].name();
      throw std::invalid_argument("adam_step: missing gradient for parameter " + who);
    }
  }
  state.step_count += 1;
  const S bc1 = S(1) - std::pow(state.beta1, static_cast<S>(state.step_count));
  const S bc2 = S(1) - std::pow(state.beta2, static_cast<S>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Buffer& g = params[i].grad();
    Buffer& m = state.first_moment[i];
    Buffer& v = state.second_moment[i];
    m = state.beta1 * m + (S(1) - state.beta1) * g;
    v = state.beta2 * v + (S(1) - state.beta2) * g.square();
    const Buffer mhat = m / bc1;
    const Buffer vhat = v / bc2;
    params[i].update_value(params[i].value() -
                           state.learning_rate * mhat / (vhat.sqrt() + state.epsilon));
    params[i].clear_grad();
  }
}

}  // namespace ssvae
