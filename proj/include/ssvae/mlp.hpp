#pragma once

#include "ssvae/rng.hpp"
#include "ssvae/tensor.hpp"

#include <string>
#include <vector>

namespace ssvae {

template <typename S>
struct Dense {
  Tensor<S> weight;  // [in x out]
  Tensor<S> bias;    // [out]

  static Dense glorot(Eigen::Index in, Eigen::Index out, Rng& rng,
                      const std::string& name) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    typename Tensor<S>::Buffer w(in * out);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w[i] = static_cast<S>(rng.uniform(-bound, bound));
    }
    Dense d;
    d.weight = Tensor<S>::from_buffer({in, out}, std::move(w), true)
                   .set_name(name + ".w");
    d.bias = Tensor<S>::zeros({out}, true).set_name(name + ".b");
    return d;
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    return add(matmul(x, weight), bias);
  }

  void collect(std::vector<Tensor<S>>& out) const {
    out.push_back(weight);
    out.push_back(bias);
  }
};

/// Plain feed-forward net: tanh hidden layers, linear output. Rows of the
/// input are independent samples.
template <typename S>
class Mlp {
 public:
  Mlp() = default;

  /// sizes = {in, hidden..., out}; hidden may be empty for a linear map.
  Mlp(const std::vector<Eigen::Index>& sizes, Rng& rng, const std::string& name) {
    layers_.reserve(sizes.size() - 1);
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      layers_.push_back(Dense<S>::glorot(sizes[i], sizes[i + 1], rng,
                                         name + ".l" + std::to_string(i)));
    }
  }

  Tensor<S> operator()(Tensor<S> x) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = layers_[i](x);
      if (i + 1 < layers_.size()) x = tanh(x);
    }
    return x;
  }

  void collect(std::vector<Tensor<S>>& out) const {
    for (const auto& l : layers_) l.collect(out);
  }

  bool empty() const { return layers_.empty(); }

 private:
  std::vector<Dense<S>> layers_;
};

}  // namespace ssvae
