#pragma once

#include "ssvae/tensor.hpp"

#include <Eigen/Dense>

namespace ssvae {

/// Diagonal Gaussian as a (mean, stddev) tensor pair. mean and stddev share
/// a shape: either a [d] vector or a [T x d] stack of per-frame Gaussians.
/// stddev entries must be strictly positive; network heads guarantee this
/// via softplus(raw) + 1e-5.
template <typename S>
struct DiagGaussian {
  Tensor<S> mean;
  Tensor<S> stddev;

  DiagGaussian() = default;
  DiagGaussian(Tensor<S> m, Tensor<S> s) : mean(std::move(m)), stddev(std::move(s)) {
    check_shapes(mean.shape() == stddev.shape(), "diag_gaussian", mean.shape(),
                 stddev.shape());
  }

  template <typename Derived>
  static DiagGaussian from_vectors(const Eigen::MatrixBase<Derived>& m,
                                   const Eigen::MatrixBase<Derived>& s) {
    return DiagGaussian(Tensor<S>::from_vector(m), Tensor<S>::from_vector(s));
  }

  static DiagGaussian standard(Eigen::Index dim) {
    return DiagGaussian(Tensor<S>::zeros({1, dim}), Tensor<S>::filled({1, dim}, S(1)));
  }

  Eigen::Index dim() const { return mean.cols(); }
  Eigen::Index frames() const { return mean.rows(); }

  DiagGaussian detached() const {
    return DiagGaussian(detach(mean), detach(stddev));
  }
};

inline constexpr double kHalfLog2Pi = 0.9189385332046727;  // log(2*pi)/2

/// Sum over coordinates of the diagonal-Gaussian log density:
///   sum_i [ -log(2*pi)/2 - log(s_i) - (x_i - m_i)^2 / (2 s_i^2) ].
/// Differentiable through both the point and the distribution.
template <typename S>
Tensor<S> gauss_logpdf_diag(const Tensor<S>& x, const DiagGaussian<S>& dist) {
  check_shapes(x.shape() == dist.mean.shape(), "gauss_logpdf_diag", x.shape(),
               dist.mean.shape());
  Tensor<S> z = sub(x, dist.mean);
  Tensor<S> quad = div(square(z), S(2) * square(dist.stddev));
  Tensor<S> terms = add(log(dist.stddev), quad);
  return sub(Tensor<S>::scalar(-S(kHalfLog2Pi) * static_cast<S>(x.numel())),
             sum(terms));
}

/// Closed-form KL(q || p) for diagonal Gaussians, summed over coordinates
/// (and frames, when the pair holds [T x d] stacks):
///   sum_i [ log(sp_i/sq_i) + (sq_i^2 + (mq_i - mp_i)^2) / (2 sp_i^2) - 1/2 ].
template <typename S>
Tensor<S> kl_diag_gauss(const DiagGaussian<S>& q, const DiagGaussian<S>& p) {
  check_shapes(q.mean.shape() == p.mean.shape(), "kl_diag_gauss",
               q.mean.shape(), p.mean.shape());
  Tensor<S> var_q = square(q.stddev);
  Tensor<S> dmean = sub(q.mean, p.mean);
  Tensor<S> ratio = div(add(var_q, square(dmean)), S(2) * square(p.stddev));
  Tensor<S> terms = add(sub(log(p.stddev), log(q.stddev)), ratio);
  return sub(sum(terms), Tensor<S>::scalar(S(0.5) * static_cast<S>(q.mean.numel())));
}

}  // namespace ssvae
