#pragma once

#include "ssvae/adam.hpp"
#include "ssvae/errors.hpp"
#include "ssvae/gaussian.hpp"
#include "ssvae/gmm.hpp"
#include "ssvae/mlp.hpp"
#include "ssvae/rng.hpp"
#include "ssvae/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ssvae {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kSigmaFloor = 1e-5;

/// Elementwise convex combination gamma * o + (1 - gamma) * o_hat.
template <typename DerivedA, typename DerivedB>
auto blend(const Eigen::MatrixBase<DerivedA>& o,
           const Eigen::MatrixBase<DerivedB>& o_hat, double gamma) {
  using Scalar = typename DerivedA::Scalar;
  if (gamma < 0.0 || gamma > 1.0) {
    throw ValidationError("blend: gamma " + std::to_string(gamma) +
                          " outside [0, 1]");
  }
  if (o.rows() != o_hat.rows() || o.cols() != o_hat.cols()) {
    throw ValidationError("blend: shapes differ");
  }
  return (static_cast<Scalar>(gamma) * o.derived() +
          static_cast<Scalar>(1.0 - gamma) * o_hat.derived())
      .eval();
}

/// Architecture and loss hyperparameters of the two-branch model.
struct SsvaeConfig {
  int obs_dim = 32;
  int latent_dim_r = 8;
  int latent_dim_u = 4;
  std::vector<Eigen::Index> hidden_trunk = {128, 128};
  std::vector<Eigen::Index> hidden_transition = {64, 64};
  std::vector<Eigen::Index> hidden_decoder = {64, 64};
  double alpha1 = 1.0;
  double alpha2 = 0.1;
  double alpha3 = 0.1;
  double gamma = 0.7;
  int smm_components = 3;
  int smm_window = 31;
  int smm_iters = 40;
};

template <typename S>
struct SsvaeParams {
  SsvaeConfig cfg;
  Mlp<S> trunk;            // obs -> trunk features (tanh applied by encode)
  Dense<S> u_head, r_head; // features -> (mean, raw stddev)
  Mlp<S> transition_net;   // (r, u) -> (mean, raw stddev) of next r
  Mlp<S> decoder_net;      // (r, u) -> observation mean

  static SsvaeParams init(const SsvaeConfig& cfg, std::uint64_t seed) {
    if (cfg.gamma < 0.0 || cfg.gamma > 1.0) {
      throw ValidationError("ssvae: gamma outside [0, 1]");
    }
    if (cfg.alpha1 <= 0.0 || cfg.alpha2 < 0.0 || cfg.alpha3 < 0.0) {
      throw ValidationError("ssvae: need alpha1 > 0 and alpha2, alpha3 >= 0");
    }
    Rng rng(mix_seed(seed, 0x55aeull));
    SsvaeParams p;
    p.cfg = cfg;
    std::vector<Eigen::Index> trunk_sizes{cfg.obs_dim};
    trunk_sizes.insert(trunk_sizes.end(), cfg.hidden_trunk.begin(),
                       cfg.hidden_trunk.end());
    p.trunk = Mlp<S>(trunk_sizes, rng, "trunk");
    const Eigen::Index feat = trunk_sizes.back();
    p.u_head = Dense<S>::glorot(feat, 2 * cfg.latent_dim_u, rng, "u_head");
    p.r_head = Dense<S>::glorot(feat, 2 * cfg.latent_dim_r, rng, "r_head");

    std::vector<Eigen::Index> trans_sizes{cfg.latent_dim_r + cfg.latent_dim_u};
    trans_sizes.insert(trans_sizes.end(), cfg.hidden_transition.begin(),
                       cfg.hidden_transition.end());
    trans_sizes.push_back(2 * cfg.latent_dim_r);
    p.transition_net = Mlp<S>(trans_sizes, rng, "transition");

    std::vector<Eigen::Index> dec_sizes{cfg.latent_dim_r + cfg.latent_dim_u};
    dec_sizes.insert(dec_sizes.end(), cfg.hidden_decoder.begin(),
                     cfg.hidden_decoder.end());
    dec_sizes.push_back(cfg.obs_dim);
    p.decoder_net = Mlp<S>(dec_sizes, rng, "decoder");
    return p;
  }

  std::vector<Tensor<S>> parameters() const {
    std::vector<Tensor<S>> out;
    trunk.collect(out);
    u_head.collect(out);
    r_head.collect(out);
    transition_net.collect(out);
    decoder_net.collect(out);
    return out;
  }
};

namespace detail {

/// Splits a [T x 2d] head output into a floored-stddev Gaussian stack.
template <typename S>
DiagGaussian<S> gaussian_from_head(const Tensor<S>& y, Eigen::Index d) {
  Tensor<S> mean = slice(y, 1, 0, d);
  Tensor<S> stddev = add(softplus(slice(y, 1, d, d)),
                         Tensor<S>::scalar(S(kSigmaFloor)));
  return DiagGaussian<S>(std::move(mean), std::move(stddev));
}

}  // namespace detail

/// Two-branch encoding of a [T x C] stack of frames: the shared trunk feeds
/// the u head (instantaneous branch) and the r head (observation-side
/// proposal for the background branch).
template <typename S>
std::pair<DiagGaussian<S>, DiagGaussian<S>> encode(const SsvaeParams<S>& params,
                                                   const Tensor<S>& obs) {
  Tensor<S> features = tanh(params.trunk(obs));
  return {detail::gaussian_from_head(params.u_head(features),
                                     params.cfg.latent_dim_u),
          detail::gaussian_from_head(params.r_head(features),
                                     params.cfg.latent_dim_r)};
}

/// p(r_t | r_{t-1}, u_{t-1}); the t = 1 case is the fixed standard normal.
template <typename S>
DiagGaussian<S> transition(const SsvaeParams<S>& params, const Tensor<S>& r_prev,
                           const Tensor<S>& u_prev) {
  Tensor<S> joint = concat<S>({r_prev, u_prev}, 1);
  return detail::gaussian_from_head(params.transition_net(joint),
                                    params.cfg.latent_dim_r);
}

template <typename S>
DiagGaussian<S> initial_prior(const SsvaeParams<S>& params) {
  return DiagGaussian<S>::standard(params.cfg.latent_dim_r);
}

template <typename S>
Tensor<S> decode(const SsvaeParams<S>& params, const Tensor<S>& r,
                 const Tensor<S>& u) {
  return params.decoder_net(concat<S>({r, u}, 1));
}

/// Precision-weighted product of the observation proposal and the transition
/// prior; the structured-inference surrogate for conditioning on p(r | u).
template <typename S>
DiagGaussian<S> fuse_gaussians(const DiagGaussian<S>& obs,
                               const DiagGaussian<S>& prior) {
  Tensor<S> prec_obs = S(1) / square(obs.stddev);
  Tensor<S> prec_prior = S(1) / square(prior.stddev);
  Tensor<S> prec = add(prec_obs, prec_prior);
  Tensor<S> mean =
      div(add(mul(obs.mean, prec_obs), mul(prior.mean, prec_prior)), prec);
  return DiagGaussian<S>(std::move(mean), sqrt(S(1) / prec));
}

/// Constant per-frame prior p(u') produced by the SMM path. Gradient-free by
/// contract: the loss consumes plain values.
template <typename S>
struct PriorSequence {
  MatX<S> mean;    // T x d_u
  MatX<S> stddev;  // T x d_u
};

/// SMM prior pipeline: diagonal-GMM EM on the blended frames, temporally
/// smoothed responsibilities, instantaneous component o_u, then the u branch
/// of the encoder evaluated on o_u rows.
template <typename S>
PriorSequence<S> prior_from_smm(const SsvaeParams<S>& params,
                                const Eigen::MatrixXd& blended,
                                std::uint64_t seed) {
  const Eigen::Index T = blended.rows();
  EmResult em = gmm_em_fit(blended, params.cfg.smm_components,
                           params.cfg.smm_iters, seed);
  Eigen::MatrixXd resp = gmm_responsibilities(blended, em.params);
  int window = std::min<int>(params.cfg.smm_window, static_cast<int>(T));
  if (window % 2 == 0) window -= 1;
  Eigen::MatrixXd smoothed = smooth_responsibilities(resp, std::max(window, 1));
  Eigen::MatrixXd o_u = smm_extract_instantaneous(blended, em.params, smoothed);

  NoGradGuard ng;
  auto [q_u, q_r] = encode(params, Tensor<S>::from_matrix(o_u.cast<S>()));
  (void)q_r;
  PriorSequence<S> prior;
  prior.mean = q_u.mean.matrix();
  prior.stddev = q_u.stddev.matrix();
  return prior;
}

template <typename S>
struct LossBreakdown {
  Tensor<S> total;  // scalar, differentiable
  double recon = 0.0, kl_r = 0.0, kl_u = 0.0;
};

/// Composite training objective over one window:
///   alpha1 * mean_t ||o_t - o_hat_t||^2
/// + alpha2 * mean_{t>=2} KL(q_r(t) || stopgrad q_r(t-1))
/// + alpha3 * mean_t    KL(q_u(t) || p(u'_t)).
/// The unroll samples with the reparameterization trick; `noise` must supply
/// the standard-normal draws so callers can hold them fixed across
/// perturbed evaluations.
template <typename S>
LossBreakdown<S> loss(const SsvaeParams<S>& params, const MatX<S>& obs,
                      const PriorSequence<S>& prior, Rng& noise) {
  const Eigen::Index T = obs.rows();
  const Eigen::Index dr = params.cfg.latent_dim_r;
  const Eigen::Index du = params.cfg.latent_dim_u;
  if (T < 2) throw ValidationError("loss: window must hold at least 2 frames");
  if (prior.mean.rows() != T || prior.mean.cols() != du) {
    throw ValidationError("loss: prior sequence does not match the window");
  }

  MatX<S> eps_u(T, du), eps_r(T, dr);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index j = 0; j < du; ++j) eps_u(t, j) = static_cast<S>(noise.normal());
    for (Eigen::Index j = 0; j < dr; ++j) eps_r(t, j) = static_cast<S>(noise.normal());
  }

  Tensor<S> x = Tensor<S>::from_matrix(obs);
  auto [q_u, q_r_obs] = encode(params, x);
  Tensor<S> u_all = add(q_u.mean, mul(q_u.stddev, Tensor<S>::from_matrix(eps_u)));

  std::vector<Tensor<S>> fused_mean_rows, fused_std_rows, r_rows;
  fused_mean_rows.reserve(T);
  fused_std_rows.reserve(T);
  r_rows.reserve(T);
  Tensor<S> r_prev, u_prev;
  for (Eigen::Index t = 0; t < T; ++t) {
    DiagGaussian<S> prior_r = (t == 0)
                                  ? initial_prior(params)
                                  : transition(params, r_prev, u_prev);
    DiagGaussian<S> obs_side(slice(q_r_obs.mean, 0, t, 1),
                             slice(q_r_obs.stddev, 0, t, 1));
    DiagGaussian<S> fused = fuse_gaussians(obs_side, prior_r);
    Tensor<S> eps_t = Tensor<S>::from_matrix(eps_r.row(t));
    Tensor<S> r_t = add(fused.mean, mul(fused.stddev, eps_t));
    fused_mean_rows.push_back(fused.mean);
    fused_std_rows.push_back(fused.stddev);
    r_rows.push_back(r_t);
    r_prev = r_t;
    u_prev = slice(u_all, 0, t, 1);
  }

  Tensor<S> r_all = concat<S>(r_rows, 0);
  Tensor<S> fused_mean = concat<S>(fused_mean_rows, 0);
  Tensor<S> fused_std = concat<S>(fused_std_rows, 0);
  Tensor<S> recon_hat = decode(params, r_all, u_all);

  Tensor<S> recon = div(sum(square(sub(recon_hat, x))),
                        Tensor<S>::scalar(static_cast<S>(T)));

  DiagGaussian<S> q_now(slice(fused_mean, 0, 1, T - 1),
                        slice(fused_std, 0, 1, T - 1));
  DiagGaussian<S> q_past(detach(slice(fused_mean, 0, 0, T - 1)),
                         detach(slice(fused_std, 0, 0, T - 1)));
  Tensor<S> kl_r = div(kl_diag_gauss(q_now, q_past),
                       Tensor<S>::scalar(static_cast<S>(T - 1)));

  DiagGaussian<S> prior_u(Tensor<S>::from_matrix(prior.mean),
                          Tensor<S>::from_matrix(prior.stddev));
  Tensor<S> kl_u = div(kl_diag_gauss(q_u, prior_u),
                       Tensor<S>::scalar(static_cast<S>(T)));

  LossBreakdown<S> out;
  out.recon = static_cast<double>(recon.item());
  out.kl_r = static_cast<double>(kl_r.item());
  out.kl_u = static_cast<double>(kl_u.item());
  out.total = add(add(static_cast<S>(params.cfg.alpha1) * recon,
                      static_cast<S>(params.cfg.alpha2) * kl_r),
                  static_cast<S>(params.cfg.alpha3) * kl_u);
  return out;
}

/// Variational sequence for one window: per-frame posteriors, the values
/// propagated through the unroll, and the reconstruction.
template <typename S>
struct LatentSequence {
  MatX<S> u_mean, u_std;  // q_u
  MatX<S> r_mean, r_std;  // fused q_r
  MatX<S> u_samples, r_samples;
  MatX<S> reconstruction;
};

/// Same unroll as the loss but propagating posterior means, no sampling.
template <typename S>
LatentSequence<S> infer_sequence(const SsvaeParams<S>& params, const MatX<S>& obs) {
  NoGradGuard ng;
  const Eigen::Index T = obs.rows();
  auto [q_u, q_r_obs] = encode(params, Tensor<S>::from_matrix(obs));

  std::vector<Tensor<S>> fused_mean_rows, fused_std_rows;
  Tensor<S> r_prev, u_prev;
  for (Eigen::Index t = 0; t < T; ++t) {
    DiagGaussian<S> prior_r = (t == 0)
                                  ? initial_prior(params)
                                  : transition(params, r_prev, u_prev);
    DiagGaussian<S> obs_side(slice(q_r_obs.mean, 0, t, 1),
                             slice(q_r_obs.stddev, 0, t, 1));
    DiagGaussian<S> fused = fuse_gaussians(obs_side, prior_r);
    fused_mean_rows.push_back(fused.mean);
    fused_std_rows.push_back(fused.stddev);
    r_prev = fused.mean;
    u_prev = slice(q_u.mean, 0, t, 1);
  }
  Tensor<S> r_all = concat<S>(fused_mean_rows, 0);
  Tensor<S> recon = decode(params, r_all, q_u.mean);

  LatentSequence<S> seq;
  seq.u_mean = q_u.mean.matrix();
  seq.u_std = q_u.stddev.matrix();
  seq.r_mean = r_all.matrix();
  seq.r_std = concat<S>(fused_std_rows, 0).matrix();
  seq.u_samples = seq.u_mean;
  seq.r_samples = seq.r_mean;
  seq.reconstruction = recon.matrix();
  return seq;
}

/// Monte-Carlo ELBO diagnostic with a unit-variance Gaussian likelihood:
///   E_q[log p(o | r, u)] - E_q[KL(q_r || transition prior)]
///   - KL(q_u || p(u')).
/// The estimate is the mean of n_samples single-sample evaluations.
template <typename S>
double elbo(const SsvaeParams<S>& params, const MatX<S>& obs,
            const PriorSequence<S>& prior, int n_samples, std::uint64_t seed) {
  NoGradGuard ng;
  const Eigen::Index T = obs.rows();
  const Eigen::Index C = obs.cols();
  const Eigen::Index dr = params.cfg.latent_dim_r;
  const Eigen::Index du = params.cfg.latent_dim_u;
  Rng noise(mix_seed(seed, 0xe1b0ull));

  Tensor<S> x = Tensor<S>::from_matrix(obs);
  auto [q_u, q_r_obs] = encode(params, x);
  DiagGaussian<S> prior_u(Tensor<S>::from_matrix(prior.mean),
                          Tensor<S>::from_matrix(prior.stddev));
  const double kl_u_total = static_cast<double>(kl_diag_gauss(q_u, prior_u).item());

  double acc = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    MatX<S> eps_u(T, du), eps_r(T, dr);
    for (Eigen::Index t = 0; t < T; ++t) {
      for (Eigen::Index j = 0; j < du; ++j) eps_u(t, j) = static_cast<S>(noise.normal());
      for (Eigen::Index j = 0; j < dr; ++j) eps_r(t, j) = static_cast<S>(noise.normal());
    }
    Tensor<S> u_all = add(q_u.mean, mul(q_u.stddev, Tensor<S>::from_matrix(eps_u)));

    double kl_r_total = 0.0;
    std::vector<Tensor<S>> r_rows;
    Tensor<S> r_prev, u_prev;
    for (Eigen::Index t = 0; t < T; ++t) {
      DiagGaussian<S> prior_r = (t == 0)
                                    ? initial_prior(params)
                                    : transition(params, r_prev, u_prev);
      DiagGaussian<S> obs_side(slice(q_r_obs.mean, 0, t, 1),
                               slice(q_r_obs.stddev, 0, t, 1));
      DiagGaussian<S> fused = fuse_gaussians(obs_side, prior_r);
      kl_r_total += static_cast<double>(kl_diag_gauss(fused, prior_r).item());
      Tensor<S> r_t = add(fused.mean,
                          mul(fused.stddev, Tensor<S>::from_matrix(eps_r.row(t))));
      r_rows.push_back(r_t);
      r_prev = r_t;
      u_prev = slice(u_all, 0, t, 1);
    }
    Tensor<S> recon = decode(params, concat<S>(r_rows, 0), u_all);
    const double sq = static_cast<double>(
        sum(square(sub(recon, x))).item());
    const double log_lik =
        -kHalfLog2Pi * static_cast<double>(T * C) - 0.5 * sq;
    acc += log_lik - kl_r_total - kl_u_total;
  }
  return acc / n_samples;
}

struct EpochStats {
  double total = 0.0, recon = 0.0, kl_r = 0.0, kl_u = 0.0;
};

template <typename S>
struct TrainSettings {
  S learning_rate = S(1e-3);
  int epochs = 50;
  std::uint64_t seed = 7;
};

/// Epochs over shuffled windows; the SMM prior is refreshed once per window
/// per epoch from the current model's reconstruction (Eq.-style blending
/// with the configured gamma).
template <typename S>
std::vector<EpochStats> fit(SsvaeParams<S>& params,
                            const std::vector<MatX<S>>& windows,
                            const TrainSettings<S>& settings) {
  if (windows.empty()) throw ValidationError("fit: no training windows");
  std::vector<Tensor<S>> tensors = params.parameters();
  AdamState<S> adam;
  adam.learning_rate = settings.learning_rate;

  std::vector<EpochStats> curve;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    std::vector<std::size_t> order(windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(settings.seed, 0x0dceull, epoch));
    shuffle_rng.shuffle(order);

    EpochStats stats;
    for (std::size_t w : order) {
      const MatX<S>& obs = windows[w];
      LatentSequence<S> seq = infer_sequence(params, obs);
      MatX<S> blended = blend(obs, seq.reconstruction, params.cfg.gamma);
      PriorSequence<S> prior = prior_from_smm(
          params, blended.template cast<double>(),
          mix_seed(settings.seed, 0x9309ull, epoch * windows.size() + w));
      Rng noise(mix_seed(settings.seed, 0x2015ull, epoch * windows.size() + w));
      LossBreakdown<S> parts = loss(params, obs, prior, noise);
      const double total = static_cast<double>(parts.total.item());
      if (!std::isfinite(total) || total > 1e6) {
        throw DivergenceError("fit: loss diverged at epoch " +
                                  std::to_string(epoch) + " (value " +
                                  std::to_string(total) + ")",
                              epoch);
      }
      parts.total.backward();
      adam_step(tensors, adam);
      stats.total += total;
      stats.recon += parts.recon;
      stats.kl_r += parts.kl_r;
      stats.kl_u += parts.kl_u;
    }
    const double inv = 1.0 / static_cast<double>(windows.size());
    stats.total *= inv;
    stats.recon *= inv;
    stats.kl_r *= inv;
    stats.kl_u *= inv;
    curve.push_back(stats);
  }
  return curve;
}

}  // namespace ssvae
