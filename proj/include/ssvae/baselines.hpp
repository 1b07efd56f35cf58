#pragma once

#include "ssvae/adam.hpp"
#include "ssvae/errors.hpp"
#include "ssvae/gaussian.hpp"
#include "ssvae/mlp.hpp"
#include "ssvae/rng.hpp"
#include "ssvae/ssvae.hpp"
#include "ssvae/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ssvae {

// ---------------------------------------------------------------------------
// frame-independent VAE

struct VanillaVaeConfig {
  int obs_dim = 32;
  int latent_dim = 12;
  std::vector<Eigen::Index> hidden_encoder = {128, 128};
  std::vector<Eigen::Index> hidden_decoder = {64, 64};
  double kl_weight = 1.0;
};

template <typename S>
struct VanillaVaeParams {
  VanillaVaeConfig cfg;
  Mlp<S> encoder;     // obs -> features (tanh applied outside)
  Dense<S> head;      // features -> (mean, raw stddev)
  Mlp<S> decoder;     // latent -> obs

  static VanillaVaeParams init(const VanillaVaeConfig& cfg, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0xa11ull));
    VanillaVaeParams p;
    p.cfg = cfg;
    std::vector<Eigen::Index> enc{cfg.obs_dim};
    enc.insert(enc.end(), cfg.hidden_encoder.begin(), cfg.hidden_encoder.end());
    p.encoder = Mlp<S>(enc, rng, "vae_enc");
    p.head = Dense<S>::glorot(enc.back(), 2 * cfg.latent_dim, rng, "vae_head");
    std::vector<Eigen::Index> dec{cfg.latent_dim};
    dec.insert(dec.end(), cfg.hidden_decoder.begin(), cfg.hidden_decoder.end());
    dec.push_back(cfg.obs_dim);
    p.decoder = Mlp<S>(dec, rng, "vae_dec");
    return p;
  }

  std::vector<Tensor<S>> parameters() const {
    std::vector<Tensor<S>> out;
    encoder.collect(out);
    head.collect(out);
    decoder.collect(out);
    return out;
  }
};

template <typename S>
DiagGaussian<S> vanilla_vae_encode(const VanillaVaeParams<S>& params,
                                   const Tensor<S>& obs) {
  Tensor<S> features = tanh(params.encoder(obs));
  return detail::gaussian_from_head(params.head(features), params.cfg.latent_dim);
}

template <typename S>
struct VaeLossBreakdown {
  Tensor<S> total;
  double recon = 0.0, kl = 0.0;
};

/// Per-frame VAE objective: mean squared reconstruction per frame plus the
/// KL of each frame's posterior to N(0, I), averaged over frames.
template <typename S>
VaeLossBreakdown<S> vanilla_vae_loss(const VanillaVaeParams<S>& params,
                                     const MatX<S>& obs, Rng& noise) {
  const Eigen::Index T = obs.rows();
  const Eigen::Index L = params.cfg.latent_dim;
  MatX<S> eps(T, L);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index j = 0; j < L; ++j) eps(t, j) = static_cast<S>(noise.normal());
  }
  Tensor<S> x = Tensor<S>::from_matrix(obs);
  DiagGaussian<S> q = vanilla_vae_encode(params, x);
  Tensor<S> z = add(q.mean, mul(q.stddev, Tensor<S>::from_matrix(eps)));
  Tensor<S> recon_hat = params.decoder(z);
  Tensor<S> recon = div(sum(square(sub(recon_hat, x))),
                        Tensor<S>::scalar(static_cast<S>(T)));
  DiagGaussian<S> std_normal(Tensor<S>::zeros({T, L}), Tensor<S>::filled({T, L}, S(1)));
  Tensor<S> kl = div(kl_diag_gauss(q, std_normal),
                     Tensor<S>::scalar(static_cast<S>(T)));
  VaeLossBreakdown<S> out;
  out.recon = static_cast<double>(recon.item());
  out.kl = static_cast<double>(kl.item());
  out.total = add(recon, static_cast<S>(params.cfg.kl_weight) * kl);
  return out;
}

/// Mean-path reconstruction and posterior for evaluation.
template <typename S>
LatentSequence<S> vanilla_vae_reconstruct(const VanillaVaeParams<S>& params,
                                          const MatX<S>& obs) {
  NoGradGuard ng;
  DiagGaussian<S> q = vanilla_vae_encode(params, Tensor<S>::from_matrix(obs));
  Tensor<S> recon = params.decoder(q.mean);
  LatentSequence<S> seq;
  seq.u_mean = q.mean.matrix();
  seq.u_std = q.stddev.matrix();
  seq.r_mean = seq.u_mean;
  seq.r_std = seq.u_std;
  seq.u_samples = seq.u_mean;
  seq.r_samples = seq.r_mean;
  seq.reconstruction = recon.matrix();
  return seq;
}

// ---------------------------------------------------------------------------
// recurrent VAE (the LSTM-VAE role, realized with a GRU cell)

struct RecurrentVaeConfig {
  int obs_dim = 32;
  int latent_dim = 12;
  int hidden_dim = 64;
  std::vector<Eigen::Index> hidden_decoder = {64, 64};
  double kl_weight = 1.0;
};

template <typename S>
struct GruCell {
  Dense<S> update_x, update_h;  // z gate
  Dense<S> reset_x, reset_h;    // r gate
  Dense<S> cand_x, cand_h;      // candidate state

  static GruCell init(Eigen::Index in, Eigen::Index hidden, Rng& rng,
                      const std::string& name) {
    GruCell c;
    c.update_x = Dense<S>::glorot(in, hidden, rng, name + ".zx");
    c.update_h = Dense<S>::glorot(hidden, hidden, rng, name + ".zh");
    c.reset_x = Dense<S>::glorot(in, hidden, rng, name + ".rx");
    c.reset_h = Dense<S>::glorot(hidden, hidden, rng, name + ".rh");
    c.cand_x = Dense<S>::glorot(in, hidden, rng, name + ".nx");
    c.cand_h = Dense<S>::glorot(hidden, hidden, rng, name + ".nh");
    return c;
  }

  Tensor<S> operator()(const Tensor<S>& x, const Tensor<S>& h) const {
    Tensor<S> z = sigmoid(add(update_x(x), update_h(h)));
    Tensor<S> r = sigmoid(add(reset_x(x), reset_h(h)));
    Tensor<S> n = tanh(add(cand_x(x), cand_h(mul(r, h))));
    return add(mul(sub(Tensor<S>::scalar(S(1)), z), n), mul(z, h));
  }

  void collect(std::vector<Tensor<S>>& out) const {
    update_x.collect(out);
    update_h.collect(out);
    reset_x.collect(out);
    reset_h.collect(out);
    cand_x.collect(out);
    cand_h.collect(out);
  }
};

template <typename S>
struct RecurrentVaeParams {
  RecurrentVaeConfig cfg;
  GruCell<S> cell;
  Dense<S> head;   // hidden -> (mean, raw stddev)
  Mlp<S> decoder;  // latent -> obs

  static RecurrentVaeParams init(const RecurrentVaeConfig& cfg, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x9820ull));
    RecurrentVaeParams p;
    p.cfg = cfg;
    p.cell = GruCell<S>::init(cfg.obs_dim, cfg.hidden_dim, rng, "rnn_cell");
    p.head = Dense<S>::glorot(cfg.hidden_dim, 2 * cfg.latent_dim, rng, "rnn_head");
    std::vector<Eigen::Index> dec{cfg.latent_dim};
    dec.insert(dec.end(), cfg.hidden_decoder.begin(), cfg.hidden_decoder.end());
    dec.push_back(cfg.obs_dim);
    p.decoder = Mlp<S>(dec, rng, "rnn_dec");
    return p;
  }

  std::vector<Tensor<S>> parameters() const {
    std::vector<Tensor<S>> out;
    cell.collect(out);
    head.collect(out);
    decoder.collect(out);
    return out;
  }
};

/// Left-to-right pass producing per-step posteriors; hidden state starts at
/// zero, so step 1 depends on o_1 alone.
template <typename S>
DiagGaussian<S> recurrent_vae_encode(const RecurrentVaeParams<S>& params,
                                     const Tensor<S>& obs) {
  const Eigen::Index T = obs.rows();
  Tensor<S> h = Tensor<S>::zeros({1, params.cfg.hidden_dim});
  std::vector<Tensor<S>> head_rows;
  head_rows.reserve(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    h = params.cell(slice(obs, 0, t, 1), h);
    head_rows.push_back(params.head(h));
  }
  return detail::gaussian_from_head(concat<S>(head_rows, 0),
                                    params.cfg.latent_dim);
}

template <typename S>
VaeLossBreakdown<S> recurrent_vae_loss(const RecurrentVaeParams<S>& params,
                                       const MatX<S>& obs, Rng& noise) {
  const Eigen::Index T = obs.rows();
  const Eigen::Index L = params.cfg.latent_dim;
  MatX<S> eps(T, L);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index j = 0; j < L; ++j) eps(t, j) = static_cast<S>(noise.normal());
  }
  Tensor<S> x = Tensor<S>::from_matrix(obs);
  DiagGaussian<S> q = recurrent_vae_encode(params, x);
  Tensor<S> z = add(q.mean, mul(q.stddev, Tensor<S>::from_matrix(eps)));
  Tensor<S> recon_hat = params.decoder(z);
  Tensor<S> recon = div(sum(square(sub(recon_hat, x))),
                        Tensor<S>::scalar(static_cast<S>(T)));
  DiagGaussian<S> std_normal(Tensor<S>::zeros({T, L}), Tensor<S>::filled({T, L}, S(1)));
  Tensor<S> kl = div(kl_diag_gauss(q, std_normal),
                     Tensor<S>::scalar(static_cast<S>(T)));
  VaeLossBreakdown<S> out;
  out.recon = static_cast<double>(recon.item());
  out.kl = static_cast<double>(kl.item());
  out.total = add(recon, static_cast<S>(params.cfg.kl_weight) * kl);
  return out;
}

template <typename S>
LatentSequence<S> recurrent_vae_reconstruct(const RecurrentVaeParams<S>& params,
                                            const MatX<S>& obs) {
  NoGradGuard ng;
  DiagGaussian<S> q = recurrent_vae_encode(params, Tensor<S>::from_matrix(obs));
  Tensor<S> recon = params.decoder(q.mean);
  LatentSequence<S> seq;
  seq.u_mean = q.mean.matrix();
  seq.u_std = q.stddev.matrix();
  seq.r_mean = seq.u_mean;
  seq.r_std = seq.u_std;
  seq.u_samples = seq.u_mean;
  seq.r_samples = seq.r_mean;
  seq.reconstruction = recon.matrix();
  return seq;
}

// ---------------------------------------------------------------------------
// shared training loop for the two VAE baselines

template <typename S, typename Params, typename LossFn>
std::vector<EpochStats> fit_vae(Params& params, const std::vector<MatX<S>>& windows,
                                LossFn&& loss_fn, double learning_rate, int epochs,
                                std::uint64_t seed) {
  if (windows.empty()) throw ValidationError("fit: no training windows");
  std::vector<Tensor<S>> tensors = params.parameters();
  AdamState<S> adam;
  adam.learning_rate = static_cast<S>(learning_rate);

  std::vector<EpochStats> curve;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order(windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(seed, 0x0dceull, epoch));
    shuffle_rng.shuffle(order);

    EpochStats stats;
    for (std::size_t w : order) {
      Rng noise(mix_seed(seed, 0x2015ull, epoch * windows.size() + w));
      auto parts = loss_fn(params, windows[w], noise);
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
      stats.kl_r += parts.kl;
    }
    const double inv = 1.0 / static_cast<double>(windows.size());
    stats.total *= inv;
    stats.recon *= inv;
    stats.kl_r *= inv;
    curve.push_back(stats);
  }
  return curve;
}

}  // namespace ssvae
