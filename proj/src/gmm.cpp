#include "ssvae/gmm.hpp"

#include "ssvae/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ssvae {

namespace {

// Per-frame, per-component log densities: log w_k + log N(x_t; mu_k, var_k).
Eigen::MatrixXd component_log_densities(const Eigen::MatrixXd& frames,
                                        const GmmParams& params) {
  const Eigen::Index T = frames.rows();
  const Eigen::Index K = params.means.rows();
  const double half_log_2pi = 0.9189385332046727;
  Eigen::MatrixXd logp(T, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::RowVectorXd mu = params.means.row(k);
    const Eigen::RowVectorXd var = params.variances.row(k);
    const double log_norm = std::log(params.weights[k]) -
                            half_log_2pi * static_cast<double>(frames.cols()) -
                            0.5 * var.array().log().sum();
    logp.col(k) =
        ((frames.rowwise() - mu).array().square().rowwise() / (2.0 * var.array()))
            .rowwise()
            .sum() *
        -1.0;
    logp.col(k).array() += log_norm;
  }
  return logp;
}

Eigen::VectorXd row_logsumexp(const Eigen::MatrixXd& logp) {
  Eigen::VectorXd m = logp.rowwise().maxCoeff();
  return m.array() +
         (logp.colwise() - m).array().exp().rowwise().sum().log();
}

// k-means++-style seeding: first mean uniform, then proportional to the
// squared distance from the closest chosen mean.
Eigen::MatrixXd seed_means(const Eigen::MatrixXd& frames, int K, Rng& rng) {
  const Eigen::Index T = frames.rows();
  Eigen::MatrixXd means(K, frames.cols());
  means.row(0) = frames.row(static_cast<Eigen::Index>(rng.uniform_index(T)));
  Eigen::VectorXd dist2 =
      (frames.rowwise() - means.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < K; ++k) {
    const double total = dist2.sum();
    Eigen::Index pick;
    if (total <= 0.0) {
      pick = static_cast<Eigen::Index>(rng.uniform_index(T));
    } else {
      double target = rng.uniform() * total;
      pick = T - 1;
      for (Eigen::Index t = 0; t < T; ++t) {
        target -= dist2[t];
        if (target <= 0.0) {
          pick = t;
          break;
        }
      }
    }
    means.row(k) = frames.row(pick);
    dist2 = dist2.cwiseMin(
        (frames.rowwise() - means.row(k)).rowwise().squaredNorm());
  }
  return means;
}

}  // namespace

Eigen::MatrixXd gmm_responsibilities(const Eigen::MatrixXd& frames,
                                     const GmmParams& params) {
  if (frames.cols() != params.means.cols()) {
    throw std::invalid_argument(
        "gmm_responsibilities: frames have " + std::to_string(frames.cols()) +
        " channels, mixture has " + std::to_string(params.means.cols()));
  }
  Eigen::MatrixXd logp = component_log_densities(frames, params);
  Eigen::VectorXd norm = row_logsumexp(logp);
  return (logp.colwise() - norm).array().exp();
}

double gmm_log_likelihood(const Eigen::MatrixXd& frames, const GmmParams& params) {
  return row_logsumexp(component_log_densities(frames, params)).sum();
}

EmResult gmm_em_fit(const Eigen::MatrixXd& frames, int components, int max_iters,
                    std::uint64_t seed) {
  const Eigen::Index T = frames.rows();
  const Eigen::Index C = frames.cols();
  if (components < 2) {
    throw std::invalid_argument("gmm_em_fit: need at least 2 components, got " +
                                std::to_string(components));
  }
  if (T < components) {
    throw std::invalid_argument("gmm_em_fit: " + std::to_string(T) +
                                " frames cannot support " +
                                std::to_string(components) + " components");
  }

  Rng rng(seed);
  EmResult result;
  GmmParams& p = result.params;
  p.weights = Eigen::VectorXd::Constant(components, 1.0 / components);
  p.means = seed_means(frames, components, rng);
  Eigen::RowVectorXd data_mean = frames.colwise().mean();
  Eigen::RowVectorXd data_var =
      ((frames.rowwise() - data_mean).array().square().colwise().sum() /
       static_cast<double>(T))
          .matrix()
          .cwiseMax(kGmmVarianceFloor);
  p.variances = data_var.replicate(components, 1);

  for (int iter = 0; iter < max_iters; ++iter) {
    // E-step
    Eigen::MatrixXd logp = component_log_densities(frames, p);
    Eigen::VectorXd norm = row_logsumexp(logp);
    result.log_likelihood.push_back(norm.sum());
    Eigen::MatrixXd resp = (logp.colwise() - norm).array().exp();

    // Re-seed any effectively empty component at the worst-explained frame.
    Eigen::VectorXd counts = resp.colwise().sum();
    bool reseeded = false;
    for (int k = 0; k < components; ++k) {
      if (counts[k] < 1e-8) {
        Eigen::Index worst;
        norm.minCoeff(&worst);
        p.means.row(k) = frames.row(worst);
        p.variances.row(k) = data_var;
        reseeded = true;
      }
    }
    if (reseeded) {
      logp = component_log_densities(frames, p);
      norm = row_logsumexp(logp);
      resp = (logp.colwise() - norm).array().exp();
      counts = resp.colwise().sum();
    }

    // M-step
    p.weights = counts / static_cast<double>(T);
    for (int k = 0; k < components; ++k) {
      const double nk = std::max(counts[k], 1e-12);
      Eigen::RowVectorXd mu = (resp.col(k).transpose() * frames) / nk;
      Eigen::RowVectorXd second =
          (resp.col(k).transpose() * frames.array().square().matrix()) / nk;
      p.means.row(k) = mu;
      p.variances.row(k) =
          (second - mu.array().square().matrix()).cwiseMax(kGmmVarianceFloor);
    }
    (void)C;
  }
  result.log_likelihood.push_back(gmm_log_likelihood(frames, p));
  return result;
}

Eigen::MatrixXd smooth_responsibilities(const Eigen::MatrixXd& resp, int window) {
  if (window < 1 || window % 2 == 0) {
    throw std::invalid_argument("smooth_responsibilities: window must be odd, got " +
                                std::to_string(window));
  }
  const Eigen::Index T = resp.rows();
  if (window > T) {
    throw std::invalid_argument("smooth_responsibilities: window " +
                                std::to_string(window) + " exceeds " +
                                std::to_string(T) + " frames");
  }
  const Eigen::Index half = window / 2;
  Eigen::MatrixXd out(T, resp.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, t - half);
    const Eigen::Index hi = std::min<Eigen::Index>(T - 1, t + half);
    out.row(t) = resp.middleRows(lo, hi - lo + 1).colwise().mean();
    out.row(t) /= out.row(t).sum();
  }
  return out;
}

int smm_background_component(const Eigen::MatrixXd& smoothed) {
  Eigen::RowVectorXd avg = smoothed.colwise().mean();
  int best = 0;
  for (int k = 1; k < avg.size(); ++k) {
    if (avg[k] > avg[best]) best = k;  // strict: ties keep the lowest index
  }
  return best;
}

Eigen::MatrixXd smm_extract_instantaneous(const Eigen::MatrixXd& frames,
                                          const GmmParams& params,
                                          const Eigen::MatrixXd& smoothed) {
  const int b = smm_background_component(smoothed);
  Eigen::MatrixXd deviation = frames.rowwise() - params.means.row(b).eval();
  return deviation.array().colwise() * (1.0 - smoothed.col(b).array());
}

double mixture_weight_entropy(const GmmParams& params) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < params.weights.size(); ++k) {
    const double w = params.weights[k];
    if (w > 0.0) h -= w * std::log(w);
  }
  return h;
}

}  // namespace ssvae
