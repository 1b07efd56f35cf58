#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace ssvae {

/// K-component diagonal-covariance Gaussian mixture over C-channel frames.
struct GmmParams {
  Eigen::VectorXd weights;    // K, on the simplex
  Eigen::MatrixXd means;      // K x C
  Eigen::MatrixXd variances;  // K x C, floored at kGmmVarianceFloor
};

inline constexpr double kGmmVarianceFloor = 1e-6;

struct EmResult {
  GmmParams params;
  std::vector<double> log_likelihood;  // one entry per iteration
};

/// Fits a diagonal GMM by EM with k-means++-style seeding from the given
/// seed. Components left empty by an E-step are re-seeded at the frame the
/// current mixture explains worst. The log-likelihood sequence is
/// non-decreasing up to 1e-7 slack.
EmResult gmm_em_fit(const Eigen::MatrixXd& frames, int components, int max_iters,
                    std::uint64_t seed);

/// E-step responsibilities, normalized per row in log space. Rows sum to 1.
Eigen::MatrixXd gmm_responsibilities(const Eigen::MatrixXd& frames,
                                     const GmmParams& params);

/// Total data log-likelihood under the mixture.
double gmm_log_likelihood(const Eigen::MatrixXd& frames, const GmmParams& params);

/// Centered per-column moving average with shrinking windows at the edges,
/// rows re-normalized onto the simplex. Window must be odd.
Eigen::MatrixXd smooth_responsibilities(const Eigen::MatrixXd& resp, int window);

/// Instantaneous observation component: with b* the component of highest
/// time-averaged smoothed responsibility (ties -> lowest index),
///   o_u[t] = (1 - smoothed[t, b*]) * (frames[t] - means[b*]).
Eigen::MatrixXd smm_extract_instantaneous(const Eigen::MatrixXd& frames,
                                          const GmmParams& params,
                                          const Eigen::MatrixXd& smoothed);

/// Index b* used by smm_extract_instantaneous.
int smm_background_component(const Eigen::MatrixXd& smoothed);

/// Shannon entropy of the mixture weights (nats). Collapse diagnostic only;
/// no threshold is attached.
double mixture_weight_entropy(const GmmParams& params);

}  // namespace ssvae
