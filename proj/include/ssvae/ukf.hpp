#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace ssvae {

/// Unscented Kalman filter over a user-supplied (possibly nonlinear) system
/// with diagonal process and observation noise.
struct UkfModel {
  int state_dim = 0;
  int obs_dim = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> transition;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> emission;
  Eigen::VectorXd process_noise;  // diagonal of Q
  Eigen::VectorXd obs_noise;      // diagonal of R
  double alpha = 0.1;
  double beta = 2.0;
  double kappa = 0.0;
};

struct UkfState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct UkfStepResult {
  UkfState posterior;
  Eigen::VectorXd predicted_obs;  // one-step-ahead, before the update
};

/// One predict + update cycle with 2n+1 sigma points. A failed Cholesky is
/// retried once with 1e-9 jitter on the diagonal, then reported as an error.
UkfStepResult ukf_step(const UkfState& state, const Eigen::VectorXd& observation,
                       const UkfModel& model);

struct UkfTrack {
  Eigen::MatrixXd predicted_obs;   // T x obs_dim
  Eigen::MatrixXd filtered_means;  // T x state_dim (posterior means)
};

/// Sequential filtering over a block; row t of predicted_obs is the
/// prediction made before seeing observation t.
UkfTrack ukf_track(const Eigen::MatrixXd& observations, const UkfModel& model,
                   const UkfState& init);

/// Linear-Gaussian system identified from training observations: a PCA
/// projection to `state_dim` modes, least-squares state dynamics, and
/// residual-variance noise estimates. Gives the filter a data-fitted model.
struct FittedLinearSsm {
  Eigen::VectorXd channel_mean;  // C
  Eigen::MatrixXd projection;    // C x state_dim, orthonormal columns
  Eigen::MatrixXd dynamics;      // state_dim x state_dim
  Eigen::VectorXd process_noise; // state_dim
  Eigen::VectorXd obs_noise;     // C
};

FittedLinearSsm fit_linear_ssm(const std::vector<Eigen::MatrixXd>& blocks,
                               int state_dim);

/// UkfModel view of a fitted linear system with the given sigma parameters.
UkfModel linear_ssm_ukf(const FittedLinearSsm& ssm, double alpha = 0.1,
                        double beta = 2.0, double kappa = 0.0);

/// Stationary-ish initial state for a fitted system: zero mean, identity
/// covariance scaled by the empirical state variance.
UkfState linear_ssm_init(const FittedLinearSsm& ssm);

}  // namespace ssvae
