#include "ssvae/ukf.hpp"

#include "ssvae/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ssvae {

namespace {

struct SigmaPoints {
  Eigen::MatrixXd points;  // n x (2n+1)
  Eigen::VectorXd wm, wc;
};

SigmaPoints make_sigma_points(const UkfState& state, const UkfModel& model) {
  const int n = model.state_dim;
  const double lambda = model.alpha * model.alpha * (n + model.kappa) - n;

  Eigen::LLT<Eigen::MatrixXd> llt((n + lambda) * state.cov);
  if (llt.info() != Eigen::Success) {
    Eigen::MatrixXd jittered =
        (n + lambda) * (state.cov + 1e-9 * Eigen::MatrixXd::Identity(n, n));
    llt.compute(jittered);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error(
          "ukf_step: covariance is not positive definite even after jitter");
    }
  }
  Eigen::MatrixXd root = llt.matrixL();

  SigmaPoints sp;
  sp.points.resize(n, 2 * n + 1);
  sp.points.col(0) = state.mean;
  for (int i = 0; i < n; ++i) {
    sp.points.col(1 + i) = state.mean + root.col(i);
    sp.points.col(1 + n + i) = state.mean - root.col(i);
  }
  sp.wm = Eigen::VectorXd::Constant(2 * n + 1, 1.0 / (2.0 * (n + lambda)));
  sp.wc = sp.wm;
  sp.wm(0) = lambda / (n + lambda);
  sp.wc(0) = sp.wm(0) + (1.0 - model.alpha * model.alpha + model.beta);
  return sp;
}

}  // namespace

UkfStepResult ukf_step(const UkfState& state, const Eigen::VectorXd& observation,
                       const UkfModel& model) {
  const int n = model.state_dim;
  const int m = model.obs_dim;
  if (observation.size() != m) {
    throw std::invalid_argument("ukf_step: observation has " +
                                std::to_string(observation.size()) +
                                " entries, model expects " + std::to_string(m));
  }

  // predict
  SigmaPoints sp = make_sigma_points(state, model);
  Eigen::MatrixXd propagated(n, sp.points.cols());
  for (Eigen::Index i = 0; i < sp.points.cols(); ++i) {
    propagated.col(i) = model.transition(sp.points.col(i));
  }
  UkfState predicted;
  predicted.mean = propagated * sp.wm;
  Eigen::MatrixXd centered = propagated.colwise() - predicted.mean;
  predicted.cov = centered * sp.wc.asDiagonal() * centered.transpose();
  predicted.cov.diagonal() += model.process_noise;

  // predicted observation from fresh sigma points around the prior
  SigmaPoints spz = make_sigma_points(predicted, model);
  Eigen::MatrixXd obs_pts(m, spz.points.cols());
  for (Eigen::Index i = 0; i < spz.points.cols(); ++i) {
    obs_pts.col(i) = model.emission(spz.points.col(i));
  }
  Eigen::VectorXd obs_mean = obs_pts * spz.wm;
  Eigen::MatrixXd obs_centered = obs_pts.colwise() - obs_mean;
  Eigen::MatrixXd state_centered = spz.points.colwise() - predicted.mean;

  Eigen::MatrixXd innovation_cov =
      obs_centered * spz.wc.asDiagonal() * obs_centered.transpose();
  innovation_cov.diagonal() += model.obs_noise;
  Eigen::MatrixXd cross_cov =
      state_centered * spz.wc.asDiagonal() * obs_centered.transpose();

  Eigen::MatrixXd gain = innovation_cov.ldlt().solve(cross_cov.transpose()).transpose();

  UkfStepResult result;
  result.predicted_obs = obs_mean;
  result.posterior.mean = predicted.mean + gain * (observation - obs_mean);
  result.posterior.cov = predicted.cov - gain * innovation_cov * gain.transpose();
  // keep the estimate symmetric against roundoff
  result.posterior.cov =
      0.5 * (result.posterior.cov + result.posterior.cov.transpose());
  return result;
}

UkfTrack ukf_track(const Eigen::MatrixXd& observations, const UkfModel& model,
                   const UkfState& init) {
  const Eigen::Index T = observations.rows();
  UkfTrack track;
  track.predicted_obs.resize(T, model.obs_dim);
  track.filtered_means.resize(T, model.state_dim);
  UkfState state = init;
  for (Eigen::Index t = 0; t < T; ++t) {
    UkfStepResult step = ukf_step(state, observations.row(t).transpose(), model);
    track.predicted_obs.row(t) = step.predicted_obs.transpose();
    track.filtered_means.row(t) = step.posterior.mean.transpose();
    state = step.posterior;
  }
  return track;
}

FittedLinearSsm fit_linear_ssm(const std::vector<Eigen::MatrixXd>& blocks,
                               int state_dim) {
  if (blocks.empty()) throw ValidationError("fit_linear_ssm: no training blocks");
  const Eigen::Index C = blocks[0].cols();
  if (state_dim < 1 || state_dim > C) {
    throw ValidationError("fit_linear_ssm: state_dim must lie in [1, channels]");
  }

  Eigen::Index total = 0;
  for (const auto& b : blocks) total += b.rows();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(C);
  for (const auto& b : blocks) mean += b.colwise().sum().transpose();
  mean /= static_cast<double>(total);

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(C, C);
  for (const auto& b : blocks) {
    Eigen::MatrixXd centered = b.rowwise() - mean.transpose();
    cov += centered.transpose() * centered;
  }
  cov /= static_cast<double>(total);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  FittedLinearSsm ssm;
  ssm.channel_mean = mean;
  ssm.projection = eig.eigenvectors().rightCols(state_dim).rowwise().reverse();
  // deterministic sign: largest-magnitude entry of each column positive
  for (int k = 0; k < state_dim; ++k) {
    Eigen::Index at;
    ssm.projection.col(k).cwiseAbs().maxCoeff(&at);
    if (ssm.projection(at, k) < 0.0) ssm.projection.col(k) *= -1.0;
  }

  // least squares x_{t+1} ~ A x_t over all adjacent pairs
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(state_dim, state_dim);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(state_dim, state_dim);
  for (const auto& b : blocks) {
    Eigen::MatrixXd x =
        (b.rowwise() - mean.transpose()) * ssm.projection;  // T x d
    const Eigen::Index T = x.rows();
    gram += x.topRows(T - 1).transpose() * x.topRows(T - 1);
    cross += x.bottomRows(T - 1).transpose() * x.topRows(T - 1);
  }
  gram.diagonal().array() += 1e-9;
  ssm.dynamics = gram.ldlt().solve(cross.transpose()).transpose();

  // residual variances
  Eigen::VectorXd proc = Eigen::VectorXd::Zero(state_dim);
  Eigen::VectorXd obs = Eigen::VectorXd::Zero(C);
  Eigen::Index pairs = 0;
  for (const auto& b : blocks) {
    Eigen::MatrixXd centered = b.rowwise() - mean.transpose();
    Eigen::MatrixXd x = centered * ssm.projection;
    const Eigen::Index T = x.rows();
    Eigen::MatrixXd resid =
        x.bottomRows(T - 1) - x.topRows(T - 1) * ssm.dynamics.transpose();
    proc += resid.array().square().colwise().sum().matrix().transpose();
    pairs += T - 1;
    Eigen::MatrixXd recon_err = centered - x * ssm.projection.transpose();
    obs += recon_err.array().square().colwise().sum().matrix().transpose();
  }
  ssm.process_noise = (proc / static_cast<double>(pairs)).cwiseMax(1e-9);
  ssm.obs_noise = (obs / static_cast<double>(total)).cwiseMax(1e-9);
  return ssm;
}

UkfModel linear_ssm_ukf(const FittedLinearSsm& ssm, double alpha, double beta,
                        double kappa) {
  UkfModel model;
  model.state_dim = static_cast<int>(ssm.dynamics.rows());
  model.obs_dim = static_cast<int>(ssm.channel_mean.size());
  const Eigen::MatrixXd dynamics = ssm.dynamics;
  const Eigen::MatrixXd projection = ssm.projection;
  const Eigen::VectorXd mean = ssm.channel_mean;
  model.transition = [dynamics](const Eigen::VectorXd& x) { return dynamics * x; };
  model.emission = [projection, mean](const Eigen::VectorXd& x) {
    return mean + projection * x;
  };
  model.process_noise = ssm.process_noise;
  model.obs_noise = ssm.obs_noise;
  model.alpha = alpha;
  model.beta = beta;
  model.kappa = kappa;
  return model;
}

UkfState linear_ssm_init(const FittedLinearSsm& ssm) {
  const int d = static_cast<int>(ssm.dynamics.rows());
  UkfState init;
  init.mean = Eigen::VectorXd::Zero(d);
  init.cov = Eigen::MatrixXd::Identity(d, d);
  return init;
}

}  // namespace ssvae
