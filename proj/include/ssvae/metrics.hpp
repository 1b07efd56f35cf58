#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace ssvae {

/// Relative prediction error: channel-averaged sqrt of the ratio between
/// residual energy and observed energy. 1 corresponds to predicting the
/// (zero) mean. Rejects all-zero observed channels.
double rpe(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& observed);

/// Per-channel sqrt(sum_t residual^2 / sum_t observed^2).
Eigen::VectorXd rpe_per_channel(const Eigen::MatrixXd& predicted,
                                const Eigen::MatrixXd& observed);

/// p_t = sum_i u_{t,i}^2.
Eigen::VectorXd feature_power(const Eigen::MatrixXd& u);

/// Centered moving average with shrinking windows at the edges; window odd.
Eigen::VectorXd lowpass(const Eigen::VectorXd& series, int window);

/// Affine map sending min -> -1 and max -> +1. Rejects constant series.
Eigen::VectorXd normalize_signed(const Eigen::VectorXd& series);

/// normalize_signed(lowpass(power)) > 0, as 0/1 flags.
Eigen::VectorXi detect_from_power(const Eigen::VectorXd& power, int window);

/// Full pipeline on a latent trace: power, low-pass, signed normalization,
/// zero threshold.
Eigen::VectorXi detect_events(const Eigen::MatrixXd& u, int window);

/// Fraction of label-positive frames with a detection. Labels must contain
/// at least one positive frame.
double speech_hit_rate(const Eigen::VectorXi& detected, const Eigen::VectorXi& labels);

/// Hit rate where a positive frame counts if any detection lands within
/// +/- tolerance frames.
double speech_hit_rate_tolerant(const Eigen::VectorXi& detected,
                                const Eigen::VectorXi& labels, int tolerance);

/// Fraction of frames where detected == labels.
double frame_accuracy(const Eigen::VectorXi& detected, const Eigen::VectorXi& labels);

struct MetricsReport {
  std::string model_name;
  std::string config_hash;
  std::vector<double> rpe_per_block;
  Eigen::MatrixXd rpe_per_channel;  // blocks x channels
  std::vector<double> speech_hit_rate_per_block;
  std::vector<double> speech_hit_rate_tolerant_per_block;
  std::vector<double> frame_accuracy_per_block;

  double mean_rpe() const;
  double std_rpe() const;
  double mean_shr() const;
  double std_shr() const;
};

/// "0.51 +/- 0.11"-style rendering used by the summary table.
std::string format_mean_std(double mean, double std);

/// metrics.json with stable key order, plus metrics.csv with one row per
/// block.
void write_metrics_json(const MetricsReport& report, const std::string& path);
void write_metrics_csv(const MetricsReport& report, const std::string& path);
MetricsReport read_metrics_json(const std::string& path);

}  // namespace ssvae
