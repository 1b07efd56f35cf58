#pragma once

#include "ssvae/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace ssvae {

/// Generator configuration for the separable linear-Gaussian benchmark.
/// Defaults give a 6 s window at ~95 Hz across 19 blocks: a slow 4-d AR(1)
/// background with unit stationary variance per mode, plus sparse 3-d
/// event bursts on ~1/3 of the frames.
struct SynthConfig {
  int channels = 32;
  int background_dim = 4;
  int input_dim = 3;
  int frames_per_block = 570;
  int n_blocks = 19;
  double ar_coefficient = 0.98;
  double event_rate = 3.0;      // expected events per block
  int event_duration = 57;      // frames per event
  double noise_std = 0.05;
  double process_noise_std = 0.199;
  double burst_std = 1.0;       // RMS of u inside an event
  double train_fraction = 0.6;  // leading fraction of blocks used for training
  std::uint64_t seed = 7;

  void validate() const;  // throws ValidationError naming the violated field
};

/// One generated block. All fields are float32; the file format stores them
/// verbatim, so write -> read round trips are bit-exact.
struct SyntheticBlock {
  Eigen::MatrixXf observations;         // T x C
  Eigen::MatrixXf background_latent;    // T x d_r
  Eigen::MatrixXf instantaneous_latent; // T x d_u, zero outside events
  Eigen::VectorXf labels;               // T, 1 while an event is active
  Eigen::MatrixXf emission_r;           // C x d_r
  Eigen::MatrixXf emission_u;           // C x d_u
  Eigen::MatrixXf transition;           // d_r x d_r
  Eigen::MatrixXf input_map;            // d_r x d_u
  float noise_std = 0.0f;
};

/// The system shared by every block of a dataset, in double precision:
/// [emission_r | emission_u] has orthonormal columns, transition is
/// ar_coefficient times a random rotation close to identity (so each state
/// dimension keeps ~ar_coefficient lag-1 autocorrelation).
struct SynthSystem {
  Eigen::MatrixXd emission_r, emission_u;  // C x d_r, C x d_u
  Eigen::MatrixXd transition, input_map;   // d_r x d_r, d_r x d_u
};

/// Random matrix with exactly orthonormal columns (Householder QR, sign-fixed).
Eigen::MatrixXd orthonormal_columns(int rows, int cols, Rng& rng);

/// System matrices are a function of config.seed only, so train and test
/// blocks share one generating process.
SynthSystem make_system(const SynthConfig& config);

/// Deterministic given (config.seed, block_index).
SyntheticBlock generate_block(const SynthConfig& config, int block_index);

std::vector<SyntheticBlock> generate_dataset(const SynthConfig& config);

/// Leading-block count used for training: floor(train_fraction * n_blocks),
/// clamped so both splits are non-empty.
int train_block_count(const SynthConfig& config);

struct Dataset {
  SynthConfig config;
  std::string config_hash;
  std::vector<SyntheticBlock> blocks;
};

/// Writes meta.json (config fields, format_version, per-block byte offsets)
/// plus blocks.bin (concatenated little-endian float32 arrays per block:
/// o, r, u, labels, H1, H2, F1, F2, row-major).
void write_dataset(const std::vector<SyntheticBlock>& blocks,
                   const SynthConfig& config, const std::string& directory,
                   const std::string& config_hash = "");

/// Rejects version or size mismatches, naming the offending location.
Dataset read_dataset(const std::string& directory);

}  // namespace ssvae
