#include "ssvae/synth.hpp"

#include "ssvae/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace ssvae {

namespace {

constexpr int kDatasetFormatVersion = 1;

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ValidationError("config field '" + field + "': " + why);
}

// Cayley transform of a small random skew-symmetric matrix: an exactly
// orthogonal rotation with diagonal entries close to 1, which keeps each
// state dimension's lag-1 autocorrelation near the AR coefficient.
Eigen::MatrixXd near_identity_rotation(int dim, Rng& rng, double spread) {
  Eigen::MatrixXd skew = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = i + 1; j < dim; ++j) {
      const double v = spread * rng.normal();
      skew(i, j) = v;
      skew(j, i) = -v;
    }
  }
  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim, dim);
  return (eye + skew) * (eye - skew).inverse();
}

Eigen::MatrixXf moving_average_columns(const Eigen::MatrixXf& x, int window) {
  const Eigen::Index n = x.rows();
  const Eigen::Index half = window / 2;
  Eigen::MatrixXf out(n, x.cols());
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, t - half);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, t + half);
    out.row(t) = x.middleRows(lo, hi - lo + 1).colwise().mean();
  }
  return out;
}

struct EventSpan {
  int start, length;
};

std::vector<EventSpan> draw_events(const SynthConfig& cfg, Rng& rng) {
  std::vector<EventSpan> events;
  if (cfg.event_rate <= 0.0) return events;
  const int T = cfg.frames_per_block;
  const double mean_gap =
      std::max(1.0, static_cast<double>(T) / cfg.event_rate - cfg.event_duration);
  int t = static_cast<int>(rng.exponential(mean_gap));
  while (t < T) {
    const int len = std::min(cfg.event_duration, T - t);
    if (len > 0) events.push_back({t, len});
    t += cfg.event_duration + 1 + static_cast<int>(rng.exponential(mean_gap));
  }
  if (events.empty()) {
    const int start = static_cast<int>(
        rng.uniform_index(std::max(1, T - cfg.event_duration)));
    events.push_back({start, std::min(cfg.event_duration, T - start)});
  }
  return events;
}

// little-endian float32 encoding, independent of host byte order
void append_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>((bits >> 8) & 0xff));
  out.push_back(static_cast<char>((bits >> 16) & 0xff));
  out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

float read_f32(const char* p) {
  const auto b = reinterpret_cast<const unsigned char*>(p);
  std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                       (static_cast<std::uint32_t>(b[1]) << 8) |
                       (static_cast<std::uint32_t>(b[2]) << 16) |
                       (static_cast<std::uint32_t>(b[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void append_matrix(std::string& out, const Eigen::MatrixXf& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) append_f32(out, m(r, c));
  }
}

Eigen::MatrixXf take_matrix(const char*& p, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXf m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = read_f32(p);
      p += 4;
    }
  }
  return m;
}

std::size_t block_bytes(const SynthConfig& c) {
  const std::size_t T = c.frames_per_block;
  const std::size_t C = c.channels;
  const std::size_t dr = c.background_dim;
  const std::size_t du = c.input_dim;
  return 4 * (T * C + T * dr + T * du + T + C * dr + C * du + dr * dr + dr * du);
}

nlohmann::json config_to_json(const SynthConfig& c) {
  return nlohmann::json{{"channels", c.channels},
                        {"background_dim", c.background_dim},
                        {"input_dim", c.input_dim},
                        {"frames_per_block", c.frames_per_block},
                        {"n_blocks", c.n_blocks},
                        {"ar_coefficient", c.ar_coefficient},
                        {"event_rate", c.event_rate},
                        {"event_duration", c.event_duration},
                        {"noise_std", c.noise_std},
                        {"process_noise_std", c.process_noise_std},
                        {"burst_std", c.burst_std},
                        {"train_fraction", c.train_fraction},
                        {"seed", c.seed}};
}

SynthConfig config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.channels = j.at("channels").get<int>();
    c.background_dim = j.at("background_dim").get<int>();
    c.input_dim = j.at("input_dim").get<int>();
    c.frames_per_block = j.at("frames_per_block").get<int>();
    c.n_blocks = j.at("n_blocks").get<int>();
    c.ar_coefficient = j.at("ar_coefficient").get<double>();
    c.event_rate = j.at("event_rate").get<double>();
    c.event_duration = j.at("event_duration").get<int>();
    c.noise_std = j.at("noise_std").get<double>();
    c.process_noise_std = j.at("process_noise_std").get<double>();
    c.burst_std = j.at("burst_std").get<double>();
    c.train_fraction = j.at("train_fraction").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("meta.json config: ") + e.what());
  }
  return c;
}

}  // namespace

void SynthConfig::validate() const {
  require(channels > 0, "channels", "must be positive");
  require(background_dim > 0, "background_dim", "must be positive");
  require(input_dim > 0, "input_dim", "must be positive");
  require(frames_per_block > 1, "frames_per_block", "must exceed 1");
  require(n_blocks >= 2, "n_blocks", "need at least 2 blocks to split");
  require(ar_coefficient > 0.0 && ar_coefficient < 1.0, "ar_coefficient",
          "must lie in (0, 1)");
  require(background_dim + input_dim <= channels, "background_dim",
          "background_dim + input_dim must not exceed channels");
  require(event_rate >= 0.0, "event_rate", "must be non-negative");
  require(event_duration > 0, "event_duration", "must be positive");
  require(noise_std >= 0.0, "noise_std", "must be non-negative");
  require(process_noise_std > 0.0, "process_noise_std", "must be positive");
  require(burst_std > 0.0, "burst_std", "must be positive");
  require(train_fraction > 0.0 && train_fraction < 1.0, "train_fraction",
          "must lie in (0, 1)");
}

Eigen::MatrixXd orthonormal_columns(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd g(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) g(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (int c = 0; c < cols; ++c) {
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);  // deterministic sign convention
  }
  return q;
}

SynthSystem make_system(const SynthConfig& config) {
  config.validate();
  Rng rng(mix_seed(config.seed, 0x5e5ull));
  SynthSystem sys;
  Eigen::MatrixXd basis = orthonormal_columns(
      config.channels, config.background_dim + config.input_dim, rng);
  sys.emission_r = basis.leftCols(config.background_dim);
  sys.emission_u = basis.rightCols(config.input_dim);
  sys.transition =
      config.ar_coefficient * near_identity_rotation(config.background_dim, rng, 0.03);
  sys.input_map =
      0.1 * orthonormal_columns(config.background_dim, config.input_dim, rng);
  return sys;
}

SyntheticBlock generate_block(const SynthConfig& config, int block_index) {
  const SynthSystem sys = make_system(config);
  const int T = config.frames_per_block;
  const int C = config.channels;
  const int dr = config.background_dim;
  const int du = config.input_dim;

  SyntheticBlock block;
  block.noise_std = static_cast<float>(config.noise_std);
  block.emission_r = sys.emission_r.cast<float>();
  block.emission_u = sys.emission_u.cast<float>();
  block.transition = sys.transition.cast<float>();
  block.input_map = sys.input_map.cast<float>();

  Rng rng(mix_seed(config.seed, 0xb10cull, static_cast<std::uint64_t>(block_index)));

  // events and the gated input u
  const std::vector<EventSpan> events = draw_events(config, rng);
  block.labels = Eigen::VectorXf::Zero(T);
  block.instantaneous_latent = Eigen::MatrixXf::Zero(T, du);
  for (const EventSpan& ev : events) {
    Eigen::MatrixXf raw(ev.length, du);
    for (int i = 0; i < ev.length; ++i) {
      for (int j = 0; j < du; ++j) raw(i, j) = static_cast<float>(rng.normal());
    }
    int window = std::min(9, ev.length);
    if (window % 2 == 0) window -= 1;
    Eigen::MatrixXf smooth = moving_average_columns(raw, std::max(1, window));
    for (int i = 0; i < ev.length; ++i) {
      const float env = static_cast<float>(
          std::sin(3.14159265358979323846 * (i + 0.5) / ev.length));
      smooth.row(i) *= env;
    }
    const float rms = std::sqrt(smooth.array().square().mean());
    if (rms > 0.0f) smooth *= static_cast<float>(config.burst_std) / rms;
    block.instantaneous_latent.middleRows(ev.start, ev.length) = smooth;
    block.labels.segment(ev.start, ev.length).setOnes();
  }
  if (block.labels.minCoeff() > 0.5f) {
    // degenerate config covered the whole block; keep one silent frame
    block.labels(T - 1) = 0.0f;
    block.instantaneous_latent.row(T - 1).setZero();
  }

  // background AR(1) state
  const double stationary_std =
      config.process_noise_std /
      std::sqrt(1.0 - config.ar_coefficient * config.ar_coefficient);
  const Eigen::MatrixXf f1 = block.transition;
  const Eigen::MatrixXf f2 = block.input_map;
  block.background_latent.resize(T, dr);
  for (int j = 0; j < dr; ++j) {
    block.background_latent(0, j) =
        static_cast<float>(stationary_std * rng.normal());
  }
  for (int t = 1; t < T; ++t) {
    Eigen::VectorXf drift =
        f1 * block.background_latent.row(t - 1).transpose() +
        f2 * block.instantaneous_latent.row(t - 1).transpose();
    for (int j = 0; j < dr; ++j) {
      drift(j) += static_cast<float>(config.process_noise_std * rng.normal());
    }
    block.background_latent.row(t) = drift.transpose();
  }

  Eigen::MatrixXf noise(T, C);
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < C; ++c) {
      noise(t, c) = static_cast<float>(config.noise_std * rng.normal());
    }
  }
  block.observations = block.background_latent * block.emission_r.transpose() +
                       block.instantaneous_latent * block.emission_u.transpose() +
                       noise;
  return block;
}

std::vector<SyntheticBlock> generate_dataset(const SynthConfig& config) {
  config.validate();
  std::vector<SyntheticBlock> blocks;
  blocks.reserve(config.n_blocks);
  for (int b = 0; b < config.n_blocks; ++b) blocks.push_back(generate_block(config, b));
  return blocks;
}

int train_block_count(const SynthConfig& config) {
  const int n = config.n_blocks;
  int k = static_cast<int>(std::floor(config.train_fraction * n + 1e-9));
  return std::min(std::max(k, 1), n - 1);
}

void write_dataset(const std::vector<SyntheticBlock>& blocks,
                   const SynthConfig& config, const std::string& directory,
                   const std::string& config_hash) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  const std::size_t per_block = block_bytes(config);

  std::string payload;
  payload.reserve(per_block * blocks.size());
  nlohmann::json offsets = nlohmann::json::array();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const SyntheticBlock& b = blocks[i];
    const std::size_t at = payload.size();
    append_matrix(payload, b.observations);
    append_matrix(payload, b.background_latent);
    append_matrix(payload, b.instantaneous_latent);
    append_matrix(payload, b.labels);
    append_matrix(payload, b.emission_r);
    append_matrix(payload, b.emission_u);
    append_matrix(payload, b.transition);
    append_matrix(payload, b.input_map);
    if (payload.size() - at != per_block) {
      throw ValidationError("write_dataset: block " + std::to_string(i) +
                            " does not match the config dimensions");
    }
    offsets.push_back({{"index", i}, {"offset", at}, {"bytes", per_block}});
  }

  nlohmann::json meta{{"format_version", kDatasetFormatVersion},
                      {"config", config_to_json(config)},
                      {"config_hash", config_hash},
                      {"blocks", offsets}};
  std::ofstream mf(fs::path(directory) / "meta.json");
  mf << meta.dump(2) << "\n";
  std::ofstream bf(fs::path(directory) / "blocks.bin", std::ios::binary);
  bf.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

Dataset read_dataset(const std::string& directory) {
  namespace fs = std::filesystem;
  const fs::path meta_path = fs::path(directory) / "meta.json";
  std::ifstream mf(meta_path);
  if (!mf) throw ValidationError("meta.json: cannot open " + meta_path.string());
  nlohmann::json meta;
  try {
    mf >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("meta.json: malformed: " + std::string(e.what()));
  }
  if (!meta.contains("format_version") || !meta["format_version"].is_number_integer()) {
    throw ValidationError("meta.json: missing integer format_version");
  }
  if (meta["format_version"].get<int>() != kDatasetFormatVersion) {
    throw ValidationError(
        "meta.json: format_version " + meta["format_version"].dump() +
        " unsupported (expected " + std::to_string(kDatasetFormatVersion) + ")");
  }
  if (!meta.contains("config") || !meta.contains("blocks")) {
    throw ValidationError("meta.json: missing config or blocks section");
  }

  Dataset ds;
  ds.config = config_from_json(meta["config"]);
  ds.config.validate();
  ds.config_hash = meta.value("config_hash", "");

  const std::size_t per_block = block_bytes(ds.config);
  const auto& offsets = meta["blocks"];
  if (static_cast<int>(offsets.size()) != ds.config.n_blocks) {
    throw ValidationError("meta.json: " + std::to_string(offsets.size()) +
                          " block entries but config names " +
                          std::to_string(ds.config.n_blocks));
  }

  std::ifstream bf(fs::path(directory) / "blocks.bin", std::ios::binary);
  if (!bf) throw ValidationError("blocks.bin: cannot open");
  std::string payload((std::istreambuf_iterator<char>(bf)),
                      std::istreambuf_iterator<char>());
  const std::size_t expected = per_block * offsets.size();
  if (payload.size() != expected) {
    throw ValidationError("blocks.bin: expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(payload.size()));
  }

  const int T = ds.config.frames_per_block;
  const int C = ds.config.channels;
  const int dr = ds.config.background_dim;
  const int du = ds.config.input_dim;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const auto& entry = offsets[i];
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    const std::size_t bytes = entry.at("bytes").get<std::size_t>();
    if (bytes != per_block || offset != i * per_block) {
      throw ValidationError("meta.json block " + std::to_string(i) +
                            ": offset/bytes (" + std::to_string(offset) + ", " +
                            std::to_string(bytes) +
                            ") do not match the config layout");
    }
    const char* p = payload.data() + offset;
    SyntheticBlock b;
    b.observations = take_matrix(p, T, C);
    b.background_latent = take_matrix(p, T, dr);
    b.instantaneous_latent = take_matrix(p, T, du);
    b.labels = take_matrix(p, T, 1).col(0);
    b.emission_r = take_matrix(p, C, dr);
    b.emission_u = take_matrix(p, C, du);
    b.transition = take_matrix(p, dr, dr);
    b.input_map = take_matrix(p, dr, du);
    b.noise_std = static_cast<float>(ds.config.noise_std);
    ds.blocks.push_back(std::move(b));
  }
  return ds;
}

}  // namespace ssvae
