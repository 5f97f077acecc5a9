#include "sfdiff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "sfdiff/parallel.hpp"

namespace sfdiff {
namespace {

constexpr double kProtocolFreqMin = 30.0;
constexpr double kProtocolFreqMax = 300.0;
constexpr double kProtocolAreaMin = 20.0;
constexpr double kProtocolAreaMax = 60.0;

void check_range(double lo, double hi, const char* what) {
  if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw DomainError(std::string("invalid range for ") + what);
}

double uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

void DatasetConfig::validate() const {
  check_range(area_min, area_max, "floor area");
  check_range(aspect_min, aspect_max, "aspect ratio");
  check_range(height_min, height_max, "room height");
  check_range(plane_min, plane_max, "measurement plane height");
  check_range(freq_min, freq_max, "frequency");
  if (!(area_min > 0.0 && aspect_min > 0.0 && height_min > 0.0)) throw DomainError("room ranges must be positive");
  if (!(freq_min > 0.0)) throw DomainError("frequencies must be positive");
  if (!(t60 > 0.0)) throw DomainError("t60 must be positive");
  if (!(wall_clearance >= 0.0)) throw DomainError("wall clearance must be nonnegative");
  if (plane_min < 0.0) throw DomainError("measurement plane below the floor");
  if (plane_max > height_min) throw DomainError("measurement plane may lie above the ceiling");
  if (rows < 2 || cols < 2) throw DomainError("grid needs at least 2 x 2 points");
  if (!(margin >= 1.0)) throw DomainError("mode margin must be >= 1");
  if (mic_counts.empty()) throw DomainError("at least one microphone count is required");
  for (int m : mic_counts)
    if (m < 1 || m > rows * cols) throw DomainError("microphone count " + std::to_string(m) + " outside [1, I*J]");
  if (!allow_out_of_protocol) {
    if (freq_min < kProtocolFreqMin || freq_max > kProtocolFreqMax)
      throw DomainError("frequency range outside the 30-300 Hz protocol");
    if (area_min < kProtocolAreaMin || area_max > kProtocolAreaMax)
      throw DomainError("floor area range outside the 20-60 m^2 protocol");
  }
  const double min_side = std::min(std::sqrt(area_min * aspect_min), std::sqrt(area_min / aspect_max));
  if (2.0 * wall_clearance >= std::min(min_side, height_min))
    throw DomainError("wall clearance leaves no room for the source");
}

ObservationMask::ObservationMask(Field2D<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto& b : bits_.storage()) {
    if (b > 1) throw DomainError("mask bits must be 0 or 1");
    count_ += b;
  }
}

ObservationMask ObservationMask::full(int rows, int cols) {
  return ObservationMask(Field2D<std::uint8_t>(rows, cols, 1));
}

ObservationMask ObservationMask::empty(int rows, int cols) {
  return ObservationMask(Field2D<std::uint8_t>(rows, cols, 0));
}

std::vector<std::size_t> ObservationMask::observed_cells() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < bits_.size(); ++k)
    if (bits_[k]) out.push_back(k);
  return out;
}

std::vector<std::size_t> ObservationMask::unknown_cells() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < bits_.size(); ++k)
    if (!bits_[k]) out.push_back(k);
  return out;
}

double Sample::omega() const { return 2.0 * std::numbers::pi * frequency_hz; }

Normalized normalize(const Field2D<double>& magnitude) {
  double peak = 0.0;
  for (double v : magnitude.values()) {
    if (!std::isfinite(v) || v < 0.0) throw DomainError("normalize: magnitudes must be finite and nonnegative");
    peak = std::max(peak, v);
  }
  if (peak == 0.0) throw DomainError("normalize: all-zero field");
  Normalized out{Field2D<double>(magnitude.rows(), magnitude.cols()), peak};
  for (std::size_t k = 0; k < magnitude.size(); ++k) out.values[k] = std::clamp(magnitude[k] / peak, 0.0, 1.0);
  return out;
}

Normalized normalize(const Field2D<double>& magnitude, const ObservationMask& mask, double headroom) {
  if (!mask.bits().same_shape(Field2D<std::uint8_t>(magnitude.rows(), magnitude.cols())))
    throw ContractError("normalize: mask shape does not match the field");
  if (!(headroom > 0.0)) throw DomainError("normalize: headroom must be positive");
  double peak = 0.0;
  for (std::size_t k = 0; k < magnitude.size(); ++k) {
    const double v = magnitude[k];
    if (!std::isfinite(v) || v < 0.0) throw DomainError("normalize: magnitudes must be finite and nonnegative");
    if (mask.observed(k)) peak = std::max(peak, v);
  }
  if (peak == 0.0) throw DomainError("normalize: observed cells are all zero");
  const double scale = headroom * peak;
  Normalized out{Field2D<double>(magnitude.rows(), magnitude.cols()), scale};
  for (std::size_t k = 0; k < magnitude.size(); ++k) out.values[k] = std::clamp(magnitude[k] / scale, 0.0, 1.0);
  return out;
}

RoomSpec sample_room(Rng& rng, const DatasetConfig& config) {
  const double area = uniform(rng, config.area_min, config.area_max);
  const double aspect = uniform(rng, config.aspect_min, config.aspect_max);
  RoomSpec room;
  room.lx = std::sqrt(area * aspect);
  room.ly = area / room.lx;
  room.lz = uniform(rng, config.height_min, config.height_max);
  room.t60 = config.t60;
  room.speed_of_sound = config.speed_of_sound;
  const double c = config.wall_clearance;
  room.source.x = uniform(rng, c, room.lx - c);
  room.source.y = uniform(rng, c, room.ly - c);
  room.source.z = uniform(rng, c, room.lz - c);
  return room;
}

double sample_plane_height(Rng& rng, const RoomSpec& room, const DatasetConfig& config) {
  return std::min(uniform(rng, config.plane_min, config.plane_max), room.lz);
}

ObservationMask sample_mask(Rng& rng, int m, int rows, int cols) {
  const int cells = rows * cols;
  if (m < 1 || m > cells) throw DomainError("sample_mask: m = " + std::to_string(m) + " outside [1, I*J]");
  std::vector<int> order(cells);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first m entries are a uniform m-subset.
  for (int k = 0; k < m; ++k) {
    const int pick = std::uniform_int_distribution<int>(k, cells - 1)(rng);
    std::swap(order[k], order[pick]);
  }
  Field2D<std::uint8_t> bits(rows, cols, 0);
  for (int k = 0; k < m; ++k) bits[order[k]] = 1;
  return ObservationMask(std::move(bits));
}

Sample make_sample(const Grid& grid, double frequency_hz, ObservationMask mask, double margin) {
  if (mask.rows() != grid.rows || mask.cols() != grid.cols) throw ContractError("mask does not match the grid");
  const double omega = 2.0 * std::numbers::pi * frequency_hz;
  const auto field = magnitude(simulate_rtf(grid.room, grid, omega, margin));
  const auto norm = normalize(field.values);
  Sample s;
  s.grid = grid;
  s.frequency_hz = frequency_hz;
  s.scale = norm.scale;
  s.mask = std::move(mask);
  s.normalized = Field2D<float>(grid.rows, grid.cols);
  s.magnitude = Field2D<float>(grid.rows, grid.cols);
  for (std::size_t k = 0; k < field.values.size(); ++k) {
    s.normalized[k] = static_cast<float>(norm.values[k]);
    s.magnitude[k] = static_cast<float>(field.values[k]);
  }
  return s;
}

std::vector<double> test_frequencies(int n_freqs, const DatasetConfig& config) {
  if (n_freqs < 1) throw DomainError("n_freqs must be >= 1");
  std::vector<double> out(n_freqs);
  if (n_freqs == 1) {
    out[0] = config.freq_min;
    return out;
  }
  const double step = (config.freq_max - config.freq_min) / (n_freqs - 1);
  for (int k = 0; k < n_freqs; ++k) out[k] = config.freq_min + k * step;
  out.back() = config.freq_max;
  return out;
}

std::vector<Sample> generate_training_samples(std::uint64_t seed, int n_rooms, const DatasetConfig& config,
                                              unsigned threads) {
  config.validate();
  if (n_rooms < 1) throw DomainError("n_rooms must be >= 1");
  std::vector<Sample> samples(n_rooms);
  parallel_for(static_cast<std::size_t>(n_rooms), threads, [&](std::size_t k) {
    Rng rng = derive_rng(seed, streams::kTrainSample, k);
    Grid grid;
    grid.rows = config.rows;
    grid.cols = config.cols;
    grid.room = sample_room(rng, config);
    grid.z_o = sample_plane_height(rng, grid.room, config);
    const double f = uniform(rng, config.freq_min, config.freq_max);
    const auto pick = std::uniform_int_distribution<std::size_t>(0, config.mic_counts.size() - 1)(rng);
    auto mask = sample_mask(rng, config.mic_counts[pick], config.rows, config.cols);
    samples[k] = make_sample(grid, f, std::move(mask), config.margin);
  });
  return samples;
}

std::vector<std::vector<Sample>> generate_test_samples(std::uint64_t seed, int n_rooms, int n_freqs,
                                                       const DatasetConfig& config, unsigned threads) {
  config.validate();
  if (n_rooms < 1) throw DomainError("n_rooms must be >= 1");
  const auto freqs = test_frequencies(n_freqs, config);
  const std::size_t densities = config.mic_counts.size();
  const std::size_t per_density = static_cast<std::size_t>(n_rooms) * n_freqs;
  std::vector<std::vector<Sample>> out(densities, std::vector<Sample>(per_density));

  struct RoomDraw {
    Grid grid;
    std::vector<ObservationMask> masks;
  };
  std::vector<RoomDraw> rooms(n_rooms);
  for (int r = 0; r < n_rooms; ++r) {
    Rng rng = derive_rng(seed, streams::kTestRoom, r);
    auto& draw = rooms[r];
    draw.grid.rows = config.rows;
    draw.grid.cols = config.cols;
    draw.grid.room = sample_room(rng, config);
    draw.grid.z_o = sample_plane_height(rng, draw.grid.room, config);
    for (int m : config.mic_counts) draw.masks.push_back(sample_mask(rng, m, config.rows, config.cols));
  }
  parallel_for(per_density, threads, [&](std::size_t idx) {
    const auto& draw = rooms[idx / n_freqs];
    const double f = freqs[idx % n_freqs];
    auto base = make_sample(draw.grid, f, draw.masks[0], config.margin);
    for (std::size_t d = 1; d < densities; ++d) {
      out[d][idx] = base;
      out[d][idx].mask = draw.masks[d];
    }
    out[0][idx] = std::move(base);
  });
  return out;
}

CorpusManifest build_training_corpus(std::uint64_t seed, int n_rooms, const DatasetConfig& config,
                                     const std::filesystem::path& out_dir, unsigned threads) {
  const auto samples = generate_training_samples(seed, n_rooms, config, threads);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  CorpusManifest manifest;
  manifest.kind = "train";
  manifest.sample_count = samples.size();
  manifest.seed = seed;
  manifest.n_rooms = static_cast<std::uint64_t>(n_rooms);
  manifest.n_freqs = 1;
  manifest.config = config;
  manifest.files = {"corpus.sfd"};
  write_corpus(out_dir / "corpus.sfd", samples);
  write_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

CorpusManifest build_test_corpus(std::uint64_t seed, int n_rooms, int n_freqs, const DatasetConfig& config,
                                 const std::filesystem::path& out_dir, unsigned threads) {
  const auto per_density = generate_test_samples(seed, n_rooms, n_freqs, config, threads);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  CorpusManifest manifest;
  manifest.kind = "test";
  manifest.sample_count = per_density.front().size();
  manifest.seed = seed;
  manifest.n_rooms = static_cast<std::uint64_t>(n_rooms);
  manifest.n_freqs = static_cast<std::uint64_t>(n_freqs);
  manifest.config = config;
  for (std::size_t d = 0; d < per_density.size(); ++d) {
    char name[32];
    std::snprintf(name, sizeof name, "corpus_m%04d.sfd", config.mic_counts[d]);
    manifest.files.emplace_back(name);
    manifest.densities.push_back(config.mic_counts[d]);
    write_corpus(out_dir / name, per_density[d]);
  }
  write_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace sfdiff
