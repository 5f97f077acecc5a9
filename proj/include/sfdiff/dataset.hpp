#pragma once

// Randomized room/frequency/mask corpora for training and evaluation, plus the
// per-sample magnitude normalization used by the diffusion model.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfdiff/field.hpp"
#include "sfdiff/rng.hpp"
#include "sfdiff/room_acoustics.hpp"

namespace sfdiff {

struct DatasetConfig {
  double area_min = 20.0;  // m^2
  double area_max = 60.0;
  double aspect_min = 0.5;  // lx / ly
  double aspect_max = 2.0;
  double height_min = 2.5;  // m
  double height_max = 4.0;
  double t60 = 0.6;  // s
  double wall_clearance = 0.1;  // m, source distance to every wall
  double plane_min = 1.0;  // measurement plane height range, m
  double plane_max = 1.5;
  double freq_min = 30.0;  // Hz
  double freq_max = 300.0;
  std::vector<int> mic_counts{64, 128, 256, 512};
  int rows = kGridSize;
  int cols = kGridSize;
  double speed_of_sound = 343.0;
  double margin = kDefaultMargin;
  // Permits frequencies/areas outside the 30-300 Hz, 20-60 m^2 protocol.
  bool allow_out_of_protocol = false;

  void validate() const;
  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

class ObservationMask {
 public:
  ObservationMask() = default;
  explicit ObservationMask(Field2D<std::uint8_t> bits);
  static ObservationMask full(int rows, int cols);
  static ObservationMask empty(int rows, int cols);

  const Field2D<std::uint8_t>& bits() const { return bits_; }
  bool observed(std::size_t cell) const { return bits_[cell] != 0; }
  int count() const { return count_; }
  int rows() const { return bits_.rows(); }
  int cols() const { return bits_.cols(); }
  std::vector<std::size_t> observed_cells() const;
  std::vector<std::size_t> unknown_cells() const;

  friend bool operator==(const ObservationMask&, const ObservationMask&) = default;

 private:
  Field2D<std::uint8_t> bits_;
  int count_ = 0;
};

// One training/evaluation unit. Fields are single precision, matching the
// on-disk representation so that a read-back sample compares equal.
struct Sample {
  Grid grid;  // carries the room
  double frequency_hz = 0.0;
  double scale = 0.0;
  ObservationMask mask;
  Field2D<float> normalized;
  Field2D<float> magnitude;

  const RoomSpec& room() const { return grid.room; }
  double omega() const;
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Normalized {
  Field2D<double> values;
  double scale = 0.0;
};

inline constexpr double kInferenceHeadroom = 1.2;

// Training mode: scale = max over the full grid.
Normalized normalize(const Field2D<double>& magnitude);
// Inference mode: scale = headroom * max over observed cells; values clipped to [0, 1].
Normalized normalize(const Field2D<double>& magnitude, const ObservationMask& mask,
                     double headroom = kInferenceHeadroom);
template <typename T>
Field2D<double> denormalize(const Field2D<T>& normalized, double scale) {
  if (!(scale > 0.0)) throw DomainError("denormalize: scale must be positive");
  Field2D<double> out(normalized.rows(), normalized.cols());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<double>(normalized[k]) * scale;
  return out;
}

RoomSpec sample_room(Rng& rng, const DatasetConfig& config);
double sample_plane_height(Rng& rng, const RoomSpec& room, const DatasetConfig& config);
ObservationMask sample_mask(Rng& rng, int m, int rows = kGridSize, int cols = kGridSize);

// Simulates, takes the magnitude and normalizes (training mode).
Sample make_sample(const Grid& grid, double frequency_hz, ObservationMask mask, double margin);

// Evenly spaced inclusive frequency list over [freq_min, freq_max].
std::vector<double> test_frequencies(int n_freqs, const DatasetConfig& config);

inline constexpr std::uint32_t kCorpusFormatVersion = 1;

struct CorpusManifest {
  std::string kind;  // "train" | "test"
  std::uint64_t sample_count = 0;  // field slices
  std::uint64_t seed = 0;
  std::uint64_t n_rooms = 0;
  std::uint64_t n_freqs = 0;
  DatasetConfig config;
  std::uint32_t format_version = kCorpusFormatVersion;
  std::vector<std::string> files;  // relative to the manifest directory
  std::vector<int> densities;  // test corpora: mic count of each file

  friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

// One sample per room: frequency ~ U[freq_min, freq_max], mic count uniform over
// config.mic_counts. Sample k depends only on (seed, k).
std::vector<Sample> generate_training_samples(std::uint64_t seed, int n_rooms, const DatasetConfig& config,
                                              unsigned threads = 1);

// n_rooms x n_freqs slices, evaluated once per density; result[d] holds the
// slices masked at config.mic_counts[d], room-major then frequency.
std::vector<std::vector<Sample>> generate_test_samples(std::uint64_t seed, int n_rooms, int n_freqs,
                                                       const DatasetConfig& config, unsigned threads = 1);

// Writes corpus.sfd + manifest.json into out_dir.
CorpusManifest build_training_corpus(std::uint64_t seed, int n_rooms, const DatasetConfig& config,
                                     const std::filesystem::path& out_dir, unsigned threads = 1);
// Writes one corpus_mNNN.sfd per density + manifest.json into out_dir.
CorpusManifest build_test_corpus(std::uint64_t seed, int n_rooms, int n_freqs, const DatasetConfig& config,
                                 const std::filesystem::path& out_dir, unsigned threads = 1);

// Corpus file I/O (little-endian "SFD1" format).
void write_corpus(const std::filesystem::path& path, const std::vector<Sample>& samples);
std::vector<Sample> read_corpus(const std::filesystem::path& path);
std::string encode_corpus(const std::vector<Sample>& samples);
std::vector<Sample> decode_corpus(const std::string& bytes);

void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);
CorpusManifest read_manifest(const std::filesystem::path& path);

}  // namespace sfdiff
