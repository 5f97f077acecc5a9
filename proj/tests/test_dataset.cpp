#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "sfdiff/checksum.hpp"
#include "sfdiff/dataset.hpp"
#include "sfdiff/errors.hpp"

using namespace sfdiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sfdiff_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Protocol, RoomsRespectRanges) {
  const DatasetConfig config;
  Rng rng = derive_rng(5, 0);
  for (int i = 0; i < 500; ++i) {
    const auto room = sample_room(rng, config);
    EXPECT_GE(room.floor_area(), 20.0 - 1e-9);
    EXPECT_LE(room.floor_area(), 60.0 + 1e-9);
    EXPECT_GE(room.lx / room.ly, 0.5 - 1e-12);
    EXPECT_LE(room.lx / room.ly, 2.0 + 1e-12);
    EXPECT_GE(room.lz, 2.5);
    EXPECT_LE(room.lz, 4.0);
    EXPECT_GE(room.source.x, 0.1);
    EXPECT_LE(room.source.x, room.lx - 0.1);
    EXPECT_GE(room.source.z, 0.1);
    EXPECT_LE(room.source.z, room.lz - 0.1);
    EXPECT_DOUBLE_EQ(room.t60, 0.6);
    const double z = sample_plane_height(rng, room, config);
    EXPECT_GE(z, 1.0);
    EXPECT_LE(z, 1.5);
  }
}

TEST(Protocol, DegenerateRangesGivePointMass) {
  DatasetConfig config;
  config.area_min = config.area_max = 30.0;
  config.aspect_min = config.aspect_max = 1.0;
  Rng rng = derive_rng(1, 0);
  const auto room = sample_room(rng, config);
  EXPECT_NEAR(room.lx, std::sqrt(30.0), 1e-12);
  EXPECT_NEAR(room.ly, std::sqrt(30.0), 1e-12);
}

TEST(Protocol, OutOfRangeFrequencyNeedsOverride) {
  DatasetConfig config;
  config.freq_min = 10.0;
  EXPECT_THROW(config.validate(), DomainError);
  config.allow_out_of_protocol = true;
  EXPECT_NO_THROW(config.validate());
}

TEST(Protocol, TestFrequenciesAreInclusive) {
  const auto f = test_frequencies(3, DatasetConfig{});
  ASSERT_EQ(f.size(), 3u);
  EXPECT_DOUBLE_EQ(f[0], 30.0);
  EXPECT_DOUBLE_EQ(f[1], 165.0);
  EXPECT_DOUBLE_EQ(f[2], 300.0);
  EXPECT_EQ(test_frequencies(40, DatasetConfig{}).size(), 40u);
}

TEST(Mask, ExactCountAndDistinctCells) {
  Rng rng = derive_rng(2, 0);
  for (int m : {1, 64, 512, 1024}) {
    const auto mask = sample_mask(rng, m);
    EXPECT_EQ(mask.count(), m);
    const auto cells = mask.observed_cells();
    EXPECT_EQ(std::set<std::size_t>(cells.begin(), cells.end()).size(), static_cast<std::size_t>(m));
    EXPECT_EQ(mask.unknown_cells().size(), 1024u - m);
  }
  EXPECT_THROW(sample_mask(rng, 0), DomainError);
  EXPECT_THROW(sample_mask(rng, 1025), DomainError);
}

TEST(Mask, CellsAreUniform) {
  Rng rng = derive_rng(3, 0);
  std::vector<double> hits(1024, 0.0);
  const int draws = 2000, m = 64;
  for (int d = 0; d < draws; ++d)
    for (auto c : sample_mask(rng, m).observed_cells()) hits[c] += 1.0;
  const double expected = static_cast<double>(draws) * m / 1024.0;
  double chi2 = 0.0;
  for (double h : hits) chi2 += (h - expected) * (h - expected) / expected;
  // 1023 degrees of freedom: mean 1023, standard deviation about 45.
  EXPECT_LT(chi2, 1023.0 + 5.0 * 45.2);
  EXPECT_GT(chi2, 1023.0 - 5.0 * 45.2);
}

TEST(Normalize, TrainingModeRoundTrip) {
  Field2D<double> f(4, 4);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = 0.5 + 0.25 * static_cast<double>(k);
  const auto n = normalize(f);
  EXPECT_DOUBLE_EQ(n.scale, f[15]);
  double peak = 0.0;
  for (double v : n.values.values()) peak = std::max(peak, v);
  EXPECT_DOUBLE_EQ(peak, 1.0);
  const auto back = denormalize(n.values, n.scale);
  for (std::size_t k = 0; k < f.size(); ++k) EXPECT_NEAR(back[k], f[k], 1e-15 * f[k]);
}

TEST(Normalize, InferenceHeadroomAvoidsClipping) {
  Field2D<double> f(4, 4, 1.0);
  Field2D<std::uint8_t> bits(4, 4, 0);
  bits[0] = bits[5] = 1;
  f[0] = 2.0;
  f[9] = 2.2;  // unknown max is 1.1 x the observed max
  const ObservationMask mask(bits);
  const auto n = normalize(f, mask);
  EXPECT_DOUBLE_EQ(n.scale, 2.4);
  EXPECT_NEAR(n.values[9], 2.2 / 2.4, 1e-15);
  EXPECT_LT(n.values[9], 1.0);

  f[9] = 3.0;
  EXPECT_DOUBLE_EQ(normalize(f, mask).values[9], 1.0);
}

TEST(Normalize, ZeroFieldRejected) {
  EXPECT_THROW(normalize(Field2D<double>(3, 3, 0.0)), DomainError);
}

TEST(Corpus, GenerationIsDeterministicAcrossThreads) {
  const DatasetConfig config;
  const auto a = generate_training_samples(9, 6, config, 1);
  const auto b = generate_training_samples(9, 6, config, 3);
  EXPECT_EQ(a, b);
  const auto c = generate_training_samples(10, 6, config, 1);
  EXPECT_NE(a, c);
  for (const auto& s : a) {
    EXPECT_GE(s.frequency_hz, 30.0);
    EXPECT_LE(s.frequency_hz, 300.0);
    EXPECT_TRUE(s.mask.count() == 64 || s.mask.count() == 128 || s.mask.count() == 256 || s.mask.count() == 512);
  }
}

TEST(Corpus, TestSplitSharesRoomsAcrossDensities) {
  const auto groups = generate_test_samples(4, 2, 3, DatasetConfig{});
  ASSERT_EQ(groups.size(), 4u);
  for (std::size_t d = 0; d < groups.size(); ++d) {
    ASSERT_EQ(groups[d].size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_EQ(groups[d][i].grid, groups[0][i].grid);
      EXPECT_EQ(groups[d][i].magnitude, groups[0][i].magnitude);
      EXPECT_EQ(groups[d][i].mask.count(), DatasetConfig{}.mic_counts[d]);
    }
  }
}

TEST(Corpus, EncodeDecodeIsExact) {
  const auto samples = generate_training_samples(21, 5, DatasetConfig{});
  const auto bytes = encode_corpus(samples);
  EXPECT_EQ(decode_corpus(bytes), samples);
  EXPECT_EQ(crc64(encode_corpus(decode_corpus(bytes))), crc64(bytes));
  EXPECT_THROW(decode_corpus(bytes.substr(0, bytes.size() - 3)), IoError);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_corpus(bad), IoError);
}

TEST(Corpus, BuildWritesManifestAndFiles) {
  const auto dir = scratch("corpus");
  const auto manifest = build_test_corpus(3, 2, 2, DatasetConfig{}, dir);
  EXPECT_EQ(manifest.files.size(), 4u);
  EXPECT_EQ(read_manifest(dir / "manifest.json"), manifest);
  for (std::size_t d = 0; d < manifest.files.size(); ++d) {
    const auto samples = read_corpus(dir / manifest.files[d]);
    EXPECT_EQ(samples.size(), 4u);
    EXPECT_EQ(samples.front().mask.count(), manifest.densities[d]);
  }
  const auto again = scratch("corpus2");
  build_test_corpus(3, 2, 2, DatasetConfig{}, again);
  for (const auto& f : manifest.files) EXPECT_EQ(file_crc64((dir / f).string()), file_crc64((again / f).string()));
  fs::remove_all(dir);
  fs::remove_all(again);
}

TEST(Corpus, MissingFileIsIoError) {
  EXPECT_THROW(read_corpus("/nonexistent/corpus.sfd"), IoError);
}
