#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sfdiff/errors.hpp"
#include "sfdiff/rng.hpp"
#include "sfdiff/room_acoustics.hpp"

using namespace sfdiff;

namespace {

RoomSpec shoebox() { return RoomSpec{4.0, 3.0, 2.7, 0.6, {1.1, 0.7, 1.3}}; }

double omega_of(double hz) { return 2.0 * std::numbers::pi * hz; }

}  // namespace

TEST(Modes, CountMatchesBruteForce) {
  const auto room = shoebox();
  const double w = omega_of(300.0);
  const double limit = 2.0 * w;
  std::size_t expected = 0;
  for (int nx = 0; nx < 60; ++nx)
    for (int ny = 0; ny < 60; ++ny)
      for (int nz = 0; nz < 60; ++nz)
        if (eigen_angular_frequency({nx, ny, nz}, room) <= limit) ++expected;
  const auto modes = enumerate_modes(room, w, 2.0);
  EXPECT_EQ(modes.size(), expected);
  EXPECT_GT(expected, 500u);
  for (std::size_t i = 1; i < modes.size(); ++i)
    EXPECT_LE(eigen_angular_frequency(modes[i - 1], room), eigen_angular_frequency(modes[i], room));
  EXPECT_EQ(modes.front(), (ModeIndex{0, 0, 0}));
}

TEST(Modes, CapRaisesResourceError) {
  EXPECT_THROW(enumerate_modes(shoebox(), omega_of(300.0), 2.0, 100), ResourceError);
}

TEST(Modes, EigenfrequencyOfAxialMode) {
  const auto room = shoebox();
  EXPECT_NEAR(eigen_angular_frequency({1, 0, 0}, room), room.speed_of_sound * std::numbers::pi / room.lx, 1e-12);
  EXPECT_DOUBLE_EQ(eigen_angular_frequency({0, 0, 0}, room), 0.0);
}

TEST(Modes, ShapeIsOneAtTheOrigin) {
  const auto room = shoebox();
  EXPECT_DOUBLE_EQ(mode_shape({3, 2, 1}, {0, 0, 0}, room), 1.0);
  EXPECT_NEAR(mode_shape({1, 0, 0}, {room.lx / 2, 1.0, 1.0}, room), 0.0, 1e-15);
  EXPECT_THROW(mode_shape({1, 0, 0}, {room.lx + 0.1, 1.0, 1.0}, room), DomainError);
}

TEST(Green, SingleModeClosedForm) {
  const auto room = shoebox();
  const Vec3 r{2.3, 0.4, 1.9};
  const double w = omega_of(57.0);
  const ModeIndex n{1, 1, 0};
  const std::vector<ModeIndex> modes{n};
  const double wn = eigen_angular_frequency(n, room);
  const double lambda = room.volume() / 4.0;  // eps = 2 for the two nonzero indices
  const std::complex<double> expected =
      mode_shape(n, r, room) * mode_shape(n, room.source, room) /
      (lambda * std::complex<double>(wn * wn - w * w, 2.0 * room.damping() * wn));
  const auto got = modal_transfer(room, r, w, modes);
  EXPECT_NEAR(std::abs(got - expected), 0.0, 1e-12 * std::abs(expected));
}

TEST(Green, Reciprocity) {
  Rng rng = derive_rng(11, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    RoomSpec a{3.0 + 4.0 * u(rng), 3.0 + 4.0 * u(rng), 2.5 + 1.5 * u(rng), 0.6, {}};
    a.source = {a.lx * u(rng), a.ly * u(rng), a.lz * u(rng)};
    const Vec3 r{a.lx * u(rng), a.ly * u(rng), a.lz * u(rng)};
    RoomSpec b = a;
    b.source = r;
    const double w = omega_of(30.0 + 270.0 * u(rng));
    const auto modes = enumerate_modes(a, w, 2.0);
    const auto p_ab = modal_transfer(a, r, w, modes);
    const auto p_ba = modal_transfer(b, a.source, w, modes);
    EXPECT_LE(std::abs(p_ab - p_ba), 1e-12 * std::abs(p_ab));
  }
}

TEST(Green, GridFieldMatchesPointEvaluation) {
  const auto room = shoebox();
  const Grid grid{8, 6, 1.2, room};
  const double w = omega_of(120.0);
  const auto modes = enumerate_modes(room, w, 2.0);
  const auto field = modal_field(room, grid, w, modes);
  for (int i = 0; i < grid.rows; i += 3)
    for (int j = 0; j < grid.cols; j += 2) {
      const auto p = modal_transfer(room, grid.position(i, j), w, modes);
      EXPECT_LE(std::abs(field.values(i, j) - p), 1e-10 * std::abs(p));
    }
}

TEST(Grid, PositionsSpanWallToWall) {
  const Grid grid{32, 32, 1.25, shoebox()};
  EXPECT_DOUBLE_EQ(grid.position(0, 0).x, 0.0);
  EXPECT_DOUBLE_EQ(grid.position(31, 31).x, 4.0);
  EXPECT_DOUBLE_EQ(grid.position(31, 31).y, 3.0);
  EXPECT_DOUBLE_EQ(grid.position(5, 7).z, 1.25);
}

TEST(Room, InvalidGeometryRejected) {
  RoomSpec zero{0.0, 3.0, 2.7, 0.6, {0.1, 0.1, 0.1}};
  EXPECT_THROW(zero.validate(), DomainError);
  RoomSpec outside = shoebox();
  outside.source = {5.0, 1.0, 1.0};
  EXPECT_THROW(outside.validate(), DomainError);
  Grid above{32, 32, 3.0, shoebox()};
  EXPECT_THROW(above.validate(), DomainError);
  EXPECT_THROW(simulate_rtf(shoebox(), Grid{32, 32, 1.0, shoebox()}, -1.0), DomainError);
}

TEST(Field, MatchesGoldenReference) {
  std::ifstream in(SFDIFF_GOLDEN_DIR "/desk_room_field.csv");
  ASSERT_TRUE(in.good());
  std::string line;
  std::getline(in, line);
  const RoomSpec room{3.7, 7.0, 26.1, 0.6, {0.9, 0.3, 2.4}};
  const Grid grid{32, 32, 1.25, room};
  const auto field = simulate_rtf(room, grid, omega_of(98.0), 4.0);
  double peak = 0.0;
  for (const auto& v : field.values.values()) peak = std::max(peak, std::abs(v));
  int count = 0;
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    int i, j;
    double re, im;
    row >> i >> j >> re >> im;
    EXPECT_LE(std::abs(field.values(i, j) - std::complex<double>(re, im)), 1e-9 * peak) << i << "," << j;
    ++count;
  }
  EXPECT_EQ(count, 1024);
}

TEST(Field, MagnitudeIsModulus) {
  const auto room = shoebox();
  const Grid grid{4, 4, 1.0, room};
  const auto field = simulate_rtf(room, grid, omega_of(80.0));
  const auto mag = magnitude(field);
  for (std::size_t k = 0; k < mag.values.size(); ++k) EXPECT_DOUBLE_EQ(mag.values[k], std::abs(field.values[k]));
}
