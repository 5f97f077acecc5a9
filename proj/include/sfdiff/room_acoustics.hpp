#pragma once

// Rigid-walled rectangular room: modal (Green's function) synthesis of room
// transfer functions on a horizontal measurement grid.

#include <compare>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "sfdiff/field.hpp"

namespace sfdiff {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct RoomSpec {
  double lx = 0.0;
  double ly = 0.0;
  double lz = 0.0;
  double t60 = 0.0;  // seconds
  Vec3 source;
  double speed_of_sound = 343.0;

  // Throws DomainError unless dimensions, t60 and c are positive and the
  // source lies strictly inside the room.
  void validate() const;
  double volume() const { return lx * ly * lz; }
  double floor_area() const { return lx * ly; }
  // Closed box test, walls included.
  bool contains(const Vec3& r) const;
  // Uniform modal damping constant 3 ln(10) / t60 (1/s).
  double damping() const;

  friend bool operator==(const RoomSpec&, const RoomSpec&) = default;
};

// Regular I x J sampling of the horizontal plane z = z_o spanning the full floor.
struct Grid {
  int rows = kGridSize;  // I
  int cols = kGridSize;  // J
  double z_o = 0.0;
  RoomSpec room;

  void validate() const;
  // (i * lx / (I - 1), j * ly / (J - 1), z_o)
  Vec3 position(int i, int j) const;
  std::vector<Vec3> positions() const;

  friend bool operator==(const Grid&, const Grid&) = default;
};

struct ModeIndex {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  friend auto operator<=>(const ModeIndex&, const ModeIndex&) = default;
};

template <typename T>
struct FieldSlice {
  Field2D<T> values;
  double omega = 0.0;  // rad/s
  Grid grid;
};

using ComplexSlice = FieldSlice<std::complex<double>>;
using MagnitudeSlice = FieldSlice<double>;

inline constexpr double kDefaultMargin = 2.0;
inline constexpr std::size_t kDefaultModeCap = 2'000'000;

double eigen_angular_frequency(const ModeIndex& n, const RoomSpec& room);

// Rigid-wall eigenfunction cos(nx pi x / lx) cos(ny pi y / ly) cos(nz pi z / lz).
double mode_shape(const ModeIndex& n, const Vec3& r, const RoomSpec& room);

// All modes with eigenfrequency <= margin * omega_max, ascending by frequency,
// ties broken lexicographically on (nx, ny, nz).
std::vector<ModeIndex> enumerate_modes(const RoomSpec& room, double omega_max, double margin,
                                       std::size_t max_modes = kDefaultModeCap);

// Damped modal sum over an explicit mode set at a single receiver position.
std::complex<double> modal_transfer(const RoomSpec& room, const Vec3& receiver, double omega,
                                    std::span<const ModeIndex> modes);

// Damped modal sum over an explicit mode set on every grid cell.
ComplexSlice modal_field(const RoomSpec& room, const Grid& grid, double omega,
                         std::span<const ModeIndex> modes);

ComplexSlice simulate_rtf(const RoomSpec& room, const Grid& grid, double omega,
                          double margin = kDefaultMargin);

MagnitudeSlice magnitude(const ComplexSlice& field);

}  // namespace sfdiff
