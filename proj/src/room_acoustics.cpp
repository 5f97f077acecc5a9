#include "sfdiff/room_acoustics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <tuple>

namespace sfdiff {
namespace {

constexpr double kPi = std::numbers::pi;

double neumann_factor(int n) { return n == 0 ? 1.0 : 2.0; }

// Modal normalization V / (eps_x eps_y eps_z).
double modal_norm(const ModeIndex& n, const RoomSpec& room) {
  return room.volume() / (neumann_factor(n.nx) * neumann_factor(n.ny) * neumann_factor(n.nz));
}

std::complex<double> modal_denominator(const ModeIndex& n, const RoomSpec& room, double omega) {
  const double wn = eigen_angular_frequency(n, room);
  const double delta = room.damping();
  return modal_norm(n, room) * std::complex<double>(wn * wn - omega * omega, 2.0 * delta * wn);
}

void check_frequency(double omega) {
  if (!(omega > 0.0) || !std::isfinite(omega)) throw DomainError("angular frequency must be positive and finite");
}

}  // namespace

void RoomSpec::validate() const {
  if (!(lx > 0.0 && ly > 0.0 && lz > 0.0) || !std::isfinite(volume()))
    throw DomainError("room dimensions must be positive and finite");
  if (!(t60 > 0.0) || !std::isfinite(t60)) throw DomainError("t60 must be positive");
  if (!(speed_of_sound > 0.0) || !std::isfinite(speed_of_sound))
    throw DomainError("speed of sound must be positive");
  if (!(source.x > 0.0 && source.x < lx && source.y > 0.0 && source.y < ly && source.z > 0.0 && source.z < lz))
    throw DomainError("source must lie strictly inside the room");
}

bool RoomSpec::contains(const Vec3& r) const {
  return r.x >= 0.0 && r.x <= lx && r.y >= 0.0 && r.y <= ly && r.z >= 0.0 && r.z <= lz;
}

double RoomSpec::damping() const { return 3.0 * std::log(10.0) / t60; }

void Grid::validate() const {
  room.validate();
  if (rows < 2 || cols < 2) throw DomainError("grid needs at least 2 x 2 points");
  if (!(z_o >= 0.0 && z_o <= room.lz)) throw DomainError("grid plane height outside [0, lz]");
}

Vec3 Grid::position(int i, int j) const {
  return {i * room.lx / (rows - 1), j * room.ly / (cols - 1), z_o};
}

std::vector<Vec3> Grid::positions() const {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out.push_back(position(i, j));
  return out;
}

double eigen_angular_frequency(const ModeIndex& n, const RoomSpec& room) {
  const double ax = n.nx / room.lx;
  const double ay = n.ny / room.ly;
  const double az = n.nz / room.lz;
  return room.speed_of_sound * kPi * std::sqrt(ax * ax + ay * ay + az * az);
}

double mode_shape(const ModeIndex& n, const Vec3& r, const RoomSpec& room) {
  if (!room.contains(r)) throw DomainError("mode_shape: position outside the room");
  return std::cos(n.nx * kPi * r.x / room.lx) * std::cos(n.ny * kPi * r.y / room.ly) *
         std::cos(n.nz * kPi * r.z / room.lz);
}

std::vector<ModeIndex> enumerate_modes(const RoomSpec& room, double omega_max, double margin,
                                       std::size_t max_modes) {
  room.validate();
  check_frequency(omega_max);
  if (!(margin >= 1.0) || !std::isfinite(margin)) throw DomainError("mode margin must be >= 1");
  const double limit = margin * omega_max;
  // nx <= limit * lx / (c pi) along each axis.
  auto axis_max = [&](double l) { return static_cast<int>(std::floor(limit * l / (room.speed_of_sound * kPi))) + 1; };
  const int mx = axis_max(room.lx);
  const int my = axis_max(room.ly);
  const int mz = axis_max(room.lz);

  std::vector<std::pair<double, ModeIndex>> found;
  for (int nx = 0; nx <= mx; ++nx) {
    for (int ny = 0; ny <= my; ++ny) {
      for (int nz = 0; nz <= mz; ++nz) {
        const ModeIndex n{nx, ny, nz};
        const double wn = eigen_angular_frequency(n, room);
        if (wn > limit) break;  // increasing in nz
        if (found.size() == max_modes)
          throw ResourceError("enumerate_modes: more than " + std::to_string(max_modes) + " modes below " +
                              std::to_string(limit) + " rad/s");
        found.emplace_back(wn, n);
      }
    }
  }
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return std::tie(a.first, a.second) < std::tie(b.first, b.second); });
  std::vector<ModeIndex> modes;
  modes.reserve(found.size());
  for (const auto& [w, n] : found) modes.push_back(n);
  return modes;
}

std::complex<double> modal_transfer(const RoomSpec& room, const Vec3& receiver, double omega,
                                    std::span<const ModeIndex> modes) {
  room.validate();
  check_frequency(omega);
  std::complex<double> sum = 0.0;
  for (const auto& n : modes) {
    const double num = mode_shape(n, receiver, room) * mode_shape(n, room.source, room);
    sum += num / modal_denominator(n, room, omega);
  }
  return sum;
}

ComplexSlice modal_field(const RoomSpec& room, const Grid& grid, double omega, std::span<const ModeIndex> modes) {
  grid.validate();
  room.validate();
  if (!(grid.room == room)) throw ContractError("grid belongs to a different room");
  check_frequency(omega);

  int max_nx = 0, max_ny = 0;
  for (const auto& n : modes) {
    max_nx = std::max(max_nx, n.nx);
    max_ny = std::max(max_ny, n.ny);
  }
  // Fold the z factor and the source term into a (nx, ny) coefficient table,
  // then P = Cx * A * Cy^T with Cx(i, nx) = cos(nx pi x_i / lx).
  Eigen::MatrixXcd coeff = Eigen::MatrixXcd::Zero(max_nx + 1, max_ny + 1);
  for (const auto& n : modes) {
    const double zshape = std::cos(n.nz * kPi * grid.z_o / room.lz);
    const double num = zshape * mode_shape(n, room.source, room);
    coeff(n.nx, n.ny) += num / modal_denominator(n, room, omega);
  }
  Eigen::MatrixXd cx(grid.rows, max_nx + 1);
  for (int i = 0; i < grid.rows; ++i)
    for (int nx = 0; nx <= max_nx; ++nx) cx(i, nx) = std::cos(nx * kPi * grid.position(i, 0).x / room.lx);
  Eigen::MatrixXd cy(grid.cols, max_ny + 1);
  for (int j = 0; j < grid.cols; ++j)
    for (int ny = 0; ny <= max_ny; ++ny) cy(j, ny) = std::cos(ny * kPi * grid.position(0, j).y / room.ly);

  const Eigen::MatrixXcd field = cx.cast<std::complex<double>>() * coeff * cy.cast<std::complex<double>>().transpose();

  ComplexSlice out{Field2D<std::complex<double>>(grid.rows, grid.cols), omega, grid};
  for (int i = 0; i < grid.rows; ++i) {
    for (int j = 0; j < grid.cols; ++j) {
      const auto v = field(i, j);
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
        throw NumericalError("modal_field: non-finite value at cell (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      out.values(i, j) = v;
    }
  }
  return out;
}

ComplexSlice simulate_rtf(const RoomSpec& room, const Grid& grid, double omega, double margin) {
  const auto modes = enumerate_modes(room, omega, margin);
  return modal_field(room, grid, omega, modes);
}

MagnitudeSlice magnitude(const ComplexSlice& field) {
  MagnitudeSlice out{Field2D<double>(field.values.rows(), field.values.cols()), field.omega, field.grid};
  for (std::size_t k = 0; k < field.values.size(); ++k) out.values[k] = std::abs(field.values[k]);
  return out;
}

}  // namespace sfdiff
