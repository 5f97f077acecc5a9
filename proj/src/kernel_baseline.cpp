#include "sfdiff/kernel_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sfdiff {
namespace {

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void check_wavenumber(double k) {
  if (!(k > 0.0) || !std::isfinite(k)) throw DomainError("wavenumber must be positive");
}

bool has_duplicates(std::span<const Vec3> positions) {
  for (std::size_t a = 0; a < positions.size(); ++a)
    for (std::size_t b = a + 1; b < positions.size(); ++b)
      if (positions[a] == positions[b]) return true;
  return false;
}

Eigen::LDLT<Eigen::MatrixXd> factorize(std::span<const Vec3> positions, double k, double lambda) {
  Eigen::MatrixXd system = gram_matrix(positions, k);
  system.diagonal().array() += lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
  const double rcond = ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0;
  if (ldlt.info() != Eigen::Success || (lambda == 0.0 && has_duplicates(positions)) || !(rcond > 0.0))
    throw NumericalError("kernel system is singular (lambda = " + std::to_string(lambda) +
                         ", estimated reciprocal condition = " + std::to_string(rcond) + ")");
  return ldlt;
}

std::vector<Vec3> cell_positions(const Grid& grid, std::span<const std::size_t> cells) {
  std::vector<Vec3> out;
  out.reserve(cells.size());
  for (auto c : cells) out.push_back(grid.position(static_cast<int>(c) / grid.cols, static_cast<int>(c) % grid.cols));
  return out;
}

}  // namespace

double helmholtz_kernel(const Vec3& r1, const Vec3& r2, double k) {
  check_wavenumber(k);
  const double kd = k * distance(r1, r2);
  if (kd == 0.0) return 1.0;
  return std::sin(kd) / kd;
}

Eigen::MatrixXd gram_matrix(std::span<const Vec3> positions, double k) {
  const auto m = static_cast<Eigen::Index>(positions.size());
  Eigen::MatrixXd gram(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    gram(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < m; ++b) gram(a, b) = gram(b, a) = helmholtz_kernel(positions[a], positions[b], k);
  }
  return gram;
}

KernelModel fit(std::span<const Vec3> positions, std::span<const std::complex<double>> values, double k,
                double lambda) {
  check_wavenumber(k);
  if (positions.empty()) throw DomainError("fit: at least one observation is required");
  if (positions.size() != values.size()) throw ContractError("fit: positions and values differ in length");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("fit: lambda must be nonnegative");

  const auto ldlt = factorize(positions, k, lambda);
  const auto m = static_cast<Eigen::Index>(values.size());
  Eigen::MatrixXd rhs(m, 2);
  for (Eigen::Index a = 0; a < m; ++a) {
    rhs(a, 0) = values[a].real();
    rhs(a, 1) = values[a].imag();
  }
  const Eigen::MatrixXd sol = ldlt.solve(rhs);
  if (!sol.allFinite()) throw NumericalError("fit: non-finite weights (rcond = " + std::to_string(ldlt.rcond()) + ")");

  KernelModel model{{positions.begin(), positions.end()}, k, lambda, Eigen::VectorXcd(m)};
  for (Eigen::Index a = 0; a < m; ++a) model.weights(a) = {sol(a, 0), sol(a, 1)};
  return model;
}

KernelModel fit(std::span<const Vec3> positions, std::span<const double> values, double k, double lambda) {
  std::vector<std::complex<double>> complex_values(values.begin(), values.end());
  return fit(positions, complex_values, k, lambda);
}

std::vector<std::complex<double>> predict(const KernelModel& model, std::span<const Vec3> targets) {
  std::vector<std::complex<double>> out(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    std::complex<double> acc = 0.0;
    for (std::size_t a = 0; a < model.positions.size(); ++a)
      acc += model.weights(static_cast<Eigen::Index>(a)) * helmholtz_kernel(targets[t], model.positions[a], model.wavenumber);
    out[t] = acc;
  }
  return out;
}

double default_lambda(std::span<const Vec3> positions, double k) {
  if (positions.empty()) throw DomainError("default_lambda: no observations");
  return 1e-3 * gram_matrix(positions, k).trace() / static_cast<double>(positions.size());
}

double loo_relative_error(std::span<const Vec3> positions, std::span<const std::complex<double>> values, double k,
                          double lambda) {
  if (positions.size() < 2) throw DomainError("leave-one-out needs at least two observations");
  const auto ldlt = factorize(positions, k, lambda);
  const auto m = static_cast<Eigen::Index>(values.size());
  const Eigen::MatrixXd inverse = ldlt.solve(Eigen::MatrixXd::Identity(m, m));
  Eigen::VectorXcd s(m);
  for (Eigen::Index a = 0; a < m; ++a) s(a) = values[a];
  const Eigen::VectorXcd w = inverse.cast<std::complex<double>>() * s;
  double err = 0.0, energy = 0.0;
  for (Eigen::Index a = 0; a < m; ++a) {
    // Held-out residual of ridge regression: w_a / (K + lambda I)^{-1}_aa.
    err += std::norm(w(a) / inverse(a, a));
    energy += std::norm(s(a));
  }
  return energy > 0.0 ? err / energy : err;
}

double select_lambda_loo(std::span<const Vec3> positions, std::span<const std::complex<double>> values, double k,
                         std::span<const double> candidates) {
  if (candidates.empty()) throw DomainError("select_lambda_loo: empty candidate list");
  double best = candidates.front();
  double best_err = std::numeric_limits<double>::infinity();
  for (double lambda : candidates) {
    double err;
    try {
      err = loo_relative_error(positions, values, k, lambda);
    } catch (const NumericalError&) {
      continue;
    }
    if (err < best_err) {
      best_err = err;
      best = lambda;
    }
  }
  return best;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int e = -8; e <= 1; ++e) grid.push_back(std::pow(10.0, e));
  return grid;
}

Field2D<double> reconstruct_slice(const Sample& sample, const BaselineOptions& options,
                                  const ComplexField* complex_field) {
  const auto observed = sample.mask.observed_cells();
  if (observed.empty()) throw DomainError("reconstruct_slice: no observed cells");
  const Grid& grid = sample.grid;
  const double k = sample.omega() / grid.room.speed_of_sound;
  const auto positions = cell_positions(grid, observed);

  std::vector<std::complex<double>> values(observed.size());
  ComplexField simulated;
  if (options.mode == BaselineMode::Complex) {
    if (complex_field == nullptr) {
      simulated = simulate_rtf(grid.room, grid, sample.omega(), options.margin).values;
      complex_field = &simulated;
    }
    if (complex_field->rows() != grid.rows || complex_field->cols() != grid.cols)
      throw ContractError("reconstruct_slice: complex field does not match the grid");
    for (std::size_t a = 0; a < observed.size(); ++a) values[a] = (*complex_field)[observed[a]];
  } else {
    for (std::size_t a = 0; a < observed.size(); ++a) values[a] = sample.magnitude[observed[a]];
  }

  double lambda = options.lambda.value_or(default_lambda(positions, k));
  if (options.loo_search && observed.size() >= 2) {
    const auto candidates = default_lambda_grid();
    lambda = select_lambda_loo(positions, values, k, candidates);
  }
  const auto model = fit(positions, values, k, lambda);

  const auto unknown = sample.mask.unknown_cells();
  const auto predictions = predict(model, cell_positions(grid, unknown));
  Field2D<double> out(grid.rows, grid.cols);
  for (auto c : observed) out[c] = sample.magnitude[c];
  for (std::size_t t = 0; t < unknown.size(); ++t) {
    const auto& u = predictions[t];
    out[unknown[t]] = options.mode == BaselineMode::Complex ? std::abs(u) : std::max(u.real(), 0.0);
  }
  return out;
}

}  // namespace sfdiff
