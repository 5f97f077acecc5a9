#pragma once

// Kernel ridge regression with the free-field Helmholtz kernel sinc(k |r1 - r2|).

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <span>
#include <vector>

#include "sfdiff/dataset.hpp"
#include "sfdiff/room_acoustics.hpp"

namespace sfdiff {

double helmholtz_kernel(const Vec3& r1, const Vec3& r2, double k);

Eigen::MatrixXd gram_matrix(std::span<const Vec3> positions, double k);

struct KernelModel {
  std::vector<Vec3> positions;
  double wavenumber = 0.0;  // rad/m
  double lambda = 0.0;
  Eigen::VectorXcd weights;
};

// Solves (K + lambda I) w = s with a pivoted LDL^T factorization. Real inputs
// are fitted through the complex overload with zero imaginary part.
KernelModel fit(std::span<const Vec3> positions, std::span<const std::complex<double>> values, double k,
                double lambda);
KernelModel fit(std::span<const Vec3> positions, std::span<const double> values, double k, double lambda);

std::vector<std::complex<double>> predict(const KernelModel& model, std::span<const Vec3> targets);

// 1e-3 * trace(K) / m; the Gram diagonal is one, so this is 1e-3.
double default_lambda(std::span<const Vec3> positions, double k);

// Leave-one-out residual energy, relative to the observation energy, for a
// given lambda (closed form, no refits).
double loo_relative_error(std::span<const Vec3> positions, std::span<const std::complex<double>> values, double k,
                          double lambda);
// Minimizes loo_relative_error over the candidates; first minimum wins.
double select_lambda_loo(std::span<const Vec3> positions, std::span<const std::complex<double>> values, double k,
                         std::span<const double> candidates);
std::vector<double> default_lambda_grid();

enum class BaselineMode { Complex, Magnitude };

struct BaselineOptions {
  BaselineMode mode = BaselineMode::Magnitude;
  std::optional<double> lambda;  // default_lambda when empty
  bool loo_search = false;  // overrides lambda with select_lambda_loo
  double margin = kDefaultMargin;  // simulator truncation for complex mode
};

// Reconstructs the magnitude on every grid cell. Complex mode fits the complex
// field at the observed cells (re-simulated from the sample's room metadata
// unless given) and returns the modulus of the prediction; magnitude mode fits
// the magnitudes and clamps negative predictions to zero. Observed cells are
// copied from sample.magnitude.
Field2D<double> reconstruct_slice(const Sample& sample, const BaselineOptions& options,
                                  const ComplexField* complex_field = nullptr);

}  // namespace sfdiff
