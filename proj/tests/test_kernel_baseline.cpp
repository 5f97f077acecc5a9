#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "sfdiff/errors.hpp"
#include "sfdiff/eval.hpp"
#include "sfdiff/kernel_baseline.hpp"

using namespace sfdiff;

namespace {

std::vector<Vec3> grid_points(int n, double spacing) {
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.push_back({i * spacing, j * spacing, 1.0});
  return out;
}

}  // namespace

TEST(Kernel, SincValues) {
  EXPECT_DOUBLE_EQ(helmholtz_kernel({0, 0, 0}, {0, 0, 0}, 3.0), 1.0);
  EXPECT_NEAR(helmholtz_kernel({0, 0, 0}, {1, 0, 0}, std::numbers::pi), 0.0, 1e-15);
  EXPECT_NEAR(helmholtz_kernel({0, 0, 0}, {0, 2, 0}, 0.25), std::sin(0.5) / 0.5, 1e-15);
}

TEST(Kernel, GramIsSymmetricWithUnitDiagonal) {
  const auto pts = grid_points(4, 0.3);
  const auto K = gram_matrix(pts, 2.0);
  EXPECT_TRUE(K.isApprox(K.transpose(), 0.0));
  for (Eigen::Index i = 0; i < K.rows(); ++i) EXPECT_DOUBLE_EQ(K(i, i), 1.0);
  EXPECT_DOUBLE_EQ(default_lambda(pts, 2.0), 1e-3);
}

TEST(Kernel, InterpolatesAtSmallLambda) {
  const auto pts = grid_points(4, 0.4);
  const double k = 2.0;
  std::vector<std::complex<double>> values;
  for (const auto& p : pts) values.emplace_back(std::cos(k * p.x), std::sin(k * p.y));
  const auto model = fit(pts, values, k, 1e-12);
  const auto pred = predict(model, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_LE(std::abs(pred[i] - values[i]), 1e-6 * std::abs(values[i]));
}

TEST(Kernel, RecoversPlaneWave) {
  const double k = 2.0 * std::numbers::pi * 100.0 / 343.0;
  const auto pts = grid_points(8, 0.35);
  auto wave = [&](const Vec3& r) { return std::exp(std::complex<double>(0.0, k * (0.6 * r.x + 0.8 * r.y))); };
  std::vector<std::complex<double>> values;
  for (const auto& p : pts) values.push_back(wave(p));
  const auto model = fit(pts, values, k, 1e-6);
  const std::vector<Vec3> probe{{1.0, 1.1, 1.0}, {0.52, 2.0, 1.0}, {2.2, 0.3, 1.0}};
  const auto pred = predict(model, probe);
  for (std::size_t i = 0; i < probe.size(); ++i) EXPECT_LT(std::abs(pred[i] - wave(probe[i])), 1e-2);
}

TEST(Kernel, DuplicatesAtZeroLambdaAreSingular) {
  std::vector<Vec3> pts{{0, 0, 0}, {0, 0, 0}, {1, 0, 0}};
  std::vector<double> values{1.0, 1.0, 0.5};
  EXPECT_THROW(fit(pts, values, 1.0, 0.0), NumericalError);
  EXPECT_NO_THROW(fit(pts, values, 1.0, 1e-3));
}

TEST(Kernel, LeaveOneOutMatchesRefits) {
  const auto pts = grid_points(3, 0.5);
  const double k = 1.7, lambda = 1e-2;
  std::vector<std::complex<double>> values;
  for (const auto& p : pts) values.emplace_back(std::cos(k * p.x + 0.3 * p.y), 0.1 * p.x);
  double err = 0.0, energy = 0.0;
  for (std::size_t h = 0; h < pts.size(); ++h) {
    std::vector<Vec3> rest_p;
    std::vector<std::complex<double>> rest_v;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (i != h) {
        rest_p.push_back(pts[i]);
        rest_v.push_back(values[i]);
      }
    const auto model = fit(rest_p, rest_v, k, lambda);
    err += std::norm(predict(model, std::span(&pts[h], 1))[0] - values[h]);
    energy += std::norm(values[h]);
  }
  EXPECT_NEAR(loo_relative_error(pts, values, k, lambda), err / energy, 1e-9);
  const auto grid = default_lambda_grid();
  const double best = select_lambda_loo(pts, values, k, grid);
  EXPECT_NE(std::find(grid.begin(), grid.end(), best), grid.end());
}

TEST(Baseline, ObservedCellsPassThrough) {
  const RoomSpec room{4.0, 5.0, 3.0, 0.6, {1.0, 1.2, 1.4}};
  const Grid grid{32, 32, 1.2, room};
  Rng rng = derive_rng(4, 0);
  const auto sample = make_sample(grid, 120.0, sample_mask(rng, 128), 2.0);
  for (auto mode : {BaselineMode::Magnitude, BaselineMode::Complex}) {
    BaselineOptions options;
    options.mode = mode;
    const auto est = reconstruct_slice(sample, options);
    for (auto c : sample.mask.observed_cells()) EXPECT_DOUBLE_EQ(est[c], sample.magnitude[c]);
    for (double v : est.values()) EXPECT_GE(v, 0.0);
    EXPECT_LT(squared_error_ratio(est, as_double(sample.magnitude)), 1.0);
  }
}

TEST(Baseline, FullMaskReproducesTruth) {
  const RoomSpec room{4.0, 5.0, 3.0, 0.6, {1.0, 1.2, 1.4}};
  const auto sample = make_sample(Grid{32, 32, 1.2, room}, 60.0, ObservationMask::full(32, 32), 2.0);
  const auto est = reconstruct_slice(sample, BaselineOptions{});
  EXPECT_EQ(ratio_to_db(squared_error_ratio(est, as_double(sample.magnitude))), kNmseFloorDb);
}

TEST(Kernel, WeightsMatchIndependentSolve) {
  const auto pts = grid_points(5, 0.45);
  const double k = 1.7, lambda = 1e-3;
  std::vector<std::complex<double>> values;
  for (std::size_t i = 0; i < pts.size(); ++i) values.emplace_back(std::sin(0.3 * i), std::cos(0.7 * i));
  const auto model = fit(pts, values, k, lambda);
  const Eigen::Index m = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXcd A(m, m);
  Eigen::VectorXcd s(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    s(i) = values[i];
    for (Eigen::Index j = 0; j < m; ++j) A(i, j) = helmholtz_kernel(pts[i], pts[j], k) + (i == j ? lambda : 0.0);
  }
  const Eigen::VectorXcd w = A.colPivHouseholderQr().solve(s);
  EXPECT_LE((model.weights - w).norm(), 1e-8 * w.norm());
}

TEST(Kernel, SingleObservationClosedForm) {
  const std::vector<Vec3> pts{{0.5, 0.5, 1.0}};
  const std::vector<std::complex<double>> values{{2.0, -1.0}};
  const auto model = fit(pts, values, 3.0, 0.25);
  EXPECT_NEAR(std::abs(model.weights(0) - values[0] / 1.25), 0.0, 1e-15);
  const std::vector<Vec3> probe{{0.5, 1.0, 1.0}};
  const auto pred = predict(model, probe);
  EXPECT_NEAR(std::abs(pred[0] - values[0] / 1.25 * helmholtz_kernel(pts[0], probe[0], 3.0)), 0.0, 1e-15);
}

TEST(Kernel, RidgeShrinksPredictions) {
  const auto pts = grid_points(4, 0.5);
  std::vector<double> values;
  for (std::size_t i = 0; i < pts.size(); ++i) values.push_back(1.0 + 0.1 * static_cast<double>(i % 5));
  double previous = std::numeric_limits<double>::infinity();
  for (double lambda : {1e-6, 1e-3, 1e-1, 1.0, 10.0}) {
    const auto pred = predict(fit(pts, values, 2.0, lambda), pts);
    double norm = 0.0;
    for (const auto& p : pred) norm += std::norm(p);
    EXPECT_LT(norm, previous);
    previous = norm;
  }
  const auto pred = predict(fit(pts, values, 2.0, 1e12), pts);
  for (const auto& p : pred) EXPECT_LT(std::abs(p), 1e-10);
}

TEST(Kernel, PermutationInvariant) {
  const auto pts = grid_points(4, 0.4);
  std::vector<double> values;
  for (std::size_t i = 0; i < pts.size(); ++i) values.push_back(std::cos(0.9 * static_cast<double>(i)));
  std::vector<Vec3> rpts(pts.rbegin(), pts.rend());
  std::vector<double> rvalues(values.rbegin(), values.rend());
  const std::vector<Vec3> probe{{0.1, 0.7, 1.0}, {1.3, 0.2, 1.0}};
  const auto a = predict(fit(pts, values, 2.5, 1e-3), probe);
  const auto b = predict(fit(rpts, rvalues, 2.5, 1e-3), probe);
  for (std::size_t i = 0; i < probe.size(); ++i) EXPECT_NEAR(std::abs(a[i] - b[i]), 0.0, 1e-10);
}
