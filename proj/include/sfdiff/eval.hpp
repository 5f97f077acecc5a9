#pragma once

// Reconstruction metrics, per-(frequency, density) sweeps and heatmap output.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sfdiff/dataset.hpp"
#include "sfdiff/field.hpp"

namespace sfdiff {

enum class Region { Full, UnknownOnly };

inline constexpr double kNmseFloorDb = -120.0;

// ||estimate - truth||^2 / ||truth||^2 over the region (the mask is required
// for UnknownOnly). Throws DomainError when the truth has zero norm there.
double squared_error_ratio(const Field2D<double>& estimate, const Field2D<double>& truth, Region region = Region::Full,
                           const ObservationMask* mask = nullptr);

// 10 log10 of a mean ratio, floored at -120 dB.
double ratio_to_db(double mean_ratio);

// 10 log10 of the mean per-sample squared-error ratio.
double nmse(std::span<const Field2D<double>> estimates, std::span<const Field2D<double>> truths,
            Region region = Region::Full, std::span<const ObservationMask> masks = {});

struct EvalRecord {
  std::uint64_t sample_id = 0;
  std::string method;  // "sf-diff" | "kernel"
  int m = 0;
  double frequency_hz = 0.0;
  double ratio = 0.0;
  double nmse_db = 0.0;  // this sample's contribution on its own, in dB
};

struct SweepRow {
  double frequency_hz = 0.0;
  int m = 0;
  double nmse_db = 0.0;
  std::size_t n_samples = 0;
};

// Groups records by (frequency, m), ascending in both.
std::vector<SweepRow> aggregate(std::span<const EvalRecord> records);

std::string sweep_csv(std::span<const SweepRow> rows);
void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);

using Reconstructor = std::function<Field2D<double>(const Sample&, std::size_t index)>;

// Evaluates `method` on every slice of every requested density.
// samples_by_density[d] holds the slices masked with densities[d] microphones;
// densities not listed in `requested` are skipped.
std::vector<EvalRecord> evaluate(const std::vector<std::vector<Sample>>& samples_by_density,
                                 std::span<const int> densities, std::span<const int> requested,
                                 const std::string& method_name, const Reconstructor& method, Region region,
                                 unsigned threads = 1);

std::vector<SweepRow> sweep(const std::vector<std::vector<Sample>>& samples_by_density, std::span<const int> densities,
                            std::span<const int> requested, const std::string& method_name,
                            const Reconstructor& method, Region region, unsigned threads = 1);

Field2D<double> as_double(const Field2D<float>& field);

struct ColorScale {
  double min = 0.0;
  double max = 0.0;
};

ColorScale field_range(const Field2D<double>& field);

// Nearest-neighbour upscaled heatmap (viridis) with an annotated colour bar.
void render_heatmap(const Field2D<double>& field, const std::filesystem::path& path, int cell_pixels = 8);
void render_heatmap(const Field2D<double>& field, const ColorScale& scale, const std::filesystem::path& path,
                    int cell_pixels = 8);
std::string encode_heatmap(const Field2D<double>& field, const ColorScale& scale, int cell_pixels = 8);

// Side-by-side panels sharing one colour scale; the mask panel, if given, is
// drawn first in black (unknown) and white (observed).
std::string encode_panel(const ObservationMask* mask, std::span<const Field2D<double>> fields, const ColorScale& scale,
                         int cell_pixels = 8);
void render_panel(const ObservationMask* mask, std::span<const Field2D<double>> fields, const ColorScale& scale,
                  const std::filesystem::path& path, int cell_pixels = 8);

}  // namespace sfdiff
