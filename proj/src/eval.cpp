#include "sfdiff/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "binary_io.hpp"
#include "png.hpp"
#include "sfdiff/parallel.hpp"

namespace sfdiff {

double squared_error_ratio(const Field2D<double>& estimate, const Field2D<double>& truth, Region region,
                           const ObservationMask* mask) {
  if (!estimate.same_shape(truth)) throw ContractError("nmse: estimate and truth differ in shape");
  if (region == Region::UnknownOnly && mask == nullptr) throw ContractError("nmse: unknown-only region needs a mask");
  if (mask != nullptr && (mask->rows() != truth.rows() || mask->cols() != truth.cols()))
    throw ContractError("nmse: mask shape differs from the field");
  double err = 0.0, energy = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (region == Region::UnknownOnly && mask->observed(k)) continue;
    const double d = estimate[k] - truth[k];
    err += d * d;
    energy += truth[k] * truth[k];
  }
  if (!(energy > 0.0)) throw DomainError("nmse: ground truth has zero norm over the region");
  return err / energy;
}

double ratio_to_db(double mean_ratio) {
  if (!(mean_ratio >= 0.0)) throw DomainError("nmse: negative or undefined error ratio");
  const double db = 10.0 * std::log10(mean_ratio);
  return std::max(db, kNmseFloorDb);
}

double nmse(std::span<const Field2D<double>> estimates, std::span<const Field2D<double>> truths, Region region,
            std::span<const ObservationMask> masks) {
  if (estimates.empty() || estimates.size() != truths.size())
    throw ContractError("nmse: need equal-length, nonempty estimate and truth lists");
  if (!masks.empty() && masks.size() != truths.size()) throw ContractError("nmse: mask list length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    try {
      sum += squared_error_ratio(estimates[i], truths[i], region, masks.empty() ? nullptr : &masks[i]);
    } catch (const DomainError& e) {
      throw DomainError("sample " + std::to_string(i) + ": " + e.what());
    }
  }
  return ratio_to_db(sum / static_cast<double>(truths.size()));
}

std::vector<SweepRow> aggregate(std::span<const EvalRecord> records) {
  std::map<std::pair<double, int>, std::pair<double, std::size_t>> cells;
  for (const auto& r : records) {
    auto& cell = cells[{r.frequency_hz, r.m}];
    cell.first += r.ratio;
    ++cell.second;
  }
  std::vector<SweepRow> rows;
  for (const auto& [key, value] : cells)
    rows.push_back({key.first, key.second, ratio_to_db(value.first / static_cast<double>(value.second)), value.second});
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "frequency_hz,m,nmse_db,n_samples\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%.6f,%d,%.4f,%zu\n", r.frequency_hz, r.m, r.nmse_db, r.n_samples);
    out += line;
  }
  return out;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
  detail::write_file(path.string(), sweep_csv(rows));
}

Field2D<double> as_double(const Field2D<float>& field) {
  Field2D<double> out(field.rows(), field.cols());
  for (std::size_t k = 0; k < field.size(); ++k) out[k] = field[k];
  return out;
}

std::vector<EvalRecord> evaluate(const std::vector<std::vector<Sample>>& samples_by_density,
                                 std::span<const int> densities, std::span<const int> requested,
                                 const std::string& method_name, const Reconstructor& method, Region region,
                                 unsigned threads) {
  if (samples_by_density.size() != densities.size()) throw ContractError("evaluate: one sample list per density");
  std::vector<EvalRecord> records;
  for (std::size_t d = 0; d < densities.size(); ++d) {
    if (std::find(requested.begin(), requested.end(), densities[d]) == requested.end()) continue;
    const auto& samples = samples_by_density[d];
    std::vector<EvalRecord> part(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) {
      const auto& s = samples[i];
      const auto estimate = method(s, i);
      const double ratio = squared_error_ratio(estimate, as_double(s.magnitude), region, &s.mask);
      part[i] = {i, method_name, densities[d], s.frequency_hz, ratio, ratio_to_db(ratio)};
    });
    records.insert(records.end(), part.begin(), part.end());
  }
  return records;
}

std::vector<SweepRow> sweep(const std::vector<std::vector<Sample>>& samples_by_density, std::span<const int> densities,
                            std::span<const int> requested, const std::string& method_name,
                            const Reconstructor& method, Region region, unsigned threads) {
  const auto records = evaluate(samples_by_density, densities, requested, method_name, method, region, threads);
  return aggregate(records);
}

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 17> kViridis{{{68, 1, 84},    {72, 24, 106},  {71, 45, 123},
                                                                 {66, 64, 134},  {59, 82, 139},  {51, 99, 141},
                                                                 {44, 114, 142}, {38, 130, 142}, {33, 145, 140},
                                                                 {31, 160, 136}, {40, 174, 128}, {63, 188, 115},
                                                                 {94, 201, 98},  {132, 212, 75}, {173, 220, 48},
                                                                 {216, 226, 25}, {253, 231, 37}}};

std::array<std::uint8_t, 3> viridis(double u) {
  u = std::clamp(std::isfinite(u) ? u : 0.0, 0.0, 1.0) * 16.0;
  const int lo = std::min(static_cast<int>(u), 15);
  const double f = u - lo;
  std::array<std::uint8_t, 3> c{};
  for (int k = 0; k < 3; ++k)
    c[k] = static_cast<std::uint8_t>(std::lround(kViridis[lo][k] + f * (kViridis[lo + 1][k] - kViridis[lo][k])));
  return c;
}

double unit(double v, const ColorScale& s) { return s.max > s.min ? (v - s.min) / (s.max - s.min) : 0.0; }

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

constexpr int kMargin = 8;
constexpr int kBarWidth = 16;
constexpr int kLabelWidth = 6 * 10;

void check_finite(const Field2D<double>& field) {
  for (double v : field.values())
    if (!std::isfinite(v)) throw DomainError("heatmap: field contains non-finite values");
}

void draw_field(detail::RgbImage& img, int x0, int y0, const Field2D<double>& field, const ColorScale& scale, int px) {
  for (int i = 0; i < field.rows(); ++i)
    for (int j = 0; j < field.cols(); ++j) {
      const auto c = viridis(unit(field(i, j), scale));
      // Row index i runs along x (first grid axis), drawn bottom to top.
      for (int dy = 0; dy < px; ++dy)
        for (int dx = 0; dx < px; ++dx) img.set(x0 + j * px + dx, y0 + (field.rows() - 1 - i) * px + dy, c[0], c[1], c[2]);
    }
}

void draw_colorbar(detail::RgbImage& img, int x0, int y0, int height, const ColorScale& scale) {
  for (int y = 0; y < height; ++y) {
    const auto c = viridis(1.0 - static_cast<double>(y) / std::max(1, height - 1));
    for (int x = 0; x < kBarWidth; ++x) img.set(x0 + x, y0 + y, c[0], c[1], c[2]);
  }
  detail::draw_text(img, x0 + kBarWidth + 4, y0, format_value(scale.max));
  detail::draw_text(img, x0 + kBarWidth + 4, y0 + height - 7, format_value(scale.min));
}

std::vector<std::pair<std::string, std::string>> range_text(const ColorScale& scale) {
  return {{"min_magnitude", format_value(scale.min)}, {"max_magnitude", format_value(scale.max)}};
}

}  // namespace

ColorScale field_range(const Field2D<double>& field) {
  check_finite(field);
  if (field.size() == 0) return {};
  const auto [lo, hi] = std::minmax_element(field.storage().begin(), field.storage().end());
  return {*lo, *hi};
}

std::string encode_heatmap(const Field2D<double>& field, const ColorScale& scale, int cell_pixels) {
  return encode_panel(nullptr, std::span<const Field2D<double>>(&field, 1), scale, cell_pixels);
}

std::string encode_panel(const ObservationMask* mask, std::span<const Field2D<double>> fields, const ColorScale& scale,
                         int cell_pixels) {
  if (fields.empty()) throw ContractError("heatmap: nothing to draw");
  const int rows = fields.front().rows(), cols = fields.front().cols();
  const int min_cell = std::max(1, (256 + std::max(rows, cols) - 1) / std::max(rows, cols));
  const int px = std::max(cell_pixels, min_cell);
  for (const auto& f : fields) {
    if (f.rows() != rows || f.cols() != cols) throw ContractError("heatmap: panels differ in shape");
    check_finite(f);
  }
  const int panels = static_cast<int>(fields.size()) + (mask ? 1 : 0);
  const int pw = cols * px, ph = rows * px;
  const int width = kMargin + panels * (pw + kMargin) + kBarWidth + 4 + kLabelWidth + kMargin;
  const int height = ph + 2 * kMargin;
  detail::RgbImage img(width, height, 255);
  int x = kMargin;
  if (mask) {
    if (mask->rows() != rows || mask->cols() != cols) throw ContractError("heatmap: mask differs in shape");
    Field2D<double> m(rows, cols);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = mask->observed(k) ? 1.0 : 0.0;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        const std::uint8_t v = m(i, j) > 0 ? 255 : 0;
        for (int dy = 0; dy < px; ++dy)
          for (int dx = 0; dx < px; ++dx) img.set(x + j * px + dx, kMargin + (rows - 1 - i) * px + dy, v, v, v);
      }
    x += pw + kMargin;
  }
  for (const auto& f : fields) {
    draw_field(img, x, kMargin, f, scale, px);
    x += pw + kMargin;
  }
  draw_colorbar(img, x, kMargin, ph, scale);
  return detail::encode_png(img, range_text(scale));
}

void render_heatmap(const Field2D<double>& field, const std::filesystem::path& path, int cell_pixels) {
  render_heatmap(field, field_range(field), path, cell_pixels);
}

void render_heatmap(const Field2D<double>& field, const ColorScale& scale, const std::filesystem::path& path,
                    int cell_pixels) {
  detail::write_file(path.string(), encode_heatmap(field, scale, cell_pixels));
}

void render_panel(const ObservationMask* mask, std::span<const Field2D<double>> fields, const ColorScale& scale,
                  const std::filesystem::path& path, int cell_pixels) {
  detail::write_file(path.string(), encode_panel(mask, fields, scale, cell_pixels));
}

}  // namespace sfdiff
