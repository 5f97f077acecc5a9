#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "sfdiff/errors.hpp"

namespace sfdiff {

inline constexpr int kGridSize = 32;
inline constexpr int kGridCells = kGridSize * kGridSize;

// Dense I x J array stored row-major: (i, j) lives at i * J + j.
template <typename T>
class Field2D {
 public:
  Field2D() = default;
  Field2D(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw DomainError("Field2D: negative dimension");
  }
  Field2D(int rows, int cols, std::vector<T> values) : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != static_cast<std::size_t>(rows) * cols)
      throw ContractError("Field2D: value count does not match dimensions");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  const T& operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  T& operator[](std::size_t k) { return data_[k]; }
  const T& operator[](std::size_t k) const { return data_[k]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const Field2D& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

  friend bool operator==(const Field2D&, const Field2D&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using ComplexField = Field2D<std::complex<double>>;
using MagnitudeField = Field2D<double>;

}  // namespace sfdiff
