#pragma once

#include <cstddef>
#include <vector>

#include "mtlink/errors.hpp"

namespace mtlink {

/// Plain row-major dense matrix of doubles. Value type for attention maps,
/// co-occurrence matrices and other tape-free data.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

}  // namespace mtlink
