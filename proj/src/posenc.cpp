#include "xmodal/posenc.hpp"

#include <cmath>
#include <stdexcept>

namespace xmodal {

FeatureMatrix pe_2d(GridShape grid, std::size_t dim) {
  if (dim == 0 || dim % 4 != 0) {
    throw std::invalid_argument("pe_2d: dim must be a positive multiple of 4");
  }
  if (grid.cells() == 0) throw std::invalid_argument("pe_2d: empty grid");
  FeatureMatrix pe(grid.cells(), dim);
  const std::size_t half = dim / 2;
  const std::size_t bands = dim / 4;
  for (std::size_t y = 0; y < grid.height; ++y) {
    for (std::size_t x = 0; x < grid.width; ++x) {
      auto row = pe.row(y * grid.width + x);
      for (std::size_t k = 0; k < bands; ++k) {
        double omega = std::pow(10000.0, -4.0 * static_cast<double>(k) / static_cast<double>(dim));
        row[2 * k] = std::sin(static_cast<double>(x) * omega);
        row[2 * k + 1] = std::cos(static_cast<double>(x) * omega);
        row[half + 2 * k] = std::sin(static_cast<double>(y) * omega);
        row[half + 2 * k + 1] = std::cos(static_cast<double>(y) * omega);
      }
    }
  }
  return pe;
}

void add_pe(FeatureMatrix& features, GridShape grid, bool preserve_zero_rows) {
  if (features.rows != grid.cells()) {
    throw std::invalid_argument("add_pe: feature rows do not match grid cells");
  }
  FeatureMatrix pe = pe_2d(grid, features.dim);
  for (std::size_t r = 0; r < features.rows; ++r) {
    auto dst = features.row(r);
    if (preserve_zero_rows && row_is_zero(dst)) continue;
    auto src = pe.row(r);
    for (std::size_t j = 0; j < features.dim; ++j) dst[j] += src[j];
  }
}

}  // namespace xmodal
