#pragma once

#include "xmodal/numkit.hpp"

namespace xmodal {

struct GridShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t cells() const { return height * width; }
  bool operator==(const GridShape&) const = default;
};

// Two-dimensional sinusoidal positional encoding for a height x width grid.
// Row index i corresponds to cell (x = i % width, y = i / width). The first
// dim/2 entries encode x, the last dim/2 encode y; each half interleaves
// sin(pos * w_k), cos(pos * w_k) with w_k = 1 / 10000^(4k/dim).
// dim must be divisible by 4.
FeatureMatrix pe_2d(GridShape grid, std::size_t dim);

// Adds pe_2d(grid, features.dim) to features in place. features.rows must
// equal grid.cells(). With preserve_zero_rows, all-zero rows stay zero so a
// masked (absent-view) row never picks up a positional signal.
void add_pe(FeatureMatrix& features, GridShape grid, bool preserve_zero_rows);

}  // namespace xmodal
