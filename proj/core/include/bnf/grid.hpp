#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "bnf/bernstein.hpp"
#include "bnf/error.hpp"

namespace bnf {

/// A rectangular x1-x2 window sampled at cell centers.
struct GridWindow {
  Interval x1{-1.0, 1.0};
  Interval x2{-1.0, 1.0};
  int nx = 50;
  int ny = 50;

  void validate() const {
    detail::require(x1.lo < x1.hi && x2.lo < x2.hi, "grid window must have lo < hi");
    detail::require(nx > 0 && ny > 0, "grid resolution must be positive");
  }
  double x1_center(int i) const { return x1.lo + (i + 0.5) * (x1.hi - x1.lo) / nx; }
  double x2_center(int j) const { return x2.lo + (j + 0.5) * (x2.hi - x2.lo) / ny; }
  double cell_area() const { return (x1.hi - x1.lo) / nx * (x2.hi - x2.lo) / ny; }
};

/// Density values; values[i * ny + j] belongs to (x1_center(i), x2_center(j)).
struct DensityGrid {
  GridWindow window;
  std::vector<double> values;

  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * window.ny + j]; }
  double mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * window.cell_area();
  }
};

/// Half the L1 distance between two grids over the same window.
inline double total_variation(const DensityGrid& a, const DensityGrid& b) {
  detail::require(a.values.size() == b.values.size(), "total_variation: grid size mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) s += std::abs(a.values[k] - b.values[k]);
  return 0.5 * s * a.window.cell_area();
}

}  // namespace bnf
