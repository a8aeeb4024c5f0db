#pragma once

// Uniform interior grid over the hyperparameter space [0, 1], plus the 1-D
// minimizers used by every learner and oracle in the library.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace tml {

class HyperGrid {
 public:
  /// G interior points u_g = (g + 1) / (G + 1); endpoints are never included.
  explicit HyperGrid(int G = 201) {
    if (G < 3) throw std::invalid_argument("HyperGrid: need at least 3 points");
    spacing_ = 1.0 / (G + 1);
    points_.reserve(static_cast<std::size_t>(G));
    for (int g = 0; g < G; ++g) points_.push_back((g + 1) * spacing_);
  }

  const std::vector<double>& points() const { return points_; }
  double operator[](std::size_t g) const { return points_[g]; }
  std::size_t size() const { return points_.size(); }
  double spacing() const { return spacing_; }
  double front() const { return points_.front(); }
  double back() const { return points_.back(); }

  /// Cells split [0, 1] at the midpoints between grid points; the two end
  /// cells reach out to 0 and 1 and are 1.5 spacings wide.
  double cell_lo(std::size_t g) const { return g == 0 ? 0.0 : points_[g] - 0.5 * spacing_; }
  double cell_hi(std::size_t g) const { return g + 1 == points_.size() ? 1.0 : points_[g] + 0.5 * spacing_; }
  double cell_width(std::size_t g) const { return cell_hi(g) - cell_lo(g); }

  /// Index of the grid point nearest to u (ties toward the smaller index).
  std::size_t nearest(double u) const {
    const double pos = u / spacing_ - 1.0;
    if (pos <= 0.0) return 0;
    const auto last = points_.size() - 1;
    if (pos >= static_cast<double>(last)) return last;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    return (pos - static_cast<double>(lo) <= 0.5) ? lo : lo + 1;
  }

 private:
  std::vector<double> points_;
  double spacing_;
};

struct Minimum {
  double u;
  double value;
};

/// Golden-section search on [lo, hi] for a unimodal f.
template <class F>
Minimum golden_section(F&& f, double lo, double hi, int iterations = 80) {
  constexpr double inv_phi = 0.6180339887498949;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < iterations && hi - lo > 1e-15; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? Minimum{x1, f1} : Minimum{x2, f2};
}

/// Grid argmin (ties toward smaller u) followed by one golden-section pass over
/// the cells bracketing the winner. The refined point replaces the grid point
/// only if it is strictly better, so flat objectives return the first grid point.
template <class F>
Minimum grid_minimize(F&& f, const HyperGrid& grid) {
  std::size_t best = 0;
  double best_val = f(grid[0]);
  for (std::size_t g = 1; g < grid.size(); ++g) {
    const double v = f(grid[g]);
    if (v < best_val) {
      best_val = v;
      best = g;
    }
  }
  const double lo = grid[best == 0 ? 0 : best - 1];
  const double hi = grid[best + 1 == grid.size() ? best : best + 1];
  const Minimum refined = golden_section(f, lo, hi);
  if (refined.value < best_val) return refined;
  return {grid[best], best_val};
}

}  // namespace tml
