#pragma once

#include <cstdint>
#include <vector>

#include "sdfssl/common.hpp"

namespace sdfssl {

// Reconstruction metrics over SDF grids sampled on the unit square. Grid
// values live at cell centers ((x + 0.5)/G, (y + 0.5)/G), matching the
// dataset occupancy convention.

struct SdfGrid {
  int res = 0;
  std::vector<double> values;  // res*res, row-major (y, x)

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * res + x]; }
};

struct SurfaceSamples {
  std::vector<Vec2> points;
  std::vector<Vec2> normals;  // unit length, oriented along increasing SDF
};

struct MetricsReport {
  double chamfer_x100 = 0.0;
  double iou_pct = 0.0;
  double fscore_pct = 0.0;
  double normal_consistency = 0.0;
};

// Zero crossings of the grid along lattice edges (marching-squares vertices)
// with linearly interpolated positions and central-difference normals.
// Throws EmptySurfaceError when the grid has no sign change.
SurfaceSamples extract_isocontour(const SdfGrid& grid);

// 0.5 * (mean nearest distance A->B + mean B->A), reported x100.
double chamfer_l1(const SurfaceSamples& a, const SurfaceSamples& b);

// 100 * |pred<0 AND gt| / |pred<0 OR gt|; 100 when both regions are empty.
double iou(const SdfGrid& pred, const std::vector<std::uint8_t>& gt_occupancy, int gt_res);

// Harmonic mean of precision and recall at the given distance threshold, x100.
double fscore(const SurfaceSamples& pred, const SurfaceSamples& gt, double threshold);

// Symmetric mean |cos| similarity between nearest-neighbor normals.
double normal_consistency(const SurfaceSamples& a, const SurfaceSamples& b);

double bbox_diagonal(const SurfaceSamples& s);

// Values logged for predictions with no extractable surface.
MetricsReport worst_case_metrics();

}  // namespace sdfssl
