#include "sdfssl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sdfssl {

namespace {

bool inside(double v) { return v < 0.0; }  // zero counts as surface/outside

// Central-difference gradient of the grid at lattice point (y, x); one-sided
// at the borders. Grid spacing is 1/res.
Vec2 grid_gradient(const SdfGrid& g, int y, int x) {
  const double h = 1.0 / g.res;
  const int xm = std::max(x - 1, 0), xp = std::min(x + 1, g.res - 1);
  const int ym = std::max(y - 1, 0), yp = std::min(y + 1, g.res - 1);
  return {(g.at(y, xp) - g.at(y, xm)) / ((xp - xm) * h),
          (g.at(yp, x) - g.at(ym, x)) / ((yp - ym) * h)};
}

Vec2 point_at(const SdfGrid& g, int y, int x) {
  return {(x + 0.5) / g.res, (y + 0.5) / g.res};
}

void emit_crossing(const SdfGrid& g, int y0, int x0, int y1, int x1, SurfaceSamples& out) {
  const double v0 = g.at(y0, x0), v1 = g.at(y1, x1);
  if (inside(v0) == inside(v1)) return;
  const double t = v0 / (v0 - v1);  // linear zero crossing
  const Vec2 p0 = point_at(g, y0, x0), p1 = point_at(g, y1, x1);
  const Vec2 p = p0 + t * (p1 - p0);
  const Vec2 g0 = grid_gradient(g, y0, x0), g1 = grid_gradient(g, y1, x1);
  Vec2 n = g0 + t * (g1 - g0);
  const double len = norm(n);
  if (len > 1e-12) {
    n = (1.0 / len) * n;
  } else {
    // degenerate gradient: fall back to the edge direction, negative to positive
    n = p1 - p0;
    n = (1.0 / norm(n)) * n;
    if (v1 < v0) n = -1.0 * n;
  }
  out.points.push_back(p);
  out.normals.push_back(n);
}

double nearest_distance(Vec2 p, const SurfaceSamples& s, std::size_t* arg = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const double d = norm(p - s.points[i]);
    if (d < best) {
      best = d;
      best_i = i;
    }
  }
  if (arg) *arg = best_i;
  return best;
}

}  // namespace

SurfaceSamples extract_isocontour(const SdfGrid& grid) {
  if (grid.res < 8) throw PreconditionError("grid resolution must be >= 8");
  if (grid.values.size() != static_cast<std::size_t>(grid.res) * grid.res)
    throw ShapeError("grid value count does not match resolution");
  for (double v : grid.values)
    if (!std::isfinite(v)) throw PreconditionError("grid contains non-finite values");

  SurfaceSamples out;
  for (int y = 0; y < grid.res; ++y)
    for (int x = 0; x + 1 < grid.res; ++x) emit_crossing(grid, y, x, y, x + 1, out);
  for (int y = 0; y + 1 < grid.res; ++y)
    for (int x = 0; x < grid.res; ++x) emit_crossing(grid, y, x, y + 1, x, out);
  if (out.points.empty())
    throw EmptySurfaceError("grid has no zero crossing; no surface to extract");
  return out;
}

double chamfer_l1(const SurfaceSamples& a, const SurfaceSamples& b) {
  if (a.points.empty() || b.points.empty())
    throw PreconditionError("chamfer_l1 needs nonempty point sets");
  double ab = 0.0, ba = 0.0;
  for (const Vec2& p : a.points) ab += nearest_distance(p, b);
  for (const Vec2& p : b.points) ba += nearest_distance(p, a);
  ab /= static_cast<double>(a.points.size());
  ba /= static_cast<double>(b.points.size());
  return 0.5 * (ab + ba) * 100.0;
}

double iou(const SdfGrid& pred, const std::vector<std::uint8_t>& gt_occupancy, int gt_res) {
  if (pred.res != gt_res) throw ShapeError("iou needs matching grid resolutions");
  if (gt_occupancy.size() != static_cast<std::size_t>(gt_res) * gt_res)
    throw ShapeError("occupancy size does not match its resolution");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < gt_occupancy.size(); ++i) {
    const bool p = inside(pred.values[i]);
    const bool g = gt_occupancy[i] != 0;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  if (uni == 0) return 100.0;
  return 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
}

double fscore(const SurfaceSamples& pred, const SurfaceSamples& gt, double threshold) {
  if (pred.points.empty() || gt.points.empty())
    throw PreconditionError("fscore needs nonempty point sets");
  if (threshold <= 0.0) throw PreconditionError("fscore threshold must be positive");
  std::size_t hit_p = 0, hit_g = 0;
  for (const Vec2& p : pred.points)
    if (nearest_distance(p, gt) <= threshold) ++hit_p;
  for (const Vec2& p : gt.points)
    if (nearest_distance(p, pred) <= threshold) ++hit_g;
  const double precision = static_cast<double>(hit_p) / static_cast<double>(pred.points.size());
  const double recall = static_cast<double>(hit_g) / static_cast<double>(gt.points.size());
  if (precision + recall == 0.0) return 0.0;
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

double normal_consistency(const SurfaceSamples& a, const SurfaceSamples& b) {
  if (a.points.empty() || b.points.empty())
    throw PreconditionError("normal_consistency needs nonempty surfaces");
  if (a.normals.size() != a.points.size() || b.normals.size() != b.points.size())
    throw ShapeError("surface normals are not aligned with points");
  auto one_way = [](const SurfaceSamples& from, const SurfaceSamples& to) {
    double acc = 0.0;
    for (std::size_t i = 0; i < from.points.size(); ++i) {
      std::size_t j = 0;
      nearest_distance(from.points[i], to, &j);
      acc += std::abs(dot(from.normals[i], to.normals[j]));
    }
    return acc / static_cast<double>(from.points.size());
  };
  return 0.5 * (one_way(a, b) + one_way(b, a));
}

double bbox_diagonal(const SurfaceSamples& s) {
  if (s.points.empty()) throw PreconditionError("bbox_diagonal needs a nonempty surface");
  double xmin = s.points[0].x, xmax = xmin, ymin = s.points[0].y, ymax = ymin;
  for (const Vec2& p : s.points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  return std::sqrt((xmax - xmin) * (xmax - xmin) + (ymax - ymin) * (ymax - ymin));
}

MetricsReport worst_case_metrics() {
  MetricsReport r;
  r.chamfer_x100 = std::sqrt(2.0) * 100.0;  // unit-square diagonal
  r.iou_pct = 0.0;
  r.fscore_pct = 0.0;
  r.normal_consistency = 0.0;
  return r;
}

}  // namespace sdfssl
