#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sdfssl/data.hpp"
#include "sdfssl/metrics.hpp"

using namespace sdfssl;

namespace {

SdfGrid circle_grid(Vec2 c, double r, int res) {
  SdfGrid g;
  g.res = res;
  g.values.resize(static_cast<std::size_t>(res) * res);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const Vec2 p{(x + 0.5) / res, (y + 0.5) / res};
      g.values[static_cast<std::size_t>(y) * res + x] = norm(p - c) - r;
    }
  return g;
}

std::vector<std::uint8_t> occupancy_of(const SdfGrid& g) {
  std::vector<std::uint8_t> occ(g.values.size());
  for (std::size_t i = 0; i < occ.size(); ++i) occ[i] = g.values[i] < 0.0 ? 1 : 0;
  return occ;
}

SurfaceSamples random_surface(Rng& rng, int n) {
  SurfaceSamples s;
  for (int i = 0; i < n; ++i) {
    s.points.push_back({rng.uniform(0, 1), rng.uniform(0, 1)});
    const double th = rng.uniform(0, 2 * M_PI);
    s.normals.push_back({std::cos(th), std::sin(th)});
  }
  return s;
}

}  // namespace

TEST_CASE("extract_isocontour: circle accuracy and outward normals") {
  const Vec2 c{0.5, 0.5};
  const double r = 0.27;
  const int res = 64;
  const SurfaceSamples s = extract_isocontour(circle_grid(c, r, res));
  REQUIRE(!s.points.empty());
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    // points lie within 1.5/G of the true radius
    CHECK(std::abs(norm(s.points[i] - c) - r) < 1.5 / res);
    // normals point radially outward
    const Vec2 radial = (1.0 / norm(s.points[i] - c)) * (s.points[i] - c);
    CHECK(dot(s.normals[i], radial) > 0.99);
    CHECK(norm(s.normals[i]) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("extract_isocontour: degenerate grids") {
  SdfGrid all_neg;
  all_neg.res = 8;
  all_neg.values.assign(64, -1.0);
  CHECK_THROWS_AS(extract_isocontour(all_neg), EmptySurfaceError);
  SdfGrid all_pos;
  all_pos.res = 8;
  all_pos.values.assign(64, 0.5);
  CHECK_THROWS_AS(extract_isocontour(all_pos), EmptySurfaceError);
}

TEST_CASE("chamfer_l1: identities, arithmetic, and brute-force agreement") {
  Rng rng(8);
  const SurfaceSamples a = random_surface(rng, 40);
  CHECK(chamfer_l1(a, a) == 0.0);

  SurfaceSamples p1, p2;
  p1.points = {{0.0, 0.0}};
  p1.normals = {{1.0, 0.0}};
  p2.points = {{0.0, 0.1}};
  p2.normals = {{1.0, 0.0}};
  CHECK(chamfer_l1(p1, p2) == doctest::Approx(10.0).epsilon(1e-12));

  for (int trial = 0; trial < 10; ++trial) {
    const SurfaceSamples x = random_surface(rng, rng.uniform_int(2, 200));
    const SurfaceSamples y = random_surface(rng, rng.uniform_int(2, 200));
    const double got = chamfer_l1(x, y);
    const double want = oracle::brute_force_chamfer_x100(x.points, y.points);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(chamfer_l1(x, y) == chamfer_l1(y, x));  // symmetric exactly
  }
  CHECK_THROWS_AS(chamfer_l1(SurfaceSamples{}, a), PreconditionError);
}

TEST_CASE("iou: identities and counting") {
  const SdfGrid pred = circle_grid({0.5, 0.5}, 0.25, 32);
  CHECK(iou(pred, occupancy_of(pred), 32) == 100.0);

  // disjoint regions
  const SdfGrid left = circle_grid({0.25, 0.5}, 0.1, 32);
  const SdfGrid right = circle_grid({0.75, 0.5}, 0.1, 32);
  CHECK(iou(left, occupancy_of(right), 32) == 0.0);

  // half-overlapping equal-area rectangles: IoU = 1/3 by construction
  SdfGrid box;
  box.res = 32;
  box.values.assign(32 * 32, 1.0);
  auto set_box = [&](SdfGrid& g, int x0, int x1) {
    for (int y = 8; y < 24; ++y)
      for (int x = x0; x < x1; ++x) g.values[static_cast<std::size_t>(y) * 32 + x] = -1.0;
  };
  set_box(box, 4, 20);
  SdfGrid shifted;
  shifted.res = 32;
  shifted.values.assign(32 * 32, 1.0);
  set_box(shifted, 12, 28);
  CHECK(iou(box, occupancy_of(shifted), 32) == doctest::Approx(100.0 / 3.0).epsilon(1e-12));

  // both empty
  SdfGrid empty;
  empty.res = 8;
  empty.values.assign(64, 1.0);
  CHECK(iou(empty, std::vector<std::uint8_t>(64, 0), 8) == 100.0);

  CHECK_THROWS_AS(iou(box, occupancy_of(shifted), 16), ShapeError);
}

TEST_CASE("fscore: identities and constructed precision/recall") {
  Rng rng(12);
  const SurfaceSamples a = random_surface(rng, 50);
  CHECK(fscore(a, a, 0.01) == 100.0);

  SurfaceSamples far;
  for (const Vec2& p : a.points) {
    far.points.push_back({p.x + 10.0, p.y});
    far.normals.push_back({1.0, 0.0});
  }
  CHECK(fscore(a, far, 0.01) == 0.0);

  // precision 1.0, recall 0.5 -> 66.67
  SurfaceSamples pred, gt;
  for (int i = 0; i < 10; ++i) {
    pred.points.push_back({0.1 * i, 0.0});
    pred.normals.push_back({0.0, 1.0});
    gt.points.push_back({0.1 * i, 0.0});
    gt.normals.push_back({0.0, 1.0});
  }
  for (int i = 0; i < 10; ++i) {
    gt.points.push_back({0.1 * i, 5.0});  // unreachable half of gt
    gt.normals.push_back({0.0, 1.0});
  }
  CHECK(fscore(pred, gt, 0.01) == doctest::Approx(100.0 * 2.0 * 0.5 / 1.5).epsilon(1e-12));
}

TEST_CASE("normal_consistency: identities and rotations") {
  Rng rng(19);
  const SurfaceSamples a = random_surface(rng, 30);
  CHECK(normal_consistency(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  SurfaceSamples rotated = a;
  for (Vec2& n : rotated.normals) n = {-n.y, n.x};  // 90 degrees
  CHECK(normal_consistency(a, rotated) == doctest::Approx(0.0).epsilon(1e-12));

  // concentric circles keep radial normals aligned
  const SurfaceSamples c1 = extract_isocontour(circle_grid({0.5, 0.5}, 0.25, 64));
  const SurfaceSamples c2 = extract_isocontour(circle_grid({0.5, 0.5}, 0.28, 64));
  CHECK(normal_consistency(c1, c2) > 0.98);
}

TEST_CASE("metric identities over random surfaces and grids") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const SurfaceSamples s = random_surface(rng, rng.uniform_int(2, 60));
    CHECK(chamfer_l1(s, s) == 0.0);
    CHECK(fscore(s, s, 0.005) == 100.0);
    CHECK(normal_consistency(s, s) == doctest::Approx(1.0).epsilon(1e-12));
    const SdfGrid g = circle_grid({rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)},
                                  rng.uniform(0.1, 0.25), 32);
    CHECK(iou(g, occupancy_of(g), 32) == 100.0);
  }
}

TEST_CASE("metric degradation is monotone under translation") {
  const SdfGrid gt_grid = circle_grid({0.35, 0.5}, 0.2, 64);
  const SurfaceSamples gt_surface = extract_isocontour(gt_grid);
  const std::vector<std::uint8_t> gt_occ = occupancy_of(gt_grid);
  double prev_cd = -1.0, prev_iou = 1e9;
  for (int k = 1; k <= 5; ++k) {
    const double offset = 0.04 * k;
    const SdfGrid moved = circle_grid({0.35 + offset, 0.5}, 0.2, 64);
    const double cd = chamfer_l1(extract_isocontour(moved), gt_surface);
    const double ov = iou(moved, gt_occ, 64);
    CHECK(cd > prev_cd);
    CHECK(ov < prev_iou);
    prev_cd = cd;
    prev_iou = ov;
  }
}

TEST_CASE("worst-case metric values") {
  const MetricsReport w = worst_case_metrics();
  CHECK(w.chamfer_x100 == doctest::Approx(141.4213562).epsilon(1e-6));
  CHECK(w.iou_pct == 0.0);
  CHECK(w.fscore_pct == 0.0);
  CHECK(w.normal_consistency == 0.0);
}
