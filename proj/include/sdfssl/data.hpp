#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdfssl/common.hpp"

namespace sdfssl {

// Procedural single-view -> SDF dataset: 2D shapes rendered to small RGB
// images with analytic ground-truth signed distances on the unit square.

struct Image {
  int h = 0, w = 0;
  std::vector<float> px;  // h*w*3 row-major RGB

  float& at(int y, int x, int c) { return px[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
  float at(int y, int x, int c) const { return px[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
};

enum class ShapeKind : std::uint8_t { circle = 0, rectangle = 1, capsule = 2 };

struct Shape {
  ShapeKind kind = ShapeKind::circle;
  Vec2 center;
  double p1 = 0.1;    // circle: radius; rectangle: half width; capsule: half length
  double p2 = 0.1;    // rectangle: half height; capsule: radius
  double angle = 0.0; // capsule axis angle (radians)
  std::array<double, 3> color{1.0, 1.0, 1.0};
};

// Exact signed distance to the shape boundary, negative inside.
double analytic_sdf(const Shape& shape, Vec2 p);

struct Sample {
  Image image;
  std::vector<Vec2> query_points;
  bool labeled = false;

  // Ground truth; empty when stripped from the dataset file. Training code
  // must go through gt_sdf_for_training(), which rejects unlabeled samples.
  std::vector<double> query_sdf;
  std::vector<std::uint8_t> occupancy;  // grid*grid, row-major (y, x), 1 = inside
  std::optional<Shape> shape;

  bool has_gt() const { return !query_sdf.empty(); }
  const std::vector<double>& gt_sdf_for_training() const;
  const std::vector<double>& gt_sdf_for_eval() const;
};

struct GenConfig {
  std::uint32_t n = 100;
  double labeled_fraction = 0.1;
  std::uint64_t seed = 0;
  int h = 32, w = 32;
  int grid = 64;
  int queries = 32;
};

struct Dataset {
  GenConfig header;
  std::vector<Sample> samples;

  std::vector<std::size_t> labeled_indices() const;
  std::vector<std::size_t> unlabeled_indices() const;
};

// Antialiased raster of the shape over a mid-gray background (pure function).
Image render(const Shape& shape, int h, int w);

// Exactly round(n * labeled_fraction) samples come out labeled; everything is
// deterministic in the seed. Unlabeled samples keep their gt fields for
// evaluation only.
Dataset gen_dataset(const GenConfig& cfg);

void save_dataset(const std::string& path, const Dataset& ds, bool strip_unlabeled_gt = false);
Dataset load_dataset(const std::string& path);

// ---------------------------------------------------------------------------
// Weak / strong augmentation
// ---------------------------------------------------------------------------

struct WeakAugConfig {
  double brightness = 0.10;  // scale in [1-b, 1+b]
  double contrast = 0.10;    // scale about mid-gray in [1-c, 1+c]
  double rot_deg = 20.0;     // rotation in [-r, +r]
  double noise_sigma = 0.02; // gaussian sigma drawn from [0, s]
};

struct StrongAugConfig {
  double color_shift = 0.40;  // per-channel gain in [1-s, 1+s]
  double hue_deg = 30.0;      // HSV hue rotation in [-h, +h]
  double blur_sigma_min = 0.5;
  double blur_sigma_max = 1.5;
  int erase_min = 1;  // block count is always >= 1
  int erase_max = 4;
  double erase_area_min = 0.02;
  double erase_area_max = 0.10;
  double noise_sigma = 0.08;
};

// Drawn perturbation parameters, separated from application so tests can pin
// exact factors.
struct WeakAugParams {
  double brightness = 1.0;
  double contrast = 1.0;
  double rot_deg = 0.0;
  double noise_sigma = 0.0;
};

struct StrongAugParams {
  std::array<double, 3> gains{1.0, 1.0, 1.0};
  double hue_deg = 0.0;
  double blur_sigma = 1.0;
  int n_blocks = 1;  // erasing blocks, always >= 1
  double noise_sigma = 0.0;
};

WeakAugParams draw_weak_params(Rng& rng, const WeakAugConfig& cfg);
StrongAugParams draw_strong_params(Rng& rng, const StrongAugConfig& cfg);

// rng supplies per-pixel noise (and erase geometry/fill for strong).
Image apply_weak_augment(const Image& img, const WeakAugParams& params, Rng& rng);
Image apply_strong_augment(const Image& img, const StrongAugParams& params,
                           const StrongAugConfig& cfg, Rng& rng);

Image weak_augment(const Image& img, Rng& rng, const WeakAugConfig& cfg = {});
Image strong_augment(const Image& img, Rng& rng, const StrongAugConfig& cfg = {});

// ---------------------------------------------------------------------------
// Network input encoding: pooled image features, deviation moments, and
// query coordinates
// ---------------------------------------------------------------------------

struct FeatureConfig {
  int pool = 4;         // pooled grid resolution per channel
  bool moments = true;  // add deviation mass/centroid/spread and query-relative dims
};

int feature_dim(const FeatureConfig& cfg);

// Mean over pool x pool blocks per channel; image dims must divide evenly.
std::vector<double> pooled_features(const Image& img, const FeatureConfig& cfg);

// Moments of the per-pixel deviation from the mid-gray background:
// [mass, centroid_x, centroid_y, spread_x, spread_y, correlation].
std::array<double, 6> image_moments(const Image& img);

// One row per query point: [pooled..., moments..., x, y, dx, dy, r] where
// (dx, dy, r) locate the query relative to the deviation centroid. Without
// moments the row is just [pooled..., x, y].
void encode_query_rows(const Image& img, std::span<const Vec2> pts, const FeatureConfig& cfg,
                       std::vector<double>& out_rows);

}  // namespace sdfssl
