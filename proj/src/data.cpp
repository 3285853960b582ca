#include "sdfssl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace sdfssl {

namespace {

constexpr float kBackground = 0.5f;
constexpr std::uint64_t kTagGen = 0x67656e64ULL;        // dataset-level draws
constexpr std::uint64_t kTagGenSample = 0x67736d70ULL;  // per-sample stream

double sdf_circle(Vec2 p, Vec2 c, double r) { return norm(p - c) - r; }

double sdf_rectangle(Vec2 p, Vec2 c, double hx, double hy) {
  const double qx = std::abs(p.x - c.x) - hx;
  const double qy = std::abs(p.y - c.y) - hy;
  const double ox = std::max(qx, 0.0);
  const double oy = std::max(qy, 0.0);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
}

double sdf_capsule(Vec2 p, Vec2 a, Vec2 b, double r) {
  const Vec2 pa = p - a;
  const Vec2 ba = b - a;
  const double denom = dot(ba, ba);
  const double t = denom > 0.0 ? std::clamp(dot(pa, ba) / denom, 0.0, 1.0) : 0.0;
  return norm(pa - t * ba) - r;
}

void capsule_endpoints(const Shape& s, Vec2& a, Vec2& b) {
  const Vec2 d{s.p1 * std::cos(s.angle), s.p1 * std::sin(s.angle)};
  a = s.center - d;
  b = s.center + d;
}

}  // namespace

double analytic_sdf(const Shape& shape, Vec2 p) {
  switch (shape.kind) {
    case ShapeKind::circle:
      return sdf_circle(p, shape.center, shape.p1);
    case ShapeKind::rectangle:
      return sdf_rectangle(p, shape.center, shape.p1, shape.p2);
    case ShapeKind::capsule: {
      Vec2 a, b;
      capsule_endpoints(shape, a, b);
      return sdf_capsule(p, a, b, shape.p2);
    }
  }
  throw ConfigError("invalid shape kind");
}

const std::vector<double>& Sample::gt_sdf_for_training() const {
  if (!labeled)
    throw PreconditionError("ground truth of an unlabeled sample requested by a training path");
  if (!has_gt()) throw PreconditionError("sample carries no ground truth");
  return query_sdf;
}

const std::vector<double>& Sample::gt_sdf_for_eval() const {
  if (!has_gt()) throw PreconditionError("sample carries no ground truth");
  return query_sdf;
}

std::vector<std::size_t> Dataset::labeled_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].labeled) idx.push_back(i);
  return idx;
}

std::vector<std::size_t> Dataset::unlabeled_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!samples[i].labeled) idx.push_back(i);
  return idx;
}

Image render(const Shape& shape, int h, int w) {
  if (h < 8 || w < 8) throw ConfigError("render needs H, W >= 8");
  Image img;
  img.h = h;
  img.w = w;
  img.px.assign(static_cast<std::size_t>(h) * w * 3, kBackground);
  constexpr int kSub = 4;  // 4x4 coverage supersampling
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int inside = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const Vec2 p{(x + (sx + 0.5) / kSub) / w, (y + (sy + 0.5) / kSub) / h};
          if (analytic_sdf(shape, p) < 0.0) ++inside;
        }
      }
      if (inside == 0) continue;  // exact background
      const double cov = inside / static_cast<double>(kSub * kSub);
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<float>(kBackground + cov * (shape.color[c] - kBackground));
    }
  }
  return img;
}

namespace {

Shape draw_shape(Rng& rng) {
  Shape s;
  s.kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
  constexpr double kMargin = 0.05;
  switch (s.kind) {
    case ShapeKind::circle: {
      s.p1 = rng.uniform(0.08, 0.22);
      s.center.x = rng.uniform(kMargin + s.p1, 1.0 - kMargin - s.p1);
      s.center.y = rng.uniform(kMargin + s.p1, 1.0 - kMargin - s.p1);
      break;
    }
    case ShapeKind::rectangle: {
      s.p1 = rng.uniform(0.07, 0.22);
      s.p2 = rng.uniform(0.07, 0.22);
      s.center.x = rng.uniform(kMargin + s.p1, 1.0 - kMargin - s.p1);
      s.center.y = rng.uniform(kMargin + s.p2, 1.0 - kMargin - s.p2);
      break;
    }
    case ShapeKind::capsule: {
      s.p1 = rng.uniform(0.08, 0.25);
      s.p2 = rng.uniform(0.04, 0.10);
      s.angle = rng.uniform(0.0, M_PI);
      const double rx = std::abs(s.p1 * std::cos(s.angle)) + s.p2;
      const double ry = std::abs(s.p1 * std::sin(s.angle)) + s.p2;
      s.center.x = rng.uniform(kMargin + rx, 1.0 - kMargin - rx);
      s.center.y = rng.uniform(kMargin + ry, 1.0 - kMargin - ry);
      break;
    }
  }
  // keep some contrast against the mid-gray background
  for (int attempt = 0; attempt < 64; ++attempt) {
    for (double& c : s.color) c = rng.uniform(0.0, 1.0);
    double dist = 0.0;
    for (double c : s.color) dist = std::max(dist, std::abs(c - 0.5));
    if (dist >= 0.15) break;
  }
  return s;
}

Vec2 boundary_point(const Shape& s, Rng& rng) {
  switch (s.kind) {
    case ShapeKind::circle: {
      const double th = rng.uniform(0.0, 2.0 * M_PI);
      return {s.center.x + s.p1 * std::cos(th), s.center.y + s.p1 * std::sin(th)};
    }
    case ShapeKind::rectangle: {
      // walk the perimeter by a uniform parameter
      const double peri = 4.0 * (s.p1 + s.p2);
      double t = rng.uniform(0.0, peri);
      const double wseg = 2.0 * s.p1, hseg = 2.0 * s.p2;
      if (t < wseg) return {s.center.x - s.p1 + t, s.center.y - s.p2};
      t -= wseg;
      if (t < hseg) return {s.center.x + s.p1, s.center.y - s.p2 + t};
      t -= hseg;
      if (t < wseg) return {s.center.x + s.p1 - t, s.center.y + s.p2};
      t -= wseg;
      return {s.center.x - s.p1, s.center.y + s.p2 - t};
    }
    case ShapeKind::capsule: {
      Vec2 a, b;
      capsule_endpoints(s, a, b);
      const double u = rng.uniform(0.0, 1.0);
      const Vec2 axis = a + u * (b - a);
      const double th = rng.uniform(0.0, 2.0 * M_PI);
      return {axis.x + s.p2 * std::cos(th), axis.y + s.p2 * std::sin(th)};
    }
  }
  return s.center;
}

Sample gen_sample(const GenConfig& cfg, Rng& rng, bool labeled) {
  Sample smp;
  const Shape shape = draw_shape(rng);
  smp.shape = shape;
  smp.labeled = labeled;
  smp.image = render(shape, cfg.h, cfg.w);

  smp.query_points.reserve(cfg.queries);
  smp.query_sdf.reserve(cfg.queries);
  for (int q = 0; q < cfg.queries; ++q) {
    Vec2 p;
    if (q % 2 == 0) {
      p = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
    } else {
      p = boundary_point(shape, rng);
      p.x = std::clamp(p.x + rng.normal(0.0, 0.03), 0.0, 1.0);
      p.y = std::clamp(p.y + rng.normal(0.0, 0.03), 0.0, 1.0);
    }
    smp.query_points.push_back(p);
    smp.query_sdf.push_back(analytic_sdf(shape, p));
  }

  smp.occupancy.resize(static_cast<std::size_t>(cfg.grid) * cfg.grid);
  for (int gy = 0; gy < cfg.grid; ++gy)
    for (int gx = 0; gx < cfg.grid; ++gx) {
      const Vec2 p{(gx + 0.5) / cfg.grid, (gy + 0.5) / cfg.grid};
      smp.occupancy[static_cast<std::size_t>(gy) * cfg.grid + gx] =
          analytic_sdf(shape, p) < 0.0 ? 1 : 0;
    }
  return smp;
}

}  // namespace

Dataset gen_dataset(const GenConfig& cfg) {
  if (cfg.n < 10) throw ConfigError("gen_dataset needs n >= 10");
  if (!(cfg.labeled_fraction > 0.0 && cfg.labeled_fraction <= 1.0))
    throw ConfigError("labeled_fraction must be in (0, 1]");
  if (cfg.grid < 8) throw ConfigError("occupancy grid must be >= 8");
  if (cfg.queries < 2) throw ConfigError("need at least 2 query points per sample");

  const std::size_t n = cfg.n;
  const std::size_t n_labeled =
      static_cast<std::size_t>(std::llround(cfg.labeled_fraction * static_cast<double>(n)));

  // seeded permutation decides which samples are labeled
  Rng master(derive_seed(cfg.seed, {kTagGen}));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[master.index(i)]);
  std::vector<bool> labeled(n, false);
  for (std::size_t i = 0; i < std::min(n_labeled, n); ++i) labeled[perm[i]] = true;

  Dataset ds;
  ds.header = cfg;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(cfg.seed, {kTagGenSample, i}));
    ds.samples.push_back(gen_sample(cfg, rng, labeled[i]));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset file format: little-endian binary, magic "SDFD"
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ConfigError("truncated dataset file");
  return v;
}

constexpr std::uint32_t kDatasetMagic = 0x44464453;  // "SDFD"
constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds, bool strip_unlabeled_gt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open dataset for writing: " + path);
  write_pod(out, kDatasetMagic);
  write_pod(out, kDatasetVersion);
  write_pod(out, ds.header.n);
  write_pod(out, ds.header.labeled_fraction);
  write_pod(out, ds.header.seed);
  write_pod(out, static_cast<std::uint32_t>(ds.header.h));
  write_pod(out, static_cast<std::uint32_t>(ds.header.w));
  write_pod(out, static_cast<std::uint32_t>(ds.header.grid));
  write_pod(out, static_cast<std::uint32_t>(ds.header.queries));

  for (const Sample& s : ds.samples) {
    const bool keep_gt = s.has_gt() && (s.labeled || !strip_unlabeled_gt);
    write_pod(out, static_cast<std::uint8_t>(s.labeled ? 1 : 0));
    write_pod(out, static_cast<std::uint8_t>(keep_gt ? 1 : 0));
    out.write(reinterpret_cast<const char*>(s.image.px.data()),
              static_cast<std::streamsize>(s.image.px.size() * sizeof(float)));
    for (const Vec2& p : s.query_points) {
      write_pod(out, p.x);
      write_pod(out, p.y);
    }
    if (keep_gt) {
      const Shape& sh = *s.shape;
      write_pod(out, static_cast<std::uint8_t>(sh.kind));
      write_pod(out, sh.center.x);
      write_pod(out, sh.center.y);
      write_pod(out, sh.p1);
      write_pod(out, sh.p2);
      write_pod(out, sh.angle);
      for (double c : sh.color) write_pod(out, c);
      out.write(reinterpret_cast<const char*>(s.query_sdf.data()),
                static_cast<std::streamsize>(s.query_sdf.size() * sizeof(double)));
      out.write(reinterpret_cast<const char*>(s.occupancy.data()),
                static_cast<std::streamsize>(s.occupancy.size()));
    }
  }
  if (!out) throw ConfigError("failed writing dataset: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset: " + path);
  if (read_pod<std::uint32_t>(in) != kDatasetMagic)
    throw ConfigError("not a dataset file: " + path);
  if (read_pod<std::uint32_t>(in) != kDatasetVersion)
    throw ConfigError("unsupported dataset version in " + path);

  Dataset ds;
  ds.header.n = read_pod<std::uint32_t>(in);
  ds.header.labeled_fraction = read_pod<double>(in);
  ds.header.seed = read_pod<std::uint64_t>(in);
  ds.header.h = static_cast<int>(read_pod<std::uint32_t>(in));
  ds.header.w = static_cast<int>(read_pod<std::uint32_t>(in));
  ds.header.grid = static_cast<int>(read_pod<std::uint32_t>(in));
  ds.header.queries = static_cast<int>(read_pod<std::uint32_t>(in));

  ds.samples.resize(ds.header.n);
  for (Sample& s : ds.samples) {
    s.labeled = read_pod<std::uint8_t>(in) != 0;
    const bool has_gt = read_pod<std::uint8_t>(in) != 0;
    s.image.h = ds.header.h;
    s.image.w = ds.header.w;
    s.image.px.resize(static_cast<std::size_t>(ds.header.h) * ds.header.w * 3);
    in.read(reinterpret_cast<char*>(s.image.px.data()),
            static_cast<std::streamsize>(s.image.px.size() * sizeof(float)));
    s.query_points.resize(ds.header.queries);
    for (Vec2& p : s.query_points) {
      p.x = read_pod<double>(in);
      p.y = read_pod<double>(in);
    }
    if (has_gt) {
      Shape sh;
      sh.kind = static_cast<ShapeKind>(read_pod<std::uint8_t>(in));
      sh.center.x = read_pod<double>(in);
      sh.center.y = read_pod<double>(in);
      sh.p1 = read_pod<double>(in);
      sh.p2 = read_pod<double>(in);
      sh.angle = read_pod<double>(in);
      for (double& c : sh.color) c = read_pod<double>(in);
      s.shape = sh;
      s.query_sdf.resize(ds.header.queries);
      in.read(reinterpret_cast<char*>(s.query_sdf.data()),
              static_cast<std::streamsize>(s.query_sdf.size() * sizeof(double)));
      s.occupancy.resize(static_cast<std::size_t>(ds.header.grid) * ds.header.grid);
      in.read(reinterpret_cast<char*>(s.occupancy.data()),
              static_cast<std::streamsize>(s.occupancy.size()));
    }
    if (!in) throw ConfigError("truncated dataset file: " + path);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

namespace {

Image rotate_bilinear(const Image& img, double deg) {
  if (deg == 0.0) return img;
  Image out;
  out.h = img.h;
  out.w = img.w;
  out.px.assign(img.px.size(), kBackground);
  const double rad = deg * M_PI / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = (img.w - 1) * 0.5, cy = (img.h - 1) * 0.5;
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      // inverse map into the source image
      const double dx = x - cx, dy = y - cy;
      const double u = cx + c * dx + s * dy;
      const double v = cy - s * dx + c * dy;
      const int x0 = static_cast<int>(std::floor(u));
      const int y0 = static_cast<int>(std::floor(v));
      const double fx = u - x0, fy = v - y0;
      for (int ch = 0; ch < 3; ++ch) {
        auto tap = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= img.h || xx < 0 || xx >= img.w) return kBackground;
          return img.at(yy, xx, ch);
        };
        const double val = (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                           fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
        out.at(y, x, ch) = static_cast<float>(val);
      }
    }
  }
  return out;
}

void clamp01(Image& img) {
  for (float& v : img.px) v = std::clamp(v, 0.0f, 1.0f);
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = 60.0 * std::fmod((g - b) / d, 6.0);
  else if (mx == g)
    h = 60.0 * ((b - r) / d + 2.0);
  else
    h = 60.0 * ((r - g) / d + 4.0);
  if (h < 0.0) h += 360.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  if (hp < 1) { r1 = c; g1 = x; }
  else if (hp < 2) { r1 = x; g1 = c; }
  else if (hp < 3) { g1 = c; b1 = x; }
  else if (hp < 4) { g1 = x; b1 = c; }
  else if (hp < 5) { r1 = x; b1 = c; }
  else { r1 = c; b1 = x; }
  const double m = v - c;
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

Image blur3x3(const Image& img, double sigma) {
  // separable 3-tap gaussian, replicated borders
  const double w1 = std::exp(-1.0 / (2.0 * sigma * sigma));
  const double w0 = 1.0;
  const double norm = w0 + 2.0 * w1;
  const double k0 = w0 / norm, k1 = w1 / norm;
  Image tmp = img, out = img;
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c)
        tmp.at(y, x, c) = static_cast<float>(k1 * img.at(y, clampi(x - 1, 0, img.w - 1), c) +
                                             k0 * img.at(y, x, c) +
                                             k1 * img.at(y, clampi(x + 1, 0, img.w - 1), c));
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = static_cast<float>(k1 * tmp.at(clampi(y - 1, 0, img.h - 1), x, c) +
                                             k0 * tmp.at(y, x, c) +
                                             k1 * tmp.at(clampi(y + 1, 0, img.h - 1), x, c));
  return out;
}

}  // namespace

WeakAugParams draw_weak_params(Rng& rng, const WeakAugConfig& cfg) {
  WeakAugParams p;
  p.brightness = rng.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness);
  p.contrast = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast);
  p.rot_deg = rng.uniform(-cfg.rot_deg, cfg.rot_deg);
  p.noise_sigma = rng.uniform(0.0, cfg.noise_sigma);
  return p;
}

StrongAugParams draw_strong_params(Rng& rng, const StrongAugConfig& cfg) {
  StrongAugParams p;
  for (double& g : p.gains) g = rng.uniform(1.0 - cfg.color_shift, 1.0 + cfg.color_shift);
  p.hue_deg = rng.uniform(-cfg.hue_deg, cfg.hue_deg);
  p.blur_sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
  p.n_blocks = rng.uniform_int(std::max(cfg.erase_min, 1), std::max(cfg.erase_max, 1));
  p.noise_sigma = rng.uniform(0.0, cfg.noise_sigma);
  return p;
}

Image apply_weak_augment(const Image& img, const WeakAugParams& p, Rng& rng) {
  Image out = img;
  if (p.brightness != 1.0)
    for (float& v : out.px) v = static_cast<float>(v * p.brightness);
  if (p.contrast != 1.0)
    for (float& v : out.px) v = static_cast<float>((v - 0.5) * p.contrast + 0.5);
  out = rotate_bilinear(out, p.rot_deg);
  if (p.noise_sigma > 0.0)
    for (float& v : out.px) v = static_cast<float>(v + rng.normal(0.0, p.noise_sigma));
  clamp01(out);
  return out;
}

Image weak_augment(const Image& img, Rng& rng, const WeakAugConfig& cfg) {
  const WeakAugParams p = draw_weak_params(rng, cfg);
  return apply_weak_augment(img, p, rng);
}

Image apply_strong_augment(const Image& img, const StrongAugParams& p,
                           const StrongAugConfig& cfg, Rng& rng) {
  const double hue = p.hue_deg;
  const double blur_sigma = p.blur_sigma;
  const int blocks = std::max(p.n_blocks, 1);
  const double noise_sigma = p.noise_sigma;

  Image out = img;
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = static_cast<float>(out.at(y, x, c) * p.gains[c]);

  if (hue != 0.0) {
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x) {
        double r = std::clamp<double>(out.at(y, x, 0), 0.0, 1.0);
        double g = std::clamp<double>(out.at(y, x, 1), 0.0, 1.0);
        double b = std::clamp<double>(out.at(y, x, 2), 0.0, 1.0);
        double h, s, v;
        rgb_to_hsv(r, g, b, h, s, v);
        h = std::fmod(h + hue + 360.0, 360.0);
        hsv_to_rgb(h, s, v, r, g, b);
        out.at(y, x, 0) = static_cast<float>(r);
        out.at(y, x, 1) = static_cast<float>(g);
        out.at(y, x, 2) = static_cast<float>(b);
      }
  }

  out = blur3x3(out, blur_sigma);

  for (int k = 0; k < blocks; ++k) {
    const double area = rng.uniform(cfg.erase_area_min, cfg.erase_area_max) *
                        static_cast<double>(out.h) * out.w;
    const double aspect = rng.uniform(0.5, 2.0);
    int bw = std::max(1, static_cast<int>(std::lround(std::sqrt(area * aspect))));
    int bh = std::max(1, static_cast<int>(std::lround(std::sqrt(area / aspect))));
    bw = std::min(bw, out.w);
    bh = std::min(bh, out.h);
    const int x0 = static_cast<int>(rng.index(static_cast<std::size_t>(out.w - bw + 1)));
    const int y0 = static_cast<int>(rng.index(static_cast<std::size_t>(out.h - bh + 1)));
    for (int y = y0; y < y0 + bh; ++y)
      for (int x = x0; x < x0 + bw; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = static_cast<float>(rng.uniform(0.0, 1.0));
  }

  if (noise_sigma > 0.0)
    for (float& v : out.px) v = static_cast<float>(v + rng.normal(0.0, noise_sigma));
  clamp01(out);
  return out;
}

Image strong_augment(const Image& img, Rng& rng, const StrongAugConfig& cfg) {
  const StrongAugParams p = draw_strong_params(rng, cfg);
  return apply_strong_augment(img, p, cfg, rng);
}

// ---------------------------------------------------------------------------
// Feature encoding
// ---------------------------------------------------------------------------

int feature_dim(const FeatureConfig& cfg) {
  return 3 * cfg.pool * cfg.pool + 2 + (cfg.moments ? 9 : 0);
}

std::vector<double> pooled_features(const Image& img, const FeatureConfig& cfg) {
  if (cfg.pool < 1) throw ConfigError("pool resolution must be >= 1");
  if (img.h % cfg.pool != 0 || img.w % cfg.pool != 0)
    throw ConfigError("image dims must be divisible by the pool resolution");
  const int by = img.h / cfg.pool, bx = img.w / cfg.pool;
  std::vector<double> feat(static_cast<std::size_t>(3) * cfg.pool * cfg.pool, 0.0);
  for (int py = 0; py < cfg.pool; ++py)
    for (int px = 0; px < cfg.pool; ++px)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int y = py * by; y < (py + 1) * by; ++y)
          for (int x = px * bx; x < (px + 1) * bx; ++x) acc += img.at(y, x, c);
        feat[(static_cast<std::size_t>(py) * cfg.pool + px) * 3 + c] = acc / (by * bx);
      }
  return feat;
}

std::array<double, 6> image_moments(const Image& img) {
  double mass = 0.0, cx = 0.0, cy = 0.0;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      double w = 0.0;
      for (int c = 0; c < 3; ++c) w = std::max(w, std::abs(double(img.at(y, x, c)) - 0.5));
      mass += w;
      cx += w * (x + 0.5) / img.w;
      cy += w * (y + 0.5) / img.h;
    }
  if (mass <= 1e-12) return {0.0, 0.5, 0.5, 0.0, 0.0, 0.0};
  cx /= mass;
  cy /= mass;
  double vx = 0.0, vy = 0.0, vxy = 0.0;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      double w = 0.0;
      for (int c = 0; c < 3; ++c) w = std::max(w, std::abs(double(img.at(y, x, c)) - 0.5));
      const double dx = (x + 0.5) / img.w - cx;
      const double dy = (y + 0.5) / img.h - cy;
      vx += w * dx * dx;
      vy += w * dy * dy;
      vxy += w * dx * dy;
    }
  const double sx = std::sqrt(vx / mass);
  const double sy = std::sqrt(vy / mass);
  const double corr = vxy / mass / std::max(sx * sy, 1e-9);
  return {mass / (static_cast<double>(img.h) * img.w), cx, cy, sx, sy, corr};
}

void encode_query_rows(const Image& img, std::span<const Vec2> pts, const FeatureConfig& cfg,
                       std::vector<double>& out_rows) {
  const std::vector<double> feat = pooled_features(img, cfg);
  const std::size_t dim = static_cast<std::size_t>(feature_dim(cfg));
  const std::array<double, 6> mom = cfg.moments ? image_moments(img)
                                                : std::array<double, 6>{};
  out_rows.resize(pts.size() * dim);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double* row = out_rows.data() + i * dim;
    std::copy(feat.begin(), feat.end(), row);
    std::size_t k = feat.size();
    if (cfg.moments)
      for (double m : mom) row[k++] = m;
    row[k++] = pts[i].x;
    row[k++] = pts[i].y;
    if (cfg.moments) {
      const double dx = pts[i].x - mom[1];
      const double dy = pts[i].y - mom[2];
      row[k++] = dx;
      row[k++] = dy;
      row[k++] = std::sqrt(dx * dx + dy * dy);
    }
  }
}

}  // namespace sdfssl
