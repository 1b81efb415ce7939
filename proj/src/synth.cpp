#include "lucenet/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "lucenet/error.hpp"

namespace lucenet {

std::string_view label_name(Label label) {
  return label == Label::loose ? "loose" : "well_fixed";
}

Label parse_label(std::string_view token) {
  if (token == "loose") return Label::loose;
  if (token == "well_fixed") return Label::well_fixed;
  throw FormatError(FormatError::Kind::malformed,
                    "unknown label '" + std::string(token) + "' (expected loose or well_fixed)");
}

namespace {

void check_range(const Range& r, const char* name, bool positive = false) {
  if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    throw ConfigError(std::string(name) + ": range [lo,hi] must satisfy lo <= hi");
  }
  if (positive && !(r.lo > 0)) throw ConfigError(std::string(name) + ": range must be positive");
}

double draw(Rng& rng, const Range& r) { return uniform(rng, r.lo, r.hi); }

struct Vec {
  double x = 0, y = 0;
};
Vec operator+(Vec a, Vec b) { return {a.x + b.x, a.y + b.y}; }
Vec operator-(Vec a, Vec b) { return {a.x - b.x, a.y - b.y}; }
double dot(Vec a, Vec b) { return a.x * b.x + a.y * b.y; }
double length(Vec a) { return std::sqrt(dot(a, a)); }

Vec rotate(Vec v, double radians) {
  const double c = std::cos(radians), s = std::sin(radians);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Signed distance to the convex hull of two circles (a, ra) and (b, rb).
double sd_round_cone(Vec p, Vec a, Vec b, double ra, double rb) {
  p = p - a;
  b = b - a;
  const double h = dot(b, b);
  Vec q{dot(p, Vec{b.y, -b.x}) / h, dot(p, b) / h};
  q.x = std::abs(q.x);
  const double d = ra - rb;
  const Vec c{std::sqrt(h - d * d), d};
  const double k = c.x * q.y - c.y * q.x;
  const double m = dot(c, q);
  const double n = dot(q, q);
  if (k < 0.0) return std::sqrt(h * n) - ra;
  if (k > c.x) return std::sqrt(h * (q.x * q.x + (q.y - 1.0) * (q.y - 1.0))) - rb;
  return m - ra;
}

// Half annulus of mid radius `r` and half thickness `t` around `center`,
// open toward `up_angle` + pi (the arc bulges toward `up_angle`).
double sd_half_ring(Vec p, Vec center, double r, double t, double tilt) {
  Vec q = rotate(p - center, -tilt);
  q.y = -q.y;  // image y grows downward; local +y points up
  q.x = std::abs(q.x);
  const double d = q.y < 0 ? length(q - Vec{r, 0}) : std::abs(length(q) - r);
  return d - t;
}

// Approximate signed distance to an ellipse.
double sd_ellipse(Vec p, Vec center, double rx, double ry, double angle) {
  const Vec q = rotate(p - center, -angle);
  const double k = length(Vec{q.x / rx, q.y / ry});
  return (k - 1.0) * std::min(rx, ry);
}

double coverage(double sdf) { return std::clamp(0.5 - sdf, 0.0, 1.0); }

// Two octaves of smoothly interpolated lattice noise in [-1.5, 1.5].
std::vector<double> lattice_noise(std::size_t side, Rng& rng) {
  std::vector<double> out(side * side, 0.0);
  const std::array<std::pair<double, double>, 2> octaves{{{side / 8.0, 1.0}, {side / 16.0, 0.5}}};
  for (auto [spacing, amplitude] : octaves) {
    spacing = std::max(spacing, 1.0);
    const auto nodes = static_cast<std::size_t>(std::ceil(side / spacing)) + 2;
    std::vector<double> grid(nodes * nodes);
    for (auto& g : grid) g = uniform(rng, -1.0, 1.0);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double gx = x / spacing, gy = y / spacing;
        const auto ix = static_cast<std::size_t>(gx), iy = static_cast<std::size_t>(gy);
        double fx = gx - ix, fy = gy - iy;
        fx = fx * fx * (3 - 2 * fx);
        fy = fy * fy * (3 - 2 * fy);
        const double v00 = grid[iy * nodes + ix], v01 = grid[iy * nodes + ix + 1];
        const double v10 = grid[(iy + 1) * nodes + ix], v11 = grid[(iy + 1) * nodes + ix + 1];
        const double top = v00 + (v01 - v00) * fx, bottom = v10 + (v11 - v10) * fx;
        out[y * side + x] += amplitude * (top + (bottom - top) * fy);
      }
    }
  }
  return out;
}

struct Scene {
  std::size_t side = 0;
  Vec cup_center;
  double cup_radius = 0;   // outer radius
  double cup_thickness = 0;
  double cup_tilt = 0;
  double head_radius = 0;
  Vec shoulder, tip;
  double shoulder_half = 0, tip_half = 0;
  double neck_half = 0;
  double soft_tissue = 0, bone = 0, metal = 0;

  double sd_cup(Vec p) const {
    return sd_half_ring(p, cup_center, cup_radius - cup_thickness / 2, cup_thickness / 2, cup_tilt);
  }
  double sd_cup_outer(Vec p) const { return length(p - cup_center) - cup_radius; }
  double sd_stem(Vec p) const { return sd_round_cone(p, shoulder, tip, shoulder_half, tip_half); }
  double sd_implant(Vec p) const {
    const double head = length(p - cup_center) - head_radius;
    const double neck = sd_round_cone(p, cup_center, shoulder, neck_half, neck_half * 1.2);
    return std::min({sd_cup(p), sd_stem(p), head, neck});
  }
  // Bone-side region of the cup: the half plane the cup's dome faces.
  bool above_cup(Vec p) const {
    const Vec q = rotate(p - cup_center, -cup_tilt);
    return q.y <= 0;
  }
};

Scene sample_scene(const SynthParams& params, Rng& rng, int attempt) {
  const double S = static_cast<double>(params.image_size);
  // On retries pull the extent-driving ranges toward their small/neutral end.
  const double shrink = 1.0 - 0.1 * attempt;
  Range length = params.stem_length;
  length.hi = length.lo + (length.hi - length.lo) * shrink;
  Range angle{params.stem_angle_deg.lo * shrink, params.stem_angle_deg.hi * shrink};

  Scene s;
  s.side = params.image_size;
  s.cup_radius = draw(rng, params.cup_radius) * S;
  s.cup_thickness = std::max(2.0, 0.22 * s.cup_radius);
  s.cup_tilt = uniform(rng, -0.35, 0.35);
  s.head_radius = s.cup_radius - s.cup_thickness - 0.8;
  s.cup_center = {uniform(rng, 0.38, 0.50) * S, uniform(rng, 0.24, 0.28) * S};
  const double width = draw(rng, params.stem_width) * S;
  s.shoulder_half = width / 2;
  s.tip_half = s.shoulder_half * draw(rng, params.stem_taper);
  s.neck_half = std::max(1.5, 0.35 * width);
  const double theta = draw(rng, angle) * std::numbers::pi / 180.0;
  s.shoulder = s.cup_center + Vec{0.10 * S, 0.4 * s.cup_radius + 0.03 * S};
  s.tip = s.shoulder + rotate(Vec{0, draw(rng, length) * S}, theta);
  s.soft_tissue = uniform(rng, 0.22, 0.32);
  s.bone = s.soft_tissue + uniform(rng, 0.18, 0.26);
  s.metal = uniform(rng, 0.88, 0.95);
  return s;
}

struct Band {
  LucencySite site = LucencySite::stem;
  double width = 0;
  double contrast = 0;
};

// Distance outside the implant for pixels eligible to carry lucency, or a
// negative value when `p` cannot be part of the band.
double band_distance(const Scene& s, const Band& band, Vec p) {
  if (s.sd_implant(p) <= 0) return -1;
  double d = -1;
  if (band.site != LucencySite::cup && p.y > s.shoulder.y) d = s.sd_stem(p);
  if (band.site != LucencySite::stem && s.above_cup(p)) {
    const double c = s.sd_cup_outer(p);
    if (c > 0 && (d < 0 || c < d)) d = c;
  }
  return d;
}

bool fits_frame(const Scene& s, double margin) {
  const auto n = s.side;
  for (std::size_t i = 0; i < n; ++i) {
    const std::array<Vec, 4> border{Vec{double(i), 0}, Vec{double(i), double(n - 1)},
                                    Vec{0, double(i)}, Vec{double(n - 1), double(i)}};
    for (const auto& p : border) {
      if (s.sd_implant(p) <= margin) return false;
    }
  }
  return true;
}

struct Rendered {
  GrayImage image;
  Mask lucency;
  Mask implant;
};

Rendered render(const Scene& s, const std::optional<Band>& band, const SynthParams& params, Rng& rng) {
  const std::size_t n = s.side;
  const double S = static_cast<double>(n);
  const auto texture = lattice_noise(n, rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  Rendered r{GrayImage(n, n), Mask(n, n), Mask(n, n)};
  const double bone_margin = 0.16 * S;
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const Vec p{double(x), double(y)};
      const double implant = s.sd_implant(p);
      // Bone hugs the implant and fills the pelvis above the cup.
      const double to_bone = std::min(implant - bone_margin, p.y - (s.cup_center.y + 0.2 * S));
      const double bone_weight = std::clamp(0.5 - to_bone / 3.0, 0.0, 1.0);
      double v = s.soft_tissue + (s.bone - s.soft_tissue) * bone_weight;
      v += params.texture_scale * texture[y * n + x];
      if (band) {
        const double d = band_distance(s, *band, p);
        if (d > 0) {
          v -= band->contrast * std::clamp(band->width + 0.5 - d, 0.0, 1.0);
          if (d <= band->width) r.lucency.at(y, x) = 1;
        }
      }
      const double cov = coverage(implant);
      v = v * (1 - cov) + s.metal * cov;
      if (cov > 0.5) r.implant.at(y, x) = 1;
      v += params.pixel_noise * noise(rng);
      r.image.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return r;
}

Rendered generate(const SynthParams& params, Label label, std::size_t index) {
  Rng rng = make_stream(params.seed, label == Label::loose ? "synth.loose" : "synth.well_fixed", index);
  constexpr int kMaxRetries = 10;
  for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
    const Scene scene = sample_scene(params, rng, attempt);
    std::optional<Band> band;
    if (label == Label::loose) {
      Band b;
      b.site = static_cast<LucencySite>(rng() % 3);
      b.width = draw(rng, params.lucency_width);
      b.contrast = draw(rng, params.lucency_contrast);
      band = b;
    }
    const double margin = 1.0 + (band ? band->width : params.lucency_width.hi);
    if (!fits_frame(scene, margin)) continue;
    return render(scene, band, params, rng);
  }
  throw ConfigError("synthetic geometry left the frame after " + std::to_string(kMaxRetries) +
                    " retries; reduce the stem length or cup radius ranges");
}

}  // namespace

void SynthParams::validate() const {
  if (image_size < 16) throw ConfigError("synth.image_size must be at least 16");
  if (loose_count == 0 || well_fixed_count == 0) {
    throw ConfigError("synth: per-class counts must be at least 1");
  }
  check_range(stem_length, "synth.stem_length", true);
  check_range(stem_width, "synth.stem_width", true);
  check_range(stem_taper, "synth.stem_taper", true);
  check_range(stem_angle_deg, "synth.stem_angle_deg");
  check_range(cup_radius, "synth.cup_radius", true);
  check_range(lucency_contrast, "synth.lucency_contrast", true);
  check_range(lucency_width, "synth.lucency_width");
  if (!(lucency_width.lo > 0)) {
    throw ConfigError("synth.lucency_width: loose images need a band wider than 0 pixels");
  }
  if (stem_taper.hi > 1) throw ConfigError("synth.stem_taper must not exceed 1");
  if (texture_scale < 0 || pixel_noise < 0) throw ConfigError("synth: noise levels must be >= 0");
}

SampleImage generate_image(const SynthParams& params, Label label, std::size_t index) {
  auto r = generate(params, label, index);
  SampleImage s;
  s.pixels = std::move(r.image);
  s.label = label;
  char id[32];
  std::snprintf(id, sizeof id, "%04zu", index);
  s.id = std::string(label_name(label)) + "_" + id;
  if (label == Label::loose) s.lucency_mask = std::move(r.lucency);
  return s;
}

Mask implant_mask(const SynthParams& params, Label label, std::size_t index) {
  return generate(params, label, index).implant;
}

std::vector<SampleImage> generate_dataset(const SynthParams& params) {
  params.validate();
  std::vector<SampleImage> out;
  out.reserve(params.loose_count + params.well_fixed_count);
  for (std::size_t i = 0; i < params.loose_count; ++i) out.push_back(generate_image(params, Label::loose, i));
  for (std::size_t i = 0; i < params.well_fixed_count; ++i) {
    out.push_back(generate_image(params, Label::well_fixed, i));
  }
  return out;
}

void PretextParams::validate() const {
  if (image_size < 16) throw ConfigError("pretext.image_size must be at least 16");
  if (count < 2) throw ConfigError("pretext.count must be at least 2");
  check_range(band_width, "pretext.band_width", true);
  check_range(band_contrast, "pretext.band_contrast", true);
  if (texture_scale < 0 || pixel_noise < 0) throw ConfigError("pretext: noise levels must be >= 0");
}

std::vector<SampleImage> generate_pretext_dataset(const PretextParams& params) {
  params.validate();
  const std::size_t n = params.image_size;
  const double S = static_cast<double>(n);
  std::vector<SampleImage> out;
  out.reserve(params.count);
  for (std::size_t i = 0; i < params.count; ++i) {
    Rng rng = make_stream(params.seed, "pretext", i);
    const bool positive = i % 2 == 0;
    const auto texture = lattice_noise(n, rng);
    std::normal_distribution<double> noise(0.0, 1.0);

    struct Blob {
      Vec c;
      double rx, ry, angle, level;
    };
    std::vector<Blob> blobs(1 + rng() % 3);
    for (auto& b : blobs) {
      b = {{uniform(rng, 0.15, 0.85) * S, uniform(rng, 0.15, 0.85) * S},
           uniform(rng, 0.05, 0.18) * S,
           uniform(rng, 0.05, 0.30) * S,
           uniform(rng, 0.0, std::numbers::pi),
           uniform(rng, 0.8, 0.95)};
    }
    const double base = uniform(rng, 0.22, 0.5);
    const Vec gradient{uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1)};

    // Band: either hugging part of a blob outline or a free stroke.
    const double width = draw(rng, params.band_width);
    const double contrast = draw(rng, params.band_contrast);
    const bool hugging = rng() % 2 == 0;
    const Blob& host = blobs[rng() % blobs.size()];
    const double sector_start = uniform(rng, 0.0, 2 * std::numbers::pi);
    const double sector_span = uniform(rng, 0.5, 1.5) * std::numbers::pi;
    const Vec a{uniform(rng, 0.1, 0.9) * S, uniform(rng, 0.1, 0.9) * S};
    const Vec b = a + rotate(Vec{uniform(rng, 0.25, 0.6) * S, 0}, uniform(rng, 0.0, 2 * std::numbers::pi));

    SampleImage s;
    s.pixels = GrayImage(n, n);
    s.label = positive ? Label::loose : Label::well_fixed;
    char id[32];
    std::snprintf(id, sizeof id, "pretext_%05zu", i);
    s.id = id;
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const Vec p{double(x), double(y)};
        double v = base + gradient.x * (p.x / S - 0.5) + gradient.y * (p.y / S - 0.5);
        v += params.texture_scale * texture[y * n + x];
        if (positive) {
          double weight = 0;
          if (hugging) {
            const double d = sd_ellipse(p, host.c, host.rx, host.ry, host.angle);
            double ang = std::atan2(p.y - host.c.y, p.x - host.c.x) - sector_start;
            ang = std::fmod(ang + 4 * std::numbers::pi, 2 * std::numbers::pi);
            if (d > 0 && ang <= sector_span) weight = std::clamp(width + 0.5 - d, 0.0, 1.0);
          } else {
            weight = coverage(sd_round_cone(p, a, b, width / 2, width / 2));
          }
          v -= contrast * weight;
        }
        for (const auto& blob : blobs) {
          const double cov = coverage(sd_ellipse(p, blob.c, blob.rx, blob.ry, blob.angle));
          v = v * (1 - cov) + blob.level * cov;
        }
        v += params.pixel_noise * noise(rng);
        s.pixels.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

RingContrast ring_contrast(const GrayImage& image, const Mask& mask, std::size_t width,
                           const Mask* exclude) {
  if (mask.height != image.height || mask.width != image.width) {
    throw ShapeError("mask shape does not match image");
  }
  const long h = static_cast<long>(image.height), w = static_cast<long>(image.width);
  const long r = static_cast<long>(width);
  double inside = 0, ring = 0;
  std::size_t n_inside = 0, n_ring = 0;
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      if (mask.at(y, x)) {
        inside += image.at(y, x);
        ++n_inside;
        continue;
      }
      if (exclude && exclude->at(y, x)) continue;
      bool near = false;
      for (long dy = -r; dy <= r && !near; ++dy) {
        for (long dx = -r; dx <= r && !near; ++dx) {
          const long yy = y + dy, xx = x + dx;
          if (yy >= 0 && xx >= 0 && yy < h && xx < w && mask.at(yy, xx)) near = true;
        }
      }
      if (near) {
        ring += image.at(y, x);
        ++n_ring;
      }
    }
  }
  if (n_inside == 0 || n_ring == 0) throw ConfigError("ring_contrast: empty band or ring");
  return {inside / n_inside, ring / n_ring};
}

void AugmentParams::validate() const {
  if (!(rotation_deg >= 0) || !(scale_delta >= 0) || !(translate_frac >= 0) ||
      !(intensity_jitter >= 0)) {
    throw ConfigError("augment: ranges must be non-negative half-widths");
  }
  if (scale_delta >= 1) throw ConfigError("augment.scale_delta must be below 1");
  if (rotation_deg > 180 || translate_frac > 0.5 || intensity_jitter > 1) {
    throw ConfigError("augment: range too wide to be a slight variation");
  }
}

AugmentTransform sample_transform(const AugmentParams& params, std::size_t side, Rng& rng) {
  AugmentTransform t;
  // Draw all five values even when a range is zero so streams stay aligned.
  t.rotation_deg = uniform(rng, -params.rotation_deg, params.rotation_deg);
  t.scale = uniform(rng, 1 - params.scale_delta, 1 + params.scale_delta);
  t.shift_x = uniform(rng, -params.translate_frac, params.translate_frac) * side;
  t.shift_y = uniform(rng, -params.translate_frac, params.translate_frac) * side;
  t.intensity_offset = uniform(rng, -params.intensity_jitter, params.intensity_jitter);
  if (params.rotation_deg == 0) t.rotation_deg = 0;
  if (params.scale_delta == 0) t.scale = 1;
  if (params.translate_frac == 0) t.shift_x = t.shift_y = 0;
  if (params.intensity_jitter == 0) t.intensity_offset = 0;
  return t;
}

SampleImage apply_transform(const SampleImage& image, const AugmentTransform& t) {
  if (t.is_identity()) return image;
  const std::size_t h = image.pixels.height, w = image.pixels.width;
  SampleImage out = image;
  const bool geometric = !(t.rotation_deg == 0 && t.scale == 1 && t.shift_x == 0 && t.shift_y == 0);
  if (geometric) {
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const double rad = t.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const auto maxx = static_cast<double>(w - 1), maxy = static_cast<double>(h - 1);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        // Inverse map: undo translation, then scale, then rotation.
        const double ux = (x - cx - t.shift_x) / t.scale;
        const double uy = (y - cy - t.shift_y) / t.scale;
        const double sx = std::clamp(c * ux + s * uy + cx, 0.0, maxx);
        const double sy = std::clamp(-s * ux + c * uy + cy, 0.0, maxy);
        const auto x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
        const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const float fx = static_cast<float>(sx - x0), fy = static_cast<float>(sy - y0);
        const auto& src = image.pixels;
        const float top = src.at(y0, x0) * (1 - fx) + src.at(y0, x1) * fx;
        const float bottom = src.at(y1, x0) * (1 - fx) + src.at(y1, x1) * fx;
        out.pixels.at(y, x) = top * (1 - fy) + bottom * fy;
        if (image.lucency_mask) {
          const auto nx = static_cast<std::size_t>(std::lround(sx));
          const auto ny = static_cast<std::size_t>(std::lround(sy));
          out.lucency_mask->at(y, x) = image.lucency_mask->at(ny, nx);
        }
      }
    }
  }
  const auto offset = static_cast<float>(t.intensity_offset);
  for (auto& v : out.pixels.pixels) v = std::clamp(v + offset, 0.0f, 1.0f);
  return out;
}

SampleImage augment(const SampleImage& image, const AugmentParams& params, Rng& rng) {
  return apply_transform(image, sample_transform(params, image.pixels.width, rng));
}

}  // namespace lucenet
