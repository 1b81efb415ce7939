#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lucenet/image.hpp"
#include "lucenet/rng.hpp"

namespace lucenet {

enum class Label { well_fixed = 0, loose = 1 };

std::string_view label_name(Label label);
/// Exact tokens only ("loose" / "well_fixed"); anything else throws FormatError.
Label parse_label(std::string_view token);

struct SampleImage {
  GrayImage pixels;
  Label label = Label::well_fixed;
  std::string id;
  /// Ground-truth lucency region; synthetic loose images only.
  std::optional<Mask> lucency_mask;
};

struct Range {
  double lo = 0;
  double hi = 0;
};

enum class LucencySite { stem, cup, both };

struct SynthParams {
  std::size_t image_size = 64;
  std::size_t loose_count = 100;
  std::size_t well_fixed_count = 100;
  std::uint64_t seed = 0;

  // Geometry as fractions of the image side unless noted.
  Range stem_length{0.40, 0.50};
  Range stem_width{0.11, 0.14};   // width at the shoulder
  Range stem_taper{0.45, 0.65};   // tip width / shoulder width
  Range stem_angle_deg{-8, 8};
  Range cup_radius{0.11, 0.14};
  double texture_scale = 0.08;    // amplitude of the low-frequency bone texture
  double pixel_noise = 0.02;      // std of per-pixel noise

  // Lucency band of loose implants.
  Range lucency_width{2.0, 3.5};  // pixels
  Range lucency_contrast{0.2, 0.3};

  /// Throws ConfigError; in particular a lucency width range reaching 0 is
  /// rejected because every loose image must carry a band.
  void validate() const;
};

/// `loose_count` loose images followed by `well_fixed_count` well-fixed ones,
/// ids "loose_0000", ..., "well_fixed_0000", ...
std::vector<SampleImage> generate_dataset(const SynthParams& params);

/// One image; `index` selects its sub-stream.
SampleImage generate_image(const SynthParams& params, Label label, std::size_t index);

/// Auxiliary task images: textured backgrounds with bright blobs; positives
/// ("loose" label) carry one random dark band. Label-independent of the
/// implant task: no implant is drawn.
struct PretextParams {
  std::size_t image_size = 64;
  std::size_t count = 2000;
  std::uint64_t seed = 0;
  double texture_scale = 0.08;
  double pixel_noise = 0.02;
  Range band_width{1.5, 4.0};
  Range band_contrast{0.15, 0.3};

  void validate() const;
};

std::vector<SampleImage> generate_pretext_dataset(const PretextParams& params);

/// Statistics of the band against a ring of equal width just outside it.
struct RingContrast {
  double inside_mean = 0;
  double ring_mean = 0;
  double contrast() const { return ring_mean - inside_mean; }
};
/// Ring = pixels within `width` (Chebyshev distance) of the mask that are
/// neither in the mask nor in `exclude` (the implant).
RingContrast ring_contrast(const GrayImage& image, const Mask& mask, std::size_t width,
                           const Mask* exclude = nullptr);

/// Implant silhouette (pixels with implant coverage > 0.5) of a synthetic
/// image, regenerated from its parameters and index.
Mask implant_mask(const SynthParams& params, Label label, std::size_t index);

struct AugmentParams {
  double rotation_deg = 5;       // uniform in [-r, r]
  double scale_delta = 0.1;      // scale uniform in [1-d, 1+d]
  double translate_frac = 0.05;  // shift uniform in [-f, f] * side, per axis
  double intensity_jitter = 0.05;  // additive offset uniform in [-j, j]

  static AugmentParams identity() { return {0, 0, 0, 0}; }
  void validate() const;
};

struct AugmentTransform {
  double rotation_deg = 0;
  double scale = 1;
  double shift_x = 0;  // pixels, positive moves content right
  double shift_y = 0;  // pixels, positive moves content down
  double intensity_offset = 0;

  bool is_identity() const {
    return rotation_deg == 0 && scale == 1 && shift_x == 0 && shift_y == 0 &&
           intensity_offset == 0;
  }
};

AugmentTransform sample_transform(const AugmentParams& params, std::size_t side, Rng& rng);

/// Rotation and scale about the image center, then translation, resampled
/// bilinearly with edge clamping; then intensity offset and clamp to [0,1].
/// The mask follows the same geometry with nearest-neighbour lookup.
SampleImage apply_transform(const SampleImage& image, const AugmentTransform& transform);

SampleImage augment(const SampleImage& image, const AugmentParams& params, Rng& rng);

struct ManifestRecord {
  std::string path;  // relative to the manifest's directory
  Label label = Label::well_fixed;
  std::string id;
  bool operator==(const ManifestRecord&) const = default;
};

/// CSV with the exact header row `path,label,id`.
void write_manifest(const std::vector<ManifestRecord>& records, const std::filesystem::path& path);
/// Strict parser; errors name the offending line number.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

/// Writes `images/<id>.pgm`, `masks/<id>_mask.pgm` (when present) and
/// `manifest.csv` under `dir`; returns the manifest path.
std::filesystem::path save_dataset(const std::vector<SampleImage>& samples,
                                   const std::filesystem::path& dir);
/// Reads a manifest and its images; masks are picked up from
/// `masks/<id>_mask.pgm` next to the manifest when present.
std::vector<SampleImage> load_dataset(const std::filesystem::path& manifest);

}  // namespace lucenet
