#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lucenet/densenet.hpp"
#include "lucenet/image.hpp"
#include "lucenet/synth.hpp"
#include "lucenet/training.hpp"

namespace lucenet {

struct SaliencyMap {
  GrayImage values;  // |d logit / d pixel|, not normalized
  std::string image_id;
  std::uint64_t model_digest = 0;
  std::size_t epoch = 0;
};

/// Gradient magnitude of an arbitrary scalar function of a [1,1,H,W] input.
using LogitFn = std::function<Tensor(Tape&, const Tensor&)>;
GrayImage saliency_of(const LogitFn& logit, const GrayImage& image);

/// Saliency of the model's pre-sigmoid logit at inference (dropout off).
/// Parameters enter as constants; the model is not modified.
SaliencyMap saliency(const Model& model, const SampleImage& image);

/// One map per requested epoch, in the order given; throws ConfigError when
/// a snapshot for one of them is missing.
std::vector<SaliencyMap> saliency_probe(const std::vector<Snapshot>& snapshots,
                                        const SampleImage& image,
                                        const std::vector<std::size_t>& epochs = {1, 5, 10});

/// Fraction of the top `fraction` of pixels (at least one; ties broken by
/// raster order) that fall inside `mask`.
double top_fraction_in_mask(const GrayImage& map, const Mask& mask, double fraction = 0.01);

struct AscentConfig {
  std::size_t steps = 128;
  double step_size = 0.1;
  std::size_t max_halvings = 10;
  double weight_decay = 1e-3;
  /// +1 maximizes the filter's mean activation, -1 minimizes it.
  double direction = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FilterImage {
  std::size_t filter = 0;
  GrayImage image;
  /// Mean pre-activation of the filter after each accepted/attempted step,
  /// starting with the noise image; length steps + 1.
  std::vector<double> trace;
};

/// Gradient ascent on the input of
///   direction * mean(filter output) - weight_decay * mean(x^2),
/// from uniform noise in [0.4, 0.6], clamped to [0,1] after each step.
/// A step is accepted only when the objective rises and the activation does
/// not move against `direction`; otherwise the step size is halved.
FilterImage maximize_filter(const Model& model, const std::string& layer, std::size_t filter,
                            const AscentConfig& config);

struct FilterPanel {
  std::string layer;
  std::vector<FilterImage> filters;
};

/// Every filter of `layer`; each filter's noise start uses its own sub-stream.
FilterPanel maximize_layer(const Model& model, const std::string& layer, const AscentConfig& config);

/// Linear blue (0) to red (1) colormap.
std::array<float, 3> blue_red(float v);

/// Map divided by its maximum (all-zero maps stay zero).
GrayImage normalized(const GrayImage& map);

/// Colormapped normalized map alpha-blended (0.5) over the grayscale base.
RgbImage render_heatmap(const GrayImage& map, const GrayImage& base, float alpha = 0.5f);

/// Tiles row-major with 1-pixel black separators; width cols*(tile+1)+1.
/// Throws ConfigError when rows*cols is smaller than the filter count.
RgbImage render_panel(const FilterPanel& panel, std::size_t rows, std::size_t cols);
/// Near-square grid: cols = ceil(sqrt(n)), rows = ceil(n / cols).
std::pair<std::size_t, std::size_t> panel_grid(std::size_t filters);

}  // namespace lucenet
