#include "lucenet/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lucenet/ops.hpp"

namespace lucenet {

namespace {

Tensor image_tensor(const GrayImage& image, bool requires_grad) {
  return Tensor(Shape{1, 1, image.height, image.width}, image.pixels, requires_grad);
}

}  // namespace

GrayImage saliency_of(const LogitFn& logit, const GrayImage& image) {
  Tape tape;
  Tensor x = image_tensor(image, true);
  Tensor out = logit(tape, x);
  if (out.numel() != 1) throw ShapeError("saliency needs a single logit, got " + shape_string(out.shape()));
  GrayImage map(image.height, image.width);
  if (!out.requires_grad()) return map;  // logit independent of the input
  tape.backward(ops::sum(tape, out));
  const auto g = x.grad();
  if (!g.empty()) {
    for (std::size_t i = 0; i < g.size(); ++i) map.pixels[i] = std::abs(g[i]);
  }
  return map;
}

SaliencyMap saliency(const Model& model, const SampleImage& image) {
  const auto n = model.config().input_size;
  if (image.pixels.height != n || image.pixels.width != n) {
    throw ShapeError("saliency: image " + image.id + " is " + std::to_string(image.pixels.height) +
                     "x" + std::to_string(image.pixels.width) + ", model expects " +
                     std::to_string(n) + "x" + std::to_string(n));
  }
  ForwardOptions options;
  options.training = false;
  options.track_parameters = false;
  SaliencyMap map;
  map.values = saliency_of(
      [&](Tape& tape, const Tensor& x) { return model.forward(tape, x, options); }, image.pixels);
  map.image_id = image.id;
  map.model_digest = model.digest();
  map.epoch = model.provenance().epochs_completed;
  return map;
}

std::vector<SaliencyMap> saliency_probe(const std::vector<Snapshot>& snapshots,
                                        const SampleImage& image,
                                        const std::vector<std::size_t>& epochs) {
  std::vector<SaliencyMap> maps;
  for (auto epoch : epochs) {
    auto it = std::find_if(snapshots.begin(), snapshots.end(),
                           [&](const Snapshot& s) { return s.epoch == epoch; });
    if (it == snapshots.end()) {
      throw ConfigError("saliency probe: no snapshot for epoch " + std::to_string(epoch));
    }
    auto map = saliency(it->model, image);
    map.epoch = epoch;
    maps.push_back(std::move(map));
  }
  return maps;
}

double top_fraction_in_mask(const GrayImage& map, const Mask& mask, double fraction) {
  if (map.height != mask.height || map.width != mask.width) {
    throw ShapeError("saliency map and mask differ in shape");
  }
  if (!(fraction > 0 && fraction <= 1)) throw ConfigError("fraction must lie in (0,1]");
  const std::size_t n = map.pixels.size();
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return map.pixels[a] > map.pixels[b]; });
  std::size_t inside = 0;
  for (std::size_t i = 0; i < k; ++i) inside += mask.bits[order[i]] != 0;
  return static_cast<double>(inside) / static_cast<double>(k);
}

void AscentConfig::validate() const {
  if (steps == 0) throw ConfigError("ascent.steps must be at least 1");
  if (!(step_size > 0)) throw ConfigError("ascent.step_size must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("ascent.weight_decay must be >= 0");
  if (direction != 1.0 && direction != -1.0) throw ConfigError("ascent.direction must be +1 or -1");
}

namespace {

struct AscentEval {
  double objective = 0;
  double activation = 0;
  std::vector<float> grad;
};

AscentEval ascent_eval(const Model& model, const std::string& layer, std::size_t filter,
                       const AscentConfig& config, const std::vector<float>& x, bool with_grad) {
  const auto n = model.config().input_size;
  Tape tape;
  Tensor input(Shape{1, 1, n, n}, x, with_grad);
  ForwardOptions options;
  options.track_parameters = false;
  options.stop_at = layer;
  Tensor out = model.forward(tape, input, options);
  Tensor act = ops::mean(tape, ops::slice_channels(tape, out, filter, filter + 1));
  Tensor decay = ops::mean(tape, ops::mul(tape, input, input));
  Tensor objective = ops::add(tape, ops::scale(tape, act, static_cast<float>(config.direction)),
                              ops::scale(tape, decay, static_cast<float>(-config.weight_decay)));
  AscentEval e;
  // Objective in double from its parts so acceptance is not decided by float rounding.
  e.activation = act.item();
  e.objective = config.direction * e.activation - config.weight_decay * static_cast<double>(decay.item());
  if (with_grad && objective.requires_grad()) {
    tape.backward(objective);
    const auto g = input.grad();
    e.grad.assign(g.begin(), g.end());
  } else if (with_grad) {
    e.grad.assign(x.size(), 0.0f);
  }
  return e;
}

}  // namespace

FilterImage maximize_filter(const Model& model, const std::string& layer, std::size_t filter,
                            const AscentConfig& config) {
  config.validate();
  const std::string resolved = resolve_conv_layer(model.config(), layer);
  std::size_t filters = 0;
  for (const auto& c : conv_layers(model.config())) {
    if (c.name == resolved) filters = c.out_channels;
  }
  if (filter >= filters) {
    throw ConfigError("filter index " + std::to_string(filter) + " out of range for layer " +
                      resolved + " with " + std::to_string(filters) + " filters");
  }
  const auto n = model.config().input_size;
  Rng rng = make_stream(config.seed, "ascent", filter);
  std::vector<float> x(n * n);
  for (auto& v : x) v = static_cast<float>(uniform(rng, 0.4, 0.6));

  FilterImage result;
  result.filter = filter;
  AscentEval current = ascent_eval(model, resolved, filter, config, x, true);
  result.trace.push_back(current.activation);
  double step = config.step_size;
  for (std::size_t it = 0; it < config.steps; ++it) {
    double norm = 0;
    for (float g : current.grad) norm += static_cast<double>(g) * g;
    norm = std::sqrt(norm / static_cast<double>(current.grad.size()));
    bool accepted = false;
    if (norm > 0) {
      for (std::size_t h = 0; h <= config.max_halvings && !accepted; ++h, step /= 2) {
        std::vector<float> candidate(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double moved = x[i] + step * current.grad[i] / norm;
          candidate[i] = static_cast<float>(std::clamp(moved, 0.0, 1.0));
        }
        AscentEval next = ascent_eval(model, resolved, filter, config, candidate, false);
        if (next.objective > current.objective &&
            config.direction * (next.activation - current.activation) >= 0) {
          x = std::move(candidate);
          current = ascent_eval(model, resolved, filter, config, x, true);
          accepted = true;
          step = std::min(step * 2, config.step_size);  // let it grow back after success
          break;
        }
      }
    }
    result.trace.push_back(current.activation);
    if (!accepted) step = config.step_size;
  }
  result.image = GrayImage(n, n);
  result.image.pixels = std::move(x);
  return result;
}

FilterPanel maximize_layer(const Model& model, const std::string& layer, const AscentConfig& config) {
  FilterPanel panel;
  panel.layer = resolve_conv_layer(model.config(), layer);
  std::size_t filters = 0;
  for (const auto& c : conv_layers(model.config())) {
    if (c.name == panel.layer) filters = c.out_channels;
  }
  for (std::size_t f = 0; f < filters; ++f) panel.filters.push_back(maximize_filter(model, panel.layer, f, config));
  return panel;
}

std::array<float, 3> blue_red(float v) {
  const float t = std::clamp(v, 0.0f, 1.0f);
  return {t, 0.0f, 1.0f - t};
}

GrayImage normalized(const GrayImage& map) {
  GrayImage out = map;
  const float peak = map.pixels.empty() ? 0.0f : *std::max_element(map.pixels.begin(), map.pixels.end());
  if (peak > 0) {
    for (auto& v : out.pixels) v /= peak;
  } else {
    std::fill(out.pixels.begin(), out.pixels.end(), 0.0f);
  }
  return out;
}

RgbImage render_heatmap(const GrayImage& map, const GrayImage& base, float alpha) {
  if (map.height != base.height || map.width != base.width) {
    throw ShapeError("heatmap and base image differ in shape");
  }
  const GrayImage norm = normalized(map);
  RgbImage out(map.height, map.width);
  for (std::size_t i = 0; i < norm.pixels.size(); ++i) {
    const auto c = blue_red(norm.pixels[i]);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      out.pixels[3 * i + ch] = alpha * c[ch] + (1 - alpha) * base.pixels[i];
    }
  }
  return out;
}

RgbImage render_panel(const FilterPanel& panel, std::size_t rows, std::size_t cols) {
  if (panel.filters.empty()) throw ConfigError("panel has no filters");
  if (rows * cols < panel.filters.size()) {
    throw ConfigError("grid " + std::to_string(rows) + "x" + std::to_string(cols) + " cannot hold " +
                      std::to_string(panel.filters.size()) + " filters");
  }
  const std::size_t tile = panel.filters.front().image.width;
  RgbImage out(rows * (tile + 1) + 1, cols * (tile + 1) + 1, 0.0f);
  for (std::size_t f = 0; f < panel.filters.size(); ++f) {
    const auto& img = panel.filters[f].image;
    if (img.width != tile || img.height != tile) throw ShapeError("panel tiles differ in size");
    const std::size_t oy = (f / cols) * (tile + 1) + 1, ox = (f % cols) * (tile + 1) + 1;
    for (std::size_t y = 0; y < tile; ++y) {
      for (std::size_t x = 0; x < tile; ++x) {
        float* px = out.at(oy + y, ox + x);
        px[0] = px[1] = px[2] = img.at(y, x);
      }
    }
  }
  return out;
}

std::pair<std::size_t, std::size_t> panel_grid(std::size_t filters) {
  if (filters == 0) throw ConfigError("panel_grid needs at least one filter");
  auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(filters))));
  const std::size_t rows = (filters + cols - 1) / cols;
  return {rows, cols};
}

}  // namespace lucenet
