#include "lucenet/densenet.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "lucenet/checkpoint.hpp"
#include "lucenet/ops.hpp"

namespace lucenet {

DenseNetConfig DenseNetConfig::wide() {
  DenseNetConfig c;
  c.stem_filters = 64;
  c.growth_rate = 32;
  return c;
}

void DenseNetConfig::validate() const {
  if (input_size == 0) throw ConfigError("model.input_size must be positive");
  if (stem_filters == 0) throw ConfigError("model.stem_filters must be positive");
  if (growth_rate == 0) throw ConfigError("model.growth_rate must be at least 1");
  if (block_layout.empty()) throw ConfigError("model.block_layout must list at least one block");
  for (auto layers : block_layout) {
    if (layers == 0) throw ConfigError("model.block_layout: every block needs at least one layer");
  }
  if (!(compression > 0.0 && compression <= 1.0)) {
    throw ConfigError("model.compression must lie in (0,1]");
  }
  if (kernel_size == 0 || kernel_size % 2 == 0) {
    throw ConfigError("model.kernel_size must be odd and positive");
  }
  // Stem pool plus one pool per transition, each halving the side.
  if (input_size < (std::size_t{1} << block_layout.size())) {
    throw ConfigError("model.input_size " + std::to_string(input_size) + " too small for " +
                      std::to_string(block_layout.size()) + " blocks");
  }
  const bool head_is_default =
      head_dims == std::vector<std::size_t>(kHeadDims.begin(), kHeadDims.end()) &&
      head_dropout == kHeadDropout;
  if (!head_is_default) {
    if (!head_override) {
      throw ConfigError("classifier head is fixed at 512-256-256 with dropout 0.3; set "
                        "model.head_override=1 to change it");
    }
    if (head_dims.empty()) throw ConfigError("model.head_dims must not be empty");
    for (auto d : head_dims) {
      if (d == 0) throw ConfigError("model.head_dims entries must be positive");
    }
    if (!(head_dropout >= 0.0 && head_dropout < 1.0)) {
      throw ConfigError("model.head_dropout must lie in [0,1)");
    }
    spdlog::warn("classifier head overridden: dims differ from 512-256-256 or dropout from 0.3");
  }
}

bool DenseNetConfig::backbone_compatible(const DenseNetConfig& other) const {
  return stem_filters == other.stem_filters && growth_rate == other.growth_rate &&
         block_layout == other.block_layout && compression == other.compression &&
         kernel_size == other.kernel_size;
}

namespace {

std::size_t compressed(std::size_t channels, double compression) {
  auto out = static_cast<std::size_t>(std::floor(static_cast<double>(channels) * compression));
  return std::max<std::size_t>(out, 1);
}

std::string block_layer_name(std::size_t block, std::size_t layer) {
  return "block" + std::to_string(block) + ".layer" + std::to_string(layer) + ".conv";
}

std::string transition_name(std::size_t block) {
  return "transition" + std::to_string(block) + ".conv";
}

std::vector<std::string> head_layer_names(const DenseNetConfig& config) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < config.head_dims.size(); ++i) names.push_back("head.fc" + std::to_string(i));
  names.push_back("head.out");
  return names;
}

}  // namespace

std::vector<ConvSpec> conv_layers(const DenseNetConfig& config) {
  std::vector<ConvSpec> layers;
  const std::size_t k = config.kernel_size;
  layers.push_back({"stem.conv", 1, config.stem_filters, k});
  std::size_t channels = config.stem_filters;
  for (std::size_t b = 0; b < config.block_layout.size(); ++b) {
    for (std::size_t i = 0; i < config.block_layout[b]; ++i) {
      layers.push_back({block_layer_name(b, i), channels + i * config.growth_rate,
                        config.growth_rate, k});
    }
    channels += config.block_layout[b] * config.growth_rate;
    if (b + 1 < config.block_layout.size()) {
      const std::size_t out = compressed(channels, config.compression);
      layers.push_back({transition_name(b), channels, out, 1});
      channels = out;
    }
  }
  return layers;
}

std::size_t feature_channels(const DenseNetConfig& config) {
  std::size_t channels = config.stem_filters;
  for (std::size_t b = 0; b < config.block_layout.size(); ++b) {
    channels += config.block_layout[b] * config.growth_rate;
    if (b + 1 < config.block_layout.size()) channels = compressed(channels, config.compression);
  }
  return channels;
}

std::vector<ParamSpec> parameter_specs(const DenseNetConfig& config) {
  std::vector<ParamSpec> specs;
  for (const auto& conv : conv_layers(config)) {
    specs.push_back({conv.name + ".weight",
                     {conv.out_channels, conv.in_channels, conv.kernel, conv.kernel},
                     ParamGroup::backbone});
    specs.push_back({conv.name + ".bias", {conv.out_channels}, ParamGroup::backbone});
  }
  std::size_t width = feature_channels(config);
  const auto names = head_layer_names(config);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::size_t out = i < config.head_dims.size() ? config.head_dims[i] : 1;
    specs.push_back({names[i] + ".weight", {width, out}, ParamGroup::head});
    specs.push_back({names[i] + ".bias", {out}, ParamGroup::head});
    width = out;
  }
  return specs;
}

std::string resolve_conv_layer(const DenseNetConfig& config, std::string_view name) {
  const auto layers = conv_layers(config);
  if (name == "first") return layers.front().name;
  if (name == "last") {
    // Last conv inside a dense block (transitions are 1x1 bottlenecks).
    return block_layer_name(config.block_layout.size() - 1, config.block_layout.back() - 1);
  }
  for (const auto& l : layers) {
    if (l.name == name) return l.name;
  }
  throw ConfigError("unknown conv layer '" + std::string(name) + "'");
}

template <typename T>
BasicTensor<T> densenet_forward(BasicTape<T>& tape, const DenseNetConfig& config,
                                const ParamLookup<T>& param, const BasicTensor<T>& batch,
                                bool training, Rng* dropout_rng, std::string_view stop_at) {
  if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != config.input_size ||
      batch.dim(3) != config.input_size) {
    throw ShapeError("model expects a batch of shape [N,1," + std::to_string(config.input_size) +
                     "," + std::to_string(config.input_size) + "], got " +
                     shape_string(batch.shape()));
  }
  if (training && config.head_dropout > 0 && dropout_rng == nullptr) {
    throw ConfigError("training forward pass needs a dropout stream");
  }
  const std::size_t pad = config.kernel_size / 2;
  auto conv = [&](const BasicTensor<T>& x, const std::string& name, std::size_t padding) {
    return ops::conv2d(tape, x, param(name + ".weight"), param(name + ".bias"), 1, padding);
  };

  BasicTensor<T> stem = conv(batch, "stem.conv", pad);
  if (stop_at == "stem.conv") return stem;
  BasicTensor<T> x = ops::avg_pool2d(tape, ops::relu(tape, stem), 2, 2);

  for (std::size_t b = 0; b < config.block_layout.size(); ++b) {
    std::vector<BasicTensor<T>> features{x};
    for (std::size_t i = 0; i < config.block_layout[b]; ++i) {
      const auto name = block_layer_name(b, i);
      const BasicTensor<T> input = features.size() == 1 ? features[0] : ops::concat_channels(tape, features);
      BasicTensor<T> h = conv(input, name, pad);
      if (stop_at == name) return h;
      features.push_back(ops::relu(tape, h));
    }
    x = ops::concat_channels(tape, features);
    if (b + 1 < config.block_layout.size()) {
      const auto name = transition_name(b);
      BasicTensor<T> t = conv(x, name, 0);
      if (stop_at == name) return t;
      x = ops::avg_pool2d(tape, ops::relu(tape, t), 2, 2);
    }
  }
  if (!stop_at.empty()) throw ConfigError("unknown conv layer '" + std::string(stop_at) + "'");

  x = ops::global_avg_pool(tape, x);
  const auto names = head_layer_names(config);
  for (std::size_t i = 0; i + 1 < names.size(); ++i) {
    x = ops::relu(tape, ops::dense(tape, x, param(names[i] + ".weight"), param(names[i] + ".bias")));
  }
  Rng unused(0);
  x = ops::dropout(tape, x, config.head_dropout, training, dropout_rng ? *dropout_rng : unused);
  return ops::dense(tape, x, param("head.out.weight"), param("head.out.bias"));
}

template BasicTensor<float> densenet_forward(BasicTape<float>&, const DenseNetConfig&,
                                             const ParamLookup<float>&, const BasicTensor<float>&,
                                             bool, Rng*, std::string_view);
template BasicTensor<double> densenet_forward(BasicTape<double>&, const DenseNetConfig&,
                                              const ParamLookup<double>&,
                                              const BasicTensor<double>&, bool, Rng*,
                                              std::string_view);

Model::Model(DenseNetConfig config) : config_(std::move(config)) {
  config_.validate();
  for (auto& spec : parameter_specs(config_)) {
    index_.emplace(spec.name, params_.size());
    params_.push_back({spec.name, spec.group, Tensor::zeros(spec.shape, true)});
  }
}

Model Model::clone() const {
  Model copy(config_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto src = params_[i].value.data();
    std::copy(src.begin(), src.end(), copy.params_[i].value.mutable_data().begin());
  }
  copy.frozen_ = frozen_;
  copy.provenance_ = provenance_;
  return copy;
}

Tensor& Model::parameter(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return params_[it->second].value;
}

const Tensor& Model::parameter(std::string_view name) const {
  return const_cast<Model*>(this)->parameter(name);
}

bool Model::has_parameter(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

std::size_t Model::parameter_count(ParamGroup group) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.group == group) n += p.value.numel();
  }
  return n;
}

void Model::freeze_backbone() {
  frozen_.clear();
  for (const auto& p : params_) {
    if (p.group == ParamGroup::backbone) frozen_.insert(p.name);
  }
}

void Model::unfreeze_all() { frozen_.clear(); }

bool Model::is_frozen(std::string_view name) const { return frozen_.contains(std::string(name)); }

bool Model::backbone_frozen() const {
  for (const auto& p : params_) {
    if (p.group == ParamGroup::backbone && !frozen_.contains(p.name)) return false;
  }
  return true;
}

Tensor Model::forward(Tape& tape, const Tensor& batch, const ForwardOptions& options) const {
  ParamLookup<float> lookup = [&](const std::string& name) -> Tensor {
    const Tensor& p = parameter(name);
    if (!options.track_parameters || is_frozen(name)) return p.detached();
    return p;
  };
  return densenet_forward<float>(tape, config_, lookup, batch, options.training,
                                 options.dropout_rng, options.stop_at);
}

void Model::zero_grad() {
  for (auto& p : params_) p.value.clear_grad();
}

std::uint64_t Model::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& p : params_) {
    feed(p.name.data(), p.name.size());
    for (auto d : p.value.shape()) {
      const auto d64 = static_cast<std::uint64_t>(d);
      feed(&d64, sizeof d64);
    }
    feed(p.value.data().data(), p.value.numel() * sizeof(float));
  }
  return h;
}

std::size_t Model::first_conv_filters() const {
  return parameter(resolve_conv_layer(config_, "first") + ".bias").numel();
}

std::size_t Model::last_conv_filters() const {
  return parameter(resolve_conv_layer(config_, "last") + ".bias").numel();
}

std::string Model::summary() const {
  std::ostringstream os;
  os << "input: 1x" << config_.input_size << "x" << config_.input_size << "\n";
  std::size_t side = config_.input_size;
  for (const auto& conv : conv_layers(config_)) {
    const auto w = parameter(conv.name + ".weight").numel() + conv.out_channels;
    os << "conv " << conv.name << " " << conv.kernel << "x" << conv.kernel << " "
       << conv.in_channels << "->" << conv.out_channels << " params=" << w << "\n";
    if (conv.name == "stem.conv" || conv.name.starts_with("transition")) {
      side /= 2;
      os << "pool avg 2x2 -> " << side << "x" << side << "\n";
    }
  }
  os << "pool global -> " << feature_channels(config_) << "\n";
  std::size_t width = feature_channels(config_);
  const auto names = head_layer_names(config_);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::size_t out = i < config_.head_dims.size() ? config_.head_dims[i] : 1;
    if (i + 1 == names.size()) os << "dropout " << config_.head_dropout << "\n";
    os << "dense " << names[i] << " " << width << "->" << out
       << (i + 1 < names.size() ? " relu" : "") << "\n";
    width = out;
  }
  os << "first_conv_filters: " << first_conv_filters() << "\n";
  os << "last_conv_filters: " << last_conv_filters() << "\n";
  os << "parameters: " << parameter_count() << " (backbone " << parameter_count(ParamGroup::backbone)
     << ", head " << parameter_count(ParamGroup::head) << ")\n";
  os << "frozen: " << (backbone_frozen() ? "backbone" : frozen_.empty() ? "none" : "partial")
     << "\n";
  return os.str();
}

namespace {

void gaussian_fill(Model::Parameter& p, Rng& rng, double stddev) {
  if (p.value.rank() == 1) return;  // biases stay zero
  std::normal_distribution<double> normal(0.0, stddev);
  for (auto& v : p.value.mutable_data()) v = static_cast<float>(normal(rng));
}

}  // namespace

Model build(const DenseNetConfig& config, const ModelInit& init) {
  Model model(config);
  if (const auto* g = std::get_if<GaussianInit>(&init)) {
    if (!(g->stddev > 0)) throw ConfigError("gaussian init stddev must be positive");
    auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      Rng rng = make_stream(g->seed, "init", i);
      const auto& shape = params[i].value.shape();
      const std::size_t fan_in = shape.size() == 4 ? shape[1] * shape[2] * shape[3] : shape[0];
      gaussian_fill(params[i], rng, g->fan_in_scaled ? std::sqrt(2.0 / fan_in) : g->stddev);
    }
    model.provenance() = {g->seed, g->fan_in_scaled ? "gaussian_fan_in" : "gaussian",
                          g->fan_in_scaled ? 0.0 : g->stddev, "none", 0};
    return model;
  }

  const auto& c = std::get<CheckpointInit>(init);
  if (!(c.head_stddev > 0)) throw ConfigError("head init stddev must be positive");
  CheckpointContents ckpt = read_checkpoint(c.path);
  if (!config.backbone_compatible(ckpt.config)) {
    throw FormatError(FormatError::Kind::config_mismatch,
                      "config mismatch: checkpoint " + c.path.string() +
                          " was written for a different backbone architecture");
  }
  auto& params = model.parameters();
  std::size_t loaded = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.group == ParamGroup::head) {
      Rng rng = make_stream(c.seed, "init", i);
      gaussian_fill(p, rng, c.head_stddev);
      continue;
    }
    for (const auto& [name, value] : ckpt.parameters) {
      if (name != p.name) continue;
      if (value.shape() != p.value.shape()) {
        throw FormatError(FormatError::Kind::shape_mismatch,
                          "parameter " + name + " has shape " + shape_string(value.shape()) +
                              ", expected " + shape_string(p.value.shape()));
      }
      std::copy(value.data().begin(), value.data().end(), p.value.mutable_data().begin());
      ++loaded;
    }
  }
  std::size_t backbone = 0;
  for (const auto& p : params) backbone += p.group == ParamGroup::backbone;
  if (loaded != backbone) {
    throw FormatError(FormatError::Kind::config_mismatch,
                      "config mismatch: checkpoint provides " + std::to_string(loaded) + " of " +
                          std::to_string(backbone) + " backbone tensors");
  }
  model.provenance() = {c.seed, "checkpoint", c.head_stddev, ckpt.provenance.regime,
                        ckpt.provenance.epochs_completed};
  return model;
}

}  // namespace lucenet
