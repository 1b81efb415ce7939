#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "lucenet/rng.hpp"
#include "lucenet/tensor.hpp"

namespace lucenet {

/// Widths of the three hidden classifier layers and the dropout rate that
/// follows them. The output layer is a single logit.
inline constexpr std::array<std::size_t, 3> kHeadDims{512, 256, 256};
inline constexpr double kHeadDropout = 0.3;

/// Architecture recipe of the miniature DenseNet.
struct DenseNetConfig {
  std::size_t input_size = 64;
  std::size_t stem_filters = 8;
  std::size_t growth_rate = 4;
  std::vector<std::size_t> block_layout{2, 2, 2};
  double compression = 0.5;
  std::size_t kernel_size = 3;
  std::vector<std::size_t> head_dims{kHeadDims.begin(), kHeadDims.end()};
  double head_dropout = kHeadDropout;
  /// Must be set for `head_dims` / `head_dropout` to differ from the fixed
  /// head; validation logs the deviation.
  bool head_override = false;

  /// Default desk-scale network.
  static DenseNetConfig desk_scale() { return {}; }
  /// Wide variant whose first and last conv layers have 64 and 32 filters.
  static DenseNetConfig wide();

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
  /// True when both configs produce identical backbone parameter shapes.
  bool backbone_compatible(const DenseNetConfig& other) const;

  bool operator==(const DenseNetConfig&) const = default;
};

enum class ParamGroup { backbone, head };

struct ConvSpec {
  std::string name;  // "stem.conv", "block0.layer1.conv", "transition0.conv"
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t kernel;
};

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamGroup group;
};

/// Conv layers in execution order.
std::vector<ConvSpec> conv_layers(const DenseNetConfig& config);
/// Every parameter in canonical order (backbone first, then head).
std::vector<ParamSpec> parameter_specs(const DenseNetConfig& config);
/// Channels entering the global pooling / head.
std::size_t feature_channels(const DenseNetConfig& config);

/// Name of the first / last conv layer; "first" and "last" are also accepted
/// wherever a layer name is expected.
std::string resolve_conv_layer(const DenseNetConfig& config, std::string_view name);

/// Where a model's weights came from.
struct Provenance {
  std::uint64_t seed = 0;
  std::string init = "zeros";  // gaussian | checkpoint | zeros
  double init_std = 0;
  std::string regime = "none";  // pretext | pretrained | retrained | none
  std::size_t epochs_completed = 0;
};

template <typename T>
using ParamLookup = std::function<BasicTensor<T>(const std::string&)>;

/// Network forward pass for any scalar type. Returns logits [N,1], or the
/// raw (pre-activation) output of conv layer `stop_at` when it is non-empty.
template <typename T>
BasicTensor<T> densenet_forward(BasicTape<T>& tape, const DenseNetConfig& config,
                                const ParamLookup<T>& param, const BasicTensor<T>& batch,
                                bool training, Rng* dropout_rng, std::string_view stop_at = {});

struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;  // required when training
  /// When false every parameter enters the tape as a constant (saliency,
  /// activation maximization). Frozen parameters are always constants.
  bool track_parameters = true;
  std::string stop_at;  // conv layer name, see densenet_forward
};

class Model {
 public:
  struct Parameter {
    std::string name;
    ParamGroup group;
    Tensor value;
  };

  /// Zero-valued parameters; see `build` for initialized models.
  explicit Model(DenseNetConfig config);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  /// Independent copy of all parameter values and the frozen set.
  Model clone() const;

  const DenseNetConfig& config() const noexcept { return config_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  std::vector<Parameter>& parameters() noexcept { return params_; }
  Tensor& parameter(std::string_view name);
  const Tensor& parameter(std::string_view name) const;
  bool has_parameter(std::string_view name) const;
  std::size_t parameter_count() const;
  std::size_t parameter_count(ParamGroup group) const;

  void freeze_backbone();
  void unfreeze_all();
  bool is_frozen(std::string_view name) const;
  bool backbone_frozen() const;
  const std::unordered_set<std::string>& frozen() const noexcept { return frozen_; }

  Tensor forward(Tape& tape, const Tensor& batch, const ForwardOptions& options = {}) const;

  void zero_grad();

  /// FNV-1a digest over parameter names, shapes and value bytes.
  std::uint64_t digest() const;

  std::size_t first_conv_filters() const;
  std::size_t last_conv_filters() const;
  /// Plain-text architecture listing.
  std::string summary() const;

  Provenance& provenance() noexcept { return provenance_; }
  const Provenance& provenance() const noexcept { return provenance_; }

 private:
  DenseNetConfig config_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_set<std::string> frozen_;
  Provenance provenance_;
};

struct GaussianInit {
  std::uint64_t seed = 0;
  double stddev = 0.05;
  /// Use sqrt(2 / fan_in) per layer instead of `stddev`.
  bool fan_in_scaled = false;
};

/// Backbone from a checkpoint; head parameters Gaussian with `head_stddev`.
struct CheckpointInit {
  std::filesystem::path path;
  std::uint64_t seed = 0;
  double head_stddev = 0.05;
};

using ModelInit = std::variant<GaussianInit, CheckpointInit>;

/// Weights ~ N(0, stddev^2), biases zero. Throws ConfigError for invalid
/// configs and FormatError / MissingInputError for checkpoint problems.
Model build(const DenseNetConfig& config, const ModelInit& init);

}  // namespace lucenet
