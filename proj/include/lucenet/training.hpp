#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lucenet/densenet.hpp"
#include "lucenet/synth.hpp"

namespace lucenet {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one slot per parameter tensor.
class AdamState {
 public:
  AdamState(const std::vector<Shape>& shapes, AdamOptions options = {});
  explicit AdamState(const Model& model, AdamOptions options = {});

  const AdamOptions& options() const noexcept { return options_; }
  std::uint64_t step_count() const noexcept { return t_; }
  std::size_t slots() const noexcept { return m_.size(); }
  std::span<const float> m(std::size_t slot) const { return m_.at(slot); }
  std::span<const float> v(std::size_t slot) const { return v_.at(slot); }

 private:
  friend void adam_step(std::span<const std::span<float>>, std::span<const std::span<const float>>,
                        AdamState&);
  AdamOptions options_;
  std::uint64_t t_ = 0;
  std::vector<Shape> shapes_;
  std::vector<std::vector<float>> m_, v_;
};

/// One bias-corrected Adam update. An empty gradient span excludes that slot
/// (frozen, or no gradient path); its parameter and moments stay untouched.
/// Throws ShapeError on size mismatch and NumericError on a non-finite update,
/// in which case no parameter has been modified.
void adam_step(std::span<const std::span<float>> params,
               std::span<const std::span<const float>> grads, AdamState& state);

/// Updates every non-frozen parameter of `model` from its accumulated grad.
void adam_step(Model& model, AdamState& state);

enum class Regime { pretrained, retrained };
std::string_view regime_name(Regime regime);
Regime parse_regime(std::string_view token);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 2;
  double lr = 1e-4;
  Regime regime = Regime::retrained;
  std::uint64_t seed = 0;
  AugmentParams augment;
  bool augment_enabled = true;
  /// Epochs (1-based) after which a copy of the model is kept.
  std::vector<std::size_t> snapshot_epochs;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0;
  double seconds = 0;
};

struct Snapshot {
  std::size_t epoch = 0;
  Model model;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<Snapshot> snapshots;
};

/// Stacks images into a [N,1,H,W] batch.
Tensor make_batch(std::span<const SampleImage* const> samples);
/// Labels as a [N,1] tensor of 0 (well_fixed) / 1 (loose).
Tensor make_labels(std::span<const SampleImage* const> samples);

/// Sample indices of each batch in `epoch` (1-based): a shuffle from the
/// "shuffle" stream cut into runs of `batch_size`, the last one possibly short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch);

/// Trains `model` in place: `epochs` passes over a fresh shuffle of
/// `train_set`, online augmentation per batch, final short batch kept.
/// Randomness comes from `config.seed` through the "shuffle", "augment" and
/// "dropout" streams. Throws ConfigError for an empty set or for the
/// pretrained regime without a frozen backbone; warns on a single class.
TrainHistory fit(Model& model, const std::vector<SampleImage>& train_set, const TrainConfig& config);

/// Mean binary cross-entropy, logits and sigmoid probabilities of `model` on
/// `samples` (inference mode), evaluated in batches.
struct Evaluation {
  double mean_loss = 0;
  std::vector<double> logits;
  std::vector<double> probabilities;
};
Evaluation evaluate_model(const Model& model, const std::vector<SampleImage>& samples,
                          std::size_t batch_size = 16);

/// Columns epoch,mean_loss,seconds.
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

struct PretextConfig {
  PretextParams data;
  double holdout_fraction = 0.2;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  /// He-style sqrt(2 / fan_in) weights; `init_stddev` applies when false.
  bool fan_in_init = true;
  double init_stddev = 0.05;
  /// Held-out accuracy below this logs a "weak backbone" warning.
  double warn_accuracy = 0.8;

  void validate() const;
};

struct PretextResult {
  double heldout_accuracy = 0;
  bool weak_backbone = false;
  TrainHistory history;
  Model model;
};

/// Trains a full network on the auxiliary dark-band task (seeded from
/// `config.data.seed`) and returns it; the caller persists the backbone with
/// `save_checkpoint(result.model, path, CheckpointScope::backbone)`.
PretextResult pretext_pretrain(const DenseNetConfig& model_config, const PretextConfig& config);

}  // namespace lucenet
