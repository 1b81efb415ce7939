#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lucenet/densenet.hpp"
#include "lucenet/evaluation.hpp"
#include "lucenet/interpret.hpp"
#include "lucenet/synth.hpp"
#include "lucenet/training.hpp"

namespace lucenet {

/// Everything a command needs, filled from a flat `section.key=value` file.
/// Ranges are written `lo,hi`; lists (block layout, reader counts) are
/// comma-separated.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  std::filesystem::path out = "run";

  /// Existing dataset; when empty the synthetic generator is used.
  std::filesystem::path manifest;
  SynthParams synth;
  PretextConfig pretext;
  DenseNetConfig model;
  double init_stddev = 0.05;
  TrainConfig train;
  /// pretrained, retrained or both
  std::string regime = "both";
  std::size_t k = 5;
  bool stratified = true;
  /// Backbone checkpoint; defaults to <out>/backbone.ckpt when empty.
  std::filesystem::path backbone;
  /// Probe epochs for the per-fold saliency snapshots (those <= epochs).
  std::vector<std::size_t> probe_epochs{1, 5, 10};
  std::string reader_name = "reader";
  std::optional<ConfusionCounts> reader;

  std::filesystem::path saliency_checkpoint;
  std::filesystem::path saliency_image;

  std::filesystem::path filters_checkpoint;
  std::string filters_layer = "first";
  AscentConfig ascent;

  /// Throws ConfigError naming `key` when it is unknown or `value` does not parse.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  /// Every key with its current value, one `key=value` line each, in key order.
  std::string resolved() const;

  std::filesystem::path backbone_path() const;

  /// Parses `text` over the defaults. Blank lines and lines starting with `#`
  /// are skipped; a repeated key is an error. Messages are prefixed
  /// `origin:line:`.
  static RunConfig parse(std::string_view text, std::string_view origin = "config");
  /// MissingInputError when `path` does not exist.
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace lucenet
