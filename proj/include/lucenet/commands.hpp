#pragma once

#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lucenet/evaluation.hpp"
#include "lucenet/interpret.hpp"
#include "lucenet/run_config.hpp"

namespace lucenet {

// Each command writes <out>/config.resolved, logs to <out>/log/<command>.log
// and prints a short summary to `console`.

struct SynthOutcome {
  std::filesystem::path manifest;
  std::size_t loose = 0;
  std::size_t well_fixed = 0;
};
SynthOutcome cmd_synth(const RunConfig& config, std::ostream& console);

struct PretrainOutcome {
  std::filesystem::path checkpoint;
  double heldout_accuracy = 0;
  bool weak_backbone = false;
};
PretrainOutcome cmd_pretrain(const RunConfig& config, std::ostream& console);

struct CrossvalOutcome {
  std::vector<SampleImage> dataset;
  /// One report per regime run, fold models and probe snapshots kept.
  std::map<Regime, FoldReport> reports;
};
CrossvalOutcome cmd_crossval(const RunConfig& config, std::ostream& console);

struct SaliencyOutcome {
  SaliencyMap map;
  std::filesystem::path heatmap;
};
SaliencyOutcome cmd_saliency(const RunConfig& config, std::ostream& console);

struct FiltersOutcome {
  FilterPanel panel;
  std::size_t rows = 0, cols = 0;
  std::filesystem::path image;
};
FiltersOutcome cmd_filters(const RunConfig& config, std::ostream& console);

/// The dataset a run trains on: `data.manifest` when set, the synthetic
/// generator seeded from `seed` otherwise.
std::vector<SampleImage> run_dataset(const RunConfig& config);

/// 2 config error, 3 missing input, 4 anything else.
int exit_code(const std::exception& error);
/// `error kind=<kind> exit=<code> [fold=<n>] message=<what>` on one line.
std::string error_line(const std::exception& error);

/// Runs `command` by name and maps failures to an exit code, writing
/// error_line() to `err`. Unknown names are config errors.
int run_command(const std::string& command, const RunConfig& config, std::ostream& console,
                std::ostream& err);

}  // namespace lucenet
