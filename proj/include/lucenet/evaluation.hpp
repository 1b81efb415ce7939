#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lucenet/densenet.hpp"
#include "lucenet/synth.hpp"
#include "lucenet/training.hpp"

namespace lucenet {

/// Validation and training index lists per fold, indices into the dataset.
struct FoldSplit {
  std::size_t k = 0;
  std::vector<std::vector<std::size_t>> validation;
  std::vector<std::vector<std::size_t>> train;
};

/// Shuffles with the "folds" stream of `seed` and deals samples round-robin.
/// Stratified mode deals each class in turn, continuing where the previous
/// class stopped, so fold sizes and per-class counts each differ by at most 1.
/// Throws ConfigError when n < k or a class has fewer than k samples
/// (stratified only).
FoldSplit make_folds(const std::vector<Label>& labels, std::size_t k, std::uint64_t seed,
                     bool stratified = true);

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp, fp += o.fp, tn += o.tn, fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

// Empty denominators yield std::nullopt, the undefined marker.
std::optional<double> sensitivity(const ConfusionCounts& c);
std::optional<double> specificity(const ConfusionCounts& c);
std::optional<double> accuracy(const ConfusionCounts& c);

/// Positive (loose) when score >= threshold.
ConfusionCounts confusion_at(const std::vector<double>& scores, const std::vector<Label>& labels,
                             double threshold = 0.5);

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
  /// Scores >= threshold are called positive; +inf for the (0,0) start.
  double threshold = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0;
};

/// One point per distinct score (ties move together), from (0,0) to (1,1);
/// AUC by the trapezoidal rule. Throws ConfigError for a single class or
/// non-finite scores.
RocCurve roc_curve(const std::vector<double>& scores, const std::vector<Label>& labels);

/// Operating point with the highest sensitivity among those whose
/// specificity is at least `min_specificity`.
RocPoint threshold_at_specificity(const RocCurve& curve, double min_specificity);

/// Vertical average: tpr interpolated at `grid_points` evenly spaced fpr
/// values and averaged; the curve starts at (0,0).
RocCurve average_roc(const std::vector<RocCurve>& curves, std::size_t grid_points = 101);

/// tpr of `curve` at `fpr` by linear interpolation; on vertical segments the
/// highest tpr is used.
double interpolate_tpr(const RocCurve& curve, double fpr);

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::size_t> validation;  // dataset indices
  std::vector<double> logits;           // aligned with `validation`
  std::vector<double> probabilities;
  ConfusionCounts counts;  // threshold 0.5 on the probability
  RocCurve roc;            // ranked by logit
  TrainHistory history;
  std::optional<Model> model;  // kept when requested
};

struct CrossValConfig {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  bool stratified = true;
  DenseNetConfig model;
  TrainConfig train;  // `regime` selects the initializer; `seed` is overridden per fold
  /// Backbone checkpoint, required for the pretrained regime.
  std::filesystem::path backbone_checkpoint;
  double init_stddev = 0.05;
  std::size_t jobs = 1;
  bool keep_models = false;
};

struct FoldReport {
  Regime regime = Regime::retrained;
  std::vector<FoldResult> folds;
  double mean_auc = 0;
  RocCurve mean_curve;
  std::uint64_t seed = 0;
  std::size_t leakage_checks = 0;
};

/// Trains one model per fold on the other k-1 folds and scores its validation
/// fold once. Before training, the train and validation id sets are checked
/// for overlap at runtime (LeakageError). Other failures surface as FoldError.
FoldReport cross_validate(const std::vector<SampleImage>& dataset, const CrossValConfig& config);

/// fold,tp,fp,tn,fn,sensitivity,specificity,accuracy,auc with one row per
/// fold and a final `mean` row (pooled counts, fold-averaged metrics).
/// Undefined metrics are written as `NA`.
std::string fold_report_csv(const FoldReport& report);
/// fold,id,label,logit,probability for every validation sample.
std::string predictions_csv(const FoldReport& report, const std::vector<SampleImage>& dataset);

/// A reader's confusion counts drawn as a marker on the ROC plot.
struct ReaderPoint {
  std::string name;
  ConfusionCounts counts;
};

/// Per-fold curves in light strokes, mean curve bold, dashed chance diagonal.
std::string roc_svg(const FoldReport& report, const std::optional<ReaderPoint>& reader = {});

void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace lucenet
