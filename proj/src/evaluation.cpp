#include "lucenet/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace lucenet {

FoldSplit make_folds(const std::vector<Label>& labels, std::size_t k, std::uint64_t seed,
                     bool stratified) {
  const std::size_t n = labels.size();
  if (k < 2) throw ConfigError("k must be at least 2");
  if (n < k) {
    throw ConfigError("cannot split " + std::to_string(n) + " samples into " + std::to_string(k) +
                      " folds");
  }
  FoldSplit split;
  split.k = k;
  split.validation.resize(k);
  Rng rng = make_stream(seed, "folds");

  std::vector<std::vector<std::size_t>> groups;
  if (stratified) {
    groups.resize(2);
    for (std::size_t i = 0; i < n; ++i) groups[labels[i] == Label::loose].push_back(i);
    for (std::size_t c = 0; c < 2; ++c) {
      if (groups[c].size() < k) {
        throw ConfigError("stratification infeasible: class " +
                          std::string(label_name(static_cast<Label>(c))) + " has " +
                          std::to_string(groups[c].size()) + " samples for " + std::to_string(k) +
                          " folds");
      }
    }
  } else {
    groups.emplace_back(n);
    std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
  }
  std::size_t position = 0;
  for (auto& g : groups) {
    shuffle_in_place(g, rng);
    for (auto idx : g) split.validation[position++ % k].push_back(idx);
  }
  for (auto& v : split.validation) std::sort(v.begin(), v.end());
  split.train.resize(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<char> held(n, 0);
    for (auto idx : split.validation[f]) held[idx] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (!held[i]) split.train[f].push_back(i);
    }
  }
  return split;
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::optional<double> sensitivity(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }
std::optional<double> specificity(const ConfusionCounts& c) { return ratio(c.tn, c.tn + c.fp); }
std::optional<double> accuracy(const ConfusionCounts& c) { return ratio(c.tp + c.tn, c.total()); }

ConfusionCounts confusion_at(const std::vector<double>& scores, const std::vector<Label>& labels,
                             double threshold) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool called = scores[i] >= threshold;
    if (labels[i] == Label::loose) {
      called ? ++c.tp : ++c.fn;
    } else {
      called ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<Label>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  std::uint64_t positives = 0;
  for (auto l : labels) positives += l == Label::loose;
  const std::uint64_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw ConfigError("roc_curve needs both classes");
  for (double s : scores) {
    if (!std::isfinite(s)) throw ConfigError("roc_curve: non-finite score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::uint64_t tp = 0, fp = 0, prev_tp = 0, prev_fp = 0;
  // Twice the area in units of one (positive, negative) pair.
  std::uint64_t doubled_area = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      labels[order[i]] == Label::loose ? ++tp : ++fp;
    }
    doubled_area += (fp - prev_fp) * (tp + prev_tp);
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives), s});
    prev_tp = tp;
    prev_fp = fp;
  }
  curve.auc = static_cast<double>(doubled_area) /
              (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
  return curve;
}

RocPoint threshold_at_specificity(const RocCurve& curve, double min_specificity) {
  std::optional<RocPoint> best;
  for (const auto& p : curve.points) {
    if (1.0 - p.fpr + 1e-12 < min_specificity) continue;
    if (!best || p.tpr > best->tpr) best = p;
  }
  if (!best) throw ConfigError("no operating point reaches the requested specificity");
  return *best;
}

double interpolate_tpr(const RocCurve& curve, double fpr) {
  const auto& pts = curve.points;
  if (pts.empty()) throw ConfigError("empty ROC curve");
  double exact = -1;
  for (const auto& p : pts) {
    if (p.fpr == fpr) exact = std::max(exact, p.tpr);
  }
  if (exact >= 0) return exact;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].fpr > fpr) {
      // pts[i-1] is the last (highest) point of its fpr column.
      const auto& a = pts[i - 1];
      const auto& b = pts[i];
      return a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr);
    }
  }
  return pts.back().tpr;
}

RocCurve average_roc(const std::vector<RocCurve>& curves, std::size_t grid_points) {
  if (curves.empty()) throw ConfigError("average_roc needs at least one curve");
  if (grid_points < 2) throw ConfigError("average_roc needs at least two grid points");
  RocCurve mean;
  mean.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  for (std::size_t j = 0; j < grid_points; ++j) {
    const double f = static_cast<double>(j) / static_cast<double>(grid_points - 1);
    double sum = 0;
    for (const auto& c : curves) sum += interpolate_tpr(c, f);
    mean.points.push_back({f, sum / static_cast<double>(curves.size()), 0.0});
  }
  for (std::size_t i = 1; i < mean.points.size(); ++i) {
    const auto& a = mean.points[i - 1];
    const auto& b = mean.points[i];
    mean.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2;
  }
  return mean;
}

namespace {

FoldResult run_fold(const std::vector<SampleImage>& dataset, const CrossValConfig& config,
                    const FoldSplit& split, std::size_t fold, std::atomic<std::size_t>& checks) {
  std::vector<SampleImage> train, validation;
  for (auto i : split.train[fold]) train.push_back(dataset[i]);
  for (auto i : split.validation[fold]) validation.push_back(dataset[i]);

  std::set<std::string> train_ids;
  for (const auto& s : train) train_ids.insert(s.id);
  for (const auto& s : validation) {
    if (train_ids.contains(s.id)) {
      throw LeakageError("fold " + std::to_string(fold + 1) + ": sample " + s.id +
                         " is in both the training and validation sets");
    }
  }
  ++checks;

  const std::uint64_t init_seed = stream_seed(config.seed, "fold.init", fold);
  Model model = config.train.regime == Regime::pretrained
                    ? build(config.model, CheckpointInit{config.backbone_checkpoint, init_seed,
                                                         config.init_stddev})
                    : build(config.model, GaussianInit{init_seed, config.init_stddev});
  if (config.train.regime == Regime::pretrained) model.freeze_backbone();

  TrainConfig train_config = config.train;
  train_config.seed = stream_seed(config.seed, "fold.train", fold);
  FoldResult result;
  result.fold = fold;
  result.validation = split.validation[fold];
  result.history = fit(model, train, train_config);

  const auto eval = evaluate_model(model, validation);
  result.logits = eval.logits;
  result.probabilities = eval.probabilities;
  std::vector<Label> labels;
  for (const auto& s : validation) labels.push_back(s.label);
  result.counts = confusion_at(result.probabilities, labels, 0.5);
  result.roc = roc_curve(result.logits, labels);
  if (config.keep_models) result.model = std::move(model);
  spdlog::info("{} fold {}: auc {:.4f}", regime_name(config.train.regime), fold + 1, result.roc.auc);
  return result;
}

}  // namespace

FoldReport cross_validate(const std::vector<SampleImage>& dataset, const CrossValConfig& config) {
  if (config.train.regime == Regime::pretrained) {
    if (config.backbone_checkpoint.empty()) {
      throw ConfigError("the pretrained regime needs a backbone checkpoint");
    }
    if (!std::filesystem::exists(config.backbone_checkpoint)) {
      throw MissingInputError("backbone checkpoint " + config.backbone_checkpoint.string() +
                              " does not exist");
    }
  }
  std::vector<Label> labels;
  for (const auto& s : dataset) labels.push_back(s.label);
  const FoldSplit split = make_folds(labels, config.k, config.seed, config.stratified);

  FoldReport report;
  report.regime = config.train.regime;
  report.seed = config.seed;
  report.folds.resize(config.k);
  std::vector<std::exception_ptr> errors(config.k);
  std::atomic<std::size_t> next{0}, checks{0};
  auto worker = [&] {
    for (std::size_t f; (f = next++) < config.k;) {
      try {
        report.folds[f] = run_fold(dataset, config, split, f, checks);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(config.jobs, 1, config.k);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t f = 0; f < config.k; ++f) {
    if (!errors[f]) continue;
    try {
      std::rethrow_exception(errors[f]);
    } catch (const LeakageError&) {
      throw;
    } catch (const std::exception& e) {
      throw FoldError(f, e.what());
    }
  }
  report.leakage_checks = checks;

  std::vector<RocCurve> curves;
  for (const auto& f : report.folds) {
    report.mean_auc += f.roc.auc;
    curves.push_back(f.roc);
  }
  report.mean_auc /= static_cast<double>(config.k);
  report.mean_curve = average_roc(curves);
  return report;
}

namespace {

std::string metric(const std::optional<double>& v) {
  return v ? fmt::format("{:.6f}", *v) : std::string("NA");
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& values) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

std::string fold_report_csv(const FoldReport& report) {
  std::string out = "fold,tp,fp,tn,fn,sensitivity,specificity,accuracy,auc\n";
  ConfusionCounts pooled;
  std::vector<std::optional<double>> sens, spec, acc, auc;
  for (const auto& f : report.folds) {
    const auto& c = f.counts;
    pooled += c;
    sens.push_back(sensitivity(c));
    spec.push_back(specificity(c));
    acc.push_back(accuracy(c));
    auc.push_back(f.roc.auc);
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", f.fold + 1, c.tp, c.fp, c.tn, c.fn,
                       metric(sens.back()), metric(spec.back()), metric(acc.back()),
                       metric(auc.back()));
  }
  out += fmt::format("mean,{},{},{},{},{},{},{},{}\n", pooled.tp, pooled.fp, pooled.tn, pooled.fn,
                     metric(mean_defined(sens)), metric(mean_defined(spec)),
                     metric(mean_defined(acc)), metric(report.mean_auc));
  return out;
}

std::string predictions_csv(const FoldReport& report, const std::vector<SampleImage>& dataset) {
  std::string out = "fold,id,label,logit,probability\n";
  for (const auto& f : report.folds) {
    for (std::size_t i = 0; i < f.validation.size(); ++i) {
      const auto& s = dataset.at(f.validation[i]);
      out += fmt::format("{},{},{},{:.9g},{:.9g}\n", f.fold + 1, s.id, label_name(s.label),
                         f.logits[i], f.probabilities[i]);
    }
  }
  return out;
}

std::string roc_svg(const FoldReport& report, const std::optional<ReaderPoint>& reader) {
  constexpr double kSize = 400, kMargin = 50;
  auto px = [](double fpr) { return kMargin + fpr * kSize; };
  auto py = [](double tpr) { return kMargin + (1 - tpr) * kSize; };
  auto polyline = [&](const RocCurve& c) {
    std::string pts;
    for (const auto& p : c.points) pts += fmt::format("{:.2f},{:.2f} ", px(p.fpr), py(p.tpr));
    if (!pts.empty()) pts.pop_back();
    return pts;
  };
  const double full = kSize + 2 * kMargin;
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n"
      "<rect x=\"0\" y=\"0\" width=\"{0}\" height=\"{0}\" fill=\"white\"/>\n"
      "<rect x=\"{1}\" y=\"{1}\" width=\"{2}\" height=\"{2}\" fill=\"none\" stroke=\"black\"/>\n"
      "<line x1=\"{1}\" y1=\"{3}\" x2=\"{3}\" y2=\"{1}\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n",
      full, kMargin, kSize, kMargin + kSize);
  for (const auto& f : report.folds) {
    svg += fmt::format(
        "<polyline class=\"fold\" points=\"{}\" fill=\"none\" stroke=\"#7fa7d9\" "
        "stroke-width=\"1\" stroke-opacity=\"0.6\"/>\n",
        polyline(f.roc));
  }
  svg += fmt::format(
      "<polyline class=\"mean\" points=\"{}\" fill=\"none\" stroke=\"#b2182b\" stroke-width=\"3\"/>\n",
      polyline(report.mean_curve));
  if (reader) {
    const double sens = sensitivity(reader->counts).value_or(0);
    const double spec = specificity(reader->counts).value_or(0);
    svg += fmt::format(
        "<circle class=\"reader\" cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"5\" fill=\"black\"/>\n"
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"12\">{}</text>\n",
        px(1 - spec), py(sens), px(1 - spec) + 8, py(sens) + 4, reader->name);
  }
  svg += fmt::format(
      "<text x=\"{:.0f}\" y=\"{:.0f}\" font-size=\"14\" text-anchor=\"middle\">False positive rate</text>\n"
      "<text x=\"15\" y=\"{:.0f}\" font-size=\"14\" text-anchor=\"middle\" "
      "transform=\"rotate(-90 15 {:.0f})\">True positive rate</text>\n"
      "<text x=\"{:.0f}\" y=\"30\" font-size=\"14\" text-anchor=\"middle\">{} mean AUC {:.3f}</text>\n"
      "</svg>\n",
      kMargin + kSize / 2, full - 15, kMargin + kSize / 2, kMargin + kSize / 2, kMargin + kSize / 2,
      regime_name(report.regime), report.mean_auc);
  return svg;
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw FormatError(FormatError::Kind::io, "write to " + path.string() + " failed");
}

}  // namespace lucenet
