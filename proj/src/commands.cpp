#include "lucenet/commands.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "lucenet/checkpoint.hpp"
#include "lucenet/image.hpp"

namespace fs = std::filesystem;

namespace lucenet {

namespace {

// Routes the library's spdlog output to <out>/log/<command>.log (everything
// from info up) and warnings to the console for the lifetime of the object.
class LogScope {
 public:
  LogScope(const RunConfig& config, const std::string& command, std::ostream& console)
      : previous_(spdlog::default_logger()) {
    fs::create_directories(config.out / "log");
    auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>(
        (config.out / "log" / (command + ".log")).string(), true);
    file->set_level(spdlog::level::info);
    auto screen = std::make_shared<spdlog::sinks::ostream_sink_mt>(console, true);
    screen->set_level(spdlog::level::warn);
    screen->set_pattern("warning: %v");
    auto logger = std::make_shared<spdlog::logger>(command, spdlog::sinks_init_list{file, screen});
    logger->set_level(spdlog::level::info);
    spdlog::set_default_logger(logger);
    write_text(config.resolved(), config.out / "config.resolved");
    spdlog::info("{} started, seed {}", command, config.seed);
  }
  ~LogScope() {
    spdlog::default_logger()->flush();
    spdlog::set_default_logger(previous_);
  }
  LogScope(const LogScope&) = delete;
  LogScope& operator=(const LogScope&) = delete;

 private:
  std::shared_ptr<spdlog::logger> previous_;
};

std::vector<Regime> regimes_of(const RunConfig& config) {
  if (config.regime == "both") return {Regime::pretrained, Regime::retrained};
  return {parse_regime(config.regime)};
}

std::string metric(const std::optional<double>& v) {
  return v ? fmt::format("{:.2f}", *v) : std::string("NA");
}

void write_probe(const FoldReport& report, const std::vector<SampleImage>& dataset,
                 const fs::path& dir) {
  const auto& first = report.folds.front();
  if (first.history.snapshots.empty()) return;
  const auto it = std::find_if(first.validation.begin(), first.validation.end(),
                               [&](std::size_t i) { return dataset[i].label == Label::loose; });
  if (it == first.validation.end()) {
    spdlog::warn("fold 1 has no loose validation image; saliency probe skipped");
    return;
  }
  const auto& image = dataset[*it];
  std::vector<std::size_t> epochs;
  for (const auto& s : first.history.snapshots) epochs.push_back(s.epoch);
  fs::create_directories(dir);
  for (const auto& map : saliency_probe(first.history.snapshots, image, epochs)) {
    const auto stem = fmt::format("fold1_{}_epoch{:02}", image.id, map.epoch);
    save_pgm(normalized(map.values), dir / (stem + "_saliency.pgm"));
    save_ppm(render_heatmap(map.values, image.pixels), dir / (stem + "_heatmap.ppm"));
  }
}

}  // namespace

std::vector<SampleImage> run_dataset(const RunConfig& config) {
  if (!config.manifest.empty()) return load_dataset(config.manifest);
  SynthParams params = config.synth;
  params.seed = stream_seed(config.seed, "synth");
  return generate_dataset(params);
}

SynthOutcome cmd_synth(const RunConfig& config, std::ostream& console) {
  LogScope log(config, "synth", console);
  SynthParams params = config.synth;
  params.seed = stream_seed(config.seed, "synth");
  params.validate();
  const auto samples = generate_dataset(params);
  SynthOutcome outcome;
  outcome.manifest = save_dataset(samples, config.out / "dataset");
  for (const auto& s : samples) ++(s.label == Label::loose ? outcome.loose : outcome.well_fixed);
  fmt::print(console, "loose {}\nwell_fixed {}\nmanifest {}\n", outcome.loose, outcome.well_fixed,
             outcome.manifest.string());
  return outcome;
}

PretrainOutcome cmd_pretrain(const RunConfig& config, std::ostream& console) {
  LogScope log(config, "pretrain", console);
  PretextConfig pretext = config.pretext;
  pretext.data.seed = stream_seed(config.seed, "pretext");
  auto result = pretext_pretrain(config.model, pretext);
  PretrainOutcome outcome;
  outcome.checkpoint = config.backbone_path();
  outcome.heldout_accuracy = result.heldout_accuracy;
  outcome.weak_backbone = result.weak_backbone;
  if (outcome.checkpoint.has_parent_path()) fs::create_directories(outcome.checkpoint.parent_path());
  save_checkpoint(result.model, outcome.checkpoint, CheckpointScope::backbone);
  write_history_csv(result.history, config.out / "log" / "history_pretext.csv");
  fmt::print(console, "pretext held-out accuracy {:.4f}\nbackbone {}\n", result.heldout_accuracy,
             outcome.checkpoint.string());
  return outcome;
}

CrossvalOutcome cmd_crossval(const RunConfig& config, std::ostream& console) {
  LogScope log(config, "crossval", console);
  const auto regimes = regimes_of(config);
  CrossvalOutcome outcome;
  outcome.dataset = run_dataset(config);

  CrossValConfig cv;
  cv.k = config.k;
  cv.seed = config.seed;
  cv.stratified = config.stratified;
  cv.model = config.model;
  cv.train = config.train;
  cv.init_stddev = config.init_stddev;
  cv.jobs = config.jobs;
  cv.keep_models = true;
  cv.train.snapshot_epochs.clear();
  for (auto e : config.probe_epochs) {
    if (e >= 1 && e <= config.train.epochs) cv.train.snapshot_epochs.push_back(e);
  }
  std::optional<ReaderPoint> reader;
  if (config.reader) reader = ReaderPoint{config.reader_name, *config.reader};

  for (const auto regime : regimes) {
    cv.train.regime = regime;
    cv.backbone_checkpoint = regime == Regime::pretrained ? config.backbone_path() : fs::path();
    auto report = cross_validate(outcome.dataset, cv);

    const fs::path dir = config.out / std::string(regime_name(regime));
    fs::create_directories(dir / "models");
    write_text(fold_report_csv(report), dir / "fold_report.csv");
    write_text(predictions_csv(report, outcome.dataset), dir / "predictions.csv");
    write_text(roc_svg(report, reader), dir / "roc.svg");
    ConfusionCounts pooled;
    for (const auto& f : report.folds) {
      pooled += f.counts;
      save_checkpoint(*f.model, dir / "models" / fmt::format("fold{}.ckpt", f.fold + 1));
      write_history_csv(f.history, config.out / "log" /
                                       fmt::format("history_{}_fold{}.csv", regime_name(regime), f.fold + 1));
    }
    write_probe(report, outcome.dataset, dir / "probe");
    fmt::print(console, "{}: mean AUC {:.4f} over {} folds, sensitivity {}, specificity {}, accuracy {}\n",
               regime_name(regime), report.mean_auc, report.folds.size(), metric(sensitivity(pooled)),
               metric(specificity(pooled)), metric(accuracy(pooled)));
    outcome.reports.emplace(regime, std::move(report));
  }
  if (outcome.reports.size() == 2) {
    const double pre = outcome.reports.at(Regime::pretrained).mean_auc;
    const double re = outcome.reports.at(Regime::retrained).mean_auc;
    fmt::print(console, "comparison: pretrained {:.4f} vs retrained {:.4f} mean AUC ({})\n", pre, re,
               pre > re ? "pretrained higher" : "pretrained not higher");
  }
  return outcome;
}

SaliencyOutcome cmd_saliency(const RunConfig& config, std::ostream& console) {
  LogScope log(config, "saliency", console);
  if (config.saliency_checkpoint.empty()) throw ConfigError("saliency.checkpoint is not set");
  if (config.saliency_image.empty()) throw ConfigError("saliency.image is not set");
  const Model model = load_checkpoint(config.saliency_checkpoint);
  SampleImage image;
  image.pixels = load_pgm(config.saliency_image);
  image.id = config.saliency_image.stem().string();
  SaliencyOutcome outcome;
  outcome.map = saliency(model, image);
  const fs::path dir = config.out / "saliency";
  fs::create_directories(dir);
  save_pgm(normalized(outcome.map.values), dir / (image.id + "_saliency.pgm"));
  outcome.heatmap = dir / (image.id + "_heatmap.ppm");
  save_ppm(render_heatmap(outcome.map.values, image.pixels), outcome.heatmap);
  const auto peak = std::max_element(outcome.map.values.pixels.begin(), outcome.map.values.pixels.end());
  fmt::print(console, "saliency peak {:.6g} at pixel {}\nheatmap {}\n", *peak,
             peak - outcome.map.values.pixels.begin(), outcome.heatmap.string());
  return outcome;
}

FiltersOutcome cmd_filters(const RunConfig& config, std::ostream& console) {
  LogScope log(config, "filters", console);
  auto load = [&]() -> Model {
    if (config.filters_checkpoint.empty()) {
      spdlog::warn("no filters.checkpoint given; visualizing an untrained fan-in initialized network");
      return build(config.model, GaussianInit{stream_seed(config.seed, "filters.init"), config.init_stddev, true});
    }
    const auto contents = read_checkpoint(config.filters_checkpoint);
    if (contents.scope == CheckpointScope::full) return load_checkpoint(config.filters_checkpoint);
    return build(contents.config, CheckpointInit{config.filters_checkpoint, 0, config.init_stddev});
  };
  const Model model = load();
  AscentConfig ascent = config.ascent;
  ascent.seed = stream_seed(config.seed, "filters");

  FiltersOutcome outcome;
  outcome.panel = maximize_layer(model, config.filters_layer, ascent);
  std::tie(outcome.rows, outcome.cols) = panel_grid(outcome.panel.filters.size());
  const fs::path dir = config.out / "filters";
  fs::create_directories(dir);
  outcome.image = dir / (config.filters_layer + "_panel.ppm");
  save_ppm(render_panel(outcome.panel, outcome.rows, outcome.cols), outcome.image);
  std::string csv = "filter,start_activation,final_activation,monotone\n";
  for (const auto& f : outcome.panel.filters) {
    const bool monotone = std::is_sorted(f.trace.begin(), f.trace.end());
    csv += fmt::format("{},{:.9g},{:.9g},{}\n", f.filter, f.trace.front(), f.trace.back(), monotone);
  }
  write_text(csv, dir / (config.filters_layer + "_activations.csv"));
  fmt::print(console, "layer {} ({}): {} tiles in a {}x{} grid\npanel {}\n", config.filters_layer,
             outcome.panel.layer, outcome.panel.filters.size(), outcome.rows, outcome.cols,
             outcome.image.string());
  return outcome;
}

int exit_code(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error)) return 2;
  if (dynamic_cast<const MissingInputError*>(&error)) return 3;
  return 4;
}

std::string error_line(const std::exception& error) {
  std::string kind = "runtime";
  if (dynamic_cast<const ConfigError*>(&error)) kind = "config";
  else if (dynamic_cast<const MissingInputError*>(&error)) kind = "missing_input";
  else if (dynamic_cast<const FoldError*>(&error)) kind = "fold";
  else if (dynamic_cast<const LeakageError*>(&error)) kind = "leakage";
  else if (dynamic_cast<const FormatError*>(&error)) kind = "format";
  else if (dynamic_cast<const NumericError*>(&error)) kind = "numeric";
  std::string message = error.what();
  std::replace(message.begin(), message.end(), '\n', ' ');
  std::string line = fmt::format("error kind={} exit={}", kind, exit_code(error));
  if (const auto* fold = dynamic_cast<const FoldError*>(&error)) line += fmt::format(" fold={}", fold->fold() + 1);
  return line + " message=" + message;
}

int run_command(const std::string& command, const RunConfig& config, std::ostream& console,
                std::ostream& err) {
  try {
    if (command == "synth") cmd_synth(config, console);
    else if (command == "pretrain") cmd_pretrain(config, console);
    else if (command == "crossval") cmd_crossval(config, console);
    else if (command == "saliency") cmd_saliency(config, console);
    else if (command == "filters") cmd_filters(config, console);
    else throw ConfigError("unknown command '" + command + "'");
  } catch (const std::exception& e) {
    err << error_line(e) << '\n';
    return exit_code(e);
  }
  return 0;
}

}  // namespace lucenet
