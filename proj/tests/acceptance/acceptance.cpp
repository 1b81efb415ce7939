// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1
// when any criterion fails. Usage: lucenet_acceptance [work_dir] [--only N ...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "lucenet/checkpoint.hpp"
#include "lucenet/commands.hpp"
#include "lucenet/grad_check.hpp"
#include "lucenet/image.hpp"
#include "lucenet/ops.hpp"

namespace fs = std::filesystem;
using namespace lucenet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(uniform(rng, lo, hi));
  return Tensor(std::move(shape), std::move(v));
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(hi - lo + 1)) % (hi - lo + 1);
}

// 1 -------------------------------------------------------------------------

Outcome metric_arithmetic() {
  auto r2 = [](const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : std::string("NA"); };
  const ConfusionCounts a{16, 1, 22, 1};  // tp, fp, tn, fn
  const ConfusionCounts b{9, 1, 22, 8};
  const std::string got = fmt::format("{} {} {} / {} {}", r2(sensitivity(a)), r2(specificity(a)), r2(accuracy(a)),
                                      r2(sensitivity(b)), r2(specificity(b)));
  const std::string want = "0.94 0.96 0.95 / 0.53 0.96";
  return {got == want, "got " + got + ", expected " + want};
}

// 2 -------------------------------------------------------------------------

Outcome gradient_checks() {
  constexpr double kTol = 1e-3;
  double worst = 0;
  std::string worst_where;
  std::size_t checked = 0, graphs = 0;
  auto record = [&](const std::string& name, std::size_t c, const GradCheckResult& r) {
    ++graphs;
    checked += r.checked;
    if (r.checked == 0 || r.max_relative_error > worst || !std::isfinite(r.max_relative_error)) {
      worst = r.checked == 0 ? INFINITY : std::max(worst, r.max_relative_error);
      worst_where = fmt::format("{} case {}: {}", name, c, r.checked == 0 ? "nothing checked" : r.worst);
    }
  };

  // Analytic gradients in double; the float32 result is reported alongside.
  double worst_float = 0;
  auto gc = [&](auto&& graph, const std::vector<Tensor>& params, GradCheckOptions o = {}) {
    o.analytic_in_double = false;
    worst_float = std::max(worst_float, grad_check(graph, params, o).max_relative_error);
    o.analytic_in_double = true;
    return grad_check(graph, params, o);
  };

  for (std::size_t c = 0; c < 100; ++c) {
    Rng rng(stream_seed(2, "grad.case", c));
    const std::size_t n = pick(rng, 1, 2), ch = pick(rng, 1, 3), side = pick(rng, 4, 6);
    const Shape img{n, ch, side, side};
    const auto x = random_tensor(img, rng);
    const auto proj_seed = stream_seed(2, "grad.proj", c);
    auto weighted = [&](auto& tape, const auto& y) {
      using T = typename std::decay_t<decltype(y)>::value_type;
      Rng fixed(proj_seed);
      std::vector<T> w(y.numel());
      for (auto& v : w) v = static_cast<T>(static_cast<float>(uniform(fixed, -1, 1)));
      return ops::sum(tape, ops::mul(tape, y, BasicTensor<T>(y.shape(), std::move(w))));
    };

    const std::size_t filters = pick(rng, 1, 3), kernel = pick(rng, 1, 3), stride = pick(rng, 1, 2),
                      pad = pick(rng, 0, 1);
    record("conv2d", c,
           gc([&](auto& t, const auto& p) { return weighted(t, ops::conv2d(t, p[0], p[1], p[2], stride, pad)); },
                      {x, random_tensor({filters, ch, kernel, kernel}, rng), random_tensor({filters}, rng)}));
    const std::size_t d = pick(rng, 1, 6), m = pick(rng, 1, 4);
    record("dense", c,
           gc([&](auto& t, const auto& p) { return weighted(t, ops::dense(t, p[0], p[1], p[2])); },
                      {random_tensor({n, d}, rng), random_tensor({d, m}, rng), random_tensor({m}, rng)}));
    record("relu", c, gc([&](auto& t, const auto& p) { return weighted(t, ops::relu(t, p[0])); }, {x}));
    record("sigmoid", c,
           gc([&](auto& t, const auto& p) { return weighted(t, ops::sigmoid(t, p[0])); }, {x}));
    const std::size_t window = pick(rng, 1, 3), pool_stride = pick(rng, 1, window);
    record("avg_pool2d", c, gc([&](auto& t, const auto& p) {
             return weighted(t, ops::avg_pool2d(t, p[0], window, pool_stride));
           },
                                       {x}));
    record("global_avg_pool", c,
           gc([&](auto& t, const auto& p) { return weighted(t, ops::global_avg_pool(t, p[0])); }, {x}));
    record("concat_channels", c,
           gc([&](auto& t, const auto& p) { return weighted(t, ops::concat_channels(t, {p[0], p[1]})); },
                      {x, random_tensor({n, pick(rng, 1, 2), side, side}, rng)}));
    const std::size_t begin = pick(rng, 0, ch - 1);
    record("slice_channels", c, gc([&](auto& t, const auto& p) {
             return weighted(t, ops::slice_channels(t, p[0], begin, ch));
           },
                                           {x}));
    const auto drop_seed = stream_seed(2, "grad.dropout", c);
    record("dropout", c, gc([&](auto& t, const auto& p) {
             Rng r(drop_seed);
             return weighted(t, ops::dropout(t, p[0], 0.3, true, r));
           },
                                    {x}));
    std::vector<float> labels(n);
    for (auto& l : labels) l = uniform01(rng) < 0.5 ? 0.0f : 1.0f;
    record("bce_loss", c, gc([&](auto& t, const auto& p) {
             using T = typename std::decay_t<decltype(p[0])>::value_type;
             std::vector<T> y(labels.begin(), labels.end());
             return ops::bce_loss(t, ops::sigmoid(t, p[0]), BasicTensor<T>(Shape{n, 1}, std::move(y)));
           },
                                     {random_tensor({n, 1}, rng, -4, 4)}));
    record("mean", c, gc([&](auto& t, const auto& p) { return ops::mean(t, ops::mul(t, p[0], p[0])); }, {x}));
    record("add", c, gc([&](auto& t, const auto& p) { return weighted(t, ops::add(t, p[0], p[1])); },
                                {x, random_tensor(img, rng)}));
    const float factor = static_cast<float>(uniform(rng, -2, 2));
    record("scale", c, gc([&](auto& t, const auto& p) {
             using T = typename std::decay_t<decltype(p[0])>::value_type;
             return weighted(t, ops::scale(t, p[0], static_cast<T>(factor)));
           },
                                  {x}));
    record("reshape", c, gc([&](auto& t, const auto& p) {
             return weighted(t, ops::reshape(t, p[0], Shape{n, ch * side * side}));
           },
                                    {x}));

    // Full mini-model: training-mode forward (dropout on) into the BCE loss.
    DenseNetConfig cfg;
    cfg.input_size = 16;
    cfg.stem_filters = pick(rng, 2, 3);
    cfg.growth_rate = 2;
    cfg.block_layout = {1, 1};
    const Model model = build(cfg, GaussianInit{stream_seed(2, "grad.model", c), 0.05, true});
    const auto images = random_tensor({2, 1, 16, 16}, rng, 0, 1);
    std::vector<std::string> names;
    std::vector<Tensor> values;
    for (const auto& p : model.parameters()) {
      names.push_back(p.name);
      values.push_back(p.value.detached());
    }
    const auto model_drop = stream_seed(2, "grad.model.dropout", c);
    GradCheckOptions o;
    o.max_coordinates_per_tensor = 4;
    o.seed = c;
    record("densenet", c, gc([&](auto& tape, const auto& params) {
             using T = typename std::decay_t<decltype(params[0])>::value_type;
             ParamLookup<T> lookup = [&](const std::string& name) {
               return params[static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin())];
             };
             Rng drop(model_drop);
             auto logits = densenet_forward<T>(tape, cfg, lookup, images.template cast<T>(), true, &drop);
             return ops::bce_loss(tape, ops::sigmoid(tape, logits), BasicTensor<T>(Shape{2, 1}, std::vector<T>{1, 0}));
           },
                                     values, o));
  }

  // Negative control: a conv2d backward scaled by 0.5 must be caught.
  Rng rng(77);
  const auto x = random_tensor({1, 2, 5, 5}, rng);
  GradCheckOptions in_double;
  in_double.analytic_in_double = true;
  const auto faulty = grad_check(
      [&](auto& tape, const auto& p) {
        tape.inject_backward_fault("conv2d", 0.5);  // only the backward pass is affected
        return ops::sum(tape, ops::sigmoid(tape, ops::conv2d(tape, p[0], p[1], p[2], 1, 1)));
      },
      {x, random_tensor({2, 2, 3, 3}, rng), random_tensor({2}, rng)}, in_double);
  const bool control = faulty.max_relative_error > kTol;
  return {worst <= kTol && control,
          fmt::format("{} graphs over 100 cases, {} coordinates, max rel err {:.3g} (tol {:g}; float32 analytic "
                      "{:.3g}); fault-injected conv2d rel err {:.3g} {}{}",
                      graphs, checked, worst, kTol, worst_float, faulty.max_relative_error,
                      control ? "caught" : "NOT caught",
                      worst <= kTol ? "" : "; worst " + worst_where)};
}

// 3 -------------------------------------------------------------------------

Outcome auc_oracle() {
  constexpr double kTol = 1e-12;
  double worst = 0;
  for (std::size_t t = 0; t < 500; ++t) {
    Rng rng(stream_seed(3, "auc", t));
    const std::size_t n = pick(rng, 2, 200);
    // Every third instance draws scores from a handful of values.
    const std::size_t levels = t % 3 == 0 ? pick(rng, 1, 4) : 0;
    std::vector<double> scores(n);
    std::vector<Label> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = levels ? static_cast<double>(pick(rng, 0, levels - 1)) : uniform(rng, -5, 5);
      labels[i] = uniform01(rng) < 0.5 ? Label::loose : Label::well_fixed;
    }
    labels[0] = Label::loose;
    labels[1] = Label::well_fixed;
    double wins = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] != Label::loose) continue;
      ++pos;
      for (std::size_t j = 0; j < n; ++j) {
        if (labels[j] != Label::well_fixed) continue;
        wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
      }
    }
    for (auto l : labels) neg += l == Label::well_fixed;
    worst = std::max(worst, std::abs(roc_curve(scores, labels).auc - wins / (pos * neg)));
  }
  return {worst <= kTol, fmt::format("500 instances, max |trapezoid - pairwise| {:.3g} (tol {:g})", worst, kTol)};
}

// 4 -------------------------------------------------------------------------

Outcome fold_laws(const std::vector<const FoldReport*>& benchmark_reports, bool benchmark_ok) {
  std::size_t violations = 0;
  std::string first;
  auto fail = [&](const std::string& what) {
    if (violations++ == 0) first = what;
  };
  for (std::size_t t = 0; t < 1000; ++t) {
    Rng rng(stream_seed(4, "folds", t));
    const bool stratified = uniform01(rng) < 0.5;
    const std::size_t k = pick(rng, 2, 10);
    const std::size_t n = pick(rng, stratified ? 2 * k : k, 250);
    std::vector<Label> labels(n);
    for (auto& l : labels) l = uniform01(rng) < 0.4 ? Label::loose : Label::well_fixed;
    if (stratified) {
      // Ensure k samples of each class.
      for (std::size_t i = 0; i < k; ++i) labels[i] = Label::loose, labels[k + i] = Label::well_fixed;
      shuffle_in_place(labels, rng);
    }
    const std::uint64_t seed = static_cast<std::uint64_t>(uniform01(rng) * 1e12);
    const auto split = make_folds(labels, k, seed, stratified);
    std::vector<int> seen(n, 0);
    std::size_t lo = n, hi = 0;
    std::vector<std::size_t> loose(k, 0), fixed(k, 0);
    for (std::size_t f = 0; f < k; ++f) {
      lo = std::min(lo, split.validation[f].size());
      hi = std::max(hi, split.validation[f].size());
      std::set<std::size_t> val(split.validation[f].begin(), split.validation[f].end());
      for (auto i : split.validation[f]) {
        ++seen[i];
        ++(labels[i] == Label::loose ? loose[f] : fixed[f]);
      }
      if (split.train[f].size() + split.validation[f].size() != n) fail(fmt::format("draw {}: fold {} train size", t, f));
      for (auto i : split.train[f]) {
        if (val.contains(i)) fail(fmt::format("draw {}: fold {} train/validation overlap", t, f));
      }
    }
    if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; })) {
      fail(fmt::format("draw {}: folds not disjoint and exhaustive", t));
    }
    if (hi - lo > 1) fail(fmt::format("draw {}: fold sizes {}..{}", t, lo, hi));
    if (stratified) {
      const auto [l0, l1] = std::minmax_element(loose.begin(), loose.end());
      const auto [f0, f1] = std::minmax_element(fixed.begin(), fixed.end());
      if (*l1 - *l0 > 1 || *f1 - *f0 > 1) fail(fmt::format("draw {}: class counts not within 1", t));
    }
  }
  std::size_t checks = 0, expected = 0;
  for (const auto* r : benchmark_reports) {
    checks += r->leakage_checks;
    expected += r->folds.size();
  }
  const bool leakage_ok = benchmark_ok && checks == expected && expected > 0;
  return {violations == 0 && leakage_ok,
          fmt::format("1000 draws, {} violations{}; leakage assertion ran on {}/{} benchmark folds, {}", violations,
                      violations ? " (first: " + first + ")" : "", checks, expected,
                      leakage_ok ? "never fired" : "benchmark incomplete or fired")};
}

// 5 -------------------------------------------------------------------------

std::map<std::string, std::string> artifacts(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).string();
    if (rel.rfind("log/", 0) == 0 || rel == "config.resolved") continue;  // timings, output path
    files[rel] = slurp(e.path());
  }
  return files;
}

Outcome determinism(const fs::path& work, const fs::path& backbone) {
  std::ostringstream sink;
  std::map<std::string, std::string> runs[2];
  for (int i = 0; i < 2; ++i) {
    RunConfig c;
    c.seed = 11;
    c.out = work / fmt::format("determinism_{}", i);
    c.synth.loose_count = 20;
    c.synth.well_fixed_count = 20;
    c.train.epochs = 2;
    c.probe_epochs = {1, 2};
    c.jobs = 2;
    c.backbone = backbone;
    fs::remove_all(c.out);
    cmd_crossval(c, sink);
    runs[i] = artifacts(c.out);
  }
  std::size_t ckpt = 0, csv = 0, img = 0, differ = 0;
  std::string first;
  for (const auto& [name, bytes] : runs[0]) {
    const auto ext = fs::path(name).extension();
    ckpt += ext == ".ckpt", csv += ext == ".csv", img += ext == ".ppm" || ext == ".pgm" || ext == ".svg";
    if (!runs[1].contains(name) || runs[1].at(name) != bytes) {
      if (differ++ == 0) first = name;
    }
  }
  const bool ok = differ == 0 && runs[0].size() == runs[1].size() && ckpt == 10 && csv == 4 && img > 0;
  return {ok, fmt::format("two crossval runs (seed 11, 40 images, 2 epochs, both regimes): {} files compared "
                          "({} checkpoints, {} csv, {} images/svg), {} differ{}",
                          runs[0].size(), ckpt, csv, img, differ, differ ? " (first: " + first + ")" : "")};
}

// 6, 7 ----------------------------------------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  fs::path out;
  CrossvalOutcome outcome;
  double pretext_accuracy = 0;
};

Outcome benchmark(const std::vector<SeedRun>& runs, double seconds) {
  double pre = 0, re = 0;
  std::string per_seed;
  for (const auto& r : runs) {
    const double a = r.outcome.reports.at(Regime::pretrained).mean_auc;
    const double b = r.outcome.reports.at(Regime::retrained).mean_auc;
    pre += a, re += b;
    per_seed += fmt::format(" seed {}: {:.4f}/{:.4f} (pretext acc {:.3f});", r.seed, a, b, r.pretext_accuracy);
  }
  pre /= static_cast<double>(runs.size());
  re /= static_cast<double>(runs.size());
  const bool ok = pre >= 0.90 && pre > re && seconds <= 1200;
  return {ok, fmt::format("pretrained mean AUC {:.4f} (need >= 0.90), retrained {:.4f} (need pretrained > retrained), "
                          "{:.0f} s (limit 1200);{}",
                          pre, re, seconds, per_seed)};
}

Outcome localization(const std::vector<SeedRun>& runs) {
  std::size_t images = 0, hits = 0;
  double o1 = 0, o10 = 0;
  for (const auto& r : runs) {
    const auto& dataset = r.outcome.dataset;
    for (const auto& fold : r.outcome.reports.at(Regime::pretrained).folds) {
      for (auto i : fold.validation) {
        const auto& image = dataset[i];
        if (image.label != Label::loose) continue;
        const auto maps = saliency_probe(fold.history.snapshots, image, {1, 10});
        const auto& mask = *image.lucency_mask;
        const double area = static_cast<double>(mask.count()) / static_cast<double>(mask.bits.size());
        const double first = top_fraction_in_mask(maps[0].values, mask, 0.01);
        const double last = top_fraction_in_mask(maps[1].values, mask, 0.01);
        ++images;
        hits += last >= 3 * area;
        o1 += first;
        o10 += last;
      }
    }
  }
  const double rate = static_cast<double>(hits) / static_cast<double>(images);
  o1 /= static_cast<double>(images);
  o10 /= static_cast<double>(images);
  const bool located = rate >= 0.70, sharpened = o10 > o1;
  return {located && sharpened,
          fmt::format("top-1% in mask at >= 3x area fraction on {}/{} loose images ({:.1f}%, need >= 70%): {}; "
                      "mean overlap epoch 10 {:.4f} vs epoch 1 {:.4f} (need epoch 10 > epoch 1): {}",
                      hits, images, 100 * rate, located ? "ok" : "FAIL", o10, o1, sharpened ? "ok" : "FAIL")};
}

// 8 -------------------------------------------------------------------------

Outcome activation_maximization(const fs::path& work, const fs::path& trained) {
  std::ostringstream sink;
  std::size_t filters = 0, bad = 0;
  std::string first_bad;
  for (const std::string layer : {"first", "last"}) {
    RunConfig c;
    c.out = work / "filters_trained";
    c.filters_checkpoint = trained;
    c.filters_layer = layer;
    const auto panel = cmd_filters(c, sink).panel;
    for (const auto& f : panel.filters) {
      ++filters;
      const bool monotone = std::is_sorted(f.trace.begin(), f.trace.end());
      if (!monotone || !(f.trace.back() > f.trace.front())) {
        if (bad++ == 0) first_bad = fmt::format("{} filter {}", layer, f.filter);
      }
    }
  }
  std::size_t tiles[2] = {0, 0};
  bool dims = true;
  for (int i = 0; i < 2; ++i) {
    RunConfig c;
    c.out = work / "filters_wide";
    c.model.stem_filters = 64;
    c.model.growth_rate = 32;
    c.ascent.steps = 2;
    c.filters_layer = i == 0 ? "first" : "last";
    const auto o = cmd_filters(c, sink);
    tiles[i] = o.panel.filters.size();
    const auto panel = load_ppm(o.image);
    const auto tile = o.panel.filters.front().image.width;
    dims = dims && panel.width == o.cols * (tile + 1) + 1 && o.rows * o.cols >= tiles[i];
  }
  const bool ok = filters > 0 && bad == 0 && tiles[0] == 64 && tiles[1] == 32 && dims;
  return {ok, fmt::format("trained model: {}/{} filters of the first and last conv layers monotone with final > start{}; "
                          "wide-config panels {} and {} tiles (expected 64 and 32)",
                          filters - bad, filters, bad ? " (first failure: " + first_bad + ")" : "", tiles[0],
                          tiles[1])};
}

// 9 -------------------------------------------------------------------------

template <typename Fn>
std::string error_kind(Fn&& fn) {
  try {
    fn();
  } catch (const MissingInputError&) {
    return "missing_input";
  } catch (const FormatError& e) {
    switch (e.kind()) {
      case FormatError::Kind::io: return "io";
      case FormatError::Kind::bad_magic: return "bad_magic";
      case FormatError::Kind::version_mismatch: return "version_mismatch";
      case FormatError::Kind::truncated_payload: return "truncated_payload";
      case FormatError::Kind::shape_mismatch: return "shape_mismatch";
      case FormatError::Kind::config_mismatch: return "config_mismatch";
      case FormatError::Kind::malformed: return "malformed";
    }
  } catch (const std::exception& e) {
    return std::string("other: ") + e.what();
  }
  return "accepted";
}

void write_bytes(const fs::path& path, const std::string& bytes) { std::ofstream(path, std::ios::binary) << bytes; }

Outcome round_trips(const fs::path& work) {
  const fs::path dir = work / "formats";
  fs::create_directories(dir);
  Rng rng(9);
  double worst = 0;
  bool idempotent = true;
  for (int t = 0; t < 50; ++t) {
    GrayImage g(pick(rng, 1, 40), pick(rng, 1, 40));
    for (auto& v : g.pixels) v = static_cast<float>(uniform01(rng));
    save_pgm(g, dir / "g.pgm");
    const auto g1 = load_pgm(dir / "g.pgm");
    for (std::size_t i = 0; i < g.pixels.size(); ++i) worst = std::max<double>(worst, std::abs(g.pixels[i] - g1.pixels[i]));
    save_pgm(g1, dir / "g1.pgm");
    idempotent = idempotent && slurp(dir / "g.pgm") == slurp(dir / "g1.pgm") && load_pgm(dir / "g1.pgm") == g1;
    RgbImage c(pick(rng, 1, 40), pick(rng, 1, 40));
    for (auto& v : c.pixels) v = static_cast<float>(uniform01(rng));
    save_ppm(c, dir / "c.ppm");
    const auto c1 = load_ppm(dir / "c.ppm");
    for (std::size_t i = 0; i < c.pixels.size(); ++i) worst = std::max<double>(worst, std::abs(c.pixels[i] - c1.pixels[i]));
    save_ppm(c1, dir / "c1.ppm");
    idempotent = idempotent && slurp(dir / "c.ppm") == slurp(dir / "c1.ppm");
  }
  const double bound = 1.0 / 255;

  const Model model = build(DenseNetConfig{}, GaussianInit{5, 0.05, true});
  save_checkpoint(model, dir / "a.ckpt");
  save_checkpoint(load_checkpoint(dir / "a.ckpt"), dir / "b.ckpt");
  const bool ckpt_same = slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt");

  const std::string good = slurp(dir / "a.ckpt");
  const std::string pgm = slurp(dir / "g.pgm");
  std::map<std::string, std::pair<std::string, std::string>> cases;  // name -> expected, got
  auto probe = [&](const std::string& name, const std::string& expected, const std::string& bytes, bool image) {
    const auto path = dir / (name + (image ? ".pgm" : ".ckpt"));
    write_bytes(path, bytes);
    cases[name] = {expected, image ? error_kind([&] { load_pgm(path); }) : error_kind([&] { load_checkpoint(path); })};
  };
  probe("ckpt_truncated", "truncated_payload", good.substr(0, good.size() - 1), false);
  auto magic = good;
  magic[0] = 'X';
  probe("ckpt_magic", "bad_magic", magic, false);
  auto version = good;
  version[7] = '9';
  probe("ckpt_version", "version_mismatch", version, false);
  probe("ckpt_trailing", "malformed", good + '\0', false);
  probe("pgm_truncated", "truncated_payload", pgm.substr(0, pgm.size() - 1), true);
  probe("pgm_magic", "bad_magic", "P2" + pgm.substr(2), true);
  probe("pgm_maxval", "malformed", "P5\n2 1\n65535\n\x01\x02\x03\x04", true);
  cases["ckpt_missing"] = {"missing_input", error_kind([&] { load_checkpoint(dir / "nope.ckpt"); })};
  cases["pgm_missing"] = {"missing_input", error_kind([&] { load_pgm(dir / "nope.pgm"); })};
  std::size_t wrong = 0;
  std::string mismatches;
  for (const auto& [name, v] : cases) {
    if (v.first != v.second) {
      ++wrong;
      mismatches += fmt::format(" {}: {} not {};", name, v.second, v.first);
    }
  }
  const bool ok = worst <= bound + 1e-7 && idempotent && ckpt_same && wrong == 0;
  return {ok, fmt::format("PGM/PPM max round-trip error {:.6f} (bound 1/255 = {:.6f}), re-save {}; checkpoint "
                          "save-load-save {}; {}/{} corruption cases raise the expected error{}",
                          worst, bound, idempotent ? "byte-identical" : "DIFFERS", ckpt_same ? "byte-identical" : "DIFFERS",
                          cases.size() - wrong, cases.size(), mismatches)};
}

template <typename Fn>
Outcome guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("raised: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria run"};
  fs::path work = fs::temp_directory_path() / "lucenet_acceptance";
  std::vector<int> only;
  app.add_option("work_dir", work, "scratch directory for run outputs");
  app.add_option("--only", only, "run just these criteria (those needing the benchmark then fail)");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);
  spdlog::set_level(spdlog::level::warn);
  using Clock = std::chrono::steady_clock;
  const auto seconds_since = [](Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); };
  std::map<int, std::pair<Outcome, double>> results;
  auto run = [&](int id, auto&& fn) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) return;
    const auto t0 = Clock::now();
    results[id] = {guarded(fn), seconds_since(t0)};
    const auto& [o, s] = results[id];
    std::cerr << fmt::format("criterion {} finished in {:.1f} s: {}\n", id, s, o.pass ? "pass" : "fail");
  };

  run(1, metric_arithmetic);
  run(2, gradient_checks);
  run(3, auc_oracle);

  std::vector<SeedRun> seeds;
  bool benchmark_ok = false;
  run(6, [&] {
    const auto t0 = Clock::now();
    std::ostringstream console;
    for (std::uint64_t s : {1, 2, 3}) {
      SeedRun r;
      r.seed = s;
      r.out = work / fmt::format("benchmark_seed{}", s);
      fs::remove_all(r.out);
      RunConfig c;
      c.seed = s;
      c.out = r.out;
      r.pretext_accuracy = cmd_pretrain(c, console).heldout_accuracy;
      r.outcome = cmd_crossval(c, console);
      seeds.push_back(std::move(r));
    }
    benchmark_ok = true;
    return benchmark(seeds, seconds_since(t0));
  });

  std::vector<const FoldReport*> reports;
  for (const auto& s : seeds)
    for (const auto& [_, r] : s.outcome.reports) reports.push_back(&r);
  run(4, [&] { return fold_laws(reports, benchmark_ok); });
  run(5, [&] {
    if (seeds.empty()) return Outcome{false, "needs the benchmark backbone"};
    return determinism(work, seeds.front().out / "backbone.ckpt");
  });
  run(7, [&] {
    if (seeds.size() != 3) return Outcome{false, "benchmark did not complete"};
    return localization(seeds);
  });
  run(8, [&] {
    if (seeds.empty()) return Outcome{false, "needs a trained model from the benchmark"};
    return activation_maximization(work, seeds.front().out / "pretrained/models/fold1.ckpt");
  });
  run(9, [&] { return round_trips(work); });

  static const char* names[] = {"",
                                "metric arithmetic",
                                "gradient correctness",
                                "AUC oracle equivalence",
                                "fold-partition laws",
                                "determinism",
                                "synthetic end-to-end benchmark",
                                "saliency localization",
                                "activation maximization",
                                "format round-trips"};
  int failed = 0;
  for (const auto& [id, r] : results) {
    const auto& [o, s] = r;
    failed += !o.pass;
    std::cout << fmt::format("{} [{}] {} ({:.1f} s): {}\n", o.pass ? "PASS" : "FAIL", id, names[id], s, o.detail);
  }
  std::cout << fmt::format("{}/{} criteria passed\n", results.size() - failed, results.size());
  return failed == 0 ? 0 : 1;
}
