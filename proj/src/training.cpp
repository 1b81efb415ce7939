#include "lucenet/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "lucenet/ops.hpp"

namespace lucenet {

AdamState::AdamState(const std::vector<Shape>& shapes, AdamOptions options)
    : options_(options), shapes_(shapes) {
  if (!(options.lr >= 0) || !(options.beta1 >= 0 && options.beta1 < 1) ||
      !(options.beta2 >= 0 && options.beta2 < 1) || !(options.eps > 0)) {
    throw ConfigError("adam: need lr >= 0, beta1/beta2 in [0,1), eps > 0");
  }
  for (const auto& s : shapes_) {
    m_.emplace_back(shape_numel(s), 0.0f);
    v_.emplace_back(shape_numel(s), 0.0f);
  }
}

namespace {

std::vector<Shape> model_shapes(const Model& model) {
  std::vector<Shape> shapes;
  for (const auto& p : model.parameters()) shapes.push_back(p.value.shape());
  return shapes;
}

}  // namespace

AdamState::AdamState(const Model& model, AdamOptions options)
    : AdamState(model_shapes(model), options) {}

void adam_step(std::span<const std::span<float>> params,
               std::span<const std::span<const float>> grads, AdamState& state) {
  if (params.size() != state.m_.size() || grads.size() != state.m_.size()) {
    throw ShapeError("adam: expected " + std::to_string(state.m_.size()) + " parameter slots");
  }
  const auto& o = state.options_;
  const auto t = state.t_ + 1;
  const double corr1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double corr2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));

  // Compute everything first so a non-finite update leaves the state intact.
  std::vector<std::vector<float>> m(grads.size()), v(grads.size()), w(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].empty()) continue;
    if (grads[i].size() != params[i].size() || params[i].size() != state.m_[i].size()) {
      throw ShapeError("adam: slot " + std::to_string(i) + " has mismatched sizes");
    }
    const std::size_t n = grads[i].size();
    m[i].resize(n);
    v[i].resize(n);
    w[i].resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double g = grads[i][j];
      const double mj = o.beta1 * state.m_[i][j] + (1 - o.beta1) * g;
      const double vj = o.beta2 * state.v_[i][j] + (1 - o.beta2) * g * g;
      const double update = o.lr * (mj / corr1) / (std::sqrt(vj / corr2) + o.eps);
      const double wj = params[i][j] - update;
      if (!std::isfinite(wj) || !std::isfinite(mj) || !std::isfinite(vj)) {
        throw NumericError("adam: non-finite update in slot " + std::to_string(i) + " element " +
                           std::to_string(j));
      }
      m[i][j] = static_cast<float>(mj);
      v[i][j] = static_cast<float>(vj);
      w[i][j] = static_cast<float>(wj);
    }
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].empty()) continue;
    state.m_[i] = std::move(m[i]);
    state.v_[i] = std::move(v[i]);
    std::copy(w[i].begin(), w[i].end(), params[i].begin());
  }
  state.t_ = t;
}

void adam_step(Model& model, AdamState& state) {
  std::vector<std::span<float>> params;
  std::vector<std::span<const float>> grads;
  for (auto& p : model.parameters()) {
    params.push_back(p.value.mutable_data());
    if (model.is_frozen(p.name) || !p.value.has_grad()) {
      grads.emplace_back();
    } else {
      grads.push_back(p.value.grad());
    }
  }
  adam_step(params, grads, state);
}

std::string_view regime_name(Regime regime) {
  return regime == Regime::pretrained ? "pretrained" : "retrained";
}

Regime parse_regime(std::string_view token) {
  if (token == "pretrained") return Regime::pretrained;
  if (token == "retrained") return Regime::retrained;
  throw ConfigError("unknown regime '" + std::string(token) + "' (expected pretrained or retrained)");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
  if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("train.lr must be finite and >= 0");
  augment.validate();
}

Tensor make_batch(std::span<const SampleImage* const> samples) {
  if (samples.empty()) throw ShapeError("empty batch");
  const std::size_t h = samples[0]->pixels.height, w = samples[0]->pixels.width;
  std::vector<float> values;
  values.reserve(samples.size() * h * w);
  for (const auto* s : samples) {
    if (s->pixels.height != h || s->pixels.width != w) {
      throw ShapeError("batch images differ in size: " + s->id);
    }
    values.insert(values.end(), s->pixels.pixels.begin(), s->pixels.pixels.end());
  }
  return Tensor(Shape{samples.size(), 1, h, w}, std::move(values));
}

Tensor make_labels(std::span<const SampleImage* const> samples) {
  std::vector<float> values;
  for (const auto* s : samples) values.push_back(s->label == Label::loose ? 1.0f : 0.0f);
  return Tensor(Shape{samples.size(), 1}, std::move(values));
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = make_stream(seed, "shuffle", epoch);
  shuffle_in_place(order, shuffle_rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, n);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

TrainHistory fit(Model& model, const std::vector<SampleImage>& train_set, const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw ConfigError("fit: training set is empty");
  if (config.regime == Regime::pretrained &&
      !(model.backbone_frozen() && model.provenance().init == "checkpoint")) {
    throw ConfigError("fit: the pretrained regime needs a frozen backbone loaded from a pretext "
                      "checkpoint");
  }
  const auto loose = std::count_if(train_set.begin(), train_set.end(),
                                   [](const SampleImage& s) { return s.label == Label::loose; });
  if (loose == 0 || static_cast<std::size_t>(loose) == train_set.size()) {
    spdlog::warn("fit: training set has a single class ({} samples)", train_set.size());
  }

  AdamState adam(model, AdamOptions{.lr = config.lr});
  TrainHistory history;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng augment_rng = make_stream(config.seed, "augment", epoch);
    Rng dropout_rng = make_stream(config.seed, "dropout", epoch);

    double loss_sum = 0;
    for (const auto& members : epoch_batches(train_set.size(), config.batch_size, config.seed, epoch)) {
      std::vector<SampleImage> augmented;
      std::vector<const SampleImage*> batch;
      augmented.reserve(members.size());
      for (auto index : members) {
        const auto& s = train_set[index];
        if (config.augment_enabled) {
          augmented.push_back(augment(s, config.augment, augment_rng));
          batch.push_back(&augmented.back());
        } else {
          batch.push_back(&s);
        }
      }
      Tape tape;
      ForwardOptions options;
      options.training = true;
      options.dropout_rng = &dropout_rng;
      Tensor logits = model.forward(tape, make_batch(batch), options);
      Tensor loss = ops::bce_loss(tape, ops::sigmoid(tape, logits), make_labels(batch));
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
      if (loss.requires_grad()) {
        tape.backward(loss);
        adam_step(model, adam);
      }
      model.zero_grad();
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    history.epochs.push_back({epoch, loss_sum / static_cast<double>(train_set.size()), elapsed.count()});
    spdlog::debug("epoch {} mean loss {:.6f}", epoch, history.epochs.back().mean_loss);
    if (std::find(config.snapshot_epochs.begin(), config.snapshot_epochs.end(), epoch) !=
        config.snapshot_epochs.end()) {
      history.snapshots.push_back({epoch, model.clone()});
    }
  }
  if (config.epochs > 0) {
    model.provenance().regime = std::string(regime_name(config.regime));
    model.provenance().epochs_completed += config.epochs;
  }
  return history;
}

Evaluation evaluate_model(const Model& model, const std::vector<SampleImage>& samples,
                          std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("evaluate_model: batch_size must be positive");
  Evaluation out;
  double loss_sum = 0;
  ForwardOptions options;
  options.track_parameters = false;
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, samples.size());
    std::vector<const SampleImage*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&samples[i]);
    Tape tape;
    Tensor logits = model.forward(tape, make_batch(batch), options);
    Tensor prob = ops::sigmoid(tape, logits);
    loss_sum += static_cast<double>(ops::bce_loss(tape, prob, make_labels(batch)).item()) *
                static_cast<double>(batch.size());
    for (float z : logits.data()) out.logits.push_back(z);
    for (float p : prob.data()) out.probabilities.push_back(p);
  }
  out.mean_loss = samples.empty() ? 0.0 : loss_sum / static_cast<double>(samples.size());
  return out;
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string() + " for writing");
  f << "epoch,mean_loss,seconds\n";
  for (const auto& e : history.epochs) {
    f << e.epoch << "," << fmt::format("{:.9g}", e.mean_loss) << "," << fmt::format("{:.6f}", e.seconds)
      << "\n";
  }
}

void PretextConfig::validate() const {
  data.validate();
  if (!(holdout_fraction > 0 && holdout_fraction < 1)) {
    throw ConfigError("pretext.holdout must lie in (0,1)");
  }
  if (batch_size == 0) throw ConfigError("pretext.batch_size must be at least 1");
  if (!(lr > 0)) throw ConfigError("pretext.lr must be positive");
  if (!(init_stddev > 0)) throw ConfigError("pretext.init_std must be positive");
}

PretextResult pretext_pretrain(const DenseNetConfig& model_config, const PretextConfig& config) {
  config.validate();
  PretextParams data = config.data;
  data.image_size = model_config.input_size;
  auto images = generate_pretext_dataset(data);
  const auto holdout =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(config.holdout_fraction * images.size())));
  if (holdout >= images.size()) throw ConfigError("pretext: holdout leaves no training images");
  std::vector<SampleImage> heldout(std::make_move_iterator(images.end() - static_cast<long>(holdout)),
                                   std::make_move_iterator(images.end()));
  images.resize(images.size() - holdout);

  PretextResult result{0, false, {}, build(model_config, GaussianInit{data.seed, config.init_stddev, config.fan_in_init})};
  TrainConfig train;
  train.epochs = config.epochs;
  train.batch_size = config.batch_size;
  train.lr = config.lr;
  train.regime = Regime::retrained;
  train.seed = stream_seed(data.seed, "pretext.train");
  result.history = fit(result.model, images, train);
  result.model.provenance().regime = "pretext";

  const auto eval = evaluate_model(result.model, heldout);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    correct += (eval.probabilities[i] >= 0.5) == (heldout[i].label == Label::loose);
  }
  result.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(heldout.size());
  result.weak_backbone = result.heldout_accuracy < config.warn_accuracy;
  if (result.weak_backbone) {
    spdlog::warn("weak backbone: pretext held-out accuracy {:.3f} below {:.2f}",
                 result.heldout_accuracy, config.warn_accuracy);
  }
  return result;
}

}  // namespace lucenet
