#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lucenet/rng.hpp"
#include "lucenet/tensor.hpp"

namespace lucenet {

struct GradCheckOptions {
  double eps = 1e-3;
  /// Check at most this many coordinates per parameter tensor (0 = all),
  /// chosen with `seed`.
  std::size_t max_coordinates_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Upper bound on checked coordinates; every one costs two forward passes.
  std::size_t max_total_coordinates = 10'000;
  /// Run the analytic (reverse-mode) pass in double too. Float analytic
  /// gradients carry ~1e-7 absolute rounding, which dominates the relative
  /// error of gradients near 1e-5.
  bool analytic_in_double = false;
};

struct GradCheckResult {
  double max_relative_error = 0;
  std::size_t checked = 0;
  /// Coordinates sitting exactly on a kink at every step size tried.
  std::size_t skipped = 0;
  std::string worst;  // "param[index]: analytic vs numeric"
};

/// Compares the reverse-mode gradient of a scalar graph (float unless
/// `analytic_in_double`) against central differences of the same graph
/// evaluated in double precision.
///
/// `graph` is a generic callable `(BasicTape<T>&, const std::vector<BasicTensor<T>>&)`
/// returning a scalar tensor; it is invoked once for the analytic gradient
/// and with T = double for every numeric probe. Any
/// randomness inside it must be re-seeded per call.
///
/// When a perturbation changes a piecewise op's branch pattern the step is
/// shrunk by 10x (down to eps*1e-4), so differences never straddle a kink.
template <typename Graph>
GradCheckResult grad_check(Graph&& graph, const std::vector<Tensor>& params,
                           const GradCheckOptions& options = {}) {
  std::vector<std::vector<double>> analytic_grads(params.size());
  auto analytic_pass = [&]<typename T>() {
    std::vector<BasicTensor<T>> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) {
      leaves.push_back(p.template cast<T>());
      leaves.back().set_requires_grad(true);
    }
    BasicTape<T> tape;
    BasicTensor<T> loss = graph(tape, leaves);
    tape.backward(loss);
    for (std::size_t t = 0; t < leaves.size(); ++t) {
      const auto g = leaves[t].grad();
      analytic_grads[t].assign(g.begin(), g.end());
    }
  };
  if (options.analytic_in_double) {
    analytic_pass.template operator()<double>();
  } else {
    analytic_pass.template operator()<float>();
  }

  std::vector<BasicTensor<double>> probe;
  probe.reserve(params.size());
  for (const auto& p : params) probe.push_back(p.template cast<double>());
  for (auto& p : probe) p.set_requires_grad(false);

  auto evaluate = [&](std::uint64_t& signature) {
    BasicTape<double> tape;
    tape.set_branch_tracking(true);
    const double value = graph(tape, probe).item();
    signature = tape.branch_signature();
    return value;
  };

  std::uint64_t base_signature = 0;
  evaluate(base_signature);

  Rng rng(stream_seed(options.seed, "grad_check"));
  GradCheckResult result;
  std::vector<std::size_t> coords;
  for (std::size_t t = 0; t < probe.size(); ++t) {
    const std::size_t n = probe[t].numel();
    coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (options.max_coordinates_per_tensor != 0 && n > options.max_coordinates_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coordinates_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    if (result.checked + coords.size() > options.max_total_coordinates) {
      throw ConfigError("grad_check: more than " + std::to_string(options.max_total_coordinates) +
                        " coordinates requested; sample them instead");
    }
    auto values = probe[t].mutable_data();
    const auto& analytic_grad = analytic_grads[t];
    for (std::size_t i : coords) {
      const double original = values[i];
      const double analytic = analytic_grad.empty() ? 0.0 : analytic_grad[i];
      double numeric = 0;
      bool resolved = false;
      for (double h = options.eps; h >= options.eps * 1e-4; h /= 10) {
        std::uint64_t sig_plus = 0, sig_minus = 0;
        values[i] = original + h;
        const double plus = evaluate(sig_plus);
        values[i] = original - h;
        const double minus = evaluate(sig_minus);
        values[i] = original;
        if (sig_plus == base_signature && sig_minus == base_signature) {
          numeric = (plus - minus) / (2 * h);
          resolved = true;
          break;
        }
      }
      if (!resolved) {
        ++result.skipped;
        continue;
      }
      ++result.checked;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      if (!std::isfinite(rel)) throw NumericError("grad_check: non-finite comparison");
      if (rel > result.max_relative_error || result.worst.empty()) {
        result.max_relative_error = std::max(result.max_relative_error, rel);
        result.worst = "param " + std::to_string(t) + "[" + std::to_string(i) + "]: analytic " +
                       std::to_string(analytic) + " vs numeric " + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace lucenet
