#include "lucenet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace lucenet::ops {

namespace {

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_string(t.shape()));
  }
}

template <typename T>
bool any_tracked(std::initializer_list<const BasicTensor<T>*> inputs) {
  for (auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Output positions o in [0, out) whose source index o*s + k - p lies in [0, in).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t s,
                                                std::size_t k, std::size_t p) {
  const std::size_t lo = k >= p ? 0 : (p - k + s - 1) / s;
  if (in - 1 + p < k) return {0, 0};
  const std::size_t hi = std::min(out, (in - 1 + p - k) / s + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(BasicTape<T>& tape, const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  require_rank(bias, 1, "conv2d", "bias");
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t F = kernel.dim(0), KH = kernel.dim(2), KW = kernel.dim(3);
  if (kernel.dim(1) != C) {
    throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) + " expects " +
                     std::to_string(kernel.dim(1)) + " input channels, input " +
                     shape_string(input.shape()) + " has " + std::to_string(C));
  }
  if (bias.dim(0) != F) {
    throw ShapeError("conv2d: bias " + shape_string(bias.shape()) + " does not match " +
                     std::to_string(F) + " filters");
  }
  if (KH > H + 2 * padding || KW > W + 2 * padding) {
    throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) +
                     " larger than padded input " + shape_string(input.shape()));
  }
  const std::size_t HO = (H + 2 * padding - KH) / stride + 1;
  const std::size_t WO = (W + 2 * padding - KW) / stride + 1;
  if (HO == 0 || WO == 0) throw ShapeError("conv2d: zero-size output");

  const auto x = input.data();
  const auto k = kernel.data();
  const auto b = bias.data();
  std::vector<T> out(N * F * HO * WO);

  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t f = 0; f < F; ++f) {
      T* op = out.data() + (n * F + f) * HO * WO;
      std::fill(op, op + HO * WO, b[f]);
      for (std::size_t c = 0; c < C; ++c) {
        const T* ip = x.data() + (n * C + c) * H * W;
        const T* kp = k.data() + (f * C + c) * KH * KW;
        for (std::size_t ky = 0; ky < KH; ++ky) {
          const auto [ylo, yhi] = valid_range(HO, H, stride, ky, padding);
          for (std::size_t kx = 0; kx < KW; ++kx) {
            const auto [xlo, xhi] = valid_range(WO, W, stride, kx, padding);
            const T w = kp[ky * KW + kx];
            for (std::size_t oy = ylo; oy < yhi; ++oy) {
              const T* src = ip + (oy * stride + ky - padding) * W + (xlo * stride + kx - padding);
              T* dst = op + oy * WO;
              if (stride == 1) {
                for (std::size_t ox = xlo; ox < xhi; ++ox) dst[ox] += w * src[ox - xlo];
              } else {
                for (std::size_t ox = xlo; ox < xhi; ++ox) dst[ox] += w * src[(ox - xlo) * stride];
              }
            }
          }
        }
      }
    }
  }

  const bool tracked = any_tracked({&input, &kernel, &bias});
  return tape.record(
      "conv2d", {N, F, HO, WO}, std::move(out), tracked,
      [=, input = input, kernel = kernel, bias = bias](std::span<const T> g) mutable {
        const auto xs = input.data();
        const auto ks = kernel.data();
        if (bias.requires_grad()) {
          auto gb = bias.grad_accumulator();
          for (std::size_t f = 0; f < F; ++f) {
            double acc = 0;
            for (std::size_t n = 0; n < N; ++n) {
              const T* gp = g.data() + (n * F + f) * HO * WO;
              for (std::size_t i = 0; i < HO * WO; ++i) acc += gp[i];
            }
            gb[f] += static_cast<T>(acc);
          }
        }
        if (kernel.requires_grad()) {
          auto gk = kernel.grad_accumulator();
          for (std::size_t f = 0; f < F; ++f) {
            for (std::size_t c = 0; c < C; ++c) {
              for (std::size_t ky = 0; ky < KH; ++ky) {
                const auto [ylo, yhi] = valid_range(HO, H, stride, ky, padding);
                for (std::size_t kx = 0; kx < KW; ++kx) {
                  const auto [xlo, xhi] = valid_range(WO, W, stride, kx, padding);
                  double acc = 0;
                  for (std::size_t n = 0; n < N; ++n) {
                    const T* gp = g.data() + (n * F + f) * HO * WO;
                    const T* ip = xs.data() + (n * C + c) * H * W;
                    for (std::size_t oy = ylo; oy < yhi; ++oy) {
                      const T* src =
                          ip + (oy * stride + ky - padding) * W + (xlo * stride + kx - padding);
                      const T* gr = gp + oy * WO;
                      T row = 0;
                      for (std::size_t ox = xlo; ox < xhi; ++ox) {
                        row += gr[ox] * src[(ox - xlo) * stride];
                      }
                      acc += row;
                    }
                  }
                  gk[((f * C + c) * KH + ky) * KW + kx] += static_cast<T>(acc);
                }
              }
            }
          }
        }
        if (input.requires_grad()) {
          auto gi = input.grad_accumulator();
          for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t f = 0; f < F; ++f) {
              const T* gp = g.data() + (n * F + f) * HO * WO;
              for (std::size_t c = 0; c < C; ++c) {
                T* dp = gi.data() + (n * C + c) * H * W;
                const T* kp = ks.data() + (f * C + c) * KH * KW;
                for (std::size_t ky = 0; ky < KH; ++ky) {
                  const auto [ylo, yhi] = valid_range(HO, H, stride, ky, padding);
                  for (std::size_t kx = 0; kx < KW; ++kx) {
                    const auto [xlo, xhi] = valid_range(WO, W, stride, kx, padding);
                    const T w = kp[ky * KW + kx];
                    for (std::size_t oy = ylo; oy < yhi; ++oy) {
                      T* dst = dp + (oy * stride + ky - padding) * W + (xlo * stride + kx - padding);
                      const T* gr = gp + oy * WO;
                      if (stride == 1) {
                        for (std::size_t ox = xlo; ox < xhi; ++ox) dst[ox - xlo] += w * gr[ox];
                      } else {
                        for (std::size_t ox = xlo; ox < xhi; ++ox) {
                          dst[(ox - xlo) * stride] += w * gr[ox];
                        }
                      }
                    }
                  }
                }
              }
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> dense(BasicTape<T>& tape, const BasicTensor<T>& input, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias) {
  require_rank(input, 2, "dense", "input");
  require_rank(weights, 2, "dense", "weights");
  require_rank(bias, 1, "dense", "bias");
  const std::size_t N = input.dim(0), D = input.dim(1), M = weights.dim(1);
  if (weights.dim(0) != D) {
    throw ShapeError("dense: input " + shape_string(input.shape()) + " incompatible with weights " +
                     shape_string(weights.shape()));
  }
  if (bias.dim(0) != M) {
    throw ShapeError("dense: bias " + shape_string(bias.shape()) + " does not match " +
                     std::to_string(M) + " outputs");
  }
  const auto x = input.data();
  const auto w = weights.data();
  const auto b = bias.data();
  std::vector<T> out(N * M);
  for (std::size_t n = 0; n < N; ++n) {
    T* row = out.data() + n * M;
    std::copy(b.begin(), b.end(), row);
    for (std::size_t d = 0; d < D; ++d) {
      const T xv = x[n * D + d];
      if (xv == T(0)) continue;
      const T* wr = w.data() + d * M;
      for (std::size_t m = 0; m < M; ++m) row[m] += xv * wr[m];
    }
  }
  const bool tracked = any_tracked({&input, &weights, &bias});
  return tape.record(
      "dense", {N, M}, std::move(out), tracked,
      [=, input = input, weights = weights, bias = bias](std::span<const T> g) mutable {
        const auto xs = input.data();
        const auto ws = weights.data();
        if (bias.requires_grad()) {
          auto gb = bias.grad_accumulator();
          for (std::size_t m = 0; m < M; ++m) {
            double acc = 0;
            for (std::size_t n = 0; n < N; ++n) acc += g[n * M + m];
            gb[m] += static_cast<T>(acc);
          }
        }
        if (weights.requires_grad()) {
          auto gw = weights.grad_accumulator();
          for (std::size_t d = 0; d < D; ++d) {
            T* gr = gw.data() + d * M;
            for (std::size_t n = 0; n < N; ++n) {
              const T xv = xs[n * D + d];
              if (xv == T(0)) continue;
              const T* gn = g.data() + n * M;
              for (std::size_t m = 0; m < M; ++m) gr[m] += xv * gn[m];
            }
          }
        }
        if (input.requires_grad()) {
          auto gi = input.grad_accumulator();
          for (std::size_t n = 0; n < N; ++n) {
            const T* gn = g.data() + n * M;
            for (std::size_t d = 0; d < D; ++d) {
              const T* wr = ws.data() + d * M;
              double acc = 0;
              for (std::size_t m = 0; m < M; ++m) acc += gn[m] * wr[m];
              gi[n * D + d] += static_cast<T>(acc);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> relu(BasicTape<T>& tape, const BasicTensor<T>& x) {
  const auto xs = x.data();
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] > T(0) ? xs[i] : T(0);
  if (tape.branch_tracking()) {
    std::uint64_t h = xs.size();
    for (std::size_t i = 0; i < xs.size(); ++i) h = h * 1099511628211ull + (xs[i] > T(0));
    tape.note_branch(h);
  }
  return tape.record("relu", x.shape(), std::move(out), x.requires_grad(),
                     [x = x](std::span<const T> g) mutable {
                       const auto xs = x.data();
                       auto gi = x.grad_accumulator();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (xs[i] > T(0)) gi[i] += g[i];
                       }
                     });
}

template <typename T>
BasicTensor<T> sigmoid(BasicTape<T>& tape, const BasicTensor<T>& x) {
  const auto xs = x.data();
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const T v = xs[i];
    if (v >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  auto y = std::make_shared<std::vector<T>>(out);
  return tape.record("sigmoid", x.shape(), std::move(out), x.requires_grad(),
                     [x = x, y](std::span<const T> g) mutable {
                       auto gi = x.grad_accumulator();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const T s = (*y)[i];
                         gi[i] += g[i] * s * (T(1) - s);
                       }
                     });
}

template <typename T>
BasicTensor<T> avg_pool2d(BasicTape<T>& tape, const BasicTensor<T>& x, std::size_t window,
                          std::size_t stride) {
  require_rank(x, 4, "avg_pool2d", "input");
  if (window == 0 || stride == 0) throw ConfigError("avg_pool2d: window and stride must be positive");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (window > H || window > W) {
    throw ShapeError("avg_pool2d: window " + std::to_string(window) + " does not fit input " +
                     shape_string(x.shape()));
  }
  const std::size_t HO = (H - window) / stride + 1, WO = (W - window) / stride + 1;
  const T inv = T(1) / static_cast<T>(window * window);
  const auto xs = x.data();
  std::vector<T> out(N * C * HO * WO);
  for (std::size_t p = 0; p < N * C; ++p) {
    const T* ip = xs.data() + p * H * W;
    T* op = out.data() + p * HO * WO;
    for (std::size_t oy = 0; oy < HO; ++oy) {
      for (std::size_t ox = 0; ox < WO; ++ox) {
        T acc = 0;
        for (std::size_t dy = 0; dy < window; ++dy) {
          const T* r = ip + (oy * stride + dy) * W + ox * stride;
          for (std::size_t dx = 0; dx < window; ++dx) acc += r[dx];
        }
        op[oy * WO + ox] = acc * inv;
      }
    }
  }
  return tape.record("avg_pool2d", {N, C, HO, WO}, std::move(out), x.requires_grad(),
                     [=, x = x](std::span<const T> g) mutable {
                       auto gi = x.grad_accumulator();
                       for (std::size_t p = 0; p < N * C; ++p) {
                         T* dp = gi.data() + p * H * W;
                         const T* gp = g.data() + p * HO * WO;
                         for (std::size_t oy = 0; oy < HO; ++oy) {
                           for (std::size_t ox = 0; ox < WO; ++ox) {
                             const T v = gp[oy * WO + ox] * inv;
                             for (std::size_t dy = 0; dy < window; ++dy) {
                               T* r = dp + (oy * stride + dy) * W + ox * stride;
                               for (std::size_t dx = 0; dx < window; ++dx) r[dx] += v;
                             }
                           }
                         }
                       }
                     });
}

template <typename T>
BasicTensor<T> global_avg_pool(BasicTape<T>& tape, const BasicTensor<T>& x) {
  require_rank(x, 4, "global_avg_pool", "input");
  const std::size_t N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  const auto xs = x.data();
  std::vector<T> out(N * C);
  for (std::size_t i = 0; i < N * C; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < P; ++j) acc += xs[i * P + j];
    out[i] = static_cast<T>(acc / static_cast<double>(P));
  }
  return tape.record("global_avg_pool", {N, C}, std::move(out), x.requires_grad(),
                     [=, x = x](std::span<const T> g) mutable {
                       auto gi = x.grad_accumulator();
                       const T inv = T(1) / static_cast<T>(P);
                       for (std::size_t i = 0; i < N * C; ++i) {
                         const T v = g[i] * inv;
                         for (std::size_t j = 0; j < P; ++j) gi[i * P + j] += v;
                       }
                     });
}

template <typename T>
BasicTensor<T> concat_channels(BasicTape<T>& tape, const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  for (const auto& p : parts) require_rank(p, 4, "concat_channels", "input");
  const std::size_t N = parts[0].dim(0), H = parts[0].dim(2), W = parts[0].dim(3);
  std::size_t C = 0;
  bool tracked = false;
  for (const auto& p : parts) {
    if (p.dim(0) != N || p.dim(2) != H || p.dim(3) != W) {
      throw ShapeError("concat_channels: " + shape_string(p.shape()) + " incompatible with " +
                       shape_string(parts[0].shape()));
    }
    C += p.dim(1);
    tracked = tracked || p.requires_grad();
  }
  const std::size_t plane = H * W;
  std::vector<T> out(N * C * plane);
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t ci = p.dim(1);
      const auto src = p.data().subspan(n * ci * plane, ci * plane);
      std::copy(src.begin(), src.end(), out.begin() + (n * C + offset) * plane);
      offset += ci;
    }
  }
  return tape.record("concat_channels", {N, C, H, W}, std::move(out), tracked,
                     [=, parts = parts](std::span<const T> g) mutable {
                       std::size_t offset = 0;
                       for (auto& p : parts) {
                         const std::size_t ci = p.dim(1);
                         if (p.requires_grad()) {
                           auto gi = p.grad_accumulator();
                           for (std::size_t n = 0; n < N; ++n) {
                             const T* src = g.data() + (n * C + offset) * plane;
                             T* dst = gi.data() + n * ci * plane;
                             for (std::size_t i = 0; i < ci * plane; ++i) dst[i] += src[i];
                           }
                         }
                         offset += ci;
                       }
                     });
}

template <typename T>
BasicTensor<T> slice_channels(BasicTape<T>& tape, const BasicTensor<T>& x, std::size_t begin,
                              std::size_t end) {
  require_rank(x, 4, "slice_channels", "input");
  const std::size_t N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (begin >= end || end > C) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") invalid for " + shape_string(x.shape()));
  }
  const std::size_t S = end - begin;
  const auto xs = x.data();
  std::vector<T> out(N * S * plane);
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(xs.begin() + (n * C + begin) * plane, S * plane, out.begin() + n * S * plane);
  }
  return tape.record("slice_channels", {N, S, x.dim(2), x.dim(3)}, std::move(out),
                     x.requires_grad(), [=, x = x](std::span<const T> g) mutable {
                       auto gi = x.grad_accumulator();
                       for (std::size_t n = 0; n < N; ++n) {
                         T* dst = gi.data() + (n * C + begin) * plane;
                         const T* src = g.data() + n * S * plane;
                         for (std::size_t i = 0; i < S * plane; ++i) dst[i] += src[i];
                       }
                     });
}

template <typename T>
BasicTensor<T> dropout(BasicTape<T>& tape, const BasicTensor<T>& x, double rate, bool training,
                       Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout: rate " + std::to_string(rate) + " outside [0,1)");
  }
  if (!training) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  const auto xs = x.data();
  auto mask = std::make_shared<std::vector<T>>(xs.size());
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    (*mask)[i] = uniform01(rng) >= rate ? keep_scale : T(0);
    out[i] = xs[i] * (*mask)[i];
  }
  return tape.record("dropout", x.shape(), std::move(out), x.requires_grad(),
                     [x = x, mask](std::span<const T> g) mutable {
                       auto gi = x.grad_accumulator();
                       for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * (*mask)[i];
                     });
}

template <typename T>
BasicTensor<T> bce_loss(BasicTape<T>& tape, const BasicTensor<T>& prob,
                        const BasicTensor<T>& label) {
  require_rank(prob, 2, "bce_loss", "probabilities");
  if (prob.shape() != label.shape() || prob.dim(1) != 1) {
    throw ShapeError("bce_loss: probabilities " + shape_string(prob.shape()) + " and labels " +
                     shape_string(label.shape()) + " must both be [N,1]");
  }
  const std::size_t N = prob.dim(0);
  const auto ps = prob.data();
  const auto ys = label.data();
  const double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;
  double total = 0;
  std::uint64_t clamps = 0;
  for (std::size_t i = 0; i < N; ++i) {
    if (ys[i] != T(0) && ys[i] != T(1)) {
      throw ConfigError("bce_loss: label " + std::to_string(static_cast<double>(ys[i])) +
                        " at row " + std::to_string(i) + " is not 0 or 1");
    }
    const double raw = static_cast<double>(ps[i]);
    const double p = std::clamp(raw, lo, hi);
    clamps = clamps * 3 + (raw < lo ? 1 : raw > hi ? 2 : 0);
    total += ys[i] == T(1) ? -std::log(p) : -std::log(1.0 - p);
  }
  tape.note_branch(clamps);
  const T value = static_cast<T>(total / static_cast<double>(N));
  return tape.record("bce_loss", {1}, {value}, prob.requires_grad(),
                     [=, prob = prob, label = label](std::span<const T> g) mutable {
                       const auto ps = prob.data();
                       const auto ys = label.data();
                       auto gi = prob.grad_accumulator();
                       for (std::size_t i = 0; i < N; ++i) {
                         const double p = std::clamp(static_cast<double>(ps[i]), lo, hi);
                         const double d = ys[i] == T(1) ? -1.0 / p : 1.0 / (1.0 - p);
                         gi[i] += static_cast<T>(static_cast<double>(g[0]) * d / N);
                       }
                     });
}

template <typename T>
BasicTensor<T> sum(BasicTape<T>& tape, const BasicTensor<T>& x) {
  double acc = 0;
  for (T v : x.data()) acc += v;
  return tape.record("sum", {1}, {static_cast<T>(acc)}, x.requires_grad(),
                     [x = x](std::span<const T> g) mutable {
                       for (auto& v : x.grad_accumulator()) v += g[0];
                     });
}

template <typename T>
BasicTensor<T> mean(BasicTape<T>& tape, const BasicTensor<T>& x) {
  double acc = 0;
  for (T v : x.data()) acc += v;
  const double n = static_cast<double>(x.numel());
  return tape.record("mean", {1}, {static_cast<T>(acc / n)}, x.requires_grad(),
                     [x = x, n](std::span<const T> g) mutable {
                       const T v = static_cast<T>(g[0] / n);
                       for (auto& gi : x.grad_accumulator()) gi += v;
                     });
}

template <typename T>
BasicTensor<T> mul(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const auto as = a.data();
  const auto bs = b.data();
  std::vector<T> out(as.size());
  for (std::size_t i = 0; i < as.size(); ++i) out[i] = as[i] * bs[i];
  return tape.record("mul", a.shape(), std::move(out), a.requires_grad() || b.requires_grad(),
                     [a = a, b = b](std::span<const T> g) mutable {
                       if (a.requires_grad()) {
                         const auto bs = b.data();
                         auto ga = a.grad_accumulator();
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bs[i];
                       }
                       if (b.requires_grad()) {
                         const auto as = a.data();
                         auto gb = b.grad_accumulator();
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * as[i];
                       }
                     });
}

template <typename T>
BasicTensor<T> add(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const auto as = a.data();
  const auto bs = b.data();
  std::vector<T> out(as.size());
  for (std::size_t i = 0; i < as.size(); ++i) out[i] = as[i] + bs[i];
  return tape.record("add", a.shape(), std::move(out), a.requires_grad() || b.requires_grad(),
                     [a = a, b = b](std::span<const T> g) mutable {
                       for (auto* t : {&a, &b}) {
                         if (!t->requires_grad()) continue;
                         auto gt = t->grad_accumulator();
                         for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
                       }
                     });
}

template <typename T>
BasicTensor<T> scale(BasicTape<T>& tape, const BasicTensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return tape.record("scale", x.shape(), std::move(out), x.requires_grad(),
                     [x = x, factor](std::span<const T> g) mutable {
                       auto gi = x.grad_accumulator();
                       for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * factor;
                     });
}

template <typename T>
BasicTensor<T> reshape(BasicTape<T>& tape, const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                     shape_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return tape.record("reshape", std::move(shape), std::move(out), x.requires_grad(),
                     [x = x](std::span<const T> g) mutable {
                       auto gi = x.grad_accumulator();
                       for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                     });
}

#define LUCENET_INSTANTIATE_OPS(T)                                                              \
  template BasicTensor<T> conv2d(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&,   \
                                 const BasicTensor<T>&, std::size_t, std::size_t);              \
  template BasicTensor<T> dense(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&,    \
                                const BasicTensor<T>&);                                         \
  template BasicTensor<T> relu(BasicTape<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> sigmoid(BasicTape<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> avg_pool2d(BasicTape<T>&, const BasicTensor<T>&, std::size_t,         \
                                     std::size_t);                                              \
  template BasicTensor<T> global_avg_pool(BasicTape<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> concat_channels(BasicTape<T>&, const std::vector<BasicTensor<T>>&);   \
  template BasicTensor<T> slice_channels(BasicTape<T>&, const BasicTensor<T>&, std::size_t,     \
                                         std::size_t);                                          \
  template BasicTensor<T> dropout(BasicTape<T>&, const BasicTensor<T>&, double, bool, Rng&);    \
  template BasicTensor<T> bce_loss(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> sum(BasicTape<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> mean(BasicTape<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> mul(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);     \
  template BasicTensor<T> add(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);     \
  template BasicTensor<T> scale(BasicTape<T>&, const BasicTensor<T>&, T);                       \
  template BasicTensor<T> reshape(BasicTape<T>&, const BasicTensor<T>&, Shape);

LUCENET_INSTANTIATE_OPS(float)
LUCENET_INSTANTIATE_OPS(double)

#undef LUCENET_INSTANTIATE_OPS

}  // namespace lucenet::ops
