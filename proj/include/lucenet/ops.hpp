#pragma once

#include <cstddef>
#include <vector>

#include "lucenet/rng.hpp"
#include "lucenet/tensor.hpp"

// Differentiable operations. Every op appends one entry to the tape when any
// input requires a gradient, and throws ShapeError / NumericError / ConfigError
// on bad input. All ops are instantiated for float (training) and double
// (finite-difference oracles).
namespace lucenet::ops {

/// Cross-correlation of input [N,C,H,W] with kernel [F,C,kh,kw] plus a
/// per-filter bias [F]. Output is [N,F,(H+2p-kh)/s+1,(W+2p-kw)/s+1].
template <typename T>
BasicTensor<T> conv2d(BasicTape<T>& tape, const BasicTensor<T>& input,
                      const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      std::size_t stride = 1, std::size_t padding = 0);

/// input [N,D] x weights [D,M] + bias [M].
template <typename T>
BasicTensor<T> dense(BasicTape<T>& tape, const BasicTensor<T>& input,
                     const BasicTensor<T>& weights, const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> relu(BasicTape<T>& tape, const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> sigmoid(BasicTape<T>& tape, const BasicTensor<T>& x);

/// Mean over `window`x`window` patches taken every `stride` pixels.
template <typename T>
BasicTensor<T> avg_pool2d(BasicTape<T>& tape, const BasicTensor<T>& x, std::size_t window,
                          std::size_t stride);

/// [N,C,H,W] -> [N,C]
template <typename T>
BasicTensor<T> global_avg_pool(BasicTape<T>& tape, const BasicTensor<T>& x);

/// Concatenation along axis 1 of tensors sharing N, H and W.
template <typename T>
BasicTensor<T> concat_channels(BasicTape<T>& tape, const std::vector<BasicTensor<T>>& parts);

/// Channels [begin, end) of a [N,C,H,W] tensor.
template <typename T>
BasicTensor<T> slice_channels(BasicTape<T>& tape, const BasicTensor<T>& x, std::size_t begin,
                              std::size_t end);

/// Inverted dropout. With `training` false this returns `x` itself.
template <typename T>
BasicTensor<T> dropout(BasicTape<T>& tape, const BasicTensor<T>& x, double rate, bool training,
                       Rng& rng);

/// Mean binary cross-entropy of probabilities [N,1] against {0,1} labels.
/// Probabilities are clamped to [1e-7, 1-1e-7]; the gradient is evaluated at
/// the clamped value.
template <typename T>
BasicTensor<T> bce_loss(BasicTape<T>& tape, const BasicTensor<T>& prob,
                        const BasicTensor<T>& label);

inline constexpr double kProbabilityClamp = 1e-7;

template <typename T>
BasicTensor<T> sum(BasicTape<T>& tape, const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> mean(BasicTape<T>& tape, const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> mul(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> add(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(BasicTape<T>& tape, const BasicTensor<T>& x, T factor);

/// Same values, new shape of equal element count.
template <typename T>
BasicTensor<T> reshape(BasicTape<T>& tape, const BasicTensor<T>& x, Shape shape);

}  // namespace lucenet::ops
