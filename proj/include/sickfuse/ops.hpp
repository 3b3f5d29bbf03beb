#pragma once

#include <vector>

#include "sickfuse/autodiff.hpp"
#include "sickfuse/rng.hpp"
#include "sickfuse/tensor.hpp"

// Differentiable layer primitives. Every op reads its inputs from the tape,
// computes the forward value eagerly and records a backward closure.
//
// Layout convention: channels last, with any number of leading batch axes.
// conv3d expects (..., T, H, W, Cin), conv1d (..., L, Cin), dense (..., n).
namespace sickfuse::ops {

enum class Padding { Same, Valid };
enum class Mode { Train, Infer };
enum class Activation { Linear, Relu, Sigmoid, Tanh, Softmax };

Var conv3d(Var input, Var kernel, Var bias, Padding padding = Padding::Same, double l2 = 0.0);
Var conv1d(Var input, Var kernel, Var bias, Padding padding = Padding::Same);

/// Max pooling over the trailing `window.size()` spatial axes (channel axis last).
/// Output extent per axis is floor((in - window) / stride) + 1.
Var maxpool(Var input, const Shape& window, const Shape& stride);

Var dense(Var input, Var weights, Var bias);
Var activation(Var input, Activation kind);

/// Per-channel normalization over every axis except the last. Train mode uses
/// batch statistics and folds them into the running estimates
/// (running = momentum * running + (1 - momentum) * batch); infer mode uses
/// the running estimates. Axis 0 is the batch axis.
Var batchnorm(Var input, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
              Mode mode, double eps = 1e-3, double momentum = 0.9);

/// Inverted dropout. Identity for rate 0 or infer mode.
Var dropout(Var input, double rate, Mode mode, Rng& rng);

/// LSTM over (N, L, F) or (L, F). Gates are packed [input, forget, cell, output]
/// in blocks of H columns: weights (F, 4H), recurrent (H, 4H), bias (4H).
/// In train mode with recurrent_dropout > 0 one mask per sequence is applied to
/// the previous hidden state before the recurrent product.
/// Returns the last hidden state (N, H) or the full sequence (N, L, H).
Var lstm(Var input, Var weights, Var recurrent, Var bias, double recurrent_dropout, Mode mode,
         Rng& rng, bool return_sequences = false);

Var reshape(Var input, Shape shape);

/// Slice `index` of axis 1: (N, S, rest...) -> (N, rest...).
Var take(Var input, std::size_t index);
/// Concatenation along the last axis; leading axes must agree.
Var concat(const std::vector<Var>& inputs);
Var add(Var a, Var b);
Var scale(Var input, double factor);
Var sum(Var input);
Var sum_squares(Var input);

/// sqrt(mean((pred - target)^2)) over all elements.
Var loss_rmse(Var pred, const Tensor& target);
/// Mean over rows of -sum(target * log(max(pred, 1e-12))).
Var loss_crossentropy(Var pred, const Tensor& target);

inline constexpr double kProbabilityFloor = 1e-12;

}  // namespace sickfuse::ops
