#include "sickfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "sickfuse/errors.hpp"

namespace sickfuse::ops {

namespace {

// (B, T, H, W, C) view of a channels-last tensor with three spatial axes.
struct Conv3dGeometry {
  std::size_t batch, t, h, w, cin;
  std::size_t kt, kh, kw, cout;
  std::size_t pt, ph, pw;
  std::size_t ot, oh, ow;
};

std::size_t out_extent(std::size_t in, std::size_t k, Padding padding, std::size_t& pad) {
  if (padding == Padding::Same) {
    pad = (k - 1) / 2;
    return in;
  }
  pad = 0;
  if (k > in) throw ShapeError("kernel extent " + std::to_string(k) + " exceeds input " +
                               std::to_string(in));
  return in - k + 1;
}

Conv3dGeometry conv3d_geometry(const Shape& in, const Shape& k, Padding padding) {
  if (in.size() < 4) throw ShapeError("conv3d input must be (..., T, H, W, C), got " + shape_string(in));
  if (k.size() != 5) throw ShapeError("conv3d kernel must be (kt, kh, kw, Cin, Cout), got " + shape_string(k));
  const std::size_t r = in.size();
  Conv3dGeometry g{};
  g.batch = 1;
  for (std::size_t i = 0; i + 4 < r; ++i) g.batch *= in[i];
  g.t = in[r - 4];
  g.h = in[r - 3];
  g.w = in[r - 2];
  g.cin = in[r - 1];
  g.kt = k[0];
  g.kh = k[1];
  g.kw = k[2];
  g.cout = k[4];
  if (k[3] != g.cin) {
    throw ShapeError("conv kernel expects " + std::to_string(k[3]) + " input channels, input has " +
                     std::to_string(g.cin));
  }
  g.ot = out_extent(g.t, g.kt, padding, g.pt);
  g.oh = out_extent(g.h, g.kh, padding, g.ph);
  g.ow = out_extent(g.w, g.kw, padding, g.pw);
  return g;
}

// Calls fn(in_offset, kernel_offset) for every (input cell, kernel tap) pair that
// contributes to output cell (b, ot, oh, ow).
template <typename Fn>
void for_each_tap(const Conv3dGeometry& g, std::size_t b, std::size_t ot, std::size_t oh,
                  std::size_t ow, Fn&& fn) {
  for (std::size_t a = 0; a < g.kt; ++a) {
    const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot + a) - static_cast<std::ptrdiff_t>(g.pt);
    if (it < 0 || it >= static_cast<std::ptrdiff_t>(g.t)) continue;
    for (std::size_t c = 0; c < g.kh; ++c) {
      const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + c) - static_cast<std::ptrdiff_t>(g.ph);
      if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
      for (std::size_t e = 0; e < g.kw; ++e) {
        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + e) - static_cast<std::ptrdiff_t>(g.pw);
        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) continue;
        const std::size_t in_off =
            (((b * g.t + static_cast<std::size_t>(it)) * g.h + static_cast<std::size_t>(ih)) * g.w +
             static_cast<std::size_t>(iw)) * g.cin;
        const std::size_t k_off = ((a * g.kh + c) * g.kw + e) * g.cin * g.cout;
        fn(in_off, k_off);
      }
    }
  }
}

Var conv3d_core(Var input, Var kernel, Var bias, Padding padding, Shape out_shape_prefix,
                double l2) {
  Tape& tape = *input.tape;
  const Tensor& x = input.value();
  const Tensor& k = kernel.value();
  const Tensor& bv = bias.value();
  const Conv3dGeometry g = conv3d_geometry(x.shape(), k.shape(), padding);
  if (bv.size() != g.cout) throw ShapeError("conv bias length does not match output channels");

  Shape out_shape = std::move(out_shape_prefix);
  out_shape.insert(out_shape.end(), {g.ot, g.oh, g.ow, g.cout});
  Tensor y(out_shape, 0.0);

  const double* xd = x.data().data();
  const double* kd = k.data().data();
  double* yd = y.data().data();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t ot = 0; ot < g.ot; ++ot)
      for (std::size_t oh = 0; oh < g.oh; ++oh)
        for (std::size_t ow = 0; ow < g.ow; ++ow) {
          double* out = yd + (((b * g.ot + ot) * g.oh + oh) * g.ow + ow) * g.cout;
          for (std::size_t co = 0; co < g.cout; ++co) out[co] = bv[co];
          for_each_tap(g, b, ot, oh, ow, [&](std::size_t in_off, std::size_t k_off) {
            const double* in = xd + in_off;
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              const double v = in[ci];
              const double* kp = kd + k_off + ci * g.cout;
              for (std::size_t co = 0; co < g.cout; ++co) out[co] += v * kp[co];
            }
          });
        }

  if (l2 != 0.0) tape.add_regularizer(kernel, l2);

  return tape.record(std::move(y), {input, kernel, bias},
                     [input, kernel, bias, g](Tape& tp, const Tensor& gy) {
                       const bool need_x = tp.requires_grad(input);
                       const bool need_k = tp.requires_grad(kernel);
                       const bool need_b = tp.requires_grad(bias);
                       const double* xd = tp.value(input.id).data().data();
                       const double* kd = tp.value(kernel.id).data().data();
                       double* gx = need_x ? tp.grad_buffer(input.id).data().data() : nullptr;
                       double* gk = need_k ? tp.grad_buffer(kernel.id).data().data() : nullptr;
                       double* gb = need_b ? tp.grad_buffer(bias.id).data().data() : nullptr;
                       const double* gyd = gy.data().data();
                       for (std::size_t b = 0; b < g.batch; ++b)
                         for (std::size_t ot = 0; ot < g.ot; ++ot)
                           for (std::size_t oh = 0; oh < g.oh; ++oh)
                             for (std::size_t ow = 0; ow < g.ow; ++ow) {
                               const double* go =
                                   gyd + (((b * g.ot + ot) * g.oh + oh) * g.ow + ow) * g.cout;
                               if (gb)
                                 for (std::size_t co = 0; co < g.cout; ++co) gb[co] += go[co];
                               if (!gx && !gk) continue;
                               for_each_tap(g, b, ot, oh, ow,
                                            [&](std::size_t in_off, std::size_t k_off) {
                                              for (std::size_t ci = 0; ci < g.cin; ++ci) {
                                                const double* kp = kd + k_off + ci * g.cout;
                                                if (gx) {
                                                  double acc = 0.0;
                                                  for (std::size_t co = 0; co < g.cout; ++co)
                                                    acc += go[co] * kp[co];
                                                  gx[in_off + ci] += acc;
                                                }
                                                if (gk) {
                                                  const double v = xd[in_off + ci];
                                                  double* gkp = gk + k_off + ci * g.cout;
                                                  for (std::size_t co = 0; co < g.cout; ++co)
                                                    gkp[co] += v * go[co];
                                                }
                                              }
                                            });
                             }
                     });
}

Shape leading(const Shape& s, std::size_t trailing) {
  return Shape(s.begin(), s.end() - static_cast<std::ptrdiff_t>(trailing));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Var conv3d(Var input, Var kernel, Var bias, Padding padding, double l2) {
  const Shape& s = input.shape();
  if (s.size() < 4) throw ShapeError("conv3d input must be (..., T, H, W, C), got " + shape_string(s));
  return conv3d_core(input, kernel, bias, padding, leading(s, 4), l2);
}

Var conv1d(Var input, Var kernel, Var bias, Padding padding) {
  const Shape& s = input.shape();
  const Shape& k = kernel.shape();
  if (s.size() < 2) throw ShapeError("conv1d input must be (..., L, C), got " + shape_string(s));
  if (k.size() != 3) throw ShapeError("conv1d kernel must be (k, Cin, Cout), got " + shape_string(k));
  if (k[1] != s.back()) {
    throw ShapeError("conv kernel expects " + std::to_string(k[1]) + " input channels, input has " +
                     std::to_string(s.back()));
  }
  // Lift to the 3-D kernel with unit T and H extents.
  Shape lifted = leading(s, 2);
  lifted.insert(lifted.end(), {1, 1, s[s.size() - 2], s.back()});
  Var x3 = reshape(input, lifted);
  Var k3 = reshape(kernel, Shape{1, 1, k[0], k[1], k[2]});
  Var y3 = conv3d_core(x3, k3, bias, padding, leading(s, 2), 0.0);
  Shape out = leading(s, 2);
  out.insert(out.end(), {y3.shape()[y3.shape().size() - 2], k[2]});
  return reshape(y3, out);
}

Var maxpool(Var input, const Shape& window, const Shape& stride) {
  const Shape& s = input.shape();
  const std::size_t nsp = window.size();
  if (nsp == 0 || nsp > 3 || stride.size() != nsp) throw ShapeError("maxpool needs 1-3 window axes with matching strides");
  if (s.size() < nsp + 1) throw ShapeError("maxpool input rank too small for window");
  for (auto st : stride)
    if (st == 0) throw ShapeError("maxpool stride must be positive");

  std::size_t sp[3] = {1, 1, 1};
  std::size_t win[3] = {1, 1, 1};
  std::size_t str[3] = {1, 1, 1};
  const std::size_t r = s.size();
  for (std::size_t i = 0; i < nsp; ++i) {
    sp[3 - nsp + i] = s[r - 1 - nsp + i];
    win[3 - nsp + i] = window[i];
    str[3 - nsp + i] = stride[i];
  }
  std::size_t out[3];
  for (int i = 0; i < 3; ++i) {
    if (win[i] > sp[i]) {
      throw ShapeError("pool window " + shape_string(window) + " larger than input " + shape_string(s));
    }
    out[i] = (sp[i] - win[i]) / str[i] + 1;
  }
  const std::size_t c = s.back();
  std::size_t batch = 1;
  for (std::size_t i = 0; i + nsp + 1 < r; ++i) batch *= s[i];

  Shape out_shape = leading(s, nsp + 1);
  for (std::size_t i = 0; i < nsp; ++i) out_shape.push_back(out[3 - nsp + i]);
  out_shape.push_back(c);
  Tensor y(out_shape, 0.0);
  auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());

  const Tensor& x = input.value();
  std::size_t o = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i0 = 0; i0 < out[0]; ++i0)
      for (std::size_t i1 = 0; i1 < out[1]; ++i1)
        for (std::size_t i2 = 0; i2 < out[2]; ++i2)
          for (std::size_t ch = 0; ch < c; ++ch, ++o) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_idx = 0;
            for (std::size_t a = 0; a < win[0]; ++a)
              for (std::size_t bb = 0; bb < win[1]; ++bb)
                for (std::size_t e = 0; e < win[2]; ++e) {
                  const std::size_t idx =
                      (((b * sp[0] + i0 * str[0] + a) * sp[1] + i1 * str[1] + bb) * sp[2] +
                       i2 * str[2] + e) * c + ch;
                  if (x[idx] > best) {
                    best = x[idx];
                    best_idx = idx;
                  }
                }
            y[o] = best;
            (*argmax)[o] = best_idx;
          }

  return input.tape->record(std::move(y), {input}, [input, argmax](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(input.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
  });
}

Var dense(Var input, Var weights, Var bias) {
  const Shape& s = input.shape();
  const Shape& ws = weights.shape();
  if (s.empty() || ws.size() != 2 || ws[0] != s.back()) {
    throw ShapeError("dense: input " + shape_string(s) + " incompatible with weights " + shape_string(ws));
  }
  const std::size_t n = ws[0], m = ws[1];
  if (bias.value().size() != m) throw ShapeError("dense bias length does not match output width");
  const std::size_t rows = input.value().size() / n;
  Shape out_shape = leading(s, 1);
  out_shape.push_back(m);
  Tensor y(out_shape, 0.0);
  const double* x = input.value().data().data();
  const double* w = weights.value().data().data();
  const double* bv = bias.value().data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = y.data().data() + r * m;
    for (std::size_t j = 0; j < m; ++j) yr[j] = bv[j];
    for (std::size_t i = 0; i < n; ++i) {
      const double v = x[r * n + i];
      if (v == 0.0) continue;
      const double* wr = w + i * m;
      for (std::size_t j = 0; j < m; ++j) yr[j] += v * wr[j];
    }
  }
  return input.tape->record(
      std::move(y), {input, weights, bias},
      [input, weights, bias, rows, n, m](Tape& tp, const Tensor& g) {
        const double* x = tp.value(input.id).data().data();
        const double* w = tp.value(weights.id).data().data();
        const double* gd = g.data().data();
        if (tp.requires_grad(input)) {
          double* gx = tp.grad_buffer(input.id).data().data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < n; ++i) {
              double acc = 0.0;
              const double* wr = w + i * m;
              const double* gr = gd + r * m;
              for (std::size_t j = 0; j < m; ++j) acc += wr[j] * gr[j];
              gx[r * n + i] += acc;
            }
        }
        if (tp.requires_grad(weights)) {
          double* gw = tp.grad_buffer(weights.id).data().data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < n; ++i) {
              const double v = x[r * n + i];
              if (v == 0.0) continue;
              double* gwr = gw + i * m;
              const double* gr = gd + r * m;
              for (std::size_t j = 0; j < m; ++j) gwr[j] += v * gr[j];
            }
        }
        if (tp.requires_grad(bias)) {
          double* gb = tp.grad_buffer(bias.id).data().data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < m; ++j) gb[j] += gd[r * m + j];
        }
      });
}

Var activation(Var input, Activation kind) {
  if (kind == Activation::Linear) return input;
  const Tensor& x = input.value();
  Tensor y(x.shape(), 0.0);
  switch (kind) {
    case Activation::Relu:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
      break;
    case Activation::Softmax: {
      if (x.rank() == 0) throw ShapeError("softmax needs at least one axis");
      const std::size_t k = x.shape().back();
      for (std::size_t r = 0; r < x.size() / k; ++r) {
        const double* xr = x.data().data() + r * k;
        double* yr = y.data().data() + r * k;
        const double mx = *std::max_element(xr, xr + k);
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += (yr[j] = std::exp(xr[j] - mx));
        for (std::size_t j = 0; j < k; ++j) yr[j] /= total;
      }
      break;
    }
    case Activation::Linear:
      break;
  }
  return input.tape->record(std::move(y), {input}, [input, kind](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(input.id);
    Tensor& gx = tp.grad_buffer(input.id);
    switch (kind) {
      case Activation::Relu:
        for (std::size_t i = 0; i < x.size(); ++i)
          if (x[i] > 0.0) gx[i] += g[i];
        break;
      case Activation::Sigmoid:
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double s = sigmoid(x[i]);
          gx[i] += g[i] * s * (1.0 - s);
        }
        break;
      case Activation::Tanh:
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double t = std::tanh(x[i]);
          gx[i] += g[i] * (1.0 - t * t);
        }
        break;
      case Activation::Softmax: {
        const std::size_t k = x.shape().back();
        std::vector<double> yr(k);
        for (std::size_t r = 0; r < x.size() / k; ++r) {
          const double* xr = x.data().data() + r * k;
          const double mx = *std::max_element(xr, xr + k);
          double total = 0.0;
          for (std::size_t j = 0; j < k; ++j) total += (yr[j] = std::exp(xr[j] - mx));
          double dot = 0.0;
          for (std::size_t j = 0; j < k; ++j) {
            yr[j] /= total;
            dot += yr[j] * g[r * k + j];
          }
          for (std::size_t j = 0; j < k; ++j) gx[r * k + j] += yr[j] * (g[r * k + j] - dot);
        }
        break;
      }
      case Activation::Linear:
        break;
    }
  });
}

Var batchnorm(Var input, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
              Mode mode, double eps, double momentum) {
  const Tensor& x = input.value();
  if (x.rank() < 2) throw ShapeError("batchnorm input must be (N, ..., C)");
  const std::size_t c = x.shape().back();
  if (gamma.value().size() != c || beta.value().size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw ShapeError("batchnorm parameters do not match channel count " + std::to_string(c));
  }
  const std::size_t count = x.size() / c;
  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  Tensor y(x.shape(), 0.0);

  if (mode == Mode::Infer) {
    std::vector<double> inv(c);
    for (std::size_t j = 0; j < c; ++j) inv[j] = 1.0 / std::sqrt(running_var[j] + eps);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < c; ++j)
        y[i * c + j] = gm[j] * (x[i * c + j] - running_mean[j]) * inv[j] + bt[j];
    return input.tape->record(std::move(y), {input, gamma, beta},
                              [input, gamma, beta, inv, mean = running_mean, c, count](
                                  Tape& tp, const Tensor& g) {
                                const Tensor& x = tp.value(input.id);
                                const Tensor& gm = tp.value(gamma.id);
                                if (tp.requires_grad(input)) {
                                  Tensor& gx = tp.grad_buffer(input.id);
                                  for (std::size_t i = 0; i < count; ++i)
                                    for (std::size_t j = 0; j < c; ++j)
                                      gx[i * c + j] += g[i * c + j] * gm[j] * inv[j];
                                }
                                if (tp.requires_grad(gamma)) {
                                  Tensor& gg = tp.grad_buffer(gamma.id);
                                  for (std::size_t i = 0; i < count; ++i)
                                    for (std::size_t j = 0; j < c; ++j)
                                      gg[j] += g[i * c + j] * (x[i * c + j] - mean[j]) * inv[j];
                                }
                                if (tp.requires_grad(beta)) {
                                  Tensor& gb = tp.grad_buffer(beta.id);
                                  for (std::size_t i = 0; i < count; ++i)
                                    for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
                                }
                              });
  }

  if (x.dim(0) < 2) {
    throw DegenerateBatchError("batchnorm in train mode needs a batch of at least 2, got " +
                               std::to_string(x.dim(0)));
  }
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < c; ++j) mean[j] += x[i * c + j];
  for (auto& m : mean) m /= static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x[i * c + j] - mean[j];
      var[j] += d * d;
    }
  for (auto& v : var) v /= static_cast<double>(count);

  auto xhat = std::make_shared<Tensor>(x.shape(), 0.0);
  std::vector<double> inv(c);
  for (std::size_t j = 0; j < c; ++j) inv[j] = 1.0 / std::sqrt(var[j] + eps);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (x[i * c + j] - mean[j]) * inv[j];
      (*xhat)[i * c + j] = h;
      y[i * c + j] = gm[j] * h + bt[j];
    }
  for (std::size_t j = 0; j < c; ++j) {
    running_mean[j] = momentum * running_mean[j] + (1.0 - momentum) * mean[j];
    running_var[j] = momentum * running_var[j] + (1.0 - momentum) * var[j];
  }

  return input.tape->record(
      std::move(y), {input, gamma, beta},
      [input, gamma, beta, xhat, inv, c, count](Tape& tp, const Tensor& g) {
        const Tensor& gm = tp.value(gamma.id);
        std::vector<double> sum_g(c, 0.0), sum_gh(c, 0.0);
        for (std::size_t i = 0; i < count; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            sum_g[j] += g[i * c + j];
            sum_gh[j] += g[i * c + j] * (*xhat)[i * c + j];
          }
        if (tp.requires_grad(gamma)) {
          Tensor& gg = tp.grad_buffer(gamma.id);
          for (std::size_t j = 0; j < c; ++j) gg[j] += sum_gh[j];
        }
        if (tp.requires_grad(beta)) {
          Tensor& gb = tp.grad_buffer(beta.id);
          for (std::size_t j = 0; j < c; ++j) gb[j] += sum_g[j];
        }
        if (tp.requires_grad(input)) {
          Tensor& gx = tp.grad_buffer(input.id);
          const double m = static_cast<double>(count);
          for (std::size_t i = 0; i < count; ++i)
            for (std::size_t j = 0; j < c; ++j)
              gx[i * c + j] += gm[j] * inv[j] / m *
                               (m * g[i * c + j] - sum_g[j] - (*xhat)[i * c + j] * sum_gh[j]);
        }
      });
}

Var dropout(Var input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout rate must lie in [0, 1)");
  if (mode == Mode::Infer || rate == 0.0) return input;
  const Tensor& x = input.value();
  auto mask = std::make_shared<std::vector<double>>(x.size());
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale_up = 1.0 / (1.0 - rate);
  Tensor y(x.shape(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = keep(rng) ? scale_up : 0.0;
    y[i] = x[i] * (*mask)[i];
  }
  return input.tape->record(std::move(y), {input}, [input, mask](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(input.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

Var lstm(Var input, Var weights, Var recurrent, Var bias, double recurrent_dropout, Mode mode,
         Rng& rng, bool return_sequences) {
  const Shape& s = input.shape();
  if (s.size() != 2 && s.size() != 3) throw ShapeError("lstm input must be (L, F) or (N, L, F)");
  const bool batched = s.size() == 3;
  const std::size_t n = batched ? s[0] : 1;
  const std::size_t len = s[s.size() - 2];
  const std::size_t f = s.back();
  const Shape& ws = weights.shape();
  const Shape& us = recurrent.shape();
  if (ws.size() != 2 || ws[0] != f || ws[1] % 4 != 0) {
    throw ShapeError("lstm weights must be (F, 4H), got " + shape_string(ws));
  }
  const std::size_t h = ws[1] / 4;
  if (us != Shape{h, 4 * h} || bias.value().size() != 4 * h) {
    throw ShapeError("lstm recurrent/bias shapes inconsistent with hidden size " + std::to_string(h));
  }
  if (!(recurrent_dropout >= 0.0 && recurrent_dropout < 1.0)) {
    throw ContractError("recurrent dropout must lie in [0, 1)");
  }

  // One recurrent mask per sequence.
  auto mask = std::make_shared<std::vector<double>>(n * h, 1.0);
  if (mode == Mode::Train && recurrent_dropout > 0.0) {
    std::bernoulli_distribution keep(1.0 - recurrent_dropout);
    const double up = 1.0 / (1.0 - recurrent_dropout);
    for (auto& m : *mask) m = keep(rng) ? up : 0.0;
  }

  // Per (sample, step) caches: gate activations [i f g o], cell state, masked h_{t-1}.
  auto gates = std::make_shared<std::vector<double>>(n * len * 4 * h);
  auto cells = std::make_shared<std::vector<double>>(n * len * h);
  auto hprev = std::make_shared<std::vector<double>>(n * len * h);
  const double* x = input.value().data().data();
  const double* w = weights.value().data().data();
  const double* u = recurrent.value().data().data();
  const double* b = bias.value().data().data();

  Shape out_shape;
  if (batched) out_shape.push_back(n);
  if (return_sequences) out_shape.push_back(len);
  out_shape.push_back(h);
  Tensor y(out_shape, 0.0);

  std::vector<double> hcur(h), ccur(h), z(4 * h);
  for (std::size_t smp = 0; smp < n; ++smp) {
    std::fill(hcur.begin(), hcur.end(), 0.0);
    std::fill(ccur.begin(), ccur.end(), 0.0);
    const double* m = mask->data() + smp * h;
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t st = smp * len + t;
      double* hp = hprev->data() + st * h;
      for (std::size_t j = 0; j < h; ++j) hp[j] = hcur[j] * m[j];
      for (std::size_t j = 0; j < 4 * h; ++j) z[j] = b[j];
      const double* xt = x + st * f;
      for (std::size_t i = 0; i < f; ++i) {
        const double v = xt[i];
        const double* wr = w + i * 4 * h;
        for (std::size_t j = 0; j < 4 * h; ++j) z[j] += v * wr[j];
      }
      for (std::size_t i = 0; i < h; ++i) {
        const double v = hp[i];
        const double* ur = u + i * 4 * h;
        for (std::size_t j = 0; j < 4 * h; ++j) z[j] += v * ur[j];
      }
      double* gt = gates->data() + st * 4 * h;
      double* ct = cells->data() + st * h;
      for (std::size_t j = 0; j < h; ++j) {
        const double ig = sigmoid(z[j]);
        const double fg = sigmoid(z[h + j]);
        const double cg = std::tanh(z[2 * h + j]);
        const double og = sigmoid(z[3 * h + j]);
        gt[j] = ig;
        gt[h + j] = fg;
        gt[2 * h + j] = cg;
        gt[3 * h + j] = og;
        ccur[j] = fg * ccur[j] + ig * cg;
        ct[j] = ccur[j];
        hcur[j] = og * std::tanh(ccur[j]);
      }
      if (return_sequences) {
        std::copy(hcur.begin(), hcur.end(), y.data().data() + st * h);
      }
    }
    if (!return_sequences) std::copy(hcur.begin(), hcur.end(), y.data().data() + smp * h);
  }

  return input.tape->record(
      std::move(y), {input, weights, recurrent, bias},
      [=](Tape& tp, const Tensor& g) {
        const double* x = tp.value(input.id).data().data();
        const double* w = tp.value(weights.id).data().data();
        const double* u = tp.value(recurrent.id).data().data();
        double* gx = tp.requires_grad(input) ? tp.grad_buffer(input.id).data().data() : nullptr;
        double* gw = tp.requires_grad(weights) ? tp.grad_buffer(weights.id).data().data() : nullptr;
        double* gu = tp.requires_grad(recurrent) ? tp.grad_buffer(recurrent.id).data().data() : nullptr;
        double* gb = tp.requires_grad(bias) ? tp.grad_buffer(bias.id).data().data() : nullptr;
        std::vector<double> dh_next(h), dc_next(h), dz(4 * h), dhm(h);
        for (std::size_t smp = 0; smp < n; ++smp) {
          std::fill(dh_next.begin(), dh_next.end(), 0.0);
          std::fill(dc_next.begin(), dc_next.end(), 0.0);
          const double* m = mask->data() + smp * h;
          for (std::size_t t = len; t-- > 0;) {
            const std::size_t st = smp * len + t;
            const double* gt = gates->data() + st * 4 * h;
            const double* ct = cells->data() + st * h;
            const double* hp = hprev->data() + st * h;
            for (std::size_t j = 0; j < h; ++j) {
              double dh = dh_next[j];
              if (return_sequences) {
                dh += g[st * h + j];
              } else if (t + 1 == len) {
                dh += g[smp * h + j];
              }
              const double ig = gt[j], fg = gt[h + j], cg = gt[2 * h + j], og = gt[3 * h + j];
              const double tc = std::tanh(ct[j]);
              const double cprev = t > 0 ? cells->data()[(st - 1) * h + j] : 0.0;
              const double dc = dh * og * (1.0 - tc * tc) + dc_next[j];
              dz[j] = dc * cg * ig * (1.0 - ig);
              dz[h + j] = dc * cprev * fg * (1.0 - fg);
              dz[2 * h + j] = dc * ig * (1.0 - cg * cg);
              dz[3 * h + j] = dh * tc * og * (1.0 - og);
              dc_next[j] = dc * fg;
            }
            const double* xt = x + st * f;
            if (gw)
              for (std::size_t i = 0; i < f; ++i) {
                const double v = xt[i];
                double* gwr = gw + i * 4 * h;
                for (std::size_t j = 0; j < 4 * h; ++j) gwr[j] += v * dz[j];
              }
            if (gu)
              for (std::size_t i = 0; i < h; ++i) {
                const double v = hp[i];
                double* gur = gu + i * 4 * h;
                for (std::size_t j = 0; j < 4 * h; ++j) gur[j] += v * dz[j];
              }
            if (gb)
              for (std::size_t j = 0; j < 4 * h; ++j) gb[j] += dz[j];
            if (gx)
              for (std::size_t i = 0; i < f; ++i) {
                const double* wr = w + i * 4 * h;
                double acc = 0.0;
                for (std::size_t j = 0; j < 4 * h; ++j) acc += wr[j] * dz[j];
                gx[st * f + i] += acc;
              }
            for (std::size_t i = 0; i < h; ++i) {
              const double* ur = u + i * 4 * h;
              double acc = 0.0;
              for (std::size_t j = 0; j < 4 * h; ++j) acc += ur[j] * dz[j];
              dh_next[i] = acc * m[i];
            }
          }
        }
      });
}

Var reshape(Var input, Shape shape) {
  Tensor y = input.value().reshaped(std::move(shape));
  return input.tape->record(std::move(y), {input}, [input](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(input.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var take(Var input, std::size_t index) {
  const Shape& s = input.shape();
  if (s.size() < 2) throw ShapeError("take needs rank >= 2, got " + shape_string(s));
  if (index >= s[1]) throw ShapeError("take index " + std::to_string(index) + " outside axis of " + std::to_string(s[1]));
  Shape out_shape = {s[0]};
  out_shape.insert(out_shape.end(), s.begin() + 2, s.end());
  const std::size_t inner = shape_size(out_shape) / s[0];
  const std::size_t n = s[0], count = s[1];
  Tensor y(out_shape, 0.0);
  const double* x = input.value().data().data();
  for (std::size_t b = 0; b < n; ++b)
    std::copy_n(x + (b * count + index) * inner, inner, y.data().data() + b * inner);
  return input.tape->record(std::move(y), {input}, [input, n, count, index, inner](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(input.id);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t j = 0; j < inner; ++j) gx[(b * count + index) * inner + j] += g[b * inner + j];
  });
}

Var concat(const std::vector<Var>& inputs) {
  if (inputs.empty()) throw ContractError("concat of no inputs");
  const Shape& s0 = inputs[0].shape();
  if (s0.empty()) throw ShapeError("concat needs at least rank 1");
  const Shape lead = leading(s0, 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& v : inputs) {
    if (v.shape().size() != s0.size() || leading(v.shape(), 1) != lead) {
      throw ShapeError("concat leading axes differ: " + shape_string(s0) + " vs " +
                       shape_string(v.shape()));
    }
    widths.push_back(v.shape().back());
    total += v.shape().back();
  }
  const std::size_t rows = shape_size(lead);
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor y(out_shape, 0.0);
  std::size_t col = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& x = inputs[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(x.data().data() + r * widths[k], widths[k], y.data().data() + r * total + col);
    col += widths[k];
  }
  return inputs[0].tape->record(std::move(y), inputs,
                                [inputs, widths, rows, total](Tape& tp, const Tensor& g) {
                                  std::size_t col = 0;
                                  for (std::size_t k = 0; k < inputs.size(); ++k) {
                                    if (tp.requires_grad(inputs[k])) {
                                      Tensor& gx = tp.grad_buffer(inputs[k].id);
                                      for (std::size_t r = 0; r < rows; ++r)
                                        for (std::size_t j = 0; j < widths[k]; ++j)
                                          gx[r * widths[k] + j] += g[r * total + col + j];
                                    }
                                    col += widths[k];
                                  }
                                });
}

Var add(Var a, Var b) {
  if (a.value().size() != b.value().size()) throw ShapeError("add: sizes differ");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    for (Var v : {a, b}) {
      if (!tp.requires_grad(v)) continue;
      Tensor& gv = tp.grad_buffer(v.id);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var scale(Var input, double factor) {
  Tensor y = input.value();
  for (auto& v : y.data()) v *= factor;
  return input.tape->record(std::move(y), {input}, [input, factor](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(input.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
}

Var sum(Var input) {
  double total = 0.0;
  for (double v : input.value().data()) total += v;
  return input.tape->record(Tensor::scalar(total), {input}, [input](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(input.id);
    for (auto& v : gx.data()) v += g[0];
  });
}

Var sum_squares(Var input) {
  double total = 0.0;
  for (double v : input.value().data()) total += v * v;
  return input.tape->record(Tensor::scalar(total), {input}, [input](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(input.id);
    Tensor& gx = tp.grad_buffer(input.id);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += 2.0 * x[i] * g[0];
  });
}

Var loss_rmse(Var pred, const Tensor& target) {
  const Tensor& p = pred.value();
  if (p.size() != target.size() || p.size() == 0) {
    throw ShapeError("rmse: prediction " + shape_string(p.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sse += (p[i] - target[i]) * (p[i] - target[i]);
  const double n = static_cast<double>(p.size());
  const double rmse = std::sqrt(sse / n);
  return pred.tape->record(Tensor::scalar(rmse), {pred},
                           [pred, target, rmse, n](Tape& tp, const Tensor& g) {
                             if (rmse == 0.0) return;
                             const Tensor& p = tp.value(pred.id);
                             Tensor& gp = tp.grad_buffer(pred.id);
                             for (std::size_t i = 0; i < p.size(); ++i)
                               gp[i] += g[0] * (p[i] - target[i]) / (n * rmse);
                           });
}

Var loss_crossentropy(Var pred, const Tensor& target) {
  const Tensor& p = pred.value();
  if (p.shape() != target.shape() || p.rank() == 0) {
    throw ShapeError("cross-entropy: prediction " + shape_string(p.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  const std::size_t k = p.shape().back();
  const double rows = static_cast<double>(p.size() / k);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (target[i] != 0.0) total -= target[i] * std::log(std::max(p[i], kProbabilityFloor));
  }
  return pred.tape->record(Tensor::scalar(total / rows), {pred},
                           [pred, target, rows](Tape& tp, const Tensor& g) {
                             const Tensor& p = tp.value(pred.id);
                             Tensor& gp = tp.grad_buffer(pred.id);
                             for (std::size_t i = 0; i < p.size(); ++i) {
                               if (target[i] != 0.0 && p[i] > kProbabilityFloor)
                                 gp[i] -= g[0] * target[i] / (rows * p[i]);
                             }
                           });
}

}  // namespace sickfuse::ops
