#include "sickfuse/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "sickfuse/errors.hpp"

namespace sickfuse {

// ---- z-score ---------------------------------------------------------------

ZScoreStats zscore_fit(const std::vector<double>& column) {
  if (column.size() < 2) throw ContractError("z-score needs at least 2 values");
  double mean = 0.0;
  for (double v : column) mean += v;
  mean /= static_cast<double>(column.size());
  double ss = 0.0;
  for (double v : column) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(column.size()));
  if (!(sd > 0.0)) throw ZeroVarianceError("z-score of a constant column");
  return {mean, sd};
}

double zscore_apply(double x, const ZScoreStats& stats) { return (x - stats.mean) / stats.stddev; }

ZScoreResult zscore_normalize(const std::vector<double>& column) {
  ZScoreResult out;
  out.stats = zscore_fit(column);
  out.values.reserve(column.size());
  for (double v : column) out.values.push_back(zscore_apply(v, out.stats));
  return out;
}

// ---- image helpers ---------------------------------------------------------

namespace {

using Image = Plane<double>;

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

Image to_double(const Plane<float>& p) {
  Image out(p.width, p.height);
  std::copy(p.data.begin(), p.data.end(), out.data.begin());
  return out;
}

/// Separable Gaussian blur with reflect-101 borders. sigma <= 0 derives it from
/// the kernel size.
Image gaussian_blur(const Image& src, int ksize, double sigma) {
  if (sigma <= 0) sigma = 0.3 * ((ksize - 1) * 0.5 - 1) + 0.8;
  const int r = ksize / 2;
  std::vector<double> k(ksize);
  double s = 0;
  for (int i = 0; i < ksize; ++i) {
    const double x = i - r;
    k[i] = std::exp(-x * x / (2 * sigma * sigma));
    s += k[i];
  }
  for (auto& v : k) v /= s;
  const int w = static_cast<int>(src.width), h = static_cast<int>(src.height);
  Image tmp(src.width, src.height), out(src.width, src.height);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = 0; i < ksize; ++i) acc += k[i] * src.at(reflect101(x + i - r, w), y);
      tmp.at(x, y) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = 0; i < ksize; ++i) acc += k[i] * tmp.at(x, reflect101(y + i - r, h));
      out.at(x, y) = acc;
    }
  return out;
}

/// Bilinear resize with pixel-centre alignment and clamped borders.
Image resize_linear(const Image& src, std::size_t w, std::size_t h) {
  if (w == src.width && h == src.height) return src;
  Image out(w, h);
  const double sx = static_cast<double>(src.width) / w;
  const double sy = static_cast<double>(src.height) / h;
  const int sw = static_cast<int>(src.width), sh = static_cast<int>(src.height);
  for (std::size_t y = 0; y < h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double ay = fy - y0;
    if (y0 < 0) { y0 = 0; ay = 0; }
    if (y0 >= sh - 1) { y0 = sh - 1; ay = 0; }
    const int y1 = std::min(y0 + 1, sh - 1);
    for (std::size_t x = 0; x < w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double ax = fx - x0;
      if (x0 < 0) { x0 = 0; ax = 0; }
      if (x0 >= sw - 1) { x0 = sw - 1; ax = 0; }
      const int x1 = std::min(x0 + 1, sw - 1);
      out.at(x, y) = (1 - ay) * ((1 - ax) * src.at(x0, y0) + ax * src.at(x1, y0)) +
                     ay * ((1 - ax) * src.at(x0, y1) + ax * src.at(x1, y1));
    }
  }
  return out;
}

// ---- Farneback -------------------------------------------------------------

struct PolyBasis {
  std::vector<double> g, xg, xxg;  // index k in [0, n]
  double ig11 = 0, ig03 = 0, ig33 = 0, ig55 = 0;
};

/// Inverse of a small dense symmetric positive-definite matrix (Gauss-Jordan).
std::vector<double> invert(std::vector<double> a, int n) {
  std::vector<double> inv(n * n, 0.0);
  for (int i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    for (int k = 0; k < n; ++k) {
      std::swap(a[c * n + k], a[piv * n + k]);
      std::swap(inv[c * n + k], inv[piv * n + k]);
    }
    const double d = a[c * n + c];
    for (int k = 0; k < n; ++k) {
      a[c * n + k] /= d;
      inv[c * n + k] /= d;
    }
    for (int r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r * n + c];
      for (int k = 0; k < n; ++k) {
        a[r * n + k] -= f * a[c * n + k];
        inv[r * n + k] -= f * inv[c * n + k];
      }
    }
  }
  return inv;
}

PolyBasis prepare_gaussian(int n, double sigma) {
  PolyBasis b;
  b.g.assign(n + 1, 0);
  b.xg.assign(n + 1, 0);
  b.xxg.assign(n + 1, 0);
  std::vector<double> full(2 * n + 1);
  double s = 0;
  for (int x = -n; x <= n; ++x) {
    full[x + n] = std::exp(-x * x / (2 * sigma * sigma));
    s += full[x + n];
  }
  for (auto& v : full) v /= s;
  for (int k = 0; k <= n; ++k) {
    b.g[k] = full[k + n];
    b.xg[k] = k * b.g[k];
    b.xxg[k] = k * k * b.g[k];
  }
  // Gram matrix of the basis {1, x, y, x^2, y^2, xy} under the Gaussian weight.
  std::vector<double> G(36, 0.0);
  auto at = [&](int r, int c) -> double& { return G[r * 6 + c]; };
  for (int y = -n; y <= n; ++y)
    for (int x = -n; x <= n; ++x) {
      const double w = full[y + n] * full[x + n];
      at(0, 0) += w;
      at(1, 1) += w * x * x;
      at(3, 3) += w * x * x * x * x;
      at(5, 5) += w * x * x * y * y;
    }
  at(2, 2) = at(0, 3) = at(0, 4) = at(3, 0) = at(4, 0) = at(1, 1);
  at(4, 4) = at(3, 3);
  at(3, 4) = at(4, 3) = at(5, 5);
  auto inv = invert(G, 6);
  b.ig11 = inv[1 * 6 + 1];
  b.ig03 = inv[0 * 6 + 3];
  b.ig33 = inv[3 * 6 + 3];
  b.ig55 = inv[5 * 6 + 5];
  return b;
}

/// Per-pixel quadratic fit. Coefficients per pixel: [y, x, yy, xx, xy].
std::vector<double> poly_expansion(const Image& src, int n, const PolyBasis& b) {
  const int w = static_cast<int>(src.width), h = static_cast<int>(src.height);
  std::vector<double> out(static_cast<std::size_t>(w) * h * 5);
  std::vector<double> r0(w), r1(w), r2(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      r0[x] = src.at(x, y) * b.g[0];
      r1[x] = r2[x] = 0;
    }
    for (int k = 1; k <= n; ++k) {
      const int ya = clamp_index(y - k, h), yb = clamp_index(y + k, h);
      for (int x = 0; x < w; ++x) {
        const double s0 = src.at(x, ya), s1 = src.at(x, yb);
        r0[x] += b.g[k] * (s0 + s1);
        r1[x] += b.xg[k] * (s1 - s0);
        r2[x] += b.xxg[k] * (s0 + s1);
      }
    }
    for (int x = 0; x < w; ++x) {
      double b1 = r0[x] * b.g[0], b2 = 0, b3 = r1[x] * b.g[0], b4 = 0, b5 = r2[x] * b.g[0], b6 = 0;
      for (int k = 1; k <= n; ++k) {
        const int xa = clamp_index(x - k, w), xb = clamp_index(x + k, w);
        const double tg = r0[xb] + r0[xa];
        b1 += tg * b.g[k];
        b4 += tg * b.xxg[k];
        b2 += (r0[xb] - r0[xa]) * b.xg[k];
        b3 += (r1[xb] + r1[xa]) * b.g[k];
        b6 += (r1[xb] - r1[xa]) * b.xg[k];
        b5 += (r2[xb] + r2[xa]) * b.g[k];
      }
      double* d = out.data() + (static_cast<std::size_t>(y) * w + x) * 5;
      d[0] = b3 * b.ig11;
      d[1] = b2 * b.ig11;
      d[2] = b1 * b.ig03 + b5 * b.ig33;
      d[3] = b1 * b.ig03 + b4 * b.ig33;
      d[4] = b6 * b.ig55;
    }
  }
  return out;
}

/// Per-pixel normal-equation terms [G11, G12, G22, h1, h2] of the displacement
/// estimate, given the current flow.
void update_matrices(const std::vector<double>& R0, const std::vector<double>& R1, const FlowField& flow,
                     std::vector<double>& M) {
  constexpr int kBorder = 5;
  constexpr double kBorderWeight[kBorder] = {0.14, 0.14, 0.4472, 0.4472, 0.4472};
  const int w = static_cast<int>(flow.width()), h = static_cast<int>(flow.height());
  M.assign(static_cast<std::size_t>(w) * h * 5, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = flow.dx.at(x, y), dy = flow.dy.at(x, y);
      double fx = x + dx, fy = y + dy;
      const int x1 = static_cast<int>(std::floor(fx)), y1 = static_cast<int>(std::floor(fy));
      fx -= x1;
      fy -= y1;
      const double* r0 = R0.data() + (static_cast<std::size_t>(y) * w + x) * 5;
      double r2, r3, r4, r5, r6;
      // Sample positions on the last row/column are still inside the frame.
      if (x1 >= 0 && y1 >= 0 && (x1 < w - 1 || (x1 == w - 1 && fx == 0)) &&
          (y1 < h - 1 || (y1 == h - 1 && fy == 0))) {
        const double a00 = (1 - fx) * (1 - fy), a01 = fx * (1 - fy), a10 = (1 - fx) * fy, a11 = fx * fy;
        const double* p = R1.data() + (static_cast<std::size_t>(y1) * w + x1) * 5;
        const std::size_t dx5 = x1 < w - 1 ? 5 : 0;
        const std::size_t step = y1 < h - 1 ? static_cast<std::size_t>(w) * 5 : 0;
        auto interp = [&](int c) {
          return a00 * p[c] + a01 * p[c + dx5] + a10 * p[step + c] + a11 * p[step + c + dx5];
        };
        r2 = interp(0);
        r3 = interp(1);
        r4 = (r0[2] + interp(2)) * 0.5;
        r5 = (r0[3] + interp(3)) * 0.5;
        r6 = (r0[4] + interp(4)) * 0.25;
      } else {
        r2 = r3 = 0;
        r4 = r0[2];
        r5 = r0[3];
        r6 = r0[4] * 0.5;
      }
      r2 = (r0[0] - r2) * 0.5;
      r3 = (r0[1] - r3) * 0.5;
      r2 += r4 * dy + r6 * dx;
      r3 += r6 * dy + r5 * dx;
      double scale = 1.0;
      if (x < kBorder) scale *= kBorderWeight[x];
      if (x >= w - kBorder) scale *= kBorderWeight[w - x - 1];
      if (y < kBorder) scale *= kBorderWeight[y];
      if (y >= h - kBorder) scale *= kBorderWeight[h - y - 1];
      r2 *= scale;
      r3 *= scale;
      r4 *= scale;
      r5 *= scale;
      r6 *= scale;
      double* m = M.data() + (static_cast<std::size_t>(y) * w + x) * 5;
      m[0] = r4 * r4 + r6 * r6;
      m[1] = (r4 + r5) * r6;
      m[2] = r5 * r5 + r6 * r6;
      m[3] = r4 * r2 + r6 * r3;
      m[4] = r6 * r2 + r5 * r3;
    }
  }
}

/// Box-averages M over the window and solves the 2x2 system per pixel.
void update_flow_blur(const std::vector<double>& M, int winsize, FlowField& flow) {
  const int w = static_cast<int>(flow.width()), h = static_cast<int>(flow.height());
  const int m = winsize / 2;
  std::vector<double> vsum(static_cast<std::size_t>(w) * 5);
  std::vector<double> hsum(5);
  const double scale = 1.0 / (static_cast<double>(winsize) * winsize);
  for (int y = 0; y < h; ++y) {
    std::fill(vsum.begin(), vsum.end(), 0.0);
    for (int k = -m; k <= m; ++k) {
      const double* row = M.data() + static_cast<std::size_t>(clamp_index(y + k, h)) * w * 5;
      for (int i = 0; i < w * 5; ++i) vsum[i] += row[i];
    }
    for (int x = 0; x < w; ++x) {
      std::fill(hsum.begin(), hsum.end(), 0.0);
      for (int k = -m; k <= m; ++k) {
        const double* p = vsum.data() + clamp_index(x + k, w) * 5;
        for (int c = 0; c < 5; ++c) hsum[c] += p[c];
      }
      const double g11 = hsum[0] * scale, g12 = hsum[1] * scale, g22 = hsum[2] * scale;
      const double h1 = hsum[3] * scale, h2 = hsum[4] * scale;
      const double idet = 1.0 / (g11 * g22 - g12 * g12 + 1e-3);
      flow.dx.at(x, y) = (g11 * h2 - g12 * h1) * idet;
      flow.dy.at(x, y) = (g22 * h1 - g12 * h2) * idet;
    }
  }
}

void check_farneback(const FarnebackParams& p) {
  if (p.levels < 0 || !(p.pyr_scale > 0 && p.pyr_scale < 1) || p.winsize < 1 || p.iterations < 1 ||
      p.poly_n < 1 || !(p.poly_sigma > 0)) {
    throw ConfigError("invalid Farneback parameters");
  }
}

}  // namespace

double FlowField::max_magnitude() const {
  double m = 0;
  for (std::size_t i = 0; i < dx.data.size(); ++i) m = std::max(m, std::hypot(dx.data[i], dy.data[i]));
  return m;
}

FlowField farneback_flow(const Plane<float>& prev, const Plane<float>& next, const FarnebackParams& params) {
  if (prev.width != next.width || prev.height != next.height) {
    throw ShapeError("flow frames differ in size");
  }
  if (prev.width == 0 || prev.height == 0) throw ShapeError("empty flow frame");
  check_farneback(params);
  const Image src[2] = {to_double(prev), to_double(next)};
  const std::size_t w = prev.width, h = prev.height;

  int levels = 0;
  double s = 1.0;
  for (; levels < params.levels; ++levels) {
    s *= params.pyr_scale;
    if (static_cast<double>(std::min(w, h)) * s < static_cast<double>(params.min_level_size)) break;
  }

  const PolyBasis basis = prepare_gaussian(params.poly_n, params.poly_sigma);
  FlowField flow;
  for (int k = levels; k >= 0; --k) {
    const double scale = std::pow(params.pyr_scale, k);
    const double sigma = (1.0 / scale - 1.0) * 0.5;
    const int ksize = std::max(3, static_cast<int>(std::lround(sigma * 5)) | 1);
    const auto lw = static_cast<std::size_t>(std::lround(w * scale));
    const auto lh = static_cast<std::size_t>(std::lround(h * scale));

    FlowField level;
    if (k == levels) {
      level.dx = Image(lw, lh, 0.0);
      level.dy = Image(lw, lh, 0.0);
    } else {
      level.dx = resize_linear(flow.dx, lw, lh);
      level.dy = resize_linear(flow.dy, lw, lh);
      for (auto& v : level.dx.data) v /= params.pyr_scale;
      for (auto& v : level.dy.data) v /= params.pyr_scale;
    }
    std::vector<double> R[2];
    for (int i = 0; i < 2; ++i) {
      const Image level_img = resize_linear(gaussian_blur(src[i], ksize, sigma), lw, lh);
      R[i] = poly_expansion(level_img, params.poly_n, basis);
    }
    std::vector<double> M;
    update_matrices(R[0], R[1], level, M);
    for (int it = 0; it < params.iterations; ++it) {
      update_flow_blur(M, params.winsize, level);
      if (it + 1 < params.iterations) update_matrices(R[0], R[1], level, M);
    }
    flow = std::move(level);
  }
  return flow;
}

FlowField farneback_flow(const RgbImage& prev, const RgbImage& next, const FarnebackParams& params) {
  return farneback_flow(to_gray(prev), to_gray(next), params);
}

double flow_hue_degrees(double dx, double dy) {
  double deg = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
  if (deg < 0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg;
}

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 360.0) / 60.0;
  const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  auto to8 = [](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0)); };
  return {to8(r + m), to8(g + m), to8(b + m)};
}

RgbImage flow_to_rgb(const FlowField& flow) {
  RgbImage out(flow.width(), flow.height());
  const double max_mag = flow.max_magnitude();
  if (!(max_mag > 0)) return out;
  for (std::size_t y = 0; y < flow.height(); ++y)
    for (std::size_t x = 0; x < flow.width(); ++x) {
      const double dx = flow.dx.at(x, y), dy = flow.dy.at(x, y);
      const auto rgb = hsv_to_rgb(flow_hue_degrees(dx, dy), 1.0, std::hypot(dx, dy) / max_mag);
      std::copy(rgb.begin(), rgb.end(), out.pixel(x, y));
    }
  return out;
}

// ---- SGM -------------------------------------------------------------------

std::size_t DisparityMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.data.begin(), valid.data.end(), std::uint8_t{1}));
}

DisparityMap sgbm_disparity(const Plane<float>& left, const Plane<float>& right, const SgbmParams& params) {
  if (left.width != right.width || left.height != right.height) {
    throw ShapeError("stereo views differ in size");
  }
  const int w = static_cast<int>(left.width), h = static_cast<int>(left.height);
  if (w == 0 || h == 0) throw ShapeError("empty stereo view");
  if (params.max_disparity < 0 || params.max_disparity >= w) {
    throw ConfigError("max_disparity must be in [0, width)");
  }
  if (params.block < 1 || params.block % 2 == 0) throw ConfigError("block size must be positive and odd");
  if (params.p1 < 0 || params.p2 < params.p1) throw ConfigError("need 0 <= P1 <= P2");
  const int D = params.max_disparity + 1;
  const int r = params.block / 2;
  const float kOutside = 255.0f;

  // Block SAD cost volume, layout [(y * w + x) * D + d].
  std::vector<float> C(static_cast<std::size_t>(w) * h * D);
  std::vector<float> diff(static_cast<std::size_t>(w) * h), tmp(diff.size());
  for (int d = 0; d < D; ++d) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        diff[y * w + x] = x - d >= 0 ? std::abs(left.at(x, y) - right.at(x - d, y)) : kOutside;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float acc = 0;
        for (int k = -r; k <= r; ++k) acc += diff[y * w + clamp_index(x + k, w)];
        tmp[y * w + x] = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float acc = 0;
        for (int k = -r; k <= r; ++k) acc += tmp[clamp_index(y + k, h) * w + x];
        C[(static_cast<std::size_t>(y) * w + x) * D + d] = acc;
      }
  }

  // Aggregate along 4 directions into S.
  std::vector<float> S(C.size(), 0.0f);
  const float P1 = static_cast<float>(params.p1), P2 = static_cast<float>(params.p2);
  std::vector<float> Lprev(D), Lcur(D);
  auto walk = [&](int x0, int y0, int sx, int sy, int len) {
    for (int i = 0; i < len; ++i) {
      const int x = x0 + i * sx, y = y0 + i * sy;
      const std::size_t base = (static_cast<std::size_t>(y) * w + x) * D;
      if (i == 0) {
        for (int d = 0; d < D; ++d) Lcur[d] = C[base + d];
      } else {
        const float mprev = *std::min_element(Lprev.begin(), Lprev.end());
        for (int d = 0; d < D; ++d) {
          float best = std::min(Lprev[d], mprev + P2);
          if (d > 0) best = std::min(best, Lprev[d - 1] + P1);
          if (d + 1 < D) best = std::min(best, Lprev[d + 1] + P1);
          Lcur[d] = C[base + d] + best - mprev;
        }
      }
      for (int d = 0; d < D; ++d) S[base + d] += Lcur[d];
      std::swap(Lprev, Lcur);
    }
  };
  for (int y = 0; y < h; ++y) {
    walk(0, y, 1, 0, w);
    walk(w - 1, y, -1, 0, w);
  }
  for (int x = 0; x < w; ++x) {
    walk(x, 0, 0, 1, h);
    walk(x, h - 1, 0, -1, h);
  }

  DisparityMap out;
  out.max_disparity = params.max_disparity;
  out.disparity = Plane<double>(w, h, 0.0);
  out.valid = Plane<std::uint8_t>(w, h, 0);
  std::vector<int> best_left(static_cast<std::size_t>(w) * h, -1);
  const float uniq = static_cast<float>(100 - params.uniqueness_ratio);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float* s = S.data() + (static_cast<std::size_t>(y) * w + x) * D;
      const int dmax = std::min(D - 1, x);  // right pixel must exist
      int best = 0;
      for (int d = 1; d <= dmax; ++d)
        if (s[d] < s[best]) best = d;
      // Untextured blocks: the raw cost barely changes across disparities.
      const float* c = C.data() + (static_cast<std::size_t>(y) * w + x) * D;
      const int dfull = std::max(0, std::min(D - 1, x - r));
      const auto [cmin, cmax] = std::minmax_element(c, c + dfull + 1);
      bool ok = *cmax - *cmin >= static_cast<float>(params.texture_threshold);
      for (int d = 0; d <= dmax && ok; ++d) {
        if (std::abs(d - best) > 1 && s[d] * uniq <= s[best] * 100.0f) ok = false;
      }
      if (!ok) continue;
      best_left[y * w + x] = best;
      double disp = best;
      if (params.subpixel && best > 0 && best < dmax) {
        const double denom = s[best - 1] + s[best + 1] - 2.0 * s[best];
        if (denom > 0) disp += (s[best - 1] - s[best + 1]) / (2.0 * denom);
      }
      out.disparity.at(x, y) = std::clamp(disp, 0.0, static_cast<double>(params.max_disparity));
      out.valid.at(x, y) = 1;
    }

  // Left-right consistency: best disparity seen from each right pixel.
  std::vector<int> best_right(w);
  for (int y = 0; y < h; ++y) {
    for (int xr = 0; xr < w; ++xr) {
      int best = -1;
      float bs = std::numeric_limits<float>::infinity();
      for (int d = 0; d < D && xr + d < w; ++d) {
        const float v = S[(static_cast<std::size_t>(y) * w + xr + d) * D + d];
        if (v < bs) {
          bs = v;
          best = d;
        }
      }
      best_right[xr] = best;
    }
    for (int x = 0; x < w; ++x) {
      const int d = best_left[y * w + x];
      if (d < 0) continue;
      if (std::abs(best_right[x - d] - d) > params.lr_max_diff) {
        out.valid.at(x, y) = 0;
        out.disparity.at(x, y) = 0.0;
      }
    }
  }
  return out;
}

DisparityMap sgbm_disparity(const RgbImage& left, const RgbImage& right, const SgbmParams& params) {
  return sgbm_disparity(to_gray(left), to_gray(right), params);
}

}  // namespace sickfuse
