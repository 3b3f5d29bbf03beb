#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "sickfuse/image.hpp"

namespace sickfuse {

// ---- z-score ---------------------------------------------------------------

struct ZScoreStats {
  double mean = 0.0;
  double stddev = 1.0;  // population

  friend bool operator==(const ZScoreStats&, const ZScoreStats&) = default;
};

struct ZScoreResult {
  std::vector<double> values;
  ZScoreStats stats;
};

/// Throws ContractError for fewer than 2 values, ZeroVarianceError when σ = 0.
ZScoreResult zscore_normalize(const std::vector<double>& column);
ZScoreStats zscore_fit(const std::vector<double>& column);
double zscore_apply(double x, const ZScoreStats& stats);

// ---- optical flow ----------------------------------------------------------

struct FlowField {
  Plane<double> dx;
  Plane<double> dy;

  std::size_t width() const { return dx.width; }
  std::size_t height() const { return dx.height; }
  double max_magnitude() const;
};

struct FarnebackParams {
  int levels = 3;
  double pyr_scale = 0.5;
  int winsize = 15;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.1;
  // Coarsest pyramid level keeps at least this many pixels on its short side.
  std::size_t min_level_size = 32;
};

/// Dense flow from `prev` to `next`: prev(x, y) ≈ next(x + dx, y + dy).
/// Throws ShapeError on size mismatch.
FlowField farneback_flow(const Plane<float>& prev, const Plane<float>& next,
                         const FarnebackParams& params = {});
FlowField farneback_flow(const RgbImage& prev, const RgbImage& next, const FarnebackParams& params = {});

/// Hue in degrees [0, 360) of a flow vector, measured from +x towards +y.
double flow_hue_degrees(double dx, double dy);

/// HSV encoding: hue = direction, saturation = 1, value = magnitude / frame max.
RgbImage flow_to_rgb(const FlowField& flow);

/// Standard HSV (h in degrees, s and v in [0, 1]) to 8-bit RGB.
std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v);

// ---- stereo disparity ------------------------------------------------------

struct SgbmParams {
  int block = 5;
  int max_disparity = 64;
  int p1 = 8 * 25;
  int p2 = 32 * 25;
  int uniqueness_ratio = 10;  // percent
  int lr_max_diff = 1;
  // Minimum spread of the raw block cost over disparities; flatter blocks are
  // ambiguous and marked invalid.
  int texture_threshold = 25;
  bool subpixel = true;
};

struct DisparityMap {
  Plane<double> disparity;     // pixels, in [0, max_disparity]; 0 where invalid
  Plane<std::uint8_t> valid;   // 1 = valid
  int max_disparity = 0;

  std::size_t width() const { return disparity.width; }
  std::size_t height() const { return disparity.height; }
  std::size_t valid_count() const;
};

/// Semi-global matching over 4 scanline directions. Left pixel x matches right
/// pixel x - d. Throws ShapeError on size mismatch, ConfigError when
/// max_disparity >= width or the block is not a positive odd size.
DisparityMap sgbm_disparity(const Plane<float>& left, const Plane<float>& right,
                            const SgbmParams& params = {});
DisparityMap sgbm_disparity(const RgbImage& left, const RgbImage& right, const SgbmParams& params = {});

}  // namespace sickfuse
