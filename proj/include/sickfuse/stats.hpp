#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sickfuse/image.hpp"
#include "sickfuse/labeling.hpp"

namespace sickfuse {

inline constexpr double kSicknessThreshold = 2.0;  // FMS <= 2 is non-sick

/// Reduces a window's raw (hold-filled) eye (L,9) and head (L,4) rows to one value.
using FeatureSelector = std::function<double(const Tensor& eye, const Tensor& head)>;

struct StatFeature {
  std::string name;
  FeatureSelector select;
};

/// pupil_left, pupil_right, pupil_mean, gaze_x, gaze_y, gaze_dispersion,
/// convergence, head_jitter.
const std::vector<StatFeature>& standard_features();
const StatFeature& find_feature(const std::string& name);

struct PairedGroups {
  Simulation simulation = Simulation::BeachCity;
  std::vector<std::string> participants;  // sorted
  std::vector<double> nonsick;
  std::vector<double> sick;
  std::vector<std::string> excluded;  // participants lacking one condition
};

/// Per-participant means of the feature over windows of `simulation` with
/// fms <= threshold (non-sick) and fms > threshold (sick).
PairedGroups group_by_sickness(const std::vector<const WindowData*>& windows, Simulation simulation,
                               const FeatureSelector& feature, double threshold = kSicknessThreshold);

struct TTestResult {
  double t = 0.0;
  std::size_t df = 0;
  double p = 1.0;
  std::size_t n = 0;
  double mean_a = 0.0;
  double sd_a = 0.0;
  double mean_b = 0.0;
  double sd_b = 0.0;
};

/// Paired two-sided t-test on a - b with the sample (n-1) standard deviation.
/// Throws ContractError for unequal lengths or n < 2 and DegenerateError when
/// the differences have zero variance.
TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

/// Row of the per-simulation table; `result` is empty when fewer than two
/// participants have both conditions or the differences are degenerate.
struct StatRow {
  std::string feature;
  PairedGroups groups;
  std::optional<TTestResult> result;
  std::string note;
};

std::vector<StatRow> analyze_simulation(const std::vector<const WindowData*>& windows, Simulation simulation,
                                        double threshold = kSicknessThreshold);

/// Columns feature,mean_nonsick,sd_nonsick,mean_sick,sd_sick,t,df,p (+ n, note).
void write_stats_csv(const std::vector<StatRow>& rows, const std::filesystem::path& path);

/// Normalized gaze point of one eye row: mean of the two gaze vectors' x and y.
std::array<double, 2> gaze_point(const Tensor& eye, std::size_t row);

/// Unnormalized G x G histogram over [-1, 1]^2; out-of-range points go to edge bins.
Plane<double> gaze_histogram(const std::vector<std::array<double, 2>>& points, std::size_t grid);

/// Histogram scaled by its maximum bin to [0, 1]; all zero for empty input.
Plane<double> gaze_heatmap(const std::vector<std::array<double, 2>>& points, std::size_t grid);

struct GazeSplit {
  std::vector<std::array<double, 2>> nonsick;
  std::vector<std::array<double, 2>> sick;
};

/// Gaze points of each window's rows, split by the window's FMS.
GazeSplit split_gaze(const std::vector<const WindowData*>& windows, double threshold = kSicknessThreshold);

}  // namespace sickfuse
