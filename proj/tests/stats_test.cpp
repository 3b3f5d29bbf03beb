#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sickfuse/errors.hpp"
#include "sickfuse/stats.hpp"
#include "test_util.hpp"

namespace sickfuse {
namespace {

// Two-sided tail by Simpson integration of the t density over [0, |t|].
double quadrature_p(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * std::numbers::pi);
  auto pdf = [&](double x) { return c * std::pow(1.0 + x * x / df, -(df + 1) / 2); };
  const double a = std::abs(t);
  const int n = 200000;
  const double h = a / n;
  double s = pdf(0) + pdf(a);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * pdf(i * h);
  return 1.0 - 2.0 * s * h / 3.0;
}

WindowData window(const std::string& participant, Simulation sim, double fms, double pupil) {
  WindowData w;
  w.participant = participant;
  w.simulation = sim;
  w.fms = fms;
  std::vector<double> eye(2 * 9, 0.0);
  for (std::size_t r = 0; r < 2; ++r) {
    eye[r * 9 + 0] = pupil;
    eye[r * 9 + 1] = pupil;
    eye[r * 9 + 4] = 1.0;
    eye[r * 9 + 7] = 1.0;
  }
  w.eye = Tensor({2, 9}, eye);
  w.head = Tensor({2, 4}, std::vector<double>{0, 0, 0, 1, 0, 0, 0, 1});
  return w;
}

TEST(PairedTTest, HandComputedFixture) {
  const TTestResult r = paired_ttest({1, 2, 4}, {0, 1, 1});
  EXPECT_NEAR(r.t, 2.5, 1e-12);
  EXPECT_EQ(r.df, 2u);
  EXPECT_EQ(r.n, 3u);
  EXPECT_NEAR(r.p, quadrature_p(2.5, 2), 1e-6);
  EXPECT_NEAR(r.mean_a, 7.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.sd_b, std::sqrt(1.0 / 3.0), 1e-12);
}

TEST(PairedTTest, ZeroMeanDifference) {
  const TTestResult r = paired_ttest({1, 2}, {2, 1});
  EXPECT_EQ(r.t, 0.0);
  EXPECT_NEAR(r.p, 1.0, 1e-12);
}

TEST(PairedTTest, Errors) {
  EXPECT_THROW(paired_ttest({1, 2, 3}, {0, 1, 2}), DegenerateError);
  EXPECT_THROW(paired_ttest({1, 2}, {1}), ContractError);
  EXPECT_THROW(paired_ttest({1}, {0}), ContractError);
}

TEST(PairedTTest, PValueMatchesQuadrature) {
  for (double df : {2.0, 10.0, 26.0}) {
    for (double t : {0.1, 0.7, 1.5, 2.056, 3.2, 6.0}) {
      EXPECT_NEAR(student_t_two_sided_p(t, df), quadrature_p(t, df), 1e-6) << df << " " << t;
      EXPECT_DOUBLE_EQ(student_t_two_sided_p(-t, df), student_t_two_sided_p(t, df));
    }
  }
  EXPECT_EQ(student_t_two_sided_p(0.0, 5.0), 1.0);
}

TEST(PairedTTest, IncompleteBetaKnownValues) {
  EXPECT_NEAR(incomplete_beta(1, 1, 0.3), 0.3, 1e-14);
  EXPECT_NEAR(incomplete_beta(2, 1, 0.5), 0.25, 1e-14);
  EXPECT_NEAR(incomplete_beta(0.5, 0.5, 0.5), 0.5, 1e-14);
  EXPECT_THROW(incomplete_beta(1, 1, 1.5), RangeError);
}

TEST(PairedTTest, AntisymmetricAndLocationInvariant) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(12), b(12);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = z(rng);
      b[i] = z(rng) + 0.3;
    }
    const TTestResult r = paired_ttest(a, b);
    const TTestResult s = paired_ttest(b, a);
    EXPECT_NEAR(s.t, -r.t, 1e-12);
    EXPECT_NEAR(s.p, r.p, 1e-12);
    auto a2 = a, b2 = b;
    for (auto& v : a2) v += 5.0;
    for (auto& v : b2) v += 5.0;
    const TTestResult u = paired_ttest(a2, b2);
    EXPECT_NEAR(u.t, r.t, 1e-12);
    EXPECT_NEAR(u.p, r.p, 1e-12);
    EXPECT_GE(r.p, 0.0);
    EXPECT_LE(r.p, 1.0);
  }
}

TEST(GroupBySickness, DirectAveraging) {
  const std::vector<WindowData> w = {window("P01", Simulation::BeachCity, 1, 3.0),
                                     window("P01", Simulation::BeachCity, 5, 2.0)};
  const auto g = group_by_sickness({&w[0], &w[1]}, Simulation::BeachCity, find_feature("pupil_left").select);
  ASSERT_EQ(g.participants, std::vector<std::string>{"P01"});
  EXPECT_DOUBLE_EQ(g.nonsick[0], 3.0);
  EXPECT_DOUBLE_EQ(g.sick[0], 2.0);
}

TEST(GroupBySickness, MissingConditionExcludedAndBoundaryIsNonSick) {
  const std::vector<WindowData> w = {
      window("P01", Simulation::BeachCity, 2, 3.0), window("P01", Simulation::BeachCity, 1, 3.5),
      window("P02", Simulation::BeachCity, 0, 3.0), window("P02", Simulation::BeachCity, 3, 2.0),
      window("P02", Simulation::BeachCity, 7, 1.0), window("P02", Simulation::SeaVoyage, 9, 1.0)};
  std::vector<const WindowData*> ptrs;
  for (const auto& x : w) ptrs.push_back(&x);
  const auto g = group_by_sickness(ptrs, Simulation::BeachCity, find_feature("pupil_mean").select);
  EXPECT_EQ(g.participants, std::vector<std::string>{"P02"});
  EXPECT_EQ(g.excluded, std::vector<std::string>{"P01"});
  EXPECT_DOUBLE_EQ(g.sick[0], 1.5);
}

TEST(GroupBySickness, AllPairedGivesDfNMinusOne) {
  std::vector<WindowData> w;
  for (int p = 1; p <= 27; ++p) {
    const std::string id = "P" + std::string(p < 10 ? "0" : "") + std::to_string(p);
    w.push_back(window(id, Simulation::RoadSide, 1, 3.0 + 0.01 * p));
    w.push_back(window(id, Simulation::RoadSide, 6, 2.8 + 0.013 * p * (p % 3)));
  }
  std::vector<const WindowData*> ptrs;
  for (const auto& x : w) ptrs.push_back(&x);
  const auto rows = analyze_simulation(ptrs, Simulation::RoadSide);
  const auto it = std::find_if(rows.begin(), rows.end(), [](const StatRow& r) { return r.feature == "pupil_left"; });
  ASSERT_NE(it, rows.end());
  ASSERT_TRUE(it->result.has_value());
  EXPECT_EQ(it->result->df, 26u);

  sickfuse::testing::TempDir dir("stats_csv");
  write_stats_csv(rows, dir / "stats.csv");
  const std::string text = sickfuse::testing::read_text(dir / "stats.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "feature,mean_nonsick,sd_nonsick,mean_sick,sd_sick,t,df,p,n,note");
  EXPECT_NE(text.find("pupil_left,"), std::string::npos);
}

TEST(GazeHeatmap, SingleHotCenterBin) {
  const std::vector<std::array<double, 2>> pts(50, {0.0, 0.0});
  const Plane<double> h = gaze_heatmap(pts, 64);
  double sum = 0.0;
  for (double v : h.data) sum += v;
  EXPECT_DOUBLE_EQ(sum, 1.0);
  EXPECT_DOUBLE_EQ(h.at(32, 31), 1.0);
}

TEST(GazeHeatmap, EmptyInputIsAllZero) {
  const Plane<double> h = gaze_heatmap({}, 16);
  EXPECT_TRUE(std::all_of(h.data.begin(), h.data.end(), [](double v) { return v == 0.0; }));
}

TEST(GazeHeatmap, OutOfRangeClampedAndTotalPreserved) {
  const std::vector<std::array<double, 2>> pts = {{-5, -5}, {5, 5}, {1.0, -1.0}, {0.1, 0.2}};
  const Plane<double> h = gaze_histogram(pts, 4);
  double sum = 0.0;
  for (double v : h.data) sum += v;
  EXPECT_DOUBLE_EQ(sum, 4.0);
  EXPECT_DOUBLE_EQ(h.at(0, 3), 1.0);  // bottom-left
  EXPECT_DOUBLE_EQ(h.at(3, 0), 1.0);  // top-right
  EXPECT_DOUBLE_EQ(h.at(3, 3), 1.0);  // bottom-right
}

TEST(GazeHeatmap, UniformSamplesFillBinsEvenly) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::array<double, 2>> pts(100000);
  for (auto& p : pts) p = {u(rng), u(rng)};
  const Plane<double> h = gaze_histogram(pts, 8);
  const double expected = 100000.0 / 64.0;
  for (double v : h.data) EXPECT_NEAR(v, expected, 0.2 * expected);
}

TEST(GazeHeatmap, SplitByWindowFms) {
  const std::vector<WindowData> w = {window("P01", Simulation::BeachCity, 1, 3.0),
                                     window("P01", Simulation::BeachCity, 5, 2.0)};
  const GazeSplit s = split_gaze({&w[0], &w[1]});
  EXPECT_EQ(s.nonsick.size(), 2u);
  EXPECT_EQ(s.sick.size(), 2u);
  EXPECT_EQ(s.sick[0], (std::array<double, 2>{0.0, 0.0}));  // forward gaze
}

}  // namespace
}  // namespace sickfuse
