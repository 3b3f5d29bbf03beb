#include "sickfuse/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "sickfuse/errors.hpp"
#include "text_util.hpp"

namespace sickfuse {

namespace {

double column_mean(const Tensor& t, std::size_t col) {
  const std::size_t rows = t.dim(0), cols = t.dim(1);
  double sum = 0.0;
  for (std::size_t r = 0; r < rows; ++r) sum += t[r * cols + col];
  return sum / static_cast<double>(rows);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double gaze_dispersion(const Tensor& eye) {
  const std::size_t rows = eye.dim(0);
  double mx = 0.0, my = 0.0;
  std::vector<std::array<double, 2>> pts(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    pts[r] = gaze_point(eye, r);
    mx += pts[r][0];
    my += pts[r][1];
  }
  mx /= static_cast<double>(rows);
  my /= static_cast<double>(rows);
  double ss = 0.0;
  for (const auto& p : pts) ss += (p[0] - mx) * (p[0] - mx) + (p[1] - my) * (p[1] - my);
  return std::sqrt(ss / static_cast<double>(rows));
}

/// Mean rotation angle between consecutive head orientations.
double head_jitter(const Tensor& head) {
  const std::size_t rows = head.dim(0);
  if (rows < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t r = 1; r < rows; ++r) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      dot += head[(r - 1) * 4 + c] * head[r * 4 + c];
      na += head[(r - 1) * 4 + c] * head[(r - 1) * 4 + c];
      nb += head[r * 4 + c] * head[r * 4 + c];
    }
    const double cosv = std::min(1.0, std::abs(dot) / std::sqrt(na * nb));
    sum += 2.0 * std::acos(cosv);
  }
  return sum / static_cast<double>(rows - 1);
}

std::vector<StatFeature> make_features() {
  return {
      {"pupil_left", [](const Tensor& e, const Tensor&) { return column_mean(e, 0); }},
      {"pupil_right", [](const Tensor& e, const Tensor&) { return column_mean(e, 1); }},
      {"pupil_mean", [](const Tensor& e, const Tensor&) { return 0.5 * (column_mean(e, 0) + column_mean(e, 1)); }},
      {"gaze_x", [](const Tensor& e, const Tensor&) { return 0.5 * (column_mean(e, 2) + column_mean(e, 5)); }},
      {"gaze_y", [](const Tensor& e, const Tensor&) { return 0.5 * (column_mean(e, 3) + column_mean(e, 6)); }},
      {"gaze_dispersion", [](const Tensor& e, const Tensor&) { return gaze_dispersion(e); }},
      {"convergence", [](const Tensor& e, const Tensor&) { return column_mean(e, 8); }},
      {"head_jitter", [](const Tensor&, const Tensor& h) { return head_jitter(h); }},
  };
}

}  // namespace

const std::vector<StatFeature>& standard_features() {
  static const std::vector<StatFeature> features = make_features();
  return features;
}

const StatFeature& find_feature(const std::string& name) {
  for (const auto& f : standard_features()) {
    if (f.name == name) return f;
  }
  throw ConfigError("unknown feature '" + name + "'");
}

PairedGroups group_by_sickness(const std::vector<const WindowData*>& windows, Simulation simulation,
                               const FeatureSelector& feature, double threshold) {
  struct Acc {
    double sum[2] = {0.0, 0.0};
    std::size_t n[2] = {0, 0};
  };
  std::map<std::string, Acc> acc;
  for (const WindowData* w : windows) {
    if (w->simulation != simulation) continue;
    const int sick = w->fms > threshold ? 1 : 0;
    Acc& a = acc[w->participant];
    a.sum[sick] += feature(w->eye, w->head);
    ++a.n[sick];
  }
  PairedGroups g;
  g.simulation = simulation;
  for (const auto& [participant, a] : acc) {
    if (a.n[0] == 0 || a.n[1] == 0) {
      g.excluded.push_back(participant);
      continue;
    }
    g.participants.push_back(participant);
    g.nonsick.push_back(a.sum[0] / static_cast<double>(a.n[0]));
    g.sick.push_back(a.sum[1] / static_cast<double>(a.n[1]));
  }
  return g;
}

TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractError("paired_ttest: series lengths differ");
  if (a.size() < 2) throw ContractError("paired_ttest: need at least 2 pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double md = mean_of(d);
  double ss = 0.0;
  for (double x : d) ss += (x - md) * (x - md);
  // Relative test: differences like (a + c) - (b + c) carry rounding noise.
  double scale = 0.0;
  for (double x : d) scale = std::max(scale, std::abs(x));
  if (!(ss > 0.0) || std::sqrt(ss / static_cast<double>(n)) <= 1e-14 * scale) {
    throw DegenerateError("paired_ttest: differences have zero variance");
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  TTestResult r;
  r.n = n;
  r.df = n - 1;
  r.t = md / (sd / std::sqrt(static_cast<double>(n)));
  r.p = student_t_two_sided_p(r.t, static_cast<double>(r.df));
  r.mean_a = mean_of(a);
  r.sd_a = sample_sd(a);
  r.mean_b = mean_of(b);
  r.sd_b = sample_sd(b);
  return r;
}

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) return h;
  }
  throw DegenerateError("incomplete_beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ContractError("incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw RangeError("incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw ContractError("student_t_two_sided_p: df must be positive");
  if (std::isnan(t)) throw ContractError("student_t_two_sided_p: t is NaN");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(incomplete_beta(0.5 * df, 0.5, x), 0.0, 1.0);
}

std::vector<StatRow> analyze_simulation(const std::vector<const WindowData*>& windows, Simulation simulation,
                                        double threshold) {
  std::vector<StatRow> rows;
  for (const auto& f : standard_features()) {
    StatRow row;
    row.feature = f.name;
    row.groups = group_by_sickness(windows, simulation, f.select, threshold);
    if (row.groups.participants.size() < 2) {
      row.note = "fewer than 2 paired participants";
    } else {
      try {
        row.result = paired_ttest(row.groups.nonsick, row.groups.sick);
      } catch (const DegenerateError&) {
        row.note = "zero-variance differences";
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_stats_csv(const std::vector<StatRow>& rows, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  out << "feature,mean_nonsick,sd_nonsick,mean_sick,sd_sick,t,df,p,n,note\n";
  for (const auto& row : rows) {
    out << row.feature << ',';
    if (row.result) {
      const auto& r = *row.result;
      out << detail::format_double(r.mean_a) << ',' << detail::format_double(r.sd_a) << ','
          << detail::format_double(r.mean_b) << ',' << detail::format_double(r.sd_b) << ','
          << detail::format_double(r.t) << ',' << r.df << ',' << detail::format_double(r.p) << ',' << r.n;
    } else {
      out << ",,,,,,," << row.groups.participants.size();
    }
    out << ',' << row.note << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::array<double, 2> gaze_point(const Tensor& eye, std::size_t row) {
  const std::size_t cols = eye.dim(1);
  if (cols != kEyeFeatures) throw ShapeError("gaze_point: eye rows must have 9 features");
  const double* r = eye.data().data() + row * cols;
  return {0.5 * (r[2] + r[5]), 0.5 * (r[3] + r[6])};
}

Plane<double> gaze_histogram(const std::vector<std::array<double, 2>>& points, std::size_t grid) {
  if (grid == 0) throw ConfigError("gaze_histogram: grid must be >= 1");
  Plane<double> h(grid, grid, 0.0);
  const auto bin = [grid](double v) {
    const double pos = (v + 1.0) / 2.0 * static_cast<double>(grid);
    if (!(pos > 0.0)) return std::size_t{0};  // also NaN
    return std::min(grid - 1, static_cast<std::size_t>(pos));
  };
  // Row 0 is the top of the image: y = +1.
  for (const auto& p : points) h.at(bin(p[0]), grid - 1 - bin(p[1])) += 1.0;
  return h;
}

Plane<double> gaze_heatmap(const std::vector<std::array<double, 2>>& points, std::size_t grid) {
  Plane<double> h = gaze_histogram(points, grid);
  const double peak = *std::max_element(h.data.begin(), h.data.end());
  if (peak > 0.0) {
    for (double& v : h.data) v /= peak;
  }
  return h;
}

GazeSplit split_gaze(const std::vector<const WindowData*>& windows, double threshold) {
  GazeSplit out;
  for (const WindowData* w : windows) {
    auto& dst = w->fms > threshold ? out.sick : out.nonsick;
    for (std::size_t r = 0; r < w->eye.dim(0); ++r) dst.push_back(gaze_point(w->eye, r));
  }
  return out;
}

}  // namespace sickfuse
