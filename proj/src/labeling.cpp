#include "sickfuse/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sickfuse/errors.hpp"
#include "text_util.hpp"

namespace sickfuse {

using detail::format_double;

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::None: return "None";
    case Severity::Low: return "Low";
    case Severity::Medium: return "Medium";
    case Severity::High: return "High";
  }
  return "Unknown";
}

Severity parse_severity(std::string_view name) {
  for (int i = 0; i < 4; ++i) {
    if (to_string(static_cast<Severity>(i)) == name) return static_cast<Severity>(i);
  }
  throw ParseError("unknown severity '" + std::string(name) + "'");
}

double quantile_linear(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw EmptyError("quantile of an empty sequence");
  if (!(p >= 0.0 && p <= 1.0)) throw RangeError("quantile probability outside [0, 1]");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

QuantileThresholds compute_fms_quantiles(const std::vector<double>& scores) {
  if (scores.empty()) throw EmptyError("no FMS scores");
  if (scores.size() < 4) throw ContractError("quantiles need at least 4 FMS scores");
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  return {quantile_linear(sorted, 0.25), quantile_linear(sorted, 0.5), quantile_linear(sorted, 0.75)};
}

Severity classify_severity(double fms, const QuantileThresholds& q) {
  if (!(fms >= 0.0 && fms <= 10.0)) throw RangeError("FMS " + format_double(fms) + " outside [0, 10]");
  if (fms <= q.q1) return Severity::None;
  if (fms <= q.q2) return Severity::Low;
  if (fms <= q.q3) return Severity::Medium;
  return Severity::High;
}

// ---- windows -----------------------------------------------------------------

std::string window_id(const std::string& session_id, double t_report) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "@%08.3f", t_report);
  return session_id + buf;
}

std::string Window::id() const { return window_id(session->id(), t_report); }

Tensor Window::eye() const {
  Tensor out({length, kEyeFeatures});
  for (std::size_t i = 0; i < length; ++i) {
    const auto f = session->eye[begin_index() + i].features();
    std::copy(f.begin(), f.end(), out.data().begin() + i * kEyeFeatures);
  }
  return out;
}

Tensor Window::head() const {
  Tensor out({length, kHeadFeatures});
  for (std::size_t i = 0; i < length; ++i) {
    const auto f = session->head[begin_index() + i].features();
    std::copy(f.begin(), f.end(), out.data().begin() + i * kHeadFeatures);
  }
  return out;
}

WindowSet build_windows(std::shared_ptr<const SessionRecord> session, const BuildOptions& options) {
  if (!session || !session->aligned) throw ContractError("build_windows needs an aligned session");
  if (options.length == 0) throw ConfigError("window length must be positive");
  WindowSet out;
  const std::size_t n = session->eye.size();
  const auto budget = static_cast<std::size_t>(
      std::floor(options.max_invalid_fraction * static_cast<double>(options.length) + 1e-9));
  for (const auto& report : session->reports) {
    const double k_real = std::round(report.t * session->rate_hz);
    if (k_real < static_cast<double>(options.length - 1) || k_real >= static_cast<double>(n)) {
      out.dropped.push_back({report.t, report.score, "out_of_range"});
      continue;
    }
    Window w;
    w.session = session;
    w.end_index = static_cast<std::size_t>(k_real);
    w.length = options.length;
    w.t_report = report.t;
    w.fms = report.score;
    for (std::size_t i = w.begin_index(); i <= w.end_index; ++i) {
      w.invalid_eye += session->eye[i].valid ? 0 : 1;
      w.invalid_head += session->head[i].valid ? 0 : 1;
    }
    if (w.invalid_eye > budget || w.invalid_head > budget) {
      out.dropped.push_back({report.t, report.score,
                             "invalid_fraction eye=" + std::to_string(w.invalid_eye) +
                                 " head=" + std::to_string(w.invalid_head) + " of " +
                                 std::to_string(options.length)});
      continue;
    }
    out.windows.push_back(std::move(w));
  }
  return out;
}

void assign_severity(std::vector<Window>& windows, const QuantileThresholds& q) {
  for (auto& w : windows) w.severity = classify_severity(w.fms, q);
}

std::size_t count_segments(const std::vector<Window>& windows) {
  std::size_t total = 0;
  for (const auto& w : windows) {
    const double seconds = static_cast<double>(w.length) / w.session->rate_hz;
    total += static_cast<std::size_t>(std::floor(seconds + 1e-9));
  }
  return total;
}

// ---- model inputs ------------------------------------------------------------

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Video: return "video";
    case Modality::Flow: return "flow";
    case Modality::Disparity: return "disparity";
    case Modality::Eye: return "eye";
    case Modality::Head: return "head";
  }
  return "unknown";
}

Modality parse_modality(std::string_view name) {
  for (Modality m : kModalities) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown modality '" + std::string(name) + "'");
}

std::vector<std::size_t> select_indices(std::size_t length, std::size_t timestep, Selection selection) {
  if (timestep == 0) throw ConfigError("timestep must be positive");
  if (length < timestep) {
    throw ShortWindowError("window has " + std::to_string(length) + " samples, need " +
                           std::to_string(timestep));
  }
  std::vector<std::size_t> idx(timestep);
  for (std::size_t i = 0; i < timestep; ++i) {
    if (selection == Selection::Recent || timestep == 1) {
      idx[i] = length - timestep + i;
    } else {
      idx[i] = static_cast<std::size_t>(
          std::llround(static_cast<double>(i) * static_cast<double>(length - 1) / static_cast<double>(timestep - 1)));
    }
  }
  if (selection == Selection::UniformStride && timestep == 1) idx[0] = length - 1;
  return idx;
}

namespace {

bool wants(const InputOptions& o, Modality m) {
  return std::find(o.modalities.begin(), o.modalities.end(), m) != o.modalities.end();
}

void copy_rgb(const RgbImage& img, double* dst) {
  for (std::size_t i = 0; i < img.pixels.size(); ++i) dst[i] = img.pixels[i] / 255.0;
}

}  // namespace

WindowData materialize(const Window& window, const InputOptions& options) {
  const SessionRecord& s = *window.session;
  WindowData out;
  out.session_id = s.id();
  out.id = window.id();
  out.participant = s.participant_id;
  out.simulation = s.simulation;
  out.t_report = window.t_report;
  out.fms = window.fms;
  out.eye = window.eye();
  out.head = window.head();

  const bool any_frames = wants(options, Modality::Video) || wants(options, Modality::Flow) ||
                          wants(options, Modality::Disparity);
  if (!any_frames) return out;
  if (!s.has_frames()) throw MissingStreamError(s.id() + ": frame modality requested but no frames");
  const auto idx = select_indices(window.length, options.timestep, options.selection);
  const std::size_t T = idx.size();
  const std::size_t W = s.frames.front().left.width, H = s.frames.front().left.height;
  const std::size_t plane3 = W * H * 3, plane1 = W * H;

  if (wants(options, Modality::Video)) {
    Tensor video({T, H, W, 3});
    for (std::size_t i = 0; i < T; ++i)
      copy_rgb(s.frames[window.begin_index() + idx[i]].left, video.data().data() + i * plane3);
    out.frames[Modality::Video] = std::move(video);
  }
  if (wants(options, Modality::Flow)) {
    Tensor flow({T, H, W, 3});
    for (std::size_t i = 0; i < T; ++i) {
      const std::size_t g = window.begin_index() + idx[i];
      const std::size_t prev = g > 0 ? g - 1 : g;
      const auto field = farneback_flow(s.frames[prev].left, s.frames[g].left, options.flow);
      copy_rgb(flow_to_rgb(field), flow.data().data() + i * plane3);
    }
    out.frames[Modality::Flow] = std::move(flow);
  }
  if (wants(options, Modality::Disparity)) {
    Tensor disp({T, H, W, 1});
    const double scale = options.disparity.max_disparity > 0 ? 1.0 / options.disparity.max_disparity : 0.0;
    for (std::size_t i = 0; i < T; ++i) {
      const auto& f = s.frames[window.begin_index() + idx[i]];
      const auto map = sgbm_disparity(f.left, f.right, options.disparity);
      double* dst = disp.data().data() + i * plane1;
      for (std::size_t p = 0; p < plane1; ++p) dst[p] = map.disparity.data[p] * scale;
    }
    out.frames[Modality::Disparity] = std::move(disp);
  }
  return out;
}

const FeatureStats& Normalizer::for_session(const std::string& session_id) const {
  auto it = per_session.find(session_id);
  return it != per_session.end() ? it->second : global;
}

namespace {

ZScoreStats fit_or_unit(const std::vector<double>& column) {
  if (column.size() < 2) return {column.empty() ? 0.0 : column.front(), 1.0};
  try {
    return zscore_fit(column);
  } catch (const ZeroVarianceError&) {
    return {column.front(), 1.0};
  }
}

template <std::size_t F>
std::array<ZScoreStats, F> fit_columns(const std::vector<const Tensor*>& blocks) {
  std::array<ZScoreStats, F> out{};
  for (std::size_t f = 0; f < F; ++f) {
    std::vector<double> column;
    for (const Tensor* b : blocks)
      for (std::size_t r = 0; r < b->dim(0); ++r) column.push_back((*b)[r * F + f]);
    out[f] = fit_or_unit(column);
  }
  return out;
}

FeatureStats fit_stats(const std::vector<const WindowData*>& windows) {
  std::vector<const Tensor*> eye, head;
  for (const auto* w : windows) {
    eye.push_back(&w->eye);
    head.push_back(&w->head);
  }
  return {fit_columns<kEyeFeatures>(eye), fit_columns<kHeadFeatures>(head)};
}

}  // namespace

Normalizer fit_normalizer(const std::vector<const WindowData*>& windows) {
  Normalizer out;
  out.global = fit_stats(windows);
  std::map<std::string, std::vector<const WindowData*>> by_session;
  for (const auto* w : windows) by_session[w->session_id].push_back(w);
  for (const auto& [id, ws] : by_session) out.per_session[id] = fit_stats(ws);
  return out;
}

const Tensor& ModelInputs::at(Modality m) const {
  auto it = tensors.find(m);
  if (it == tensors.end()) throw ShapeError("missing modality " + std::string(to_string(m)));
  return it->second;
}

namespace {

template <std::size_t F>
Tensor shape_rows(const Tensor& raw, const std::vector<std::size_t>& idx, const std::array<ZScoreStats, F>& stats,
                  std::size_t subsequences) {
  const std::size_t T = idx.size();
  Tensor out({subsequences, T / subsequences, F});
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t f = 0; f < F; ++f) out[i * F + f] = zscore_apply(raw[idx[i] * F + f], stats[f]);
  return out;
}

}  // namespace

ModelInputs to_model_inputs(const WindowData& data, const Normalizer& normalizer, const InputOptions& options) {
  if (options.subsequences == 0 || options.timestep % options.subsequences != 0) {
    throw ConfigError("timestep must be divisible by the subsequence count");
  }
  if (data.eye.rank() != 2 || data.eye.dim(1) != kEyeFeatures || data.head.rank() != 2 ||
      data.head.dim(1) != kHeadFeatures || data.eye.dim(0) != data.head.dim(0)) {
    throw ShapeError("window eye/head blocks must be (L, 9) and (L, 4)");
  }
  ModelInputs out;
  const auto idx = select_indices(data.eye.dim(0), options.timestep, options.selection);
  const FeatureStats& stats = normalizer.for_session(data.session_id);
  for (Modality m : options.modalities) {
    switch (m) {
      case Modality::Eye:
        out.tensors[m] = shape_rows(data.eye, idx, stats.eye, options.subsequences);
        break;
      case Modality::Head:
        out.tensors[m] = shape_rows(data.head, idx, stats.head, options.subsequences);
        break;
      default: {
        auto it = data.frames.find(m);
        if (it == data.frames.end()) {
          throw MissingStreamError(data.id + ": modality " + std::string(to_string(m)) + " not materialized");
        }
        if (it->second.dim(0) != options.timestep) {
          throw ShapeError(data.id + ": " + std::string(to_string(m)) + " has " +
                           std::to_string(it->second.dim(0)) + " timesteps, expected " +
                           std::to_string(options.timestep));
        }
        out.tensors[m] = it->second;
      }
    }
  }
  return out;
}

ModelInputs window_to_model_inputs(const Window& window, const Normalizer& normalizer,
                                   const InputOptions& options) {
  return to_model_inputs(materialize(window, options), normalizer, options);
}

// ---- index file ---------------------------------------------------------------

namespace {
constexpr std::string_view kIndexHeader = "session,t_report,fms,severity,dropped,reason";
}

void write_window_index(const std::vector<WindowIndexRow>& rows, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  out << kIndexHeader << '\n';
  for (const auto& r : rows) {
    if (r.reason.find(',') != std::string::npos) throw ContractError("index reason must not contain commas");
    out << r.session << ',' << format_double(r.t_report) << ',' << format_double(r.fms) << ','
        << (r.severity ? to_string(*r.severity) : "") << ',' << (r.dropped ? 1 : 0) << ',' << r.reason << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<WindowIndexRow> read_window_index(const std::filesystem::path& path) {
  auto csv = detail::read_csv(path, kIndexHeader);
  std::vector<WindowIndexRow> rows;
  for (const auto& [line, f] : csv.rows) {
    WindowIndexRow r;
    r.session = std::string(f[0]);
    r.t_report = detail::parse_double(f[1], line);
    r.fms = detail::parse_double(f[2], line);
    if (!f[3].empty()) r.severity = parse_severity(f[3]);
    if (f[4] != "0" && f[4] != "1") throw ParseError("dropped flag must be 0 or 1", line);
    r.dropped = f[4] == "1";
    r.reason = std::string(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace sickfuse
