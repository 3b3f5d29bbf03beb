#include "sickfuse/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>

#include "sickfuse/binary_io.hpp"
#include "sickfuse/errors.hpp"
#include "text_util.hpp"

namespace sickfuse {

namespace fs = std::filesystem;
using detail::format_double;
using detail::parse_double;

namespace {

constexpr std::string_view kEyeHeader =
    "t,left_pupil_mm,right_pupil_mm,lgx,lgy,lgz,rgx,rgy,rgz,convergence_mm";
constexpr std::string_view kHeadHeader = "t,qx,qy,qz,qw";
constexpr std::string_view kFmsHeader = "t,score";
constexpr std::string_view kFrameMagic = "SFR1";
constexpr double kNormTolerance = 1e-3;
constexpr double kMaxPupilMm = 12.0;

bool unit_norm(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(v[i])) return false;
    s += v[i] * v[i];
  }
  const double norm = std::sqrt(s);
  return norm >= 1.0 - kNormTolerance && norm <= 1.0 + kNormTolerance;
}

double parse_time(std::string_view field, std::size_t line) {
  const double t = parse_double(field, line);
  if (!std::isfinite(t)) throw ParseError("non-finite timestamp", line);
  return t;
}

template <typename Sample>
void check_increasing(const std::vector<Sample>& samples, const std::vector<std::size_t>& lines,
                      const std::string& what) {
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].t > samples[i - 1].t)) {
      throw OrderError(what + ": timestamp " + format_double(samples[i].t) + " at line " +
                       std::to_string(lines[i]) + " does not follow " + format_double(samples[i - 1].t));
    }
  }
}

std::size_t frame_record_bytes(std::size_t size) { return 8 + 2 * size * size * 3; }

}  // namespace

std::string_view to_string(Simulation sim) {
  switch (sim) {
    case Simulation::BeachCity: return "BeachCity";
    case Simulation::RoadSide: return "RoadSide";
    case Simulation::FurnitureShop: return "FurnitureShop";
    case Simulation::SeaVoyage: return "SeaVoyage";
    case Simulation::RollerCoaster: return "RollerCoaster";
  }
  return "Unknown";
}

Simulation parse_simulation(std::string_view name) {
  for (Simulation s : kSimulations) {
    if (to_string(s) == name) return s;
  }
  throw ParseError("unknown simulation '" + std::string(name) + "'");
}

std::array<double, kEyeFeatures> EyeSample::features() const {
  return {left_pupil_mm,  right_pupil_mm, left_gaze[0],  left_gaze[1],   left_gaze[2],
          right_gaze[0], right_gaze[1],   right_gaze[2], convergence_mm};
}

bool EyeSample::check() const {
  auto pupil_ok = [](double d) { return std::isfinite(d) && d > 0.0 && d <= kMaxPupilMm; };
  return pupil_ok(left_pupil_mm) && pupil_ok(right_pupil_mm) && unit_norm(left_gaze.data(), 3) &&
         unit_norm(right_gaze.data(), 3) && std::isfinite(convergence_mm);
}

bool HeadSample::check() const { return unit_norm(quat.data(), 4); }

std::string SessionRecord::id() const { return session_dir_name(participant_id, simulation); }

double SessionRecord::duration() const {
  if (eye.empty()) return 0.0;
  return eye.back().t;
}

std::string session_dir_name(const std::string& participant, Simulation sim) {
  return participant + "_" + std::string(to_string(sim));
}

// ---- readers ----------------------------------------------------------------

std::vector<EyeSample> read_eye_csv(const fs::path& path) {
  auto csv = detail::read_csv(path, kEyeHeader);
  std::vector<EyeSample> out;
  std::vector<std::size_t> lines;
  out.reserve(csv.rows.size());
  for (const auto& [line, f] : csv.rows) {
    EyeSample s;
    s.t = parse_time(f[0], line);
    s.left_pupil_mm = parse_double(f[1], line);
    s.right_pupil_mm = parse_double(f[2], line);
    for (int i = 0; i < 3; ++i) s.left_gaze[i] = parse_double(f[3 + i], line);
    for (int i = 0; i < 3; ++i) s.right_gaze[i] = parse_double(f[6 + i], line);
    s.convergence_mm = parse_double(f[9], line);
    s.valid = s.check();
    out.push_back(s);
    lines.push_back(line);
  }
  check_increasing(out, lines, path.filename().string());
  return out;
}

std::vector<HeadSample> read_head_csv(const fs::path& path) {
  auto csv = detail::read_csv(path, kHeadHeader);
  std::vector<HeadSample> out;
  std::vector<std::size_t> lines;
  out.reserve(csv.rows.size());
  for (const auto& [line, f] : csv.rows) {
    HeadSample s;
    s.t = parse_time(f[0], line);
    for (int i = 0; i < 4; ++i) s.quat[i] = parse_double(f[1 + i], line);
    s.valid = s.check();
    out.push_back(s);
    lines.push_back(line);
  }
  check_increasing(out, lines, path.filename().string());
  return out;
}

std::vector<FmsReport> read_fms_csv(const fs::path& path) {
  auto csv = detail::read_csv(path, kFmsHeader);
  std::vector<FmsReport> out;
  std::vector<std::size_t> lines;
  for (const auto& [line, f] : csv.rows) {
    FmsReport r;
    r.t = parse_time(f[0], line);
    r.score = parse_double(f[1], line);
    if (!(r.score >= 0.0 && r.score <= 10.0)) {
      throw ParseError("FMS score " + format_double(r.score) + " outside [0, 10]", line);
    }
    out.push_back(r);
    lines.push_back(line);
  }
  check_increasing(out, lines, path.filename().string());
  return out;
}

std::vector<StereoFrame> read_frames(const fs::path& bin, const fs::path& idx, std::size_t frame_size) {
  std::ifstream index(idx);
  if (!index) throw MissingStreamError("missing stream file: " + idx.string());
  std::vector<std::uint64_t> offsets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(index, line)) {
    ++line_no;
    auto field = detail::trim(line);
    if (field.empty()) continue;
    std::uint64_t off = 0;
    auto res = std::from_chars(field.data(), field.data() + field.size(), off);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
      throw ParseError(idx.filename().string() + ": bad offset '" + std::string(field) + "'", line_no);
    }
    offsets.push_back(off);
  }

  std::ifstream in(bin, std::ios::binary);
  if (!in) throw MissingStreamError("missing stream file: " + bin.string());
  expect_magic(in, kFrameMagic, bin.filename().string());
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());

  if (frame_size == 0) {
    // Infer the resolution from the record stride.
    const std::uint64_t stride =
        offsets.size() >= 2 ? offsets[1] - offsets[0] : file_size - kFrameMagic.size();
    const double side = std::sqrt(static_cast<double>(stride > 8 ? stride - 8 : 0) / 6.0);
    frame_size = static_cast<std::size_t>(std::lround(side));
    if (frame_size == 0 || frame_record_bytes(frame_size) != stride) {
      throw ParseError(bin.filename().string() + ": cannot infer frame resolution from stride " +
                       std::to_string(stride));
    }
  }
  const std::size_t record = frame_record_bytes(frame_size);
  const std::size_t plane = frame_size * frame_size * 3;
  if ((file_size - kFrameMagic.size()) % record != 0 ||
      (file_size - kFrameMagic.size()) / record != offsets.size()) {
    throw ParseError(bin.filename().string() + ": size does not match " + std::to_string(offsets.size()) +
                     " frames of " + std::to_string(frame_size) + "x" + std::to_string(frame_size));
  }

  std::vector<StereoFrame> frames;
  frames.reserve(offsets.size());
  std::vector<std::size_t> lines;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (offsets[i] < kFrameMagic.size() || offsets[i] + record > file_size) {
      throw ParseError(idx.filename().string() + ": offset out of range", i + 1);
    }
    in.seekg(static_cast<std::streamoff>(offsets[i]));
    StereoFrame f;
    f.t = read_f64(in);
    if (!std::isfinite(f.t)) throw ParseError("non-finite frame timestamp", i + 1);
    f.left = RgbImage(frame_size, frame_size);
    f.right = RgbImage(frame_size, frame_size);
    in.read(reinterpret_cast<char*>(f.left.pixels.data()), static_cast<std::streamsize>(plane));
    in.read(reinterpret_cast<char*>(f.right.pixels.data()), static_cast<std::streamsize>(plane));
    if (!in) throw ParseError(bin.filename().string() + ": truncated frame record", i + 1);
    frames.push_back(std::move(f));
    lines.push_back(i + 1);
  }
  check_increasing(frames, lines, bin.filename().string());
  return frames;
}

SessionRecord parse_session(const fs::path& dir, const ParseOptions& options) {
  if (!fs::is_directory(dir)) throw MissingStreamError("not a session directory: " + dir.string());
  SessionRecord s;
  const std::string name = dir.filename().string();
  const auto sep = name.rfind('_');
  if (sep == std::string::npos || sep == 0) {
    throw ParseError("session directory must be named <participant>_<Simulation>: " + name);
  }
  s.participant_id = name.substr(0, sep);
  s.simulation = parse_simulation(std::string_view(name).substr(sep + 1));

  s.eye = read_eye_csv(dir / "eye.csv");
  s.head = read_head_csv(dir / "head.csv");
  s.reports = read_fms_csv(dir / "fms.csv");
  const bool has_bin = fs::exists(dir / "frames.bin");
  const bool has_idx = fs::exists(dir / "frames.idx");
  if (has_bin != has_idx) {
    throw MissingStreamError(name + ": frames.bin and frames.idx must be present together");
  }
  if (has_bin) s.frames = read_frames(dir / "frames.bin", dir / "frames.idx", options.frame_size);
  return s;
}

// ---- writers ----------------------------------------------------------------

void write_eye_csv(const std::vector<EyeSample>& eye, const fs::path& path) {
  auto out = detail::open_for_write(path);
  out << kEyeHeader << '\n';
  for (const auto& s : eye) {
    out << format_double(s.t);
    for (double v : s.features()) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_head_csv(const std::vector<HeadSample>& head, const fs::path& path) {
  auto out = detail::open_for_write(path);
  out << kHeadHeader << '\n';
  for (const auto& s : head) {
    out << format_double(s.t);
    for (double v : s.quat) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_fms_csv(const std::vector<FmsReport>& reports, const fs::path& path) {
  auto out = detail::open_for_write(path);
  out << kFmsHeader << '\n';
  for (const auto& r : reports) out << format_double(r.t) << ',' << format_double(r.score) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void write_frames(const std::vector<StereoFrame>& frames, const fs::path& bin, const fs::path& idx) {
  auto out = detail::open_for_write(bin);
  auto index = detail::open_for_write(idx);
  write_magic(out, kFrameMagic);
  std::uint64_t offset = kFrameMagic.size();
  for (const auto& f : frames) {
    if (f.left.width != f.left.height || f.right.width != f.left.width ||
        f.right.height != f.left.height) {
      throw ShapeError("stereo frames must be square with equal views");
    }
    index << offset << '\n';
    write_f64(out, f.t);
    out.write(reinterpret_cast<const char*>(f.left.pixels.data()),
              static_cast<std::streamsize>(f.left.pixels.size()));
    out.write(reinterpret_cast<const char*>(f.right.pixels.data()),
              static_cast<std::streamsize>(f.right.pixels.size()));
    offset += frame_record_bytes(f.left.width);
  }
  if (!out || !index) throw IoError("failed writing " + bin.string());
}

void write_session(const SessionRecord& session, const fs::path& dir) {
  fs::create_directories(dir);
  write_eye_csv(session.eye, dir / "eye.csv");
  write_head_csv(session.head, dir / "head.csv");
  write_fms_csv(session.reports, dir / "fms.csv");
  if (session.has_frames()) write_frames(session.frames, dir / "frames.bin", dir / "frames.idx");
}

// ---- alignment --------------------------------------------------------------

namespace {

/// Index of the sample nearest to `t`, ties to the earlier one. `cursor` is a
/// monotone hint: grid times are visited in increasing order.
template <typename Sample>
std::size_t nearest(const std::vector<Sample>& samples, double t, std::size_t& cursor) {
  while (cursor + 1 < samples.size() && samples[cursor + 1].t <= t) ++cursor;
  if (cursor + 1 < samples.size() && samples[cursor].t < t) {
    const double before = t - samples[cursor].t;
    const double after = samples[cursor + 1].t - t;
    if (after < before) return cursor + 1;
  }
  return cursor;
}

template <typename Sample>
void check_gaps(const std::vector<Sample>& samples, const std::function<bool(const Sample&)>& valid,
                double end, double max_gap, const std::string& stream) {
  constexpr double kSlack = 1e-9;
  double last = 0.0;
  bool any = false;
  for (const auto& s : samples) {
    if (!valid(s)) continue;
    if (s.t > end + kSlack) break;
    if (s.t - last > max_gap + kSlack) throw GapError(stream, last, s.t);
    last = std::max(last, s.t);
    any = true;
  }
  if (!any) throw GapError(stream, 0.0, end);
  if (end - last > max_gap + kSlack) throw GapError(stream, last, end);
}

/// Nearest-neighbour resample with hold-last-valid filling. Returns the number
/// of grid points that needed filling.
template <typename Sample>
std::size_t resample(const std::vector<Sample>& in, std::size_t n, double rate,
                     std::vector<Sample>& out) {
  out.clear();
  out.reserve(n);
  std::size_t cursor = 0;
  std::size_t filled = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rate;
    Sample s = in[nearest(in, t, cursor)];
    s.t = t;
    if (!s.valid) ++filled;
    out.push_back(s);
  }
  // Hold the last valid value; a leading invalid run takes the first valid one.
  const Sample* held = nullptr;
  for (const auto& s : out) {
    if (s.valid) {
      held = &s;
      break;
    }
  }
  if (held == nullptr) return filled;
  Sample hold = *held;
  for (auto& s : out) {
    if (s.valid) {
      hold = s;
    } else {
      const double t = s.t;
      s = hold;
      s.t = t;
      s.valid = false;
    }
  }
  return filled;
}

}  // namespace

SessionRecord align_streams(const SessionRecord& session, double rate_hz, double max_gap_s) {
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) throw ConfigError("rate_hz must be positive");
  if (session.eye.empty() || session.head.empty()) {
    throw MissingStreamError(session.id() + ": eye and head streams must be nonempty");
  }
  double end = std::min(session.eye.back().t, session.head.back().t);
  if (session.has_frames()) end = std::min(end, session.frames.back().t);
  if (end < 0.0) throw ContractError(session.id() + ": streams end before t = 0");

  check_gaps<EyeSample>(session.eye, [](const EyeSample& s) { return s.valid; }, end, max_gap_s, "eye");
  check_gaps<HeadSample>(session.head, [](const HeadSample& s) { return s.valid; }, end, max_gap_s, "head");
  if (session.has_frames()) {
    check_gaps<StereoFrame>(session.frames, [](const StereoFrame&) { return true; }, end, max_gap_s,
                            "frames");
  }

  const auto n = static_cast<std::size_t>(std::floor(end * rate_hz + 1e-6)) + 1;
  SessionRecord out;
  out.participant_id = session.participant_id;
  out.simulation = session.simulation;
  out.rate_hz = rate_hz;
  out.reports = session.reports;
  out.aligned = true;
  out.eye_filled = resample(session.eye, n, rate_hz, out.eye);
  out.head_filled = resample(session.head, n, rate_hz, out.head);
  if (session.has_frames()) {
    std::size_t cursor = 0;
    out.frames.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) / rate_hz;
      StereoFrame f = session.frames[nearest(session.frames, t, cursor)];
      f.t = t;
      out.frames.push_back(std::move(f));
    }
  }
  return out;
}

}  // namespace sickfuse
