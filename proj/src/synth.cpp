#include "sickfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "kv_util.hpp"
#include "sickfuse/errors.hpp"
#include "sickfuse/rng.hpp"

namespace fs = std::filesystem;

namespace sickfuse {

namespace {

detail::KvBinder make_binder(SynthProfile& p) {
  detail::KvBinder b("synth profile");
  b.bind("participants", p.participants);
  b.bind(
      "simulations",
      [&p](std::string_view s) {
        p.simulations.clear();
        for (auto name : detail::split(s, ',')) {
          name = detail::trim(name);
          try {
            p.simulations.push_back(parse_simulation(name));
          } catch (const ParseError&) {
            throw ConfigError("synth profile: unknown simulation '" + std::string(name) + "'");
          }
        }
      },
      [&p] {
        std::string out;
        for (std::size_t i = 0; i < p.simulations.size(); ++i) {
          if (i) out += ",";
          out += to_string(p.simulations[i]);
        }
        return out;
      });
  b.bind("duration_s", p.duration_s);
  b.bind("cadence_s", p.cadence_s);
  b.bind("rate_hz", p.rate_hz);
  b.bind("seed", p.seed);
  b.bind("fms_rate_per_min", p.fms_rate_per_min);
  b.bind("susceptibility_sd", p.susceptibility_sd);
  b.bind("fms_noise", p.fms_noise);
  b.bind("pupil_mm", p.pupil_mm);
  b.bind("pupil_between_sd", p.pupil_between_sd);
  b.bind("pupil_noise_mm", p.pupil_noise_mm);
  b.bind("pupil_effect_mm", p.pupil_effect_mm);
  b.bind("gaze_dispersion", p.gaze_dispersion);
  b.bind("gaze_effect", p.gaze_effect);
  b.bind("head_jitter_rad", p.head_jitter_rad);
  b.bind("head_effect", p.head_effect);
  b.bind("noise", p.noise);
  b.bind("blink_rate", p.blink_rate);
  b.bind("timestamp_jitter_s", p.timestamp_jitter_s);
  b.bind("frames", p.frames);
  b.bind("frame_size", p.frame_size);
  b.bind("stereo_disparity_px", p.stereo_disparity_px);
  b.bind("texture_speed_px", p.texture_speed_px);
  b.bind("video_effect", p.video_effect);
  return b;
}

struct ParticipantTraits {
  double susceptibility = 1.0;
  double pupil_mm = 3.2;
  double gaze_yaw = 0.0;
  double gaze_pitch = 0.0;
};

ParticipantTraits participant_traits(const SynthProfile& p, std::size_t participant) {
  Rng rng = make_rng(p.seed, "participant/" + participant_id(participant, p.participants));
  std::normal_distribution<double> z(0.0, 1.0);
  ParticipantTraits t;
  t.susceptibility = std::exp(p.susceptibility_sd * z(rng));
  t.pupil_mm = p.pupil_mm + p.pupil_between_sd * z(rng);
  t.gaze_yaw = 0.05 * z(rng);
  t.gaze_pitch = 0.05 * z(rng);
  return t;
}

/// Stationary AR(1) with unit variance.
class Ar1 {
 public:
  Ar1(double phi, double start) : phi_(phi), innov_(std::sqrt(1.0 - phi * phi)), x_(start) {}
  double next(Rng& rng) {
    x_ = phi_ * x_ + innov_ * z_(rng);
    return x_;
  }

 private:
  double phi_;
  double innov_;
  double x_;
  std::normal_distribution<double> z_{0.0, 1.0};
};

std::array<double, 3> direction(double yaw, double pitch) {
  return {std::sin(yaw) * std::cos(pitch), std::sin(pitch), std::cos(yaw) * std::cos(pitch)};
}

std::array<double, 4> quat_from_euler(double yaw, double pitch, double roll) {
  const double cy = std::cos(yaw / 2), sy = std::sin(yaw / 2);
  const double cp = std::cos(pitch / 2), sp = std::sin(pitch / 2);
  const double cr = std::cos(roll / 2), sr = std::sin(roll / 2);
  return {sr * cp * cy - cr * sp * sy, cr * sp * cy + sr * cp * sy, cr * cp * sy - sr * sp * cy,
          cr * cp * cy + sr * sp * sy};
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace

void SynthProfile::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("synth profile: " + m); };
  if (participants == 0) fail("participants must be >= 1");
  if (simulations.empty()) fail("at least one simulation required");
  if (std::set<Simulation>(simulations.begin(), simulations.end()).size() != simulations.size()) {
    fail("duplicate simulation");
  }
  if (!(duration_s > 0.0)) fail("duration_s must be positive");
  if (!(cadence_s > 0.0)) fail("cadence_s must be positive");
  const double ratio = duration_s / cadence_s;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) fail("duration_s must be a multiple of cadence_s");
  if (!(rate_hz > 0.0)) fail("rate_hz must be positive");
  if (std::abs(duration_s * rate_hz - std::round(duration_s * rate_hz)) > 1e-6) {
    fail("duration_s * rate_hz must be an integer sample count");
  }
  for (double e : {fms_rate_per_min, susceptibility_sd, fms_noise, pupil_between_sd, pupil_noise_mm,
                   pupil_effect_mm, gaze_dispersion, gaze_effect, head_jitter_rad, head_effect, blink_rate,
                   timestamp_jitter_s, texture_speed_px, video_effect, stereo_disparity_px}) {
    if (!(e >= 0.0)) fail("rates, spreads and effect sizes must be >= 0");
  }
  if (!(pupil_mm > 1.0)) fail("pupil_mm must exceed 1");
  if (blink_rate >= 0.1) fail("blink_rate must be < 0.1");
  if (timestamp_jitter_s >= 0.25 / rate_hz) fail("timestamp_jitter_s must be < a quarter sample period");
  if (frames) {
    if (frame_size < 8) fail("frame_size must be >= 8");
    if (stereo_disparity_px >= static_cast<double>(frame_size) / 2) fail("stereo_disparity_px too large");
  }
}

std::string SynthProfile::to_text() const {
  SynthProfile copy = *this;
  return make_binder(copy).to_text();
}

SynthProfile parse_profile(const std::string& text) {
  SynthProfile p;
  make_binder(p).apply(text);
  p.validate();
  return p;
}

SynthProfile load_profile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read profile " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_profile(ss.str());
}

std::string participant_id(std::size_t index, std::size_t participants) {
  const std::size_t width = std::max<std::size_t>(2, std::to_string(participants).size());
  std::string n = std::to_string(index + 1);
  return "P" + std::string(width > n.size() ? width - n.size() : 0, '0') + n;
}

double simulation_intensity(Simulation sim) {
  switch (sim) {
    case Simulation::BeachCity: return 0.6;
    case Simulation::FurnitureShop: return 0.7;
    case Simulation::RoadSide: return 0.9;
    case Simulation::SeaVoyage: return 1.1;
    case Simulation::RollerCoaster: return 1.4;
  }
  return 1.0;
}

double latent_sickness(const SynthProfile& profile, std::size_t participant, Simulation sim, double t) {
  const double s = participant_traits(profile, participant).susceptibility;
  return profile.fms_rate_per_min * s * simulation_intensity(sim) * t / 60.0;
}

double effect_scale(double latent) { return std::clamp(latent, 0.0, 6.0) / 4.0; }

SessionRecord generate_session(const SynthProfile& profile, std::size_t participant, Simulation sim) {
  profile.validate();
  const ParticipantTraits traits = participant_traits(profile, participant);
  SessionRecord s;
  s.participant_id = participant_id(participant, profile.participants);
  s.simulation = sim;
  s.rate_hz = profile.rate_hz;

  Rng rng = make_rng(profile.seed, s.participant_id + "/" + std::string(to_string(sim)));
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const double rate_per_s = profile.fms_rate_per_min * traits.susceptibility * simulation_intensity(sim) / 60.0;
  auto latent = [&](double t) { return rate_per_s * t; };

  const auto n = static_cast<std::size_t>(std::llround(profile.duration_s * profile.rate_hz)) + 1;
  const double dt = 1.0 / profile.rate_hz;
  s.eye.reserve(n);
  s.head.reserve(n);

  const double pupil_offset = 0.05 * z(rng);  // left/right asymmetry
  Ar1 pupil_l(0.6, 0.0), pupil_r(0.6, 0.0), pupil_common(0.98, 0.0);
  Ar1 yaw(0.9, 0.0), pitch(0.9, 0.0), conv(0.99, 0.0);
  Ar1 head_yaw(0.95, 0.0), head_pitch(0.95, 0.0), head_roll(0.95, 0.0);
  std::size_t blink_left = 0;

  for (std::size_t k = 0; k < n; ++k) {
    double t = static_cast<double>(k) * dt;
    if (profile.noise && k > 0 && k + 1 < n) t += profile.timestamp_jitter_s * (2.0 * u(rng) - 1.0);
    const double f = effect_scale(latent(t));

    EyeSample e;
    e.t = t;
    const double common = traits.pupil_mm - profile.pupil_effect_mm * f +
                          0.5 * profile.pupil_noise_mm * pupil_common.next(rng);
    e.left_pupil_mm = common + pupil_offset + profile.pupil_noise_mm * pupil_l.next(rng);
    e.right_pupil_mm = common - pupil_offset + profile.pupil_noise_mm * pupil_r.next(rng);
    const double disp = profile.gaze_dispersion * (1.0 + profile.gaze_effect * f);
    const double gy = traits.gaze_yaw + disp * yaw.next(rng);
    const double gp = traits.gaze_pitch + disp * pitch.next(rng);
    e.convergence_mm = 1200.0 * std::exp(0.2 * conv.next(rng));
    const double verge = std::atan2(32.0, e.convergence_mm);  // half inter-pupillary distance 32 mm
    e.left_gaze = direction(gy + verge, gp);
    e.right_gaze = direction(gy - verge, gp);

    if (profile.noise && blink_left == 0 && u(rng) < profile.blink_rate) blink_left = 3;
    if (blink_left > 0) {
      --blink_left;
      e.left_pupil_mm = 0.0;
      e.right_pupil_mm = 0.0;
      e.left_gaze = {0.0, 0.0, 0.0};
      e.right_gaze = {0.0, 0.0, 0.0};
    }
    e.valid = e.check();
    s.eye.push_back(e);

    HeadSample h;
    h.t = t;
    const double jitter = profile.head_jitter_rad * (1.0 + profile.head_effect * f);
    h.quat = quat_from_euler(0.2 * std::sin(2.0 * std::numbers::pi * t / 40.0) + jitter * head_yaw.next(rng),
                             jitter * head_pitch.next(rng), jitter * head_roll.next(rng));
    h.valid = h.check();
    s.head.push_back(h);
  }

  for (double t = profile.cadence_s; t < profile.duration_s - 1e-9; t += profile.cadence_s) {
    const double score = std::clamp(std::round(latent(t) + profile.fms_noise * z(rng)), 0.0, 10.0);
    s.reports.push_back({t, score});
  }

  if (profile.frames) {
    const Texture texture(derive_seed(profile.seed, "texture/" + std::string(to_string(sim))));
    s.frames.reserve(n);
    double offset = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) * dt;
      s.frames.push_back(render_stereo(texture, profile.frame_size, offset, profile.stereo_disparity_px, t));
      offset += profile.texture_speed_px * (1.0 + profile.video_effect * effect_scale(latent(t)));
    }
  }
  return s;
}

std::vector<fs::path> generate_dataset(const SynthProfile& profile, const fs::path& out_dir) {
  profile.validate();
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "profile.txt", std::ios::binary);
    if (!out) throw IoError("cannot write " + (out_dir / "profile.txt").string());
    out << profile.to_text();
  }
  std::vector<fs::path> dirs;
  for (std::size_t p = 0; p < profile.participants; ++p) {
    for (Simulation sim : profile.simulations) {
      const fs::path dir = out_dir / session_dir_name(participant_id(p, profile.participants), sim);
      write_session(generate_session(profile, p, sim), dir);
      dirs.push_back(dir);
    }
  }
  return dirs;
}

// ---- frames -------------------------------------------------------------------

Texture::Texture(std::uint64_t seed, std::size_t cells, double cell_px)
    : cells_(cells), cell_px_(cell_px), values_(3 * cells * cells) {
  if (cells == 0 || !(cell_px > 0.0)) throw ConfigError("texture needs cells > 0 and cell_px > 0");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  for (double& v : values_) v = u(rng);
}

double Texture::lattice(std::size_t channel, long i, long j) const {
  const long c = static_cast<long>(cells_);
  const auto ii = static_cast<std::size_t>(((i % c) + c) % c);
  const auto jj = static_cast<std::size_t>(((j % c) + c) % c);
  return values_[(channel * cells_ + jj) * cells_ + ii];
}

std::array<double, 3> Texture::sample(double x, double y) const {
  const double gx = x / cell_px_, gy = y / cell_px_;
  const double fx = std::floor(gx), fy = std::floor(gy);
  const long i = static_cast<long>(fx), j = static_cast<long>(fy);
  const double ax = smoothstep(gx - fx), ay = smoothstep(gy - fy);
  std::array<double, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) {
    const double top = lattice(c, i, j) * (1 - ax) + lattice(c, i + 1, j) * ax;
    const double bottom = lattice(c, i, j + 1) * (1 - ax) + lattice(c, i + 1, j + 1) * ax;
    out[c] = top * (1 - ay) + bottom * ay;
  }
  return out;
}

StereoFrame render_stereo(const Texture& texture, std::size_t size, double offset_x, double disparity, double t) {
  StereoFrame f;
  f.t = t;
  f.left = RgbImage(size, size);
  f.right = RgbImage(size, size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const auto l = texture.sample(static_cast<double>(x) + offset_x, static_cast<double>(y));
      const auto r = texture.sample(static_cast<double>(x) + offset_x + disparity, static_cast<double>(y));
      for (std::size_t c = 0; c < 3; ++c) {
        f.left.pixel(x, y)[c] = static_cast<std::uint8_t>(std::clamp(std::lround(l[c]), 0L, 255L));
        f.right.pixel(x, y)[c] = static_cast<std::uint8_t>(std::clamp(std::lround(r[c]), 0L, 255L));
      }
    }
  }
  return f;
}

}  // namespace sickfuse
