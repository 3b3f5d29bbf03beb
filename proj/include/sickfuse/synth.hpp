#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sickfuse/image.hpp"
#include "sickfuse/ingest.hpp"

namespace sickfuse {

/// Generator settings. Magnitudes are generator parameters, not measurements.
/// Effect sizes are the shifts at latent sickness 4; they scale linearly with
/// the latent level and saturate at 6.
struct SynthProfile {
  std::size_t participants = 27;
  std::vector<Simulation> simulations{kSimulations.begin(), kSimulations.end()};
  double duration_s = 420.0;
  double cadence_s = 30.0;
  double rate_hz = kDefaultRateHz;
  std::uint64_t seed = 1;

  // Latent sickness grows linearly with exposure: rate per minute times the
  // participant's susceptibility (log-normal) and the simulation's intensity.
  double fms_rate_per_min = 0.8;
  double susceptibility_sd = 0.35;
  double fms_noise = 0.4;

  double pupil_mm = 3.2;
  double pupil_between_sd = 0.3;
  double pupil_noise_mm = 0.08;
  double pupil_effect_mm = 0.4;
  double gaze_dispersion = 0.08;
  double gaze_effect = 0.6;  // relative growth of gaze dispersion
  double head_jitter_rad = 0.01;
  double head_effect = 0.8;  // relative growth of head jitter

  bool noise = true;           // blinks (invalid samples) and timestamp jitter
  double blink_rate = 0.005;   // blink starts per sample
  double timestamp_jitter_s = 0.004;

  bool frames = false;
  std::size_t frame_size = 32;
  double stereo_disparity_px = 4.0;
  double texture_speed_px = 1.0;  // per frame at latent sickness 0
  double video_effect = 0.5;      // relative speed growth

  /// Throws ConfigError when invariants fail.
  void validate() const;
  std::string to_text() const;
};

/// Parses key=value lines ('#' comments). Unknown keys and bad values throw ConfigError.
SynthProfile parse_profile(const std::string& text);
SynthProfile load_profile(const std::filesystem::path& path);

std::string participant_id(std::size_t index, std::size_t participants);

/// Relative sickness intensity of each simulation.
double simulation_intensity(Simulation sim);

/// Latent sickness at time t for a session (before reporting noise/rounding).
double latent_sickness(const SynthProfile& profile, std::size_t participant, Simulation sim, double t);

/// 0 at latent sickness 0, 1 at 4, capped at 1.5.
double effect_scale(double latent);

SessionRecord generate_session(const SynthProfile& profile, std::size_t participant, Simulation sim);

/// Writes participants x simulations session directories plus profile.txt.
/// Returns the session directory paths in generation order.
std::vector<std::filesystem::path> generate_dataset(const SynthProfile& profile,
                                                    const std::filesystem::path& out_dir);

/// Smooth periodic colour texture sampled at continuous coordinates.
class Texture {
 public:
  Texture(std::uint64_t seed, std::size_t cells = 64, double cell_px = 4.0);
  std::array<double, 3> sample(double x, double y) const;

 private:
  double lattice(std::size_t channel, long i, long j) const;
  std::size_t cells_;
  double cell_px_;
  std::vector<double> values_;  // 3 * cells * cells
};

/// Stereo pair of the texture viewed at horizontal offset `offset_x`; the right
/// view is the left view shifted so left pixel x matches right pixel x - disparity.
StereoFrame render_stereo(const Texture& texture, std::size_t size, double offset_x, double disparity,
                          double t);

}  // namespace sickfuse
