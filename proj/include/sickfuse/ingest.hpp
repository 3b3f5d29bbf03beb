#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sickfuse/image.hpp"

namespace sickfuse {

enum class Simulation { BeachCity, RoadSide, FurnitureShop, SeaVoyage, RollerCoaster };

inline constexpr std::array<Simulation, 5> kSimulations = {
    Simulation::BeachCity, Simulation::RoadSide, Simulation::FurnitureShop,
    Simulation::SeaVoyage, Simulation::RollerCoaster};

std::string_view to_string(Simulation sim);
/// Throws ParseError for unknown names.
Simulation parse_simulation(std::string_view name);

inline constexpr std::size_t kEyeFeatures = 9;
inline constexpr std::size_t kHeadFeatures = 4;
inline constexpr std::size_t kDefaultFrameSize = 256;
inline constexpr double kDefaultRateHz = 20.0;
inline constexpr double kMaxGapSeconds = 0.5;

struct EyeSample {
  double t = 0.0;
  double left_pupil_mm = 0.0;
  double right_pupil_mm = 0.0;
  std::array<double, 3> left_gaze{};
  std::array<double, 3> right_gaze{};
  double convergence_mm = 0.0;
  bool valid = true;

  /// Pupils, gaze vectors, convergence: the 9 model features.
  std::array<double, kEyeFeatures> features() const;
  bool check() const;

  friend bool operator==(const EyeSample&, const EyeSample&) = default;
};

struct HeadSample {
  double t = 0.0;
  std::array<double, 4> quat{0.0, 0.0, 0.0, 1.0};  // x, y, z, w
  bool valid = true;

  std::array<double, kHeadFeatures> features() const { return quat; }
  bool check() const;

  friend bool operator==(const HeadSample&, const HeadSample&) = default;
};

struct StereoFrame {
  double t = 0.0;
  RgbImage left;
  RgbImage right;

  friend bool operator==(const StereoFrame&, const StereoFrame&) = default;
};

struct FmsReport {
  double t = 0.0;
  double score = 0.0;

  friend bool operator==(const FmsReport&, const FmsReport&) = default;
};

struct SessionRecord {
  std::string participant_id;
  Simulation simulation = Simulation::BeachCity;
  double rate_hz = kDefaultRateHz;
  std::vector<EyeSample> eye;
  std::vector<HeadSample> head;
  std::vector<StereoFrame> frames;
  std::vector<FmsReport> reports;
  bool aligned = false;
  // Invalid samples replaced by hold-last-valid during alignment.
  std::size_t eye_filled = 0;
  std::size_t head_filled = 0;

  std::string id() const;
  bool has_frames() const { return !frames.empty(); }
  /// Last grid time once aligned.
  double duration() const;

  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

std::string session_dir_name(const std::string& participant, Simulation sim);

struct ParseOptions {
  std::size_t frame_size = kDefaultFrameSize;
};

/// Reads eye.csv, head.csv, fms.csv and, if present, frames.bin + frames.idx.
/// A directory without a frame blob yields an empty frame stream.
SessionRecord parse_session(const std::filesystem::path& dir, const ParseOptions& options = {});

/// Writes the files parse_session reads. Creates `dir` if needed.
void write_session(const SessionRecord& session, const std::filesystem::path& dir);

std::vector<EyeSample> read_eye_csv(const std::filesystem::path& path);
std::vector<HeadSample> read_head_csv(const std::filesystem::path& path);
std::vector<FmsReport> read_fms_csv(const std::filesystem::path& path);
std::vector<StereoFrame> read_frames(const std::filesystem::path& bin,
                                     const std::filesystem::path& idx, std::size_t frame_size);

void write_eye_csv(const std::vector<EyeSample>& eye, const std::filesystem::path& path);
void write_head_csv(const std::vector<HeadSample>& head, const std::filesystem::path& path);
void write_fms_csv(const std::vector<FmsReport>& reports, const std::filesystem::path& path);
void write_frames(const std::vector<StereoFrame>& frames, const std::filesystem::path& bin,
                  const std::filesystem::path& idx);

/// Resamples every stream to t = k / rate_hz by nearest neighbour and fills
/// invalid samples with the last valid value.
SessionRecord align_streams(const SessionRecord& session, double rate_hz = kDefaultRateHz,
                            double max_gap_s = kMaxGapSeconds);

}  // namespace sickfuse
