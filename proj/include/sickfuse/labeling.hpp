#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sickfuse/ingest.hpp"
#include "sickfuse/preprocess.hpp"
#include "sickfuse/tensor.hpp"

namespace sickfuse {

enum class Severity { None = 0, Low = 1, Medium = 2, High = 3 };
inline constexpr std::size_t kSeverityClasses = 4;

std::string_view to_string(Severity s);
Severity parse_severity(std::string_view name);

struct QuantileThresholds {
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;

  friend bool operator==(const QuantileThresholds&, const QuantileThresholds&) = default;
};

/// p-quantile of sorted data by linear interpolation between order statistics
/// (position p * (n - 1)).
double quantile_linear(const std::vector<double>& sorted, double p);

/// Quartiles of the scores. Throws EmptyError on empty input and
/// ContractError for fewer than 4 scores.
QuantileThresholds compute_fms_quantiles(const std::vector<double>& scores);

/// None if fms <= q1, Low if <= q2, Medium if <= q3, else High.
/// Throws RangeError outside [0, 10].
Severity classify_severity(double fms, const QuantileThresholds& q);

inline constexpr std::size_t kWindowSamples = 220;  // 11 s at 20 Hz
inline constexpr std::size_t kTimestep = 60;
inline constexpr std::size_t kSubsequences = 4;
inline constexpr double kMaxInvalidFraction = 0.2;

/// A labelled slice of an aligned session ending at an FMS report.
struct Window {
  std::shared_ptr<const SessionRecord> session;
  std::size_t end_index = 0;  // grid index of the report sample, inclusive
  std::size_t length = kWindowSamples;
  double t_report = 0.0;
  double fms = 0.0;
  std::size_t invalid_eye = 0;
  std::size_t invalid_head = 0;
  std::optional<Severity> severity;

  std::size_t begin_index() const { return end_index + 1 - length; }
  std::string id() const;
  Tensor eye() const;   // (length, 9), hold-filled values
  Tensor head() const;  // (length, 4)
};

std::string window_id(const std::string& session_id, double t_report);

struct BuildOptions {
  std::size_t length = kWindowSamples;
  double max_invalid_fraction = kMaxInvalidFraction;
};

struct DroppedWindow {
  double t_report = 0.0;
  double fms = 0.0;
  std::string reason;
};

struct WindowSet {
  std::vector<Window> windows;
  std::vector<DroppedWindow> dropped;
};

/// One window per report whose `length` samples ending at the report lie
/// inside the aligned session. Throws ContractError for unaligned sessions.
WindowSet build_windows(std::shared_ptr<const SessionRecord> session, const BuildOptions& options = {});

void assign_severity(std::vector<Window>& windows, const QuantileThresholds& q);

/// Whole one-second segments across the windows (11 per 220-sample window at 20 Hz).
std::size_t count_segments(const std::vector<Window>& windows);

// ---- model inputs ------------------------------------------------------------

enum class Modality { Video = 0, Flow = 1, Disparity = 2, Eye = 3, Head = 4 };
inline constexpr std::array<Modality, 5> kModalities = {Modality::Video, Modality::Flow, Modality::Disparity,
                                                        Modality::Eye, Modality::Head};
std::string_view to_string(Modality m);
Modality parse_modality(std::string_view name);

enum class Selection { Recent, UniformStride };

/// Indices (relative to the window start) of the `timestep` samples fed to the
/// model. Throws ShortWindowError when length < timestep.
std::vector<std::size_t> select_indices(std::size_t length, std::size_t timestep, Selection selection);

struct InputOptions {
  std::size_t timestep = kTimestep;
  std::size_t subsequences = kSubsequences;
  Selection selection = Selection::Recent;
  std::vector<Modality> modalities = {Modality::Eye, Modality::Head};
  FarnebackParams flow;
  SgbmParams disparity;
};

/// Window contents in a session-independent form: raw eye/head rows plus the
/// frame-derived tensors already restricted to the selected timesteps.
struct WindowData {
  std::string id;
  std::string session_id;
  std::string participant;
  Simulation simulation = Simulation::BeachCity;
  double t_report = 0.0;
  double fms = 0.0;
  Tensor eye;   // (length, 9) raw
  Tensor head;  // (length, 4) raw
  std::map<Modality, Tensor> frames;  // video/flow (T,S,S,3), disparity (T,S,S,1), values in [0,1]
};

/// Computes the frame-derived modalities listed in options for the selected
/// timesteps. Flow at step i runs from the preceding grid frame to frame i.
WindowData materialize(const Window& window, const InputOptions& options);

/// Per-feature z-score constants for eye (9) and head (4) features.
struct FeatureStats {
  std::array<ZScoreStats, kEyeFeatures> eye{};
  std::array<ZScoreStats, kHeadFeatures> head{};

  friend bool operator==(const FeatureStats&, const FeatureStats&) = default;
};

/// Per-session constants with a global fallback for sessions unseen in fitting.
struct Normalizer {
  std::map<std::string, FeatureStats> per_session;
  FeatureStats global;

  const FeatureStats& for_session(const std::string& session_id) const;
};

/// Fits constants from the given windows only (callers pass training folds).
/// Features with zero variance get stddev 1.
Normalizer fit_normalizer(const std::vector<const WindowData*>& windows);

struct ModelInputs {
  std::map<Modality, Tensor> tensors;  // eye (S,L,9), head (S,L,4), frames as materialized

  const Tensor& at(Modality m) const;
  bool has(Modality m) const { return tensors.count(m) != 0; }
};

ModelInputs to_model_inputs(const WindowData& data, const Normalizer& normalizer, const InputOptions& options);

/// materialize + to_model_inputs.
ModelInputs window_to_model_inputs(const Window& window, const Normalizer& normalizer,
                                   const InputOptions& options = {});

// ---- index file ---------------------------------------------------------------

struct WindowIndexRow {
  std::string session;
  double t_report = 0.0;
  double fms = 0.0;
  std::optional<Severity> severity;
  bool dropped = false;
  std::string reason;

  friend bool operator==(const WindowIndexRow&, const WindowIndexRow&) = default;
};

void write_window_index(const std::vector<WindowIndexRow>& rows, const std::filesystem::path& path);
std::vector<WindowIndexRow> read_window_index(const std::filesystem::path& path);

}  // namespace sickfuse
