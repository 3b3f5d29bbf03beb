#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sickfuse/autodiff.hpp"
#include "sickfuse/labeling.hpp"
#include "sickfuse/ops.hpp"
#include "sickfuse/rng.hpp"

namespace sickfuse {

enum class Task { Classification, Regression };
std::string_view to_string(Task task);
Task parse_task(std::string_view name);

enum class BatchNormAxes { Spatial, Batch };

struct ModelConfig {
  std::vector<Modality> modalities = {Modality::Eye, Modality::Head};
  Task task = Task::Classification;

  // Input geometry.
  std::size_t timestep = kTimestep;
  std::size_t subsequences = kSubsequences;
  std::size_t frame_size = kDefaultFrameSize;
  Selection selection = Selection::Recent;

  // Video-type branches: one block per filter count.
  std::vector<std::size_t> conv3d_filters = {16, 32, 64};
  std::size_t conv3d_kernel = 3;
  std::size_t pool = 2;
  double l2 = 0.01;
  BatchNormAxes video_bn = BatchNormAxes::Spatial;

  // Eye/head branches.
  std::size_t td_filters = 64;
  std::size_t td_kernel = 3;
  bool share_td_conv = true;
  double dropout = 0.5;
  std::size_t lstm_hidden = 128;
  double recurrent_dropout = 0.2;

  std::size_t dense_width = 256;

  /// Throws ConfigError.
  void validate() const;
  std::string to_text() const;
  bool has(Modality m) const;
  std::size_t outputs() const { return task == Task::Classification ? kSeverityClasses : 1; }
  /// Per-sample input shape of a modality, e.g. (60,256,256,3) or (4,15,9).
  Shape input_shape(Modality m) const;
  InputOptions input_options() const;

  /// Gradient-check scale: frames 8x8, timestep 4, widths 2, two video blocks.
  static ModelConfig tiny(Task task);
  /// Desk-scale training: frames 16x16, timestep 12, widths halved.
  static ModelConfig toy(Task task);
};

/// key=value text; unknown keys and bad values throw ConfigError. Keys not
/// given keep the defaults of `base`.
ModelConfig parse_model_config(const std::string& text, ModelConfig base = {});

/// Modality tensors with a leading batch axis.
using Batch = std::map<Modality, Tensor>;

/// Stacks per-window inputs into a batch for the given modalities.
Batch stack_inputs(const std::vector<const ModelInputs*>& inputs, const std::vector<Modality>& modalities);

class FusionModel {
 public:
  /// Glorot-uniform kernels, zero biases (LSTM forget gate 1), unit batchnorm.
  FusionModel(ModelConfig config, std::uint64_t seed);

  FusionModel(const FusionModel&) = delete;
  FusionModel& operator=(const FusionModel&) = delete;
  FusionModel(FusionModel&&) = default;
  FusionModel& operator=(FusionModel&&) = default;

  const ModelConfig& config() const { return config_; }

  /// All parameters in a fixed order, including running batchnorm statistics.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> trainable();
  Parameter& parameter(const std::string& name);
  std::size_t parameter_count() const;

  /// Probabilities (N,4) or linear outputs (N,1). Throws ShapeError when an
  /// enabled modality is missing or mis-shaped. `rng` drives dropout in train mode.
  Var forward(Tape& tape, const Batch& batch, ops::Mode mode, Rng& rng);

  /// Infer-mode forward without gradients.
  Tensor infer(const Batch& batch);

  /// Copies every parameter value from `other` (same config).
  void copy_from(const FusionModel& other);

 private:
  Parameter& add(std::string name, Tensor value, bool trainable = true);
  Var video_branch(Tape& tape, Modality m, const Tensor& x, ops::Mode mode);
  Var sequence_branch(Tape& tape, Modality m, const Tensor& x, ops::Mode mode, Rng& rng);
  Var batchnorm(Tape& tape, const std::string& prefix, Var x, ops::Mode mode);

  ModelConfig config_;
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

/// Task loss: RMSE for regression (targets (N,1)), cross-entropy for
/// classification (one-hot targets (N,4)).
Var task_loss(Var pred, const Tensor& target, Task task);

/// Task loss plus the L2 term registered by the video convolutions on `tape`.
Var total_loss(Tape& tape, Var pred, const Tensor& target, Task task);

/// Targets for a batch: one-hot severities or FMS column.
Tensor make_targets(const std::vector<double>& fms, const std::vector<Severity>& severity, Task task);

/// Lowest index wins ties.
Severity argmax_severity(const std::array<double, kSeverityClasses>& probabilities);

struct Prediction {
  std::optional<Severity> severity;
  std::array<double, kSeverityClasses> probabilities{};
  double raw = 0.0;      // regression output before clamping
  double fms_hat = 0.0;  // raw clamped to [0, 10]
};

std::vector<Prediction> predict(FusionModel& model, const Batch& batch);
Prediction predict(FusionModel& model, const ModelInputs& inputs);

/// A trained model with the constants needed to prepare its inputs.
struct ModelBundle {
  FusionModel model;
  Normalizer normalizer;
  std::optional<QuantileThresholds> quantiles;
};

/// Writes the SFM1 checkpoint at `path` and a key=value sidecar at
/// `path` with extension ".cfg" holding the config and normalization constants.
void save_model(const FusionModel& model, const Normalizer& normalizer,
                const std::optional<QuantileThresholds>& quantiles, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

}  // namespace sickfuse
