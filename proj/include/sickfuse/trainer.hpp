#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sickfuse/labeling.hpp"
#include "sickfuse/model.hpp"

namespace sickfuse {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 512;
  std::size_t patience = 20;
  double validation_fraction = 0.2;
  std::size_t folds = 10;
  std::uint64_t seed = 1;
  double learning_rate = 1e-3;
  bool participant_folds = false;  // split by participant instead of by window

  /// Throws ConfigError.
  void validate() const;
  std::string to_text() const;

  /// CI-scale defaults: batch 32, 50 epochs.
  static TrainConfig desk();
};

TrainConfig parse_train_config(const std::string& text, TrainConfig base = {});

/// Partition of [0, n) into k shuffled sets whose sizes differ by at most one.
/// Throws ConfigError when n < k or k < 2.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

/// Same, but items sharing a group label always land in the same set; the
/// sizes balance the number of groups, not items.
std::vector<std::vector<std::size_t>> kfold_split_groups(const std::vector<std::string>& groups, std::size_t k,
                                                         std::uint64_t seed);

/// One training example: prepared inputs plus both label forms.
struct Example {
  const ModelInputs* inputs = nullptr;
  double fms = 0.0;
  Severity severity = Severity::None;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_loss;
};

struct History {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 when no validation set was given
  std::optional<double> best_val_loss;
  std::size_t stop_epoch = 0;
  bool early_stopped = false;
};

struct TrainHooks {
  /// Replaces the computed validation loss (tests use it to script schedules).
  std::function<double(std::size_t epoch, FusionModel& model)> validation_loss;
  /// Called after every epoch with the running history.
  std::function<void(const EpochRecord&)> on_epoch;
  /// Ends training after the current epoch when it returns true; the current
  /// parameters are kept.
  std::function<bool(const EpochRecord&, FusionModel& model)> stop;
};

/// Adam on the task loss plus the L2 term, seeded shuffling, batches that
/// never end in a single-sample tail. With a validation set, training stops
/// once `patience` epochs pass without a strictly lower validation loss and
/// the best-validation parameters are restored; without one, all epochs run.
/// Throws DivergenceError on a non-finite loss or gradient.
History train(FusionModel& model, const std::vector<Example>& training, const std::vector<Example>& validation,
              const TrainConfig& config, const TrainHooks& hooks = {});

/// Loss of the model in infer mode over the examples (including the L2 term).
double evaluate_loss(FusionModel& model, const std::vector<Example>& examples);

struct ClassificationMetrics {
  double accuracy = 0.0;
  std::array<std::optional<double>, kSeverityClasses> precision{};
  std::array<std::optional<double>, kSeverityClasses> recall{};
  std::size_t n = 0;
};

/// Confusion-matrix definitions; empty denominators yield absent values.
ClassificationMetrics evaluate_classification(const std::vector<Severity>& predicted, const std::vector<Severity>& labels);

struct RegressionMetrics {
  double rmse = 0.0;
  std::optional<double> plcc;  // absent when either series is constant
  std::optional<double> r2;    // absent when the targets are constant
  std::size_t n = 0;
};

RegressionMetrics evaluate_regression(const std::vector<double>& predicted, const std::vector<double>& targets);

/// What a fold saw, for hygiene checks.
struct FoldAudit {
  std::size_t fold = 0;
  std::vector<std::size_t> test;
  std::vector<std::size_t> train;       // fitted on
  std::vector<std::size_t> validation;  // drawn from the training partition
  std::vector<std::size_t> fitted_on;   // windows used for quantiles and normalization
  QuantileThresholds quantiles;
  Normalizer normalizer;
};

struct FoldResult {
  std::size_t fold = 0;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  std::size_t n_test = 0;
  QuantileThresholds quantiles;
  History history;
  std::optional<ClassificationMetrics> classification;
  std::optional<RegressionMetrics> regression;
  double majority_baseline = 0.0;  // test accuracy of the training partition's most common class
};

struct EvalReport {
  Task task = Task::Classification;
  std::vector<FoldResult> folds;

  struct Row {
    std::string label;  // fold index or "mean"
    std::optional<double> accuracy;
    std::array<std::optional<double>, kSeverityClasses> precision{};
    std::array<std::optional<double>, kSeverityClasses> recall{};
    std::optional<double> rmse;
    std::optional<double> plcc;
    std::optional<double> r2;
    std::optional<double> majority_baseline;
    std::optional<double> stop_epoch;
  };
  /// One row per fold then the mean row; means skip absent values.
  std::vector<Row> rows() const;
  Row mean() const;

  void write_csv(const std::filesystem::path& path) const;
  std::string summary() const;
};

struct CvHooks {
  std::function<void(const FoldAudit&)> audit;
  TrainHooks train;
};

/// k-fold cross validation: per fold a fresh model, quantiles and normalization
/// constants fitted on the training partition only, validation drawn from the
/// training partition.
EvalReport run_cv(const std::vector<WindowData>& windows, const ModelConfig& model_config,
                  const TrainConfig& train_config, const CvHooks& hooks = {});

/// Everything cmd_train produces.
struct TrainedModel {
  FusionModel model;
  Normalizer normalizer;
  QuantileThresholds quantiles;
  History history;
};

/// Trains on all windows with the configured validation split.
TrainedModel train_on_all(const std::vector<WindowData>& windows, const ModelConfig& model_config,
                          const TrainConfig& train_config, const TrainHooks& hooks = {});

void write_history_csv(const History& history, const std::filesystem::path& path);

}  // namespace sickfuse
