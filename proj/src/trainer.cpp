#include "sickfuse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "kv_util.hpp"
#include "text_util.hpp"
#include "sickfuse/adam.hpp"
#include "sickfuse/errors.hpp"
#include "sickfuse/rng.hpp"

namespace sickfuse {

namespace {

detail::KvBinder make_binder(TrainConfig& c) {
  detail::KvBinder b("train config");
  b.bind("epochs", c.epochs);
  b.bind("batch_size", c.batch_size);
  b.bind("patience", c.patience);
  b.bind("validation_fraction", c.validation_fraction);
  b.bind("folds", c.folds);
  b.bind("seed", c.seed);
  b.bind("learning_rate", c.learning_rate);
  b.bind("participant_folds", c.participant_folds);
  return b;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& order, std::size_t k) {
  std::vector<std::vector<std::size_t>> out(k);
  const std::size_t base = order.size() / k, extra = order.size() % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    out[f].assign(order.begin() + static_cast<long>(pos), order.begin() + static_cast<long>(pos + size));
    pos += size;
  }
  return out;
}

/// Batches of a shuffled order; a trailing single sample joins the previous batch.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + static_cast<long>(i), order.begin() + static_cast<long>(end));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

Batch batch_of(const std::vector<Example>& examples, const std::vector<std::size_t>& idx, const ModelConfig& config) {
  std::vector<const ModelInputs*> in;
  in.reserve(idx.size());
  for (std::size_t i : idx) in.push_back(examples[i].inputs);
  return stack_inputs(in, config.modalities);
}

Tensor targets_of(const std::vector<Example>& examples, const std::vector<std::size_t>& idx, Task task) {
  std::vector<double> fms;
  std::vector<Severity> sev;
  for (std::size_t i : idx) {
    fms.push_back(examples[i].fms);
    sev.push_back(examples[i].severity);
  }
  return make_targets(fms, sev, task);
}

std::vector<Tensor> snapshot(FusionModel& model) {
  std::vector<Tensor> out;
  for (Parameter* p : model.parameters()) out.push_back(p->value());
  return out;
}

void restore(FusionModel& model, const std::vector<Tensor>& values) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value() = values[i];
}

/// Infer-mode outputs over all examples, in chunks.
Tensor infer_all(FusionModel& model, const std::vector<Example>& examples, double* penalty) {
  const std::size_t k = model.config().outputs();
  Tensor out({examples.size(), k}, 0.0);
  constexpr std::size_t chunk_size = 256;
  for (std::size_t start = 0; start < examples.size(); start += chunk_size) {
    std::vector<std::size_t> idx(std::min(chunk_size, examples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    Tape tape;
    Rng unused(0);
    const Tensor y = model.forward(tape, batch_of(examples, idx, model.config()), ops::Mode::Infer, unused).value();
    if (penalty && start == 0) *penalty = tape.regularization_value();
    std::copy(y.data().begin(), y.data().end(), out.data().begin() + static_cast<long>(start * k));
  }
  return out;
}

std::optional<double> mean_present(const std::vector<std::optional<double>>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& x : v) {
    if (x) {
      s += *x;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

std::string fmt(const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); }

Severity majority_class(const std::vector<Severity>& labels) {
  std::array<std::size_t, kSeverityClasses> counts{};
  for (Severity s : labels) ++counts[static_cast<std::size_t>(s)];
  std::size_t best = 0;
  for (std::size_t c = 1; c < kSeverityClasses; ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return static_cast<Severity>(best);
}

/// Splits a training partition into (train, validation), both sorted.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_validation(std::vector<std::size_t> partition,
                                                                               double fraction, Rng rng) {
  std::shuffle(partition.begin(), partition.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(partition.size())));
  n_val = std::min(n_val, partition.size() >= 2 ? partition.size() - 2 : std::size_t{0});
  std::vector<std::size_t> val(partition.begin(), partition.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train(partition.begin() + static_cast<long>(n_val), partition.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

struct Prepared {
  QuantileThresholds quantiles;
  Normalizer normalizer;
  std::map<std::size_t, ModelInputs> inputs;
  std::map<std::size_t, Severity> severity;
};

Prepared prepare(const std::vector<WindowData>& windows, const std::vector<std::size_t>& fit_on,
                 const std::vector<std::size_t>& all, const ModelConfig& config) {
  Prepared p;
  std::vector<double> scores;
  std::vector<const WindowData*> fit;
  for (std::size_t i : fit_on) {
    scores.push_back(windows[i].fms);
    fit.push_back(&windows[i]);
  }
  p.quantiles = compute_fms_quantiles(scores);
  p.normalizer = fit_normalizer(fit);
  const InputOptions options = config.input_options();
  for (std::size_t i : all) {
    p.inputs.emplace(i, to_model_inputs(windows[i], p.normalizer, options));
    p.severity.emplace(i, classify_severity(windows[i].fms, p.quantiles));
  }
  return p;
}

std::vector<Example> examples_of(const std::vector<WindowData>& windows, const Prepared& p,
                                 const std::vector<std::size_t>& idx) {
  std::vector<Example> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back({&p.inputs.at(i), windows[i].fms, p.severity.at(i)});
  return out;
}

}  // namespace

// ---- config -------------------------------------------------------------------

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (epochs == 0) fail("epochs must be >= 1");
  if (batch_size < 2) fail("batch_size must be >= 2 (batchnorm needs two samples)");
  if (patience == 0) fail("patience must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) fail("validation_fraction must be in (0, 1)");
  if (folds < 2) fail("folds must be >= 2");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
}

std::string TrainConfig::to_text() const {
  TrainConfig copy = *this;
  return make_binder(copy).to_text();
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.batch_size = 32;
  c.epochs = 50;
  return c;
}

TrainConfig parse_train_config(const std::string& text, TrainConfig base) {
  make_binder(base).apply(text);
  base.validate();
  return base;
}

// ---- folds --------------------------------------------------------------------

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold_split: k must be >= 2");
  if (n < k) throw ConfigError("kfold_split: " + std::to_string(n) + " items cannot fill " + std::to_string(k) + " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, "kfold");
  std::shuffle(order.begin(), order.end(), rng);
  auto folds = chunk(order, k);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::vector<std::size_t>> kfold_split_groups(const std::vector<std::string>& groups, std::size_t k,
                                                         std::uint64_t seed) {
  std::vector<std::string> names = groups;
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  if (k < 2) throw ConfigError("kfold_split_groups: k must be >= 2");
  if (names.size() < k) {
    throw ConfigError("kfold_split_groups: " + std::to_string(names.size()) + " groups cannot fill " +
                      std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, "kfold/groups");
  std::shuffle(order.begin(), order.end(), rng);
  const auto group_folds = chunk(order, k);
  std::map<std::string, std::size_t> fold_of;
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t g : group_folds[f]) fold_of[names[g]] = f;
  }
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < groups.size(); ++i) folds[fold_of.at(groups[i])].push_back(i);
  return folds;
}

// ---- training -------------------------------------------------------------------

double evaluate_loss(FusionModel& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw EmptyError("evaluate_loss: no examples");
  double penalty = 0.0;
  const Tensor out = infer_all(model, examples, &penalty);
  const std::size_t k = out.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (model.config().task == Task::Regression) {
      const double r = out[i] - examples[i].fms;
      total += r * r;
    } else {
      const double p = out[i * k + static_cast<std::size_t>(examples[i].severity)];
      total -= std::log(std::max(p, ops::kProbabilityFloor));
    }
  }
  total /= static_cast<double>(examples.size());
  if (model.config().task == Task::Regression) total = std::sqrt(total);
  return total + penalty;
}

History train(FusionModel& model, const std::vector<Example>& training, const std::vector<Example>& validation,
              const TrainConfig& config, const TrainHooks& hooks) {
  if (training.empty()) throw EmptyError("train: empty training set");
  if (config.epochs == 0 || config.batch_size == 0 || config.patience == 0) {
    throw ConfigError("train: epochs, batch_size and patience must be positive");
  }
  const Task task = model.config().task;
  Adam adam(model.trainable(), AdamOptions{config.learning_rate});
  Rng shuffle_rng = make_rng(config.seed, "shuffle");
  Rng dropout_rng = make_rng(config.seed, "dropout");
  const bool monitor = !validation.empty() || static_cast<bool>(hooks.validation_loss);

  History history;
  std::vector<Tensor> best;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(training.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const auto batches = make_batches(order, config.batch_size);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      adam.zero_grad();
      double value = 0.0;
      try {
        Tape tape;
        Var pred = model.forward(tape, batch_of(training, batches[b], model.config()), ops::Mode::Train, dropout_rng);
        Var loss = total_loss(tape, pred, targets_of(training, batches[b], task), task);
        value = loss.value().item();
        if (!std::isfinite(value)) throw DivergenceError(epoch, b + 1);
        tape.backward(loss);
      } catch (const NonFiniteError&) {
        throw DivergenceError(epoch, b + 1);
      }
      for (Parameter* p : model.trainable()) {
        if (!all_finite(p->grad())) throw DivergenceError(epoch, b + 1);
      }
      adam.step();
      for (Parameter* p : model.trainable()) {
        if (!all_finite(p->value())) throw DivergenceError(epoch, b + 1);
      }
      loss_sum += value * static_cast<double>(batches[b].size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(training.size());
    if (monitor) {
      double v = 0.0;
      try {
        v = hooks.validation_loss ? hooks.validation_loss(epoch, model) : evaluate_loss(model, validation);
      } catch (const NonFiniteError&) {
        throw DivergenceError(epoch, 0);
      }
      if (!std::isfinite(v)) throw DivergenceError(epoch, 0);
      rec.val_loss = v;
      if (!history.best_val_loss || v < *history.best_val_loss) {
        history.best_val_loss = v;
        history.best_epoch = epoch;
        best = snapshot(model);
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    history.epochs.push_back(rec);
    history.stop_epoch = epoch;
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (hooks.stop && hooks.stop(rec, model)) return history;
    if (monitor && since_best >= config.patience) {
      history.early_stopped = true;
      break;
    }
  }
  if (!best.empty()) restore(model, best);
  return history;
}

// ---- metrics --------------------------------------------------------------------

ClassificationMetrics evaluate_classification(const std::vector<Severity>& predicted,
                                              const std::vector<Severity>& labels) {
  if (predicted.size() != labels.size()) throw ContractError("evaluate_classification: length mismatch");
  if (labels.empty()) throw EmptyError("evaluate_classification: no samples");
  std::array<std::array<std::size_t, kSeverityClasses>, kSeverityClasses> confusion{};  // [label][pred]
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predicted[i])];
  }
  ClassificationMetrics m;
  m.n = labels.size();
  std::size_t correct = 0;
  for (std::size_t c = 0; c < kSeverityClasses; ++c) {
    correct += confusion[c][c];
    std::size_t predicted_c = 0, actual_c = 0;
    for (std::size_t o = 0; o < kSeverityClasses; ++o) {
      predicted_c += confusion[o][c];
      actual_c += confusion[c][o];
    }
    if (predicted_c > 0) m.precision[c] = static_cast<double>(confusion[c][c]) / static_cast<double>(predicted_c);
    if (actual_c > 0) m.recall[c] = static_cast<double>(confusion[c][c]) / static_cast<double>(actual_c);
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  return m;
}

RegressionMetrics evaluate_regression(const std::vector<double>& predicted, const std::vector<double>& targets) {
  if (predicted.size() != targets.size()) throw ContractError("evaluate_regression: length mismatch");
  if (targets.empty()) throw EmptyError("evaluate_regression: no samples");
  const std::size_t n = targets.size();
  const double dn = static_cast<double>(n);
  double mp = 0.0, mt = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mp += predicted[i];
    mt += targets[i];
    ss_res += (predicted[i] - targets[i]) * (predicted[i] - targets[i]);
  }
  mp /= dn;
  mt /= dn;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (predicted[i] - mp) * (targets[i] - mt);
    sxx += (predicted[i] - mp) * (predicted[i] - mp);
    syy += (targets[i] - mt) * (targets[i] - mt);
  }
  RegressionMetrics m;
  m.n = n;
  m.rmse = std::sqrt(ss_res / dn);
  if (sxx > 0.0 && syy > 0.0) m.plcc = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (syy > 0.0) m.r2 = 1.0 - ss_res / syy;
  return m;
}

// ---- report -------------------------------------------------------------------

std::vector<EvalReport::Row> EvalReport::rows() const {
  std::vector<Row> out;
  for (const auto& f : folds) {
    Row r;
    r.label = std::to_string(f.fold);
    if (f.classification) {
      r.accuracy = f.classification->accuracy;
      r.precision = f.classification->precision;
      r.recall = f.classification->recall;
    }
    if (f.regression) {
      r.rmse = f.regression->rmse;
      r.plcc = f.regression->plcc;
      r.r2 = f.regression->r2;
    }
    r.majority_baseline = f.majority_baseline;
    r.stop_epoch = static_cast<double>(f.history.stop_epoch);
    out.push_back(std::move(r));
  }
  out.push_back(mean());
  return out;
}

EvalReport::Row EvalReport::mean() const {
  std::vector<Row> per_fold;
  for (const auto& f : folds) {
    Row r;
    if (f.classification) {
      r.accuracy = f.classification->accuracy;
      r.precision = f.classification->precision;
      r.recall = f.classification->recall;
    }
    if (f.regression) {
      r.rmse = f.regression->rmse;
      r.plcc = f.regression->plcc;
      r.r2 = f.regression->r2;
    }
    r.majority_baseline = f.majority_baseline;
    r.stop_epoch = static_cast<double>(f.history.stop_epoch);
    per_fold.push_back(std::move(r));
  }
  auto collect = [&](auto getter) {
    std::vector<std::optional<double>> v;
    for (const auto& r : per_fold) v.push_back(getter(r));
    return mean_present(v);
  };
  Row m;
  m.label = "mean";
  m.accuracy = collect([](const Row& r) { return r.accuracy; });
  for (std::size_t c = 0; c < kSeverityClasses; ++c) {
    m.precision[c] = collect([c](const Row& r) { return r.precision[c]; });
    m.recall[c] = collect([c](const Row& r) { return r.recall[c]; });
  }
  m.rmse = collect([](const Row& r) { return r.rmse; });
  m.plcc = collect([](const Row& r) { return r.plcc; });
  m.r2 = collect([](const Row& r) { return r.r2; });
  m.majority_baseline = collect([](const Row& r) { return r.majority_baseline; });
  m.stop_epoch = collect([](const Row& r) { return r.stop_epoch; });
  return m;
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  auto out = detail::open_for_write(path);
  out << "fold,accuracy";
  for (const char* kind : {"precision", "recall"}) {
    for (Severity s : {Severity::None, Severity::Low, Severity::Medium, Severity::High}) {
      std::string name(to_string(s));
      std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
      out << ',' << kind << '_' << name;
    }
  }
  out << ",rmse,plcc,r2,majority_baseline,stop_epoch\n";
  for (const Row& r : rows()) {
    out << r.label << ',' << fmt(r.accuracy);
    for (const auto& v : r.precision) out << ',' << fmt(v);
    for (const auto& v : r.recall) out << ',' << fmt(v);
    out << ',' << fmt(r.rmse) << ',' << fmt(r.plcc) << ',' << fmt(r.r2) << ',' << fmt(r.majority_baseline) << ','
        << fmt(r.stop_epoch) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::string EvalReport::summary() const {
  std::ostringstream s;
  s << folds.size() << "-fold cross validation, task " << to_string(task) << "\n";
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(2);
    o << 100.0 * *v << "%";
    return o.str();
  };
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(4);
    o << *v;
    return o.str();
  };
  for (const Row& r : rows()) {
    s << (r.label == "mean" ? "mean  " : "fold " + r.label + " ");
    if (task == Task::Classification) {
      s << " accuracy " << pct(r.accuracy) << "  majority " << pct(r.majority_baseline) << "  precision";
      for (const auto& v : r.precision) s << ' ' << pct(v);
      s << "  recall";
      for (const auto& v : r.recall) s << ' ' << pct(v);
    } else {
      s << " rmse " << num(r.rmse) << "  plcc " << num(r.plcc) << "  r2 " << num(r.r2);
    }
    s << "  stop " << num(r.stop_epoch) << "\n";
  }
  return s.str();
}

// ---- cross validation ----------------------------------------------------------

EvalReport run_cv(const std::vector<WindowData>& windows, const ModelConfig& model_config,
                  const TrainConfig& train_config, const CvHooks& hooks) {
  model_config.validate();
  train_config.validate();
  std::vector<std::vector<std::size_t>> folds;
  if (train_config.participant_folds) {
    std::vector<std::string> groups;
    for (const auto& w : windows) groups.push_back(w.participant);
    folds = kfold_split_groups(groups, train_config.folds, train_config.seed);
  } else {
    folds = kfold_split(windows.size(), train_config.folds, train_config.seed);
  }

  EvalReport report;
  report.task = model_config.task;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::string tag = "fold/" + std::to_string(f);
    std::vector<std::size_t> partition;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g != f) partition.insert(partition.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(partition.begin(), partition.end());
    auto [train_idx, val_idx] =
        split_validation(partition, train_config.validation_fraction, make_rng(train_config.seed, tag + "/validation"));

    std::vector<std::size_t> all = partition;
    all.insert(all.end(), folds[f].begin(), folds[f].end());
    const Prepared prep = prepare(windows, partition, all, model_config);

    if (hooks.audit) {
      hooks.audit(FoldAudit{f, folds[f], train_idx, val_idx, partition, prep.quantiles, prep.normalizer});
    }

    FusionModel model(model_config, derive_seed(train_config.seed, tag + "/model"));
    TrainConfig fold_config = train_config;
    fold_config.seed = derive_seed(train_config.seed, tag + "/train");
    const auto train_ex = examples_of(windows, prep, train_idx);
    const auto val_ex = examples_of(windows, prep, val_idx);
    const auto test_ex = examples_of(windows, prep, folds[f]);

    FoldResult result;
    result.fold = f;
    result.n_train = train_idx.size();
    result.n_validation = val_idx.size();
    result.n_test = folds[f].size();
    result.quantiles = prep.quantiles;
    result.history = train(model, train_ex, val_ex, fold_config, hooks.train);

    const Tensor out = infer_all(model, test_ex, nullptr);
    std::vector<Severity> labels;
    for (const auto& e : test_ex) labels.push_back(e.severity);
    if (model_config.task == Task::Classification) {
      std::vector<Severity> predicted;
      for (std::size_t i = 0; i < test_ex.size(); ++i) {
        std::array<double, kSeverityClasses> p{};
        for (std::size_t c = 0; c < kSeverityClasses; ++c) p[c] = out[i * kSeverityClasses + c];
        predicted.push_back(argmax_severity(p));
      }
      result.classification = evaluate_classification(predicted, labels);
    } else {
      std::vector<double> predicted, targets;
      for (std::size_t i = 0; i < test_ex.size(); ++i) {
        predicted.push_back(out[i]);
        targets.push_back(test_ex[i].fms);
      }
      result.regression = evaluate_regression(predicted, targets);
    }
    std::vector<Severity> partition_labels;
    for (std::size_t i : partition) partition_labels.push_back(prep.severity.at(i));
    const Severity majority = majority_class(partition_labels);
    result.majority_baseline =
        static_cast<double>(std::count(labels.begin(), labels.end(), majority)) / static_cast<double>(labels.size());
    report.folds.push_back(std::move(result));
  }
  return report;
}

TrainedModel train_on_all(const std::vector<WindowData>& windows, const ModelConfig& model_config,
                          const TrainConfig& train_config, const TrainHooks& hooks) {
  model_config.validate();
  train_config.validate();
  if (windows.size() < 4) throw ContractError("train_on_all: need at least 4 windows");
  std::vector<std::size_t> all(windows.size());
  std::iota(all.begin(), all.end(), 0);
  auto [train_idx, val_idx] =
      split_validation(all, train_config.validation_fraction, make_rng(train_config.seed, "all/validation"));
  Prepared prep = prepare(windows, all, all, model_config);
  TrainedModel out{FusionModel(model_config, derive_seed(train_config.seed, "all/model")), prep.normalizer,
                   prep.quantiles, {}};
  TrainConfig cfg = train_config;
  cfg.seed = derive_seed(train_config.seed, "all/train");
  out.history = train(out.model, examples_of(windows, prep, train_idx), examples_of(windows, prep, val_idx), cfg, hooks);
  return out;
}

void write_history_csv(const History& history, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << detail::format_double(e.train_loss) << ',' << fmt(e.val_loss) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace sickfuse
