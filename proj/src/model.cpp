#include "sickfuse/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "kv_util.hpp"
#include "sickfuse/binary_io.hpp"
#include "sickfuse/errors.hpp"

namespace fs = std::filesystem;

namespace sickfuse {

std::string_view to_string(Task task) {
  return task == Task::Classification ? "classification" : "regression";
}

Task parse_task(std::string_view name) {
  if (name == "classification") return Task::Classification;
  if (name == "regression") return Task::Regression;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

detail::KvBinder make_binder(ModelConfig& c) {
  detail::KvBinder b("model config");
  b.bind(
      "modalities",
      [&c](std::string_view s) {
        c.modalities.clear();
        for (auto name : detail::split(s, ',')) {
          name = detail::trim(name);
          if (!name.empty()) c.modalities.push_back(parse_modality(name));
        }
      },
      [&c] {
        std::string out;
        for (std::size_t i = 0; i < c.modalities.size(); ++i) {
          out += (i ? "," : "") + std::string(to_string(c.modalities[i]));
        }
        return out;
      });
  b.bind("task", [&c](std::string_view s) { c.task = parse_task(s); },
         [&c] { return std::string(to_string(c.task)); });
  b.bind("timestep", c.timestep);
  b.bind("subsequences", c.subsequences);
  b.bind("frame_size", c.frame_size);
  b.bind(
      "selection",
      [&c](std::string_view s) {
        if (s == "recent") c.selection = Selection::Recent;
        else if (s == "uniform") c.selection = Selection::UniformStride;
        else throw ConfigError("model config: selection must be recent or uniform");
      },
      [&c] { return std::string(c.selection == Selection::Recent ? "recent" : "uniform"); });
  b.bind(
      "conv3d_filters",
      [&b, &c](std::string_view s) {
        c.conv3d_filters.clear();
        for (auto f : detail::split(s, ',')) {
          c.conv3d_filters.push_back(static_cast<std::size_t>(b.to_u64("conv3d_filters", detail::trim(f))));
        }
      },
      [&c] { return join_sizes(c.conv3d_filters); });
  b.bind("conv3d_kernel", c.conv3d_kernel);
  b.bind("pool", c.pool);
  b.bind("l2", c.l2);
  b.bind(
      "video_bn",
      [&c](std::string_view s) {
        if (s == "spatial") c.video_bn = BatchNormAxes::Spatial;
        else if (s == "batch") c.video_bn = BatchNormAxes::Batch;
        else throw ConfigError("model config: video_bn must be spatial or batch");
      },
      [&c] { return std::string(c.video_bn == BatchNormAxes::Spatial ? "spatial" : "batch"); });
  b.bind("td_filters", c.td_filters);
  b.bind("td_kernel", c.td_kernel);
  b.bind("share_td_conv", c.share_td_conv);
  b.bind("dropout", c.dropout);
  b.bind("lstm_hidden", c.lstm_hidden);
  b.bind("recurrent_dropout", c.recurrent_dropout);
  b.bind("dense_width", c.dense_width);
  return b;
}

bool is_video(Modality m) { return m == Modality::Video || m == Modality::Flow || m == Modality::Disparity; }

std::size_t features_of(Modality m) {
  switch (m) {
    case Modality::Video:
    case Modality::Flow: return 3;
    case Modality::Disparity: return 1;
    case Modality::Eye: return kEyeFeatures;
    case Modality::Head: return kHeadFeatures;
  }
  return 0;
}

std::string prefix_of(Modality m) { return std::string(to_string(m)) + "/"; }

/// Canonical branch order regardless of how the config lists modalities.
std::vector<Modality> ordered(const std::vector<Modality>& mods) {
  std::vector<Modality> out;
  for (Modality m : kModalities) {
    if (std::find(mods.begin(), mods.end(), m) != mods.end()) out.push_back(m);
  }
  return out;
}

Tensor glorot(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor t(shape, 0.0);
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

// ---- config -------------------------------------------------------------------

bool ModelConfig::has(Modality m) const {
  return std::find(modalities.begin(), modalities.end(), m) != modalities.end();
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (modalities.empty()) fail("at least one modality must be enabled");
  if (std::set<Modality>(modalities.begin(), modalities.end()).size() != modalities.size()) {
    fail("duplicate modality");
  }
  if (timestep == 0 || subsequences == 0) fail("timestep and subsequences must be positive");
  if (dense_width == 0) fail("dense_width must be positive");
  if (!(l2 >= 0.0)) fail("l2 must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(recurrent_dropout >= 0.0 && recurrent_dropout < 1.0)) fail("recurrent_dropout must be in [0, 1)");
  const bool video = std::any_of(modalities.begin(), modalities.end(), is_video);
  const bool sequence = has(Modality::Eye) || has(Modality::Head);
  if (video) {
    if (conv3d_filters.empty()) fail("conv3d_filters must list at least one block");
    if (std::find(conv3d_filters.begin(), conv3d_filters.end(), 0u) != conv3d_filters.end()) {
      fail("conv3d filter counts must be positive");
    }
    if (conv3d_kernel == 0 || pool == 0 || frame_size == 0) fail("conv3d_kernel, pool and frame_size must be positive");
    std::size_t t = timestep, s = frame_size;
    for (std::size_t b = 0; b < conv3d_filters.size(); ++b) {
      if (t < pool || s < pool) {
        fail("input (" + std::to_string(timestep) + " steps, " + std::to_string(frame_size) + " px) too small for " +
             std::to_string(conv3d_filters.size()) + " pooling blocks");
      }
      t = (t - pool) / pool + 1;
      s = (s - pool) / pool + 1;
    }
  }
  if (sequence) {
    if (timestep % subsequences != 0) fail("timestep must be divisible by subsequences");
    if (td_filters == 0 || td_kernel == 0 || lstm_hidden == 0) fail("td_filters, td_kernel and lstm_hidden must be positive");
    if (timestep / subsequences < 2) fail("subsequence length must be >= 2 for the time-distributed pooling");
  }
}

std::string ModelConfig::to_text() const {
  ModelConfig copy = *this;
  return make_binder(copy).to_text();
}

Shape ModelConfig::input_shape(Modality m) const {
  if (is_video(m)) return {timestep, frame_size, frame_size, features_of(m)};
  return {subsequences, timestep / subsequences, features_of(m)};
}

InputOptions ModelConfig::input_options() const {
  InputOptions o;
  o.timestep = timestep;
  o.subsequences = subsequences;
  o.selection = selection;
  o.modalities = modalities;
  return o;
}

ModelConfig ModelConfig::tiny(Task task) {
  ModelConfig c;
  c.modalities = {Modality::Video, Modality::Flow, Modality::Disparity, Modality::Eye, Modality::Head};
  c.task = task;
  c.timestep = 4;
  c.subsequences = 2;
  c.frame_size = 8;
  c.conv3d_filters = {2, 2};
  c.td_filters = 2;
  c.lstm_hidden = 2;
  c.dense_width = 2;
  return c;
}

ModelConfig ModelConfig::toy(Task task) {
  ModelConfig c;
  c.task = task;
  c.timestep = 12;
  c.subsequences = 4;
  c.frame_size = 16;
  c.conv3d_filters = {8, 16, 32};
  c.td_filters = 32;
  c.lstm_hidden = 64;
  c.dense_width = 128;
  return c;
}

ModelConfig parse_model_config(const std::string& text, ModelConfig base) {
  make_binder(base).apply(text);
  base.validate();
  return base;
}

// ---- batches ------------------------------------------------------------------

Batch stack_inputs(const std::vector<const ModelInputs*>& inputs, const std::vector<Modality>& modalities) {
  if (inputs.empty()) throw ContractError("stack_inputs: empty batch");
  Batch batch;
  for (Modality m : modalities) {
    const Tensor& first = inputs[0]->at(m);
    Shape shape = {inputs.size()};
    shape.insert(shape.end(), first.shape().begin(), first.shape().end());
    Tensor out(shape, 0.0);
    const std::size_t n = first.size();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Tensor& t = inputs[i]->at(m);
      if (t.shape() != first.shape()) {
        throw ShapeError("stack_inputs: " + std::string(to_string(m)) + " shapes differ within batch");
      }
      std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<long>(i * n));
    }
    batch.emplace(m, std::move(out));
  }
  return batch;
}

// ---- model --------------------------------------------------------------------

Parameter& FusionModel::add(std::string name, Tensor value, bool trainable) {
  index_[name] = params_.size();
  params_.emplace_back(std::move(name), std::move(value), trainable);
  return params_.back();
}

FusionModel::FusionModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng = make_rng(seed, "init");
  auto add_bn = [this](const std::string& p, std::size_t c) {
    add(p + "gamma", Tensor({c}, 1.0));
    add(p + "beta", Tensor({c}, 0.0));
    add(p + "running_mean", Tensor({c}, 0.0), false);
    add(p + "running_var", Tensor({c}, 1.0), false);
  };
  const std::size_t k = config_.conv3d_kernel;
  std::size_t fused = 0;
  for (Modality m : ordered(config_.modalities)) {
    const std::string p = prefix_of(m);
    if (is_video(m)) {
      std::size_t cin = features_of(m);
      std::size_t t = config_.timestep, s = config_.frame_size;
      for (std::size_t b = 0; b < config_.conv3d_filters.size(); ++b) {
        const std::size_t cout = config_.conv3d_filters[b];
        const std::string bp = p + "block" + std::to_string(b) + "/";
        add(bp + "kernel", glorot({k, k, k, cin, cout}, k * k * k * cin, k * k * k * cout, rng));
        add(bp + "bias", Tensor({cout}, 0.0));
        t = (t - config_.pool) / config_.pool + 1;
        s = (s - config_.pool) / config_.pool + 1;
        const std::size_t bn_channels = config_.video_bn == BatchNormAxes::Spatial ? cout : t * s * s * cout;
        add_bn(bp + "bn/", bn_channels);
        cin = cout;
      }
      fused += t * s * s * cin;
    } else {
      const std::size_t f = features_of(m);
      const std::size_t len = config_.timestep / config_.subsequences;
      const std::size_t kk = config_.td_kernel, nf = config_.td_filters;
      const std::size_t convs = config_.share_td_conv ? 1 : config_.subsequences;
      for (std::size_t c = 0; c < convs; ++c) {
        const std::string cp = p + (config_.share_td_conv ? std::string("td_conv/") : "td_conv" + std::to_string(c) + "/");
        add(cp + "kernel", glorot({kk, f, nf}, kk * f, kk * nf, rng));
        add(cp + "bias", Tensor({nf}, 0.0));
      }
      const std::size_t pooled = (len - 2) / 2 + 1;
      const std::size_t in = pooled * nf, h = config_.lstm_hidden;
      add(p + "lstm/weights", glorot({in, 4 * h}, in, 4 * h, rng));
      add(p + "lstm/recurrent", glorot({h, 4 * h}, h, 4 * h, rng));
      Tensor bias({4 * h}, 0.0);
      for (std::size_t j = h; j < 2 * h; ++j) bias[j] = 1.0;
      add(p + "lstm/bias", std::move(bias));
      add(p + "dense/weights", glorot({h, config_.dense_width}, h, config_.dense_width, rng));
      add(p + "dense/bias", Tensor({config_.dense_width}, 0.0));
      add_bn(p + "bn/", config_.dense_width);
      fused += config_.dense_width;
    }
  }
  const std::size_t w = config_.dense_width, out = config_.outputs();
  add("fusion/weights", glorot({fused, w}, fused, w, rng));
  add("fusion/bias", Tensor({w}, 0.0));
  add("output/weights", glorot({w, out}, w, out, rng));
  add("output/bias", Tensor({out}, 0.0));
}

std::vector<Parameter*> FusionModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> FusionModel::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> FusionModel::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p.trainable()) out.push_back(&p);
  }
  return out;
}

Parameter& FusionModel::parameter(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("no parameter named '" + name + "'");
  return params_[it->second];
}

std::size_t FusionModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable()) n += p.value().size();
  }
  return n;
}

void FusionModel::copy_from(const FusionModel& other) {
  if (other.params_.size() != params_.size()) throw ContractError("copy_from: parameter lists differ");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name() != other.params_[i].name() ||
        params_[i].value().shape() != other.params_[i].value().shape()) {
      throw ContractError("copy_from: parameter '" + params_[i].name() + "' differs");
    }
    params_[i].value() = other.params_[i].value();
  }
}

Var FusionModel::batchnorm(Tape& tape, const std::string& prefix, Var x, ops::Mode mode) {
  return ops::batchnorm(x, tape.watch(parameter(prefix + "gamma")), tape.watch(parameter(prefix + "beta")),
                        parameter(prefix + "running_mean").value(), parameter(prefix + "running_var").value(), mode);
}

Var FusionModel::video_branch(Tape& tape, Modality m, const Tensor& x, ops::Mode mode) {
  const std::string p = prefix_of(m);
  const std::size_t n = x.dim(0);
  Var h = tape.constant(x);
  const Shape window(3, config_.pool);
  for (std::size_t b = 0; b < config_.conv3d_filters.size(); ++b) {
    const std::string bp = p + "block" + std::to_string(b) + "/";
    h = ops::conv3d(h, tape.watch(parameter(bp + "kernel")), tape.watch(parameter(bp + "bias")), ops::Padding::Same,
                    config_.l2);
    h = ops::activation(h, ops::Activation::Relu);
    h = ops::maxpool(h, window, window);
    if (config_.video_bn == BatchNormAxes::Spatial) {
      h = batchnorm(tape, bp + "bn/", h, mode);
    } else {
      const Shape s = h.shape();
      h = ops::reshape(batchnorm(tape, bp + "bn/", ops::reshape(h, Shape{n, h.value().size() / n}), mode), s);
    }
  }
  return ops::reshape(h, Shape{n, h.value().size() / n});
}

Var FusionModel::sequence_branch(Tape& tape, Modality m, const Tensor& x, ops::Mode mode, Rng& rng) {
  const std::string p = prefix_of(m);
  const std::size_t n = x.dim(0), sub = config_.subsequences;
  Var in = tape.constant(x);
  Var h;
  if (config_.share_td_conv) {
    h = ops::conv1d(in, tape.watch(parameter(p + "td_conv/kernel")), tape.watch(parameter(p + "td_conv/bias")));
  } else {
    std::vector<Var> parts;
    for (std::size_t s = 0; s < sub; ++s) {
      const std::string cp = p + "td_conv" + std::to_string(s) + "/";
      Var y = ops::conv1d(ops::take(in, s), tape.watch(parameter(cp + "kernel")), tape.watch(parameter(cp + "bias")));
      parts.push_back(ops::reshape(y, Shape{n, y.value().size() / n}));
    }
    const std::size_t len = config_.timestep / sub;
    h = ops::reshape(ops::concat(parts), Shape{n, sub, len, config_.td_filters});
  }
  h = ops::activation(h, ops::Activation::Relu);
  h = ops::maxpool(h, Shape{2}, Shape{2});
  h = ops::dropout(h, config_.dropout, mode, rng);
  h = ops::reshape(h, Shape{n, sub, h.value().size() / (n * sub)});
  h = ops::lstm(h, tape.watch(parameter(p + "lstm/weights")), tape.watch(parameter(p + "lstm/recurrent")),
                tape.watch(parameter(p + "lstm/bias")), config_.recurrent_dropout, mode, rng);
  h = ops::dense(h, tape.watch(parameter(p + "dense/weights")), tape.watch(parameter(p + "dense/bias")));
  h = ops::activation(h, ops::Activation::Relu);
  return batchnorm(tape, p + "bn/", h, mode);
}

Var FusionModel::forward(Tape& tape, const Batch& batch, ops::Mode mode, Rng& rng) {
  std::vector<Var> branches;
  std::size_t n = 0;
  for (Modality m : ordered(config_.modalities)) {
    auto it = batch.find(m);
    if (it == batch.end()) throw ShapeError("missing input for modality " + std::string(to_string(m)));
    const Tensor& x = it->second;
    const Shape expected = config_.input_shape(m);
    const Shape& got = x.shape();
    if (got.size() != expected.size() + 1 || !std::equal(expected.begin(), expected.end(), got.begin() + 1)) {
      throw ShapeError(std::string(to_string(m)) + " input must be (N, " + shape_string(expected).substr(1) +
                       ", got " + shape_string(got));
    }
    if (n == 0) n = got[0];
    if (got[0] != n || n == 0) throw ShapeError("batch sizes differ between modalities");
    branches.push_back(is_video(m) ? video_branch(tape, m, x, mode) : sequence_branch(tape, m, x, mode, rng));
  }
  Var fused = branches.size() == 1 ? branches[0] : ops::concat(branches);
  Var h = ops::dense(fused, tape.watch(parameter("fusion/weights")), tape.watch(parameter("fusion/bias")));
  h = ops::activation(h, ops::Activation::Relu);
  Var out = ops::dense(h, tape.watch(parameter("output/weights")), tape.watch(parameter("output/bias")));
  if (config_.task == Task::Classification) out = ops::activation(out, ops::Activation::Softmax);
  return out;
}

Tensor FusionModel::infer(const Batch& batch) {
  Tape tape;
  Rng unused(0);
  return forward(tape, batch, ops::Mode::Infer, unused).value();
}

// ---- losses and prediction ------------------------------------------------------

Var task_loss(Var pred, const Tensor& target, Task task) {
  return task == Task::Regression ? ops::loss_rmse(pred, target) : ops::loss_crossentropy(pred, target);
}

Var total_loss(Tape& tape, Var pred, const Tensor& target, Task task) {
  return ops::add(task_loss(pred, target, task), tape.regularization());
}

Tensor make_targets(const std::vector<double>& fms, const std::vector<Severity>& severity, Task task) {
  if (task == Task::Regression) return Tensor({fms.size(), 1}, fms);
  Tensor t({severity.size(), kSeverityClasses}, 0.0);
  for (std::size_t i = 0; i < severity.size(); ++i) t[i * kSeverityClasses + static_cast<std::size_t>(severity[i])] = 1.0;
  return t;
}

Severity argmax_severity(const std::array<double, kSeverityClasses>& probabilities) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kSeverityClasses; ++i) {
    if (probabilities[i] > probabilities[best]) best = i;
  }
  return static_cast<Severity>(best);
}

std::vector<Prediction> predict(FusionModel& model, const Batch& batch) {
  const Tensor out = model.infer(batch);
  const std::size_t n = out.dim(0), k = out.dim(1);
  std::vector<Prediction> preds(n);
  for (std::size_t i = 0; i < n; ++i) {
    Prediction& p = preds[i];
    if (model.config().task == Task::Classification) {
      for (std::size_t j = 0; j < k; ++j) p.probabilities[j] = out[i * k + j];
      p.severity = argmax_severity(p.probabilities);
    } else {
      p.raw = out[i];
      p.fms_hat = std::clamp(p.raw, 0.0, 10.0);
    }
  }
  return preds;
}

Prediction predict(FusionModel& model, const ModelInputs& inputs) {
  return predict(model, stack_inputs({&inputs}, model.config().modalities)).front();
}

// ---- persistence ----------------------------------------------------------------

fs::path sidecar_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  return p.replace_extension(".cfg");
}

namespace {

constexpr std::string_view kNormPrefix = "norm.";
constexpr std::string_view kQuantileKey = "quantiles";

template <std::size_t N>
std::string stats_text(const std::array<ZScoreStats, N>& s) {
  std::string out;
  for (std::size_t i = 0; i < N; ++i) {
    out += (i ? "," : "") + detail::format_double(s[i].mean) + ":" + detail::format_double(s[i].stddev);
  }
  return out;
}

template <std::size_t N>
void parse_stats(std::string_view text, std::array<ZScoreStats, N>& out, const std::string& key) {
  const auto fields = detail::split(text, ',');
  if (fields.size() != N) throw ParseError("model sidecar: " + key + " expects " + std::to_string(N) + " entries");
  for (std::size_t i = 0; i < N; ++i) {
    const auto pair = detail::split(fields[i], ':');
    if (pair.size() != 2) throw ParseError("model sidecar: " + key + " entries are mean:stddev");
    out[i].mean = detail::parse_double(pair[0], 0);
    out[i].stddev = detail::parse_double(pair[1], 0);
  }
}

std::string feature_stats_text(const std::string& scope, const FeatureStats& s) {
  return std::string(kNormPrefix) + scope + ".eye = " + stats_text(s.eye) + "\n" + std::string(kNormPrefix) + scope +
         ".head = " + stats_text(s.head) + "\n";
}

}  // namespace

void save_model(const FusionModel& model, const Normalizer& normalizer,
                const std::optional<QuantileThresholds>& quantiles, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_checkpoint(path, model.parameters());
  auto out = detail::open_for_write(sidecar_path(path));
  out << model.config().to_text();
  out << feature_stats_text("global", normalizer.global);
  for (const auto& [session, stats] : normalizer.per_session) out << feature_stats_text("session." + session, stats);
  if (quantiles) {
    out << kQuantileKey << " = " << detail::format_double(quantiles->q1) << "," << detail::format_double(quantiles->q2)
        << "," << detail::format_double(quantiles->q3) << "\n";
  }
  if (!out) throw IoError("failed writing " + sidecar_path(path).string());
}

ModelBundle load_model(const fs::path& path) {
  std::ifstream in(sidecar_path(path), std::ios::binary);
  if (!in) throw IoError("missing model sidecar " + sidecar_path(path).string());
  std::string config_text, line;
  Normalizer normalizer;
  std::optional<QuantileThresholds> quantiles;
  while (std::getline(in, line)) {
    const std::string_view l = detail::trim(line);
    const auto eq = l.find('=');
    const std::string key(detail::trim(l.substr(0, eq == std::string_view::npos ? l.size() : eq)));
    const std::string_view value = eq == std::string_view::npos ? std::string_view{} : detail::trim(l.substr(eq + 1));
    if (key.rfind(kNormPrefix, 0) == 0) {
      // norm.<scope>.<eye|head>, scope = global | session.<id>
      const std::string rest = key.substr(kNormPrefix.size());
      const auto dot = rest.rfind('.');
      if (dot == std::string::npos) throw ParseError("model sidecar: bad key " + key);
      const std::string scope = rest.substr(0, dot), kind = rest.substr(dot + 1);
      FeatureStats* target = nullptr;
      if (scope == "global") target = &normalizer.global;
      else if (scope.rfind("session.", 0) == 0) target = &normalizer.per_session[scope.substr(8)];
      else throw ParseError("model sidecar: bad key " + key);
      if (kind == "eye") parse_stats(value, target->eye, key);
      else if (kind == "head") parse_stats(value, target->head, key);
      else throw ParseError("model sidecar: bad key " + key);
    } else if (key == kQuantileKey) {
      const auto q = detail::split(value, ',');
      if (q.size() != 3) throw ParseError("model sidecar: quantiles expects 3 values");
      quantiles = QuantileThresholds{detail::parse_double(q[0], 0), detail::parse_double(q[1], 0),
                                     detail::parse_double(q[2], 0)};
    } else {
      config_text += line + "\n";
    }
  }
  ModelBundle bundle{FusionModel(parse_model_config(config_text), 0), std::move(normalizer), quantiles};
  const auto tensors = load_checkpoint(path);
  auto params = bundle.model.parameters();
  if (tensors.size() != params.size()) throw ParseError("checkpoint parameter count does not match its config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tensors[i].name != params[i]->name() || tensors[i].value.shape() != params[i]->value().shape()) {
      throw ParseError("checkpoint entry '" + tensors[i].name + "' does not match parameter '" + params[i]->name() + "'");
    }
    params[i]->value() = tensors[i].value;
  }
  return bundle;
}

}  // namespace sickfuse
