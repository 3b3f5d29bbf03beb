#include <gtest/gtest.h>

#include <cmath>

#include "model_fixture.hpp"
#include "sickfuse/errors.hpp"
#include "sickfuse/model.hpp"
#include "test_util.hpp"

namespace sickfuse {
namespace {

using sickfuse::testing::model_gradcheck;
using sickfuse::testing::random_batch;
using sickfuse::testing::random_targets;

ModelConfig small_eye_head(Task task) {
  ModelConfig c = ModelConfig::toy(task);
  c.td_filters = 4;
  c.lstm_hidden = 5;
  c.dense_width = 6;
  return c;
}

Batch permuted(const Batch& batch, const std::vector<std::size_t>& order) {
  Batch out;
  for (const auto& [m, t] : batch) {
    const std::size_t n = t.dim(0), row = t.size() / n;
    Tensor p(t.shape(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(t.data().begin() + static_cast<long>(order[i] * row), row, p.data().begin() + static_cast<long>(i * row));
    }
    out.emplace(m, std::move(p));
  }
  return out;
}

TEST(ModelConfig, DefaultsAndPaperShapes) {
  const ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.input_shape(Modality::Eye), (Shape{4, 15, 9}));
  EXPECT_EQ(c.input_shape(Modality::Head), (Shape{4, 15, 4}));
  EXPECT_EQ(c.input_shape(Modality::Video), (Shape{60, 256, 256, 3}));
  EXPECT_EQ(c.input_shape(Modality::Flow), (Shape{60, 256, 256, 3}));
  EXPECT_EQ(c.input_shape(Modality::Disparity), (Shape{60, 256, 256, 1}));
  EXPECT_EQ(c.conv3d_filters.size(), 3u);
  EXPECT_DOUBLE_EQ(c.l2, 0.01);
  EXPECT_DOUBLE_EQ(c.dropout, 0.5);
  EXPECT_DOUBLE_EQ(c.recurrent_dropout, 0.2);
  EXPECT_EQ(c.dense_width, 256u);
  EXPECT_NO_THROW(ModelConfig::tiny(Task::Regression).validate());
  EXPECT_NO_THROW(ModelConfig::toy(Task::Classification).validate());
}

TEST(ModelConfig, TextRoundTripAndOverrides) {
  ModelConfig c = ModelConfig::tiny(Task::Regression);
  c.share_td_conv = false;
  c.video_bn = BatchNormAxes::Batch;
  c.selection = Selection::UniformStride;
  const ModelConfig d = parse_model_config(c.to_text());
  EXPECT_EQ(d.to_text(), c.to_text());
  const ModelConfig e = parse_model_config("task = regression\nmodalities = head, eye\n");
  EXPECT_EQ(e.task, Task::Regression);
  EXPECT_EQ(e.modalities, (std::vector<Modality>{Modality::Head, Modality::Eye}));
}

TEST(ModelConfig, Rejections) {
  EXPECT_THROW(parse_model_config("modalities =\n"), ConfigError);
  EXPECT_THROW(parse_model_config("modalities = smell\n"), ConfigError);
  EXPECT_THROW(parse_model_config("task = ranking\n"), ConfigError);
  EXPECT_THROW(parse_model_config("timestep = 61\n"), ConfigError);
  EXPECT_THROW(parse_model_config("lstm_hidden = 0\n"), ConfigError);
  EXPECT_THROW(parse_model_config("widths = 3\n"), ConfigError);
  EXPECT_THROW(parse_model_config("modalities = video\ntimestep = 4\nsubsequences = 2\n"), ConfigError);
  EXPECT_THROW(parse_model_config("modalities = eye,eye\n"), ConfigError);
  EXPECT_THROW(parse_model_config("dropout = 1\n"), ConfigError);
}

TEST(FusionModel, SameSeedSameParameters) {
  const ModelConfig c = ModelConfig::tiny(Task::Classification);
  FusionModel a(c, 7), b(c, 7), d(c, 8);
  const auto pa = a.parameters(), pb = b.parameters(), pd = d.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name(), pb[i]->name());
    EXPECT_EQ(pa[i]->value(), pb[i]->value());
    any_diff |= !(pa[i]->value() == pd[i]->value());
  }
  EXPECT_TRUE(any_diff);
}

TEST(FusionModel, HeadWidthFollowsTask) {
  FusionModel cls(ModelConfig::tiny(Task::Classification), 1);
  FusionModel reg(ModelConfig::tiny(Task::Regression), 1);
  EXPECT_EQ(cls.parameter("output/weights").value().shape(), (Shape{2, 4}));
  EXPECT_EQ(reg.parameter("output/weights").value().shape(), (Shape{2, 1}));
  EXPECT_EQ(cls.parameter("video/block0/kernel").value().shape(), (Shape{3, 3, 3, 3, 2}));
  EXPECT_EQ(cls.parameter("disparity/block0/kernel").value().shape(), (Shape{3, 3, 3, 1, 2}));
  EXPECT_EQ(cls.parameter("eye/td_conv/kernel").value().shape(), (Shape{3, 9, 2}));
  EXPECT_FALSE(cls.parameter("eye/bn/running_mean").trainable());
}

TEST(FusionModel, ForwardShapesAndShapeErrors) {
  const ModelConfig c = ModelConfig::tiny(Task::Classification);
  FusionModel model(c, 3);
  Batch batch = random_batch(c, 3, 11);
  EXPECT_EQ(model.infer(batch).shape(), (Shape{3, 4}));

  Batch missing = batch;
  missing.erase(Modality::Head);
  EXPECT_THROW(model.infer(missing), ShapeError);

  Batch wrong = batch;
  wrong.at(Modality::Eye) = Tensor({3, 2, 2, 8}, 0.0);
  EXPECT_THROW(model.infer(wrong), ShapeError);

  Batch uneven = batch;
  uneven.at(Modality::Eye) = Tensor({2, 2, 2, 9}, 0.0);
  EXPECT_THROW(model.infer(uneven), ShapeError);
}

TEST(FusionModel, PaperInputShapesAccepted) {
  ModelConfig eh;
  FusionModel model(eh, 1);
  Batch b = random_batch(eh, 2, 5);
  b.erase(Modality::Video);
  b.erase(Modality::Flow);
  b.erase(Modality::Disparity);
  EXPECT_EQ(model.infer(b).shape(), (Shape{2, 4}));

  ModelConfig video;
  video.modalities = {Modality::Video};
  video.conv3d_filters = {1, 1, 1};
  video.dense_width = 4;
  FusionModel vm(video, 1);
  Batch vb;
  vb.emplace(Modality::Video, Tensor({1, 60, 256, 256, 3}, 0.5));
  EXPECT_EQ(vm.infer(vb).shape(), (Shape{1, 4}));
  vb.at(Modality::Video) = Tensor({1, 60, 255, 256, 3}, 0.5);
  EXPECT_THROW(vm.infer(vb), ShapeError);
}

TEST(FusionModel, ClassificationRowsAreDistributions) {
  const ModelConfig c = ModelConfig::tiny(Task::Classification);
  FusionModel model(c, 9);
  const Tensor out = model.infer(random_batch(c, 5, 2));
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_GE(out[i * 4 + j], 0.0);
      s += out[i * 4 + j];
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(FusionModel, ZeroHeadWeightsGiveBias) {
  const ModelConfig c = ModelConfig::tiny(Task::Regression);
  FusionModel model(c, 4);
  model.parameter("output/weights").value().fill(0.0);
  model.parameter("output/bias").value().fill(2.75);
  for (std::uint64_t seed : {1, 2, 3}) {
    const Tensor out = model.infer(random_batch(c, 3, seed));
    for (double v : out.data()) EXPECT_EQ(v, 2.75);
  }
}

TEST(FusionModel, InferModeIsPermutationEquivariantAndDeterministic) {
  const ModelConfig c = ModelConfig::tiny(Task::Classification);
  FusionModel model(c, 12);
  const Batch batch = random_batch(c, 4, 33);
  const Tensor a = model.infer(batch);
  const Tensor b = model.infer(batch);
  EXPECT_EQ(a, b);
  const std::vector<std::size_t> order = {2, 0, 3, 1};
  const Tensor p = model.infer(permuted(batch, order));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(p[i * 4 + j], a[order[i] * 4 + j]);
  }
}

TEST(FusionModel, DisabledModalityDoesNotInfluenceOutput) {
  ModelConfig c = ModelConfig::tiny(Task::Regression);
  c.modalities = {Modality::Eye, Modality::Video};
  FusionModel model(c, 5);
  Batch batch = random_batch(c, 3, 8);
  const Tensor base = model.infer(batch);
  batch.at(Modality::Head) = sickfuse::testing::random_tensor(batch.at(Modality::Head).shape(), 99);
  batch.at(Modality::Flow) = sickfuse::testing::random_tensor(batch.at(Modality::Flow).shape(), 98);
  EXPECT_EQ(model.infer(batch), base);
  batch.erase(Modality::Disparity);
  EXPECT_EQ(model.infer(batch), base);
  batch.at(Modality::Eye) = sickfuse::testing::random_tensor(batch.at(Modality::Eye).shape(), 97);
  EXPECT_FALSE(model.infer(batch) == base);
}

TEST(FusionModel, TrainModeDropoutVariesWithSeed) {
  const ModelConfig c = small_eye_head(Task::Regression);
  FusionModel model(c, 1);
  const Batch batch = random_batch(c, 4, 3);
  Tape t1, t2;
  Rng r1(1), r2(2);
  const Tensor a = model.forward(t1, batch, ops::Mode::Train, r1).value();
  const Tensor b = model.forward(t2, batch, ops::Mode::Train, r2).value();
  EXPECT_FALSE(a == b);
}

TEST(Losses, TaskLossExamples) {
  Tape tape;
  EXPECT_NEAR(task_loss(tape.constant(Tensor({2, 1}, std::vector<double>{3, 4})), Tensor({2, 1}, 0.0), Task::Regression)
                  .value()
                  .item(),
              std::sqrt(12.5), 1e-12);
  const Tensor uniform({1, 4}, 0.25);
  const Tensor onehot = make_targets({}, {Severity::Medium}, Task::Classification);
  EXPECT_NEAR(task_loss(tape.constant(uniform), onehot, Task::Classification).value().item(), std::log(4.0), 1e-12);
  const Tensor tiny({1, 4}, std::vector<double>{1e-15, 0.5, 0.5 - 1e-15, 0.0});
  const Tensor first = make_targets({}, {Severity::None}, Task::Classification);
  const double v = task_loss(tape.constant(tiny), first, Task::Classification).value().item();
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, -std::log(1e-12), 1e-9);
}

TEST(Losses, TotalLossAddsKernelPenaltyExactly) {
  const ModelConfig c = ModelConfig::tiny(Task::Regression);
  FusionModel model(c, 6);
  const Batch batch = random_batch(c, 3, 4);
  const Tensor target = random_targets(c, 3, 5);
  Tape tape;
  Rng rng(1);
  Var pred = model.forward(tape, batch, ops::Mode::Train, rng);
  const double task = task_loss(pred, target, c.task).value().item();
  const double total = total_loss(tape, pred, target, c.task).value().item();
  double penalty = 0.0;
  for (const Parameter* p : model.parameters()) {
    const std::string& n = p->name();
    if (n.find("/block") == std::string::npos || n.find("/kernel") == std::string::npos) continue;
    for (double v : p->value().data()) penalty += v * v;
  }
  EXPECT_NEAR(total, task + 0.01 * penalty, 1e-12);
  EXPECT_GT(penalty, 0.0);
}

TEST(Predict, ArgmaxTieBreakAndClamp) {
  EXPECT_EQ(argmax_severity({0.1, 0.2, 0.3, 0.4}), Severity::High);
  EXPECT_EQ(argmax_severity({0.25, 0.25, 0.25, 0.25}), Severity::None);
  EXPECT_EQ(argmax_severity({0.1, 0.4, 0.4, 0.1}), Severity::Low);

  const ModelConfig c = ModelConfig::tiny(Task::Regression);
  FusionModel model(c, 4);
  model.parameter("output/weights").value().fill(0.0);
  model.parameter("output/bias").value().fill(11.2);
  const auto preds = predict(model, random_batch(c, 2, 1));
  EXPECT_DOUBLE_EQ(preds[0].raw, 11.2);
  EXPECT_DOUBLE_EQ(preds[0].fms_hat, 10.0);
  EXPECT_FALSE(preds[0].severity.has_value());

  FusionModel cls(ModelConfig::tiny(Task::Classification), 4);
  cls.parameter("output/weights").value().fill(0.0);
  cls.parameter("output/bias").value().fill(0.0);
  const auto tied = predict(cls, random_batch(c, 2, 1));
  EXPECT_EQ(tied[1].severity, Severity::None);
}

TEST(Persistence, SaveLoadRoundTrip) {
  ModelConfig c = ModelConfig::tiny(Task::Classification);
  c.share_td_conv = false;
  FusionModel model(c, 21);
  // Move running statistics away from their initial values.
  {
    Tape tape;
    Rng rng(1);
    model.forward(tape, random_batch(c, 3, 1), ops::Mode::Train, rng);
  }
  Normalizer norm;
  norm.global.eye[3] = {0.1 + 1e-17, 3.0 / 7.0};
  norm.per_session["P01_BeachCity"].head[2] = {-2.5, 0.125};
  const QuantileThresholds q{1.0, 2.0, 4.0};
  sickfuse::testing::TempDir dir("model_io");
  save_model(model, norm, q, dir / "model.sfm");
  EXPECT_TRUE(std::filesystem::exists(dir / "model.cfg"));

  ModelBundle loaded = load_model(dir / "model.sfm");
  EXPECT_EQ(loaded.model.config().to_text(), c.to_text());
  EXPECT_EQ(loaded.normalizer.global, norm.global);
  EXPECT_EQ(loaded.normalizer.per_session, norm.per_session);
  EXPECT_EQ(loaded.quantiles, q);
  const Batch batch = random_batch(c, 3, 2);
  EXPECT_EQ(loaded.model.infer(batch), model.infer(batch));
}

TEST(Persistence, MismatchedCheckpointRejected) {
  sickfuse::testing::TempDir dir("model_bad");
  FusionModel model(ModelConfig::tiny(Task::Classification), 1);
  save_model(model, {}, std::nullopt, dir / "m.sfm");
  sickfuse::testing::write_text(dir / "m.cfg", ModelConfig::tiny(Task::Regression).to_text());
  EXPECT_THROW(load_model(dir / "m.sfm"), ParseError);
  EXPECT_THROW(load_model(dir / "none.sfm"), IoError);
}

TEST(GradientCheck, TinyModelBothLosses) {
  for (Task task : {Task::Classification, Task::Regression}) {
    const ModelConfig c = ModelConfig::tiny(task);
    FusionModel model(c, 31);
    const Batch batch = random_batch(c, 3, 17);
    const Tensor target = random_targets(c, 3, 18);
    EXPECT_LT(model_gradcheck(model, batch, target), 1e-4) << to_string(task);
  }
}

TEST(GradientCheck, TinyModelVariants) {
  ModelConfig c = ModelConfig::tiny(Task::Regression);
  c.share_td_conv = false;
  c.video_bn = BatchNormAxes::Batch;
  c.modalities = {Modality::Video, Modality::Eye};
  FusionModel model(c, 32);
  EXPECT_LT(model_gradcheck(model, random_batch(c, 3, 19), random_targets(c, 3, 20)), 1e-4);
}

}  // namespace
}  // namespace sickfuse
