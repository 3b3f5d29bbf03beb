#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "sickfuse/errors.hpp"
#include "sickfuse/labeling.hpp"
#include "sickfuse/preprocess.hpp"
#include "sickfuse/stats.hpp"
#include "sickfuse/synth.hpp"
#include "test_util.hpp"

namespace sickfuse {
namespace {

namespace fs = std::filesystem;
using sickfuse::testing::TempDir;
using sickfuse::testing::read_text;

SynthProfile small_profile() {
  SynthProfile p;
  p.participants = 2;
  p.simulations = {Simulation::RoadSide};
  p.duration_s = 60.0;
  p.cadence_s = 30.0;
  return p;
}

std::vector<WindowData> dataset_windows(const SynthProfile& p) {
  std::vector<WindowData> out;
  for (std::size_t i = 0; i < p.participants; ++i) {
    for (Simulation sim : p.simulations) {
      auto s = std::make_shared<const SessionRecord>(align_streams(generate_session(p, i, sim)));
      for (const auto& w : build_windows(s).windows) out.push_back(materialize(w, InputOptions{}));
    }
  }
  return out;
}

std::vector<const WindowData*> pointers(const std::vector<WindowData>& v) {
  std::vector<const WindowData*> out;
  for (const auto& w : v) out.push_back(&w);
  return out;
}

TEST(SynthProfile, TextRoundTrip) {
  SynthProfile p;
  p.participants = 3;
  p.simulations = {Simulation::SeaVoyage, Simulation::BeachCity};
  p.seed = 99;
  p.pupil_effect_mm = 0.25;
  p.frames = true;
  const SynthProfile q = parse_profile(p.to_text());
  EXPECT_EQ(q.to_text(), p.to_text());
  EXPECT_EQ(q.simulations, p.simulations);
  EXPECT_EQ(q.seed, 99u);
}

TEST(SynthProfile, CommentsAndDefaults) {
  const SynthProfile p = parse_profile("# demo\nparticipants = 4  # four\n\nseed=7\n");
  EXPECT_EQ(p.participants, 4u);
  EXPECT_EQ(p.seed, 7u);
  EXPECT_DOUBLE_EQ(p.duration_s, 420.0);
  EXPECT_EQ(p.simulations.size(), 5u);
}

TEST(SynthProfile, Rejections) {
  EXPECT_THROW(parse_profile("colour = red\n"), ConfigError);
  EXPECT_THROW(parse_profile("duration_s = 100\n"), ConfigError);  // not a multiple of 30
  EXPECT_THROW(parse_profile("pupil_effect_mm = -0.1\n"), ConfigError);
  EXPECT_THROW(parse_profile("simulations = Moon\n"), ConfigError);
  EXPECT_THROW(parse_profile("participants = 0\n"), ConfigError);
  EXPECT_THROW(parse_profile("participants = 2\nparticipants = 3\n"), ConfigError);
  EXPECT_THROW(parse_profile("participants\n"), ConfigError);
  EXPECT_THROW(parse_profile("noise = maybe\n"), ConfigError);
}

TEST(Synth, ParticipantIds) {
  EXPECT_EQ(participant_id(0, 27), "P01");
  EXPECT_EQ(participant_id(26, 27), "P27");
  EXPECT_EQ(participant_id(4, 150), "P005");
}

TEST(Synth, SameSeedGivesIdenticalFiles) {
  SynthProfile p = small_profile();
  p.frames = true;
  p.frame_size = 16;
  TempDir a("synth_a"), b("synth_b");
  const auto da = generate_dataset(p, a.path());
  const auto db = generate_dataset(p, b.path());
  ASSERT_EQ(da.size(), 2u);
  for (std::size_t i = 0; i < da.size(); ++i) {
    for (const char* f : {"eye.csv", "head.csv", "fms.csv", "frames.bin", "frames.idx"}) {
      EXPECT_EQ(read_text(da[i] / f), read_text(db[i] / f)) << f;
    }
  }
  EXPECT_EQ(read_text(a / "profile.txt"), read_text(b / "profile.txt"));

  p.seed = 2;
  EXPECT_NE(generate_session(p, 0, Simulation::RoadSide).eye, generate_session(small_profile(), 0, Simulation::RoadSide).eye);
}

TEST(Synth, NoiselessRoundTripHasNoInvalidSamples) {
  SynthProfile p = small_profile();
  p.noise = false;
  TempDir dir("synth_clean");
  const auto dirs = generate_dataset(p, dir.path());
  for (const auto& d : dirs) {
    const SessionRecord s = parse_session(d);
    EXPECT_TRUE(std::all_of(s.eye.begin(), s.eye.end(), [](const EyeSample& e) { return e.valid; }));
    EXPECT_TRUE(std::all_of(s.head.begin(), s.head.end(), [](const HeadSample& h) { return h.valid; }));
    const SessionRecord a = align_streams(s);
    EXPECT_EQ(a.eye_filled, 0u);
    EXPECT_EQ(a.head_filled, 0u);
    EXPECT_EQ(a.eye.size(), 1201u);
  }
}

TEST(Synth, NoisySessionsParseAndStayWithinBudget) {
  SynthProfile p = small_profile();
  p.duration_s = 420.0;
  TempDir dir("synth_noisy");
  std::size_t invalid = 0;
  for (const auto& d : generate_dataset(p, dir.path())) {
    const SessionRecord s = parse_session(d);
    invalid += static_cast<std::size_t>(
        std::count_if(s.eye.begin(), s.eye.end(), [](const EyeSample& e) { return !e.valid; }));
    auto shared = std::make_shared<const SessionRecord>(align_streams(s));
    const WindowSet ws = build_windows(shared);
    EXPECT_EQ(ws.windows.size(), 13u);
    EXPECT_TRUE(ws.dropped.empty());
  }
  EXPECT_GT(invalid, 0u);
}

TEST(Synth, TwoParticipantsOneSimulationGive26Windows) {
  SynthProfile p = small_profile();
  p.duration_s = 420.0;
  std::size_t windows = 0;
  for (std::size_t i = 0; i < p.participants; ++i) {
    auto s = std::make_shared<const SessionRecord>(align_streams(generate_session(p, i, Simulation::RoadSide)));
    windows += build_windows(s).windows.size();
  }
  EXPECT_EQ(windows, 26u);
}

TEST(Synth, DefaultProfileGives1755Windows) {
  const SynthProfile p;
  std::vector<Window> all;
  for (std::size_t i = 0; i < p.participants; ++i) {
    for (Simulation sim : p.simulations) {
      auto s = std::make_shared<const SessionRecord>(align_streams(generate_session(p, i, sim)));
      auto ws = build_windows(s);
      all.insert(all.end(), ws.windows.begin(), ws.windows.end());
    }
  }
  EXPECT_EQ(all.size(), 1755u);
  EXPECT_EQ(count_segments(all), 19305u);
}

TEST(Synth, FmsScoresBoundedAndRisingInExpectation) {
  const SynthProfile p;
  std::vector<double> mean_at(13, 0.0);
  std::size_t sessions = 0;
  for (std::size_t i = 0; i < p.participants; ++i) {
    for (Simulation sim : p.simulations) {
      const SessionRecord s = generate_session(p, i, sim);
      ASSERT_EQ(s.reports.size(), 13u);
      for (std::size_t r = 0; r < s.reports.size(); ++r) {
        EXPECT_GE(s.reports[r].score, 0.0);
        EXPECT_LE(s.reports[r].score, 10.0);
        EXPECT_EQ(s.reports[r].score, std::round(s.reports[r].score));
        mean_at[r] += s.reports[r].score;
      }
      for (double t = 0; t < 420; t += 10) {
        EXPECT_LE(latent_sickness(p, i, sim, t), latent_sickness(p, i, sim, t + 10));
      }
      ++sessions;
    }
  }
  for (std::size_t r = 1; r < mean_at.size(); ++r) EXPECT_GT(mean_at[r], mean_at[r - 1]) << r;
}

TEST(Synth, DefaultQuartilesMatchSeverityThresholds) {
  const SynthProfile p;
  std::vector<double> scores;
  for (std::size_t i = 0; i < p.participants; ++i) {
    for (Simulation sim : p.simulations) {
      for (const auto& r : generate_session(p, i, sim).reports) scores.push_back(r.score);
    }
  }
  EXPECT_EQ(compute_fms_quantiles(scores), (QuantileThresholds{1.0, 2.0, 4.0}));
}

TEST(Synth, EyeHeadOnlyProfileRunsWithoutFrames) {
  SynthProfile p = small_profile();
  ASSERT_FALSE(p.frames);
  TempDir dir("synth_noframes");
  const auto dirs = generate_dataset(p, dir.path());
  const SessionRecord s = parse_session(dirs[0]);
  EXPECT_FALSE(s.has_frames());
  EXPECT_FALSE(fs::exists(dirs[0] / "frames.bin"));
  auto shared = std::make_shared<const SessionRecord>(align_streams(s));
  const WindowSet ws = build_windows(shared);
  ASSERT_EQ(ws.windows.size(), 1u);  // the report at 30 s; 60 s is the session end
  const WindowData data = materialize(ws.windows[0], InputOptions{});
  const Normalizer norm = fit_normalizer({&data});
  const ModelInputs in = to_model_inputs(data, norm, InputOptions{});
  EXPECT_EQ(in.at(Modality::Eye).shape(), (Shape{4, 15, 9}));
  EXPECT_EQ(in.at(Modality::Head).shape(), (Shape{4, 15, 4}));

  InputOptions video;
  video.modalities = {Modality::Video};
  EXPECT_THROW(materialize(ws.windows[0], video), MissingStreamError);
}

TEST(Synth, InjectedDisparityRecoveredBySgm) {
  const Texture tex(5);
  for (double d : {4.0, 8.0}) {
    const StereoFrame f = render_stereo(tex, 96, 13.0, d, 0.0);
    SgbmParams params;
    params.max_disparity = 24;
    const DisparityMap map = sgbm_disparity(f.left, f.right, params);
    std::size_t valid = 0, close = 0;
    for (std::size_t y = 8; y < 88; ++y) {
      for (std::size_t x = 32; x < 88; ++x) {
        if (!map.valid.at(x, y)) continue;
        ++valid;
        if (std::abs(map.disparity.at(x, y) - d) <= 1.0) ++close;
      }
    }
    ASSERT_GT(valid, 2000u) << d;
    EXPECT_GE(static_cast<double>(close) / static_cast<double>(valid), 0.9) << d;
  }
}

TEST(Synth, GeneratedFramesCarryConfiguredDisparity) {
  SynthProfile p = small_profile();
  p.frames = true;
  p.frame_size = 48;
  p.stereo_disparity_px = 4.0;
  const SessionRecord s = generate_session(p, 0, Simulation::RoadSide);
  ASSERT_EQ(s.frames.size(), s.eye.size());
  SgbmParams params;
  params.max_disparity = 12;
  const DisparityMap map = sgbm_disparity(s.frames[100].left, s.frames[100].right, params);
  std::size_t valid = 0, close = 0;
  for (std::size_t y = 4; y < 44; ++y) {
    for (std::size_t x = 16; x < 44; ++x) {
      if (!map.valid.at(x, y)) continue;
      ++valid;
      if (std::abs(map.disparity.at(x, y) - 4.0) <= 1.0) ++close;
    }
  }
  ASSERT_GT(valid, 200u);
  EXPECT_GE(static_cast<double>(close) / static_cast<double>(valid), 0.9);
}

TEST(Synth, FramesTranslateAtConfiguredSpeed) {
  const Texture tex(11);
  const StereoFrame a = render_stereo(tex, 64, 0.0, 0.0, 0.0);
  const StereoFrame b = render_stereo(tex, 64, 2.0, 0.0, 0.05);
  const FlowField flow = farneback_flow(a.left, b.left);
  std::vector<double> dx;
  for (std::size_t y = 16; y < 48; ++y) {
    for (std::size_t x = 16; x < 48; ++x) dx.push_back(flow.dx.at(x, y));
  }
  std::nth_element(dx.begin(), dx.begin() + static_cast<long>(dx.size() / 2), dx.end());
  EXPECT_NEAR(dx[dx.size() / 2], -2.0, 0.5);
}

TEST(Synth, ZeroEffectsLeaveGroupsIndistinguishable) {
  SynthProfile p;
  p.simulations = {Simulation::RollerCoaster};
  p.pupil_effect_mm = 0.0;
  p.gaze_effect = 0.0;
  p.head_effect = 0.0;
  const auto data = dataset_windows(p);
  for (const char* name : {"pupil_mean", "gaze_dispersion", "head_jitter"}) {
    const auto g = group_by_sickness(pointers(data), Simulation::RollerCoaster, find_feature(name).select);
    const TTestResult r = paired_ttest(g.nonsick, g.sick);
    EXPECT_GT(r.p, 0.05) << name;
  }
}

TEST(Synth, DefaultEffectsGiveSignificantPairedDifferences) {
  SynthProfile p;
  p.simulations = {Simulation::RollerCoaster};
  const auto data = dataset_windows(p);
  const auto pupil = group_by_sickness(pointers(data), Simulation::RollerCoaster, find_feature("pupil_mean").select);
  const TTestResult rp = paired_ttest(pupil.nonsick, pupil.sick);
  EXPECT_EQ(rp.df, 26u);
  EXPECT_LT(rp.p, 0.05);
  EXPECT_GT(rp.mean_a, rp.mean_b);  // pupils smaller when sick

  const auto gaze =
      group_by_sickness(pointers(data), Simulation::RollerCoaster, find_feature("gaze_dispersion").select);
  const TTestResult rg = paired_ttest(gaze.nonsick, gaze.sick);
  EXPECT_LT(rg.p, 0.05);
  EXPECT_LT(rg.mean_a, rg.mean_b);  // gaze spread wider when sick
}

}  // namespace
}  // namespace sickfuse
