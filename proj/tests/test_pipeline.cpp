#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "msface/pipeline.hpp"
#include "support.hpp"

using namespace msface;
using namespace msface::pipeline;
using msface::testing::qvga;

namespace {

/// One stage nothing can pass; keeps pipeline tests fast when detections
/// do not matter.
detect::Cascade reject_all_cascade() {
  detect::Cascade c;
  c.stages.push_back({{}, std::numeric_limits<double>::infinity()});
  return c;
}

PipelineConfig qvga_config() {
  PipelineConfig c;
  c.intrinsics = qvga();
  return c;
}

/// Writes a short sequence and returns its manifest with the IR timestamps
/// shifted by `ir_shift_us`.
StreamManifest shifted_manifest(const std::string& name, int n, std::int64_t ir_shift_us) {
  synth::SynthSequenceSpec s;
  s.frame_count = n;
  s.yaw_sweep_deg = {0, 0};
  auto m = synth::synth_sequence(s, qvga(), msface::testing::temp_dir(name));
  for (auto& r : m.rows)
    if (r.stream == Stream::ir) r.timestamp_us += ir_shift_us;
  return m;
}

/// Brute-force nearest-frame index with the earlier frame winning ties.
int nearest_oracle(const std::vector<std::int64_t>& ts, std::int64_t t, std::int64_t tol) {
  int best = -1;
  for (std::size_t j = 0; j < ts.size(); ++j) {
    const auto d = std::llabs(ts[j] - t);
    if (d <= tol && (best < 0 || d < std::llabs(ts[static_cast<std::size_t>(best)] - t)))
      best = static_cast<int>(j);
  }
  return best;
}

std::vector<SyncedTriple> video_of_poses(const std::vector<double>& yaws, double temp_c = 33.727,
                                         int subject = 1) {
  synth::SynthSequenceSpec s;
  s.forehead_temp_c = temp_c;
  std::vector<synth::SynthFrame> frames;
  for (std::size_t i = 0; i < yaws.size(); ++i)
    frames.push_back(synth::render_frame(s, qvga(), make_pose(s.head_center, yaws[i], 0),
                                         subject, synth::mix_seed(7, i), 0));
  return triples_from_frames(frames);
}

}  // namespace

TEST(SyncStreams, IdenticalTimestampsPairEverything) {
  const auto m = shifted_manifest("sync_same", 6, 0);
  const auto r = sync_streams(m);
  EXPECT_EQ(r.triples.size(), 6u);
  EXPECT_EQ(r.stats.dropped, 0u);
  EXPECT_EQ(r.stats.ir_unmatched, 0u);
  EXPECT_EQ(r.stats.gray_aliased + r.stats.ir_aliased, 0u);
  for (std::size_t i = 0; i < r.triples.size(); ++i) {
    EXPECT_EQ(r.triples[i].index, static_cast<int>(i));
    EXPECT_TRUE(r.triples[i].ir.has_value());
    EXPECT_EQ(r.triples[i].gray.width, r.triples[i].depth.width);
  }
}

TEST(SyncStreams, QuarterPeriodIrOffsetStillPairs) {
  const auto m = shifted_manifest("sync_quarter", 6, 33333 / 4);
  const auto r = sync_streams(m);
  EXPECT_EQ(r.triples.size(), 6u);
  EXPECT_EQ(r.stats.ir_unmatched, 0u);
  EXPECT_EQ(r.stats.ir_aliased, 0u);
}

TEST(SyncStreams, TwoPeriodIrOffsetAliases) {
  const std::int64_t p = 33333;
  const auto m = shifted_manifest("sync_alias", 6, 2 * p);
  std::vector<std::int64_t> ir_ts;
  for (const auto* r : m.rows_of(Stream::ir)) ir_ts.push_back(r->timestamp_us);
  std::size_t unmatched = 0, aliased = 0;
  for (int i = 0; i < 6; ++i) {
    const int j = nearest_oracle(ir_ts, i * p, p / 2);
    if (j < 0)
      ++unmatched;
    else
      aliased += j != i;
  }
  const auto r = sync_streams(m);
  EXPECT_EQ(r.triples.size(), 6u);
  EXPECT_EQ(r.stats.ir_unmatched, unmatched);
  EXPECT_EQ(r.stats.ir_aliased, aliased);
  EXPECT_EQ(unmatched, 2u);
  EXPECT_EQ(aliased, 4u);
}

TEST(SyncStreams, DropsAndEmptyResult) {
  auto m = shifted_manifest("sync_drop", 4, 0);
  // Move the last gray frame far away: its depth frame is dropped.
  for (auto& r : m.rows)
    if (r.stream == Stream::gray && r.timestamp_us == 3 * 33333) r.timestamp_us += 100000;
  auto r = sync_streams(m);
  EXPECT_EQ(r.triples.size(), 3u);
  EXPECT_EQ(r.stats.dropped, 1u);

  // Tolerance is inclusive.
  auto edge = shifted_manifest("sync_edge", 2, 0);
  for (auto& row : edge.rows)
    if (row.stream == Stream::gray && row.timestamp_us > 0) row.timestamp_us += 33333 / 2;
  EXPECT_EQ(sync_streams(edge).stats.dropped, 0u);
  EXPECT_EQ(sync_streams(edge, 33333 / 2 - 1).stats.dropped, 1u);

  StreamManifest none = m;
  std::erase_if(none.rows, [](const ManifestRow& row) { return row.stream == Stream::gray; });
  try {
    sync_streams(none);
    FAIL() << "expected a data error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    EXPECT_NE(std::string(e.what()).find("gray=0"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("depth=4"), std::string::npos);
  }
}

TEST(ProtocolMessages, ByteExactTemplates) {
  const std::vector<Finding> fs{{FindingKind::fever, 38.5, 3, {}},
                                {FindingKind::appearance_anomaly, 0, 4,
                                 "features of artificial moustache are detected"}};
  const auto m = protocol_messages(fs);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].severity, Severity::action);
  EXPECT_EQ(m[0].text, "POSSIBLE ACTION: Inquire: Have you been experiencing a high fever?");
  EXPECT_EQ(m[1].severity, Severity::warning);
  EXPECT_EQ(m[1].text,
            "WARNING: Possible intention to change appearance; features of artificial "
            "moustache are detected.");
  EXPECT_TRUE(protocol_messages({}).empty());
  EXPECT_THROW(protocol_messages({{static_cast<FindingKind>(9), 0, 0, {}}}), Error);
}

TEST(RunTraditional, SubsampleAndBlankVideo) {
  const auto cascade = reject_all_cascade();
  std::vector<SyncedTriple> blank;
  for (int i = 0; i < 31; ++i) {
    SyncedTriple t;
    t.index = i;
    t.timestamp_us = i * 33333;
    t.depth = DepthFrame(320, 240);
    t.gray = GrayFrame(320, 240, 128);
    blank.push_back(std::move(t));
  }
  auto cfg = qvga_config();
  cfg.subsample = 15;
  const auto r = run_traditional(blank, {nullptr, &cascade, nullptr}, cfg);
  ASSERT_EQ(r.frames.size(), 3u);  // ceil(31 / 15)
  EXPECT_EQ(r.frames[0].index, 0);
  EXPECT_EQ(r.frames[1].index, 15);
  EXPECT_EQ(r.frames[2].index, 30);
  EXPECT_EQ(r.detections(), 0);
  EXPECT_EQ(r.detector_invocations, 3);
  EXPECT_EQ(r.recognizer_invocations, 0);
  for (const auto& f : r.frames) {
    EXPECT_GE(f.timings.detection_ms, 0);
    EXPECT_GE(f.timings.processing_ms, f.timings.detection_ms);
  }
  cfg.subsample = 0;
  EXPECT_THROW(run_traditional(blank, {nullptr, &cascade, nullptr}, cfg), Error);
}

TEST(Bench, ReportArithmetic) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0, 10);
  auto fake_run = [&](Method m, int n) {
    RunResult r;
    r.method = m;
    for (int i = 0; i < n; ++i) {
      FrameResult f;
      f.index = i;
      f.timings = {U(rng), U(rng), U(rng), 0};
      f.timings.processing_ms = f.timings.recognition_ms + f.timings.dhp_ms +
                                f.timings.detection_ms + U(rng);
      r.frames.push_back(f);
    }
    return r;
  };
  std::vector<RunResult> tr, pr;
  for (int v : {3, 7, 11}) {
    tr.push_back(fake_run(Method::traditional, v));
    pr.push_back(fake_run(Method::proposed, v));
  }
  const auto b = make_bench_report(tr, pr, 1.5);
  EXPECT_EQ(b.videos, 3u);
  EXPECT_EQ(b.traditional.frames, 21u);
  double frame_sum = 0, video_sum = 0;
  for (const auto& r : tr) {
    double v = 0;
    for (const auto& f : r.frames) v += f.timings.processing_ms;
    video_sum += v;
    for (const auto& f : r.frames) frame_sum += f.timings.processing_ms;
  }
  EXPECT_NEAR(b.traditional.total.processing_ms, frame_sum, 1e-9);
  EXPECT_NEAR(b.traditional.total.processing_ms, video_sum, 1e-9);
  EXPECT_NEAR(b.traditional.per_video.processing_ms * 3, frame_sum, 1e-9);
  EXPECT_NEAR(b.traditional.per_frame.processing_ms * 21, frame_sum, 1e-9);
  const double tt = b.traditional.total.processing_ms, tp = b.proposed.total.processing_ms;
  EXPECT_NEAR(b.speedup_pct, 100 * (tt - tp) / tt, 1e-9);
  EXPECT_DOUBLE_EQ(b.overhead_s, 1.5);
  // The same runs on both sides: no speedup.
  EXPECT_NEAR(make_bench_report(tr, tr).speedup_pct, 0.0, 1e-12);

  const auto csv = io::parse_csv(bench_csv(b));
  EXPECT_EQ(csv.rows.size(), 8u);
  EXPECT_EQ(csv.rows[3][1], "processing");
  EXPECT_NEAR(io::to_double(csv.rows[3][4]), tt, 1e-6 * tt);
}

// Everything that needs trained models lives in one test so the forest and
// cascade are trained once.
TEST(Pipelines, GatedRunsOnSyntheticVideos) {
  const auto k = qvga();
  const auto forest = msface::testing::small_forest(k);
  const auto cascade = msface::testing::default_cascade();
  const recognize::Model rec =
      recognize::train(recognize::Method::lbph, msface::testing::synth_gallery(5, 4));
  const Models models{&forest, &cascade, &rec};
  const auto cfg = qvga_config();

  // Sweep -75..75 in 5 degree steps: frames 12..18 are within 15 degrees.
  std::vector<double> sweep;
  for (int i = 0; i < 31; ++i) sweep.push_back(-75 + 5.0 * i);
  const auto video = video_of_poses(sweep, 38.5);
  const auto p = run_proposed(video, models, cfg);
  ASSERT_EQ(p.errors, 0);
  std::set<int> accepted;
  for (const auto& f : p.frames)
    if (f.gate && f.gate->accepted) accepted.insert(f.index);
  std::set<int> truth{12, 13, 14, 15, 16, 17, 18};
  for (int i : accepted) EXPECT_TRUE(i >= 11 && i <= 19) << "accepted frame " << i;
  for (int i = 13; i <= 17; ++i) EXPECT_TRUE(accepted.count(i)) << "missed frame " << i;
  EXPECT_EQ(p.detector_invocations, p.gate_accepted);
  EXPECT_EQ(static_cast<std::size_t>(p.gate_accepted), accepted.size());
  EXPECT_LE(p.recognizer_invocations, p.detector_invocations);
  ASSERT_TRUE(p.first_frontal_index);
  EXPECT_EQ(*p.first_frontal_index, *accepted.begin());
  // Fever at 38.5 is reported once for the whole sequence.
  ASSERT_EQ(p.findings.size(), 1u);
  EXPECT_EQ(p.findings[0].kind, FindingKind::fever);
  EXPECT_NEAR(p.findings[0].value, 38.5, 0.3);
  EXPECT_EQ(protocol_messages(p.findings)[0].text,
            "POSSIBLE ACTION: Inquire: Have you been experiencing a high fever?");
  for (const auto& f : p.frames) {
    if (!f.gate->accepted) {
      EXPECT_TRUE(f.boxes.empty());
      EXPECT_FALSE(f.prediction);
    }
    if (f.prediction) {
      EXPECT_EQ(f.prediction->label, 1);
    }
  }

  // Determinism of everything but timings.
  EXPECT_EQ(format_results(p), format_results(run_proposed(video, models, cfg)));

  // Frontal-only video through the traditional pipeline: every recognized
  // frame carries the subject's label.
  const auto frontal = video_of_poses({0, 2, -2, 4, -4, 0});
  const auto t = run_traditional(frontal, models, cfg);
  EXPECT_EQ(t.detector_invocations, 6);
  EXPECT_EQ(t.detections(), 6);
  ASSERT_TRUE(t.accuracy(1));
  EXPECT_DOUBLE_EQ(*t.accuracy(1), 1.0);
  EXPECT_TRUE(t.findings.empty());

  // All-profile video: nothing accepted, nothing recognized.
  const auto profile = run_proposed(video_of_poses({60, -60, 70, -75, 65}), models, cfg);
  EXPECT_EQ(profile.gate_accepted, 0);
  EXPECT_EQ(profile.recognizer_invocations, 0);
  EXPECT_EQ(profile.detector_invocations, 0);
  EXPECT_FALSE(profile.first_frontal_index);

  // 10% frontal: the gated detector runs on exactly a tenth of the frames.
  std::vector<double> tenth;
  for (int i = 0; i < 20; ++i) tenth.push_back(i % 10 == 0 ? 0.0 : (i % 2 ? 60.0 : -70.0));
  std::vector<RunResult> tr, pr;
  const auto b = bench({video_of_poses(tenth)}, models, {cfg}, 0.0, &tr, &pr);
  EXPECT_EQ(b.traditional.detector_invocations, 20);
  EXPECT_EQ(b.proposed.detector_invocations, 2);
  EXPECT_EQ(pr[0].detector_invocations, pr[0].gate_accepted);
  for (const auto* runs : {&tr, &pr})
    for (const auto& f : (*runs)[0].frames) {
      const auto& tm = f.timings;
      EXPECT_GE(tm.processing_ms,
                std::max({tm.recognition_ms, tm.dhp_ms, tm.detection_ms}));
    }
}
