#pragma once

// Stream synchronization, the traditional and depth-gated pipelines, the
// timing benchmark and protocol messages.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "msface/detect.hpp"
#include "msface/error.hpp"
#include "msface/geometry.hpp"
#include "msface/io.hpp"
#include "msface/manifest.hpp"
#include "msface/pgm.hpp"
#include "msface/pose_forest.hpp"
#include "msface/recognize.hpp"
#include "msface/synth.hpp"
#include "msface/thermal.hpp"

namespace msface::pipeline {

// --- synchronization -----------------------------------------------------

struct SyncedTriple {
  int index = 0;  // ordinal of the depth frame in its stream
  std::int64_t timestamp_us = 0;
  DepthFrame depth;
  GrayFrame gray;
  std::optional<IrFrame> ir;
};

struct SyncStats {
  std::size_t depth_frames = 0, gray_frames = 0, ir_frames = 0;
  std::size_t paired = 0;
  std::size_t dropped = 0;       // depth frames without a gray frame in tolerance
  std::size_t ir_unmatched = 0;  // paired frames left without IR
  std::size_t gray_aliased = 0;  // matched gray frame has another ordinal
  std::size_t ir_aliased = 0;    // matched IR frame has another ordinal
};

struct SyncResult {
  std::vector<SyncedTriple> triples;
  SyncStats stats;
};

namespace detail {

/// Index of the row nearest to t (earlier wins ties), or -1 when none lies
/// within tol.
inline int nearest_row(const std::vector<const ManifestRow*>& rows, std::int64_t t,
                       std::int64_t tol) {
  const auto it = std::lower_bound(rows.begin(), rows.end(), t,
                                   [](const ManifestRow* r, std::int64_t v) {
                                     return r->timestamp_us < v;
                                   });
  int best = -1;
  std::int64_t best_d = 0;
  for (auto j = it == rows.begin() ? it : it - 1; j != rows.end() && j <= it; ++j) {
    const std::int64_t d = std::abs((*j)->timestamp_us - t);
    if (best < 0 || d < best_d) {
      best = static_cast<int>(j - rows.begin());
      best_d = d;
    }
  }
  return best >= 0 && best_d <= tol ? best : -1;
}

}  // namespace detail

/// Pairs every depth frame with the nearest gray (and IR) frame within
/// tolerance (default frame_period/2, inclusive) and loads the images.
inline SyncResult sync_streams(const StreamManifest& m,
                               std::optional<std::int64_t> tolerance_us = std::nullopt) {
  const std::int64_t tol = tolerance_us.value_or(m.meta.frame_period_us / 2);
  require(tol >= 0, "sync tolerance must be >= 0");
  const auto depth = m.rows_of(Stream::depth);
  const auto gray = m.rows_of(Stream::gray);
  const auto ir = m.rows_of(Stream::ir);
  SyncResult r;
  auto& st = r.stats;
  st.depth_frames = depth.size();
  st.gray_frames = gray.size();
  st.ir_frames = ir.size();
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const auto t = depth[i]->timestamp_us;
    const int gi = detail::nearest_row(gray, t, tol);
    if (gi < 0) {
      ++st.dropped;
      continue;
    }
    SyncedTriple tr;
    tr.index = static_cast<int>(i);
    tr.timestamp_us = t;
    tr.depth = pgm::read_depth(m.resolve(depth[i]->path));
    tr.gray = pgm::read_gray(m.resolve(gray[static_cast<std::size_t>(gi)]->path));
    if (tr.gray.width != tr.depth.width || tr.gray.height != tr.depth.height)
      fail_data("gray and depth frames differ in size at t=" + std::to_string(t));
    st.gray_aliased += gi != static_cast<int>(i);
    if (!ir.empty()) {
      const int ii = detail::nearest_row(ir, t, tol);
      if (ii < 0) {
        ++st.ir_unmatched;
      } else {
        tr.ir = pgm::read_ir(m.resolve(ir[static_cast<std::size_t>(ii)]->path));
        st.ir_aliased += ii != static_cast<int>(i);
      }
    }
    r.triples.push_back(std::move(tr));
    ++st.paired;
  }
  if (r.triples.empty())
    fail_data("no synchronized frames: depth=" + std::to_string(st.depth_frames) +
              " gray=" + std::to_string(st.gray_frames) + " ir=" +
              std::to_string(st.ir_frames) + " dropped=" + std::to_string(st.dropped) +
              " tolerance_us=" + std::to_string(tol));
  return r;
}

/// In-memory frames as already-synchronized triples, one period apart.
inline std::vector<SyncedTriple> triples_from_frames(const std::vector<synth::SynthFrame>& frames,
                                                     std::int64_t frame_period_us = 33333) {
  std::vector<SyncedTriple> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i)
    out.push_back({static_cast<int>(i), static_cast<std::int64_t>(i) * frame_period_us,
                   frames[i].depth, frames[i].gray, frames[i].ir});
  return out;
}

// --- findings and protocol -------------------------------------------------

enum class FindingKind { fever, appearance_anomaly };

struct Finding {
  FindingKind kind = FindingKind::fever;
  double value = 0;       // temperature for fever findings
  int frame_index = -1;
  std::string detail;     // appearance findings: what was observed
};

enum class Severity { action, warning };

struct ProtocolMessage {
  Severity severity;
  std::string text;
};

inline std::vector<ProtocolMessage> protocol_messages(const std::vector<Finding>& findings) {
  std::vector<ProtocolMessage> out;
  for (const auto& f : findings) {
    switch (f.kind) {
      case FindingKind::fever:
        out.push_back({Severity::action,
                       "POSSIBLE ACTION: Inquire: Have you been experiencing a high fever?"});
        break;
      case FindingKind::appearance_anomaly:
        out.push_back({Severity::warning,
                       "WARNING: Possible intention to change appearance; " + f.detail + "."});
        break;
      default:
        throw Error(ErrorKind::invalid_argument, "unknown finding kind");
    }
  }
  return out;
}

// --- pipelines -----------------------------------------------------------------

struct Models {
  const forest::PoseForest* forest = nullptr;  // proposed pipeline only
  const detect::Cascade* cascade = nullptr;
  const recognize::Model* recognizer = nullptr;  // optional
};

struct PipelineConfig {
  CameraIntrinsics intrinsics = kinect_vga();
  int subsample = 1;  // process frames 0, n, 2n, ...
  double threshold_deg = 15;
  double k_head_mm = 300;
  detect::HaarParams haar;
  forest::EstimateParams estimate;
  int chip_width = recognize::kChipWidth;
  int chip_height = recognize::kChipHeight;
  thermal::ThermalCalibration ir_calibration = thermal::reference_calibration();
  thermal::RoiMap roi_map;
  double fever_threshold_c = 38.0;
  std::optional<int> subject_id;  // expected label, for accuracy
};

struct FrameTimings {
  double recognition_ms = 0;
  double dhp_ms = 0;
  double detection_ms = 0;
  double processing_ms = 0;
};

struct FrameResult {
  int index = 0;
  std::int64_t timestamp_us = 0;
  std::optional<GateDecision> gate;  // proposed pipeline only
  std::optional<HeadPose> pose;
  Rect roi;
  std::vector<DetBox> boxes;
  std::optional<recognize::Prediction> prediction;  // for the top box
  std::optional<thermal::ThermalReading> thermal;
  std::string error;
  FrameTimings timings;
};

enum class Method { traditional, proposed };

inline const char* to_string(Method m) {
  return m == Method::traditional ? "traditional" : "proposed";
}

struct RunResult {
  Method method = Method::traditional;
  std::vector<FrameResult> frames;  // processed frames only
  std::size_t total_frames = 0;
  std::int64_t detector_invocations = 0;
  std::int64_t recognizer_invocations = 0;
  int gate_accepted = 0;
  std::optional<int> first_frontal_index;
  std::vector<Finding> findings;
  int errors = 0;

  /// Frames with at least one box.
  int detections() const {
    return static_cast<int>(std::count_if(frames.begin(), frames.end(),
                                          [](const FrameResult& f) { return !f.boxes.empty(); }));
  }
  /// Correct predictions over predictions made, when the subject is known.
  std::optional<double> accuracy(int subject) const {
    int n = 0, ok = 0;
    for (const auto& f : frames)
      if (f.prediction) {
        ++n;
        ok += f.prediction->label == subject;
      }
    if (n == 0) return std::nullopt;
    return double(ok) / n;
  }
};

namespace detail {

using Clock = std::chrono::steady_clock;
inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

inline void recognize_top(const GrayFrame& gray, const Models& m, const PipelineConfig& c,
                          FrameResult& fr, RunResult& run) {
  if (!m.recognizer || fr.boxes.empty()) return;
  const auto t0 = Clock::now();
  const auto chip =
      recognize::normalize_chip(gray, fr.boxes.front(), c.chip_width, c.chip_height);
  fr.prediction = recognize::predict(*m.recognizer, chip);
  ++run.recognizer_invocations;
  fr.timings.recognition_ms = ms_since(t0);
}

inline void read_thermal(const SyncedTriple& t, const PipelineConfig& c, FrameResult& fr,
                         RunResult& run) {
  if (!t.ir || fr.boxes.empty()) return;
  const Rect roi =
      thermal::forehead_roi(fr.boxes.front(), c.roi_map, t.ir->width, t.ir->height);
  fr.thermal = thermal::temp_of_roi(*t.ir, roi, c.ir_calibration);
  const bool seen = std::any_of(run.findings.begin(), run.findings.end(), [](const Finding& f) {
    return f.kind == FindingKind::fever;
  });
  if (!seen)
    if (const auto fev = thermal::fever_check(fr.thermal->temp_c, c.fever_threshold_c))
      run.findings.push_back({FindingKind::fever, fev->temp_c, fr.index, {}});
}

inline void check_config(const PipelineConfig& c, const Models& m) {
  require(c.subsample >= 1, "subsample must be >= 1");
  require(m.cascade != nullptr, "pipeline needs a cascade");
  c.intrinsics.validate();
}

}  // namespace detail

/// Every `subsample`-th gray frame goes through the full-frame detector and
/// the top box through the recognizer. Frame errors are recorded and the
/// run continues.
inline RunResult run_traditional(const std::vector<SyncedTriple>& triples, const Models& m,
                                 const PipelineConfig& c) {
  detail::check_config(c, m);
  RunResult run;
  run.method = Method::traditional;
  run.total_frames = triples.size();
  detect::DetectorCounters counters;
  for (std::size_t i = 0; i < triples.size(); i += static_cast<std::size_t>(c.subsample)) {
    const auto& t = triples[i];
    FrameResult fr;
    fr.index = t.index;
    fr.timestamp_us = t.timestamp_us;
    const auto t0 = detail::Clock::now();
    try {
      const auto td = detail::Clock::now();
      fr.boxes = detect::detect_haar(t.gray, *m.cascade, c.haar, &counters);
      fr.timings.detection_ms = detail::ms_since(td);
      detail::recognize_top(t.gray, m, c, fr, run);
      detail::read_thermal(t, c, fr, run);
    } catch (const Error& e) {
      fr.error = e.what();
      ++run.errors;
    }
    fr.timings.processing_ms = detail::ms_since(t0);
    run.frames.push_back(std::move(fr));
  }
  run.detector_invocations = counters.invocations.load();
  return run;
}

/// Depth-gated pipeline: head pose first; only frontal frames reach the
/// detector (inside the head ROI), the recognizer and the IR reading.
inline RunResult run_proposed(const std::vector<SyncedTriple>& triples, const Models& m,
                              const PipelineConfig& c) {
  detail::check_config(c, m);
  require(m.forest != nullptr, "proposed pipeline needs a pose forest");
  RunResult run;
  run.method = Method::proposed;
  run.total_frames = triples.size();
  detect::DetectorCounters counters;
  for (std::size_t i = 0; i < triples.size(); i += static_cast<std::size_t>(c.subsample)) {
    const auto& t = triples[i];
    FrameResult fr;
    fr.index = t.index;
    fr.timestamp_us = t.timestamp_us;
    const auto t0 = detail::Clock::now();
    try {
      const auto tp = detail::Clock::now();
      fr.pose = forest::estimate(*m.forest, t.depth, c.intrinsics, c.estimate);
      fr.gate = fr.pose ? gate(*fr.pose, c.threshold_deg) : rejected_no_head(c.threshold_deg);
      fr.timings.dhp_ms = detail::ms_since(tp);
      if (fr.gate->accepted) {
        ++run.gate_accepted;
        if (!run.first_frontal_index) run.first_frontal_index = t.index;
        const auto td = detail::Clock::now();
        fr.roi = detect::head_roi(*fr.pose, c.intrinsics, c.k_head_mm, t.gray.bounds());
        fr.boxes = detect::detect_in_roi(t.gray, fr.roi, *m.cascade, c.haar, &counters);
        fr.timings.detection_ms = detail::ms_since(td);
        detail::recognize_top(t.gray, m, c, fr, run);
        detail::read_thermal(t, c, fr, run);
      }
    } catch (const Error& e) {
      fr.error = e.what();
      ++run.errors;
    }
    fr.timings.processing_ms = detail::ms_since(t0);
    run.frames.push_back(std::move(fr));
  }
  run.detector_invocations = counters.invocations.load();
  return run;
}

inline RunResult run(Method method, const std::vector<SyncedTriple>& triples,
                     const Models& m, const PipelineConfig& c) {
  return method == Method::traditional ? run_traditional(triples, m, c)
                                       : run_proposed(triples, m, c);
}

/// Everything a run produced except timings, one line per processed frame.
inline std::string format_results(const RunResult& r) {
  std::ostringstream o;
  o << "method=" << to_string(r.method) << " frames=" << r.total_frames
    << " processed=" << r.frames.size() << " detector_invocations=" << r.detector_invocations
    << " recognizer_invocations=" << r.recognizer_invocations
    << " gate_accepted=" << r.gate_accepted << " first_frontal="
    << (r.first_frontal_index ? std::to_string(*r.first_frontal_index) : "none")
    << " errors=" << r.errors << '\n';
  for (const auto& f : r.frames) {
    o << "frame " << f.index << " t=" << f.timestamp_us;
    if (f.gate)
      o << " gate=" << (f.gate->accepted ? "accept" : "reject")
        << " offset=" << io::fmt(f.gate->offset_deg);
    if (f.pose)
      o << " yaw=" << io::fmt(f.pose->yaw_deg) << " pitch=" << io::fmt(f.pose->pitch_deg);
    for (const auto& b : f.boxes)
      o << " box=" << io::fmt(b.x) << ',' << io::fmt(b.y) << ',' << io::fmt(b.w) << ','
        << io::fmt(b.h) << ':' << io::fmt(b.score);
    if (f.prediction)
      o << " label=" << f.prediction->label << " dist=" << io::fmt(f.prediction->distance);
    if (f.thermal)
      o << " temp_c=" << io::fmt(f.thermal->temp_c)
        << " blood_flow=" << io::fmt(f.thermal->blood_flow);
    if (!f.error.empty()) o << " error=\"" << f.error << '"';
    o << '\n';
  }
  for (const auto& m : protocol_messages(r.findings)) o << m.text << '\n';
  return o.str();
}

// --- benchmark -------------------------------------------------------------------

struct MethodTimings {
  FrameTimings per_frame;  // mean over processed frames
  FrameTimings per_video;  // mean over videos of the per-video sums
  FrameTimings total;      // sum over all frames
  std::size_t frames = 0;
  std::int64_t detector_invocations = 0;
};

struct BenchReport {
  std::size_t videos = 0;
  MethodTimings traditional, proposed;
  double speedup_pct = 0;  // 100 * (T_trad - T_prop) / T_trad over total processing
  double overhead_s = 0;   // one-time forest load/train time
};

inline void add(FrameTimings& a, const FrameTimings& b, double scale = 1.0) {
  a.recognition_ms += scale * b.recognition_ms;
  a.dhp_ms += scale * b.dhp_ms;
  a.detection_ms += scale * b.detection_ms;
  a.processing_ms += scale * b.processing_ms;
}

inline MethodTimings summarize(const std::vector<RunResult>& runs) {
  MethodTimings t;
  for (const auto& r : runs) {
    for (const auto& f : r.frames) add(t.total, f.timings);
    t.frames += r.frames.size();
    t.detector_invocations += r.detector_invocations;
  }
  if (t.frames) add(t.per_frame, t.total, 1.0 / double(t.frames));
  if (!runs.empty()) add(t.per_video, t.total, 1.0 / double(runs.size()));
  return t;
}

/// Report over finished runs (one traditional and one proposed per video).
inline BenchReport make_bench_report(const std::vector<RunResult>& trad,
                                     const std::vector<RunResult>& prop, double overhead_s = 0) {
  require(trad.size() == prop.size(), "bench needs one run per method and video");
  BenchReport b;
  b.videos = trad.size();
  b.traditional = summarize(trad);
  b.proposed = summarize(prop);
  b.overhead_s = overhead_s;
  const double tt = b.traditional.total.processing_ms;
  b.speedup_pct = tt > 0 ? 100.0 * (tt - b.proposed.total.processing_ms) / tt : 0.0;
  return b;
}

/// Runs both pipelines over every video, each video with its own config.
inline BenchReport bench(const std::vector<std::vector<SyncedTriple>>& videos, const Models& m,
                         const std::vector<PipelineConfig>& configs, double overhead_s = 0,
                         std::vector<RunResult>* trad_runs = nullptr,
                         std::vector<RunResult>* prop_runs = nullptr) {
  require(videos.size() == configs.size(), "one pipeline config per video");
  require(!videos.empty(), "bench needs at least one video");
  std::vector<RunResult> tr, pr;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    tr.push_back(run_traditional(videos[v], m, configs[v]));
    pr.push_back(run_proposed(videos[v], m, configs[v]));
  }
  const auto b = make_bench_report(tr, pr, overhead_s);
  if (trad_runs) *trad_runs = std::move(tr);
  if (prop_runs) *prop_runs = std::move(pr);
  return b;
}

/// Rows Recognition/DHP/Detection/Processing x per-frame/per-video/total.
inline std::string bench_csv(const BenchReport& b) {
  std::ostringstream o;
  o << "method,row,per_frame_ms,per_video_ms,total_ms\n";
  for (const auto* mt : {&b.traditional, &b.proposed}) {
    const char* name = mt == &b.traditional ? "traditional" : "proposed";
    auto row = [&](const char* label, double FrameTimings::*field) {
      o << name << ',' << label << ',' << io::fmt(mt->per_frame.*field) << ','
        << io::fmt(mt->per_video.*field) << ',' << io::fmt(mt->total.*field) << '\n';
    };
    row("recognition", &FrameTimings::recognition_ms);
    row("dhp", &FrameTimings::dhp_ms);
    row("detection", &FrameTimings::detection_ms);
    row("processing", &FrameTimings::processing_ms);
  }
  return o.str();
}

inline std::string bench_text(const BenchReport& b) {
  std::ostringstream o;
  o << "videos=" << b.videos << '\n';
  for (const auto* mt : {&b.traditional, &b.proposed}) {
    const char* name = mt == &b.traditional ? "traditional" : "proposed";
    o << name << ".frames=" << mt->frames << '\n'
      << name << ".detector_invocations=" << mt->detector_invocations << '\n'
      << name << ".per_frame_processing_ms=" << io::fmt(mt->per_frame.processing_ms) << '\n'
      << name << ".total_processing_ms=" << io::fmt(mt->total.processing_ms) << '\n';
  }
  o << "speedup_pct=" << io::fmt(b.speedup_pct) << '\n'
    << "overhead_s=" << io::fmt(b.overhead_s) << '\n';
  return o.str();
}

}  // namespace msface::pipeline
