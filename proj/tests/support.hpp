#pragma once

// Shared fixtures for the test suites and the acceptance runner.

#include <filesystem>
#include <string>
#include <vector>

#include "msface/detect.hpp"
#include "msface/face_corpus.hpp"
#include "msface/pose_forest.hpp"
#include "msface/recognize.hpp"
#include "msface/synth.hpp"

namespace msface::testing {

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("msface_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// 320x240 Kinect-like camera; tests run at half the VGA resolution.
inline CameraIntrinsics qvga() { return kinect_vga().scaled(0.5); }

/// Forest settings used at QVGA (patch 40 = 80 at VGA).
inline forest::ForestParams qvga_forest_params() {
  forest::ForestParams p;
  p.patch_size = 40;
  p.n_trees = 10;
  p.max_depth = 20;
  p.min_samples = 5;
  p.n_candidate_tests = 100;
  p.patches_per_frame = 40;
  return p;
}

/// Random poses inside the given yaw/pitch box with the head jittered
/// around 1 m from the camera.
inline synth::SynthSequenceSpec random_pose_spec(int n, double yaw_max,
                                                 double pitch_max,
                                                 std::uint64_t seed) {
  synth::SynthSequenceSpec s;
  s.frame_count = n;
  s.random_poses = true;
  s.yaw_sweep_deg = {-yaw_max, yaw_max};
  s.pitch_sweep_deg = {-pitch_max, pitch_max};
  s.head_center = {0, 0, 1000};
  s.center_jitter_mm = 50;
  s.depth_noise_mm = 2;
  s.seed = seed;
  return s;
}

inline std::vector<forest::TrainingFrame> training_frames(
    const synth::SynthSequenceSpec& s, const CameraIntrinsics& k) {
  std::vector<forest::TrainingFrame> out;
  for (auto& r : synth::synth_depth_frames(s, k))
    out.push_back({std::move(r.depth), r.pose});
  return out;
}

/// Noise-free depth render of a head at (0,0,1000) with the given pose.
inline synth::DepthRender head_at(double yaw, double pitch,
                                  const CameraIntrinsics& k) {
  synth::SynthHeadSpec hs;
  hs.head_center = {0, 0, 1000};
  hs.pose = make_pose(hs.head_center, yaw, pitch);
  return synth::render_depth(hs, k);
}

/// Forest used by the detection and pipeline suites: 300 frames,
/// yaw +-75, pitch +-30.
inline forest::PoseForest small_forest(const CameraIntrinsics& k) {
  return forest::train(training_frames(random_pose_spec(300, 75, 30, 11), k), k,
                       qvga_forest_params());
}

/// Cascade trained on the default synthetic window corpus.
inline detect::Cascade default_cascade() {
  const auto c = synth::window_corpus({});
  return detect::train_cascade(c.positives, c.negatives, {});
}

/// Normalized chip of a subject cut at the ground-truth face box of a
/// rendered QVGA frame. The room (background) is fixed; `seed` drives the
/// pixel noise.
inline recognize::FaceChip synth_chip(int subject, double yaw, double pitch,
                                      std::uint64_t seed) {
  synth::SynthSequenceSpec s;
  s.with_ir = false;
  const auto f = synth::render_frame(s, qvga(), make_pose(s.head_center, yaw, pitch),
                                     subject, seed, 0);
  auto c = recognize::normalize_chip(f.gray, f.face_box);
  c.label = subject;
  return c;
}

/// Subjects 1..n, `per` near-frontal chips each (yaw/pitch within +-4).
inline recognize::Gallery synth_gallery(int n, int per, std::uint64_t seed = 1) {
  recognize::Gallery g;
  for (int s = 1; s <= n; ++s) {
    for (int i = 0; i < per; ++i) {
      const double a = per == 1 ? 0.0 : -4.0 + 8.0 * i / (per - 1);
      g.chips.push_back(synth_chip(s, a, -a / 2, synth::mix_seed(seed, s * 100 + i)));
    }
    g.label_names[s] = "subject_" + std::to_string(s);
  }
  return g;
}

}  // namespace msface::testing
