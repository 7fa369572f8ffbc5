#pragma once

// Deterministic synthetic multi-spectral sequences with exact ground truth.
//
// Depth: the head is an ellipsoid with a small nose ellipsoid in front of
// it, ray-cast against a fronto-parallel background plane. Gray: a
// per-subject procedural face texture whose features are compressed and
// shifted sideways as the head turns. IR: flat temperature regions pushed
// through the inverse of a thermal calibration line.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "msface/error.hpp"
#include "msface/geometry.hpp"
#include "msface/image.hpp"
#include "msface/io.hpp"
#include "msface/manifest.hpp"
#include "msface/pgm.hpp"
#include "msface/thermal.hpp"

namespace msface::synth {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

/// Ellipsoid attached to the head, in head coordinates.
struct HeadPart {
  Vec3 offset;
  Vec3 radii;
};

struct SynthHeadSpec {
  Vec3 head_radii{75, 110, 100};
  Vec3 nose_radii{12, 25, 25};
  Vec3 nose_offset{0, 0, -100};  // head frame, face looks along -z, y down
  // Brow ridge and chin break the up/down symmetry of the head.
  std::vector<HeadPart> parts{{{0, -50, -78}, {60, 18, 30}},
                              {{0, 78, -60}, {45, 28, 40}}};
  Vec3 head_center{0, 0, 1000};
  HeadPose pose;                // orientation; center is head_center
  double background_depth_mm = 1600;
  double noise_sigma_mm = 0;
  std::uint64_t seed = 0;

  void validate() const {
    auto positive = [](const Vec3& r) { return r.x > 0 && r.y > 0 && r.z > 0; };
    require(positive(head_radii) && positive(nose_radii) &&
                std::all_of(parts.begin(), parts.end(),
                            [&](const HeadPart& p) { return positive(p.radii); }),
            "ellipsoid radii must be positive");
    const double rmax = std::max({head_radii.x, head_radii.y, head_radii.z});
    require(background_depth_mm > head_center.z + rmax,
            "background must lie behind the head");
    require(head_center.z > rmax, "head must be in front of the camera");
    require(noise_sigma_mm >= 0, "noise sigma must be non-negative");
  }

  /// Nose tip in head coordinates.
  Vec3 nose_tip_local() const {
    return nose_offset + Vec3{0, 0, -nose_radii.z};
  }
};

/// Ground-truth pose for a head spec: center->nose-tip, camera-facing.
inline HeadPose ground_truth_pose(const SynthHeadSpec& s) {
  HeadPose p = s.pose;
  p.center = s.head_center;
  const Vec3 tip_dir = physical_rotation(p) * s.nose_tip_local();
  p.direction = normalized(mirror_z(tip_dir));
  return p;
}

namespace detail {

/// Nearest positive ray parameter for a ray from the origin along `dir`
/// hitting an ellipsoid (center c, rotation r, radii rad), or -1.
inline double ray_ellipsoid(const Vec3& dir, const Vec3& c, const Mat3& rt,
                            const Vec3& rad) {
  const Vec3 a = rt * dir;
  const Vec3 b = rt * c;
  const Vec3 as{a.x / rad.x, a.y / rad.y, a.z / rad.z};
  const Vec3 bs{b.x / rad.x, b.y / rad.y, b.z / rad.z};
  const double qa = dot(as, as);
  const double qb = dot(as, bs);
  const double qc = dot(bs, bs) - 1.0;
  const double disc = qb * qb - qa * qc;
  if (disc < 0) return -1;
  const double t = (qb - std::sqrt(disc)) / qa;
  return t > 0 ? t : -1;
}

}  // namespace detail

struct DepthRender {
  DepthFrame depth;
  HeadPose pose;
};

inline DepthRender render_depth(const SynthHeadSpec& spec,
                                const CameraIntrinsics& k,
                                std::int64_t timestamp_us = 0) {
  spec.validate();
  k.validate();
  const HeadPose gt = ground_truth_pose(spec);
  const Mat3 r = physical_rotation(gt);
  const Mat3 rt = r.transposed();
  std::vector<HeadPart> parts{{spec.nose_offset, spec.nose_radii}};
  parts.insert(parts.end(), spec.parts.begin(), spec.parts.end());
  for (auto& p : parts) p.offset = spec.head_center + r * p.offset;

  DepthFrame out(k.width, k.height, 0, timestamp_us);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  bool any_head = false;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const Vec3 dir{(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
      double z = spec.background_depth_mm;
      const double th = detail::ray_ellipsoid(dir, spec.head_center, rt,
                                              spec.head_radii);
      if (th > 0 && th < z) z = th, any_head = true;
      for (const auto& p : parts) {
        const double tp = detail::ray_ellipsoid(dir, p.offset, rt, p.radii);
        if (tp > 0 && tp < z) z = tp, any_head = true;
      }
      if (spec.noise_sigma_mm > 0) z += spec.noise_sigma_mm * noise(rng);
      out.at(u, v) =
          static_cast<std::uint16_t>(std::clamp(std::lround(z), 1L, 65535L));
    }
  }
  if (!any_head) fail_data("synthetic head lies fully outside the frustum");
  return {std::move(out), gt};
}

// --- procedural faces -------------------------------------------------

struct Blob {
  double u, v, sigma, amp;
};

/// Per-subject appearance parameters, a pure function of the subject id.
struct SubjectAppearance {
  double skin = 160;
  double hair = 50;
  double eye_dx = 0.35;
  double eye_y = -0.25;
  double mouth_y = 0.5;
  double mouth_w = 0.26;
  double brow_gap = 0.17;
  double hairline = -0.72;
  std::array<Blob, 6> blobs{};
  std::array<std::array<double, 4>, 2> waves{};  // fu, fv, phase, amp

  static SubjectAppearance for_subject(int subject_id) {
    std::mt19937_64 rng(mix_seed(0x5eedface, static_cast<std::uint64_t>(
                                                 subject_id)));
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * U(rng); };
    SubjectAppearance s;
    s.skin = uni(135, 185);
    s.hair = uni(25, 80);
    s.eye_dx = uni(0.28, 0.40);
    s.eye_y = uni(-0.32, -0.18);
    s.mouth_y = uni(0.42, 0.56);
    s.mouth_w = uni(0.18, 0.34);
    s.brow_gap = uni(0.13, 0.21);
    s.hairline = uni(-0.82, -0.62);
    for (auto& b : s.blobs)
      b = {uni(-0.7, 0.7), uni(-0.7, 0.8), uni(0.18, 0.45),
           (U(rng) < 0.5 ? -1.0 : 1.0) * uni(18, 40)};
    for (auto& w : s.waves)
      w = {uni(0.5, 2.0), uni(0.5, 2.0), uni(0, 2 * kPi), uni(6, 14)};
    return s;
  }

  /// Intensity at canonical (frontal) face coordinates, both in [-1, 1],
  /// v pointing down. Only meaningful inside the face ellipse.
  double shade(double u, double v) const {
    if (v < hairline + 0.05 * std::sin(3 * u)) return hair;
    double val = skin;
    for (const auto& b : blobs) {
      const double d2 = (u - b.u) * (u - b.u) + (v - b.v) * (v - b.v);
      val += b.amp * std::exp(-d2 / (2 * b.sigma * b.sigma));
    }
    for (const auto& w : waves)
      val += w[3] * std::sin(kPi * (w[0] * u + w[1] * v) + w[2]);
    auto in_ellipse = [](double du, double dv, double ru, double rv) {
      return (du * du) / (ru * ru) + (dv * dv) / (rv * rv) <= 1.0;
    };
    for (const double side : {-1.0, 1.0}) {
      const double ex = side * eye_dx;
      if (in_ellipse(u - ex, v - eye_y, 0.14, 0.07)) val = 35;
      if (in_ellipse(u - ex, v - (eye_y - brow_gap), 0.19, 0.035))
        val -= 75;
      if (in_ellipse(u - side * 0.08, v - 0.28, 0.045, 0.035)) val -= 55;
    }
    if (std::abs(u) < 0.06 && v > eye_y && v < 0.22) val += 14;
    if (in_ellipse(u, v - mouth_y, mouth_w, 0.055)) val -= 70;
    return val;
  }
};

/// Face outline semi-axes inside the unit face box.
inline constexpr double kFaceEllipseU = 0.75;
inline constexpr double kFaceEllipseV = 0.95;
/// Sideways shift of facial features per unit sin(angle).
inline constexpr double kFeatureShift = 0.55;

/// Intensity of the head at unit face-box coordinates (u, v in [-1, 1]) for
/// the given yaw/pitch, or nullopt outside the head outline.
inline std::optional<double> face_sample(const SubjectAppearance& app,
                                         double u, double v, double yaw_deg,
                                         double pitch_deg) {
  if ((u * u) / (kFaceEllipseU * kFaceEllipseU) +
          (v * v) / (kFaceEllipseV * kFaceEllipseV) >
      1.0)
    return std::nullopt;
  const double cy = std::cos(deg2rad(yaw_deg));
  const double cp = std::cos(deg2rad(pitch_deg));
  if (cy <= 0.02 || cp <= 0.02) return app.hair;  // back of the head
  const double uc = (u - kFeatureShift * std::sin(deg2rad(yaw_deg))) / cy;
  const double vc = (v + kFeatureShift * std::sin(deg2rad(pitch_deg))) / cp;
  if (std::abs(uc) > kFaceEllipseU * 1.02 || std::abs(vc) > 1.0)
    return app.hair * 0.9 + 10;  // side or top of the head
  return app.shade(uc, vc);
}

/// Paints a subject's face into `img` inside `box`. Pixels outside the head
/// outline are left untouched.
template <class Band>
void draw_face(Raster<std::uint8_t, Band>& img, const DetBox& box,
               int subject_id, double yaw_deg, double pitch_deg) {
  const auto app = SubjectAppearance::for_subject(subject_id);
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y)));
  const int x1 = std::min(img.width, static_cast<int>(std::ceil(box.x + box.w)));
  const int y1 =
      std::min(img.height, static_cast<int>(std::ceil(box.y + box.h)));
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const double u = 2.0 * (x + 0.5 - box.x) / box.w - 1.0;
      const double v = 2.0 * (y + 0.5 - box.y) / box.h - 1.0;
      if (const auto s = face_sample(app, u, v, yaw_deg, pitch_deg))
        img.at(x, y) = static_cast<std::uint8_t>(
            std::clamp(std::lround(*s), 0L, 255L));
    }
}

/// Square face image of the subject at the pose's yaw/pitch, on a flat
/// dark background.
inline GrayFrame render_face_gray(int subject_id, const HeadPose& pose,
                                  int size) {
  require(size >= 32, "face image size must be >= 32");
  GrayFrame img(size, size, 60);
  draw_face(img, {0, 0, double(size), double(size)}, subject_id, pose.yaw_deg,
            pose.pitch_deg);
  return img;
}

/// Smooth, low-contrast clutter used as the gray scene background.
inline GrayFrame render_background(int width, int height, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0xbac6));
  std::uniform_real_distribution<double> U(0.0, 1.0);
  struct Wave {
    double fx, fy, ph, amp;
  };
  std::array<Wave, 4> waves;
  for (auto& w : waves)
    w = {0.5 + 2.5 * U(rng), 0.5 + 2.5 * U(rng), 2 * kPi * U(rng),
         6 + 10 * U(rng)};
  const double base = 90 + 30 * U(rng);
  GrayFrame img(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = double(x) / width, v = double(y) / height;
      double val = base + 15 * (u - 0.5);
      for (const auto& w : waves)
        val += w.amp * std::sin(2 * kPi * (w.fx * u + w.fy * v) + w.ph);
      img.at(x, y) =
          static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
    }
  return img;
}

/// Additive Gaussian pixel noise, deterministic in the seed.
template <class Band>
void add_noise(Raster<std::uint8_t, Band>& img, double sigma,
               std::uint64_t seed) {
  if (sigma <= 0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& p : img.pixels)
    p = static_cast<std::uint8_t>(
        std::clamp(std::lround(p + n(rng)), 0L, 255L));
}

/// Square face box around the projected head center, sized from the head's
/// vertical extent.
inline DetBox face_box_for(const HeadPose& pose, const Vec3& head_radii,
                           const CameraIntrinsics& k) {
  const Pixel2 c = project(pose.center, k);
  const double side = 2.0 * head_radii.y * k.fy / pose.center.z;
  return {c.u + 0.5 - side / 2, c.v + 0.5 - side / 2, side, side, 0};
}

// --- infrared ------------------------------------------------------------

inline std::uint8_t intensity_for(double temp_c,
                                  const thermal::ThermalCalibration& cal) {
  const double x = thermal::temp_to_intensity(temp_c, cal);
  const long q = std::lround(x);
  if (q < 0 || q > 255)
    fail_data("temperature " + io::fmt(temp_c) +
              " degC is outside the representable IR intensity range");
  return static_cast<std::uint8_t>(q);
}

struct IrSceneSpec {
  double forehead_temp_c = 33.727;
  /// Remaining face pixels; defaults to the forehead minus the gap between
  /// the reference forehead and whole-head readings.
  std::optional<double> face_temp_c;
  std::optional<double> room_temp_c;  // defaults to the calibration intercept
};

inline IrFrame render_ir(const DetBox& face_box, const IrSceneSpec& spec,
                         const thermal::ThermalCalibration& cal, int width,
                         int height, std::int64_t timestamp_us = 0) {
  require(cal.slope != 0, "calibration slope must be non-zero");
  const double room = spec.room_temp_c.value_or(cal.intercept);
  const double face =
      spec.face_temp_c.value_or(spec.forehead_temp_c - (33.727 - 31.5156));
  const std::uint8_t bg = intensity_for(room, cal);
  const std::uint8_t face_i = intensity_for(face, cal);
  const std::uint8_t fore_i = intensity_for(spec.forehead_temp_c, cal);
  IrFrame ir(width, height, bg, timestamp_us);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = 2.0 * (x + 0.5 - face_box.x) / face_box.w - 1.0;
      const double v = 2.0 * (y + 0.5 - face_box.y) / face_box.h - 1.0;
      if ((u * u) / (kFaceEllipseU * kFaceEllipseU) +
              (v * v) / (kFaceEllipseV * kFaceEllipseV) <=
          1.0)
        ir.at(x, y) = face_i;
    }
  const Rect fr = thermal::forehead_roi(face_box, thermal::RoiMap{}, width,
                                        height);
  for (int y = fr.y; y < fr.y + fr.h; ++y)
    for (int x = fr.x; x < fr.x + fr.w; ++x) ir.at(x, y) = fore_i;
  return ir;
}

/// Convenience overload: forehead temperature only.
inline IrFrame render_ir(const DetBox& face_box, double forehead_temp_c,
                         const thermal::ThermalCalibration& cal, int width,
                         int height) {
  return render_ir(face_box, IrSceneSpec{forehead_temp_c, {}, {}}, cal, width,
                   height);
}

// --- sequences -------------------------------------------------------------

struct SynthSequenceSpec {
  int subject_id = 1;
  int frame_count = 31;
  std::pair<double, double> yaw_sweep_deg{-75, 75};
  std::pair<double, double> pitch_sweep_deg{0, 0};
  std::int64_t frame_period_us = 33333;
  double forehead_temp_c = 33.727;
  std::uint64_t seed = 1;

  // scene setup
  Vec3 head_center{0, 0, 1000};
  double background_depth_mm = 1600;
  double depth_noise_mm = 0;
  double gray_noise = 2.0;
  bool with_ir = true;
  thermal::ThermalCalibration ir_calibration{};
  /// Draw poses uniformly inside the sweep box instead of sweeping, and
  /// jitter the head position; used to build training sets.
  bool random_poses = false;
  double center_jitter_mm = 0;

  void validate() const {
    require(frame_count >= 1, "frame_count must be >= 1");
    require(frame_period_us > 0, "frame_period_us must be > 0");
  }
};

struct SynthFrame {
  DepthFrame depth;
  GrayFrame gray;
  std::optional<IrFrame> ir;
  HeadPose pose;
  DetBox face_box;
  int subject_id = 0;
};

/// Pose of frame i of a sequence.
inline HeadPose sequence_pose(const SynthSequenceSpec& s, int i) {
  if (s.random_poses) {
    std::mt19937_64 rng(mix_seed(s.seed, 0x905e0000ULL + i));
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto lerp = [&](std::pair<double, double> r) {
      return r.first + (r.second - r.first) * U(rng);
    };
    const double yaw = lerp(s.yaw_sweep_deg);
    const double pitch = lerp(s.pitch_sweep_deg);
    const double j = s.center_jitter_mm;
    const Vec3 c = s.head_center + Vec3{j * (2 * U(rng) - 1),
                                        j * (2 * U(rng) - 1),
                                        j * (2 * U(rng) - 1)};
    return make_pose(c, yaw, pitch);
  }
  const double t =
      s.frame_count == 1 ? 0.0 : double(i) / double(s.frame_count - 1);
  const double yaw =
      s.yaw_sweep_deg.first + t * (s.yaw_sweep_deg.second - s.yaw_sweep_deg.first);
  const double pitch = s.pitch_sweep_deg.first +
                       t * (s.pitch_sweep_deg.second - s.pitch_sweep_deg.first);
  return make_pose(s.head_center, yaw, pitch);
}

/// Renders one synchronized depth/gray/IR frame for the given pose.
inline SynthFrame render_frame(const SynthSequenceSpec& s,
                               const CameraIntrinsics& k, const HeadPose& pose,
                               int subject_id, std::uint64_t frame_seed,
                               std::int64_t timestamp_us) {
  SynthHeadSpec hs;
  hs.head_center = pose.center;
  hs.pose = pose;
  hs.background_depth_mm = s.background_depth_mm;
  hs.noise_sigma_mm = s.depth_noise_mm;
  hs.seed = mix_seed(frame_seed, 1);
  auto dr = render_depth(hs, k, timestamp_us);

  SynthFrame f;
  f.pose = dr.pose;
  f.depth = std::move(dr.depth);
  f.subject_id = subject_id;
  f.face_box = face_box_for(f.pose, hs.head_radii, k);
  f.gray = render_background(k.width, k.height, mix_seed(s.seed, 7));
  f.gray.timestamp_us = timestamp_us;
  draw_face(f.gray, f.face_box, subject_id, f.pose.yaw_deg, f.pose.pitch_deg);
  add_noise(f.gray, s.gray_noise, mix_seed(frame_seed, 2));
  if (s.with_ir) {
    f.ir = render_ir(f.face_box, IrSceneSpec{s.forehead_temp_c, {}, {}},
                     s.ir_calibration, k.width, k.height, timestamp_us);
  }
  return f;
}

inline std::vector<SynthFrame> synth_frames(const SynthSequenceSpec& s,
                                            const CameraIntrinsics& k) {
  s.validate();
  std::vector<SynthFrame> out;
  out.reserve(static_cast<std::size_t>(s.frame_count));
  for (int i = 0; i < s.frame_count; ++i)
    out.push_back(render_frame(s, k, sequence_pose(s, i), s.subject_id,
                               mix_seed(s.seed, static_cast<std::uint64_t>(i)),
                               i * s.frame_period_us));
  return out;
}

/// Depth-only rendering of a sequence (no gray or IR), for training sets.
inline std::vector<DepthRender> synth_depth_frames(const SynthSequenceSpec& s,
                                                   const CameraIntrinsics& k) {
  s.validate();
  std::vector<DepthRender> out;
  out.reserve(static_cast<std::size_t>(s.frame_count));
  for (int i = 0; i < s.frame_count; ++i) {
    const HeadPose pose = sequence_pose(s, i);
    SynthHeadSpec hs;
    hs.head_center = pose.center;
    hs.pose = pose;
    hs.background_depth_mm = s.background_depth_mm;
    hs.noise_sigma_mm = s.depth_noise_mm;
    hs.seed = mix_seed(mix_seed(s.seed, static_cast<std::uint64_t>(i)), 1);
    out.push_back(render_depth(hs, k, i * s.frame_period_us));
  }
  return out;
}

inline std::string frame_name(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d.%s", prefix, i, ext);
  return buf;
}

/// Writes the sequence as PGM files, pose files, intrinsics and a manifest
/// (`manifest.csv` + `manifest.meta`) into out_dir.
inline StreamManifest synth_sequence(const SynthSequenceSpec& s,
                                     const CameraIntrinsics& k,
                                     const fs::path& out_dir) {
  s.validate();
  k.validate();
  fs::create_directories(out_dir);
  StreamManifest m;
  m.base_dir = out_dir;
  m.meta.intrinsics = "intrinsics.txt";
  m.meta.frame_period_us = s.frame_period_us;
  m.meta.subject_id = s.subject_id;
  io::write_file_atomic(out_dir / "intrinsics.txt", format_intrinsics(k));
  for (int i = 0; i < s.frame_count; ++i) {
    const std::int64_t ts = i * s.frame_period_us;
    const auto f =
        render_frame(s, k, sequence_pose(s, i), s.subject_id,
                     mix_seed(s.seed, static_cast<std::uint64_t>(i)), ts);
    const auto dn = frame_name("depth", i, "pgm");
    const auto gn = frame_name("gray", i, "pgm");
    pgm::write_depth(out_dir / dn, f.depth);
    pgm::write8(out_dir / gn, f.gray);
    io::write_file_atomic(out_dir / frame_name("pose", i, "txt"),
                          format_pose(f.pose));
    m.rows.push_back({Stream::depth, dn, ts});
    m.rows.push_back({Stream::gray, gn, ts});
    if (f.ir) {
      const auto in = frame_name("ir", i, "pgm");
      pgm::write8(out_dir / in, *f.ir);
      m.rows.push_back({Stream::ir, in, ts});
    }
  }
  write_manifest(out_dir / "manifest.csv", m);
  return m;
}

}  // namespace msface::synth
