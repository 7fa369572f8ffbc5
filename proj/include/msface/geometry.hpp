#pragma once

// Camera model, head orientation conventions and the frontal-view gate.
//
// Conventions:
//  * Camera frame is right-handed with +z pointing from the camera into the
//    scene. Positions are in millimeters.
//  * A head's physical center->nose vector points back toward the camera
//    for a frontal face, i.e. roughly (0,0,-1). Directions stored in a
//    HeadPose are "camera-facing": the physical vector with z mirrored, so
//    a frontal face is (0,0,1). The mirror is applied once, where poses
//    enter the system (pose files, renderer ground truth).
//  * Euler angles are intrinsic yaw (about y) then pitch (about x), with
//    roll about the resulting view direction: R = Ry(yaw) Rx(pitch) Rz(roll)
//    acting on the camera-facing frame. The view direction is R * (0,0,1).

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <string>

#include "msface/error.hpp"
#include "msface/io.hpp"

namespace msface {

inline constexpr double kPi = std::numbers::pi;
inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x, y += o.y, z += o.z;
    return *this;
  }
  bool operator==(const Vec3&) const = default;
};

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  require(n > 0, "cannot normalize a zero vector");
  return a / n;
}
inline Vec3 mirror_z(const Vec3& a) { return {a.x, a.y, -a.z}; }

/// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double operator()(int r, int c) const { return m[r * 3 + c]; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
};

inline Mat3 rot_x(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  return Mat3{{1, 0, 0, 0, c, -s, 0, s, c}};
}
inline Mat3 rot_y(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  return Mat3{{c, 0, s, 0, 1, 0, -s, 0, c}};
}
inline Mat3 rot_z(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  return Mat3{{c, -s, 0, s, c, 0, 0, 0, 1}};
}

struct CameraIntrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  int width = 640;
  int height = 480;

  void validate() const {
    require(fx > 0 && fy > 0, "focal lengths must be positive");
    require(width > 0 && height > 0, "image size must be positive");
    require(cx >= 0 && cx < width && cy >= 0 && cy < height,
            "principal point must lie inside the image");
  }

  /// Intrinsics rescaled to a different resolution (same field of view).
  CameraIntrinsics scaled(double s) const {
    return {fx * s, fy * s, (cx + 0.5) * s - 0.5, (cy + 0.5) * s - 0.5,
            static_cast<int>(std::lround(width * s)),
            static_cast<int>(std::lround(height * s))};
  }
};

inline CameraIntrinsics kinect_vga() { return {}; }

/// Text form: key=value lines fx, fy, cx, cy, width, height.
inline std::string format_intrinsics(const CameraIntrinsics& k) {
  std::ostringstream o;
  o << "fx=" << io::fmt(k.fx) << "\nfy=" << io::fmt(k.fy)
    << "\ncx=" << io::fmt(k.cx) << "\ncy=" << io::fmt(k.cy)
    << "\nwidth=" << k.width << "\nheight=" << k.height << "\n";
  return o.str();
}

inline CameraIntrinsics parse_intrinsics(std::string_view text) {
  const auto kv = io::parse_key_values(text);
  auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) fail_data(std::string("intrinsics missing ") + key);
    return it->second;
  };
  CameraIntrinsics k{io::to_double(get("fx")),
                     io::to_double(get("fy")),
                     io::to_double(get("cx")),
                     io::to_double(get("cy")),
                     static_cast<int>(io::to_int(get("width"))),
                     static_cast<int>(io::to_int(get("height")))};
  try {
    k.validate();
  } catch (const Error& e) {
    fail_data(std::string("invalid intrinsics: ") + e.what());
  }
  return k;
}

/// Pinhole back-projection of pixel (u, v) at the given depth.
inline Vec3 backproject(double u, double v, double depth_mm,
                        const CameraIntrinsics& k) {
  if (!(depth_mm > 0)) throw Error(ErrorKind::data, "invalid depth (0)");
  require(u >= 0 && v >= 0 && u < k.width && v < k.height,
          "pixel outside the image");
  const double z = depth_mm;
  return {(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z};
}

struct Pixel2 {
  double u = 0, v = 0;
};

inline Pixel2 project(const Vec3& p, const CameraIntrinsics& k) {
  require(p.z > 0, "cannot project a point behind the camera");
  return {k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy};
}

/// Angle in degrees between a unit direction and the camera axis (0,0,1).
inline double offset_angle(const Vec3& direction) {
  require(std::abs(norm(direction) - 1.0) <= 1e-6,
          "offset_angle expects a unit vector");
  const double c = std::clamp(direction.z, -1.0, 1.0);
  return rad2deg(std::acos(c));
}

/// Rotation for the camera-facing frame: Ry(yaw) Rx(pitch) Rz(roll).
inline Mat3 rotation_from_euler(double yaw_deg, double pitch_deg,
                                double roll_deg) {
  return rot_y(deg2rad(yaw_deg)) * rot_x(deg2rad(pitch_deg)) *
         rot_z(deg2rad(roll_deg));
}

/// View direction for the given yaw and pitch; (0,0) is (0,0,1).
inline Vec3 euler_to_direction(double yaw_deg, double pitch_deg) {
  const double y = deg2rad(yaw_deg), p = deg2rad(pitch_deg);
  return {std::sin(y) * std::cos(p), -std::sin(p), std::cos(y) * std::cos(p)};
}

struct Euler {
  double yaw_deg = 0, pitch_deg = 0, roll_deg = 0;
};

inline Euler euler_from_rotation(const Mat3& r) {
  const double sp = std::clamp(-r(1, 2), -1.0, 1.0);
  return {rad2deg(std::atan2(r(0, 2), r(2, 2))), rad2deg(std::asin(sp)),
          rad2deg(std::atan2(r(1, 0), r(1, 1)))};
}

struct HeadPose {
  Vec3 center;                // mm, camera coordinates
  Vec3 direction{0, 0, 1};    // camera-facing unit vector
  double yaw_deg = 0;
  double pitch_deg = 0;
  double roll_deg = 0;
};

inline HeadPose make_pose(const Vec3& center, double yaw_deg, double pitch_deg,
                          double roll_deg = 0) {
  return {center, euler_to_direction(yaw_deg, pitch_deg), yaw_deg, pitch_deg,
          roll_deg};
}

/// Physical head rotation (head frame -> camera frame). The head frame has
/// the face looking along -z, so identity is a frontal face.
inline Mat3 physical_rotation(const HeadPose& p) {
  const Mat3 mirror{{1, 0, 0, 0, 1, 0, 0, 0, -1}};
  return mirror * rotation_from_euler(p.yaw_deg, p.pitch_deg, p.roll_deg) *
         mirror;
}

inline HeadPose pose_from_physical(const Mat3& r_phys, const Vec3& center) {
  const Mat3 mirror{{1, 0, 0, 0, 1, 0, 0, 0, -1}};
  const Mat3 r = mirror * r_phys * mirror;
  const Euler e = euler_from_rotation(r);
  // direction is the mirrored physical forward vector
  const Vec3 dir = normalized(mirror_z(r_phys * Vec3{0, 0, -1}));
  return {center, dir, e.yaw_deg, e.pitch_deg, e.roll_deg};
}

/// Pose text file: three rows of the physical rotation matrix, then one row
/// with the head center translation in mm.
inline std::string format_pose(const HeadPose& p) {
  const Mat3 r = physical_rotation(p);
  std::ostringstream o;
  for (int i = 0; i < 3; ++i)
    o << io::fmt(r(i, 0)) << ' ' << io::fmt(r(i, 1)) << ' '
      << io::fmt(r(i, 2)) << '\n';
  o << io::fmt(p.center.x) << ' ' << io::fmt(p.center.y) << ' '
    << io::fmt(p.center.z) << '\n';
  return o.str();
}

inline HeadPose parse_pose(std::string_view text) {
  std::istringstream in{std::string(text)};
  double v[12];
  for (double& x : v) {
    std::string tok;
    if (!(in >> tok)) fail_data("pose file needs 12 numbers");
    x = io::to_double(tok);
  }
  Mat3 r{{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]}};
  return pose_from_physical(r, {v[9], v[10], v[11]});
}

struct GateDecision {
  double offset_deg = 180.0;
  double threshold_deg = 15.0;
  bool accepted = false;
};

/// Angles constructed to sit exactly on a threshold come back from acos a
/// few ulps off; ties within this band count as equal.
inline constexpr double kAngleTieDeg = 1e-9;

/// Inclusive acceptance test shared by the gate and the threshold sweep.
inline bool within_threshold(double offset_deg, double threshold_deg) {
  return offset_deg <= threshold_deg + kAngleTieDeg;
}

/// Frontal-view gate. A pose exactly at the threshold is accepted.
inline GateDecision gate(const HeadPose& pose, double threshold_deg) {
  require(threshold_deg > 0 && threshold_deg <= 90,
          "gate threshold must be in (0, 90] degrees");
  const double off = offset_angle(pose.direction);
  return {off, threshold_deg, within_threshold(off, threshold_deg)};
}

/// Verdict for a frame where no head was found.
inline GateDecision rejected_no_head(double threshold_deg) {
  return {180.0, threshold_deg, false};
}

}  // namespace msface
