#include <gtest/gtest.h>

#include <random>

#include "msface/geometry.hpp"
#include "msface/pgm.hpp"

using namespace msface;

namespace {

CameraIntrinsics small_k() { return {500, 500, 320, 240, 640, 480}; }

}  // namespace

TEST(Backproject, PrincipalPointMapsToOpticalAxis) {
  const auto k = small_k();
  const Vec3 p = backproject(k.cx, k.cy, 1000, k);
  EXPECT_DOUBLE_EQ(p.x, 0);
  EXPECT_DOUBLE_EQ(p.y, 0);
  EXPECT_DOUBLE_EQ(p.z, 1000);
}

TEST(Backproject, OneFocalLengthOffAxis) {
  const CameraIntrinsics k{200, 200, 100, 100, 640, 480};
  const Vec3 p = backproject(k.cx + k.fx, k.cy, 1000, k);
  EXPECT_DOUBLE_EQ(p.x, 1000);
  EXPECT_DOUBLE_EQ(p.y, 0);
  EXPECT_DOUBLE_EQ(p.z, 1000);
}

TEST(Backproject, HandEvaluatedPinhole) {
  // (100-320)*800/500 = -352, (200-240)*800/500 = -64
  const Vec3 p = backproject(100, 200, 800, small_k());
  EXPECT_DOUBLE_EQ(p.x, -352);
  EXPECT_DOUBLE_EQ(p.y, -64);
  EXPECT_DOUBLE_EQ(p.z, 800);
}

TEST(Backproject, ZeroDepthIsAnError) {
  try {
    backproject(10, 10, 0, small_k());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
  }
}

TEST(Backproject, ReprojectionRecoversPixel) {
  const auto k = small_k();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const double u = U(rng) * (k.width - 1), v = U(rng) * (k.height - 1);
    const double z = 1 + U(rng) * 65534;
    const Pixel2 px = project(backproject(u, v, z, k), k);
    EXPECT_NEAR(px.u, u, 1e-6);
    EXPECT_NEAR(px.v, v, 1e-6);
  }
}

TEST(OffsetAngle, Examples) {
  EXPECT_DOUBLE_EQ(offset_angle({0, 0, 1}), 0.0);
  EXPECT_NEAR(offset_angle(Vec3{1, 0, 1} / std::sqrt(2.0)), 45.0, 1e-12);
  const double a = deg2rad(15);
  EXPECT_NEAR(offset_angle({0, std::sin(a), std::cos(a)}), 15.0, 1e-12);
}

TEST(OffsetAngle, RejectsNonUnitInput) {
  EXPECT_THROW(offset_angle({0, 0, 1.01}), Error);
  EXPECT_NO_THROW(offset_angle({0, 0, 1.0000001}));
}

TEST(OffsetAngle, InvariantUnderRollAboutAxis) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-180, 180);
  const Vec3 d = normalized({0.3, -0.2, 0.9});
  const double ref = offset_angle(d);
  for (int i = 0; i < 100; ++i) {
    const Vec3 r = rot_z(deg2rad(U(rng))) * d;
    EXPECT_NEAR(offset_angle(normalized(r)), ref, 1e-9);
  }
}

TEST(Gate, Examples) {
  const HeadPose frontal = make_pose({0, 0, 1000}, 0, 0);
  auto g = gate(frontal, 15);
  EXPECT_TRUE(g.accepted);
  EXPECT_DOUBLE_EQ(g.offset_deg, 0);

  const Vec3 at15{0, std::sin(deg2rad(15)), std::cos(deg2rad(15))};
  HeadPose boundary = frontal;
  boundary.direction = at15;
  EXPECT_TRUE(gate(boundary, 15).accepted);

  g = gate(make_pose({0, 0, 1000}, 20, 0), 15);
  EXPECT_FALSE(g.accepted);
  EXPECT_NEAR(g.offset_deg, 20, 1e-9);
}

TEST(Gate, BoundaryAcceptedForEveryGridAngle) {
  for (int a = -75; a <= 75; a += 5) {
    const auto g = gate(make_pose({0, 0, 1000}, a, 0), 15);
    EXPECT_EQ(g.accepted, std::abs(a) <= 15) << a;
  }
}

TEST(Gate, ThresholdPrecondition) {
  const HeadPose p = make_pose({0, 0, 1000}, 0, 0);
  EXPECT_THROW(gate(p, 0), Error);
  EXPECT_THROW(gate(p, 90.5), Error);
  EXPECT_NO_THROW(gate(p, 90));
}

TEST(Gate, MonotoneInThreshold) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ang(-80, 80), thr(0.01, 90);
  for (int i = 0; i < 500; ++i) {
    const HeadPose p = make_pose({0, 0, 900}, ang(rng), ang(rng));
    double t1 = thr(rng), t2 = thr(rng);
    if (t1 > t2) std::swap(t1, t2);
    if (gate(p, t1).accepted) {
      EXPECT_TRUE(gate(p, t2).accepted);
    }
  }
}

TEST(Euler, Examples) {
  const Vec3 f = euler_to_direction(0, 0);
  EXPECT_DOUBLE_EQ(f.x, 0);
  EXPECT_DOUBLE_EQ(f.z, 1);
  const Vec3 q = euler_to_direction(90, 0);
  EXPECT_NEAR(q.x, 1, 1e-15);
  EXPECT_NEAR(q.y, 0, 1e-15);
  EXPECT_NEAR(q.z, 0, 1e-15);
  EXPECT_NEAR(offset_angle(euler_to_direction(30, 0)), 30, 1e-9);
}

TEST(Euler, GreatCircleRoundTrip) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(-89, 89);
  for (int i = 0; i < 1000; ++i) {
    const double a = U(rng), b = U(rng);
    const double expected = rad2deg(
        std::acos(std::cos(deg2rad(a)) * std::cos(deg2rad(b))));
    EXPECT_NEAR(offset_angle(euler_to_direction(a, b)), expected, 1e-9);
  }
  for (int a = -180; a <= 180; a += 7)
    EXPECT_NEAR(offset_angle(euler_to_direction(a, 0)), std::abs(a), 1e-9);
}

TEST(Euler, RotationDirectionAgreesWithEulerDirection) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> U(-80, 80);
  for (int i = 0; i < 200; ++i) {
    const double y = U(rng), p = U(rng), r = U(rng);
    const Vec3 a = rotation_from_euler(y, p, r) * Vec3{0, 0, 1};
    const Vec3 b = euler_to_direction(y, p);
    EXPECT_NEAR(norm(a - b), 0, 1e-12);
    const Euler e = euler_from_rotation(rotation_from_euler(y, p, r));
    EXPECT_NEAR(e.yaw_deg, y, 1e-9);
    EXPECT_NEAR(e.pitch_deg, p, 1e-9);
    EXPECT_NEAR(e.roll_deg, r, 1e-9);
  }
}

TEST(PoseFile, RoundTripsThroughPhysicalRotation) {
  const HeadPose p = make_pose({12.5, -30, 950}, 35, -20, 10);
  const HeadPose q = parse_pose(format_pose(p));
  EXPECT_NEAR(q.yaw_deg, 35, 1e-9);
  EXPECT_NEAR(q.pitch_deg, -20, 1e-9);
  EXPECT_NEAR(q.roll_deg, 10, 1e-9);
  EXPECT_NEAR(norm(q.direction - p.direction), 0, 1e-12);
  EXPECT_EQ(q.center, p.center);
}

TEST(PoseFile, FrontalPhysicalForwardFacesCamera) {
  // Identity rotation in a pose file is a face looking at the camera.
  const HeadPose p = parse_pose("1 0 0\n0 1 0\n0 0 1\n0 0 1000\n");
  EXPECT_NEAR(offset_angle(p.direction), 0, 1e-12);
  EXPECT_THROW(parse_pose("1 0 0\n0 1 0\n"), Error);
}

TEST(Intrinsics, ParseAndValidate) {
  const CameraIntrinsics k = small_k();
  const auto r = parse_intrinsics(format_intrinsics(k));
  EXPECT_EQ(r.fx, k.fx);
  EXPECT_EQ(r.width, k.width);
  EXPECT_THROW(parse_intrinsics("fx=1\nfy=1\ncx=900\ncy=1\nwidth=10\nheight=10"),
               Error);
}

TEST(Pgm, DepthIsBigEndianSixteenBit) {
  DepthFrame d(3, 2);
  d.at(0, 0) = 0x1234;
  d.at(2, 1) = 65535;
  const std::string bytes = pgm::encode_depth(d);
  EXPECT_EQ(bytes.substr(0, 15), "P5\n3 2\n65535\n\x12\x34");
  EXPECT_EQ(pgm::decode_depth(bytes).pixels, d.pixels);
}

TEST(Pgm, GrayRoundTripAndErrors) {
  GrayFrame g(4, 4);
  for (int i = 0; i < 16; ++i) g.pixels[i] = static_cast<std::uint8_t>(i * 16);
  EXPECT_EQ(pgm::decode8<GrayBand>(pgm::encode8(g)).pixels, g.pixels);
  EXPECT_THROW(pgm::decode8<GrayBand>("P2\n1 1\n255\n\x01"), Error);
  EXPECT_THROW(pgm::decode8<GrayBand>("P5\n4 4\n255\n\x01"), Error);
  EXPECT_EQ(pgm::decode8<GrayBand>("P5 # c\n1 1\n255\n\x07").pixels[0], 7);
}
