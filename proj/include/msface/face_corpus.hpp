#pragma once

// 24x24 training windows for the cascade detector, cut from synthetic
// scenes so that training and detection see the same statistics.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "msface/image.hpp"
#include "msface/imgproc.hpp"
#include "msface/synth.hpp"

namespace msface::synth {

struct WindowCorpusSpec {
  int n_positives = 1500;
  int first_subject = 1000;  // subjects [first, first + n_subjects)
  int n_subjects = 80;
  double max_frontal_deg = 12;  // yaw/pitch range of positive faces
  /// Negative scenes hold one head turned at least this far (or none).
  double min_profile_yaw = 45;
  int n_scenes = 12;
  /// Negative crops cut from around and inside frontal faces.
  int n_part_crops = 60;
  int window = 24;
  double gray_noise = 2.0;
  std::uint64_t seed = 1;
};

/// Positive 24x24 windows and face-free negative images.
struct WindowCorpus {
  std::vector<GrayFrame> positives;
  std::vector<GrayFrame> negatives;
};

/// Positives: near-frontal faces drawn over background patches, cropped to
/// a slightly jittered face box. Negatives: full scenes whose only head is
/// turned away, plus crops next to or inside frontal faces that cannot
/// contain a window overlapping the face by IoU 0.3 or more.
inline WindowCorpus window_corpus(const WindowCorpusSpec& s) {
  require(s.n_positives > 0 && s.n_subjects > 0 && s.n_scenes >= 0 &&
              s.n_part_crops >= 0 && s.window > 0,
          "invalid window corpus spec");
  constexpr int kW = 320, kH = 240;
  std::mt19937_64 rng(mix_seed(s.seed, 0xc0de));
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * U(rng); };
  auto pick = [&](int n) { return static_cast<int>(U(rng) * n) % n; };
  auto subject = [&] { return s.first_subject + pick(s.n_subjects); };
  std::uint64_t bg_id = 0;
  auto background = [&] { return render_background(kW, kH, mix_seed(s.seed, 0xb600u + bg_id++)); };

  WindowCorpus c;
  const double fm = s.max_frontal_deg;
  std::vector<GrayFrame> bgs;
  for (int i = 0; i < 16; ++i) bgs.push_back(background());
  for (int i = 0; i < s.n_positives; ++i) {
    const GrayFrame& bg = bgs[static_cast<std::size_t>(pick(16))];
    const int side = static_cast<int>(uni(30, 120));
    GrayFrame patch = crop(bg, {pick(kW - side), pick(kH - side), side, side});
    const double j = 0.05;
    const double fs = side * uni(1 - j, 1 + j);
    const DetBox box{(side - fs) / 2 + uni(-j, j) * side,
                     (side - fs) / 2 + uni(-j, j) * side, fs, fs, 0};
    draw_face(patch, box, subject(), uni(-fm, fm), uni(-fm, fm));
    add_noise(patch, s.gray_noise, rng());
    c.positives.push_back(resize_area(patch, s.window, s.window));
  }
  for (int i = 0; i < s.n_scenes; ++i) {
    GrayFrame img = background();
    if (i % 5 != 0) {
      const double side = uni(30, 120);
      const double yaw = (U(rng) < 0.5 ? -1 : 1) * uni(s.min_profile_yaw, 90);
      draw_face(img, {uni(0, kW - side), uni(0, kH - side), side, side, 0}, subject(),
                yaw, uni(-40, 40));
    }
    add_noise(img, s.gray_noise, rng());
    c.negatives.push_back(std::move(img));
  }
  for (int i = 0; i < s.n_part_crops;) {
    GrayFrame img = background();
    const double side = uni(40, 150);
    const DetBox face{uni(0, kW - side), uni(0, kH - side), side, side, 0};
    draw_face(img, face, subject(), uni(-30, 30), uni(-30, 30));
    add_noise(img, s.gray_noise, rng());
    Rect r;
    if (i % 3 == 0) {
      // inside the face, at most 0.55 of its side
      const double cs = uni(s.window, std::max<double>(s.window, 0.55 * side));
      r = {static_cast<int>(face.x + uni(0, side - cs)),
           static_cast<int>(face.y + uni(0, side - cs)), static_cast<int>(cs),
           static_cast<int>(cs)};
    } else {
      // beside the face, cutting at most 40% of it
      const double cs = 1.6 * side;
      double x = face.x + uni(-0.3, 0.3) * side, y = face.y + uni(-0.3, 0.3) * side;
      switch (pick(4)) {
        case 0: x = face.x + 0.6 * side; break;
        case 1: x = face.x + 0.4 * side - cs; break;
        case 2: y = face.y + 0.6 * side; break;
        default: y = face.y + 0.4 * side - cs; break;
      }
      r = {static_cast<int>(std::ceil(x)), static_cast<int>(std::ceil(y)),
           static_cast<int>(cs), static_cast<int>(cs)};
    }
    r = intersect(r, img.bounds());
    if (r.w < s.window || r.h < s.window) continue;
    c.negatives.push_back(crop(img, r));
    ++i;
  }
  return c;
}

}  // namespace msface::synth
