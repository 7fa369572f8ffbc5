#pragma once

// Haar-like cascade face detector and its depth-gated variant.
//
// Cascade file "MSHC1" (little-endian):
//   bytes  "MSHC1"
//   i32    base window side
//   u8     warning flag
//   u32    stage count, then per stage:
//     f64  stage threshold
//     u32  stump count, then per stump:
//       u8   feature kind (0 two_h, 1 two_v, 2 three_h, 3 three_v)
//       i32  x, y, w, h of the feature in the base window
//       f64  threshold; i32 polarity (+1/-1); f64 alpha

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "msface/error.hpp"
#include "msface/geometry.hpp"
#include "msface/image.hpp"
#include "msface/imgproc.hpp"
#include "msface/io.hpp"
#include "msface/pose_forest.hpp"

namespace msface::detect {

inline constexpr int kBaseWindow = 24;
/// Windows flatter than this (std-dev of gray levels) are never faces.
inline constexpr double kMinWindowSigma = 2.0;

/// Summed-area table with a zero first row and column.
class IntegralImage {
 public:
  IntegralImage() = default;
  template <class Band>
  explicit IntegralImage(const Raster<std::uint8_t, Band>& img, bool squared = false)
      : w_(img.width), h_(img.height),
        s_(static_cast<std::size_t>(img.width + 1) * (img.height + 1), 0) {
    for (int y = 0; y < h_; ++y) {
      std::int64_t row = 0;
      for (int x = 0; x < w_; ++x) {
        const std::int64_t p = img.at(x, y);
        row += squared ? p * p : p;
        s_[idx(x + 1, y + 1)] = s_[idx(x + 1, y)] + row;
      }
    }
  }

  int width() const { return w_; }
  int height() const { return h_; }

  std::int64_t rect_sum(int x, int y, int w, int h) const {
    return s_[idx(x + w, y + h)] - s_[idx(x + w, y)] - s_[idx(x, y + h)] +
           s_[idx(x, y)];
  }

 private:
  std::size_t idx(int x, int y) const {
    return static_cast<std::size_t>(y) * (w_ + 1) + x;
  }
  int w_ = 0, h_ = 0;
  std::vector<std::int64_t> s_;
};

template <class Band>
IntegralImage integral_image(const Raster<std::uint8_t, Band>& img) {
  return IntegralImage(img);
}

enum class HaarKind : std::uint8_t { two_h = 0, two_v = 1, three_h = 2, three_v = 3 };

struct WeightedRect {
  int x, y, w, h;
  int weight;
};

/// Rectangle feature in base-window coordinates. Weights are +1/-1 for the
/// two-rect kinds and +1/-2/+1 for the three-rect kinds, so the weighted
/// areas cancel.
struct HaarFeature {
  HaarKind kind = HaarKind::two_h;
  int x = 0, y = 0, w = 0, h = 0;
  std::array<WeightedRect, 3> rects{};
  int n_rects = 0;

  std::int64_t response(const IntegralImage& ii, int ox, int oy) const {
    std::int64_t r = 0;
    for (int i = 0; i < n_rects; ++i) {
      const auto& q = rects[static_cast<std::size_t>(i)];
      r += q.weight * ii.rect_sum(ox + q.x, oy + q.y, q.w, q.h);
    }
    return r;
  }
};

inline HaarFeature make_feature(HaarKind kind, int x, int y, int w, int h) {
  HaarFeature f{kind, x, y, w, h, {}, 0};
  switch (kind) {
    case HaarKind::two_h:
      require(w % 2 == 0, "two-rect horizontal feature needs even width");
      f.rects = {{{x, y, w / 2, h, 1}, {x + w / 2, y, w / 2, h, -1}, {}}};
      f.n_rects = 2;
      break;
    case HaarKind::two_v:
      require(h % 2 == 0, "two-rect vertical feature needs even height");
      f.rects = {{{x, y, w, h / 2, 1}, {x, y + h / 2, w, h / 2, -1}, {}}};
      f.n_rects = 2;
      break;
    case HaarKind::three_h:
      require(w % 3 == 0, "three-rect horizontal feature needs width % 3 == 0");
      f.rects = {{{x, y, w / 3, h, 1}, {x + w / 3, y, w / 3, h, -2},
                  {x + 2 * w / 3, y, w / 3, h, 1}}};
      f.n_rects = 3;
      break;
    case HaarKind::three_v:
      require(h % 3 == 0, "three-rect vertical feature needs height % 3 == 0");
      f.rects = {{{x, y, w, h / 3, 1}, {x, y + h / 3, w, h / 3, -2},
                  {x, y + 2 * h / 3, w, h / 3, 1}}};
      f.n_rects = 3;
      break;
  }
  require(x >= 0 && y >= 0 && w > 0 && h > 0 && x + w <= kBaseWindow &&
              y + h <= kBaseWindow,
          "Haar feature outside the base window");
  return f;
}

/// Every upright two- and three-rectangle feature in the base window.
inline const std::vector<HaarFeature>& feature_pool() {
  static const std::vector<HaarFeature> pool = [] {
    std::vector<HaarFeature> out;
    const int W = kBaseWindow;
    const struct {
      HaarKind kind;
      int mx, my;
    } shapes[] = {{HaarKind::two_h, 2, 1},
                  {HaarKind::two_v, 1, 2},
                  {HaarKind::three_h, 3, 1},
                  {HaarKind::three_v, 1, 3}};
    for (const auto& s : shapes)
      for (int h = s.my; h <= W; h += s.my)
        for (int w = s.mx; w <= W; w += s.mx)
          for (int y = 0; y + h <= W; ++y)
            for (int x = 0; x + w <= W; ++x)
              out.push_back(make_feature(s.kind, x, y, w, h));
    return out;
  }();
  return pool;
}

struct Stump {
  HaarFeature feature;
  double threshold = 0;
  int polarity = 1;  // face when polarity * value < polarity * threshold
  double alpha = 0;

  bool vote(double value) const { return polarity * value < polarity * threshold; }
};

struct BoostedStage {
  std::vector<Stump> stumps;
  double stage_threshold = 0;
};

struct Cascade {
  std::vector<BoostedStage> stages;
  int base_window = kBaseWindow;
  bool warning = false;  // a stage missed its false-positive target
};

/// Normalization for the window at (ox, oy): 1/sigma, or nullopt when the
/// window is too flat.
inline std::optional<double> window_norm(const IntegralImage& ii,
                                         const IntegralImage& sq, int ox, int oy) {
  const double n = kBaseWindow * kBaseWindow;
  const double mean = ii.rect_sum(ox, oy, kBaseWindow, kBaseWindow) / n;
  const double var = sq.rect_sum(ox, oy, kBaseWindow, kBaseWindow) / n - mean * mean;
  if (var < kMinWindowSigma * kMinWindowSigma) return std::nullopt;
  return 1.0 / std::sqrt(var);
}

inline double stage_score(const BoostedStage& s, const IntegralImage& ii, int ox,
                          int oy, double inv_sigma) {
  double score = 0;
  for (const auto& st : s.stumps)
    if (st.vote(static_cast<double>(st.feature.response(ii, ox, oy)) * inv_sigma))
      score += st.alpha;
  return score;
}

/// Score of the last stage when the window passes every stage.
inline std::optional<double> classify_window(const Cascade& c, const IntegralImage& ii,
                                             const IntegralImage& sq, int ox, int oy) {
  const auto inv = window_norm(ii, sq, ox, oy);
  if (!inv) return std::nullopt;
  double score = 0;
  for (const auto& s : c.stages) {
    score = stage_score(s, ii, ox, oy, *inv);
    if (score < s.stage_threshold) return std::nullopt;
  }
  return score;
}

// --- training ------------------------------------------------------------

struct CascadeParams {
  int n_stages = 3;
  int stumps_per_stage = 20;
  double stage_fpr_target = 0.5;
  double min_stage_tpr = 0.998;  // fraction of positives each stage keeps
  int features_per_stage = 2000;
  /// Each stage boosts on at most this many of the surviving negatives
  /// (0 = all); its false-positive rate is measured on the whole pool.
  int max_negatives_per_stage = 2000;
  std::uint64_t seed = 1;
};

struct CascadeTrainReport {
  std::vector<double> stage_fpr;  // on the negative windows reaching each stage
  std::vector<double> stage_tpr;
  std::size_t negative_windows = 0;
  std::size_t dropped_flat_positives = 0;
};

namespace detail {

/// A base window inside some integral image, with its 1/sigma.
struct TrainWindow {
  const IntegralImage* ii;
  int x, y;
  double inv_sigma;
};

/// Integral images at every pyramid level of one image.
template <class Fn>
void for_each_level(const GrayFrame& img, double scale_factor, Fn&& fn) {
  for (double scale = 1.0;; scale *= scale_factor) {
    const int sw = static_cast<int>(std::lround(img.width / scale));
    const int sh = static_cast<int>(std::lround(img.height / scale));
    if (sw < kBaseWindow || sh < kBaseWindow) break;
    const GrayFrame level = scale == 1.0 ? img : resize_area(img, sw, sh);
    fn(level, double(img.width) / sw, double(img.height) / sh);
  }
}

}  // namespace detail

/// Discrete AdaBoost over decision stumps, one boosted stage at a time.
///
/// Positives are 24x24 face windows. Negatives are face-free images of any
/// size >= 24x24; every textured window of their 1.1-step pyramid is a
/// negative example, so a 24x24 negative contributes exactly one window.
/// Each stage boosts on (a subsample of) the negative windows that passed
/// all earlier stages.
inline Cascade train_cascade(const std::vector<GrayFrame>& positives,
                             const std::vector<GrayFrame>& negatives,
                             const CascadeParams& p,
                             CascadeTrainReport* report = nullptr) {
  require(positives.size() >= 50 && negatives.size() >= 50,
          "cascade training needs >= 50 positives and >= 50 negatives");
  require(p.n_stages >= 1 && p.stumps_per_stage >= 1 && p.features_per_stage >= 1 &&
              p.stage_fpr_target > 0 && p.stage_fpr_target <= 1 &&
              p.min_stage_tpr > 0 && p.min_stage_tpr <= 1 &&
              p.max_negatives_per_stage >= 0,
          "invalid cascade parameters");
  CascadeTrainReport rep;
  std::deque<IntegralImage> store;
  std::vector<detail::TrainWindow> pos, neg_pool;
  for (const auto& f : positives) {
    require(f.width == kBaseWindow && f.height == kBaseWindow,
            "positive windows must be 24x24");
    const IntegralImage sq(f, true);
    store.emplace_back(f);
    if (const auto inv = window_norm(store.back(), sq, 0, 0))
      pos.push_back({&store.back(), 0, 0, *inv});
    else
      ++rep.dropped_flat_positives;
  }
  for (const auto& f : negatives) {
    require(f.width >= kBaseWindow && f.height >= kBaseWindow,
            "negative images must be at least 24x24");
    detail::for_each_level(f, 1.1, [&](const GrayFrame& level, double, double) {
      const IntegralImage sq(level, true);
      store.emplace_back(level);
      for (int y = 0; y + kBaseWindow <= level.height; ++y)
        for (int x = 0; x + kBaseWindow <= level.width; ++x)
          if (const auto inv = window_norm(store.back(), sq, x, y))
            neg_pool.push_back({&store.back(), x, y, *inv});
    });
  }
  rep.negative_windows = neg_pool.size();
  if (pos.size() < 2) fail_data("too few textured positive windows");

  const auto& pool = feature_pool();
  std::mt19937_64 rng(p.seed);
  Cascade cascade;

  for (int stage = 0; stage < p.n_stages && !neg_pool.empty(); ++stage) {
    std::vector<std::size_t> neg(neg_pool.size());
    std::iota(neg.begin(), neg.end(), std::size_t{0});
    if (p.max_negatives_per_stage > 0 &&
        neg.size() > static_cast<std::size_t>(p.max_negatives_per_stage)) {
      std::shuffle(neg.begin(), neg.end(), rng);
      neg.resize(static_cast<std::size_t>(p.max_negatives_per_stage));
      std::sort(neg.begin(), neg.end());
    }
    const std::size_t P = pos.size(), N = neg.size(), M = P + N;
    auto sample = [&](std::size_t i) -> const detail::TrainWindow& {
      return i < P ? pos[i] : neg_pool[neg[i - P]];
    };

    // Feature values and per-feature sort order over the training windows.
    std::vector<std::size_t> fidx(static_cast<std::size_t>(p.features_per_stage));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (auto& f : fidx) f = pick(rng);
    const std::size_t F = fidx.size();
    std::vector<double> vals(F * M);
    std::vector<std::uint32_t> order(F * M);
    for (std::size_t f = 0; f < F; ++f) {
      const auto& feat = pool[fidx[f]];
      double* v = &vals[f * M];
      for (std::size_t i = 0; i < M; ++i) {
        const auto& s = sample(i);
        v[i] = static_cast<double>(feat.response(*s.ii, s.x, s.y)) * s.inv_sigma;
      }
      std::uint32_t* o = &order[f * M];
      std::iota(o, o + M, 0u);
      std::stable_sort(o, o + M, [&](std::uint32_t a, std::uint32_t b) { return v[a] < v[b]; });
    }

    std::vector<double> w(M);
    for (std::size_t i = 0; i < M; ++i) w[i] = i < P ? 0.5 / P : 0.5 / N;
    BoostedStage st;
    std::vector<double> score(M, 0.0);
    for (int t = 0; t < p.stumps_per_stage; ++t) {
      const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
      for (auto& x : w) x /= wsum;
      double tp = 0, tn = 0;
      for (std::size_t i = 0; i < M; ++i) (i < P ? tp : tn) += w[i];

      double best_err = 2;
      std::size_t best_f = 0;
      double best_thr = 0;
      int best_pol = 1;
      for (std::size_t f = 0; f < F; ++f) {
        const double* v = &vals[f * M];
        const std::uint32_t* o = &order[f * M];
        double sp = 0, sn = 0;  // weight strictly below the candidate cut
        for (std::size_t j = 0; j <= M; ++j) {
          if (j == 0 || j == M || v[o[j]] != v[o[j - 1]]) {
            // polarity +1: face below the cut; -1: face at or above it
            const double e_pos = sn + (tp - sp);
            const double e_neg = sp + (tn - sn);
            const double e = std::min(e_pos, e_neg);
            if (e < best_err) {
              best_err = e;
              best_f = f;
              best_pol = e_pos <= e_neg ? 1 : -1;
              if (j == 0)
                best_thr = v[o[0]] - 1.0;
              else if (j == M)
                best_thr = v[o[M - 1]] + 1.0;
              else
                best_thr = 0.5 * (v[o[j - 1]] + v[o[j]]);
            }
          }
          if (j < M) (o[j] < P ? sp : sn) += w[o[j]];
        }
      }
      const double e = std::clamp(best_err, 1e-10, 0.5 - 1e-9);
      const double beta = e / (1 - e);
      Stump s{pool[fidx[best_f]], best_thr, best_pol, std::log(1 / beta)};
      const double* v = &vals[best_f * M];
      for (std::size_t i = 0; i < M; ++i) {
        const bool face = s.vote(v[i]);
        if (face) score[i] += s.alpha;
        if (face == (i < P)) w[i] *= beta;
      }
      st.stumps.push_back(s);
    }

    // Lower the stage threshold until enough positives pass.
    std::vector<double> ps(score.begin(), score.begin() + static_cast<std::ptrdiff_t>(P));
    std::sort(ps.begin(), ps.end());
    const auto k = static_cast<std::size_t>(std::floor((1.0 - p.min_stage_tpr) * P));
    st.stage_threshold = ps[std::min(k, P - 1)];
    std::size_t pos_pass = 0;
    for (std::size_t i = 0; i < P; ++i) pos_pass += score[i] >= st.stage_threshold;
    std::vector<detail::TrainWindow> survivors;
    for (const auto& n : neg_pool)
      if (stage_score(st, *n.ii, n.x, n.y, n.inv_sigma) >= st.stage_threshold)
        survivors.push_back(n);
    const double fpr = double(survivors.size()) / double(neg_pool.size());
    rep.stage_fpr.push_back(fpr);
    rep.stage_tpr.push_back(double(pos_pass) / P);
    cascade.stages.push_back(std::move(st));
    if (fpr > p.stage_fpr_target) {
      cascade.warning = true;
      break;
    }
    neg_pool = std::move(survivors);
  }
  if (report) *report = rep;
  return cascade;
}

// --- detection -------------------------------------------------------------

/// Transitive IoU >= 0.3 clustering; one mean box per cluster with at least
/// min_neighbors members. Score = member count. Sorted by score, then
/// position.
inline std::vector<DetBox> group_boxes(const std::vector<DetBox>& cands,
                                       int min_neighbors, double iou_threshold = 0.3) {
  const std::size_t n = cands.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (iou(cands[i], cands[j]) >= iou_threshold) parent[find(i)] = find(j);
  std::vector<std::vector<std::size_t>> clusters(n);
  for (std::size_t i = 0; i < n; ++i) clusters[find(i)].push_back(i);
  std::vector<DetBox> out;
  for (const auto& c : clusters) {
    if (c.empty() || static_cast<int>(c.size()) < min_neighbors) continue;
    DetBox m;
    for (const auto i : c) {
      m.x += cands[i].x;
      m.y += cands[i].y;
      m.w += cands[i].w;
      m.h += cands[i].h;
    }
    const double k = double(c.size());
    m.x /= k, m.y /= k, m.w /= k, m.h /= k;
    m.score = k;
    out.push_back(m);
  }
  std::sort(out.begin(), out.end(), [](const DetBox& a, const DetBox& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  return out;
}

/// Per-run detector accounting, safe to share between worker threads.
struct DetectorCounters {
  std::atomic<std::int64_t> invocations{0};
  std::atomic<std::int64_t> windows{0};
};

struct HaarParams {
  double scale_factor = 1.1;
  int min_neighbors = 3;
  int step = 1;  // window stride in pyramid-level pixels
};

/// Windows passing the whole cascade over an image pyramid, before grouping.
inline std::vector<DetBox> detect_candidates(const GrayFrame& frame, const Cascade& c,
                                             const HaarParams& hp = {},
                                             std::int64_t* windows = nullptr) {
  require(hp.scale_factor > 1.0 && hp.step >= 1, "invalid detector parameters");
  require(!c.stages.empty(), "cascade has no stages");
  std::vector<DetBox> cands;
  std::int64_t nwin = 0;
  detail::for_each_level(frame, hp.scale_factor, [&](const GrayFrame& level, double fx,
                                                     double fy) {
    const IntegralImage ii(level), sq(level, true);
    for (int y = 0; y + kBaseWindow <= level.height; y += hp.step)
      for (int x = 0; x + kBaseWindow <= level.width; x += hp.step) {
        ++nwin;
        if (const auto sc = classify_window(c, ii, sq, x, y))
          cands.push_back({x * fx, y * fy, kBaseWindow * fx, kBaseWindow * fy, *sc});
      }
  });
  if (windows) *windows = nwin;
  return cands;
}

/// Sliding-window cascade detection. Frames smaller than the base window
/// yield no boxes.
inline std::vector<DetBox> detect_haar(const GrayFrame& frame, const Cascade& c,
                                       const HaarParams& hp = {},
                                       DetectorCounters* counters = nullptr) {
  if (counters) ++counters->invocations;
  std::int64_t nwin = 0;
  auto boxes = group_boxes(detect_candidates(frame, c, hp, &nwin), hp.min_neighbors);
  if (counters) counters->windows += nwin;
  return boxes;
}

struct DhpParams {
  double threshold_deg = 15;
  double k_head_mm = 300;
  HaarParams haar;
  forest::EstimateParams estimate;
};

struct DhpResult {
  GateDecision gate;
  std::optional<HeadPose> pose;
  Rect roi;  // empty when the gate rejects
  std::vector<DetBox> boxes;
};

/// Square ROI of side round(k_head * fx / z) centered on the projected
/// head center, clipped to `bounds` (may come back empty).
inline Rect head_roi(const HeadPose& pose, const CameraIntrinsics& k, double k_head_mm,
                     const Rect& bounds) {
  require(k_head_mm > 0, "k_head must be positive");
  const Pixel2 c = project(pose.center, k);
  const int s = static_cast<int>(std::lround(k_head_mm * k.fx / pose.center.z));
  const Rect want{static_cast<int>(std::lround(c.u - s / 2.0)),
                  static_cast<int>(std::lround(c.v - s / 2.0)), s, s};
  return intersect(want, bounds);
}

/// Cascade detection inside `roi`, boxes in frame coordinates. Counts as
/// one detector invocation even when the ROI is empty.
inline std::vector<DetBox> detect_in_roi(const GrayFrame& gray, const Rect& roi,
                                         const Cascade& c, const HaarParams& hp = {},
                                         DetectorCounters* counters = nullptr) {
  if (roi.empty()) {
    if (counters) ++counters->invocations;
    return {};
  }
  auto boxes = detect_haar(crop(gray, roi), c, hp, counters);
  for (auto& b : boxes) {
    b.x += roi.x;
    b.y += roi.y;
  }
  return boxes;
}

/// Depth-gated detection: the cascade runs only on frames whose estimated
/// head faces the camera, and only inside a head-sized ROI.
inline DhpResult detect_dhp(const DepthFrame& depth, const GrayFrame& gray,
                            const forest::PoseForest& f, const Cascade& c,
                            const CameraIntrinsics& k, const DhpParams& dp = {},
                            DetectorCounters* counters = nullptr) {
  require(depth.width == gray.width && depth.height == gray.height,
          "depth and gray frames must have the same size");
  require(dp.k_head_mm > 0, "k_head must be positive");
  DhpResult out;
  out.pose = forest::estimate(f, depth, k, dp.estimate);
  if (!out.pose) {
    out.gate = rejected_no_head(dp.threshold_deg);
    return out;
  }
  out.gate = gate(*out.pose, dp.threshold_deg);
  if (!out.gate.accepted) return out;
  out.roi = head_roi(*out.pose, k, dp.k_head_mm, gray.bounds());
  out.boxes = detect_in_roi(gray, out.roi, c, dp.haar, counters);
  return out;
}

// --- serialization -----------------------------------------------------------

inline std::string serialize(const Cascade& c) {
  io::BinaryWriter w;
  w.put_bytes("MSHC1");
  w.put<std::int32_t>(c.base_window);
  w.put<std::uint8_t>(c.warning ? 1 : 0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.stages.size()));
  for (const auto& s : c.stages) {
    w.put<double>(s.stage_threshold);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.stumps.size()));
    for (const auto& st : s.stumps) {
      w.put<std::uint8_t>(static_cast<std::uint8_t>(st.feature.kind));
      for (const int v : {st.feature.x, st.feature.y, st.feature.w, st.feature.h})
        w.put<std::int32_t>(v);
      w.put<double>(st.threshold);
      w.put<std::int32_t>(st.polarity);
      w.put<double>(st.alpha);
    }
  }
  return w.bytes();
}

inline Cascade deserialize_cascade(std::string_view bytes) {
  io::BinaryReader r(bytes);
  r.expect_magic("MSHC1");
  Cascade c;
  c.base_window = r.get<std::int32_t>();
  if (c.base_window != kBaseWindow) fail_data("unsupported cascade window size");
  c.warning = r.get<std::uint8_t>() != 0;
  const auto ns = r.get<std::uint32_t>();
  if (ns == 0) fail_data("cascade file has no stages");
  for (std::uint32_t i = 0; i < ns; ++i) {
    BoostedStage s;
    s.stage_threshold = r.get<double>();
    const auto nt = r.get<std::uint32_t>();
    for (std::uint32_t j = 0; j < nt; ++j) {
      const auto kind = r.get<std::uint8_t>();
      if (kind > 3) fail_data("unknown Haar feature kind");
      const int x = r.get<std::int32_t>(), y = r.get<std::int32_t>();
      const int w = r.get<std::int32_t>(), h = r.get<std::int32_t>();
      Stump st;
      try {
        st.feature = make_feature(static_cast<HaarKind>(kind), x, y, w, h);
      } catch (const Error& e) {
        fail_data(std::string("bad cascade feature: ") + e.what());
      }
      st.threshold = r.get<double>();
      st.polarity = r.get<std::int32_t>();
      st.alpha = r.get<double>();
      if (st.polarity != 1 && st.polarity != -1) fail_data("bad stump polarity");
      if (!(st.alpha > 0)) fail_data("stump alpha must be positive");
      s.stumps.push_back(st);
    }
    c.stages.push_back(std::move(s));
  }
  if (!r.at_end()) fail_data("trailing bytes in cascade file");
  return c;
}

}  // namespace msface::detect
