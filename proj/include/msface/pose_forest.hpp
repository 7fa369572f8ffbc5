#pragma once

// Random regression forest mapping depth patches to head-pose votes.
//
// Split tests compare the mean valid depth of two sub-rectangles of a patch
// against a threshold. Leaves store the mean vote (patch-center -> head
// center offset in mm plus yaw/pitch/roll in degrees), the trace of the
// vote covariance, and the fraction of training patches that came from the
// head. At estimation time a dense grid of patches is routed through every
// tree; only head leaves with a small trace vote, and the votes are
// combined with a trimmed mean.
//
// Model file "MSPF1" (little-endian):
//   bytes   "MSPF1"
//   i32     patch_size
//   i32 x6  n_trees, max_depth, min_samples, n_candidate_tests,
//           n_thresholds, patches_per_frame
//   u64     seed
//   f64 x3  head_region_scale, head_radius_mm, max_subrect_fraction
//   u32     tree count, then per tree:
//     i32   max_depth
//     u32   node count, then per node:
//       u8  1 = leaf, 0 = split
//       split: i16 x8 rect1 (x,y,w,h), rect2 (x,y,w,h); f64 tau;
//              i32 left, i32 right
//       leaf:  f64 x6 mean vote (dx,dy,dz,yaw,pitch,roll); i32 vote_count;
//              f64 vote_trace; f64 angle_trace; f64 head_prob

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "msface/error.hpp"
#include "msface/geometry.hpp"
#include "msface/image.hpp"
#include "msface/io.hpp"

namespace msface::forest {

inline constexpr int kVoteDims = 6;
using VoteVec = std::array<double, kVoteDims>;

struct PatchTest {
  Rect rect1;  // patch coordinates
  Rect rect2;
  double tau = 0;  // mm
};

struct Vote {
  Vec3 center_offset;  // patch center -> head center, mm
  double yaw_deg = 0;
  double pitch_deg = 0;
  double roll_deg = 0;
};

/// Summed-area tables of valid depth and valid-pixel count over a region of
/// a depth frame. Rectangles are given in frame coordinates.
class DepthIntegral {
 public:
  DepthIntegral() = default;
  DepthIntegral(const DepthFrame& d, Rect region) {
    region_ = intersect(region, d.bounds());
    const int w = region_.w, h = region_.h;
    stride_ = w + 1;
    cells_.assign(static_cast<std::size_t>(w + 1) * (h + 1), Cell{});
    for (int y = 0; y < h; ++y) {
      std::uint32_t rs = 0;
      std::uint32_t rc = 0;
      for (int x = 0; x < w; ++x) {
        const std::uint16_t z = d.at(region_.x + x, region_.y + y);
        rs += z;
        rc += z != 0;
        const Cell& up = cell(x + 1, y);
        cell(x + 1, y + 1) = {up.sum + rs, up.count + rc};
      }
    }
  }
  explicit DepthIntegral(const DepthFrame& d) : DepthIntegral(d, d.bounds()) {}

  const Rect& region() const { return region_; }

  /// Mean of valid depths, or nullopt when the rectangle has none.
  std::optional<double> mean(int x, int y, int w, int h) const {
    const int x0 = x - region_.x, y0 = y - region_.y;
    const Cell& a = cell(x0, y0);
    const Cell& b = cell(x0 + w, y0);
    const Cell& c = cell(x0, y0 + h);
    const Cell& e = cell(x0 + w, y0 + h);
    const std::uint32_t n = e.count - b.count - c.count + a.count;
    if (n == 0) return std::nullopt;
    return static_cast<double>(e.sum - b.sum - c.sum + a.sum) / n;
  }

 private:
  // Unsigned wrap-around keeps rectangle differences exact as long as a
  // single rectangle sums to < 2^32 (65535 * 65536 pixels).
  struct Cell {
    std::uint32_t sum = 0;
    std::uint32_t count = 0;
  };
  Cell& cell(int x, int y) {
    return cells_[static_cast<std::size_t>(y) * stride_ + x];
  }
  const Cell& cell(int x, int y) const {
    return cells_[static_cast<std::size_t>(y) * stride_ + x];
  }

  Rect region_;
  int stride_ = 1;
  std::vector<Cell> cells_;
};

/// Feature of the patch whose top-left corner is (px, py) in frame
/// coordinates: mean(rect1) - mean(rect2), undefined if either rectangle
/// has no valid pixel.
inline std::optional<double> feature_value(const DepthIntegral& ii, int px,
                                           int py, const PatchTest& t) {
  const auto m1 = ii.mean(px + t.rect1.x, py + t.rect1.y, t.rect1.w, t.rect1.h);
  if (!m1) return std::nullopt;
  const auto m2 = ii.mean(px + t.rect2.x, py + t.rect2.y, t.rect2.w, t.rect2.h);
  if (!m2) return std::nullopt;
  return *m1 - *m2;
}

/// Same feature on a standalone patch image.
inline std::optional<double> feature_value(const DepthFrame& patch,
                                           const PatchTest& t) {
  require(contains(patch.bounds(), t.rect1) && contains(patch.bounds(), t.rect2),
          "patch test rectangles must lie inside the patch");
  return feature_value(DepthIntegral(patch), 0, 0, t);
}

struct Node {
  bool leaf = true;
  PatchTest test;
  std::int32_t left = -1;
  std::int32_t right = -1;
  VoteVec mean_vote{};         // over head patches
  std::int32_t vote_count = 0; // all training patches reaching the leaf
  double vote_trace = 0;       // trace of the vote covariance (mm^2 + deg^2)
  double angle_trace = 0;      // angle part of vote_trace (deg^2)
  double head_prob = 0;        // fraction of head patches
};

struct RegressionTree {
  std::vector<Node> nodes;  // nodes[0] is the root
  int max_depth = 0;

  /// Leaf index reached by the patch at (px, py), or -1 when a split
  /// feature on the path is undefined.
  int route(const DepthIntegral& ii, int px, int py) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].leaf) {
      const Node& n = nodes[static_cast<std::size_t>(i)];
      const auto f = feature_value(ii, px, py, n.test);
      if (!f) return -1;
      i = *f < n.test.tau ? n.left : n.right;
    }
    return i;
  }
};

struct ForestParams {
  int n_trees = 10;
  int max_depth = 12;
  int min_samples = 20;
  int n_candidate_tests = 500;
  int patch_size = 80;
  std::uint64_t seed = 1;
  int n_thresholds = 10;        // thresholds tried per candidate test
  int patches_per_frame = 20;   // head patches; as many non-head patches
  double head_region_scale = 1.5;  // head patches: center +- scale*radius
  double head_radius_mm = 120;
  double max_subrect_fraction = 0.5;  // sub-rectangle side <= fraction*patch
};

struct PoseForest {
  std::vector<RegressionTree> trees;
  int patch_size = 80;
  ForestParams params;
};

struct TrainingFrame {
  DepthFrame depth;
  HeadPose pose;
};

/// Per internal node: impurity before and weighted impurity after the
/// chosen split, over the samples the split was evaluated on. Regression
/// nodes measure vote variance, classification nodes head/non-head entropy.
struct SplitRecord {
  int tree = 0;
  int node = 0;
  bool classification = false;
  double parent_variance = 0;
  double child_variance = 0;
};

struct TrainStats {
  std::size_t n_samples = 0;
  std::size_t n_head_samples = 0;
  std::vector<SplitRecord> splits;
};

namespace detail {

struct Sample {
  std::int32_t frame;
  std::int16_t px, py;  // patch top-left, frame coordinates
  bool head;
  std::array<float, kVoteDims> target;  // zero for non-head patches
};

struct Moments {
  double n = 0;     // head patches
  double neg = 0;   // non-head patches
  VoteVec sum{};
  double sumsq = 0;
  double angle_sumsq = 0;  // only maintained for leaves

  void add(const Sample& s) {
    if (!s.head) {
      neg += 1;
      return;
    }
    n += 1;
    for (int d = 0; d < kVoteDims; ++d) {
      sum[d] += s.target[d];
      sumsq += double(s.target[d]) * s.target[d];
    }
  }
  void add(const Moments& o) {
    n += o.n;
    neg += o.neg;
    for (int d = 0; d < kVoteDims; ++d) sum[d] += o.sum[d];
    sumsq += o.sumsq;
  }
  void sub(const Moments& o) {
    n -= o.n;
    neg -= o.neg;
    for (int d = 0; d < kVoteDims; ++d) sum[d] -= o.sum[d];
    sumsq -= o.sumsq;
  }
  double total() const { return n + neg; }
  /// Sum of squared deviations from the mean over all vote dimensions.
  double sse() const {
    if (n == 0) return 0;
    double s2 = 0;
    for (double s : sum) s2 += s * s;
    return std::max(0.0, sumsq - s2 / n);
  }
  /// total() * binary entropy of the head fraction.
  double weighted_entropy() const {
    const double t = total();
    double h = 0;
    for (const double c : {n, neg})
      if (c > 0) h -= c * std::log2(c / t);
    return h;
  }
};

inline PatchTest random_test(std::mt19937_64& rng, int patch, double frac) {
  const int max_side = std::max(1, static_cast<int>(patch * frac));
  std::uniform_int_distribution<int> side(1, max_side);
  auto rect = [&] {
    const int w = side(rng), h = side(rng);
    std::uniform_int_distribution<int> ux(0, patch - w), uy(0, patch - h);
    return Rect{ux(rng), uy(rng), w, h};
  };
  PatchTest t;
  t.rect1 = rect();
  t.rect2 = rect();
  return t;
}

inline std::uint64_t tree_seed(std::uint64_t seed, int tree) {
  std::uint64_t x = seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(tree);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Nodes mixing head and non-head patches split on entropy; nodes that are
// (nearly) all head split on vote variance.
inline constexpr double kMixedFraction = 0.05;

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<DepthIntegral>& integrals,
              const std::vector<Sample>& samples, const ForestParams& p,
              int tree_index)
      : ii_(integrals), samples_(samples), p_(p), tree_index_(tree_index),
        rng_(tree_seed(p.seed, tree_index)) {}

  RegressionTree build(std::vector<SplitRecord>* records) {
    records_ = records;
    std::vector<std::int32_t> idx(samples_.size());
    std::uniform_int_distribution<std::size_t> pick(0, samples_.size() - 1);
    for (auto& i : idx) i = static_cast<std::int32_t>(pick(rng_));
    std::sort(idx.begin(), idx.end());
    tree_.max_depth = p_.max_depth;
    tree_.nodes.clear();
    grow(idx, 0);
    return std::move(tree_);
  }

 private:
  int make_leaf(const std::vector<std::int32_t>& idx) {
    Moments m;
    for (const auto i : idx) {
      m.add(samples_[i]);
      if (samples_[i].head)
        for (int d = 3; d < kVoteDims; ++d)
          m.angle_sumsq += double(samples_[i].target[d]) * samples_[i].target[d];
    }
    Node n;
    n.leaf = true;
    n.vote_count = static_cast<std::int32_t>(idx.size());
    for (int d = 0; d < kVoteDims; ++d)
      n.mean_vote[d] = m.n > 0 ? m.sum[d] / m.n : 0.0;
    n.vote_trace = m.n > 0 ? m.sse() / m.n : 0.0;
    if (m.n > 0) {
      double a2 = 0;
      for (int d = 3; d < kVoteDims; ++d) a2 += m.sum[d] * m.sum[d];
      n.angle_trace = std::max(0.0, (m.angle_sumsq - a2 / m.n) / m.n);
    }
    if (getenv("AT") && m.n > 0) {
      double t = 0;
      for (int d = 3; d < 6; ++d) { double mu = 0, q = 0; for (auto i : idx) if (samples_[i].head) { mu += samples_[i].target[d]; q += double(samples_[i].target[d]) * samples_[i].target[d]; } mu /= m.n; t += q / m.n - mu * mu; }
      n.vote_trace = t;
    }
    n.head_prob = m.total() > 0 ? m.n / m.total() : 0.0;
    tree_.nodes.push_back(n);
    return static_cast<int>(tree_.nodes.size()) - 1;
  }

  int grow(std::vector<std::int32_t>& idx, int depth) {
    const int n = static_cast<int>(idx.size());
    if (depth >= p_.max_depth || n < 2 * p_.min_samples) return make_leaf(idx);
    Moments node;
    for (const auto i : idx) node.add(samples_[i]);
    const double head_frac = node.n / node.total();
    if (head_frac < kMixedFraction) return make_leaf(idx);
    const bool classify = head_frac < 1.0 - kMixedFraction;

    struct Best {
      PatchTest test;
      double cost = std::numeric_limits<double>::infinity();
      double parent = 0;
    } best;
    std::vector<double> vals(idx.size());
    std::vector<double> thr(static_cast<std::size_t>(p_.n_thresholds));
    std::vector<Moments> buckets(thr.size() + 1);
    std::uniform_int_distribution<int> pick(0, n - 1);

    for (int c = 0; c < p_.n_candidate_tests; ++c) {
      PatchTest t = random_test(rng_, p_.patch_size, p_.max_subrect_fraction);
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      int defined = 0;
      for (int k = 0; k < n; ++k) {
        const Sample& s = samples_[idx[k]];
        const auto f = feature_value(ii_[s.frame], s.px, s.py, t);
        if (f) {
          vals[k] = *f;
          lo = std::min(lo, vals[k]);
          hi = std::max(hi, vals[k]);
          ++defined;
        } else {
          vals[k] = std::numeric_limits<double>::quiet_NaN();
        }
      }
      if (defined < 2 * p_.min_samples || !(hi > lo)) continue;
      // Thresholds at feature values of random samples follow the data;
      // uniform draws over [lo, hi] are wasted when a few background
      // patches stretch the range.
      for (auto& x : thr) {
        double v;
        do v = vals[static_cast<std::size_t>(pick(rng_))]; while (std::isnan(v));
        x = v;
      }
      std::sort(thr.begin(), thr.end());
      for (auto& b : buckets) b = Moments{};
      for (int k = 0; k < n; ++k) {
        if (std::isnan(vals[k])) continue;
        // bucket j holds samples with thr[j-1] <= f < thr[j]
        const auto j = std::upper_bound(thr.begin(), thr.end(), vals[k]) -
                       thr.begin();
        buckets[static_cast<std::size_t>(j)].add(samples_[idx[k]]);
      }
      Moments all;
      for (const auto& b : buckets) all.add(b);
      if (!classify && all.n == 0) continue;
      const double parent = classify ? all.weighted_entropy() / all.total()
                                     : all.sse() / all.n;
      Moments left;
      for (std::size_t j = 0; j < thr.size(); ++j) {
        left.add(buckets[j]);  // left = samples with f < thr[j]
        Moments right = all;
        right.sub(left);
        if (left.total() < p_.min_samples || right.total() < p_.min_samples)
          continue;
        const double cost =
            classify
                ? (left.weighted_entropy() + right.weighted_entropy()) / all.total()
                : (left.sse() + right.sse()) / all.n;
        if (cost < best.cost) {
          best.cost = cost;
          best.test = t;
          best.test.tau = thr[j];
          best.parent = parent;
        }
      }
    }
    if (!std::isfinite(best.cost)) return make_leaf(idx);

    std::vector<std::int32_t> li, ri;
    for (const auto i : idx) {
      const Sample& s = samples_[i];
      const auto f = feature_value(ii_[s.frame], s.px, s.py, best.test);
      if (!f) continue;  // undefined feature: the patch is skipped
      (*f < best.test.tau ? li : ri).push_back(i);
    }
    std::vector<std::int32_t>().swap(idx);

    const int self = static_cast<int>(tree_.nodes.size());
    Node split;
    split.leaf = false;
    split.test = best.test;
    tree_.nodes.push_back(split);
    if (records_)
      records_->push_back({tree_index_, self, classify, best.parent, best.cost});
    const int l = grow(li, depth + 1);
    const int r = grow(ri, depth + 1);
    tree_.nodes[static_cast<std::size_t>(self)].left = l;
    tree_.nodes[static_cast<std::size_t>(self)].right = r;
    return self;
  }

  const std::vector<DepthIntegral>& ii_;
  const std::vector<Sample>& samples_;
  const ForestParams& p_;
  int tree_index_;
  std::mt19937_64 rng_;
  RegressionTree tree_;
  std::vector<SplitRecord>* records_ = nullptr;
};

}  // namespace detail

/// Trains a forest on depth frames with ground-truth poses. Head patches are
/// centered on head pixels within the head region; non-head patches come
/// from the surrounding area. Deterministic in params.seed regardless of the
/// thread count.
inline PoseForest train(std::span<const TrainingFrame> frames,
                        const CameraIntrinsics& k, const ForestParams& p,
                        TrainStats* stats = nullptr, int jobs = 0) {
  require(frames.size() >= 10, "pose forest training needs >= 10 frames");
  require(p.n_trees >= 1 && p.max_depth >= 1 && p.min_samples >= 1 &&
              p.n_candidate_tests >= 1 && p.n_thresholds >= 1 &&
              p.patch_size >= 4 && p.patches_per_frame >= 1 &&
              p.max_subrect_fraction > 0 && p.max_subrect_fraction <= 1,
          "invalid forest parameters");
  k.validate();
  const int ps = p.patch_size;
  const int half = ps / 2;

  std::vector<DepthIntegral> integrals;
  std::vector<detail::Sample> samples;
  integrals.reserve(frames.size());
  std::mt19937_64 rng(detail::tree_seed(p.seed, -1));
  std::size_t n_head = 0;
  for (std::size_t fi = 0; fi < frames.size(); ++fi) {
    const auto& f = frames[fi];
    require(f.depth.width == k.width && f.depth.height == k.height,
            "training frame size does not match the intrinsics");
    require(f.pose.center.z > 0, "training pose must be in front of the camera");
    const Pixel2 c = project(f.pose.center, k);
    const double r = p.head_region_scale * p.head_radius_mm * k.fx / f.pose.center.z;
    const double outer = 2 * r;  // non-head patches: center +- 2r
    const int u0 = static_cast<int>(std::floor(c.u - outer)) - half;
    const int v0 = static_cast<int>(std::floor(c.v - outer)) - half;
    const int side = static_cast<int>(std::ceil(2 * outer)) + ps + 2;
    integrals.emplace_back(f.depth, Rect{u0, v0, side, side});
    const Rect& reg = integrals.back().region();

    auto draw = [&](double radius, bool want_head) {
      std::uniform_real_distribution<double> du(c.u - radius, c.u + radius),
          dv(c.v - radius, c.v + radius);
      int got = 0;
      for (int attempt = 0;
           attempt < 20 * p.patches_per_frame && got < p.patches_per_frame;
           ++attempt) {
        const int cu = static_cast<int>(std::lround(du(rng)));
        const int cv = static_cast<int>(std::lround(dv(rng)));
        const int px = cu - half, py = cv - half;
        if (!contains(reg, Rect{px, py, ps, ps})) continue;
        const std::uint16_t z = f.depth.at(cu, cv);
        if (z == 0) continue;
        const Vec3 pc = backproject(cu, cv, z, k);
        const Vec3 off = f.pose.center - pc;
        const bool head = norm(off) <= p.head_radius_mm * 1.25;
        if (head != want_head) continue;
        detail::Sample s{static_cast<std::int32_t>(fi),
                         static_cast<std::int16_t>(px),
                         static_cast<std::int16_t>(py), head, {}};
        if (head) {
          s.target = {static_cast<float>(off.x), static_cast<float>(off.y),
                      static_cast<float>(off.z),
                      static_cast<float>(f.pose.yaw_deg),
                      static_cast<float>(f.pose.pitch_deg),
                      static_cast<float>(f.pose.roll_deg)};
          ++n_head;
        }
        samples.push_back(s);
        ++got;
      }
    };
    draw(r, true);
    draw(outer, false);
  }
  if (n_head < static_cast<std::size_t>(2 * p.min_samples))
    fail_data("insufficient training patches to grow a tree");

  PoseForest forest;
  forest.patch_size = ps;
  forest.params = p;
  forest.trees.resize(static_cast<std::size_t>(p.n_trees));
  std::vector<std::vector<SplitRecord>> records(forest.trees.size());

  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  jobs = std::min(jobs, p.n_trees);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int t = next++; t < p.n_trees; t = next++) {
      detail::TreeBuilder b(integrals, samples, p, t);
      forest.trees[static_cast<std::size_t>(t)] =
          b.build(stats ? &records[static_cast<std::size_t>(t)] : nullptr);
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (stats) {
    stats->n_samples = samples.size();
    stats->n_head_samples = n_head;
    stats->splits.clear();
    for (auto& r : records)
      stats->splits.insert(stats->splits.end(), r.begin(), r.end());
  }
  return forest;
}

struct EstimateParams {
  int min_votes = 10;
  double min_head_prob = 0.5;
  double max_leaf_trace = 10000;  // mm^2 + deg^2
  double max_angle_trace = 250;   // deg^2
  double trim_fraction = 0.2;
  int stride = 0;                // 0: patch_size / 2
};

struct EstimateDiagnostics {
  int patches = 0;
  int votes = 0;
};

/// Leaf index per (patch, tree) for the dense estimation grid; -1 when the
/// patch is skipped. Patches are enumerated row-major.
inline std::vector<int> leaf_assignments(const PoseForest& forest,
                                         const DepthFrame& frame,
                                         int stride = 0) {
  const int ps = forest.patch_size;
  if (stride <= 0) stride = std::max(1, ps / 2);
  const DepthIntegral ii(frame);
  std::vector<int> out;
  for (int py = 0; py + ps <= frame.height; py += stride)
    for (int px = 0; px + ps <= frame.width; px += stride)
      for (const auto& t : forest.trees) out.push_back(t.route(ii, px, py));
  return out;
}

namespace detail {

inline double median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return (lo + hi) / 2;
}

/// Mean of the votes in dims [d0, d0+3) after dropping the fraction
/// farthest from the coordinate-wise median.
inline std::array<double, 3> trimmed_mean(const std::vector<VoteVec>& votes,
                                          int d0, double trim) {
  std::array<double, 3> med{};
  for (int d = 0; d < 3; ++d) {
    std::vector<double> c;
    c.reserve(votes.size());
    for (const auto& v : votes) c.push_back(v[d0 + d]);
    med[d] = median(std::move(c));
  }
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(votes.size());
  for (std::size_t i = 0; i < votes.size(); ++i) {
    double s = 0;
    for (int d = 0; d < 3; ++d) s += std::pow(votes[i][d0 + d] - med[d], 2);
    dist.emplace_back(s, i);
  }
  std::sort(dist.begin(), dist.end());
  const std::size_t keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil((1.0 - trim) * votes.size())));
  std::array<double, 3> mean{};
  for (std::size_t j = 0; j < keep; ++j)
    for (int d = 0; d < 3; ++d) mean[d] += votes[dist[j].second][d0 + d];
  for (auto& m : mean) m /= static_cast<double>(keep);
  return mean;
}

}  // namespace detail

/// Head pose from one depth frame, or nullopt when too few confident votes
/// survive.
inline std::optional<HeadPose> estimate(const PoseForest& forest,
                                        const DepthFrame& frame,
                                        const CameraIntrinsics& k,
                                        const EstimateParams& ep = {},
                                        EstimateDiagnostics* diag = nullptr) {
  const int ps = forest.patch_size;
  require(!forest.trees.empty(), "pose forest is not trained");
  if (frame.width < ps || frame.height < ps)
    throw Error(ErrorKind::data, "depth frame smaller than the forest patch size");
  const int stride = ep.stride > 0 ? ep.stride : std::max(1, ps / 2);
  const DepthIntegral ii(frame);
  std::vector<VoteVec> votes;
  int patches = 0;
  for (int py = 0; py + ps <= frame.height; py += stride) {
    for (int px = 0; px + ps <= frame.width; px += stride) {
      const int cu = px + ps / 2, cv = py + ps / 2;
      const std::uint16_t z = frame.at(cu, cv);
      if (z == 0) continue;
      ++patches;
      const Vec3 pc = backproject(cu, cv, z, k);
      for (const auto& t : forest.trees) {
        const int leaf = t.route(ii, px, py);
        if (leaf < 0) continue;
        const Node& n = t.nodes[static_cast<std::size_t>(leaf)];
        if (n.head_prob < ep.min_head_prob || n.vote_trace > ep.max_leaf_trace ||
            n.angle_trace > ep.max_angle_trace)
          continue;
        votes.push_back({pc.x + n.mean_vote[0], pc.y + n.mean_vote[1],
                         pc.z + n.mean_vote[2], n.mean_vote[3], n.mean_vote[4],
                         n.mean_vote[5]});
      }
    }
  }
  if (diag) *diag = {patches, static_cast<int>(votes.size())};
  if (static_cast<int>(votes.size()) < ep.min_votes) return std::nullopt;
  const auto c = detail::trimmed_mean(votes, 0, ep.trim_fraction);
  const auto a = detail::trimmed_mean(votes, 3, ep.trim_fraction);
  return make_pose({c[0], c[1], c[2]}, a[0], a[1], a[2]);
}

// --- serialization -------------------------------------------------------

inline std::string serialize(const PoseForest& f) {
  io::BinaryWriter w;
  w.put_bytes("MSPF1");
  w.put<std::int32_t>(f.patch_size);
  const auto& p = f.params;
  for (const int v : {p.n_trees, p.max_depth, p.min_samples, p.n_candidate_tests,
                      p.n_thresholds, p.patches_per_frame})
    w.put<std::int32_t>(v);
  w.put<std::uint64_t>(p.seed);
  w.put<double>(p.head_region_scale);
  w.put<double>(p.head_radius_mm);
  w.put<double>(p.max_subrect_fraction);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(f.trees.size()));
  for (const auto& t : f.trees) {
    w.put<std::int32_t>(t.max_depth);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
      w.put<std::uint8_t>(n.leaf ? 1 : 0);
      if (n.leaf) {
        for (const double v : n.mean_vote) w.put<double>(v);
        w.put<std::int32_t>(n.vote_count);
        w.put<double>(n.vote_trace);
        w.put<double>(n.angle_trace);
        w.put<double>(n.head_prob);
      } else {
        for (const Rect& r : {n.test.rect1, n.test.rect2}) {
          w.put<std::int16_t>(static_cast<std::int16_t>(r.x));
          w.put<std::int16_t>(static_cast<std::int16_t>(r.y));
          w.put<std::int16_t>(static_cast<std::int16_t>(r.w));
          w.put<std::int16_t>(static_cast<std::int16_t>(r.h));
        }
        w.put<double>(n.test.tau);
        w.put<std::int32_t>(n.left);
        w.put<std::int32_t>(n.right);
      }
    }
  }
  return w.bytes();
}

inline PoseForest deserialize(std::string_view bytes) {
  io::BinaryReader r(bytes);
  r.expect_magic("MSPF1");
  PoseForest f;
  f.patch_size = r.get<std::int32_t>();
  auto& p = f.params;
  p.patch_size = f.patch_size;
  for (int* v : {&p.n_trees, &p.max_depth, &p.min_samples, &p.n_candidate_tests,
                 &p.n_thresholds, &p.patches_per_frame})
    *v = r.get<std::int32_t>();
  p.seed = r.get<std::uint64_t>();
  p.head_region_scale = r.get<double>();
  p.head_radius_mm = r.get<double>();
  p.max_subrect_fraction = r.get<double>();
  const auto nt = r.get<std::uint32_t>();
  if (nt == 0 || f.patch_size < 1) fail_data("forest file has no trees");
  const Rect patch{0, 0, f.patch_size, f.patch_size};
  for (std::uint32_t ti = 0; ti < nt; ++ti) {
    RegressionTree t;
    t.max_depth = r.get<std::int32_t>();
    const auto nn = r.get<std::uint32_t>();
    if (nn == 0) fail_data("forest tree has no nodes");
    t.nodes.resize(nn);
    for (auto& n : t.nodes) {
      n.leaf = r.get<std::uint8_t>() != 0;
      if (n.leaf) {
        for (double& v : n.mean_vote) v = r.get<double>();
        n.vote_count = r.get<std::int32_t>();
        n.vote_trace = r.get<double>();
        n.angle_trace = r.get<double>();
        n.head_prob = r.get<double>();
      } else {
        for (Rect* rc : {&n.test.rect1, &n.test.rect2}) {
          rc->x = r.get<std::int16_t>();
          rc->y = r.get<std::int16_t>();
          rc->w = r.get<std::int16_t>();
          rc->h = r.get<std::int16_t>();
          if (!contains(patch, *rc)) fail_data("forest split rectangle outside patch");
        }
        n.test.tau = r.get<double>();
        n.left = r.get<std::int32_t>();
        n.right = r.get<std::int32_t>();
        if (n.left <= 0 || n.right <= 0 || n.left >= static_cast<int>(nn) ||
            n.right >= static_cast<int>(nn))
          fail_data("forest node child index out of range");
      }
    }
    f.trees.push_back(std::move(t));
  }
  if (!r.at_end()) fail_data("trailing bytes in forest file");
  return f;
}

}  // namespace msface::forest
