#pragma once

// Verification metrics: ROC, equal error rate, FRR at a fixed FAR, and the
// enroll-then-probe protocol producing genuine/impostor scores.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "msface/error.hpp"
#include "msface/io.hpp"
#include "msface/recognize.hpp"

namespace msface::verify {

enum class Polarity { distance, similarity };

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
  Polarity polarity = Polarity::distance;
};

struct RocPoint {
  double threshold;
  double far;
  double frr;
};

/// Points ordered from the strictest threshold (FAR 0, FRR 1) to the most
/// permissive (FAR 1, FRR 0): one per distinct score plus two infinite
/// sentinels. A score is accepted when it is at least as good as the
/// threshold (<= for distances, >= for similarities).
inline std::vector<RocPoint> roc(const ScoreSet& s) {
  require(!s.genuine.empty() && !s.impostor.empty(),
          "ROC needs genuine and impostor scores");
  const bool dist = s.polarity == Polarity::distance;
  // Map to distance-like keys so one sweep serves both polarities.
  auto key = [&](double v) { return dist ? v : -v; };
  std::vector<double> g, im;
  for (const double v : s.genuine) {
    require(std::isfinite(v), "scores must be finite");
    g.push_back(key(v));
  }
  for (const double v : s.impostor) {
    require(std::isfinite(v), "scores must be finite");
    im.push_back(key(v));
  }
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  std::vector<double> t;
  t.reserve(g.size() + im.size());
  std::merge(g.begin(), g.end(), im.begin(), im.end(), std::back_inserter(t));
  t.erase(std::unique(t.begin(), t.end()), t.end());

  const double ng = double(g.size()), ni = double(im.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<RocPoint> out;
  out.push_back({dist ? -inf : inf, 0.0, 1.0});
  std::size_t gi = 0, ii = 0;
  for (const double th : t) {
    while (gi < g.size() && g[gi] <= th) ++gi;
    while (ii < im.size() && im[ii] <= th) ++ii;
    out.push_back({dist ? th : -th, double(ii) / ni, double(g.size() - gi) / ng});
  }
  out.push_back({dist ? inf : -inf, 1.0, 0.0});
  return out;
}

/// FAR == FRR crossing, linearly interpolated between the two adjacent
/// curve points where FAR - FRR changes sign.
inline double eer(const std::vector<RocPoint>& curve) {
  require(curve.size() >= 2, "EER needs at least two curve points");
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double d = curve[i].far - curve[i].frr;
    if (d == 0) return curve[i].far;
    if (i + 1 < curve.size()) {
      const double d1 = curve[i + 1].far - curve[i + 1].frr;
      if (d < 0 && d1 > 0) {
        const double t = -d / (d1 - d);
        return curve[i].far + t * (curve[i + 1].far - curve[i].far);
      }
    }
  }
  fail_data("FAR and FRR never cross on this curve");
}

struct FrrAtFar {
  double frr = 1;
  double far = 0;
  double threshold = 0;
  /// No finite score threshold reaches the FAR target; the reported point
  /// is the reject-everything sentinel.
  bool floor_hit = false;
};

/// FRR at the most permissive threshold whose FAR <= far_target.
inline FrrAtFar frr_at_far(const std::vector<RocPoint>& curve, double far_target) {
  require(far_target > 0 && far_target < 1, "FAR target must be in (0, 1)");
  require(curve.size() >= 2, "curve is empty");
  std::size_t best = 0;
  for (std::size_t i = 0; i < curve.size(); ++i)
    if (curve[i].far <= far_target) best = i;
  const auto& p = curve[best];
  return {p.frr, p.far, p.threshold, !std::isfinite(p.threshold)};
}

struct VerifyReport {
  double eer = 0;
  std::map<double, FrrAtFar> frr_at_far;
  std::vector<RocPoint> curve;
};

inline VerifyReport make_report(const ScoreSet& s,
                                const std::vector<double>& far_levels = {0.001, 0.01, 0.1}) {
  VerifyReport r;
  r.curve = roc(s);
  r.eer = eer(r.curve);
  for (const double f : far_levels) r.frr_at_far[f] = frr_at_far(r.curve, f);
  return r;
}

inline std::string format_report(const VerifyReport& r) {
  std::ostringstream o;
  o << "eer=" << io::fmt(r.eer) << '\n';
  for (const auto& [f, v] : r.frr_at_far)
    o << "frr_at_far[" << io::fmt(f) << "]=" << io::fmt(v.frr)
      << (v.floor_hit ? " floor_hit" : "") << '\n';
  return o.str();
}

inline std::string curve_csv(const std::vector<RocPoint>& curve) {
  std::ostringstream o;
  o << "threshold,far,frr\n";
  for (const auto& p : curve)
    o << io::fmt(p.threshold) << ',' << io::fmt(p.far) << ',' << io::fmt(p.frr) << '\n';
  return o.str();
}

// --- score files -------------------------------------------------------------

inline std::string scores_csv(const ScoreSet& s) {
  std::ostringstream o;
  o << "kind,score\n";
  for (const double v : s.genuine) o << "genuine," << io::fmt(v) << '\n';
  for (const double v : s.impostor) o << "impostor," << io::fmt(v) << '\n';
  return o.str();
}

inline ScoreSet parse_scores_csv(std::string_view text,
                                 Polarity polarity = Polarity::distance) {
  const auto t = io::parse_csv(text);
  const auto kc = t.column("kind"), sc = t.column("score");
  ScoreSet s;
  s.polarity = polarity;
  for (const auto& row : t.rows) {
    const double v = io::to_double(row[sc]);
    if (!std::isfinite(v)) fail_data("non-finite score in CSV");
    if (row[kc] == "genuine")
      s.genuine.push_back(v);
    else if (row[kc] == "impostor")
      s.impostor.push_back(v);
    else
      fail_data("score kind must be genuine or impostor, got '" + row[kc] + "'");
  }
  if (s.genuine.empty() || s.impostor.empty())
    fail_data("score file needs both genuine and impostor rows");
  return s;
}

// --- enrollment protocol -------------------------------------------------------

/// Gated-frontal chips of one subject, in sequence order.
struct SubjectChips {
  int subject = 0;
  std::vector<recognize::FaceChip> chips;
};

using ChipDistance =
    std::function<double(const recognize::FaceChip&, const recognize::FaceChip&)>;

/// Chi-square distance between 8x8-grid LBP histograms.
inline double lbph_distance(const recognize::FaceChip& a, const recognize::FaceChip& b) {
  return recognize::chi_square(recognize::lbp_histogram(a.pixels),
                               recognize::lbp_histogram(b.pixels));
}

struct EnrollmentResult {
  ScoreSet scores;
  std::vector<int> excluded;  // subjects with too few frontal chips
};

/// The first n_enroll chips of each subject enroll it; every later chip is
/// scored against every enrolled subject as the minimum distance to that
/// subject's enrolled chips.
inline EnrollmentResult enrollment_protocol(const std::vector<SubjectChips>& subjects,
                                            int n_enroll = 3,
                                            const ChipDistance& dist = lbph_distance) {
  require(n_enroll >= 1, "n_enroll must be >= 1");
  EnrollmentResult r;
  std::vector<const SubjectChips*> used;
  for (const auto& s : subjects) {
    if (static_cast<int>(s.chips.size()) >= n_enroll + 1)
      used.push_back(&s);
    else
      r.excluded.push_back(s.subject);
  }
  if (used.size() < 2)
    fail_data("enrollment needs >= 2 subjects with >= n_enroll + 1 frontal chips "
              "(no impostor trials otherwise)");
  const auto ne = static_cast<std::size_t>(n_enroll);
  for (const auto* probe_subject : used)
    for (std::size_t p = ne; p < probe_subject->chips.size(); ++p)
      for (const auto* enrolled : used) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t e = 0; e < ne; ++e)
          best = std::min(best, dist(probe_subject->chips[p], enrolled->chips[e]));
        (probe_subject->subject == enrolled->subject ? r.scores.genuine : r.scores.impostor)
            .push_back(best);
      }
  return r;
}

}  // namespace msface::verify
