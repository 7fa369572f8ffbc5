#pragma once

// Infrared thermography: intensity->temperature calibration, ROI readings,
// the blood-flow surrogate, RGB->IR ROI mapping and the fever rule.

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "msface/error.hpp"
#include "msface/image.hpp"
#include "msface/io.hpp"

namespace msface::thermal {

/// Linear map from 8-bit IR intensity to degrees Celsius. The intercept is
/// the temperature of a zero-intensity pixel, i.e. the room temperature.
struct ThermalCalibration {
  double slope = 0.2087;      // degC per gray level
  double intercept = 22.28;   // degC
  double residual_rms = 0.0;  // degC
  int n_points = 2;
};

/// Calibration published with the original thermal camera setup.
inline ThermalCalibration reference_calibration() { return {}; }

struct CalibrationPoint {
  double intensity = 0;
  double temp_c = 0;
};

/// Ordinary least squares fit of temp_c = slope * intensity + intercept.
inline ThermalCalibration fit_calibration(
    const std::vector<CalibrationPoint>& points) {
  require(points.size() >= 2, "calibration needs at least two points");
  const double n = static_cast<double>(points.size());
  double mx = 0, my = 0;
  for (const auto& p : points) mx += p.intensity, my += p.temp_c;
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (const auto& p : points) {
    sxx += (p.intensity - mx) * (p.intensity - mx);
    sxy += (p.intensity - mx) * (p.temp_c - my);
  }
  if (!(sxx > 0))
    fail_data("calibration is unfittable: all intensities are identical");
  ThermalCalibration cal;
  cal.slope = sxy / sxx;
  cal.intercept = my - cal.slope * mx;
  double ss = 0;
  for (const auto& p : points) {
    const double r = p.temp_c - (cal.slope * p.intensity + cal.intercept);
    ss += r * r;
  }
  cal.residual_rms = std::sqrt(ss / n);
  cal.n_points = static_cast<int>(points.size());
  return cal;
}

inline double intensity_to_temp(double intensity,
                                const ThermalCalibration& cal) {
  return cal.slope * intensity + cal.intercept;
}

/// Real-valued inverse of the calibration line.
inline double temp_to_intensity(double temp_c, const ThermalCalibration& cal) {
  require(cal.slope != 0, "calibration slope must be non-zero");
  return (temp_c - cal.intercept) / cal.slope;
}

/// Linear surrogate for the skin blood-flow relation: flow (ml/100g
/// tissue/min) as an affine function of skin temperature. Core blood
/// temperature is folded into the two constants. This is NOT a
/// physiological model; it is the unique line through two published
/// (temperature, flow) observations.
struct BloodFlowModel {
  double bf_slope = 0;      // (ml/100g/min) per degC
  double bf_intercept = 0;  // ml/100g/min

  static BloodFlowModel from_anchors(double t1, double f1, double t2,
                                     double f2) {
    require(t1 != t2, "blood-flow anchors need distinct temperatures");
    BloodFlowModel m;
    m.bf_slope = (f1 - f2) / (t1 - t2);
    m.bf_intercept = f1 - m.bf_slope * t1;
    return m;
  }
};

/// Forehead reading 33.727 degC -> 39.6536 and whole-head reading
/// 31.5156 degC -> 19.2156, from the reference thermal experiment.
inline BloodFlowModel reference_blood_flow() {
  return BloodFlowModel::from_anchors(33.727, 39.6536, 31.5156, 19.2156);
}

inline double blood_flow(double temp_c, const BloodFlowModel& m) {
  return m.bf_slope * temp_c + m.bf_intercept;
}

struct ThermalReading {
  Rect roi;
  double mean_intensity = 0;
  double temp_c = 0;
  double blood_flow = 0;
};

inline ThermalReading temp_of_roi(const IrFrame& ir, const Rect& roi,
                                  const ThermalCalibration& cal,
                                  const BloodFlowModel& bf =
                                      reference_blood_flow()) {
  if (roi.empty()) fail_data("empty thermal ROI");
  require(contains(ir.bounds(), roi), "thermal ROI outside the IR frame");
  std::uint64_t sum = 0;
  for (int y = roi.y; y < roi.y + roi.h; ++y)
    for (int x = roi.x; x < roi.x + roi.w; ++x) sum += ir.at(x, y);
  ThermalReading r;
  r.roi = roi;
  r.mean_intensity = static_cast<double>(sum) / static_cast<double>(roi.area());
  r.temp_c = intensity_to_temp(r.mean_intensity, cal);
  r.blood_flow = blood_flow(r.temp_c, bf);
  return r;
}

/// Affine map from RGB pixel coordinates to IR pixel coordinates:
/// [u_ir, v_ir]^T = A [u, v, 1]^T.
struct RoiMap {
  double a[2][3] = {{1, 0, 0}, {0, 1, 0}};
  double residual_px = 0;

  std::pair<double, double> apply(double u, double v) const {
    return {a[0][0] * u + a[0][1] * v + a[0][2],
            a[1][0] * u + a[1][1] * v + a[1][2]};
  }
  double determinant() const { return a[0][0] * a[1][1] - a[0][1] * a[1][0]; }
};

struct Correspondence {
  double rgb_u = 0, rgb_v = 0, ir_u = 0, ir_v = 0;
};

inline RoiMap fit_roi_map(const std::vector<Correspondence>& pairs) {
  require(pairs.size() >= 3, "affine fit needs at least three pairs");
  const Eigen::Index n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd design(n, 3);
  Eigen::MatrixXd target(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    design.row(i) << p.rgb_u, p.rgb_v, 1.0;
    target.row(i) << p.ir_u, p.ir_v;
  }
  // Collinearity check on the centered point cloud, scale-free.
  Eigen::MatrixXd centered = design.leftCols(2).rowwise() -
                             design.leftCols(2).colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const auto sv = svd.singularValues();
  if (!(sv(0) > 0) || sv(1) <= 1e-9 * sv(0))
    fail_data("correspondences are collinear; affine map is singular");

  const Eigen::MatrixXd sol = design.colPivHouseholderQr().solve(target);
  RoiMap m;
  for (int c = 0; c < 3; ++c) {
    m.a[0][c] = sol(c, 0);
    m.a[1][c] = sol(c, 1);
  }
  if (std::abs(m.determinant()) < 1e-12)
    fail_data("fitted affine map is not invertible");
  const Eigen::MatrixXd res = design * sol - target;
  m.residual_px = std::sqrt(res.rowwise().squaredNorm().mean());
  return m;
}

/// Fractional rectangle, used before rounding into IR pixel space.
struct RectF {
  double x = 0, y = 0, w = 0, h = 0;
};

struct ForeheadProportions {
  double width_fraction = 0.60;   // central part of the face box width
  double height_fraction = 0.25;  // top part of the face box height
};

/// Forehead region in the face box's own (RGB) coordinates.
inline RectF forehead_region(const DetBox& box,
                             const ForeheadProportions& prop = {}) {
  require(box.w > 0 && box.h > 0, "face box must be non-empty");
  const double w = box.w * prop.width_fraction;
  return {box.x + (box.w - w) / 2, box.y, w, box.h * prop.height_fraction};
}

/// Bounding box of a rectangle's image under the affine map.
inline RectF map_rect(const RoiMap& map, const RectF& r) {
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const double u : {r.x, r.x + r.w})
    for (const double v : {r.y, r.y + r.h}) {
      const auto [mu, mv] = map.apply(u, v);
      x0 = std::min(x0, mu), x1 = std::max(x1, mu);
      y0 = std::min(y0, mv), y1 = std::max(y1, mv);
    }
  return {x0, y0, x1 - x0, y1 - y0};
}

/// Forehead ROI in IR pixel coordinates, clipped to the IR frame.
inline Rect forehead_roi(const DetBox& box, const RoiMap& map, int ir_width,
                         int ir_height, const ForeheadProportions& prop = {}) {
  const RectF f = map_rect(map, forehead_region(box, prop));
  const int x0 = static_cast<int>(std::lround(f.x));
  const int y0 = static_cast<int>(std::lround(f.y));
  const int x1 = static_cast<int>(std::lround(f.x + f.w));
  const int y1 = static_cast<int>(std::lround(f.y + f.h));
  const Rect clipped = intersect({x0, y0, x1 - x0, y1 - y0},
                                 {0, 0, ir_width, ir_height});
  if (clipped.empty()) fail_data("forehead ROI maps outside the IR frame");
  return clipped;
}

struct FeverFinding {
  double temp_c = 0;
  double threshold_c = 38.0;
};

/// Inclusive: a reading exactly at the threshold is a finding.
inline std::optional<FeverFinding> fever_check(double temp_c,
                                               double threshold_c = 38.0) {
  if (temp_c >= threshold_c) return FeverFinding{temp_c, threshold_c};
  return std::nullopt;
}

// --- file formats -------------------------------------------------------

/// CSV with header `intensity,temp_c`.
inline std::vector<CalibrationPoint> parse_calibration_points(
    std::string_view csv) {
  const auto t = io::parse_csv(csv);
  const auto ci = t.column("intensity");
  const auto ct = t.column("temp_c");
  std::vector<CalibrationPoint> pts;
  for (const auto& r : t.rows)
    pts.push_back({io::to_double(r[ci]), io::to_double(r[ct])});
  return pts;
}

/// CSV with header `slope,intercept,residual_rms,n_points`.
inline std::string format_calibration_csv(const ThermalCalibration& c) {
  return "slope,intercept,residual_rms,n_points\n" + io::fmt(c.slope) + "," +
         io::fmt(c.intercept) + "," + io::fmt(c.residual_rms) + "," +
         std::to_string(c.n_points) + "\n";
}

inline std::string format_calibration_text(const ThermalCalibration& c) {
  std::ostringstream o;
  o << "slope: " << io::fmt(c.slope) << " degC/level\n"
    << "intercept: " << io::fmt(c.intercept) << " degC (room temperature)\n"
    << "residual_rms: " << io::fmt(c.residual_rms) << " degC\n"
    << "n_points: " << c.n_points << "\n";
  return o.str();
}

inline ThermalCalibration parse_calibration_csv(std::string_view csv) {
  const auto t = io::parse_csv(csv);
  if (t.rows.size() != 1) fail_data("calibration CSV must have one row");
  const auto& r = t.rows[0];
  ThermalCalibration c;
  c.slope = io::to_double(r[t.column("slope")]);
  c.intercept = io::to_double(r[t.column("intercept")]);
  c.residual_rms = io::to_double(r[t.column("residual_rms")]);
  c.n_points = static_cast<int>(io::to_int(r[t.column("n_points")]));
  if (!std::isfinite(c.slope)) fail_data("calibration slope is not finite");
  return c;
}

/// CSV with header `rgb_u,rgb_v,ir_u,ir_v`.
inline std::vector<Correspondence> parse_correspondences(std::string_view csv) {
  const auto t = io::parse_csv(csv);
  const auto a = t.column("rgb_u"), b = t.column("rgb_v"),
             c = t.column("ir_u"), d = t.column("ir_v");
  std::vector<Correspondence> out;
  for (const auto& r : t.rows)
    out.push_back({io::to_double(r[a]), io::to_double(r[b]),
                   io::to_double(r[c]), io::to_double(r[d])});
  return out;
}

}  // namespace msface::thermal
