#pragma once

// EigenFace, FisherFace and LBPH recognizers over normalized face chips.
//
// Model file "MSRM1" (little-endian):
//   bytes "MSRM1", u8 tag ('E' eigen, 'F' fisher, 'L' lbph)
//   i32 chip width, i32 chip height
//   u32 label-name count, then (i32 label, u32 len, bytes) per name
//   'E'/'F': u32 dim D, u32 k; f64 mean[D]; f64 basis[D*k] (column-major);
//            f64 eigenvalues[k]; u32 N; i32 labels[N]; f64 projections[k*N]
//   'L':     i32 grid_x, i32 grid_y; u32 N; i32 labels[N];
//            u32 histogram counts[N * grid_x * grid_y * 256]

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "msface/error.hpp"
#include "msface/image.hpp"
#include "msface/imgproc.hpp"
#include "msface/io.hpp"
#include "msface/pgm.hpp"

namespace msface::recognize {

inline constexpr int kChipWidth = 92;
inline constexpr int kChipHeight = 112;

struct FaceChip {
  GrayFrame pixels;
  std::optional<int> label;
};

struct Gallery {
  std::vector<FaceChip> chips;
  std::map<int, std::string> label_names;
};

/// Crop, bilinear resize to out_w x out_h, histogram equalization. The box
/// is rounded to whole pixels and clipped to the frame.
inline FaceChip normalize_chip(const GrayFrame& frame, const DetBox& box,
                               int out_w = kChipWidth, int out_h = kChipHeight) {
  require(out_w > 0 && out_h > 0, "chip size must be positive");
  require(box.w > 0 && box.h > 0 && std::isfinite(box.x) && std::isfinite(box.y),
          "degenerate face box");
  const Rect r = intersect(box.rounded(), frame.bounds());
  require(!r.empty(), "face box lies outside the frame");
  return {equalize_hist(resize_bilinear(crop(frame, r), out_w, out_h)), std::nullopt};
}

/// Loads `subject_<id>/<frame>.pgm` files, files sorted by name. Images of
/// another size are normalized over their full extent.
inline Gallery load_gallery(const std::filesystem::path& dir, int out_w = kChipWidth,
                            int out_h = kChipHeight) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail_io("gallery directory not found: " + dir.string());
  Gallery g;
  std::map<int, fs::path> subjects;  // ordered by numeric id
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_directory() && name.rfind("subject_", 0) == 0) {
      const int label = static_cast<int>(io::to_int(name.substr(8)));
      if (!subjects.emplace(label, e.path()).second)
        fail_data("duplicate subject id " + std::to_string(label) + " in gallery");
    }
  }
  for (const auto& [label, sd] : subjects) {
    const std::string name = sd.filename().string();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(sd))
      if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const GrayFrame img = pgm::read_gray(f);
      FaceChip c{img, label};
      if (img.width != out_w || img.height != out_h)
        c = normalize_chip(img, {0, 0, double(img.width), double(img.height), 0}, out_w,
                           out_h);
      c.label = label;
      g.chips.push_back(std::move(c));
    }
    if (!files.empty()) g.label_names[label] = name;
  }
  if (g.chips.empty()) fail_data("gallery has no subject_<id>/*.pgm images");
  return g;
}

struct Prediction {
  int label = 0;
  double distance = 0;
};

namespace detail {

inline Eigen::VectorXd to_vector(const GrayFrame& g) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(g.pixels.size()));
  for (std::size_t i = 0; i < g.pixels.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = g.pixels[i];
  return v;
}

struct Checked {
  int width, height;
  std::vector<int> labels;
  Eigen::MatrixXd data;  // one column per chip
};

inline Checked check_gallery(const Gallery& g) {
  require(!g.chips.empty(), "gallery is empty");
  Checked c{g.chips[0].pixels.width, g.chips[0].pixels.height, {}, {}};
  require(c.width > 0 && c.height > 0, "gallery chips are empty");
  c.data.resize(Eigen::Index{c.width} * c.height, static_cast<Eigen::Index>(g.chips.size()));
  for (std::size_t i = 0; i < g.chips.size(); ++i) {
    const auto& ch = g.chips[i];
    require(ch.pixels.width == c.width && ch.pixels.height == c.height,
            "gallery chips differ in size");
    require(ch.label.has_value(), "gallery chip without a label");
    c.labels.push_back(*ch.label);
    c.data.col(static_cast<Eigen::Index>(i)) = to_vector(ch.pixels);
  }
  return c;
}

/// Nearest stored column; exact ties go to the lowest label.
inline Prediction nearest(const Eigen::MatrixXd& stored, const std::vector<int>& labels,
                          const Eigen::VectorXd& q) {
  Prediction best{0, std::numeric_limits<double>::infinity()};
  for (Eigen::Index i = 0; i < stored.cols(); ++i) {
    const double d = (stored.col(i) - q).norm();
    const int l = labels[static_cast<std::size_t>(i)];
    if (d < best.distance || (d == best.distance && l < best.label)) best = {l, d};
  }
  return best;
}

/// Top eigenvectors of the covariance of centered columns X via the Gram
/// matrix X^T X. Components with negligible variance are dropped.
inline void gram_pca(const Eigen::MatrixXd& x, int k, Eigen::MatrixXd& basis,
                     Eigen::VectorXd& eigenvalues) {
  const Eigen::MatrixXd gram = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const Eigen::Index n = gram.rows();
  const double top = n > 0 ? std::max(es.eigenvalues()[n - 1], 0.0) : 0.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = n - 1; i >= 0 && static_cast<int>(keep.size()) < k; --i)
    if (es.eigenvalues()[i] > 1e-9 * top && es.eigenvalues()[i] > 1e-12) keep.push_back(i);
  basis.resize(x.rows(), static_cast<Eigen::Index>(keep.size()));
  eigenvalues.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const auto i = keep[j];
    const auto jj = static_cast<Eigen::Index>(j);
    basis.col(jj) = x * es.eigenvectors().col(i) / std::sqrt(es.eigenvalues()[i]);
    // Gram-Schmidt pass against round-off.
    for (Eigen::Index p = 0; p < jj; ++p)
      basis.col(jj) -= basis.col(p).dot(basis.col(jj)) * basis.col(p);
    basis.col(jj).normalize();
    eigenvalues[jj] = es.eigenvalues()[i];
  }
}

}  // namespace detail

/// Linear subspace model shared by EigenFace and FisherFace.
struct SubspaceModel {
  int width = 0, height = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;        // D x k
  Eigen::VectorXd eigenvalues;  // non-increasing
  std::vector<int> labels;
  Eigen::MatrixXd projections;  // k x N
  bool warning = false;         // k clamped or scatter regularized
  std::map<int, std::string> label_names;

  int k() const { return static_cast<int>(basis.cols()); }

  Eigen::VectorXd project(const GrayFrame& chip) const {
    require(chip.width == width && chip.height == height, "chip size does not match model");
    return basis.transpose() * (detail::to_vector(chip) - mean);
  }
};

struct EigenModel : SubspaceModel {};
struct FisherModel : SubspaceModel {};

/// PCA via the N x N Gram matrix of mean-centered chips. k above the
/// number of chips is clamped (warning flag); components with zero
/// variance are not kept, so k() can be smaller than requested.
inline EigenModel train_eigen(const Gallery& g, int k) {
  require(k >= 1, "k must be >= 1");
  auto c = detail::check_gallery(g);
  EigenModel m;
  m.width = c.width;
  m.height = c.height;
  m.label_names = g.label_names;
  const int n = static_cast<int>(c.labels.size());
  if (k > n) {
    k = n;
    m.warning = true;
  }
  m.mean = c.data.rowwise().mean();
  c.data.colwise() -= m.mean;
  detail::gram_pca(c.data, k, m.basis, m.eigenvalues);
  m.labels = c.labels;
  m.projections = m.basis.transpose() * c.data;
  return m;
}

/// Squared reconstruction error of a chip from the first `k` components
/// (all when k < 0).
inline double reconstruction_error(const SubspaceModel& m, const GrayFrame& chip,
                                   int k = -1) {
  require(chip.width == m.width && chip.height == m.height, "chip size does not match model");
  const int kk = k < 0 ? m.k() : std::min(k, m.k());
  const Eigen::VectorXd x = detail::to_vector(chip) - m.mean;
  const auto b = m.basis.leftCols(kk);
  return (x - b * (b.transpose() * x)).squaredNorm();
}

inline Prediction predict_subspace(const SubspaceModel& m, const GrayFrame& chip) {
  return detail::nearest(m.projections, m.labels, m.project(chip));
}

inline Prediction predict_eigen(const EigenModel& m, const FaceChip& chip) {
  return predict_subspace(m, chip.pixels);
}

/// PCA to N - c dimensions, then LDA in that subspace (generalized
/// eigenproblem S_b v = lambda S_w v) keeping at most c - 1 directions.
inline FisherModel train_fisher(const Gallery& g) {
  auto c = detail::check_gallery(g);
  std::map<int, int> counts;
  for (const int l : c.labels) ++counts[l];
  require(counts.size() >= 2, "Fisher training needs >= 2 classes");
  for (const auto& [l, n] : counts)
    require(n >= 2, "Fisher training needs >= 2 chips per class (label " +
                        std::to_string(l) + ")");
  const int n = static_cast<int>(c.labels.size());
  const int nc = static_cast<int>(counts.size());

  FisherModel m;
  m.width = c.width;
  m.height = c.height;
  m.label_names = g.label_names;
  m.mean = c.data.rowwise().mean();
  c.data.colwise() -= m.mean;
  Eigen::MatrixXd wpca;
  Eigen::VectorXd ev;
  detail::gram_pca(c.data, n - nc, wpca, ev);
  const Eigen::MatrixXd y = wpca.transpose() * c.data;  // dim x N
  const Eigen::Index dim = y.rows();
  if (dim == 0) fail_data("gallery has no variance for Fisher training");

  const Eigen::VectorXd mu = y.rowwise().mean();
  Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(dim, dim), sb = sw;
  for (const auto& [label, cnt] : counts) {
    Eigen::VectorXd mc = Eigen::VectorXd::Zero(dim);
    for (int i = 0; i < n; ++i)
      if (c.labels[static_cast<std::size_t>(i)] == label) mc += y.col(i);
    mc /= cnt;
    for (int i = 0; i < n; ++i)
      if (c.labels[static_cast<std::size_t>(i)] == label) {
        const Eigen::VectorXd d = y.col(i) - mc;
        sw += d * d.transpose();
      }
    sb += cnt * (mc - mu) * (mc - mu).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sw_es(sw, Eigen::EigenvaluesOnly);
  const double tr = sw.trace();
  if (sw_es.eigenvalues()[0] <= 1e-12 * std::max(tr, 1e-300)) {
    sw += (1e-6 * tr / double(dim) + 1e-300) * Eigen::MatrixXd::Identity(dim, dim);
    m.warning = true;
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(sb, sw);
  const Eigen::Index out = std::min<Eigen::Index>(nc - 1, dim);
  Eigen::MatrixXd v(dim, out);
  m.eigenvalues.resize(out);
  for (Eigen::Index j = 0; j < out; ++j) {
    v.col(j) = ges.eigenvectors().col(dim - 1 - j);
    m.eigenvalues[j] = ges.eigenvalues()[dim - 1 - j];
  }
  m.basis = wpca * v;
  m.labels = c.labels;
  m.projections = m.basis.transpose() * c.data;
  return m;
}

inline Prediction predict_fisher(const FisherModel& m, const FaceChip& chip) {
  return predict_subspace(m, chip.pixels);
}

// --- LBPH ------------------------------------------------------------------

inline constexpr int kLbpBins = 256;

/// 8-neighbor LBP code per pixel, radius 1, edges replicated. Neighbors are
/// visited clockwise from the top-left; the i-th one sets bit i when it is
/// >= the center.
inline std::vector<std::uint8_t> lbp_codes(const GrayFrame& g) {
  static constexpr std::array<std::array<int, 2>, 8> kOff{
      {{-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}}};
  std::vector<std::uint8_t> out(g.pixels.size());
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      const auto c = g.at(x, y);
      unsigned code = 0;
      for (int i = 0; i < 8; ++i) {
        const int nx = std::clamp(x + kOff[i][0], 0, g.width - 1);
        const int ny = std::clamp(y + kOff[i][1], 0, g.height - 1);
        if (g.at(nx, ny) >= c) code |= 1u << i;
      }
      out[static_cast<std::size_t>(y) * g.width + x] = static_cast<std::uint8_t>(code);
    }
  return out;
}

/// Concatenated 256-bin histograms over a grid_x x grid_y cell partition.
inline std::vector<std::uint32_t> lbp_histogram(const GrayFrame& g, int grid_x = 8,
                                                int grid_y = 8) {
  require(g.width >= grid_x && g.height >= grid_y, "chip smaller than the LBPH grid");
  const auto codes = lbp_codes(g);
  std::vector<std::uint32_t> h(static_cast<std::size_t>(grid_x) * grid_y * kLbpBins, 0);
  for (int y = 0; y < g.height; ++y) {
    const int cy = y * grid_y / g.height;
    for (int x = 0; x < g.width; ++x) {
      const int cx = x * grid_x / g.width;
      const auto cell = static_cast<std::size_t>(cy * grid_x + cx);
      ++h[cell * kLbpBins + codes[static_cast<std::size_t>(y) * g.width + x]];
    }
  }
  return h;
}

inline double chi_square(const std::vector<std::uint32_t>& a,
                         const std::vector<std::uint32_t>& b) {
  require(a.size() == b.size(), "histogram sizes differ");
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double s = double(a[i]) + double(b[i]);
    if (s > 0) d += (double(a[i]) - double(b[i])) * (double(a[i]) - double(b[i])) / s;
  }
  return d;
}

struct LbphModel {
  int width = 0, height = 0;
  int grid_x = 8, grid_y = 8;
  std::vector<int> labels;
  std::vector<std::vector<std::uint32_t>> histograms;
  std::map<int, std::string> label_names;
};

inline LbphModel train_lbph(const Gallery& g, int grid_x = 8, int grid_y = 8) {
  const auto c = detail::check_gallery(g);
  require(grid_x >= 1 && grid_y >= 1, "LBPH grid must be >= 1x1");
  LbphModel m{c.width, c.height, grid_x, grid_y, c.labels, {}, g.label_names};
  for (const auto& ch : g.chips) m.histograms.push_back(lbp_histogram(ch.pixels, grid_x, grid_y));
  return m;
}

inline Prediction predict_lbph(const LbphModel& m, const FaceChip& chip) {
  require(chip.pixels.width == m.width && chip.pixels.height == m.height,
          "chip size does not match model");
  const auto h = lbp_histogram(chip.pixels, m.grid_x, m.grid_y);
  Prediction best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < m.histograms.size(); ++i) {
    const double d = chi_square(m.histograms[i], h);
    if (d < best.distance || (d == best.distance && m.labels[i] < best.label))
      best = {m.labels[i], d};
  }
  return best;
}

// --- common interface ---------------------------------------------------------

enum class Method { eigen, fisher, lbph };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::eigen: return "eigen";
    case Method::fisher: return "fisher";
    case Method::lbph: return "lbph";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "eigen") return Method::eigen;
  if (s == "fisher") return Method::fisher;
  if (s == "lbph") return Method::lbph;
  throw Error(ErrorKind::invalid_argument,
              "unknown recognizer '" + std::string(s) + "' (eigen|fisher|lbph)");
}

using Model = std::variant<EigenModel, FisherModel, LbphModel>;

struct TrainOptions {
  int eigen_k = 80;
  int lbph_grid = 8;
};

inline Model train(Method method, const Gallery& g, const TrainOptions& o = {}) {
  switch (method) {
    case Method::eigen: return train_eigen(g, o.eigen_k);
    case Method::fisher: return train_fisher(g);
    case Method::lbph: return train_lbph(g, o.lbph_grid, o.lbph_grid);
  }
  throw Error(ErrorKind::invalid_argument, "unknown recognizer");
}

inline Method method_of(const Model& m) {
  return static_cast<Method>(m.index());
}

inline Prediction predict(const Model& m, const FaceChip& chip) {
  return std::visit(
      [&](const auto& x) -> Prediction {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, LbphModel>)
          return predict_lbph(x, chip);
        else
          return predict_subspace(x, chip.pixels);
      },
      m);
}

inline std::pair<int, int> chip_size(const Model& m) {
  return std::visit([](const auto& x) { return std::pair{x.width, x.height}; }, m);
}

inline const std::map<int, std::string>& label_names(const Model& m) {
  return std::visit([](const auto& x) -> const std::map<int, std::string>& {
    return x.label_names;
  }, m);
}

/// Fraction of probes whose predicted label equals their own.
inline double recognition_accuracy(const Model& m, const std::vector<FaceChip>& probes) {
  require(!probes.empty(), "no probes");
  int ok = 0;
  for (const auto& p : probes) {
    require(p.label.has_value(), "probe chip without a label");
    ok += predict(m, p).label == *p.label;
  }
  return double(ok) / double(probes.size());
}

// --- serialization -----------------------------------------------------------

namespace detail {

inline void put_matrix(io::BinaryWriter& w, const Eigen::MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) w.put<double>(m(i, j));
}

inline Eigen::MatrixXd get_matrix(io::BinaryReader& r, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = r.get<double>();
  return m;
}

// Caps element counts read from a file before allocating.
inline std::uint32_t get_count(io::BinaryReader& r, std::uint64_t limit, const char* what) {
  const auto n = r.get<std::uint32_t>();
  if (n > limit) fail_data(std::string("implausible ") + what + " in model file");
  return n;
}

}  // namespace detail

inline std::string serialize(const Model& model) {
  io::BinaryWriter w;
  w.put_bytes("MSRM1");
  const char tag = "EFL"[model.index()];
  w.put<std::uint8_t>(static_cast<std::uint8_t>(tag));
  const auto [cw, chh] = chip_size(model);
  w.put<std::int32_t>(cw);
  w.put<std::int32_t>(chh);
  const auto& names = label_names(model);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(names.size()));
  for (const auto& [l, n] : names) {
    w.put<std::int32_t>(l);
    w.put_string(n);
  }
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LbphModel>) {
          w.put<std::int32_t>(m.grid_x);
          w.put<std::int32_t>(m.grid_y);
          w.put<std::uint32_t>(static_cast<std::uint32_t>(m.labels.size()));
          for (const int l : m.labels) w.put<std::int32_t>(l);
          for (const auto& h : m.histograms)
            for (const auto v : h) w.put<std::uint32_t>(v);
        } else {
          w.put<std::uint32_t>(static_cast<std::uint32_t>(m.mean.size()));
          w.put<std::uint32_t>(static_cast<std::uint32_t>(m.basis.cols()));
          detail::put_matrix(w, m.mean);
          detail::put_matrix(w, m.basis);
          detail::put_matrix(w, m.eigenvalues);
          w.put<std::uint32_t>(static_cast<std::uint32_t>(m.labels.size()));
          for (const int l : m.labels) w.put<std::int32_t>(l);
          detail::put_matrix(w, m.projections);
        }
      },
      model);
  return w.bytes();
}

inline Model deserialize_model(std::string_view bytes) {
  io::BinaryReader r(bytes);
  r.expect_magic("MSRM1");
  const char tag = static_cast<char>(r.get<std::uint8_t>());
  const int cw = r.get<std::int32_t>(), chh = r.get<std::int32_t>();
  if (cw <= 0 || chh <= 0 || cw > 4096 || chh > 4096) fail_data("bad chip size in model file");
  const std::uint64_t cap = bytes.size();
  std::map<int, std::string> names;
  const auto nn = detail::get_count(r, cap, "label-name count");
  for (std::uint32_t i = 0; i < nn; ++i) {
    const int l = r.get<std::int32_t>();
    names[l] = r.get_string();
  }
  auto read_labels = [&](std::vector<int>& labels) {
    const auto n = detail::get_count(r, cap / 4, "chip count");
    for (std::uint32_t i = 0; i < n; ++i) labels.push_back(r.get<std::int32_t>());
  };
  Model out;
  if (tag == 'L') {
    LbphModel m;
    m.width = cw;
    m.height = chh;
    m.label_names = names;
    m.grid_x = r.get<std::int32_t>();
    m.grid_y = r.get<std::int32_t>();
    if (m.grid_x < 1 || m.grid_y < 1 || m.grid_x > cw || m.grid_y > chh)
      fail_data("bad LBPH grid in model file");
    read_labels(m.labels);
    const std::size_t hn = static_cast<std::size_t>(m.grid_x) * m.grid_y * kLbpBins;
    if (hn * 4 * m.labels.size() > cap) fail_data("truncated binary file");
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
      std::vector<std::uint32_t> h(hn);
      for (auto& v : h) v = r.get<std::uint32_t>();
      m.histograms.push_back(std::move(h));
    }
    out = std::move(m);
  } else if (tag == 'E' || tag == 'F') {
    SubspaceModel m;
    m.width = cw;
    m.height = chh;
    m.label_names = names;
    const auto d = r.get<std::uint32_t>();
    const auto k = r.get<std::uint32_t>();
    if (d != static_cast<std::uint32_t>(cw) * static_cast<std::uint32_t>(chh))
      fail_data("model dimension does not match chip size");
    if ((std::uint64_t{d} * k + d) * 8 > cap) fail_data("truncated binary file");
    m.mean = detail::get_matrix(r, d, 1);
    m.basis = detail::get_matrix(r, d, k);
    m.eigenvalues = detail::get_matrix(r, k, 1);
    read_labels(m.labels);
    if (std::uint64_t{k} * m.labels.size() * 8 > cap) fail_data("truncated binary file");
    m.projections = detail::get_matrix(r, k, static_cast<Eigen::Index>(m.labels.size()));
    if (tag == 'E')
      out = EigenModel{m};
    else
      out = FisherModel{m};
  } else {
    fail_data("unknown recognizer tag in model file");
  }
  if (!r.at_end()) fail_data("trailing bytes in model file");
  return out;
}

}  // namespace msface::recognize
