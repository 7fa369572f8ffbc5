// msface command-line tool.
//
// Exit codes: 0 success, 1 usage error, 2 data error.
// Settings resolve as defaults < --config file < MSFACE_SEED < flags.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msface/msface.hpp"

namespace fs = std::filesystem;
using namespace msface;

namespace {

// --- configuration ------------------------------------------------------------

struct Config {
  double threshold_deg = 15;
  int subsample = 15;
  std::uint64_t seed = 1;
  int jobs = 1;
  int chip_width = recognize::kChipWidth;
  int chip_height = recognize::kChipHeight;
  int eigen_k = 80;
  int lbph_grid = 8;
  double fever_threshold_c = 38.0;
  std::string calibration;  // CSV from calibrate-ir; empty: reference line
  std::string roi_map;      // correspondence CSV; empty: identity
  double scale_factor = 1.1;
  int min_neighbors = 3;
  double k_head_mm = 300;
  forest::ForestParams forest;
  bool patch_size_set = false;
  forest::EstimateParams estimate;
  detect::CascadeParams cascade;
};

/// Binds one setting to a config-file key and a flag.
struct Setting {
  std::string key;
  std::string flag;
  std::string help;
  std::function<void(Config&, const std::string&)> set;
};

template <class T>
T parse_value(const std::string& key, const std::string& v) {
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_floating_point_v<T>) {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return static_cast<T>(d);
    } else {
      std::size_t used = 0;
      const long long i = std::stoll(v, &used);
      if (used != v.size() || (i < 0 && std::is_unsigned_v<T>)) throw std::invalid_argument(v);
      return static_cast<T>(i);
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::invalid_argument, "bad value for " + key + ": '" + v + "'");
  }
}

template <class T>
Setting setting(std::string key, std::string flag, std::string help, T Config::*field) {
  return {key, std::move(flag), std::move(help),
          [key, field](Config& c, const std::string& v) { c.*field = parse_value<T>(key, v); }};
}

template <class S, class T>
Setting nested(std::string key, std::string flag, std::string help, S Config::*outer,
               T S::*field) {
  return {key, std::move(flag), std::move(help), [key, outer, field](Config& c, const std::string& v) {
            (c.*outer).*field = parse_value<T>(key, v);
          }};
}

std::vector<Setting> all_settings() {
  std::vector<Setting> s{
      setting("threshold_deg", "--threshold", "frontal gate threshold in degrees", &Config::threshold_deg),
      setting("subsample", "--subsample", "process every n-th frame", &Config::subsample),
      setting("seed", "--seed", "random seed", &Config::seed),
      setting("jobs", "--jobs", "sequences processed in parallel", &Config::jobs),
      setting("chip_width", "--chip-width", "face chip width", &Config::chip_width),
      setting("chip_height", "--chip-height", "face chip height", &Config::chip_height),
      setting("eigen_k", "--eigen-k", "Eigenfaces components", &Config::eigen_k),
      setting("lbph_grid", "--lbph-grid", "LBPH grid cells per side", &Config::lbph_grid),
      setting("fever_threshold_c", "--fever-threshold", "fever threshold in degC",
              &Config::fever_threshold_c),
      setting("calibration", "--calibration", "IR calibration CSV", &Config::calibration),
      setting("roi_map", "--roi-map", "RGB to IR correspondence CSV", &Config::roi_map),
      setting("scale_factor", "--scale-factor", "detector pyramid step", &Config::scale_factor),
      setting("min_neighbors", "--min-neighbors", "detector box grouping threshold",
              &Config::min_neighbors),
      setting("k_head_mm", "--k-head", "head size in mm for the detection ROI", &Config::k_head_mm),
      nested("forest.n_trees", "--trees", "forest trees", &Config::forest, &forest::ForestParams::n_trees),
      nested("forest.max_depth", "--max-depth", "forest tree depth", &Config::forest,
             &forest::ForestParams::max_depth),
      nested("forest.min_samples", "--min-samples", "forest leaf size", &Config::forest,
             &forest::ForestParams::min_samples),
      nested("forest.n_candidate_tests", "--candidate-tests", "split tests tried per node",
             &Config::forest, &forest::ForestParams::n_candidate_tests),
      nested("forest.patches_per_frame", "--patches-per-frame", "head patches per training frame",
             &Config::forest, &forest::ForestParams::patches_per_frame),
      nested("estimate.stride", "--estimate-stride", "pose estimation patch stride (0: patch/2)",
             &Config::estimate, &forest::EstimateParams::stride),
      nested("estimate.min_votes", "--min-votes", "votes needed to report a head", &Config::estimate,
             &forest::EstimateParams::min_votes),
      nested("cascade.n_stages", "--stages", "cascade stages", &Config::cascade,
             &detect::CascadeParams::n_stages),
      nested("cascade.stumps_per_stage", "--stumps", "stumps per cascade stage", &Config::cascade,
             &detect::CascadeParams::stumps_per_stage),
      nested("cascade.stage_fpr_target", "--stage-fpr", "per-stage false positive target",
             &Config::cascade, &detect::CascadeParams::stage_fpr_target),
      nested("cascade.min_stage_tpr", "--stage-tpr", "per-stage minimum hit rate", &Config::cascade,
             &detect::CascadeParams::min_stage_tpr),
      nested("cascade.features_per_stage", "--features", "Haar features sampled per stage",
             &Config::cascade, &detect::CascadeParams::features_per_stage),
      nested("cascade.max_negatives_per_stage", "--max-negatives", "negative windows per stage",
             &Config::cascade, &detect::CascadeParams::max_negatives_per_stage),
  };
  s.push_back({"forest.patch_size", "--patch", "forest patch side in pixels (default 80 at 640 px width)",
               [](Config& c, const std::string& v) {
                 c.forest.patch_size = parse_value<int>("forest.patch_size", v);
                 c.patch_size_set = true;
               }});
  return s;
}

void validate(const Config& c) {
  require(c.threshold_deg > 0 && c.threshold_deg <= 90, "threshold must be in (0, 90]");
  require(c.subsample >= 1, "subsample must be >= 1");
  require(c.jobs >= 1, "jobs must be >= 1");
  require(c.chip_width >= 8 && c.chip_height >= 8, "chip size must be at least 8x8");
  require(c.scale_factor > 1, "scale factor must be > 1");
  require(c.min_neighbors >= 1, "min neighbors must be >= 1");
  require(c.k_head_mm > 0, "k_head must be > 0");
}

std::string format_config(const Config& c) {
  std::ostringstream o;
  o << "threshold_deg=" << io::fmt(c.threshold_deg) << "\nsubsample=" << c.subsample
    << "\nseed=" << c.seed << "\njobs=" << c.jobs << "\nchip_width=" << c.chip_width
    << "\nchip_height=" << c.chip_height << "\neigen_k=" << c.eigen_k
    << "\nlbph_grid=" << c.lbph_grid << "\nfever_threshold_c=" << io::fmt(c.fever_threshold_c)
    << "\ncalibration=" << c.calibration << "\nroi_map=" << c.roi_map
    << "\nscale_factor=" << io::fmt(c.scale_factor) << "\nmin_neighbors=" << c.min_neighbors
    << "\nk_head_mm=" << io::fmt(c.k_head_mm) << "\nforest.n_trees=" << c.forest.n_trees
    << "\nforest.max_depth=" << c.forest.max_depth
    << "\nforest.min_samples=" << c.forest.min_samples
    << "\nforest.n_candidate_tests=" << c.forest.n_candidate_tests
    << "\nforest.patch_size=" << c.forest.patch_size
    << "\nforest.patches_per_frame=" << c.forest.patches_per_frame
    << "\nestimate.stride=" << c.estimate.stride
    << "\nestimate.min_votes=" << c.estimate.min_votes
    << "\ncascade.n_stages=" << c.cascade.n_stages
    << "\ncascade.stumps_per_stage=" << c.cascade.stumps_per_stage
    << "\ncascade.stage_fpr_target=" << io::fmt(c.cascade.stage_fpr_target)
    << "\ncascade.min_stage_tpr=" << io::fmt(c.cascade.min_stage_tpr)
    << "\ncascade.features_per_stage=" << c.cascade.features_per_stage
    << "\ncascade.max_negatives_per_stage=" << c.cascade.max_negatives_per_stage << '\n';
  return o.str();
}

// --- helpers ------------------------------------------------------------------------

/// Writes to --out atomically, or to stdout.
void emit(const std::string& out, const std::string& text) {
  if (out.empty())
    std::cout << text << std::flush;
  else
    io::write_file_atomic(out, text);
}

void info(const std::string& line) { std::cerr << line << '\n'; }

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : io::split(s, ',')) out.push_back(parse_value<double>("list", io::trim(part)));
  return out;
}

DetBox parse_box(const std::string& s) {
  const auto v = parse_list(s);
  require(v.size() == 4, "box must be x,y,w,h");
  return {v[0], v[1], v[2], v[3], 0};
}

thermal::ThermalCalibration load_calibration(const Config& c) {
  if (c.calibration.empty()) return thermal::reference_calibration();
  return thermal::parse_calibration_csv(io::read_file(c.calibration));
}

thermal::RoiMap load_roi_map(const Config& c) {
  if (c.roi_map.empty()) return {};
  return thermal::fit_roi_map(thermal::parse_correspondences(io::read_file(c.roi_map)));
}

detect::HaarParams haar_params(const Config& c) {
  detect::HaarParams h;
  h.scale_factor = c.scale_factor;
  h.min_neighbors = c.min_neighbors;
  return h;
}

forest::PoseForest load_forest(const std::string& p) {
  return forest::deserialize(io::read_file(p));
}

detect::Cascade load_cascade(const std::string& p) {
  return detect::deserialize_cascade(io::read_file(p));
}

std::vector<fs::path> pgm_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail_data("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// Builds a directory next to `dir` and renames it into place at the end, so
/// a failed run leaves nothing behind.
class StagedDir {
 public:
  explicit StagedDir(fs::path dir) : final_(std::move(dir)) {
    if (fs::exists(final_) && !fs::is_directory(final_))
      fail_io("output exists and is not a directory: " + final_.string());
    tmp_ = final_;
    tmp_ += ".tmp" + std::to_string(std::random_device{}());
    fs::create_directories(tmp_);
  }
  ~StagedDir() {
    std::error_code ec;
    if (!done_) fs::remove_all(tmp_, ec);
  }
  const fs::path& path() const { return tmp_; }
  void commit() {
    fs::remove_all(final_);
    fs::rename(tmp_, final_);
    done_ = true;
  }

 private:
  fs::path final_, tmp_;
  bool done_ = false;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- subcommands -------------------------------------------------------------------

struct SynthOpts {
  std::string out, kind = "sequence";
  int frames = 31, subject = 1, subjects = 10, per = 5;
  double yaw_min = -75, yaw_max = 75, pitch_min = 0, pitch_max = 0;
  double temp = 33.727, scale = 1.0, jitter = 0, depth_noise = 0, max_angle = 4;
  std::int64_t period_us = 33333;
  bool random = false, no_ir = false;
};

int cmd_synth(const Config& c, const SynthOpts& o) {
  const auto k = kinect_vga().scaled(o.scale);
  StagedDir dir(o.out);
  if (o.kind == "sequence") {
    synth::SynthSequenceSpec s;
    s.subject_id = o.subject;
    s.frame_count = o.frames;
    s.yaw_sweep_deg = {o.yaw_min, o.yaw_max};
    s.pitch_sweep_deg = {o.pitch_min, o.pitch_max};
    s.frame_period_us = o.period_us;
    s.forehead_temp_c = o.temp;
    s.seed = c.seed;
    s.random_poses = o.random;
    s.center_jitter_mm = o.jitter;
    s.depth_noise_mm = o.depth_noise;
    s.with_ir = !o.no_ir;
    synth::synth_sequence(s, k, dir.path());
    info("frames=" + std::to_string(o.frames));
  } else if (o.kind == "gallery") {
    require(o.subjects >= 1 && o.per >= 1, "subjects and per must be >= 1");
    synth::SynthSequenceSpec s;
    s.with_ir = false;
    for (int id = o.subject; id < o.subject + o.subjects; ++id) {
      const fs::path sd = dir.path() / ("subject_" + std::to_string(id));
      fs::create_directories(sd);
      for (int i = 0; i < o.per; ++i) {
        const double a = o.per == 1 ? 0.0 : -o.max_angle + 2 * o.max_angle * i / (o.per - 1);
        const auto f = synth::render_frame(s, k, make_pose(s.head_center, a, -a / 2), id,
                                           synth::mix_seed(c.seed, id * 1000 + i), 0);
        const auto chip = recognize::normalize_chip(f.gray, f.face_box, c.chip_width, c.chip_height);
        pgm::write8(sd / synth::frame_name("chip", i, "pgm"), chip.pixels);
      }
    }
    info("subjects=" + std::to_string(o.subjects) + " chips=" + std::to_string(o.subjects * o.per));
  } else {
    throw Error(ErrorKind::invalid_argument, "unknown synth kind '" + o.kind + "'");
  }
  dir.commit();
  return 0;
}

struct TrainPoseOpts {
  std::string out;
  std::vector<std::string> manifests;
  int synthetic = 0;
  double yaw_max = 75, pitch_max = 30, scale = 1.0;
};

int cmd_train_pose(Config c, const TrainPoseOpts& o) {
  require(o.synthetic > 0 || !o.manifests.empty(), "give --manifest or --synthetic");
  std::vector<forest::TrainingFrame> frames;
  std::optional<CameraIntrinsics> k;
  for (const auto& mp : o.manifests) {
    const auto m = load_manifest(mp);
    const auto mk = load_intrinsics(m);
    if (k && (k->width != mk.width || k->height != mk.height))
      fail_data("manifests use different image sizes");
    k = mk;
    for (const auto* r : m.rows_of(Stream::depth)) {
      const auto depth_path = m.resolve(r->path);
      const auto pose_path = pose_path_for(depth_path);
      if (!fs::exists(pose_path)) fail_data("missing pose file " + pose_path.string());
      frames.push_back({pgm::read_depth(depth_path), parse_pose(io::read_file(pose_path))});
    }
  }
  if (o.synthetic > 0) {
    const auto sk = kinect_vga().scaled(o.scale);
    if (k && (k->width != sk.width || k->height != sk.height))
      fail_data("synthetic frames and manifests use different image sizes");
    k = sk;
    synth::SynthSequenceSpec s;
    s.frame_count = o.synthetic;
    s.random_poses = true;
    s.yaw_sweep_deg = {-o.yaw_max, o.yaw_max};
    s.pitch_sweep_deg = {-o.pitch_max, o.pitch_max};
    s.center_jitter_mm = 50;
    s.depth_noise_mm = 2;
    s.seed = c.seed;
    for (auto& r : synth::synth_depth_frames(s, *k)) frames.push_back({std::move(r.depth), r.pose});
  }
  if (!c.patch_size_set)
    c.forest.patch_size = std::max(8, static_cast<int>(std::lround(80.0 * k->width / 640.0)));
  c.forest.seed = c.seed;
  const auto t0 = std::chrono::steady_clock::now();
  const auto f = forest::train(frames, *k, c.forest, nullptr, c.jobs);
  io::write_file_atomic(o.out, forest::serialize(f));
  info("frames=" + std::to_string(frames.size()) + " trees=" + std::to_string(f.trees.size()) +
       " patch=" + std::to_string(f.patch_size) + " train_s=" + io::fmt(seconds_since(t0)));
  return 0;
}

struct TrainCascadeOpts {
  std::string out, positives, negatives;
  bool synthetic = false;
};

int cmd_train_cascade(Config c, const TrainCascadeOpts& o) {
  std::vector<GrayFrame> pos, neg;
  if (o.synthetic) {
    synth::WindowCorpusSpec ws;
    ws.seed = c.seed;
    auto corpus = synth::window_corpus(ws);
    pos = std::move(corpus.positives);
    neg = std::move(corpus.negatives);
  } else {
    require(!o.positives.empty() && !o.negatives.empty(),
            "give --positives and --negatives, or --synthetic");
    for (const auto& p : pgm_files(o.positives)) pos.push_back(pgm::read_gray(p));
    for (const auto& p : pgm_files(o.negatives)) neg.push_back(pgm::read_gray(p));
  }
  c.cascade.seed = c.seed;
  detect::CascadeTrainReport rep;
  const auto cascade = detect::train_cascade(pos, neg, c.cascade, &rep);
  io::write_file_atomic(o.out, detect::serialize(cascade));
  std::ostringstream s;
  s << "stage,fpr,tpr\n";
  for (std::size_t i = 0; i < rep.stage_fpr.size(); ++i)
    s << i << ',' << io::fmt(rep.stage_fpr[i]) << ',' << io::fmt(rep.stage_tpr[i]) << '\n';
  std::cout << s.str();
  info("positives=" + std::to_string(pos.size()) + " negative_windows=" +
       std::to_string(rep.negative_windows) + " stages=" + std::to_string(cascade.stages.size()));
  if (cascade.warning) info("warning: stage false positive target not reached");
  return 0;
}

struct EnrollOpts {
  std::string gallery, method = "lbph", out;
};

int cmd_enroll(const Config& c, const EnrollOpts& o) {
  const auto g = recognize::load_gallery(o.gallery, c.chip_width, c.chip_height);
  recognize::TrainOptions to;
  to.eigen_k = c.eigen_k;
  to.lbph_grid = c.lbph_grid;
  const auto m = recognize::train(recognize::parse_method(o.method), g, to);
  io::write_file_atomic(o.out, recognize::serialize(m));
  info("method=" + o.method + " subjects=" + std::to_string(g.label_names.size()) +
       " chips=" + std::to_string(g.chips.size()));
  if (const auto* e = std::get_if<recognize::EigenModel>(&m); e && e->warning)
    info("warning: " + std::to_string(e->k()) + " components kept");
  if (const auto* f = std::get_if<recognize::FisherModel>(&m); f && f->warning)
    info("warning: within-class scatter was singular and regularized");
  return 0;
}

struct GateOpts {
  std::string manifest, forest, out, sweep;
  bool truth = false;
};

/// Offset angle per depth frame: ground-truth pose files or forest estimates.
std::vector<double> frame_offsets(const Config& c, const GateOpts& o) {
  const auto m = load_manifest(o.manifest);
  std::vector<double> off;
  if (o.truth) {
    for (const auto* r : m.rows_of(Stream::depth)) {
      const auto pp = pose_path_for(m.resolve(r->path));
      if (!fs::exists(pp)) fail_data("missing pose file " + pp.string());
      off.push_back(offset_angle(parse_pose(io::read_file(pp)).direction));
    }
    return off;
  }
  require(!o.forest.empty(), "give --forest or --truth");
  const auto f = load_forest(o.forest);
  const auto k = load_intrinsics(m);
  for (const auto* r : m.rows_of(Stream::depth)) {
    const auto pose = forest::estimate(f, pgm::read_depth(m.resolve(r->path)), k, c.estimate);
    off.push_back(pose ? offset_angle(pose->direction) : 180.0);
  }
  return off;
}

int cmd_gate(const Config& c, const GateOpts& o) {
  const auto off = frame_offsets(c, o);
  std::ostringstream s;
  if (!o.sweep.empty()) {
    auto th = parse_list(o.sweep);
    for (const double t : th) require(t >= 0 && t <= 180, "sweep thresholds must be in [0, 180]");
    std::sort(th.begin(), th.end());
    s << "threshold_deg,frames_accepted\n";
    for (const double t : th)
      s << io::fmt(t) << ','
        << std::count_if(off.begin(), off.end(), [&](double a) { return within_threshold(a, t); })
        << '\n';
  } else {
    s << "frame,offset_deg,accepted\n";
    for (std::size_t i = 0; i < off.size(); ++i)
      s << i << ',' << io::fmt(off[i]) << ',' << (within_threshold(off[i], c.threshold_deg) ? 1 : 0)
        << '\n';
  }
  emit(o.out, s.str());
  return 0;
}

struct DetectOpts {
  std::string cascade, manifest, image, forest, out;
};

int cmd_detect(const Config& c, const DetectOpts& o) {
  const auto cascade = load_cascade(o.cascade);
  const auto hp = haar_params(c);
  detect::DetectorCounters counters;
  std::ostringstream s;
  s << "frame,x,y,w,h,score\n";
  auto put = [&](std::size_t frame, const std::vector<DetBox>& boxes) {
    for (const auto& b : boxes)
      s << frame << ',' << io::fmt(b.x) << ',' << io::fmt(b.y) << ',' << io::fmt(b.w) << ','
        << io::fmt(b.h) << ',' << io::fmt(b.score) << '\n';
  };
  if (!o.image.empty()) {
    put(0, detect::detect_haar(pgm::read_gray(o.image), cascade, hp, &counters));
  } else {
    require(!o.manifest.empty(), "give --image or --manifest");
    const auto m = load_manifest(o.manifest);
    if (o.forest.empty()) {
      const auto rows = m.rows_of(Stream::gray);
      for (std::size_t i = 0; i < rows.size(); ++i)
        put(i, detect::detect_haar(pgm::read_gray(m.resolve(rows[i]->path)), cascade, hp, &counters));
    } else {
      const auto f = load_forest(o.forest);
      const auto k = load_intrinsics(m);
      detect::DhpParams dp;
      dp.threshold_deg = c.threshold_deg;
      dp.k_head_mm = c.k_head_mm;
      dp.haar = hp;
      dp.estimate = c.estimate;
      for (const auto& t : pipeline::sync_streams(m).triples)
        put(static_cast<std::size_t>(t.index),
            detect::detect_dhp(t.depth, t.gray, f, cascade, k, dp, &counters).boxes);
    }
  }
  emit(o.out, s.str());
  info("detector_invocations=" + std::to_string(counters.invocations.load()));
  return 0;
}

struct RecognizeOpts {
  std::string model, probes, out;
  std::vector<std::string> images;
};

int cmd_recognize(const RecognizeOpts& o) {
  const auto m = recognize::deserialize_model(io::read_file(o.model));
  const auto [w, h] = recognize::chip_size(m);
  const auto& names = recognize::label_names(m);
  auto name_of = [&](int label) {
    const auto it = names.find(label);
    return it == names.end() ? std::string() : it->second;
  };
  std::ostringstream s;
  if (!o.probes.empty()) {
    const auto g = recognize::load_gallery(o.probes, w, h);
    s << "index,true_label,label,name,distance\n";
    int ok = 0;
    for (std::size_t i = 0; i < g.chips.size(); ++i) {
      const auto p = recognize::predict(m, g.chips[i]);
      const int truth = *g.chips[i].label;
      ok += p.label == truth;
      s << i << ',' << truth << ',' << p.label << ',' << name_of(p.label) << ','
        << io::fmt(p.distance) << '\n';
    }
    info("accuracy=" + io::fmt(g.chips.empty() ? 0.0 : double(ok) / double(g.chips.size())));
  } else {
    require(!o.images.empty(), "give --image or --probes");
    s << "image,label,name,distance\n";
    for (const auto& path : o.images) {
      const auto img = pgm::read_gray(path);
      recognize::FaceChip chip;
      if (img.width == w && img.height == h)
        chip.pixels = img;
      else
        chip = recognize::normalize_chip(img, {0, 0, double(img.width), double(img.height), 0}, w, h);
      const auto p = recognize::predict(m, chip);
      s << path << ',' << p.label << ',' << name_of(p.label) << ',' << io::fmt(p.distance) << '\n';
    }
  }
  emit(o.out, s.str());
  return 0;
}

struct VerifyOpts {
  std::string scores, gallery, curve, scores_out, out, far = "0.001,0.01,0.1";
  bool similarity = false;
  int n_enroll = 3;
};

int cmd_verify(const Config& c, const VerifyOpts& o) {
  verify::ScoreSet s;
  if (!o.scores.empty()) {
    s = verify::parse_scores_csv(io::read_file(o.scores), o.similarity ? verify::Polarity::similarity
                                                                       : verify::Polarity::distance);
  } else {
    require(!o.gallery.empty(), "give --scores or --gallery");
    const auto g = recognize::load_gallery(o.gallery, c.chip_width, c.chip_height);
    std::map<int, verify::SubjectChips> by;
    for (const auto& chip : g.chips) {
      auto& sc = by[*chip.label];
      sc.subject = *chip.label;
      sc.chips.push_back(chip);
    }
    std::vector<verify::SubjectChips> subjects;
    for (auto& [id, sc] : by) subjects.push_back(std::move(sc));
    const auto r = verify::enrollment_protocol(subjects, o.n_enroll);
    for (const int id : r.excluded) info("excluded subject " + std::to_string(id));
    s = r.scores;
  }
  const auto rep = verify::make_report(s, parse_list(o.far));
  if (!o.curve.empty()) io::write_file_atomic(o.curve, verify::curve_csv(rep.curve));
  if (!o.scores_out.empty()) io::write_file_atomic(o.scores_out, verify::scores_csv(s));
  emit(o.out, verify::format_report(rep));
  return 0;
}

struct CalibrateOpts {
  std::string points, out;
};

int cmd_calibrate(const CalibrateOpts& o) {
  const auto cal = thermal::fit_calibration(thermal::parse_calibration_points(io::read_file(o.points)));
  const auto csv = thermal::format_calibration_csv(cal);
  if (!o.out.empty()) io::write_file_atomic(o.out, csv);
  std::cout << csv;
  return 0;
}

struct TempOpts {
  std::string ir, roi, box, out;
};

int cmd_temp(const Config& c, const TempOpts& o) {
  const auto ir = pgm::read_ir(o.ir);
  Rect roi;
  if (!o.roi.empty()) {
    const auto v = parse_list(o.roi);
    require(v.size() == 4, "roi must be x,y,w,h");
    roi = {int(v[0]), int(v[1]), int(v[2]), int(v[3])};
  } else {
    require(!o.box.empty(), "give --roi or --box");
    roi = thermal::forehead_roi(parse_box(o.box), load_roi_map(c), ir.width, ir.height);
  }
  const auto r = thermal::temp_of_roi(ir, roi, load_calibration(c));
  const auto fever = thermal::fever_check(r.temp_c, c.fever_threshold_c);
  std::ostringstream s;
  s << "roi=" << roi.x << ',' << roi.y << ',' << roi.w << ',' << roi.h << '\n'
    << "mean_intensity=" << io::fmt(r.mean_intensity) << '\n'
    << "temp_c=" << io::fmt(r.temp_c) << '\n'
    << "blood_flow=" << io::fmt(r.blood_flow) << '\n'
    << "fever=" << (fever ? "true" : "false") << '\n';
  if (fever)
    for (const auto& m : pipeline::protocol_messages({{pipeline::FindingKind::fever, r.temp_c, 0, {}}}))
      s << m.text << '\n';
  emit(o.out, s.str());
  return 0;
}

struct BenchOpts {
  std::vector<std::string> manifests;
  std::string forest, cascade, model, csv, results, out;
};

int cmd_bench(const Config& c, const BenchOpts& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto f = load_forest(o.forest);
  const double overhead = seconds_since(t0);
  const auto cascade = load_cascade(o.cascade);
  std::optional<recognize::Model> rec;
  if (!o.model.empty()) rec = recognize::deserialize_model(io::read_file(o.model));
  const pipeline::Models models{&f, &cascade, rec ? &*rec : nullptr};

  std::vector<pipeline::PipelineConfig> cfgs;
  for (const auto& mp : o.manifests) {
    const auto m = load_manifest(mp);
    pipeline::PipelineConfig pc;
    pc.intrinsics = load_intrinsics(m);
    pc.subsample = c.subsample;
    pc.threshold_deg = c.threshold_deg;
    pc.k_head_mm = c.k_head_mm;
    pc.haar = haar_params(c);
    pc.estimate = c.estimate;
    if (rec) std::tie(pc.chip_width, pc.chip_height) = recognize::chip_size(*rec);
    pc.ir_calibration = load_calibration(c);
    pc.roi_map = load_roi_map(c);
    pc.fever_threshold_c = c.fever_threshold_c;
    pc.subject_id = m.meta.subject_id;
    cfgs.push_back(pc);
  }
  // One task per video; at most `jobs` run at once.
  const std::size_t n = o.manifests.size();
  std::vector<pipeline::RunResult> tr(n), pr(n);
  auto work = [&](std::size_t v) {
    const auto triples = pipeline::sync_streams(load_manifest(o.manifests[v])).triples;
    tr[v] = pipeline::run_traditional(triples, models, cfgs[v]);
    pr[v] = pipeline::run_proposed(triples, models, cfgs[v]);
  };
  for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(c.jobs)) {
    std::vector<std::future<void>> batch;
    for (std::size_t v = b; v < std::min(n, b + static_cast<std::size_t>(c.jobs)); ++v)
      batch.push_back(std::async(c.jobs > 1 ? std::launch::async : std::launch::deferred, work, v));
    for (auto& fu : batch) fu.get();
  }
  const auto rep = pipeline::make_bench_report(tr, pr, overhead);
  if (!o.csv.empty()) io::write_file_atomic(o.csv, pipeline::bench_csv(rep));
  if (!o.results.empty()) {
    std::string all;
    for (std::size_t v = 0; v < n; ++v)
      all += "video " + o.manifests[v] + '\n' + pipeline::format_results(tr[v]) +
             pipeline::format_results(pr[v]);
    io::write_file_atomic(o.results, all);
  }
  std::string text = pipeline::bench_text(rep);
  for (std::size_t v = 0; v < n; ++v) {
    if (!cfgs[v].subject_id) continue;
    for (const auto* r : {&tr[v], &pr[v]})
      if (const auto a = r->accuracy(*cfgs[v].subject_id))
        text += "video" + std::to_string(v) + '.' + pipeline::to_string(r->method) +
                ".accuracy=" + io::fmt(*a) + '\n';
  }
  emit(o.out, text);
  return 0;
}

int cmd_protocol(const std::vector<std::string>& findings, const std::string& out) {
  std::vector<pipeline::Finding> fs;
  for (const auto& f : findings) {
    const auto colon = f.find(':');
    const std::string kind = f.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : f.substr(colon + 1);
    if (kind == "fever")
      fs.push_back({pipeline::FindingKind::fever, arg.empty() ? 0.0 : parse_value<double>("fever", arg), 0, {}});
    else if (kind == "appearance")
      fs.push_back({pipeline::FindingKind::appearance_anomaly, 0, 0, arg});
    else
      throw Error(ErrorKind::invalid_argument,
                  "finding must be fever[:temp] or appearance:<detail>, got '" + f + "'");
  }
  std::string text;
  for (const auto& m : pipeline::protocol_messages(fs)) text += m.text + '\n';
  emit(out, text);
  return 0;
}

// --- command line --------------------------------------------------------------------

/// Registers the given settings as flags on a subcommand.
void add_settings(CLI::App* sub, const std::vector<Setting>& all, std::map<std::string, std::string>& flags,
                  std::initializer_list<const char*> keys) {
  for (const char* key : keys) {
    const auto it = std::find_if(all.begin(), all.end(), [&](const Setting& s) { return s.key == key; });
    sub->add_option(it->flag, flags[it->key], it->help + " (config key " + it->key + ")");
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Depth-gated multi-spectral face analysis"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "key=value settings file")->check(CLI::ExistingFile);
  const auto settings = all_settings();
  std::map<std::string, std::string> flags;
  bool print_config = false;
  app.add_flag("--print-config", print_config, "print resolved settings to stderr");

  SynthOpts so;
  auto* synth = app.add_subcommand("synth", "render a synthetic sequence or face gallery");
  synth->add_option("--out", so.out, "output directory")->required();
  synth->add_option("--kind", so.kind, "sequence or gallery")->check(CLI::IsMember({"sequence", "gallery"}));
  synth->add_option("--frames", so.frames, "sequence length");
  synth->add_option("--subject", so.subject, "subject id (first id for galleries)");
  synth->add_option("--subjects", so.subjects, "gallery subjects");
  synth->add_option("--per", so.per, "gallery chips per subject");
  synth->add_option("--max-angle", so.max_angle, "gallery yaw range in degrees");
  synth->add_option("--yaw-min", so.yaw_min, "first yaw of the sweep");
  synth->add_option("--yaw-max", so.yaw_max, "last yaw of the sweep");
  synth->add_option("--pitch-min", so.pitch_min, "first pitch of the sweep");
  synth->add_option("--pitch-max", so.pitch_max, "last pitch of the sweep");
  synth->add_option("--temp", so.temp, "forehead temperature in degC");
  synth->add_option("--scale", so.scale, "image scale relative to 640x480");
  synth->add_option("--period-us", so.period_us, "frame period in microseconds");
  synth->add_option("--jitter", so.jitter, "head position jitter in mm");
  synth->add_option("--depth-noise", so.depth_noise, "depth noise sigma in mm");
  synth->add_flag("--random", so.random, "random poses inside the sweep box");
  synth->add_flag("--no-ir", so.no_ir, "omit the IR stream");
  add_settings(synth, settings, flags, {"seed", "chip_width", "chip_height"});

  TrainPoseOpts tpo;
  auto* tpose = app.add_subcommand("train-pose", "train the head pose forest");
  tpose->add_option("--out", tpo.out, "forest file")->required();
  tpose->add_option("--manifest", tpo.manifests, "training manifests with pose files");
  tpose->add_option("--synthetic", tpo.synthetic, "number of synthetic training frames");
  tpose->add_option("--yaw-max", tpo.yaw_max, "synthetic yaw range");
  tpose->add_option("--pitch-max", tpo.pitch_max, "synthetic pitch range");
  tpose->add_option("--scale", tpo.scale, "synthetic image scale relative to 640x480");
  add_settings(tpose, settings, flags,
               {"seed", "jobs", "forest.n_trees", "forest.max_depth", "forest.min_samples",
                "forest.n_candidate_tests", "forest.patch_size", "forest.patches_per_frame"});

  TrainCascadeOpts tco;
  auto* tcas = app.add_subcommand("train-cascade", "train the Haar cascade");
  tcas->add_option("--out", tco.out, "cascade file")->required();
  tcas->add_option("--positives", tco.positives, "directory of 24x24 face PGMs");
  tcas->add_option("--negatives", tco.negatives, "directory of face-free PGMs");
  tcas->add_flag("--synthetic", tco.synthetic, "train on the synthetic window corpus");
  add_settings(tcas, settings, flags,
               {"seed", "cascade.n_stages", "cascade.stumps_per_stage", "cascade.stage_fpr_target",
                "cascade.min_stage_tpr", "cascade.features_per_stage",
                "cascade.max_negatives_per_stage"});

  EnrollOpts eo;
  auto* enroll = app.add_subcommand("enroll", "train a recognizer on a gallery directory");
  enroll->add_option("--gallery", eo.gallery, "directory of subject_<id> folders")->required();
  enroll->add_option("--method", eo.method, "eigen, fisher or lbph")
      ->check(CLI::IsMember({"eigen", "fisher", "lbph"}));
  enroll->add_option("--out", eo.out, "model file")->required();
  add_settings(enroll, settings, flags, {"chip_width", "chip_height", "eigen_k", "lbph_grid"});

  GateOpts go;
  auto* gatec = app.add_subcommand("gate", "frontal-view gate per depth frame");
  gatec->add_option("--manifest", go.manifest, "stream manifest")->required();
  gatec->add_option("--forest", go.forest, "pose forest file");
  gatec->add_flag("--truth", go.truth, "use the ground-truth pose files");
  gatec->add_option("--sweep", go.sweep, "comma-separated thresholds: accepted count per threshold");
  gatec->add_option("--out", go.out, "output CSV");
  add_settings(gatec, settings, flags, {"threshold_deg", "estimate.stride", "estimate.min_votes"});

  DetectOpts dopt;
  auto* det = app.add_subcommand("detect", "Haar cascade face detection");
  det->add_option("--cascade", dopt.cascade, "cascade file")->required();
  det->add_option("--image", dopt.image, "single gray PGM");
  det->add_option("--manifest", dopt.manifest, "stream manifest");
  det->add_option("--forest", dopt.forest, "gate detection by head pose");
  det->add_option("--out", dopt.out, "output CSV");
  add_settings(det, settings, flags, {"scale_factor", "min_neighbors", "threshold_deg", "k_head_mm",
                                          "estimate.stride", "estimate.min_votes"});

  RecognizeOpts ro;
  auto* rec = app.add_subcommand("recognize", "identify face chips");
  rec->add_option("--model", ro.model, "model file")->required();
  rec->add_option("--image", ro.images, "face image PGM (repeatable)");
  rec->add_option("--probes", ro.probes, "labelled probe directory; reports accuracy");
  rec->add_option("--out", ro.out, "output CSV");

  VerifyOpts vo;
  auto* ver = app.add_subcommand("verify", "ROC, EER and FRR at fixed FAR");
  ver->add_option("--scores", vo.scores, "score CSV (kind,score)");
  ver->add_flag("--similarity", vo.similarity, "higher scores mean more similar");
  ver->add_option("--gallery", vo.gallery, "run the enrollment protocol on a chip directory");
  ver->add_option("--n-enroll", vo.n_enroll, "enrollment chips per subject");
  ver->add_option("--far", vo.far, "comma-separated FAR levels");
  ver->add_option("--curve", vo.curve, "write the ROC curve CSV");
  ver->add_option("--scores-out", vo.scores_out, "write the score CSV");
  ver->add_option("--out", vo.out, "report file");
  add_settings(ver, settings, flags, {"chip_width", "chip_height"});

  CalibrateOpts co;
  auto* cal = app.add_subcommand("calibrate-ir", "fit intensity to temperature");
  cal->add_option("--points", co.points, "CSV intensity,temp_c")->required();
  cal->add_option("--out", co.out, "calibration CSV");

  TempOpts to;
  auto* temp = app.add_subcommand("temp", "forehead temperature from an IR frame");
  temp->add_option("--ir", to.ir, "IR PGM")->required();
  temp->add_option("--roi", to.roi, "IR rectangle x,y,w,h");
  temp->add_option("--box", to.box, "RGB face box x,y,w,h");
  temp->add_option("--out", to.out, "output file");
  add_settings(temp, settings, flags, {"calibration", "roi_map", "fever_threshold_c"});

  BenchOpts bo;
  auto* bench = app.add_subcommand("bench", "time traditional against depth-gated processing");
  bench->add_option("--manifest", bo.manifests, "stream manifests, one per video")->required();
  bench->add_option("--forest", bo.forest, "pose forest file")->required();
  bench->add_option("--cascade", bo.cascade, "cascade file")->required();
  bench->add_option("--model", bo.model, "recognizer model file");
  bench->add_option("--csv", bo.csv, "timing table CSV");
  bench->add_option("--results", bo.results, "per-frame results without timings");
  bench->add_option("--out", bo.out, "report file");
  add_settings(bench, settings, flags,
               {"subsample", "threshold_deg", "k_head_mm", "scale_factor", "min_neighbors", "jobs",
                "estimate.stride", "estimate.min_votes",
                "calibration", "roi_map", "fever_threshold_c"});

  std::vector<std::string> findings;
  std::string pout;
  auto* proto = app.add_subcommand("protocol", "interview prompts for findings");
  proto->add_option("--finding", findings, "fever[:temp] or appearance:<detail> (repeatable)")->required();
  proto->add_option("--out", pout, "output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  Config c;
  auto apply = [&](const std::string& key, const std::string& v, const std::string& where) {
    const auto it = std::find_if(settings.begin(), settings.end(),
                                 [&](const Setting& s) { return s.key == key; });
    if (it == settings.end())
      throw Error(ErrorKind::invalid_argument, "unknown setting '" + key + "' in " + where);
    it->set(c, v);
  };
  if (!config_path.empty())
    for (const auto& [k, v] : io::parse_key_values(io::read_file(config_path))) apply(k, v, config_path);
  if (const char* env = std::getenv("MSFACE_SEED"); env && *env) apply("seed", env, "MSFACE_SEED");
  for (const auto& [k, v] : flags)
    if (!v.empty()) apply(k, v, "flags");
  validate(c);
  if (print_config) std::cerr << format_config(c);

  if (synth->parsed()) return cmd_synth(c, so);
  if (tpose->parsed()) return cmd_train_pose(c, tpo);
  if (tcas->parsed()) return cmd_train_cascade(c, tco);
  if (enroll->parsed()) return cmd_enroll(c, eo);
  if (gatec->parsed()) return cmd_gate(c, go);
  if (det->parsed()) return cmd_detect(c, dopt);
  if (rec->parsed()) return cmd_recognize(ro);
  if (ver->parsed()) return cmd_verify(c, vo);
  if (cal->parsed()) return cmd_calibrate(co);
  if (temp->parsed()) return cmd_temp(c, to);
  if (bench->parsed()) return cmd_bench(c, bo);
  if (proto->parsed()) return cmd_protocol(findings, pout);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::invalid_argument ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
