#pragma once

// Stream manifest: a CSV index (`stream,path,timestamp_us`) binding depth,
// gray and IR frame files to timestamps for one recorded sequence, plus a
// key=value sidecar (`intrinsics=`, `frame_period_us=`, `subject_id=`)
// stored next to it with the extension replaced by `.meta`.
//
// Ground-truth pose files, when present, follow the depth file naming:
// `depth_<n>.pgm` pairs with `pose_<n>.txt` in the same directory.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "msface/error.hpp"
#include "msface/geometry.hpp"
#include "msface/io.hpp"

namespace msface {

namespace fs = std::filesystem;

enum class Stream { depth, gray, ir };

inline const char* to_string(Stream s) {
  switch (s) {
    case Stream::depth: return "depth";
    case Stream::gray: return "gray";
    case Stream::ir: return "ir";
  }
  return "?";
}

inline Stream parse_stream(const std::string& s) {
  if (s == "depth") return Stream::depth;
  if (s == "gray") return Stream::gray;
  if (s == "ir") return Stream::ir;
  fail_data("unknown stream kind '" + s + "'");
}

struct ManifestRow {
  Stream stream = Stream::depth;
  std::string path;  // relative to the manifest directory unless absolute
  std::int64_t timestamp_us = 0;
};

struct ManifestMeta {
  std::optional<int> subject_id;
  std::string intrinsics;  // path of the intrinsics file
  std::int64_t frame_period_us = 33333;
};

struct StreamManifest {
  std::vector<ManifestRow> rows;
  ManifestMeta meta;
  fs::path base_dir;  // directory the relative paths resolve against

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
  std::vector<const ManifestRow*> rows_of(Stream s) const {
    std::vector<const ManifestRow*> out;
    for (const auto& r : rows)
      if (r.stream == s) out.push_back(&r);
    return out;
  }
  std::size_t count(Stream s) const { return rows_of(s).size(); }
};

inline fs::path meta_path_for(const fs::path& manifest_csv) {
  fs::path p = manifest_csv;
  p.replace_extension(".meta");
  return p;
}

inline fs::path pose_path_for(const fs::path& depth_file) {
  std::string name = depth_file.filename().string();
  if (name.rfind("depth_", 0) == 0) name.replace(0, 6, "pose_");
  fs::path out = depth_file.parent_path() / name;
  out.replace_extension(".txt");
  return out;
}

inline std::string format_manifest_csv(const StreamManifest& m) {
  std::ostringstream o;
  o << "stream,path,timestamp_us\n";
  for (const auto& r : m.rows)
    o << to_string(r.stream) << ',' << r.path << ',' << r.timestamp_us << '\n';
  return o.str();
}

inline std::string format_manifest_meta(const ManifestMeta& meta) {
  std::ostringstream o;
  o << "intrinsics=" << meta.intrinsics << "\n";
  o << "frame_period_us=" << meta.frame_period_us << "\n";
  if (meta.subject_id) o << "subject_id=" << *meta.subject_id << "\n";
  return o.str();
}

inline void validate_manifest(const StreamManifest& m, bool check_files) {
  std::map<Stream, std::int64_t> last;
  for (const auto& r : m.rows) {
    if (r.timestamp_us < 0) fail_data("negative timestamp in manifest");
    auto it = last.find(r.stream);
    if (it != last.end() && r.timestamp_us < it->second)
      fail_data(std::string("timestamps decrease in stream ") +
                to_string(r.stream));
    last[r.stream] = r.timestamp_us;
    if (check_files && !fs::exists(m.resolve(r.path)))
      fail_data("manifest references missing file " + r.path);
  }
  if (m.meta.frame_period_us <= 0) fail_data("frame_period_us must be > 0");
}

inline StreamManifest parse_manifest(std::string_view csv,
                                     std::string_view meta_text,
                                     const fs::path& base_dir) {
  StreamManifest m;
  m.base_dir = base_dir;
  const auto t = io::parse_csv(csv);
  const auto cs = t.column("stream"), cp = t.column("path"),
             ct = t.column("timestamp_us");
  for (const auto& r : t.rows)
    m.rows.push_back({parse_stream(r[cs]), r[cp], io::to_int(r[ct])});
  const auto kv = io::parse_key_values(meta_text);
  if (auto it = kv.find("intrinsics"); it != kv.end())
    m.meta.intrinsics = it->second;
  if (auto it = kv.find("frame_period_us"); it != kv.end())
    m.meta.frame_period_us = io::to_int(it->second);
  if (auto it = kv.find("subject_id"); it != kv.end())
    m.meta.subject_id = static_cast<int>(io::to_int(it->second));
  return m;
}

inline StreamManifest load_manifest(const fs::path& csv_path) {
  const fs::path meta = meta_path_for(csv_path);
  std::string meta_text;
  if (fs::exists(meta)) meta_text = io::read_file(meta);
  auto m = parse_manifest(io::read_file(csv_path), meta_text,
                          csv_path.parent_path());
  validate_manifest(m, true);
  return m;
}

inline void write_manifest(const fs::path& csv_path, const StreamManifest& m) {
  io::write_file_atomic(csv_path, format_manifest_csv(m));
  io::write_file_atomic(meta_path_for(csv_path), format_manifest_meta(m.meta));
}

inline CameraIntrinsics load_intrinsics(const StreamManifest& m) {
  if (m.meta.intrinsics.empty()) return kinect_vga();
  return parse_intrinsics(io::read_file(m.resolve(m.meta.intrinsics)));
}

}  // namespace msface
