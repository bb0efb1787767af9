#pragma once

#include "mvhm/camera.hpp"
#include "mvhm/image_io.hpp"

#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace mvhm {

constexpr const char* kAnnotationFormat = "mvhm-annot/1";

struct ViewRecord {
  Intrinsics intr;
  Extrinsics extr;
  std::array<Vec2, kNumJoints> keypoints2d{};
  std::array<double, kNumJoints> depths{};  // camera-space z, mm
  std::string image_file, depth_file, mask_file;  // relative to the sample dir
};

struct SampleRecord {
  std::string id;
  std::uint64_t seed = 0;
  Vec3 light_dir = Vec3(0, 0, 1);  // toward the light, world frame
  double light_intensity = 1.0;
  KeypointSet keypoints3d{};            // world mm
  std::vector<Vec3> mesh_vertices;      // world mm
  std::vector<ViewRecord> views;
};

// One structured text file per sample. World keypoints, camera matrices, and
// pixel annotations carry full double precision; mesh vertices 9 significant
// digits (sub-micrometer at hand scale).
inline void write_annotation(const std::string& path, const SampleRecord& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << kAnnotationFormat << "\n";
  out << "sample " << s.id << "\n";
  out << "seed " << s.seed << "\n";
  out << "light " << g17(s.light_dir.x()) << " " << g17(s.light_dir.y()) << " "
      << g17(s.light_dir.z()) << " " << g17(s.light_intensity) << "\n";
  out << "keypoints3d " << kNumJoints << "\n";
  for (const Vec3& p : s.keypoints3d)
    out << g17(p.x()) << " " << g17(p.y()) << " " << g17(p.z()) << "\n";
  out << "mesh_vertices " << s.mesh_vertices.size() << "\n";
  for (const Vec3& p : s.mesh_vertices)
    out << g9(p.x()) << " " << g9(p.y()) << " " << g9(p.z()) << "\n";
  out << "views " << s.views.size() << "\n";
  for (std::size_t v = 0; v < s.views.size(); ++v) {
    const ViewRecord& vr = s.views[v];
    out << "view " << v << "\n";
    out << "image " << vr.image_file << "\n";
    out << "depth_image " << vr.depth_file << "\n";
    out << "mask " << vr.mask_file << "\n";
    out << "size " << vr.intr.width << " " << vr.intr.height << "\n";
    out << "K " << g17(vr.intr.fx) << " 0 " << g17(vr.intr.cx) << " 0 "
        << g17(vr.intr.fy) << " " << g17(vr.intr.cy) << " 0 0 1\n";
    out << "Rt";
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out << " " << g17(vr.extr.R(r, c));
      out << " " << g17(vr.extr.t(r));
    }
    out << "\n";
    out << "keypoints2d " << kNumJoints << "\n";
    for (const Vec2& p : vr.keypoints2d)
      out << g17(p.x()) << " " << g17(p.y()) << "\n";
    out << "depths " << kNumJoints << "\n";
    for (double d : vr.depths) out << g17(d) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

namespace annot_detail {

struct LineReader {
  std::ifstream in;
  std::string path;
  int lineno = 0;

  explicit LineReader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw IoError("cannot open: " + p);
  }
  std::string next() {
    std::string line;
    if (!std::getline(in, line))
      throw ParseError(path + ":" + std::to_string(lineno + 1) +
                       ": unexpected end of file");
    ++lineno;
    return line;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(path + ":" + std::to_string(lineno) + ": " + what);
  }
  // "key rest-of-line" split; verifies the key.
  std::string expect(const std::string& key) {
    std::string line = next();
    if (line.rfind(key, 0) != 0 ||
        (line.size() > key.size() && line[key.size()] != ' '))
      fail("expected '" + key + " ...', got '" + line + "'");
    return line.size() > key.size() ? line.substr(key.size() + 1) : std::string();
  }
};

}  // namespace annot_detail

inline SampleRecord read_annotation(const std::string& path) {
  annot_detail::LineReader r(path);
  if (r.next() != kAnnotationFormat) r.fail("bad format header");
  SampleRecord s;
  s.id = r.expect("sample");
  {
    std::istringstream v(r.expect("seed"));
    if (!(v >> s.seed)) r.fail("bad seed");
  }
  {
    std::istringstream v(r.expect("light"));
    if (!(v >> s.light_dir.x() >> s.light_dir.y() >> s.light_dir.z() >>
          s.light_intensity))
      r.fail("bad light line");
  }
  {
    std::istringstream v(r.expect("keypoints3d"));
    int n = 0;
    if (!(v >> n) || n != kNumJoints) r.fail("expected 21 world keypoints");
  }
  for (int i = 0; i < kNumJoints; ++i) {
    std::istringstream v(r.next());
    if (!(v >> s.keypoints3d[i].x() >> s.keypoints3d[i].y() >>
          s.keypoints3d[i].z()))
      r.fail("bad keypoint");
  }
  std::size_t nmesh = 0;
  {
    std::istringstream v(r.expect("mesh_vertices"));
    if (!(v >> nmesh)) r.fail("bad mesh vertex count");
  }
  s.mesh_vertices.resize(nmesh);
  for (std::size_t i = 0; i < nmesh; ++i) {
    std::istringstream v(r.next());
    if (!(v >> s.mesh_vertices[i].x() >> s.mesh_vertices[i].y() >>
          s.mesh_vertices[i].z()))
      r.fail("bad mesh vertex");
  }
  std::size_t nviews = 0;
  {
    std::istringstream v(r.expect("views"));
    if (!(v >> nviews)) r.fail("bad view count");
  }
  s.views.resize(nviews);
  for (std::size_t vi = 0; vi < nviews; ++vi) {
    ViewRecord& vr = s.views[vi];
    {
      std::istringstream v(r.expect("view"));
      std::size_t idx;
      if (!(v >> idx) || idx != vi) r.fail("view index out of order");
    }
    vr.image_file = r.expect("image");
    vr.depth_file = r.expect("depth_image");
    vr.mask_file = r.expect("mask");
    {
      std::istringstream v(r.expect("size"));
      if (!(v >> vr.intr.width >> vr.intr.height)) r.fail("bad size");
    }
    {
      std::istringstream v(r.expect("K"));
      double k[9];
      for (double& x : k)
        if (!(v >> x)) r.fail("bad K matrix");
      if (k[1] != 0 || k[3] != 0 || k[6] != 0 || k[7] != 0 || k[8] != 1)
        r.fail("K is not an axis-aligned pinhole matrix");
      vr.intr.fx = k[0];
      vr.intr.cx = k[2];
      vr.intr.fy = k[4];
      vr.intr.cy = k[5];
    }
    {
      std::istringstream v(r.expect("Rt"));
      for (int row = 0; row < 3; ++row) {
        for (int c = 0; c < 3; ++c)
          if (!(v >> vr.extr.R(row, c))) r.fail("bad extrinsics");
        if (!(v >> vr.extr.t(row))) r.fail("bad extrinsics");
      }
    }
    {
      std::istringstream v(r.expect("keypoints2d"));
      int n = 0;
      if (!(v >> n) || n != kNumJoints) r.fail("expected 21 pixel keypoints");
    }
    for (int i = 0; i < kNumJoints; ++i) {
      std::istringstream v(r.next());
      if (!(v >> vr.keypoints2d[i].x() >> vr.keypoints2d[i].y()))
        r.fail("bad pixel keypoint");
    }
    {
      std::istringstream v(r.expect("depths"));
      int n = 0;
      if (!(v >> n) || n != kNumJoints) r.fail("expected 21 depths");
    }
    for (int i = 0; i < kNumJoints; ++i) {
      std::istringstream v(r.next());
      if (!(v >> vr.depths[i])) r.fail("bad depth value");
    }
  }
  return s;
}

// --- manifest ---------------------------------------------------------------

struct ManifestEntry {
  std::string path;  // relative to the dataset root, '/' separators
  std::uint64_t hash = 0;
};

struct SkipRecord {
  std::string id;
  std::string reason;
};

struct DatasetManifest {
  std::uint64_t dataset_seed = 0;
  int requested = 0;
  int generated = 0;
  int views = 0;
  int resolution = 0;
  double radius = 0.0;
  double depth_scale_mm = kDepthUnitMm;
  bool partial = false;  // generation aborted mid-way (I/O failure)
  std::vector<std::pair<std::string, std::string>> samples;  // id -> annotation
  std::vector<SkipRecord> skipped_samples;
  std::vector<ManifestEntry> files;  // every emitted file, sorted by path
};

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for hashing: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  return h;
}

inline void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "mvhm-manifest/1\n";
  out << "format " << kAnnotationFormat << "\n";
  out << "dataset_seed " << m.dataset_seed << "\n";
  out << "requested " << m.requested << "\n";
  out << "generated " << m.generated << "\n";
  out << "skipped " << m.skipped_samples.size() << "\n";
  out << "views " << m.views << "\n";
  out << "resolution " << m.resolution << "\n";
  out << "radius " << g17(m.radius) << "\n";
  out << "depth_scale_mm " << g17(m.depth_scale_mm) << "\n";
  out << "partial " << (m.partial ? 1 : 0) << "\n";
  out << "samples " << m.samples.size() << "\n";
  for (const auto& [id, file] : m.samples) out << id << " " << file << "\n";
  out << "skipped_samples " << m.skipped_samples.size() << "\n";
  for (const auto& sk : m.skipped_samples) out << sk.id << " " << sk.reason << "\n";
  out << "files " << m.files.size() << "\n";
  for (const auto& e : m.files) out << e.path << " " << hash_hex(e.hash) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

inline DatasetManifest read_manifest(const std::string& path) {
  annot_detail::LineReader r(path);
  if (r.next() != "mvhm-manifest/1") r.fail("bad manifest header");
  if (r.expect("format") != kAnnotationFormat) r.fail("unsupported annotation format");
  DatasetManifest m;
  auto get_u64 = [&](const char* key) {
    std::istringstream v(r.expect(key));
    std::uint64_t x = 0;
    if (!(v >> x)) r.fail(std::string("bad ") + key);
    return x;
  };
  auto get_f = [&](const char* key) {
    std::istringstream v(r.expect(key));
    double x = 0;
    if (!(v >> x)) r.fail(std::string("bad ") + key);
    return x;
  };
  m.dataset_seed = get_u64("dataset_seed");
  m.requested = static_cast<int>(get_u64("requested"));
  m.generated = static_cast<int>(get_u64("generated"));
  std::size_t nskip_hdr = get_u64("skipped");
  m.views = static_cast<int>(get_u64("views"));
  m.resolution = static_cast<int>(get_u64("resolution"));
  m.radius = get_f("radius");
  m.depth_scale_mm = get_f("depth_scale_mm");
  m.partial = get_u64("partial") != 0;
  std::size_t n = get_u64("samples");
  for (std::size_t i = 0; i < n; ++i) {
    std::istringstream v(r.next());
    std::string id, file;
    if (!(v >> id >> file)) r.fail("bad sample row");
    m.samples.emplace_back(id, file);
  }
  std::size_t nskip = get_u64("skipped_samples");
  if (nskip != nskip_hdr) r.fail("skip count mismatch");
  for (std::size_t i = 0; i < nskip; ++i) {
    std::string line = r.next();
    auto sp = line.find(' ');
    if (sp == std::string::npos) r.fail("bad skip row");
    m.skipped_samples.push_back({line.substr(0, sp), line.substr(sp + 1)});
  }
  std::size_t nf = get_u64("files");
  for (std::size_t i = 0; i < nf; ++i) {
    std::istringstream v(r.next());
    ManifestEntry e;
    std::string hex;
    if (!(v >> e.path >> hex) || hex.size() != 16) r.fail("bad file row");
    e.hash = std::stoull(hex, nullptr, 16);
    m.files.push_back(e);
  }
  return m;
}

// Recomputes every file hash; names the first mismatch.
inline void verify_manifest(const std::string& dataset_dir,
                            const DatasetManifest& m) {
  for (const auto& e : m.files) {
    std::uint64_t h = hash_file(dataset_dir + "/" + e.path);
    if (h != e.hash)
      throw DomainError("manifest hash mismatch for " + e.path + ": expected " +
                        hash_hex(e.hash) + ", found " + hash_hex(h));
  }
}

// --- prediction files -------------------------------------------------------

constexpr const char* kPredictionFormat = "mvhm-pred/1";

inline void write_predictions(
    const std::string& path,
    const std::vector<std::pair<std::string, KeypointSet>>& preds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << kPredictionFormat << "\n";
  for (const auto& [id, kp] : preds) {
    out << "sample " << id << "\n";
    for (const Vec3& p : kp)
      out << g17(p.x()) << " " << g17(p.y()) << " " << g17(p.z()) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<std::pair<std::string, KeypointSet>> read_predictions(
    const std::string& path) {
  annot_detail::LineReader r(path);
  if (r.next() != kPredictionFormat) r.fail("bad prediction header");
  std::vector<std::pair<std::string, KeypointSet>> out;
  std::string line;
  while (std::getline(r.in, line)) {
    ++r.lineno;
    if (line.empty()) continue;
    if (line.rfind("sample ", 0) != 0) r.fail("expected 'sample <id>'");
    std::pair<std::string, KeypointSet> entry;
    entry.first = line.substr(7);
    for (int i = 0; i < kNumJoints; ++i) {
      std::istringstream v(r.next());
      if (!(v >> entry.second[i].x() >> entry.second[i].y() >> entry.second[i].z()))
        r.fail("bad prediction keypoint");
    }
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace mvhm
