#pragma once

#include "mvhm/annotation.hpp"
#include "mvhm/graph_ops.hpp"
#include "mvhm/hand_mesh.hpp"
#include "mvhm/metrics.hpp"
#include "mvhm/render.hpp"
#include "mvhm/spin_match.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

namespace mvhm {

struct GenerateConfig {
  std::string out_dir;
  int count = 100;
  std::uint64_t seed = 0;
  int views = 8;
  double radius = 600.0;   // camera ring radius, mm
  int resolution = 256;    // square images
  int threads = 1;         // 0 = hardware concurrency
  std::string pose_source; // optional keypoint file; empty = built-in sampler
  double light_min = 0.5, light_max = 1.5;
  double reach_tol = 1e-3; // relative segment-length tolerance for poses
  int vertex_budget = 2560;
  int levels = 3;          // coarsening levels exported with the dataset
};

inline void validate_config(const GenerateConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("output directory is required");
  if (cfg.count < 0) throw ConfigError("count must be >= 0");
  if (cfg.views < 1) throw ConfigError("need at least one view");
  if (!(cfg.radius > 0.0)) throw ConfigError("ring radius must be positive");
  if (cfg.resolution < 32 || cfg.resolution > 4096)
    throw ConfigError("resolution out of range [32, 4096]");
  if (cfg.threads < 0) throw ConfigError("threads must be >= 0");
  if (!(cfg.light_min >= 0.0) || !(cfg.light_max >= cfg.light_min))
    throw ConfigError("light intensity range is invalid");
  if (!(cfg.reach_tol > 0.0)) throw ConfigError("reach tolerance must be positive");
  if (cfg.levels < 0 || cfg.levels > 8) throw ConfigError("levels out of range [0, 8]");
}

// Plain "key value" lines; '#' starts a comment, blank lines ignored.
// Unknown keys are rejected so typos surface immediately.
inline GenerateConfig load_generate_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  GenerateConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream v(line);
    std::string key;
    if (!(v >> key)) continue;
    auto bad = [&]() {
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad value for " + key);
    };
    auto read = [&](auto& field) {
      if (!(v >> field)) bad();
    };
    if (key == "out") read(cfg.out_dir);
    else if (key == "count") read(cfg.count);
    else if (key == "seed") read(cfg.seed);
    else if (key == "views") read(cfg.views);
    else if (key == "radius") read(cfg.radius);
    else if (key == "resolution") read(cfg.resolution);
    else if (key == "threads") read(cfg.threads);
    else if (key == "pose_source") read(cfg.pose_source);
    else if (key == "light_min") read(cfg.light_min);
    else if (key == "light_max") read(cfg.light_max);
    else if (key == "reach_tol") read(cfg.reach_tol);
    else if (key == "vertex_budget") read(cfg.vertex_budget);
    else if (key == "levels") read(cfg.levels);
    else
      throw ParseError(path + ":" + std::to_string(lineno) + ": unknown key '" +
                       key + "'");
  }
  return cfg;
}

// Poses as 21 "x y z" lines each, separated by blank lines; '#' comments.
inline std::vector<KeypointSet> parse_pose_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose file: " + path);
  std::vector<KeypointSet> poses;
  KeypointSet cur{};
  int filled = 0, lineno = 0;
  std::string line;
  auto flush = [&]() {
    if (filled == 0) return;
    if (filled != kNumJoints)
      throw ParseError(path + ":" + std::to_string(lineno) + ": pose has " +
                       std::to_string(filled) + " keypoints, expected 21");
    poses.push_back(cur);
    filled = 0;
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream v(line);
    double x, y, z;
    if (!(v >> x)) {  // blank line: pose separator
      flush();
      continue;
    }
    if (!(v >> y >> z))
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 3 numbers");
    if (filled >= kNumJoints)
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": pose has more than 21 keypoints");
    cur[filled++] = Vec3(x, y, z);
  }
  flush();
  if (poses.empty()) throw ParseError(path + ": no poses found");
  return poses;
}

namespace pipeline_detail {

struct SampleOutput {
  bool ok = false;
  std::string id;
  std::string skip_reason;                                // when !ok
  std::vector<ManifestEntry> files;                       // dataset-relative
  std::string annot_relpath;
};

// Renders and writes one sample. Draw order from the per-sample stream is
// fixed: pose first (when sampling), then light intensity, then direction.
inline SampleOutput make_sample(const GenerateConfig& cfg, const Skeleton& rest,
                                const TemplateMesh& tpl, int index,
                                const KeypointSet* fixed_pose) {
  namespace fs = std::filesystem;
  SampleOutput out;
  char idbuf[32];
  std::snprintf(idbuf, sizeof idbuf, "sample_%06d", index);
  out.id = idbuf;

  std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(index));
  Rng rng(seed);
  KeypointSet kp;
  if (fixed_pose) {
    kp = *fixed_pose;
  } else {
    PoseLimits lim = default_pose_limits();
    kp = sample_keypoints(rng, lim);
  }
  Light light;
  light.intensity = rng.uniform(cfg.light_min, cfg.light_max);
  light.to_light = rng.unit_vector();

  SampleRecord rec;
  rec.id = out.id;
  rec.seed = seed;
  rec.light_dir = light.to_light;
  rec.light_intensity = light.intensity;
  rec.keypoints3d = kp;

  SpinSolution sol = spin_match(rest, kp, cfg.reach_tol);
  rec.mesh_vertices = skin(tpl, sol);

  Vec3 target = 0.5 * (kp[0] + kp[9]);
  Vec3 axis = kp[9] - kp[0];
  if (axis.norm() < 1e-9) throw DomainError("degenerate palm axis");
  Intrinsics K = default_intrinsics(cfg.resolution);
  std::vector<Extrinsics> ring = build_ring(target, axis.normalized(),
                                            cfg.radius, cfg.views);

  std::string sample_rel = std::string("samples/") + out.id;
  fs::path sample_dir = fs::path(cfg.out_dir) / "samples" / out.id;
  std::error_code ec;
  fs::create_directories(sample_dir, ec);
  if (ec) throw IoError("cannot create " + sample_dir.string() + ": " + ec.message());

  auto emit = [&](const std::string& name) {
    std::string rel = sample_rel + "/" + name;
    out.files.push_back({rel, hash_file(cfg.out_dir + "/" + rel)});
  };

  for (int v = 0; v < cfg.views; ++v) {
    ViewRecord vr;
    vr.intr = K;
    vr.extr = ring[v];
    char name[64];
    std::snprintf(name, sizeof name, "view_%d.ppm", v);
    vr.image_file = name;
    std::snprintf(name, sizeof name, "view_%d_depth.pgm", v);
    vr.depth_file = name;
    std::snprintf(name, sizeof name, "view_%d_mask.pgm", v);
    vr.mask_file = name;
    for (int j = 0; j < kNumJoints; ++j)
      vr.keypoints2d[j] = project(K, ring[v], kp[j], &vr.depths[j]);

    RenderBuffers rb = render_mesh(rec.mesh_vertices, tpl.faces, K, ring[v], light);
    write_ppm((sample_dir / vr.image_file).string(), rb.width, rb.height, rb.rgb);
    write_depth_pgm((sample_dir / vr.depth_file).string(), rb.width, rb.height,
                    rb.depth);
    write_mask_pgm((sample_dir / vr.mask_file).string(), rb.width, rb.height,
                   rb.mask);
    emit(vr.image_file);
    emit(vr.depth_file);
    emit(vr.mask_file);
    rec.views.push_back(std::move(vr));
  }

  write_annotation((sample_dir / "annot.txt").string(), rec);
  emit("annot.txt");
  out.annot_relpath = sample_rel + "/annot.txt";
  out.ok = true;
  return out;
}

}  // namespace pipeline_detail

// Builds a dataset: shared template mesh, skin weights and coarsening
// hierarchy, then per-sample images and annotations. Poses that cannot be
// reached by the rest skeleton are skipped and recorded, never silently
// dropped. Output bytes depend only on the config, not on thread count: each
// sample derives its own seed and the manifest and log are assembled in index
// order after all workers finish.
inline DatasetManifest generate(const GenerateConfig& cfg) {
  namespace fs = std::filesystem;
  validate_config(cfg);

  std::vector<KeypointSet> poses;
  if (!cfg.pose_source.empty()) poses = parse_pose_file(cfg.pose_source);
  int count = cfg.count;
  if (!poses.empty()) count = std::min<int>(count, static_cast<int>(poses.size()));

  std::error_code ec;
  fs::create_directories(fs::path(cfg.out_dir) / "samples", ec);
  if (ec) throw IoError("cannot create " + cfg.out_dir + ": " + ec.message());

  Skeleton rest = rest_skeleton();
  MeshParams mp = default_mesh_params();
  mp.vertex_budget = cfg.vertex_budget;
  TemplateMesh tpl = generate_template(mp);
  validate_mesh(tpl);

  DatasetManifest m;
  m.dataset_seed = cfg.seed;
  m.requested = count;
  m.views = cfg.views;
  m.resolution = cfg.resolution;
  m.radius = cfg.radius;

  save_mesh(cfg.out_dir + "/template_mesh.txt", tpl);
  save_weights(cfg.out_dir + "/template_weights.txt", tpl);
  CoarseningHierarchy hier = coarsen(mesh_graph(tpl), cfg.levels, cfg.seed);
  save_hierarchy(cfg.out_dir + "/hierarchy.txt", hier);
  m.files.push_back({"template_mesh.txt", hash_file(cfg.out_dir + "/template_mesh.txt")});
  m.files.push_back({"template_weights.txt", hash_file(cfg.out_dir + "/template_weights.txt")});
  m.files.push_back({"hierarchy.txt", hash_file(cfg.out_dir + "/hierarchy.txt")});

  std::vector<pipeline_detail::SampleOutput> results(count);
  std::atomic<int> next{0};
  std::atomic<bool> abort{false};
  std::mutex err_mutex;
  std::string io_failure;

  auto worker = [&]() {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= count || abort.load()) return;
      try {
        const KeypointSet* fixed = poses.empty() ? nullptr : &poses[i];
        results[i] = pipeline_detail::make_sample(cfg, rest, tpl, i, fixed);
      } catch (const ReachabilityError& e) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "sample_%06d", i);
        results[i].id = idbuf;
        results[i].skip_reason = e.what();
      } catch (const IoError& e) {
        std::lock_guard<std::mutex> lk(err_mutex);
        if (io_failure.empty()) io_failure = e.what();
        abort.store(true);
        return;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(err_mutex);
        if (io_failure.empty())
          io_failure = std::string("internal failure in sample ") +
                       std::to_string(i) + ": " + e.what();
        abort.store(true);
        return;
      }
    }
  };

  int nthreads = cfg.threads;
  if (nthreads == 0) {
    nthreads = static_cast<int>(std::thread::hardware_concurrency());
    if (nthreads < 1) nthreads = 1;
  }
  nthreads = std::min(nthreads, std::max(count, 1));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::ostringstream log;
  log << "dataset seed " << cfg.seed << " count " << count << " views "
      << cfg.views << " resolution " << cfg.resolution << " radius "
      << g17(cfg.radius) << "\n";
  for (int i = 0; i < count; ++i) {
    const auto& r = results[i];
    if (r.ok) {
      ++m.generated;
      m.samples.emplace_back(r.id, r.annot_relpath);
      for (const auto& f : r.files) m.files.push_back(f);
      log << r.id << " ok\n";
    } else if (!r.id.empty()) {
      m.skipped_samples.push_back({r.id, r.skip_reason});
      log << r.id << " skipped " << r.skip_reason << "\n";
    }
    // empty id: never attempted (abort hit first); intentionally absent
  }
  m.partial = abort.load();
  log << "done generated " << m.generated << " skipped "
      << m.skipped_samples.size() << (m.partial ? " PARTIAL" : "") << "\n";

  {
    std::ofstream lf(cfg.out_dir + "/generation.log", std::ios::binary);
    if (lf) lf << log.str();  // best effort when already aborting
    if (!m.partial && !lf)
      throw IoError("cannot write " + cfg.out_dir + "/generation.log");
  }
  if (!m.partial)
    m.files.push_back({"generation.log", hash_file(cfg.out_dir + "/generation.log")});
  std::sort(m.files.begin(), m.files.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.path < b.path;
            });
  write_manifest(cfg.out_dir + "/manifest.txt", m);
  if (m.partial)
    throw IoError("generation aborted, manifest marked partial: " + io_failure);
  return m;
}

// --- evaluation -------------------------------------------------------------

// Ground truth comes from the dataset annotations; the prediction file must
// cover every sample id in the manifest.
inline PoseErrorReport evaluate(const std::string& dataset_dir,
                                const std::string& pred_path) {
  DatasetManifest m = read_manifest(dataset_dir + "/manifest.txt");
  auto pred_list = read_predictions(pred_path);
  std::map<std::string, const KeypointSet*> by_id;
  for (const auto& [id, kp] : pred_list) by_id[id] = &kp;

  std::vector<KeypointSet> gt, pred;
  for (const auto& [id, annot] : m.samples) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw ConfigError("prediction file has no entry for " + id);
    SampleRecord s = read_annotation(dataset_dir + "/" + annot);
    gt.push_back(s.keypoints3d);
    pred.push_back(*it->second);
  }
  if (gt.empty()) throw DomainError("dataset has no samples to evaluate");
  return make_report(pred, gt);
}

inline std::string render_report(const PoseErrorReport& r) {
  std::ostringstream out;
  out << "samples " << r.samples << "\n";
  out << "mean_epe_mm " << g9(r.mean_epe) << "\n";
  out << "auc_0_50 " << g9(r.auc_0_50) << "\n";
  out << "auc_20_50 " << g9(r.auc_20_50) << "\n";
  for (double t : {20.0, 30.0, 40.0, 50.0}) {
    const PckCurve& c = r.curve_0_50;
    std::size_t best = 0;
    for (std::size_t i = 0; i < c.thresholds.size(); ++i)
      if (std::abs(c.thresholds[i] - t) < std::abs(c.thresholds[best] - t))
        best = i;
    out << "pck_" << static_cast<int>(t) << "mm " << g9(c.values[best]) << "\n";
  }
  out << "per_joint_epe_mm";
  for (double v : r.per_joint_epe) out << " " << g9(v);
  out << "\n";
  return out.str();
}

// Gaussian perturbation of ground truth, for noise studies and metric checks.
inline std::vector<std::pair<std::string, KeypointSet>> make_noisy(
    const std::vector<std::pair<std::string, KeypointSet>>& gt, double sigma,
    std::uint64_t seed) {
  Rng rng(seed);
  auto out = gt;
  for (auto& [id, kp] : out)
    for (Vec3& p : kp) p += rng.gaussian3(sigma);
  return out;
}

// --- triangulation over a dataset -------------------------------------------

struct TriangulationReport {
  int samples = 0;
  int skipped = 0;
  double mean_epe = 0.0;         // vs annotated world keypoints, mm
  double max_epe = 0.0;
  double mean_residual_px = 0.0; // reprojection residual of the DLT solutions
  double max_residual_px = 0.0;
  std::vector<std::pair<std::string, KeypointSet>> predictions;
  std::vector<std::string> log;
};

// Recovers world keypoints from the per-view pixel annotations alone and
// reports agreement with the annotated 3D joints. Optional pixel noise
// (seeded) turns the same path into a noise-floor study. Samples with fewer
// than two views are skipped and logged.
inline TriangulationReport triangulate_dataset(const std::string& dataset_dir,
                                               double noise_px = 0.0,
                                               std::uint64_t noise_seed = 0) {
  if (noise_px < 0.0) throw ConfigError("noise must be >= 0");
  DatasetManifest m = read_manifest(dataset_dir + "/manifest.txt");
  TriangulationReport rep;
  double sum_epe = 0.0, sum_res = 0.0;
  std::size_t n_res = 0;
  std::size_t sample_idx = 0;
  for (const auto& [id, annot] : m.samples) {
    SampleRecord s = read_annotation(dataset_dir + "/" + annot);
    if (s.views.size() < 2) {
      ++rep.skipped;
      rep.log.push_back(id + " skipped: needs at least 2 views, has " +
                        std::to_string(s.views.size()));
      ++sample_idx;
      continue;
    }
    Rng rng(derive_seed(noise_seed, sample_idx));
    KeypointSet rec{};
    double sample_epe = 0.0;
    for (int j = 0; j < kNumJoints; ++j) {
      std::vector<Observation> obs;
      for (const ViewRecord& vr : s.views) {
        Vec2 uv = vr.keypoints2d[j];
        if (noise_px > 0.0)
          uv += Vec2(rng.gaussian() * noise_px, rng.gaussian() * noise_px);
        obs.push_back({vr.intr, vr.extr, uv});
      }
      rec[j] = triangulate(obs);
      for (const ViewRecord& vr : s.views) {
        // heavy noise on a thin baseline can push the solution behind a
        // camera; report that as an infinite residual, not a crash
        double res = std::numeric_limits<double>::infinity();
        if (vr.extr.to_camera(rec[j]).z() > 0.0)
          res = (project(vr.intr, vr.extr, rec[j]) - vr.keypoints2d[j]).norm();
        sum_res += res;
        ++n_res;
        rep.max_residual_px = std::max(rep.max_residual_px, res);
      }
      sample_epe += (rec[j] - s.keypoints3d[j]).norm();
    }
    sample_epe /= kNumJoints;
    sum_epe += sample_epe;
    rep.max_epe = std::max(rep.max_epe, sample_epe);
    rep.predictions.emplace_back(id, rec);
    ++rep.samples;
    ++sample_idx;
  }
  if (rep.samples > 0) {
    rep.mean_epe = sum_epe / rep.samples;
    rep.mean_residual_px = sum_res / static_cast<double>(n_res);
  }
  return rep;
}

inline std::string render_triangulation_report(const TriangulationReport& r) {
  std::ostringstream out;
  out << "samples " << r.samples << "\n";
  out << "skipped " << r.skipped << "\n";
  out << "mean_epe_mm " << g9(r.mean_epe) << "\n";
  out << "max_epe_mm " << g9(r.max_epe) << "\n";
  out << "mean_residual_px " << g9(r.mean_residual_px) << "\n";
  out << "max_residual_px " << g9(r.max_residual_px) << "\n";
  for (const auto& line : r.log) out << line << "\n";
  return out.str();
}

// --- standalone hierarchy export and inspection -----------------------------

inline std::string export_coarsening(const std::string& out_path,
                                     int vertex_budget, int levels,
                                     std::uint64_t seed) {
  MeshParams mp = default_mesh_params();
  mp.vertex_budget = vertex_budget;
  TemplateMesh tpl = generate_template(mp);
  validate_mesh(tpl);
  CoarseningHierarchy h = coarsen(mesh_graph(tpl), levels, seed);
  save_hierarchy(out_path, h);
  std::ostringstream out;
  out << "wrote " << out_path << "\n";
  for (std::size_t l = 0; l < h.levels.size(); ++l)
    out << "level " << l << " vertices " << h.levels[l].num_real << " padded "
        << h.levels[l].adj.rows() << "\n";
  return out.str();
}

// Full dataset audit: recomputes every manifest hash, reparses every
// annotation and checks that stored pixel keypoints match a fresh projection
// of the stored world keypoints. Throws on the first inconsistency.
inline std::string inspect(const std::string& dataset_dir) {
  DatasetManifest m = read_manifest(dataset_dir + "/manifest.txt");
  verify_manifest(dataset_dir, m);
  double max_px = 0.0, max_depth = 0.0;
  for (const auto& [id, annot] : m.samples) {
    SampleRecord s = read_annotation(dataset_dir + "/" + annot);
    if (static_cast<int>(s.views.size()) != m.views)
      throw DomainError(id + ": view count disagrees with manifest");
    for (const ViewRecord& vr : s.views)
      for (int j = 0; j < kNumJoints; ++j) {
        double depth = 0.0;
        Vec2 uv = project(vr.intr, vr.extr, s.keypoints3d[j], &depth);
        max_px = std::max(max_px, (uv - vr.keypoints2d[j]).norm());
        max_depth = std::max(max_depth, std::abs(depth - vr.depths[j]));
      }
  }
  if (max_px > 1e-6)
    throw DomainError("stored pixel keypoints disagree with projection by " +
                      g9(max_px) + " px");
  if (max_depth > 1e-6)
    throw DomainError("stored joint depths disagree with projection by " +
                      g9(max_depth) + " mm");
  std::ostringstream out;
  out << "dataset " << dataset_dir << "\n";
  out << "seed " << m.dataset_seed << "\n";
  out << "samples " << m.samples.size() << " (requested " << m.requested
      << ", skipped " << m.skipped_samples.size() << ")\n";
  out << "views " << m.views << " resolution " << m.resolution << " radius "
      << g9(m.radius) << "\n";
  out << "depth_scale_mm " << g9(m.depth_scale_mm) << "\n";
  out << "files " << m.files.size() << " (all hashes verified)\n";
  out << "max_projection_residual_px " << g9(max_px) << "\n";
  out << "max_depth_residual_mm " << g9(max_depth) << "\n";
  if (m.partial) out << "WARNING: manifest is marked partial\n";
  return out.str();
}

}  // namespace mvhm
