#include "mvhm/pipeline.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mvhm;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  // fresh per process so stale outputs from older builds cannot leak in
  static const fs::path p = [] {
    fs::path q = fs::temp_directory_path() / "mvhm_pipeline_test";
    fs::remove_all(q);
    fs::create_directories(q);
    return q;
  }();
  return p;
}

void write_text(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  out << body;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

GenerateConfig tiny_config(const fs::path& out) {
  GenerateConfig cfg;
  cfg.out_dir = out.string();
  cfg.count = 2;
  cfg.seed = 123;
  cfg.views = 3;
  cfg.radius = 500.0;
  cfg.resolution = 64;
  cfg.vertex_budget = 800;  // small mesh keeps the suite quick
  cfg.levels = 2;
  return cfg;
}

// The shared two-sample dataset most cases read. Built on first use so cases
// stay runnable in isolation.
fs::path ensure_dataset() {
  fs::path d = scratch() / "ds1";
  if (!fs::exists(d / "manifest.txt")) generate(tiny_config(d));
  return d;
}

}  // namespace

TEST_CASE("config files load with overrides and comments", "[pipeline]") {
  fs::path dir = scratch();
  fs::path cfgp = dir / "gen.cfg";
  write_text(cfgp,
             "# dataset recipe\n"
             "out /tmp/somewhere\n"
             "count 12\n"
             "seed 99  # trailing comment\n"
             "views 4\n"
             "radius 450.5\n"
             "resolution 128\n"
             "threads 2\n"
             "light_min 0.25\n"
             "light_max 2.5\n"
             "reach_tol 0.01\n"
             "vertex_budget 1800\n"
             "levels 4\n"
             "\n");
  GenerateConfig cfg = load_generate_config(cfgp.string());
  CHECK(cfg.out_dir == "/tmp/somewhere");
  CHECK(cfg.count == 12);
  CHECK(cfg.seed == 99);
  CHECK(cfg.views == 4);
  CHECK(cfg.radius == 450.5);
  CHECK(cfg.resolution == 128);
  CHECK(cfg.threads == 2);
  CHECK(cfg.light_min == 0.25);
  CHECK(cfg.light_max == 2.5);
  CHECK(cfg.reach_tol == 0.01);
  CHECK(cfg.vertex_budget == 1800);
  CHECK(cfg.levels == 4);

  write_text(cfgp, "countt 3\n");
  CHECK_THROWS_AS(load_generate_config(cfgp.string()), ParseError);
  write_text(cfgp, "count notanumber\n");
  CHECK_THROWS_AS(load_generate_config(cfgp.string()), ParseError);
  CHECK_THROWS_AS(load_generate_config((dir / "missing.cfg").string()), IoError);

  GenerateConfig bad = tiny_config(dir / "x");
  bad.views = 0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = tiny_config(dir / "x");
  bad.resolution = 16;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = tiny_config(dir / "x");
  bad.light_max = 0.1;  // below light_min
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
}

TEST_CASE("pose files parse with separators and comments", "[pipeline]") {
  fs::path dir = scratch();
  fs::path pf = dir / "poses.txt";
  KeypointSet rest = rest_keypoints();
  std::ostringstream body;
  body << "# two copies of the rest pose\n";
  for (int copy = 0; copy < 2; ++copy) {
    for (int j = 0; j < kNumJoints; ++j)
      body << g17(rest[j].x()) << " " << g17(rest[j].y()) << " "
           << g17(rest[j].z()) << "\n";
    body << "\n";
  }
  write_text(pf, body.str());
  auto poses = parse_pose_file(pf.string());
  REQUIRE(poses.size() == 2);
  for (int j = 0; j < kNumJoints; ++j)
    CHECK((poses[1][j] - rest[j]).norm() == 0.0);

  // a pose with a missing line is malformed, not silently padded
  std::ostringstream short_body;
  for (int j = 0; j < kNumJoints - 1; ++j) short_body << "0 0 0\n";
  write_text(pf, short_body.str());
  CHECK_THROWS_AS(parse_pose_file(pf.string()), ParseError);

  write_text(pf, "# only comments\n\n");
  CHECK_THROWS_AS(parse_pose_file(pf.string()), ParseError);
  write_text(pf, "1 2\n");
  CHECK_THROWS_AS(parse_pose_file(pf.string()), ParseError);
}

TEST_CASE("annotations round trip through text", "[pipeline]") {
  fs::path dir = scratch();
  SampleRecord s;
  s.id = "sample_000042";
  s.seed = 0xdeadbeefcafeull;
  s.light_dir = Vec3(0.1, -0.2, 0.97).normalized();
  s.light_intensity = 1.25;
  Rng rng(5);
  for (auto& k : s.keypoints3d) k = rng.gaussian3(60.0);
  for (int i = 0; i < 10; ++i) s.mesh_vertices.push_back(rng.gaussian3(80.0));
  for (int v = 0; v < 2; ++v) {
    ViewRecord vr;
    vr.intr = default_intrinsics(64);
    vr.extr = look_at(Vec3(400 + 100 * v, 50, -30), Vec3(0, 80, 0), Vec3(0, 0, 1));
    for (int j = 0; j < kNumJoints; ++j) {
      vr.keypoints2d[j] = Vec2(rng.uniform(0, 64), rng.uniform(0, 64));
      vr.depths[j] = rng.uniform(300, 600);
    }
    vr.image_file = "view_" + std::to_string(v) + ".ppm";
    vr.depth_file = "view_" + std::to_string(v) + "_depth.pgm";
    vr.mask_file = "view_" + std::to_string(v) + "_mask.pgm";
    s.views.push_back(vr);
  }
  fs::path ap = dir / "annot.txt";
  write_annotation(ap.string(), s);
  SampleRecord back = read_annotation(ap.string());
  CHECK(back.id == s.id);
  CHECK(back.seed == s.seed);
  CHECK((back.light_dir - s.light_dir).norm() == 0.0);
  CHECK(back.light_intensity == s.light_intensity);
  for (int j = 0; j < kNumJoints; ++j)
    CHECK((back.keypoints3d[j] - s.keypoints3d[j]).norm() == 0.0);
  REQUIRE(back.mesh_vertices.size() == s.mesh_vertices.size());
  for (std::size_t i = 0; i < s.mesh_vertices.size(); ++i)
    CHECK((back.mesh_vertices[i] - s.mesh_vertices[i]).norm() < 1e-3);
  REQUIRE(back.views.size() == 2);
  for (int v = 0; v < 2; ++v) {
    CHECK(back.views[v].intr.fx == s.views[v].intr.fx);
    CHECK((back.views[v].extr.R - s.views[v].extr.R).norm() == 0.0);
    CHECK((back.views[v].extr.t - s.views[v].extr.t).norm() == 0.0);
    for (int j = 0; j < kNumJoints; ++j) {
      CHECK((back.views[v].keypoints2d[j] - s.views[v].keypoints2d[j]).norm() == 0.0);
      CHECK(back.views[v].depths[j] == s.views[v].depths[j]);
    }
    CHECK(back.views[v].image_file == s.views[v].image_file);
  }

  // tampering with the header is caught immediately
  std::string raw = slurp(ap);
  write_text(ap, "mvhm-annot/2\n" + raw.substr(raw.find('\n') + 1));
  CHECK_THROWS_AS(read_annotation(ap.string()), ParseError);
}

TEST_CASE("prediction files round trip", "[pipeline]") {
  fs::path dir = scratch();
  Rng rng(9);
  std::vector<std::pair<std::string, KeypointSet>> preds(2);
  preds[0].first = "sample_000000";
  preds[1].first = "sample_000001";
  for (auto& [id, kp] : preds)
    for (auto& v : kp) v = rng.gaussian3(50.0);
  fs::path pp = dir / "preds.txt";
  write_predictions(pp.string(), preds);
  auto back = read_predictions(pp.string());
  REQUIRE(back.size() == 2);
  for (int s = 0; s < 2; ++s) {
    CHECK(back[s].first == preds[s].first);
    for (int j = 0; j < kNumJoints; ++j)
      CHECK((back[s].second[j] - preds[s].second[j]).norm() == 0.0);
  }
  write_text(pp, "mvhm-pred/1\nsample_x\n1 2\n");
  CHECK_THROWS_AS(read_predictions(pp.string()), ParseError);
}

TEST_CASE("small dataset generates, verifies and inspects", "[pipeline]") {
  fs::path root = scratch();
  fs::path d1 = root / "ds1";
  fs::remove_all(d1);
  DatasetManifest m = generate(tiny_config(d1));

  CHECK(m.dataset_seed == 123);
  CHECK(m.requested == 2);
  CHECK(m.generated == 2);
  CHECK(m.views == 3);
  CHECK(m.resolution == 64);
  CHECK(m.radius == 500.0);
  CHECK(m.skipped_samples.empty());
  CHECK_FALSE(m.partial);
  REQUIRE(m.samples.size() == 2);
  CHECK(m.samples[0].first == "sample_000000");

  for (const char* f : {"manifest.txt", "generation.log", "template_mesh.txt",
                        "template_weights.txt", "hierarchy.txt"})
    CHECK(fs::exists(d1 / f));
  for (const char* f : {"view_0.ppm", "view_0_depth.pgm", "view_0_mask.pgm",
                        "view_1.ppm", "annot.txt"})
    CHECK(fs::exists(d1 / "samples" / "sample_000001" / f));
  // 2 samples x (3 views x 3 images + annot) + 4 shared files
  CHECK(m.files.size() == 2 * (3 * 3 + 1) + 4);

  DatasetManifest reread = read_manifest((d1 / "manifest.txt").string());
  CHECK(reread.files.size() == m.files.size());
  CHECK_NOTHROW(verify_manifest(d1.string(), reread));

  std::string report = inspect(d1.string());
  CHECK(report.find("all hashes verified") != std::string::npos);
  CHECK(report.find("samples 2") != std::string::npos);

  // the log records each sample and the totals
  std::string log = slurp(d1 / "generation.log");
  CHECK(log.find("sample_000000 ok") != std::string::npos);
  CHECK(log.find("done generated 2 skipped 0") != std::string::npos);

  SECTION("rendered content is plausible") {
    SampleRecord s =
        read_annotation((d1 / "samples/sample_000000/annot.txt").string());
    CHECK(s.views.size() == 3);
    CHECK(s.mesh_vertices.size() > 500);
    // masks must show the hand somewhere
    int w = 0, h = 0;
    std::vector<std::uint8_t> mask =
        read_mask_pgm((d1 / "samples/sample_000000/view_0_mask.pgm").string(), w, h);
    CHECK(w == 64);
    int lit = 0;
    for (std::uint8_t px : mask)
      if (px) ++lit;
    CHECK(lit > 50);
    CHECK(lit < 64 * 64);
  }
}

TEST_CASE("generation is deterministic across runs and thread counts",
          "[pipeline]") {
  fs::path root = scratch();
  fs::path d1 = ensure_dataset();
  fs::path d2 = root / "ds2", d3 = root / "ds3";
  fs::remove_all(d2);
  fs::remove_all(d3);

  GenerateConfig cfg = tiny_config(d2);
  generate(cfg);
  // The manifest pins every byte of the dataset through the file hashes, so
  // equal manifests mean equal datasets.
  std::string m1 = slurp(d1 / "manifest.txt");
  std::string m2 = slurp(d2 / "manifest.txt");
  CHECK(m1 == m2);

  cfg = tiny_config(d3);
  cfg.threads = 2;
  generate(cfg);
  CHECK(slurp(d3 / "manifest.txt") == m1);

  CHECK(slurp(d2 / "samples/sample_000001/annot.txt") ==
        slurp(d1 / "samples/sample_000001/annot.txt"));

  SECTION("tampering is detected") {
    fs::path victim = d3 / "samples/sample_000000/view_0.ppm";
    std::string raw = slurp(victim);
    raw[raw.size() / 2] ^= 0x01;
    write_text(victim, raw);
    DatasetManifest m = read_manifest((d3 / "manifest.txt").string());
    CHECK_THROWS_AS(verify_manifest(d3.string(), m), DomainError);
    CHECK_THROWS_AS(inspect(d3.string()), DomainError);
  }
}

TEST_CASE("evaluation closes the loop on annotated poses", "[pipeline]") {
  fs::path root = scratch();
  fs::path d1 = ensure_dataset();
  DatasetManifest m = read_manifest((d1 / "manifest.txt").string());

  std::vector<std::pair<std::string, KeypointSet>> gt;
  for (const auto& [id, annot] : m.samples) {
    SampleRecord s = read_annotation((d1 / annot).string());
    gt.emplace_back(id, s.keypoints3d);
  }
  fs::path pp = root / "gt_preds.txt";
  write_predictions(pp.string(), gt);
  PoseErrorReport r = evaluate(d1.string(), pp.string());
  CHECK(r.samples == 2);
  CHECK(r.mean_epe == 0.0);
  CHECK(r.auc_0_50 == Catch::Approx(1.0).margin(1e-12));

  std::string text = render_report(r);
  CHECK(text.find("samples 2") != std::string::npos);
  CHECK(text.find("mean_epe_mm 0\n") != std::string::npos);
  CHECK(text.find("pck_50mm 1\n") != std::string::npos);

  // noisy predictions score worse, deterministically per seed
  auto noisy = make_noisy(gt, 5.0, 17);
  auto noisy2 = make_noisy(gt, 5.0, 17);
  auto noisy3 = make_noisy(gt, 5.0, 18);
  CHECK((noisy[0].second[3] - noisy2[0].second[3]).norm() == 0.0);
  CHECK((noisy[0].second[3] - noisy3[0].second[3]).norm() != 0.0);
  write_predictions(pp.string(), noisy);
  PoseErrorReport rn = evaluate(d1.string(), pp.string());
  CHECK(rn.mean_epe > 1.0);
  CHECK(rn.mean_epe < 20.0);
  CHECK(rn.auc_0_50 < 1.0);

  // every manifest sample needs a prediction
  write_predictions(pp.string(), {{std::string("sample_999999"), gt[0].second}});
  CHECK_THROWS_AS(evaluate(d1.string(), pp.string()), ConfigError);
}

TEST_CASE("triangulation recovers annotated keypoints", "[pipeline]") {
  fs::path root = scratch();
  fs::path d1 = ensure_dataset();

  TriangulationReport clean = triangulate_dataset(d1.string());
  CHECK(clean.samples == 2);
  CHECK(clean.skipped == 0);
  CHECK(clean.mean_epe < 1e-3);
  CHECK(clean.max_residual_px < 1e-6);
  REQUIRE(clean.predictions.size() == 2);

  // feed the triangulated poses straight back into evaluation
  fs::path pp = root / "tri_preds.txt";
  write_predictions(pp.string(), clean.predictions);
  PoseErrorReport r = evaluate(d1.string(), pp.string());
  CHECK(r.mean_epe < 1e-3);
  // errors are ~1e-11 mm, not exactly zero, so the curve's first sample
  // (threshold 0) reads 0 and the leading trapezoid gives away 0.5/99
  CHECK(r.auc_0_50 > 1.0 - 0.51 / 99.0);

  TriangulationReport noisy = triangulate_dataset(d1.string(), 1.0, 7);
  CHECK(noisy.mean_epe > clean.mean_epe);
  CHECK(noisy.mean_epe < 50.0);
  TriangulationReport noisy2 = triangulate_dataset(d1.string(), 1.0, 7);
  CHECK(noisy.mean_epe == noisy2.mean_epe);

  std::string text = render_triangulation_report(clean);
  CHECK(text.find("samples 2") != std::string::npos);
  CHECK(text.find("max_residual_px") != std::string::npos);

  CHECK_THROWS_AS(triangulate_dataset(d1.string(), -0.5), ConfigError);
}

TEST_CASE("single-view datasets cannot triangulate", "[pipeline]") {
  fs::path root = scratch();
  fs::path d = root / "ds_oneview";
  fs::remove_all(d);
  GenerateConfig cfg = tiny_config(d);
  cfg.count = 1;
  cfg.views = 1;
  generate(cfg);
  TriangulationReport r = triangulate_dataset(d.string());
  CHECK(r.samples == 0);
  CHECK(r.skipped == 1);
  REQUIRE(r.log.size() == 1);
  CHECK(r.log[0].find("needs at least 2 views") != std::string::npos);
}

TEST_CASE("unreachable poses are skipped and recorded", "[pipeline]") {
  fs::path root = scratch();
  fs::path d = root / "ds_skip";
  fs::remove_all(d);
  KeypointSet rest = rest_keypoints();
  std::ostringstream body;
  for (int j = 0; j < kNumJoints; ++j)
    body << g17(rest[j].x()) << " " << g17(rest[j].y()) << " "
         << g17(rest[j].z()) << "\n";
  body << "\n";
  for (int j = 0; j < kNumJoints; ++j)  // scaled 20%: segment lengths off
    body << g17(1.2 * rest[j].x()) << " " << g17(1.2 * rest[j].y()) << " "
         << g17(1.2 * rest[j].z()) << "\n";
  fs::path pf = root / "mixed_poses.txt";
  write_text(pf, body.str());

  GenerateConfig cfg = tiny_config(d);
  cfg.pose_source = pf.string();
  cfg.count = 10;  // clamped to the two poses on file
  DatasetManifest m = generate(cfg);
  CHECK(m.requested == 2);
  CHECK(m.generated == 1);
  REQUIRE(m.skipped_samples.size() == 1);
  CHECK(m.skipped_samples[0].id == "sample_000001");
  CHECK(m.skipped_samples[0].reason.find("not reachable") != std::string::npos);
  CHECK_FALSE(fs::exists(d / "samples" / "sample_000001"));

  std::string log = slurp(d / "generation.log");
  CHECK(log.find("sample_000001 skipped") != std::string::npos);
  CHECK(log.find("done generated 1 skipped 1") != std::string::npos);

  // the skip survives the manifest round trip and the audit
  DatasetManifest back = read_manifest((d / "manifest.txt").string());
  REQUIRE(back.skipped_samples.size() == 1);
  CHECK(back.skipped_samples[0].reason == m.skipped_samples[0].reason);
  CHECK(inspect(d.string()).find("skipped 1") != std::string::npos);
}

TEST_CASE("hierarchy export writes a loadable file", "[pipeline]") {
  fs::path root = scratch();
  fs::path hp = root / "hier_export.txt";
  std::string msg = export_coarsening(hp.string(), 800, 2, 11);
  CHECK(msg.find("wrote ") != std::string::npos);
  CHECK(msg.find("level 2") != std::string::npos);
  CoarseningHierarchy h = load_hierarchy(hp.string());
  CHECK(h.levels.size() == 3);
  CHECK(h.levels[0].num_real > 500);
}
