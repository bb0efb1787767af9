#include "mvhm/hand_mesh.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

using namespace mvhm;

namespace {

double signed_volume(const TemplateMesh& m) {
  double six_v = 0.0;
  for (const auto& f : m.faces)
    six_v += m.vertices[f[0]].dot(m.vertices[f[1]].cross(m.vertices[f[2]]));
  return six_v / 6.0;
}

Vec3 bone_head(const Skeleton& s, int b) { return s.bones[b].head; }
Vec3 bone_tail(const Skeleton& s, int b) { return s.bones[b].tail; }

}  // namespace

TEST_CASE("template hits the vertex budget band", "[hand_mesh]") {
  TemplateMesh m = generate_template();
  double n = static_cast<double>(m.vertices.size());
  CHECK(n >= 2560 * 0.95);
  CHECK(n <= 2560 * 1.05);
  // Ring structure: fixed base cost plus whole interior rings.
  CHECK((m.vertices.size() - 506) % 10 == 0);
  CHECK(m.faces.size() > 0);
  CHECK(m.weights.size() == m.vertices.size());
  CHECK(m.generator.size() == m.vertices.size());
}

TEST_CASE("template is a closed connected manifold", "[hand_mesh]") {
  TemplateMesh m = generate_template();
  CHECK_NOTHROW(validate_mesh(m));
  // Five welded closed tubes: Euler characteristic of a 5-sphere wedge.
  auto edges = edge_list(m);
  long chi = static_cast<long>(m.vertices.size()) -
             static_cast<long>(edges.size()) + static_cast<long>(m.faces.size());
  CHECK(chi == 6);
  // Outward winding: positive enclosed volume, roughly hand-sized.
  double vol = signed_volume(m);
  CHECK(vol > 1e4);
  CHECK(vol < 1e6);
}

TEST_CASE("budget changes move the vertex count with it", "[hand_mesh]") {
  MeshParams mp = default_mesh_params();
  mp.vertex_budget = 1280;
  TemplateMesh m = generate_template(mp);
  double n = static_cast<double>(m.vertices.size());
  CHECK(n >= 1280 * 0.95);
  CHECK(n <= 1280 * 1.05);
  CHECK_NOTHROW(validate_mesh(m));
  CHECK_THROWS_AS([] {
    MeshParams bad = default_mesh_params();
    bad.vertex_budget = 100;  // cannot even fit the mandatory rings
    generate_template(bad);
  }(), GenerationError);
}

TEST_CASE("every vertex is dominated by its generating bone", "[hand_mesh]") {
  TemplateMesh m = generate_template();
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    std::map<int, double> w;
    for (const VertexWeight& vw : m.weights[i]) w[vw.bone] += vw.w;
    int dom = dominant_bone(m, static_cast<int>(i));
    for (const auto& [b, wb] : w)
      if (b != dom) CHECK(w[dom] >= wb);
    CHECK(w.count(0) == 0);  // the forearm stub never receives weight
  }
}

TEST_CASE("doubling radii doubles the dominant-bone surface distance",
          "[hand_mesh]") {
  MeshParams mp1 = default_mesh_params();
  MeshParams mp2 = mp1;
  for (double& r : mp2.radius) r *= 2.0;
  TemplateMesh a = generate_template(mp1);
  TemplateMesh b = generate_template(mp2);
  REQUIRE(a.vertices.size() == b.vertices.size());
  int checked = 0;
  for (std::size_t i = 0; i < a.vertices.size(); ++i) {
    int bone = dominant_bone(a, static_cast<int>(i));
    REQUIRE(bone == dominant_bone(b, static_cast<int>(i)));
    double d1 = point_segment_distance(a.vertices[i], bone_head(a.rest, bone),
                                       bone_tail(a.rest, bone));
    // Tube and tip-cap vertices sit exactly one radius off the bone axis;
    // restrict the scaling law to them (cone caps bend toward the shared apex).
    if (std::abs(d1 - mp1.radius[bone]) > 1e-9) continue;
    double d2 = point_segment_distance(b.vertices[i], bone_head(b.rest, bone),
                                       bone_tail(b.rest, bone));
    CHECK(d2 == Catch::Approx(2.0 * d1).epsilon(1e-9));
    ++checked;
  }
  // The law must actually cover the bulk of the surface.
  CHECK(checked > static_cast<int>(a.vertices.size()) / 2);
}

TEST_CASE("mesh graph is symmetric with sane degrees", "[hand_mesh]") {
  TemplateMesh m = generate_template();
  auto adj = mesh_graph(m);
  REQUIRE(adj.rows() == static_cast<long>(m.vertices.size()));
  CHECK(adj.nonZeros() == static_cast<long>(2 * edge_list(m).size()));
  for (int k = 0; k < adj.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(adj, k); it; ++it) {
      CHECK(it.value() == 1.0);
      CHECK(adj.coeff(it.col(), it.row()) == 1.0);
    }
}

TEST_CASE("identity skinning reproduces the template bitwise", "[hand_mesh]") {
  TemplateMesh m = generate_template();
  Skeleton rest = rest_skeleton();
  SpinSolution sol = spin_match(rest, rest_keypoints());
  std::vector<Vec3> out = skin(m, sol);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK((out[i] - m.vertices[i]).norm() == 0.0);
}

TEST_CASE("rigid poses move the skin rigidly", "[hand_mesh]") {
  TemplateMesh m = generate_template();
  Skeleton rest = rest_skeleton();
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    Quat R = axis_angle(rng.unit_vector(), rng.uniform(-3.0, 3.0));
    Vec3 t = rng.gaussian3(50.0);
    std::vector<Vec3> out = skin(m, rigid_solution(rest, R, t));
    for (std::size_t i = 0; i < out.size(); ++i)
      REQUIRE((out[i] - (R * m.vertices[i] + t)).norm() < 1e-6);
  }
}

TEST_CASE("skinning rejects a mismatched rest skeleton", "[hand_mesh]") {
  TemplateMesh m = generate_template();
  Skeleton rest = rest_skeleton();
  SpinSolution sol = spin_match(rest, rest_keypoints());
  sol.rest.bones[3].tail += Vec3(1, 0, 0);
  CHECK_THROWS_AS(skin(m, sol), DomainError);
}

TEST_CASE("articulated skinning keeps edges near their rest length",
          "[hand_mesh]") {
  TemplateMesh m = generate_template();
  Skeleton rest = rest_skeleton();
  PoseLimits lim = default_pose_limits();
  Rng rng(9);
  for (int trial = 0; trial < 3; ++trial) {
    KeypointSet c = sample_keypoints(rng, lim);
    std::vector<Vec3> posed = skin(m, spin_match(rest, c));
    double distortion = mean_edge_distortion(m, m.vertices, posed);
    CHECK(distortion < 0.25);  // blend zones stretch, the bulk stays put
  }
}

TEST_CASE("mesh and weight files round trip", "[hand_mesh]") {
  namespace fs = std::filesystem;
  TemplateMesh m = generate_template();
  fs::path dir = fs::temp_directory_path() / "mvhm_mesh_io_test";
  fs::create_directories(dir);
  std::string mp = (dir / "mesh.txt").string();
  std::string wp = (dir / "weights.txt").string();
  save_mesh(mp, m);
  save_weights(wp, m);

  TemplateMesh back = load_mesh(mp);
  load_weights(wp, back);
  REQUIRE(back.vertices.size() == m.vertices.size());
  REQUIRE(back.faces.size() == m.faces.size());
  for (std::size_t i = 0; i < m.faces.size(); ++i) CHECK(back.faces[i] == m.faces[i]);
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    CHECK((back.vertices[i] - m.vertices[i]).norm() < 1e-5);
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    REQUIRE(back.weights[i].size() == m.weights[i].size());
    for (std::size_t k = 0; k < m.weights[i].size(); ++k) {
      CHECK(back.weights[i][k].bone == m.weights[i][k].bone);
      CHECK(back.weights[i][k].w == m.weights[i][k].w);  // full precision
    }
  }

  // Saving what was loaded reproduces the files byte for byte.
  std::string mp2 = (dir / "mesh2.txt").string();
  save_mesh(mp2, back);
  std::ifstream f1(mp, std::ios::binary), f2(mp2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);

  SECTION("corrupted files fail with a line number") {
    std::ofstream bad(mp, std::ios::binary);
    bad << "mvhm-mesh/1\nvertices 5 faces 1\nv 1 2\n";
    bad.close();
    try {
      load_mesh(mp);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
  }
  fs::remove_all(dir);
}
