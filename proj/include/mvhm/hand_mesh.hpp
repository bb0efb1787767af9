#pragma once

#include "mvhm/spin_match.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

namespace mvhm {

struct MeshParams {
  int vertex_budget = 2560;
  int azimuth = 10;  // vertices per ring
  std::array<double, kNumBones> radius{};
  double base_station = 18.0;       // palm surface starts here along each ray, mm
  double blend_halfwidth = 6.0;     // axial skin ramp half-width, mm
  double cross_support_scale = 1.5; // kernel support = scale * metacarpal radius
  double cross_cap = 0.33;          // max total cross-finger weight share
};

inline MeshParams default_mesh_params() {
  MeshParams p;
  p.radius[0] = 20.0;  // forearm stub; carries no surface or weights
  const double r[5][4] = {{13.0, 11.0, 9.5, 8.5},
                          {13.5, 10.5, 9.0, 8.0},
                          {14.0, 11.0, 9.5, 8.3},
                          {13.0, 10.5, 9.0, 7.8},
                          {11.5, 9.0, 8.0, 7.0}};
  for (int f = 0; f < 5; ++f)
    for (int j = 0; j < 4; ++j) p.radius[4 * f + j + 1] = r[f][j];
  return p;
}

struct VertexWeight {
  int bone;
  double w;
};

// Rest-pose hand surface: five capsule tubes (one per finger ray) welded at a
// single wrist apex vertex, plus per-vertex skinning weights over bones 1..20.
struct TemplateMesh {
  MeshParams params;
  Skeleton rest;
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<std::vector<VertexWeight>> weights;  // sorted by bone, <=4 entries
  std::vector<int> generator;  // bone whose surface band produced each vertex
};

namespace mesh_detail {

struct FingerFrame {
  Vec3 d, side, nrm;  // axis, in-palm-plane perpendicular, palm normal
};

inline FingerFrame finger_frame(int f) {
  Vec3 d = rest_table().dir[f];
  Vec3 n = Vec3::UnitZ();
  return {d, d.cross(n), n};
}

// Interior-ring allocation: distribute `total` rings over the 20 segments
// proportionally to length, each segment keeping at least one.
inline std::array<int, 20> allocate_rings(const std::array<double, 20>& len,
                                          int total) {
  double sum = 0;
  for (double l : len) sum += l;
  double h = sum / total;
  std::array<int, 20> n{};
  int have = 0;
  for (int i = 0; i < 20; ++i) {
    n[i] = std::max(1, static_cast<int>(std::lround(len[i] / h)));
    have += n[i];
  }
  auto excess = [&](int i) { return n[i] - len[i] / h; };
  while (have > total) {
    int pick = -1;
    for (int i = 0; i < 20; ++i)
      if (n[i] > 1 && (pick < 0 || excess(i) > excess(pick))) pick = i;
    if (pick < 0) break;
    --n[pick];
    --have;
  }
  while (have < total) {
    int pick = 0;
    for (int i = 1; i < 20; ++i)
      if (excess(i) < excess(pick)) pick = i;
    ++n[pick];
    ++have;
  }
  return n;
}

}  // namespace mesh_detail

// Skinning weights are structural: within a finger, smoothstep ramps across
// each joint station (exactly 0.5/0.5 at the joint); across fingers, a palm
// blend toward neighboring metacarpal segments with a cubic kernel, capped so
// the generating bone always stays dominant. Bone 0 never receives weight.
inline std::vector<VertexWeight> skin_weights_for(
    const Vec3& pos, int finger, int gen_bone, double station,
    const MeshParams& mp, const std::array<std::array<double, 5>, 5>& stations) {
  const int slot = gen_bone - 4 * finger;  // 1..4 within the finger
  const auto& s = stations[finger];        // s[0] = base_station, s[1..4] = joints

  auto zone = [&](int j) {  // ramp half-width at joint j (between slot j and j+1)
    double lower = s[j] - s[j - 1];
    double upper = s[j + 1] - s[j];
    return std::min(mp.blend_halfwidth, 0.45 * std::min(lower, upper));
  };

  double lam_up = 0.0, lam_down = 0.0;
  if (slot <= 3) {
    double z = zone(slot);
    double xi = (s[slot] - station) / z;
    if (xi < 1.0) lam_up = 0.5 * cubic_falloff(std::max(0.0, xi));
  }
  if (slot >= 2) {
    double z = zone(slot - 1);
    double xi = (station - s[slot - 1]) / z;
    if (xi < 1.0) lam_down = 0.5 * cubic_falloff(std::max(0.0, xi));
  }

  double raw[5] = {0, 0, 0, 0, 0};
  double total_raw = 0.0;
  for (int f2 = 0; f2 < kNumFingers; ++f2) {
    if (f2 == finger) continue;
    int meta = kFingerRoots[f2];
    Vec3 a = Vec3::Zero();
    Vec3 b = rest_joint(meta);
    double d = point_segment_distance(pos, a, b);
    double support = mp.cross_support_scale * mp.radius[meta];
    raw[f2] = cubic_falloff(d / support);
    total_raw += raw[f2];
  }
  double mu = total_raw > 0.0 ? mp.cross_cap * std::min(1.0, total_raw) : 0.0;

  std::vector<VertexWeight> cand;
  double own_scale = 1.0 - mu;
  cand.push_back({gen_bone, own_scale * (1.0 - lam_up - lam_down)});
  if (lam_up > 0.0) cand.push_back({gen_bone + 1, own_scale * lam_up});
  if (lam_down > 0.0) cand.push_back({gen_bone - 1, own_scale * lam_down});
  if (mu > 0.0)
    for (int f2 = 0; f2 < kNumFingers; ++f2)
      if (raw[f2] > 0.0) cand.push_back({kFingerRoots[f2], mu * raw[f2] / total_raw});

  std::sort(cand.begin(), cand.end(), [](const VertexWeight& a, const VertexWeight& b) {
    if (a.w != b.w) return a.w > b.w;
    return a.bone < b.bone;
  });
  if (cand.size() > 4) cand.resize(4);
  double sum = 0.0;
  for (const VertexWeight& vw : cand) sum += vw.w;
  for (VertexWeight& vw : cand) vw.w /= sum;
  std::sort(cand.begin(), cand.end(),
            [](const VertexWeight& a, const VertexWeight& b) { return a.bone < b.bone; });
  return cand;
}

inline TemplateMesh generate_template(const MeshParams& mp = default_mesh_params()) {
  if (mp.azimuth < 6) throw GenerationError("azimuth ring count must be >= 6");
  if (!(mp.base_station > 0.0)) throw GenerationError("base station must be positive");
  for (int b = 1; b < kNumBones; ++b)
    if (!(mp.radius[b] > 0.0)) throw GenerationError("bone radius must be positive");
  if (!(mp.cross_cap >= 0.0 && mp.cross_cap < 0.5))
    throw GenerationError("cross-finger cap must lie in [0, 0.5)");

  const int m = mp.azimuth;
  // Fixed rings per finger: base + 4 segment-end + 3 joint-wall + 2 cap.
  const int fixed_per_finger = 10;
  const long fixed_vertices = 1 + kNumFingers * (long(fixed_per_finger) * m + 1);
  const long total_interior = (mp.vertex_budget - fixed_vertices) / m;
  if (total_interior < 20)
    throw GenerationError("vertex budget too small to close the surface");

  const RestTable& table = rest_table();
  std::array<std::array<double, 5>, 5> stations;
  std::array<double, 20> seg_len;
  for (int f = 0; f < 5; ++f) {
    stations[f][0] = mp.base_station;
    for (int j = 1; j <= 4; ++j) {
      stations[f][j] = table.station[f][j - 1];
      if (stations[f][j] <= stations[f][j - 1])
        throw GenerationError("base station beyond first joint");
      seg_len[4 * f + j - 1] = stations[f][j] - stations[f][j - 1];
    }
  }
  std::array<int, 20> interior =
      mesh_detail::allocate_rings(seg_len, static_cast<int>(total_interior));

  TemplateMesh mesh;
  mesh.params = mp;
  mesh.rest = rest_skeleton();

  auto add_vertex = [&](const Vec3& p, int gen) {
    mesh.vertices.push_back(p);
    mesh.generator.push_back(gen);
    return static_cast<int>(mesh.vertices.size()) - 1;
  };

  const int apex = add_vertex(Vec3::Zero(), kFingerRoots[0]);
  mesh.weights.push_back({{1, 0.25}, {5, 0.25}, {9, 0.25}, {13, 0.25}});

  for (int f = 0; f < 5; ++f) {
    mesh_detail::FingerFrame fr = mesh_detail::finger_frame(f);

    struct RingSpec {
      double station, rho;
      int gen;
    };
    std::vector<RingSpec> specs;
    specs.push_back({stations[f][0], mp.radius[4 * f + 1], 4 * f + 1});
    for (int j = 1; j <= 4; ++j) {
      int bone = 4 * f + j;
      int n = interior[4 * f + j - 1];
      double a = stations[f][j - 1], b = stations[f][j];
      for (int k = 1; k <= n; ++k)
        specs.push_back({a + k * (b - a) / (n + 1), mp.radius[bone], bone});
      specs.push_back({b, mp.radius[bone], bone});
      if (j < 4) specs.push_back({b, mp.radius[bone + 1], bone + 1});
    }

    auto ring_at = [&](const Vec3& center, double rho, double axial_lift, int gen,
                       double station) {
      std::vector<int> idx(m);
      for (int k = 0; k < m; ++k) {
        double a = 2.0 * M_PI * k / m;
        Vec3 radial = std::cos(a) * fr.side + std::sin(a) * fr.nrm;
        idx[k] = add_vertex(center + rho * radial + axial_lift * fr.d, gen);
        mesh.weights.push_back(
            skin_weights_for(mesh.vertices.back(), f, gen, station, mp, stations));
      }
      return idx;
    };

    std::vector<std::vector<int>> rings;
    for (const RingSpec& rs : specs)
      rings.push_back(ring_at(rs.station * fr.d, rs.rho, 0.0, rs.gen, rs.station));

    // Hemispherical tip cap: two latitude rings plus the pole.
    const double tip_s = stations[f][4];
    const double tip_r = mp.radius[4 * f + 4];
    const Vec3 tip_center = tip_s * fr.d;
    for (double beta : {M_PI / 6.0, M_PI / 3.0})
      rings.push_back(ring_at(tip_center, tip_r * std::cos(beta),
                              tip_r * std::sin(beta), 4 * f + 4,
                              tip_s + tip_r * std::sin(beta)));
    int pole = add_vertex(tip_center + tip_r * fr.d, 4 * f + 4);
    mesh.weights.push_back({{4 * f + 4, 1.0}});

    // Base cone fan onto the shared wrist apex.
    for (int k = 0; k < m; ++k)
      mesh.faces.push_back({apex, rings[0][k], rings[0][(k + 1) % m]});
    // Quad strips between consecutive rings.
    for (std::size_t r = 0; r + 1 < rings.size(); ++r)
      for (int k = 0; k < m; ++k) {
        int k1 = (k + 1) % m;
        mesh.faces.push_back({rings[r][k1], rings[r][k], rings[r + 1][k]});
        mesh.faces.push_back({rings[r][k1], rings[r + 1][k], rings[r + 1][k1]});
      }
    // Tip fan.
    const std::vector<int>& last = rings.back();
    for (int k = 0; k < m; ++k)
      mesh.faces.push_back({pole, last[(k + 1) % m], last[k]});
  }

  const long want = mp.vertex_budget;
  const long got = static_cast<long>(mesh.vertices.size());
  if (std::llabs(got - want) > want / 20)
    throw GenerationError("vertex budget missed by more than 5%");
  return mesh;
}

// --- queries ---------------------------------------------------------------

inline std::vector<std::pair<int, int>> edge_list(const TemplateMesh& mesh) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(mesh.faces.size() * 3);
  for (const auto& f : mesh.faces)
    for (int e = 0; e < 3; ++e) {
      int a = f[e], b = f[(e + 1) % 3];
      edges.emplace_back(std::min(a, b), std::max(a, b));
    }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

// Binary adjacency from shared face edges.
inline Eigen::SparseMatrix<double> mesh_graph(const TemplateMesh& mesh) {
  const int n = static_cast<int>(mesh.vertices.size());
  std::vector<Eigen::Triplet<double>> t;
  for (const auto& [a, b] : edge_list(mesh)) {
    t.emplace_back(a, b, 1.0);
    t.emplace_back(b, a, 1.0);
  }
  Eigen::SparseMatrix<double> adj(n, n);
  adj.setFromTriplets(t.begin(), t.end());
  return adj;
}

inline int dominant_bone(const TemplateMesh& mesh, int vertex) {
  const auto& ws = mesh.weights[vertex];
  int best = -1;
  double bw = -1.0;
  for (const VertexWeight& vw : ws)
    if (vw.w > bw || (vw.w == bw && vw.bone < best)) {
      best = vw.bone;
      bw = vw.w;
    }
  return best;
}

inline void validate_mesh(const TemplateMesh& mesh) {
  const int n = static_cast<int>(mesh.vertices.size());
  if (mesh.weights.size() != mesh.vertices.size())
    throw DomainError("mesh: weight row count mismatch");
  for (const Vec3& v : mesh.vertices)
    if (!v.allFinite()) throw DomainError("mesh: non-finite vertex");
  std::map<std::pair<int, int>, int> edge_faces;
  for (const auto& f : mesh.faces) {
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
      throw DomainError("mesh: degenerate face");
    for (int e = 0; e < 3; ++e) {
      int a = f[e], b = f[(e + 1) % 3];
      if (a < 0 || a >= n || b < 0 || b >= n)
        throw DomainError("mesh: face index out of range");
      ++edge_faces[{std::min(a, b), std::max(a, b)}];
    }
  }
  for (const auto& [e, cnt] : edge_faces)
    if (cnt != 2)
      throw DomainError("mesh: edge shared by " + std::to_string(cnt) +
                        " faces (closed surface expected)");
  // Connectivity over edges.
  std::vector<int> seen(n, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  std::vector<std::vector<int>> nbr(n);
  for (const auto& [e, cnt] : edge_faces) {
    nbr[e.first].push_back(e.second);
    nbr[e.second].push_back(e.first);
  }
  int reached = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : nbr[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        q.push(v);
      }
  }
  if (reached != n) throw DomainError("mesh: surface is not connected");
  for (const auto& ws : mesh.weights) {
    if (ws.empty() || ws.size() > 4)
      throw DomainError("mesh: weight row must hold 1..4 entries");
    double sum = 0.0;
    for (const VertexWeight& vw : ws) {
      if (vw.bone < 1 || vw.bone >= kNumBones)
        throw DomainError("mesh: weight on invalid bone");
      if (!(vw.w >= 0.0)) throw DomainError("mesh: negative weight");
      sum += vw.w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw DomainError("mesh: weight row does not sum to 1");
  }
}

// --- skinning --------------------------------------------------------------

// Linear blend skinning with per-bone transforms from the spin solution.
// Formulated as x + sum_b w_b * ((R_b d - d) + shift_b) so the identity pose
// reproduces the template bitwise.
inline std::vector<Vec3> skin(const TemplateMesh& mesh, const SpinSolution& sol) {
  for (int i = 0; i < kNumBones; ++i) {
    if ((sol.rest.bones[i].head - mesh.rest.bones[i].head).norm() > 1e-9 ||
        (sol.rest.bones[i].tail - mesh.rest.bones[i].tail).norm() > 1e-9)
      throw DomainError("skin: solution was solved against a different rest skeleton");
  }
  std::array<Quat, kNumBones> rot;
  std::array<Vec3, kNumBones> head, shift;
  for (int b = 0; b < kNumBones; ++b) {
    rot[b] = sol.bone_rotation(b);
    head[b] = mesh.rest.bones[b].head;
    shift[b] = sol.posed.bones[b].head - head[b];
  }
  std::vector<Vec3> out(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& x = mesh.vertices[i];
    Vec3 acc = Vec3::Zero();
    for (const VertexWeight& vw : mesh.weights[i]) {
      Vec3 d = x - head[vw.bone];
      acc += vw.w * ((rot[vw.bone] * d - d) + shift[vw.bone]);
    }
    out[i] = x + acc;
  }
  return out;
}

// Mean relative edge-length change between two embeddings of the same mesh.
inline double mean_edge_distortion(const TemplateMesh& mesh,
                                   const std::vector<Vec3>& a,
                                   const std::vector<Vec3>& b) {
  double sum = 0.0;
  auto edges = edge_list(mesh);
  for (const auto& [u, v] : edges) {
    double la = (a[u] - a[v]).norm();
    double lb = (b[u] - b[v]).norm();
    sum += std::abs(lb - la) / la;
  }
  return sum / static_cast<double>(edges.size());
}

// --- serialization ---------------------------------------------------------

inline void save_mesh(const std::string& path, const TemplateMesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "mvhm-mesh/1\n";
  out << "vertices " << mesh.vertices.size() << " faces " << mesh.faces.size()
      << "\n";
  for (const Vec3& v : mesh.vertices)
    out << "v " << g9(v.x()) << " " << g9(v.y()) << " " << g9(v.z()) << "\n";
  for (const auto& f : mesh.faces)
    out << "f " << f[0] << " " << f[1] << " " << f[2] << "\n";
  if (!out) throw IoError("write failed: " + path);
}

inline void save_weights(const std::string& path, const TemplateMesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "mvhm-weights/1\n";
  out << "vertices " << mesh.weights.size() << " bones " << kNumBones << "\n";
  for (const auto& ws : mesh.weights) {
    out << ws.size();
    for (const VertexWeight& vw : ws) out << " " << vw.bone << " " << g17(vw.w);
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

namespace mesh_detail {

inline std::string read_line(std::istream& in, const std::string& path, int& lineno) {
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(path + ":" + std::to_string(lineno) + ": unexpected end of file");
  ++lineno;
  return line;
}

}  // namespace mesh_detail

inline TemplateMesh load_mesh(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  int lineno = 1;
  std::string header = mesh_detail::read_line(in, path, lineno);
  if (header != "mvhm-mesh/1")
    throw ParseError(path + ":1: bad header '" + header + "'");
  std::istringstream counts(mesh_detail::read_line(in, path, lineno));
  std::string kw1, kw2;
  std::size_t nv = 0, nf = 0;
  counts >> kw1 >> nv >> kw2 >> nf;
  if (kw1 != "vertices" || kw2 != "faces")
    throw ParseError(path + ":2: expected 'vertices <n> faces <m>'");
  TemplateMesh mesh;
  mesh.params = default_mesh_params();
  mesh.rest = rest_skeleton();
  mesh.vertices.reserve(nv);
  mesh.faces.reserve(nf);
  for (std::size_t i = 0; i < nv; ++i) {
    int at = lineno;
    std::istringstream ls(mesh_detail::read_line(in, path, lineno));
    std::string tag;
    double x, y, z;
    if (!(ls >> tag >> x >> y >> z) || tag != "v")
      throw ParseError(path + ":" + std::to_string(at) + ": bad vertex line");
    mesh.vertices.emplace_back(x, y, z);
  }
  for (std::size_t i = 0; i < nf; ++i) {
    int at = lineno;
    std::istringstream ls(mesh_detail::read_line(in, path, lineno));
    std::string tag;
    int a, b, c;
    if (!(ls >> tag >> a >> b >> c) || tag != "f")
      throw ParseError(path + ":" + std::to_string(at) + ": bad face line");
    mesh.faces.push_back({a, b, c});
  }
  return mesh;
}

inline void load_weights(const std::string& path, TemplateMesh& mesh) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  int lineno = 1;
  std::string header = mesh_detail::read_line(in, path, lineno);
  if (header != "mvhm-weights/1")
    throw ParseError(path + ":1: bad header '" + header + "'");
  std::istringstream counts(mesh_detail::read_line(in, path, lineno));
  std::string kw1, kw2;
  std::size_t nv = 0;
  int nb = 0;
  counts >> kw1 >> nv >> kw2 >> nb;
  if (kw1 != "vertices" || kw2 != "bones" || nb != kNumBones)
    throw ParseError(path + ":2: expected 'vertices <n> bones 21'");
  if (nv != mesh.vertices.size())
    throw ParseError(path + ": weight rows do not match mesh vertex count");
  mesh.weights.assign(nv, {});
  for (std::size_t i = 0; i < nv; ++i) {
    int at = lineno;
    std::istringstream ls(mesh_detail::read_line(in, path, lineno));
    int cnt = 0;
    if (!(ls >> cnt) || cnt < 1 || cnt > 4)
      throw ParseError(path + ":" + std::to_string(at) + ": bad weight count");
    for (int k = 0; k < cnt; ++k) {
      VertexWeight vw{};
      if (!(ls >> vw.bone >> vw.w))
        throw ParseError(path + ":" + std::to_string(at) + ": bad weight entry");
      mesh.weights[i].push_back(vw);
    }
  }
}

}  // namespace mvhm
