#include "mvhm/skeleton.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace {
bool same(const mvhm::Vec3& a, const mvhm::Vec3& b) { return (a - b).norm() == 0.0; }
}  // namespace

using namespace mvhm;

TEST_CASE("rest joints sit on five straight rays from the wrist", "[skeleton]") {
  CHECK(same(rest_joint(0), Vec3(0, 0, 0)));
  // Middle finger runs along +y (fan angle zero), stations straight off the table.
  CHECK(same(rest_joint(9), Vec3(0, 88, 0)));
  CHECK(same(rest_joint(12), Vec3(0, 191, 0)));
  for (int f = 0; f < kNumFingers; ++f) {
    Vec3 dir = rest_joint(4 * f + 1).normalized();
    double prev = 0.0;
    for (int k = 1; k <= 4; ++k) {
      Vec3 j = rest_joint(4 * f + k);
      CHECK(j.z() == 0.0);                       // rest hand is planar
      CHECK((j - j.norm() * dir).norm() < 1e-9); // collinear chain
      CHECK(j.norm() > prev);                    // stations increase outward
      prev = j.norm();
    }
  }
  // Fan order runs thumb to pinky across x.
  CHECK(rest_joint(1).x() > rest_joint(5).x());
  CHECK(rest_joint(5).x() > rest_joint(9).x());
  CHECK(rest_joint(9).x() > rest_joint(13).x());
  CHECK(rest_joint(13).x() > rest_joint(17).x());
}

TEST_CASE("rest skeleton validates and anchors the forearm", "[skeleton]") {
  Skeleton s = rest_skeleton();
  CHECK_NOTHROW(validate_skeleton(s));
  CHECK(same(s.bones[0].head, Vec3(0, -kForearmLength, 0)));
  CHECK(same(s.bones[0].tail, Vec3(0, 0, 0)));
  for (int i = 1; i < kNumBones; ++i) {
    CHECK(same(s.bones[i].head, rest_joint(chain_parent(i))));
    CHECK(same(s.bones[i].tail, rest_joint(i)));
    CHECK(bone_length(s, i) > 0.0);
  }
  KeypointSet kp = forward_kinematics(s);
  for (int i = 0; i < kNumJoints; ++i) CHECK(same(kp[i], rest_joint(i)));
}

TEST_CASE("identity pose reproduces the rest skeleton bitwise", "[skeleton]") {
  ArticulatedPose posed = articulate(HandPose{});
  Skeleton rest = rest_skeleton();
  for (int i = 0; i < kNumBones; ++i) {
    CHECK(same(posed.skeleton.bones[i].head, rest.bones[i].head));
    CHECK(same(posed.skeleton.bones[i].tail, rest.bones[i].tail));
  }
}

TEST_CASE("zero-width limits sample the rest pose exactly", "[skeleton]") {
  PoseLimits lim;  // every range defaults to [0, 0]
  Rng rng(555);
  KeypointSet kp = sample_keypoints(rng, lim);
  for (int i = 0; i < kNumJoints; ++i) CHECK(same(kp[i], rest_joint(i)));
}

TEST_CASE("articulation preserves segment lengths", "[skeleton]") {
  Skeleton rest = rest_skeleton();
  PoseLimits lim = default_pose_limits();
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    KeypointSet kp = sample_keypoints(rng, lim);
    for (int i = 1; i < kNumBones; ++i) {
      double want = bone_length(rest, i);
      double have = (kp[i] - kp[chain_parent(i)]).norm();
      REQUIRE(std::abs(have - want) / want < 1e-12);
    }
  }
}

TEST_CASE("sampled poses explore the limit box", "[skeleton]") {
  PoseLimits lim = default_pose_limits();
  Rng rng(77);
  double min_flex = 1e9, max_flex = -1e9;
  for (int trial = 0; trial < 200; ++trial) {
    HandPose p = sample_pose(rng, lim);
    for (int f = 0; f < kNumFingers; ++f) {
      const FingerAngles& a = p.fingers[f];
      const FingerLimits& fl = lim.fingers[f];
      CHECK(a.pip_flexion >= fl.pip_flexion.lo);
      CHECK(a.pip_flexion <= fl.pip_flexion.hi);
      min_flex = std::min(min_flex, a.mcp_flexion);
      max_flex = std::max(max_flex, a.mcp_flexion);
    }
  }
  // The sampler actually spans the range, not just its midpoint.
  CHECK(min_flex < lim.fingers[0].mcp_flexion.lo + 0.3);
  CHECK(max_flex > lim.fingers[0].mcp_flexion.hi - 0.3);
}

TEST_CASE("invalid limits are rejected", "[skeleton]") {
  PoseLimits lim = default_pose_limits();
  lim.fingers[2].pip_flexion = {0.5, 0.1};
  CHECK_THROWS_AS(validate_limits(lim), ConfigError);
  Rng rng(1);
  CHECK_THROWS_AS(sample_pose(rng, lim), ConfigError);
}

TEST_CASE("bundled rest pose file matches the built-in table", "[skeleton]") {
  std::ifstream in(MVHM_SOURCE_DIR "/assets/rest_pose.txt");
  REQUIRE(in.good());
  std::string line;
  int joint = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream v(line);
    double x, y, z;
    REQUIRE((v >> x >> y >> z));
    REQUIRE(joint < kNumJoints);
    // Full-precision decimal round trips bit-for-bit.
    CHECK(same(Vec3(x, y, z), rest_joint(joint)));
    ++joint;
  }
  CHECK(joint == kNumJoints);
}

TEST_CASE("fixed seed reproduces the identical pose stream", "[skeleton]") {
  PoseLimits lim = default_pose_limits();
  Rng a(31337), b(31337);
  for (int trial = 0; trial < 10; ++trial) {
    KeypointSet ka = sample_keypoints(a, lim);
    KeypointSet kb = sample_keypoints(b, lim);
    for (int i = 0; i < kNumJoints; ++i) CHECK(same(ka[i], kb[i]));
  }
}
