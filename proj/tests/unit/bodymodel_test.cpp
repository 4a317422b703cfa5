// Copyright 2026 The Afford Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <random>

#include <gtest/gtest.h>

#include "afford/bodymodel.hpp"
#include "afford/stick_body.hpp"
#include "../support/oracles.hpp"

namespace afford {
namespace {

const BodyTemplate& body() {
  static const BodyTemplate t = stick_body::make_template();
  return t;
}

BodyParams random_params(std::mt19937_64& rng, double pose_scale = 0.4) {
  std::normal_distribution<double> n(0, 1);
  BodyParams p = BodyParams::zeros(body());
  for (int i = 0; i < p.beta.size(); ++i) p.beta[i] = n(rng);
  for (int i = 0; i < p.theta_body.size(); ++i) p.theta_body[i] = pose_scale * n(rng);
  for (int i = 0; i < p.theta_hands.size(); ++i) p.theta_hands[i] = pose_scale * n(rng);
  p.trans = Vec3(n(rng), n(rng), n(rng));
  return p;
}

TEST(StickBody, Dimensions) {
  const auto& t = body();
  EXPECT_EQ(t.vertex_count(), 890);
  EXPECT_EQ(t.body_joint_count, 21);
  EXPECT_EQ(t.hand_joint_count, 15);
  EXPECT_EQ(t.joint_count(), 52);
  EXPECT_EQ(t.num_betas(), 10);
  EXPECT_EQ(t.body_pose_size(), 66);
  EXPECT_EQ(t.hand_pose_size(), 90);
  double lo = kInf, hi = -kInf;
  for (const auto& v : t.template_vertices) lo = std::min(lo, v.y()), hi = std::max(hi, v.y());
  EXPECT_NEAR(lo, 0.0, 1e-12);
  EXPECT_NEAR(hi, 1.7, 1e-12);
  for (const auto& name : part_vocabulary()) EXPECT_TRUE(t.part_labels.count(name)) << name;
}

TEST(StickBody, ClosedMeshWithOutwardNormals) {
  TriMesh m = skin(body(), BodyParams::zeros(body()));
  // Each capsule is a closed component.
  EXPECT_TRUE(is_watertight(m));
}

TEST(StickBody, RegressorRecoversJointCentres) {
  const auto& t = body();
  const auto joints = regress_joints(t, t.template_vertices);
  // Wrist joints sit level with the shoulders in the T-pose.
  EXPECT_NEAR(joints[20].y(), joints[16].y(), 1e-9);
  EXPECT_GT(joints[20].x(), joints[18].x());
  EXPECT_NEAR(joints[21].x(), -joints[20].x(), 1e-9);
}

TEST(Template, JsonRoundTripPreservesEverything) {
  oracle::TempDir dir("body");
  save_template(body(), dir / "body.json");
  const BodyTemplate back = load_template(dir / "body.json");
  EXPECT_EQ(back.template_vertices, body().template_vertices);
  EXPECT_EQ(back.faces, body().faces);
  EXPECT_EQ(back.kinematic_parents, body().kinematic_parents);
  EXPECT_EQ(back.part_labels, body().part_labels);
  EXPECT_TRUE(back.shape_dirs == body().shape_dirs);
  const BodyParams p = BodyParams::zeros(back);
  EXPECT_EQ(skin(back, p).vertices, skin(body(), p).vertices);
}

TEST(Template, WeightRowNotSummingToOneRejected) {
  auto j = template_to_json(body());
  for (auto& trip : j["weights"]["triplets"])
    if (trip[0].get<int>() == 5) trip[2] = trip[2].get<double>() * 0.9;
  try {
    template_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    EXPECT_NE(std::string(e.what()).find("weights: row 5"), std::string::npos) << e.what();
  }
}

TEST(Template, CyclicParentsRejected) {
  auto j = template_to_json(body());
  j["parents"][1] = 4;  // 4's parent is 1
  try {
    template_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("kinematics"), std::string::npos) << e.what();
  }
}

TEST(Template, ProblemsReportedPerField) {
  auto j = template_to_json(body());
  j["parents"][0] = 3;
  j["part_labels"]["head"].push_back(100000);
  try {
    template_from_json(j);
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("kinematics"), std::string::npos);
    EXPECT_NE(msg.find("part_labels"), std::string::npos);
  }
  auto k = template_to_json(body());
  k.erase("regressor");
  EXPECT_THROW(template_from_json(k), Error);
}

TEST(Skin, IdentityReproducesTemplateExactly) {
  const TriMesh m = skin(body(), BodyParams::zeros(body()));
  EXPECT_EQ(m.vertices, body().template_vertices);
  EXPECT_EQ(m.faces, body().faces);
}

TEST(Skin, TranslationShiftsTemplate) {
  BodyParams p = BodyParams::zeros(body());
  p.trans = Vec3(1, 0, 0);
  const TriMesh m = skin(body(), p);
  for (int i = 0; i < body().vertex_count(); ++i)
    EXPECT_EQ(m.vertices[i], body().template_vertices[i] + Vec3(1, 0, 0));
}

TEST(Skin, RootRotationIsRigidAboutRootJoint) {
  BodyParams p = BodyParams::zeros(body());
  p.set_joint_rotation(body(), 0, Vec3(0, kPi, 0));
  const TriMesh m = skin(body(), p);
  const Vec3 root = regress_joints(body(), body().template_vertices)[0];
  const Mat3 R = Eigen::AngleAxisd(kPi, Vec3::UnitY()).toRotationMatrix();
  for (int i = 0; i < body().vertex_count(); ++i) {
    const Vec3 expected = R * (body().template_vertices[i] - root) + root;
    EXPECT_LT((m.vertices[i] - expected).norm(), 1e-9);
  }
}

TEST(Skin, CommutesWithGlobalRigidMotion) {
  std::mt19937_64 rng(1);
  const auto& t = body();
  for (int trial = 0; trial < 5; ++trial) {
    BodyParams p = random_params(rng);
    const Mat3 G = so3::exp(Vec3(0.3, -1.1, 0.7) * (trial + 1) * 0.3);
    const Vec3 c(0.2, -0.4, 1.0);
    const TriMesh posed = skin(t, p);
    // Rigidly moving the body is the same as composing G into the root
    // rotation and moving the translation accordingly.
    const PosedSkeleton s = pose_skeleton(t, p);
    BodyParams q = p;
    q.set_joint_rotation(t, 0, so3::log(G * so3::exp(p.joint_rotation(t, 0))));
    const Vec3 root = s.rest_joints[0];
    q.trans = G * (root + p.trans) + c - root;
    const TriMesh moved = skin(t, q);
    for (int i = 0; i < t.vertex_count(); ++i)
      EXPECT_LT((moved.vertices[i] - (G * posed.vertices[i] + c)).norm(), 1e-9);
  }
}

TEST(Skin, DimensionMismatchRejected) {
  BodyParams p = BodyParams::zeros(body());
  p.theta_hands.resize(3);
  try {
    skin(body(), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::precondition);
  }
}

TEST(Skin, ShapeBlendshapesApplyLinearly) {
  BodyParams p = BodyParams::zeros(body());
  p.beta[0] = 1.0;
  const TriMesh m = skin(body(), p);
  for (int i = 0; i < body().vertex_count(); ++i)
    EXPECT_NEAR(m.vertices[i].y(), 1.05 * body().template_vertices[i].y(), 1e-12);
}

TEST(Skin, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  const auto& t = body();
  for (int trial = 0; trial < 5; ++trial) {
    const BodyParams p = random_params(rng);
    std::vector<Vec3> g(t.vertex_count());
    for (auto& x : g) x = Vec3(n(rng), n(rng), n(rng));
    auto pack = [&](const BodyParams& q) {
      std::vector<double> x(q.theta_body.data(), q.theta_body.data() + q.theta_body.size());
      x.insert(x.end(), q.theta_hands.data(), q.theta_hands.data() + q.theta_hands.size());
      x.insert(x.end(), q.trans.data(), q.trans.data() + 3);
      return x;
    };
    auto unpack = [&](const std::vector<double>& x) {
      BodyParams q = p;
      for (int i = 0; i < q.theta_body.size(); ++i) q.theta_body[i] = x[i];
      for (int i = 0; i < q.theta_hands.size(); ++i) q.theta_hands[i] = x[q.theta_body.size() + i];
      const std::size_t o = q.theta_body.size() + q.theta_hands.size();
      q.trans = Vec3(x[o], x[o + 1], x[o + 2]);
      return q;
    };
    auto loss = [&](const std::vector<double>& x) {
      const TriMesh m = skin(t, unpack(x));
      double s = 0.0;
      for (int i = 0; i < t.vertex_count(); ++i) s += g[i].dot(m.vertices[i]);
      return s;
    };
    const auto fd = oracle::central_gradient(loss, pack(p));
    const PoseGradient an = skin_vjp(t, p, pose_skeleton(t, p), g);
    BodyParams ga = p;
    ga.theta_body = an.theta_body;
    ga.theta_hands = an.theta_hands;
    ga.trans = an.trans;
    EXPECT_LT(oracle::relative_error(pack(ga), fd), 1e-3);
  }
}

TEST(Parts, ResolveUnionAndUnknown) {
  const auto& t = body();
  const auto left = resolve_parts(t, {"left_hand"});
  std::vector<int> expected = t.part_labels.at("left_hand");
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(left.vertices, expected);
  const auto right = resolve_parts(t, {"right_hand"});
  const auto both = resolve_parts(t, {"left_hand", "right_hand"});
  EXPECT_EQ(both.vertices.size(), left.vertices.size() + right.vertices.size());
  std::vector<int> inter;
  std::set_intersection(left.vertices.begin(), left.vertices.end(), right.vertices.begin(),
                        right.vertices.end(), std::back_inserter(inter));
  EXPECT_TRUE(inter.empty());
  try {
    resolve_parts(t, {"wings"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("left_hand"), std::string::npos);
  }
}

TEST(JointLimits, ZeroPoseAndAnalyticViolation) {
  const auto& t = body();
  const auto lim = default_joint_limits(t);
  EXPECT_EQ(joint_limit_penalty(t, BodyParams::zeros(t), lim), 0.0);
  BodyParams p = BodyParams::zeros(t);
  p.set_joint_rotation(t, 18, Vec3(0, 2.7, 0));  // left elbow, 0.2 past the bound
  EXPECT_NEAR(joint_limit_penalty(t, p, lim), 0.04, 1e-12);
  BodyParams r = BodyParams::zeros(t);
  r.set_joint_rotation(t, 0, Vec3(10, 0, 0));  // root is unbounded
  EXPECT_EQ(joint_limit_penalty(t, r, lim), 0.0);
}

TEST(JointLimits, MatchesDirectResummationAndGradient) {
  std::mt19937_64 rng(3);
  const auto& t = body();
  const auto lim = default_joint_limits(t);
  for (int trial = 0; trial < 20; ++trial) {
    const BodyParams p = random_params(rng, 2.0);
    double expected = 0.0;
    for (int j = 0; j < t.joint_count(); ++j) {
      const Vec3 w = p.joint_rotation(t, j);
      for (int a = 0; a < 3; ++a) {
        const double over = std::max(0.0, w[a] - lim.upper[j][a]);
        const double under = std::max(0.0, lim.lower[j][a] - w[a]);
        expected += over * over + under * under;
      }
    }
    PoseGradient g;
    EXPECT_NEAR(joint_limit_penalty(t, p, lim, &g), expected, 1e-12);
    std::vector<double> x(p.theta_body.data(), p.theta_body.data() + p.theta_body.size());
    auto f = [&](const std::vector<double>& v) {
      BodyParams q = p;
      for (int i = 0; i < q.theta_body.size(); ++i) q.theta_body[i] = v[i];
      return joint_limit_penalty(t, q, lim);
    };
    const auto fd = oracle::central_gradient(f, x);
    std::vector<double> an(g.theta_body.data(), g.theta_body.data() + g.theta_body.size());
    EXPECT_LT(oracle::relative_error(an, fd), 1e-3);
  }
}

TEST(Params, CanonicalKeepsRotation) {
  BodyParams p = BodyParams::zeros(body());
  p.set_joint_rotation(body(), 3, Vec3(0, 0, 5.0));
  const BodyParams c = p.canonical(body());
  EXPECT_LE(c.joint_rotation(body(), 3).norm(), kPi);
  const auto a = skin(body(), p), b = skin(body(), c);
  for (int i = 0; i < body().vertex_count(); ++i) EXPECT_LT((a.vertices[i] - b.vertices[i]).norm(), 1e-9);
}

TEST(Params, JsonRoundTrip) {
  std::mt19937_64 rng(4);
  const BodyParams p = random_params(rng);
  const BodyParams q = params_from_json(params_to_json(p), body());
  EXPECT_TRUE(p == q);
  EXPECT_EQ(p.digest(), q.digest());
  auto j = params_to_json(p);
  j["theta_body"].erase(0);
  EXPECT_THROW(params_from_json(j, body()), Error);
}

}  // namespace
}  // namespace afford
