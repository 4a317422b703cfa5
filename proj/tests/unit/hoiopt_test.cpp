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

#include <gtest/gtest.h>

#include "afford/hoiopt.hpp"
#include "../support/fixtures.hpp"
#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"

namespace afford {
namespace {

using namespace gradcheck;
using oracle::brute_fc;

// Weighted chamfer written as two plain loops. Ties go to the lowest index.
double brute_weighted_chamfer(const std::vector<Vec3>& h, const std::vector<Vec3>& o,
                              const std::vector<double>& w) {
  auto nearest = [](const Vec3& p, const std::vector<Vec3>& set) {
    int best = 0;
    double bd = kInf;
    for (std::size_t k = 0; k < set.size(); ++k) {
      const Vec3 d = p - set[k];
      const double d2 = d.x() * d.x() + d.y() * d.y() + d.z() * d.z();
      if (d2 < bd) {
        bd = d2;
        best = static_cast<int>(k);
      }
    }
    return std::pair{best, bd};
  };
  double a = 0.0, b = 0.0;
  for (std::size_t j = 0; j < o.size(); ++j) a += w[j] * nearest(o[j], h).second;
  for (const auto& p : h) {
    const auto [j, d2] = nearest(p, o);
    b += w[j] * d2;
  }
  return a / o.size() + b / h.size();
}

// One contact per (point, normal) pair, each paired with one object point.
ContactPairSet one_to_one(const std::vector<Vec3>& h, const std::vector<Vec3>& nh,
                          const std::vector<Vec3>& p, const std::vector<Vec3>& np,
                          std::vector<double> w = {}) {
  if (w.empty()) w.assign(h.size(), 1.0);
  ContactPairSet s;
  for (std::size_t a = 0; a < h.size(); ++a) {
    s.human_indices.push_back(static_cast<int>(a));
    s.human_points.push_back(h[a]);
    s.human_normals.push_back(nh[a]);
    s.contact_weights.push_back(w[a]);
    s.pairs.push_back({static_cast<int>(a), static_cast<int>(a), w[a], static_cast<int>(a)});
    s.object_points.push_back(p[a]);
    s.object_normals.push_back(np[a]);
  }
  return s;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Vec3(n(rng), n(rng), n(rng)).normalized();
}

// ---------------------------------------------------------------------------
// Interaction.

TEST(LossInter, CoincidentSetsGiveZero) {
  std::mt19937_64 rng(1);
  const auto pts = oracle::random_points(rng, 40, -1, 1);
  EXPECT_EQ(loss_inter(pts, pts, std::vector<double>(40, 0.7)), 0.0);
}

TEST(LossInter, UniformWeightScalesPlainChamfer) {
  std::mt19937_64 rng(2);
  const auto h = oracle::random_points(rng, 60, -1, 1);
  const auto o = oracle::random_points(rng, 45, -1, 1);
  const double plain = oracle::brute_chamfer(h, o);
  EXPECT_NEAR(loss_inter(h, o, std::vector<double>(45, 0.25)), 0.25 * plain, 1e-12);
}

TEST(LossInter, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    const auto h = oracle::random_points(rng, 30 + t * 7, -1, 1);
    const auto o = oracle::random_points(rng, 20 + t * 5, -1, 1);
    std::vector<double> w(o.size());
    for (auto& x : w) x = u(rng);
    EXPECT_NEAR(loss_inter(h, o, w), brute_weighted_chamfer(h, o, w), 1e-12);
  }
}

TEST(LossInter, EmptyInputsRejected) {
  const std::vector<Vec3> one{Vec3::Zero()};
  EXPECT_THROW(loss_inter({}, one, std::vector<double>{1.0}), Error);
  EXPECT_THROW(loss_inter(one, {}, {}), Error);
}

TEST(LossInter, PointGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int t = 0; t < 20; ++t) {
    const auto h = oracle::random_points(rng, 12, -1, 1);
    const auto o = oracle::random_points(rng, 9, -1, 1);
    std::vector<double> w(o.size());
    for (auto& x : w) x = u(rng);
    std::vector<Vec3> gh, go;
    loss_inter(h, o, w, &gh, &go);
    std::vector<double> x, a;
    for (const auto& p : h) x.insert(x.end(), {p.x(), p.y(), p.z()});
    for (const auto& p : o) x.insert(x.end(), {p.x(), p.y(), p.z()});
    for (const auto& g : gh) a.insert(a.end(), {g.x(), g.y(), g.z()});
    for (const auto& g : go) a.insert(a.end(), {g.x(), g.y(), g.z()});
    const auto fd = oracle::central_gradient(
        [&](const std::vector<double>& v) {
          std::vector<Vec3> hh(h.size()), oo(o.size());
          for (std::size_t i = 0; i < h.size(); ++i) hh[i] = Vec3(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
          const std::size_t b = 3 * h.size();
          for (std::size_t j = 0; j < o.size(); ++j) oo[j] = Vec3(v[b + 3 * j], v[b + 3 * j + 1], v[b + 3 * j + 2]);
          return loss_inter(hh, oo, w);
        },
        x);
    EXPECT_LT(oracle::relative_error(a, fd), 1e-3) << "instance " << t;
  }
}

TEST(LossInter, GlobalGradientMatchesFiniteDifferences) {
  const GlobalProblem pb = cube_global(only(&LossWeights::phi_i));
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) EXPECT_LT(global_gradient_error(pb, random_global_state(rng)), 1e-3) << t;
}

TEST(LossInter, FineGradientMatchesFiniteDifferences) {
  const FineProblem pb = cube_fine(only(&LossWeights::phi_i));
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t)
    EXPECT_LT(fine_gradient_error(pb, random_fine_state(rng, Phase::fine_body)), 1e-3) << t;
}

// ---------------------------------------------------------------------------
// Normals.

TEST(LossNormal, PerPairValues) {
  const std::vector<Vec3> p{Vec3::Zero()};
  const std::vector<Vec3> up{Vec3::UnitY()}, down{-Vec3::UnitY()}, side{Vec3::UnitX()};
  EXPECT_EQ(loss_normal(one_to_one(p, up, p, down)), 0.0);
  EXPECT_EQ(loss_normal(one_to_one(p, up, p, up)), 4.0);
  EXPECT_EQ(loss_normal(one_to_one(p, up, p, side)), 1.0);
  const std::vector<Vec3> three(3, Vec3::Zero());
  EXPECT_EQ(loss_normal(one_to_one(three, {up[0], up[0], up[0]}, three, {up[0], side[0], down[0]})), 5.0);
}

TEST(LossNormal, InvariantUnderJointRotation) {
  std::mt19937_64 rng(7);
  std::vector<Vec3> p(25, Vec3::Zero()), a, b;
  for (int k = 0; k < 25; ++k) a.push_back(random_unit(rng)), b.push_back(random_unit(rng));
  const Mat3 R = so3::exp(Vec3(0.3, -1.2, 2.0));
  std::vector<Vec3> ra, rb;
  for (int k = 0; k < 25; ++k) ra.push_back(R * a[k]), rb.push_back(R * b[k]);
  EXPECT_NEAR(loss_normal(one_to_one(p, a, p, b)), loss_normal(one_to_one(p, ra, p, rb)), 1e-12);
}

TEST(LossNormal, GlobalGradientMatchesFiniteDifferences) {
  const GlobalProblem pb = cube_global(only(&LossWeights::phi_n));
  std::mt19937_64 rng(8);
  int nonzero = 0;
  for (int t = 0; t < 20; ++t) {
    const OptState st = random_global_state(rng);
    nonzero += loss_global(st, pb).per_term.at("normal") > 0.0;
    EXPECT_LT(global_gradient_error(pb, st), 1e-3) << t;
  }
  EXPECT_EQ(nonzero, 20);
}

// ---------------------------------------------------------------------------
// Scale and ground.

TEST(LossScale, Values) {
  RigidScaledTransform tf;
  tf.log_scale = 0.4;
  EXPECT_EQ(loss_scale(tf, 0.4), 0.0);
  tf.log_scale = 0.4 + std::log(2.0);
  EXPECT_NEAR(loss_scale(tf, 0.4), 0.480453, 1e-6);
  RigidScaledTransform half;
  half.log_scale = 0.4 - std::log(2.0);
  EXPECT_NEAR(loss_scale(tf, 0.4), loss_scale(half, 0.4), 1e-15);
}

TEST(LossScale, GlobalGradientMatchesFiniteDifferences) {
  const GlobalProblem pb = cube_global(only(&LossWeights::phi_s));
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) EXPECT_LT(global_gradient_error(pb, random_global_state(rng)), 1e-3) << t;
}

TEST(LossGround, RestingLiftedSunk) {
  const TriMesh c = shapes::cube(1.0);
  RigidScaledTransform tf;
  tf.translation = Vec3(0, 0.5, 0);
  EXPECT_EQ(loss_ground(transformed(c, tf)), 0.0);
  tf.translation.y() = 0.8;
  EXPECT_NEAR(loss_ground(transformed(c, tf)), 0.09, 1e-12);
  tf.translation.y() = 0.2;
  EXPECT_NEAR(loss_ground(transformed(c, tf)), 0.09, 1e-12);
}

TEST(LossGround, GlobalGradientMatchesFiniteDifferences) {
  const GlobalProblem pb = cube_global(only(&LossWeights::ground_weight));
  ASSERT_TRUE(pb.ground_active());
  std::mt19937_64 rng(10);
  for (int t = 0; t < 20; ++t) EXPECT_LT(global_gradient_error(pb, random_global_state(rng)), 1e-3) << t;
}

TEST(LossGround, FlagGatesAndInverts) {
  GlobalProblem pb = cube_global(LossWeights{});
  OptState st = random_global_state(*std::make_unique<std::mt19937_64>(11));
  EXPECT_GT(loss_global(st, pb).weights.at("ground"), 0.0);
  pb.invert_ground_flag = true;
  EXPECT_EQ(loss_global(st, pb).weights.at("ground"), 0.0);
  pb.ground_flag = false;
  EXPECT_GT(loss_global(st, pb).weights.at("ground"), 0.0);
}

// ---------------------------------------------------------------------------
// Penetration.

TEST(LossPene, PointGradientMatchesFiniteDifferences) {
  const TriMesh c = shapes::cube(1.0);
  const PenetrationQuery q(c);
  std::mt19937_64 rng(12);
  for (int t = 0; t < 20; ++t) {
    // Mixed inside and outside points, inside ones well off the medial planes.
    auto pts = oracle::random_points(rng, 5, -0.4, 0.4);
    for (const auto& p : oracle::random_points(rng, 5, 0.55, 0.9)) pts.push_back(p);
    for (auto& p : pts)
      for (int k = 0; k < 3; ++k)
        if (std::abs(p[k]) < 0.05) p[k] += 0.1;
    std::vector<Vec3> g;
    const double e = penetration_loss(q, pts, &g);
    EXPECT_GT(e, 0.0);
    std::vector<double> x, a;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      x.insert(x.end(), {pts[i].x(), pts[i].y(), pts[i].z()});
      a.insert(a.end(), {g[i].x(), g[i].y(), g[i].z()});
    }
    const auto fd = oracle::central_gradient(
        [&](const std::vector<double>& v) {
          std::vector<Vec3> pp(pts.size());
          for (std::size_t i = 0; i < pp.size(); ++i) pp[i] = Vec3(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
          return penetration_loss(q, pp);
        },
        x);
    EXPECT_LT(oracle::relative_error(a, fd), 1e-3) << t;
  }
}

TEST(LossPene, GlobalGradientMatchesFiniteDifferences) {
  const GlobalProblem pb = cube_global(only(&LossWeights::phi_p));
  std::mt19937_64 rng(13);
  int nonzero = 0;
  for (int t = 0; t < 20; ++t) {
    const OptState st = random_global_state(rng);
    nonzero += loss_global(st, pb).per_term.at("pene") > 0.0;
    EXPECT_LT(global_gradient_error(pb, st), 1e-3) << t;
  }
  EXPECT_GE(nonzero, 15);
}

TEST(LossPene, FineGradientMatchesFiniteDifferences) {
  const FineProblem pb = cube_fine(only(&LossWeights::phi_p));
  std::mt19937_64 rng(14);
  int nonzero = 0;
  for (int t = 0; t < 20; ++t) {
    const OptState st = random_fine_state(rng, Phase::fine_body);
    nonzero += loss_fine(st, pb).penetration_volume_proxy > 0.0;
    EXPECT_LT(fine_gradient_error(pb, st), 1e-3) << t;
  }
  EXPECT_GE(nonzero, 5);
}

TEST(LossPene, SplitBetweenInteractedAndOtherVertices) {
  const FineProblem pb = cube_fine(LossWeights{});
  std::mt19937_64 rng(15);
  for (int t = 0; t < 5; ++t) {
    const OptState st = random_fine_state(rng, Phase::fine_body);
    const LossReport r = loss_fine(st, pb);
    const TriMesh body = skin(*pb.body, st.body_params);
    std::vector<Vec3> part, other;
    for (int i = 0; i < body.vertex_count(); ++i) (pb.is_part[i] ? part : other).push_back(body.vertices[i]);
    EXPECT_NEAR(r.per_term.at("pene_interacted"), penetration_energy(part, *pb.object), 1e-12);
    EXPECT_NEAR(r.per_term.at("pene_other"), penetration_energy(other, *pb.object), 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Force closure.

// A ball of radius 2.5 mm, pushed at +x or pinched at +x and -x.
struct Pinch {
  double radius = 0.0025;
  double sigma = 0.01;
  ContactPairSet push, pinch;
  Pinch() {
    const Vec3 a = radius * Vec3::UnitX(), b = -a;
    push = one_to_one({a}, {-Vec3::UnitX()}, {a}, {Vec3::UnitX()});
    pinch = one_to_one({a, b}, {-Vec3::UnitX(), Vec3::UnitX()}, {a, b}, {Vec3::UnitX(), -Vec3::UnitX()});
  }
};

TEST(LossFc, SinglePressingContactCostsOne) {
  const Pinch f;
  EXPECT_NEAR(loss_fc(f.push, f.sigma), 1.0, 1e-15);
}

TEST(LossFc, PinchBeatsPushOnBall) {
  const Pinch f;
  const double push = loss_fc(f.push, f.sigma), pinch = loss_fc(f.pinch, f.sigma);
  EXPECT_LT(pinch * 10.0, push);
  EXPECT_NEAR(pinch, brute_fc(f.pinch.human_points, f.pinch.human_normals, f.pinch.contact_weights,
                              f.pinch.object_points, f.pinch.object_normals, f.sigma),
              1e-9);
}

TEST(LossFc, IcosphereAntipodalPinchMatchesFormula) {
  const TriMesh ball = shapes::icosphere(0.0025, 2);
  std::vector<Vec3> h, nh, p, np;
  for (int k = 0; k < 6; ++k) {
    const Vec3 v = ball.vertices[k];
    for (const Vec3& x : {v, Vec3(-v)}) {
      h.push_back(x);
      nh.push_back(-x.normalized());
      p.push_back(x);
      np.push_back(x.normalized());
    }
  }
  const auto s = one_to_one(h, nh, p, np);
  EXPECT_NEAR(loss_fc(s, 0.01), brute_fc(h, nh, s.contact_weights, p, np, 0.01), 1e-9);
}

TEST(LossFc, HomogeneousInWeights) {
  std::mt19937_64 rng(16);
  std::vector<Vec3> h = oracle::random_points(rng, 8, -0.01, 0.01), p = oracle::random_points(rng, 8, -0.01, 0.01);
  std::vector<Vec3> nh, np;
  for (int k = 0; k < 8; ++k) nh.push_back(random_unit(rng)), np.push_back(random_unit(rng));
  const std::vector<double> w(8, 0.6), w3(8, 1.8);
  const double base = loss_fc(one_to_one(h, nh, p, np, w), 0.01);
  EXPECT_NEAR(loss_fc(one_to_one(h, nh, p, np, w3), 0.01), 9.0 * base, 1e-12 * std::max(1.0, base));
}

TEST(LossFc, RandomSetsMatchFormula) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<Vec3> h = oracle::random_points(rng, 10, -0.02, 0.02), p = oracle::random_points(rng, 10, -0.02, 0.02);
    std::vector<Vec3> nh, np;
    std::vector<double> w;
    for (int k = 0; k < 10; ++k) nh.push_back(random_unit(rng)), np.push_back(random_unit(rng)), w.push_back(u(rng));
    const auto s = one_to_one(h, nh, p, np, w);
    EXPECT_NEAR(loss_fc(s, 0.01), brute_fc(h, nh, w, p, np, 0.01), 1e-9);
  }
}

TEST(LossFc, PairGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(18);
  for (int t = 0; t < 20; ++t) {
    std::vector<Vec3> h = oracle::random_points(rng, 6, -0.01, 0.01), p = oracle::random_points(rng, 6, -0.01, 0.01);
    std::vector<Vec3> nh, np;
    for (int k = 0; k < 6; ++k) nh.push_back(random_unit(rng)), np.push_back(random_unit(rng));
    PairGradient g;
    loss_fc(one_to_one(h, nh, p, np), 0.01, &g);
    // Layout: h, n_h, p, n_p, three coordinates each.
    std::vector<double> x, a;
    for (const auto* set : {&h, &nh, &p, &np})
      for (const auto& v : *set) x.insert(x.end(), {v.x(), v.y(), v.z()});
    for (const auto* set : {&g.human_points, &g.human_normals, &g.object_points, &g.object_normals})
      for (const auto& v : *set) a.insert(a.end(), {v.x(), v.y(), v.z()});
    const auto fd = oracle::central_gradient(
        [&](const std::vector<double>& v) {
          std::array<std::vector<Vec3>, 4> s;
          for (int q = 0; q < 4; ++q)
            for (int k = 0; k < 6; ++k) s[q].emplace_back(v[18 * q + 3 * k], v[18 * q + 3 * k + 1], v[18 * q + 3 * k + 2]);
          return loss_fc(one_to_one(s[0], s[1], s[2], s[3]), 0.01);
        },
        x, 1e-7);
    EXPECT_LT(oracle::relative_error(a, fd), 1e-3) << t;
  }
}

TEST(LossFc, FineGradientMatchesFiniteDifferences) {
  FineProblem pb = cube_fine(only(&LossWeights::delta_fc));
  pb.closure_possible = true;
  std::mt19937_64 rng(19);
  int nonzero = 0;
  for (int t = 0; t < 20; ++t) {
    const OptState st = random_fine_state(rng, Phase::fine_hand);
    nonzero += loss_fine(st, pb).per_term.at("fc") > 1e-6;
    EXPECT_LT(fine_gradient_error(pb, st), 1e-3) << t;
  }
  EXPECT_GE(nonzero, 15);
}

TEST(LossFc, ClosureNeedsOpposingNormals) {
  EXPECT_FALSE(admits_closure(std::vector<Vec3>{Vec3::UnitY(), Vec3(0.3, 1, 0).normalized()}));
  EXPECT_TRUE(admits_closure(std::vector<Vec3>{Vec3::UnitX(), -Vec3::UnitX()}));
  FineProblem pb = cube_fine(LossWeights{});
  pb.closure_possible = false;
  EXPECT_EQ(pb.fc_weight(Phase::fine_hand), 0.0);
}

// ---------------------------------------------------------------------------
// Hinge and joint limits.

TEST(LossHinge, PenalizesObjectBehindSurface) {
  const std::vector<Vec3> h{Vec3::Zero()}, n{Vec3::UnitY()};
  EXPECT_EQ(loss_hinge(one_to_one(h, n, {Vec3(0, 0.01, 0)}, n)), 0.0);
  EXPECT_NEAR(loss_hinge(one_to_one(h, n, {Vec3(0, -0.01, 0)}, n)), 1.0, 1e-15);
  EXPECT_NEAR(loss_hinge(one_to_one(h, n, {Vec3(0.01, -0.01, 0)}, n)), 0.5, 1e-15);
}

TEST(LossHinge, FineGradientMatchesFiniteDifferences) {
  const FineProblem pb = cube_fine(only(&LossWeights::hinge_weight));
  std::mt19937_64 rng(20);
  for (int t = 0; t < 20; ++t)
    EXPECT_LT(fine_gradient_error(pb, random_fine_state(rng, Phase::fine_hand)), 1e-3) << t;
}

TEST(JointLimit, FineGradientMatchesFiniteDifferences) {
  const FineProblem pb = cube_fine(only(&LossWeights::joint_limit_weight));
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  int nonzero = 0;
  for (int t = 0; t < 20; ++t) {
    OptState st = random_fine_state(rng, Phase::fine_body);
    for (Eigen::Index k = 0; k < st.body_params.theta_hands.size(); ++k) st.body_params.theta_hands[k] += 1.5 * n(rng);
    nonzero += loss_fine(st, pb).per_term.at("joint_limit") > 0.0;
    EXPECT_LT(fine_gradient_error(pb, st), 1e-3) << t;
  }
  EXPECT_GE(nonzero, 15);
}

// ---------------------------------------------------------------------------
// Contact pairs.

TEST(ContactPairs, SubsampleSizeAndDeterminism) {
  const TriMesh body = skin(cube().body, cube().init_pose);
  const auto& g = cube_region();
  std::vector<Vec3> rp;
  for (const auto& p : g.points) rp.push_back(cube().placement.object_transform.apply(p));
  ASSERT_GT(hand_part().vertices.size(), 32u);
  const auto a = build_contact_pairs(body, hand_part(), g.region, rp, g.normals, 32, 0.02, 5);
  const auto b = build_contact_pairs(body, hand_part(), g.region, rp, g.normals, 32, 0.02, 5);
  const auto c = build_contact_pairs(body, hand_part(), g.region, rp, g.normals, 32, 0.02, 6);
  EXPECT_EQ(a.human_indices.size(), 32u);
  EXPECT_EQ(a.human_indices, b.human_indices);
  EXPECT_EQ(a.pairs.size(), b.pairs.size());
  for (std::size_t k = 0; k < a.pairs.size(); ++k) {
    EXPECT_EQ(a.pairs[k].object_index, b.pairs[k].object_index);
    EXPECT_GE(a.pairs[k].weight, 0.0);
  }
  EXPECT_NE(a.human_indices, c.human_indices);
  for (int i : a.human_indices) EXPECT_TRUE(std::binary_search(hand_part().vertices.begin(), hand_part().vertices.end(), i));
}

TEST(ContactPairs, InfiniteRadiusPairsWithNearest) {
  std::mt19937_64 rng(22);
  TriMesh body;
  body.vertices = oracle::random_points(rng, 50, -1, 1);
  body.vertex_normals.assign(50, Vec3::UnitY());
  PartSelection parts;
  for (int i = 0; i < 50; ++i) parts.vertices.push_back(i);
  ContactRegion region;
  const auto rp = oracle::random_points(rng, 30, -1, 1);
  for (int k = 0; k < 30; ++k) region.indices.push_back(100 + k), region.weights.push_back(0.5 + k);
  const std::vector<Vec3> rn(30, -Vec3::UnitY());
  const auto s = build_contact_pairs(body, parts, region, rp, rn, 10, kInf, 3);
  ASSERT_EQ(s.pairs.size(), 10u);
  for (std::size_t a = 0; a < 10; ++a) {
    const Vec3& h = s.human_points[a];
    int best = 0;
    for (int k = 1; k < 30; ++k)
      if (squared_distance(h, rp[k]) < squared_distance(h, rp[best])) best = k;
    EXPECT_EQ(s.pairs[a].contact, static_cast<int>(a));
    EXPECT_EQ(s.pairs[a].object_index, 100 + best);
    EXPECT_EQ(s.pairs[a].weight, region.weights[best]);
  }
}

TEST(ContactPairs, FiniteRadiusTakesAllNeighbours) {
  std::mt19937_64 rng(23);
  TriMesh body;
  body.vertices = oracle::random_points(rng, 20, -0.1, 0.1);
  body.vertex_normals.assign(20, Vec3::UnitY());
  PartSelection parts;
  for (int i = 0; i < 20; ++i) parts.vertices.push_back(i);
  ContactRegion region;
  const auto rp = oracle::random_points(rng, 200, -0.1, 0.1);
  for (int k = 0; k < 200; ++k) region.indices.push_back(k), region.weights.push_back(1.0);
  const std::vector<Vec3> rn(200, -Vec3::UnitY());
  const double r = 0.04;
  const auto s = build_contact_pairs(body, parts, region, rp, rn, 20, r, 0);
  for (int a = 0; a < 20; ++a) {
    std::vector<int> expect;
    for (int k = 0; k < 200; ++k)
      if ((rp[k] - s.human_points[a]).norm() <= r) expect.push_back(k);
    std::vector<int> got;
    for (const auto& p : s.pairs)
      if (p.contact == a) got.push_back(p.object_index);
    if (expect.empty()) {
      EXPECT_EQ(got.size(), 1u);
    } else {
      EXPECT_EQ(got, expect);
    }
  }
}

TEST(ContactPairs, EmptyRegionRejected) {
  const TriMesh body = skin(cube().body, cube().init_pose);
  EXPECT_THROW(build_contact_pairs(body, hand_part(), ContactRegion{}, {}, {}, 32, 0.02, 0), Error);
  EXPECT_THROW(sample_contacts(hand_part(), 0, 0), Error);
}

// ---------------------------------------------------------------------------
// Loss reports.

TEST(LossGlobal, SumInvariantAndIndependentTerms) {
  const LossWeights w;
  const GlobalProblem pb = cube_global(w);
  std::mt19937_64 rng(24);
  for (int t = 0; t < 10; ++t) {
    const OptState st = random_global_state(rng);
    const LossReport r = loss_global(st, pb);
    EXPECT_TRUE(r.sum_invariant());

    const RigidScaledTransform& tf = st.object_transform;
    std::vector<Vec3> hp, rp, rn;
    for (int i : pb.parts.vertices) hp.push_back(pb.body.vertices[i]);
    for (std::size_t k = 0; k < pb.region.points.size(); ++k) {
      rp.push_back(tf.apply(pb.region.points[k]));
      rn.push_back(tf.rotate(pb.region.normals[k]));
    }
    const double inter = brute_weighted_chamfer(hp, rp, pb.region.region.weights);
    double normal = 0.0;
    for (int i : pb.contacts) {
      const Vec3& h = pb.body.vertices[i];
      std::vector<int> near;
      int best = 0;
      for (std::size_t k = 0; k < rp.size(); ++k) {
        if ((rp[k] - h).norm() <= pb.contact.pair_radius) near.push_back(static_cast<int>(k));
        if (squared_distance(rp[k], h) < squared_distance(rp[best], h)) best = static_cast<int>(k);
      }
      if (near.empty()) near.push_back(best);
      for (int k : near) normal += std::pow(pb.body.vertex_normals[i].dot(rn[k]) + 1.0, 2);
    }
    const double scale = std::pow(tf.log_scale - pb.init_log_scale, 2);
    const TriMesh ow = transformed(*pb.object, tf);
    const double ground = std::pow(bounds(ow.vertices).lo.y(), 2);
    const double pene = penetration_energy(pb.body.vertices, ow);
    const double expect = w.phi_i * inter + w.phi_n * normal + w.phi_s * scale + w.phi_p * pene +
                          w.ground_weight * ground;
    EXPECT_NEAR(r.per_term.at("inter"), inter, 1e-12);
    EXPECT_NEAR(r.per_term.at("normal"), normal, 1e-9);
    EXPECT_NEAR(r.per_term.at("pene"), pene, 1e-9 * std::max(1.0, pene));
    EXPECT_NEAR(r.total, expect, 1e-8 * std::max(1.0, expect));
  }
}

TEST(LossGlobal, PenetrationOnlyWeights) {
  const LossWeights w = [] {
    LossWeights x = only(&LossWeights::phi_p);
    x.phi_p = 10.0;
    return x;
  }();
  const GlobalProblem pb = cube_global(w);
  std::mt19937_64 rng(25);
  const OptState st = random_global_state(rng);
  const LossReport r = loss_global(st, pb);
  EXPECT_GT(r.per_term.at("pene"), 0.0);
  EXPECT_EQ(r.total, 10.0 * r.per_term.at("pene"));
}

TEST(LossGlobal, ZeroWeightsGiveZeroTotal) {
  LossWeights w = only(&LossWeights::phi_i);
  w.phi_i = 0.0;
  std::mt19937_64 rng(26);
  EXPECT_EQ(loss_global(random_global_state(rng), cube_global(w)).total, 0.0);
}

TEST(LossGlobal, WrongPhaseRejected) {
  OptState st;
  st.phase = Phase::fine_body;
  st.body_params = cube().init_pose;
  EXPECT_THROW(loss_global(st, cube_global({})), Error);
  st.phase = Phase::global;
  EXPECT_THROW(loss_fine(st, cube_fine({})), Error);
}

TEST(LossGlobal, TotalGradientMatchesFiniteDifferences) {
  const GlobalProblem pb = cube_global(LossWeights{});
  std::mt19937_64 rng(27);
  for (int t = 0; t < 20; ++t) {
    const OptState st = random_global_state(rng);
    EXPECT_LT(global_gradient_error(pb, st), 1e-3) << t;
  }
}

TEST(LossFine, SumInvariantAndTotalGradient) {
  const FineProblem pb = cube_fine(LossWeights{});
  std::mt19937_64 rng(28);
  for (int t = 0; t < 20; ++t) {
    const OptState st = random_fine_state(rng, t % 2 ? Phase::fine_hand : Phase::fine_body);
    const LossReport r = loss_fine(st, pb);
    EXPECT_TRUE(r.sum_invariant());
    EXPECT_LT(fine_gradient_error(pb, st), 1e-3) << t;
  }
}

TEST(LossFine, ZeroDeltaDropsForceClosure) {
  LossWeights w;
  w.delta_fc = 0.0;
  const FineProblem pb = cube_fine(w);
  std::mt19937_64 rng(29);
  const OptState st = random_fine_state(rng, Phase::fine_hand);
  const LossReport r = loss_fine(st, pb);
  const double expect = w.phi_p * (r.per_term.at("pene_interacted") + r.per_term.at("pene_other")) +
                        w.phi_i * r.per_term.at("inter") + w.joint_limit_weight * r.per_term.at("joint_limit") +
                        w.hinge_weight * r.per_term.at("hinge");
  EXPECT_NEAR(r.total, expect, 1e-12 * std::max(1.0, expect));
}

// Two mirrored finger pads either side of a 40 um plate, 20 um off each
// face. The pad faces toward the plate are the interacted part.
struct PerfectGrasp {
  BodyTemplate body;
  TriMesh plate;
  RegionGeometry region;
  PerfectGrasp() {
    const double e = 2e-5, g = 2e-5;
    const TriMesh pad = shapes::box(Vec3(-e - g - 0.02, -0.01, -0.01), Vec3(-e - g, 0.01, 0.01));
    TriMesh mirror = pad;
    for (auto& v : mirror.vertices) v.x() = -v.x();
    for (auto& f : mirror.faces) std::swap(f[1], f[2]);
    const TriMesh hands = merge(std::vector<TriMesh>{pad, mirror});
    const int V = hands.vertex_count();
    body.template_vertices = hands.vertices;
    body.faces = hands.faces;
    body.kinematic_parents = {-1};
    body.joint_names = {"root"};
    body.skinning_weights.resize(V, 1);
    body.joint_regressor.resize(1, V);
    for (int i = 0; i < V; ++i) {
      body.skinning_weights.insert(i, 0) = 1.0;
      body.joint_regressor.insert(0, i) = 1.0 / V;
    }
    body.shape_dirs = Eigen::MatrixXd::Zero(3 * V, 1);
    std::vector<int> faces;
    for (int i = 0; i < V; ++i)
      if (std::abs(std::abs(hands.vertices[i].x()) - (e + g)) < 1e-12) faces.push_back(i);
    body.part_labels["right_hand"] = faces;
    validate_template(body);

    plate = shapes::box(Vec3(-e, -0.05, -0.05), Vec3(e, 0.05, 0.05));
    for (int i : faces) {
      const Vec3 v = hands.vertices[i];
      const double side = v.x() < 0 ? -1.0 : 1.0;
      region.region.indices.push_back(static_cast<int>(region.points.size()));
      region.region.weights.push_back(1.0);
      region.points.emplace_back(side * e, v.y(), v.z());
      region.normals.push_back(side * Vec3::UnitX());
    }
  }
};

TEST(LossFine, PerfectGraspNearZero) {
  const PerfectGrasp f;
  ContactSettings cs;
  cs.pair_radius = 1e-3;
  const FineProblem pb = FineProblem::make(f.body, resolve_parts(f.body, {"right_hand"}), f.plate, f.region,
                                           RigidScaledTransform{}, cs, LossWeights{});
  ASSERT_TRUE(admits_closure(f.region.normals));
  OptState st;
  st.phase = Phase::fine_hand;
  st.body_params = BodyParams::zeros(f.body);
  const LossReport r = loss_fine(st, pb);
  EXPECT_GT(r.weights.at("fc"), 0.0);
  EXPECT_EQ(r.penetration_volume_proxy, 0.0);
  EXPECT_LT(r.total, 1e-6);
  for (const auto& [k, v] : r.per_term) EXPECT_LT(v, 1e-6) << k;
}

TEST(LossReport, JsonRoundTrip) {
  std::mt19937_64 rng(30);
  const LossReport r = loss_global(random_global_state(rng), cube_global({}));
  const LossReport back = report_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(back.total, r.total);
  EXPECT_EQ(back.per_term, r.per_term);
  EXPECT_EQ(back.weights, r.weights);
  EXPECT_TRUE(back.sum_invariant());
}

// ---------------------------------------------------------------------------
// Optimizer.

Objective quadratic(double target, bool analytic = true) {
  return [=](std::span<const double> x) {
    Evaluation e;
    double f = 0.0;
    for (double v : x) f += (v - target) * (v - target);
    e.report.add("quad", 1.0, f);
    if (analytic)
      for (double v : x) e.grad.push_back(2.0 * (v - target));
    return e;
  };
}

TEST(Minimize, QuadraticConvergesToThree) {
  for (bool analytic : {true, false}) {
    Schedule sc;
    sc.learning_rate = 0.1;
    const auto r = run_phase({0.0}, quadratic(3.0, analytic), sc);
    EXPECT_FALSE(r.aborted);
    EXPECT_NEAR(r.x[0], 3.0, 1e-4) << (analytic ? "analytic" : "finite differences");
  }
}

TEST(Minimize, StartAtOptimumStopsQuickly) {
  const auto r = run_phase({3.0, 3.0, 3.0}, quadratic(3.0), Schedule{});
  EXPECT_LE(r.trace.size(), 12u);  // start plus at most 11 iterations
  for (double v : r.x) EXPECT_NEAR(v, 3.0, 1e-6);
}

TEST(Minimize, TraceNeverIncreases) {
  const Objective rosen = [](std::span<const double> x) {
    Evaluation e;
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    e.report.add("rosenbrock", 1.0, a * a + 100.0 * b * b);
    e.grad = {-2.0 * a - 400.0 * x[0] * b, 200.0 * b};
    return e;
  };
  const auto r = run_phase({-1.2, 1.0}, rosen, Schedule{5000, 0.001});
  for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_LE(r.trace[k].total, r.trace[k - 1].total);
  EXPECT_NEAR(r.x[0], 1.0, 1e-3);
  EXPECT_NEAR(r.x[1], 1.0, 1e-3);
}

TEST(Minimize, NonFiniteLossAbortsWithLastValidPoint) {
  const Objective f = [](std::span<const double> x) {
    Evaluation e;
    const double v = x[0] > 1.0 ? std::nan("") : (x[0] - 5.0) * (x[0] - 5.0);
    e.report.add("f", 1.0, v);
    e.grad = {2.0 * (x[0] - 5.0)};
    return e;
  };
  const auto r = run_phase({0.0}, f, Schedule{500, 0.1});
  EXPECT_TRUE(r.aborted);
  EXPECT_FALSE(r.message.empty());
  EXPECT_LE(r.x[0], 1.0);
  EXPECT_EQ(r.x, r.iterates.back());
  for (const auto& rep : r.trace) EXPECT_TRUE(std::isfinite(rep.total));

  const Objective bad = [](std::span<const double>) {
    Evaluation e;
    e.report.add("f", 1.0, kInf);
    return e;
  };
  const auto s = run_phase({1.0}, bad, Schedule{});
  EXPECT_TRUE(s.aborted);
  EXPECT_EQ(s.x, std::vector<double>{1.0});
}

TEST(Minimize, InvalidScheduleRejected) {
  Schedule sc;
  sc.learning_rate = 0.0;
  EXPECT_THROW(minimize({0.0}, quadratic(1.0), sc), Error);
}

// ---------------------------------------------------------------------------
// Full optimization on the cube.

const PipelineResult& cube_run() {
  static const PipelineResult r = fixture::run_cube(cube());
  return r;
}

TEST(Pipeline, CubeTouchReachesContactWithoutPenetration) {
  const auto& r = cube_run();
  ASSERT_FALSE(r.aborted) << r.message;
  EXPECT_LT(r.contact_distance, 0.01);
  EXPECT_LT(r.penetration_energy, 1e-6);
  EXPECT_LT(std::abs(r.object_min_y), 1e-3);
  ASSERT_EQ(r.phases.size(), 3u);
}

TEST(Pipeline, PhasesFreezeTheirVariables) {
  const auto& r = cube_run();
  const auto& s = cube();
  for (const auto& ph : r.phases) {
    ASSERT_FALSE(ph.trace.empty());
    for (const auto& e : ph.trace) {
      if (ph.state.phase == Phase::global)
        EXPECT_EQ(e.body_digest, s.init_pose.digest());
      else
        EXPECT_EQ(e.object_transform, r.phases[0].state.object_transform);
    }
  }
  EXPECT_EQ(r.phases[0].state.body_params, s.init_pose);
  EXPECT_EQ(r.phases[1].state.body_params.theta_hands, s.init_pose.theta_hands);
  EXPECT_EQ(r.phases[2].state.body_params.theta_body, r.phases[1].state.body_params.theta_body);
  EXPECT_EQ(r.phases[2].state.body_params.trans, r.phases[1].state.body_params.trans);
  EXPECT_EQ(r.state.object_transform, r.phases[0].state.object_transform);
}

TEST(Pipeline, EveryTraceEntrySatisfiesSumInvariant) {
  for (const auto& e : cube_run().trace) EXPECT_TRUE(e.report.sum_invariant());
}

TEST(Pipeline, DeterministicAcrossReruns) {
  const PipelineResult again = fixture::run_cube(cube());
  EXPECT_EQ(again.state.object_transform, cube_run().state.object_transform);
  EXPECT_EQ(again.state.body_params, cube_run().state.body_params);
  ASSERT_EQ(again.trace.size(), cube_run().trace.size());
  for (std::size_t k = 0; k < again.trace.size(); ++k)
    EXPECT_EQ(to_json(again.trace[k]).dump(), to_json(cube_run().trace[k]).dump());
}

TEST(Pipeline, ZeroWeightsLeaveStateUnchanged) {
  PipelineOptions opt;
  opt.weights = only(&LossWeights::phi_i);
  opt.weights.phi_i = 0.0;
  const PipelineResult r = fixture::run_cube(cube(), opt);
  EXPECT_EQ(r.state.object_transform, cube().placement.object_transform);
  EXPECT_EQ(r.state.body_params, cube().init_pose);
}

TEST(Pipeline, GlobalOnlyKeepsBody) {
  PipelineOptions opt;
  opt.run_fine = false;
  const PipelineResult r = fixture::run_cube(cube(), opt);
  ASSERT_EQ(r.phases.size(), 1u);
  EXPECT_EQ(r.state.body_params, cube().init_pose);
  EXPECT_NE(r.state.object_transform, cube().placement.object_transform);
}

TEST(Pipeline, RandomStartsDescendMonotonically) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  int monotone = 0;
  const int starts = 20;
  for (int s = 0; s < starts; ++s) {
    fixture::CubeScenario sc = cube();
    auto& tf = sc.placement.object_transform;
    tf.rotation += 0.2 * Vec3(n(rng), n(rng), n(rng));
    tf.translation += 0.1 * Vec3(n(rng), 0.5 * n(rng), n(rng));
    PipelineOptions opt;
    opt.contact.seed = static_cast<std::uint64_t>(s);
    const PipelineResult r = fixture::run_cube(sc, opt);
    bool ok = !r.aborted;
    for (const auto& ph : r.phases)
      for (std::size_t k = 21; k < ph.trace.size(); ++k)
        ok = ok && ph.trace[k].report.total <= ph.trace[k - 1].report.total;
    monotone += ok;
  }
  EXPECT_GE(monotone, 19);
}

}  // namespace
}  // namespace afford
