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

// Synthetic capsule-limb body with the SMPL-H joint layout (22 body joints
// including the root, 15 joints per hand), 890 vertices and 10 shape
// coefficients. The rest pose is a T-pose facing +z with y up, left side on
// +x, feet on y = 0 and total height 1.7 m.

#pragma once

#include "afford/bodymodel.hpp"
#include "afford/shapes.hpp"

namespace afford::stick_body {

inline constexpr double kHeight = 1.7;
inline constexpr int kBodyJoints = 21;
inline constexpr int kHandJoints = 15;
inline constexpr int kNumBetas = 10;

inline const std::vector<std::string>& joint_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n{"pelvis",     "left_hip",       "right_hip",     "spine1",
                               "left_knee",  "right_knee",     "spine2",        "left_ankle",
                               "right_ankle", "spine3",        "left_foot",     "right_foot",
                               "neck",       "left_collar",    "right_collar",  "head",
                               "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
                               "left_wrist", "right_wrist"};
    for (const char* side : {"left", "right"})
      for (const char* finger : {"index", "middle", "pinky", "ring", "thumb"})
        for (int k = 1; k <= 3; ++k)
          n.push_back(std::string(side) + "_" + finger + std::to_string(k));
    return n;
  }();
  return names;
}

inline std::vector<int> parents() {
  std::vector<int> p{-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
  for (int wrist : {20, 21})
    for (int finger = 0; finger < 5; ++finger) {
      const int base = static_cast<int>(p.size());
      p.push_back(wrist);
      p.push_back(base);
      p.push_back(base + 1);
    }
  return p;
}

namespace detail {

struct Bone {
  int joint;
  Vec3 start, end;
  double radius;
  int segments, rings;
  int child;  // joint at `end`, or -1
  std::string part;
};

// Left-side rest joint positions; the right side mirrors x.
inline std::vector<Vec3> rest_joints() {
  std::vector<Vec3> j(52, Vec3::Zero());
  auto both = [&](int left, const Vec3& p) {
    j[left] = p;
    j[left + 1] = Vec3(-p.x(), p.y(), p.z());
  };
  j[0] = {0.0, 0.93, 0.0};
  both(1, {0.09, 0.88, 0.0});
  j[3] = {0.0, 1.03, 0.0};
  both(4, {0.09, 0.50, 0.0});
  j[6] = {0.0, 1.15, 0.0};
  both(7, {0.09, 0.10, 0.0});
  j[9] = {0.0, 1.27, 0.0};
  both(10, {0.09, 0.04, 0.09});
  j[12] = {0.0, 1.44, 0.0};
  both(13, {0.06, 1.39, 0.0});
  j[15] = {0.0, 1.52, 0.0};
  both(16, {0.18, 1.41, 0.0});
  both(18, {0.46, 1.41, 0.0});
  both(20, {0.71, 1.41, 0.0});
  return j;
}

struct FingerSpec {
  Vec3 base;
  Vec3 direction;
  std::array<double, 3> lengths;
};

inline std::array<FingerSpec, 5> left_fingers() {
  return {{{{0.800, 1.41, 0.027}, {1, 0, 0}, {0.035, 0.025, 0.020}},
           {{0.805, 1.41, 0.009}, {1, 0, 0}, {0.040, 0.028, 0.022}},
           {{0.790, 1.41, -0.027}, {1, 0, 0}, {0.028, 0.020, 0.018}},
           {{0.800, 1.41, -0.009}, {1, 0, 0}, {0.037, 0.026, 0.020}},
           {{0.740, 1.40, 0.035}, Vec3(0.6, 0, 0.8), {0.035, 0.030, 0.025}}}};
}

inline std::vector<Bone> bones(std::vector<Vec3>& joints) {
  std::vector<Bone> b;
  auto mirror = [](const Vec3& p) { return Vec3(-p.x(), p.y(), p.z()); };
  auto add = [&](int j, const Vec3& end, int child, double r, int s, int rings,
                 const std::string& part) { b.push_back({j, joints[j], end, r, s, rings, child, part}); };
  auto pair = [&](int left, int child_left, double r, int s, int rings, const std::string& part) {
    add(left, joints[child_left], child_left, r, s, rings, "left_" + part);
    add(left + 1, joints[child_left + 1], child_left + 1, r, s, rings, "right_" + part);
  };
  add(0, joints[3], 3, 0.13, 8, 4, "pelvis");
  pair(1, 4, 0.07, 8, 4, "thigh");
  add(3, joints[6], 6, 0.13, 8, 4, "torso");
  pair(4, 7, 0.055, 8, 4, "calf");
  add(6, joints[9], 9, 0.14, 8, 4, "torso");
  pair(7, 10, 0.045, 6, 3, "foot");
  add(9, joints[12], 12, 0.13, 8, 4, "torso");
  add(10, Vec3(0.09, 0.04, 0.19), -1, 0.04, 6, 2, "left_foot");
  add(11, Vec3(-0.09, 0.04, 0.19), -1, 0.04, 6, 2, "right_foot");
  add(12, joints[15], 15, 0.05, 7, 2, "head");
  add(13, joints[16], 16, 0.05, 7, 2, "torso");
  add(14, joints[17], 17, 0.05, 7, 2, "torso");
  add(15, Vec3(0.0, 1.64, 0.0), -1, 0.095, 8, 5, "head");
  pair(16, 18, 0.045, 8, 5, "upper_arm");
  pair(18, 20, 0.04, 8, 5, "forearm");
  add(20, Vec3(0.79, 1.41, 0.0), -1, 0.035, 8, 3, "left_hand");
  add(21, mirror(Vec3(0.79, 1.41, 0.0)), -1, 0.035, 8, 3, "right_hand");

  const auto fingers = left_fingers();
  for (int side = 0; side < 2; ++side) {
    int joint = 22 + side * 15;
    for (const auto& f : fingers) {
      Vec3 p = side == 0 ? f.base : mirror(f.base);
      const Vec3 dir = (side == 0 ? f.direction : mirror(f.direction)).normalized();
      for (int seg = 0; seg < 3; ++seg) {
        joints[joint] = p;
        const Vec3 next = p + f.lengths[seg] * dir;
        const int child = seg < 2 ? joint + 1 : -1;
        add(joint, next, child, 0.009, 3, 2, side == 0 ? "left_hand" : "right_hand");
        p = next;
        ++joint;
      }
    }
  }
  std::sort(b.begin(), b.end(), [](const Bone& x, const Bone& y) { return x.joint < y.joint; });
  return b;
}

}  // namespace detail

inline BodyTemplate make_template() {
  std::vector<Vec3> joints = detail::rest_joints();
  const auto bones = detail::bones(joints);

  BodyTemplate t;
  t.kinematic_parents = parents();
  t.joint_names = joint_names();
  t.body_joint_count = kBodyJoints;
  t.hand_joint_count = kHandJoints;
  const int K = static_cast<int>(t.kinematic_parents.size());

  std::vector<Eigen::Triplet<double>> weights, regressor;
  std::vector<Vec3> verts;
  std::vector<Vec3> radial;  // unit offset from the bone axis, for the girth basis
  for (const auto& bone : bones) {
    const auto tube = shapes::tube(bone.start, bone.end, bone.radius, bone.segments, bone.rings);
    const int base = static_cast<int>(verts.size());
    const Vec3 axis = (bone.end - bone.start).normalized();
    for (std::size_t i = 0; i < tube.mesh.vertices.size(); ++i) {
      const Vec3& v = tube.mesh.vertices[i];
      verts.push_back(v);
      Vec3 off = v - bone.start;
      off -= axis * off.dot(axis);
      radial.push_back(off.norm() > 1e-12 ? Vec3(off.normalized()) : axis);
      const double s = tube.ring_param[i];
      const int row = base + static_cast<int>(i);
      double w_child = 0.0;
      if (bone.child >= 0 && s > 0.7) w_child = 0.5 * (s - 0.7) / 0.3;
      weights.emplace_back(row, bone.joint, 1.0 - w_child);
      if (w_child > 0.0) weights.emplace_back(row, bone.child, w_child);
    }
    for (int k = 0; k < bone.segments; ++k)
      regressor.emplace_back(bone.joint, base + k, 1.0 / bone.segments);
    for (const auto& f : tube.mesh.faces) t.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
    auto& part = t.part_labels[bone.part];
    for (std::size_t i = 0; i < tube.mesh.vertices.size(); ++i) part.push_back(base + static_cast<int>(i));
    if (bone.part == "torso" && (bone.joint == 3 || bone.joint == 6 || bone.joint == 9) ) {
      auto& back = t.part_labels["back"];
      for (std::size_t i = 0; i < tube.mesh.vertices.size(); ++i)
        if (tube.mesh.vertices[i].z() < -0.02) back.push_back(base + static_cast<int>(i));
    }
  }

  // Normalise to the nominal height with the soles on y = 0.
  double lo = kInf, hi = -kInf;
  for (const auto& v : verts) {
    lo = std::min(lo, v.y());
    hi = std::max(hi, v.y());
  }
  const double scale = kHeight / (hi - lo);
  for (auto& v : verts) v = Vec3(v.x() * scale, (v.y() - lo) * scale, v.z() * scale);
  t.template_vertices = verts;

  const int V = static_cast<int>(verts.size());
  t.skinning_weights.resize(V, K);
  t.skinning_weights.setFromTriplets(weights.begin(), weights.end());
  t.joint_regressor.resize(K, V);
  t.joint_regressor.setFromTriplets(regressor.begin(), regressor.end());

  // Shape basis: stature, breadth, girth, then small smooth fields.
  t.shape_dirs = Eigen::MatrixXd::Zero(3 * V, kNumBetas);
  for (int i = 0; i < V; ++i) {
    const Vec3& v = verts[i];
    t.shape_dirs(3 * i + 1, 0) = 0.05 * v.y();
    t.shape_dirs(3 * i + 0, 1) = 0.03 * v.x();
    t.shape_dirs(3 * i + 2, 1) = 0.03 * v.z();
    for (int a = 0; a < 3; ++a) t.shape_dirs(3 * i + a, 2) = 0.01 * radial[i][a];
    for (int b = 3; b < kNumBetas; ++b) {
      const double f = 1.5 + 0.7 * b;
      t.shape_dirs(3 * i + 0, b) = 0.004 * std::sin(f * v.y() + b);
      t.shape_dirs(3 * i + 1, b) = 0.004 * std::cos(f * v.x() + 0.5 * b);
      t.shape_dirs(3 * i + 2, b) = 0.004 * std::sin(f * (v.x() + v.z()) + 0.3 * b);
    }
  }
  validate_template(t);
  return t;
}

// ---------------------------------------------------------------------------
// Reference poses. Both face -x (root turned -pi/2 about y) so a body at the
// origin looks toward objects placed on the -x side.

inline BodyParams a_pose(const BodyTemplate& t) {
  BodyParams p = BodyParams::zeros(t);
  p.set_joint_rotation(t, 0, Vec3(0.0, -kPi / 2, 0.0));
  p.set_joint_rotation(t, 16, Vec3(0.0, 0.0, -1.1));
  p.set_joint_rotation(t, 17, Vec3(0.0, 0.0, 1.1));
  return p;
}

// Right arm reaching forward and down, left arm relaxed.
inline BodyParams reach_pose(const BodyTemplate& t, double pitch = 0.9) {
  BodyParams p = a_pose(t);
  const Mat3 R = Eigen::AngleAxisd(pitch, Vec3::UnitX()).toRotationMatrix() *
                 Eigen::AngleAxisd(kPi / 2, Vec3::UnitY()).toRotationMatrix();
  p.set_joint_rotation(t, 17, so3::log(R));
  return p;
}

}  // namespace afford::stick_body
