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

// Articulated body with hands: shape blendshapes, a kinematic tree and
// linear blend skinning, plus semantic part labels.
//
// Joint layout follows the SMPL-H convention: joint 0 is the root, joints
// 1..K_b are body joints, followed by K_h joints for the left hand and K_h
// for the right hand. Body pose covers the root and body joints
// (3 (K_b + 1) values), hand pose covers both hands (3 K_h x 2 values).

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <Eigen/Sparse>
#include <json.hpp>

#include "afford/geometry.hpp"

namespace afford {

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Interaction part vocabulary offered to the relation provider.
inline const std::vector<std::string>& part_vocabulary() {
  static const std::vector<std::string> names{
      "head",           "torso",         "pelvis",         "left_upper_arm",
      "right_upper_arm", "left_forearm", "right_forearm",  "left_hand",
      "right_hand",     "left_thigh",    "right_thigh",    "left_calf",
      "right_calf",     "left_foot",     "right_foot",     "back"};
  return names;
}

struct BodyTemplate {
  std::vector<Vec3> template_vertices;
  std::vector<Face> faces;
  SparseRows skinning_weights;  // V x K
  SparseRows joint_regressor;   // K x V
  std::vector<int> kinematic_parents;
  Eigen::MatrixXd shape_dirs;  // 3V x B, rows ordered (v0.x, v0.y, v0.z, v1.x, ...)
  int body_joint_count = 0;
  int hand_joint_count = 0;
  std::map<std::string, std::vector<int>> part_labels;
  std::vector<std::string> joint_names;

  // Derived by validate_template(): parents-before-children order and the
  // ancestor chain (self first) of every joint.
  std::vector<int> joint_order;
  std::vector<std::vector<int>> ancestors;

  int vertex_count() const { return static_cast<int>(template_vertices.size()); }
  int joint_count() const { return static_cast<int>(kinematic_parents.size()); }
  int num_betas() const { return static_cast<int>(shape_dirs.cols()); }
  int body_pose_size() const { return 3 * (body_joint_count + 1); }
  int hand_pose_size() const { return 3 * hand_joint_count * 2; }
  bool is_hand_joint(int j) const { return j > body_joint_count; }
};

struct BodyParams {
  Eigen::VectorXd beta;
  Eigen::VectorXd theta_body;
  Eigen::VectorXd theta_hands;
  Vec3 trans = Vec3::Zero();

  static BodyParams zeros(const BodyTemplate& t) {
    BodyParams p;
    p.beta = Eigen::VectorXd::Zero(t.num_betas());
    p.theta_body = Eigen::VectorXd::Zero(t.body_pose_size());
    p.theta_hands = Eigen::VectorXd::Zero(t.hand_pose_size());
    return p;
  }

  Vec3 joint_rotation(const BodyTemplate& t, int j) const {
    if (j <= t.body_joint_count) return theta_body.segment<3>(3 * j);
    return theta_hands.segment<3>(3 * (j - t.body_joint_count - 1));
  }
  void set_joint_rotation(const BodyTemplate& t, int j, const Vec3& w) {
    if (j <= t.body_joint_count)
      theta_body.segment<3>(3 * j) = w;
    else
      theta_hands.segment<3>(3 * (j - t.body_joint_count - 1)) = w;
  }

  bool finite() const {
    return beta.allFinite() && theta_body.allFinite() && theta_hands.allFinite() &&
           trans.allFinite();
  }

  std::uint64_t digest() const {
    std::uint64_t h = fnv1a(std::span<const double>(beta.data(), beta.size()));
    h = fnv1a(std::span<const double>(theta_body.data(), theta_body.size()), h);
    h = fnv1a(std::span<const double>(theta_hands.data(), theta_hands.size()), h);
    return fnv1a(std::span<const double>(trans.data(), 3), h);
  }

  BodyParams canonical(const BodyTemplate& t) const {
    BodyParams p = *this;
    for (int j = 0; j < t.joint_count(); ++j)
      p.set_joint_rotation(t, j, so3::canonicalize(joint_rotation(t, j)));
    return p;
  }

  bool operator==(const BodyParams& o) const {
    return beta == o.beta && theta_body == o.theta_body && theta_hands == o.theta_hands &&
           trans == o.trans;
  }
};

struct PartSelection {
  std::vector<std::string> labels;
  std::vector<int> vertices;  // sorted, unique
};

// Checks every template invariant, collecting one message per violated
// field, and fills the derived kinematic order.
inline void validate_template(BodyTemplate& t) {
  std::vector<std::string> problems;
  const int V = t.vertex_count();
  const int K = t.joint_count();
  if (V == 0) problems.push_back("template_vertices: empty");
  if (K == 0) problems.push_back("kinematic_parents: empty");
  if (t.body_joint_count < 0 || t.hand_joint_count < 0 ||
      K != t.body_joint_count + 1 + 2 * t.hand_joint_count)
    problems.push_back("joint counts: K=" + std::to_string(K) + " but body_joint_count=" +
                       std::to_string(t.body_joint_count) + " and hand_joint_count=" +
                       std::to_string(t.hand_joint_count) + " imply " +
                       std::to_string(t.body_joint_count + 1 + 2 * t.hand_joint_count));
  for (std::size_t f = 0; f < t.faces.size(); ++f)
    for (int idx : t.faces[f])
      if (idx < 0 || idx >= V) {
        problems.push_back("faces: face " + std::to_string(f) + " index " +
                           std::to_string(idx) + " out of range");
        break;
      }

  if (t.skinning_weights.rows() != V || t.skinning_weights.cols() != K) {
    problems.push_back("weights: shape " + std::to_string(t.skinning_weights.rows()) + "x" +
                       std::to_string(t.skinning_weights.cols()) + ", expected " +
                       std::to_string(V) + "x" + std::to_string(K));
  } else {
    for (int i = 0; i < V; ++i) {
      double sum = 0.0;
      bool negative = false;
      for (SparseRows::InnerIterator it(t.skinning_weights, i); it; ++it) {
        sum += it.value();
        negative |= it.value() < 0.0;
      }
      if (negative || std::abs(sum - 1.0) > 1e-6) {
        std::ostringstream os;
        os << "weights: row " << i << (negative ? " has a negative entry" : "")
           << " sums to " << sum << " (expected 1)";
        problems.push_back(os.str());
        break;
      }
    }
  }
  if (t.joint_regressor.rows() != K || t.joint_regressor.cols() != V)
    problems.push_back("regressor: shape " + std::to_string(t.joint_regressor.rows()) + "x" +
                       std::to_string(t.joint_regressor.cols()) + ", expected " +
                       std::to_string(K) + "x" + std::to_string(V));
  if (t.shape_dirs.rows() != 3 * V)
    problems.push_back("shape_dirs: " + std::to_string(t.shape_dirs.rows()) + " rows, expected " +
                       std::to_string(3 * V));
  for (const auto& [name, verts] : t.part_labels)
    for (int v : verts)
      if (v < 0 || v >= V) {
        problems.push_back("part_labels: '" + name + "' vertex " + std::to_string(v) +
                           " out of range");
        break;
      }

  // Kinematic tree: a single root, every parent index valid, no cycles.
  t.joint_order.clear();
  t.ancestors.assign(K, {});
  int roots = 0;
  bool parents_ok = true;
  for (int j = 0; j < K; ++j) {
    const int p = t.kinematic_parents[j];
    if (p < 0) {
      ++roots;
    } else if (p >= K || p == j) {
      parents_ok = false;
    }
  }
  if (K > 0 && t.kinematic_parents[0] >= 0) {
    problems.push_back("kinematics: parent[0] must be -1 (root)");
    parents_ok = false;
  }
  if (roots != 1 && K > 0) {
    problems.push_back("kinematics: expected a single root, found " + std::to_string(roots));
    parents_ok = false;
  }
  if (parents_ok) {
    for (int j = 0; j < K && parents_ok; ++j) {
      std::vector<int> chain{j};
      int cur = t.kinematic_parents[j];
      while (cur >= 0) {
        if (static_cast<int>(chain.size()) > K) {
          problems.push_back("kinematics: cycle through joint " + std::to_string(j));
          parents_ok = false;
          break;
        }
        chain.push_back(cur);
        cur = t.kinematic_parents[cur];
      }
      if (parents_ok) t.ancestors[j] = std::move(chain);
    }
  } else if (roots == 1) {
    problems.push_back("kinematics: invalid parent index");
  }
  if (parents_ok) {
    std::vector<int> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return t.ancestors[a].size() < t.ancestors[b].size();
    });
    t.joint_order = std::move(order);
  }

  if (!problems.empty()) {
    std::string msg = "body template invalid:";
    for (const auto& p : problems) msg += "\n  " + p;
    fail(ErrorKind::data, msg);
  }
}

// ---------------------------------------------------------------------------
// Forward kinematics and skinning.

struct PosedSkeleton {
  std::vector<Vec3> rest_joints;       // J(beta)
  std::vector<Mat3> world_rotation;    // per joint
  std::vector<Vec3> joint_offset;      // posed minus rest joint position
  std::vector<Vec3> world_position;    // per joint, before global translation
  std::vector<Vec3> shaped_vertices;   // T_p(beta)
};

inline void check_dimensions(const BodyTemplate& t, const BodyParams& p) {
  if (p.beta.size() != t.num_betas() || p.theta_body.size() != t.body_pose_size() ||
      p.theta_hands.size() != t.hand_pose_size())
    fail(ErrorKind::precondition,
         "body params dimension mismatch: beta " + std::to_string(p.beta.size()) + "/" +
             std::to_string(t.num_betas()) + ", theta_body " +
             std::to_string(p.theta_body.size()) + "/" + std::to_string(t.body_pose_size()) +
             ", theta_hands " + std::to_string(p.theta_hands.size()) + "/" +
             std::to_string(t.hand_pose_size()));
}

inline std::vector<Vec3> shaped_vertices(const BodyTemplate& t, const Eigen::VectorXd& beta) {
  std::vector<Vec3> out(t.template_vertices);
  if (beta.size() == 0 || beta.isZero(0.0)) return out;
  const Eigen::VectorXd delta = t.shape_dirs * beta;
  for (int i = 0; i < t.vertex_count(); ++i) out[i] += delta.segment<3>(3 * i);
  return out;
}

inline std::vector<Vec3> regress_joints(const BodyTemplate& t, std::span<const Vec3> verts) {
  std::vector<Vec3> joints(t.joint_count(), Vec3::Zero());
  for (int k = 0; k < t.joint_count(); ++k)
    for (SparseRows::InnerIterator it(t.joint_regressor, k); it; ++it)
      joints[k] += it.value() * verts[it.col()];
  return joints;
}

inline PosedSkeleton pose_skeleton(const BodyTemplate& t, const BodyParams& p) {
  check_dimensions(t, p);
  PosedSkeleton s;
  s.shaped_vertices = shaped_vertices(t, p.beta);
  s.rest_joints = regress_joints(t, s.shaped_vertices);
  const int K = t.joint_count();
  s.world_rotation.assign(K, Mat3::Identity());
  s.joint_offset.assign(K, Vec3::Zero());
  // Offsets are accumulated as displacements so the identity pose reproduces
  // the rest geometry bit for bit.
  for (int j : t.joint_order) {
    const Mat3 local = so3::exp(p.joint_rotation(t, j));
    const int parent = t.kinematic_parents[j];
    if (parent < 0) {
      s.world_rotation[j] = local;
    } else {
      s.world_rotation[j] = s.world_rotation[parent] * local;
      s.joint_offset[j] =
          s.joint_offset[parent] + (s.world_rotation[parent] - Mat3::Identity()) *
                                       (s.rest_joints[j] - s.rest_joints[parent]);
    }
  }
  s.world_position.resize(K);
  for (int j = 0; j < K; ++j) s.world_position[j] = s.rest_joints[j] + s.joint_offset[j];
  return s;
}

// Displacement of rest point v when carried rigidly by joint k.
inline Vec3 joint_displacement(const PosedSkeleton& s, int k, const Vec3& v) {
  return (s.world_rotation[k] - Mat3::Identity()) * (v - s.rest_joints[k]) + s.joint_offset[k];
}

inline Vec3 joint_carry(const PosedSkeleton& s, int k, const Vec3& v) {
  return v + joint_displacement(s, k, v);
}

inline std::vector<Vec3> skin_vertices(const BodyTemplate& t, const BodyParams& p,
                                       const PosedSkeleton& s) {
  std::vector<Vec3> out(t.vertex_count(), Vec3::Zero());
  for (int i = 0; i < t.vertex_count(); ++i) {
    Vec3 acc = Vec3::Zero();
    for (SparseRows::InnerIterator it(t.skinning_weights, i); it; ++it)
      acc += it.value() * joint_displacement(s, static_cast<int>(it.col()), s.shaped_vertices[i]);
    out[i] = s.shaped_vertices[i] + acc + p.trans;
  }
  return out;
}

inline TriMesh skin(const BodyTemplate& t, const BodyParams& p) {
  const PosedSkeleton s = pose_skeleton(t, p);
  TriMesh m;
  m.vertices = skin_vertices(t, p, s);
  m.faces = t.faces;
  m.update_normals();
  return m;
}

// Gradient of a loss with respect to pose and translation, given the
// gradient with respect to every posed vertex.
struct PoseGradient {
  Eigen::VectorXd theta_body;
  Eigen::VectorXd theta_hands;
  Vec3 trans = Vec3::Zero();
};

inline PoseGradient skin_vjp(const BodyTemplate& t, const BodyParams& p, const PosedSkeleton& s,
                             std::span<const Vec3> grad_vertices) {
  const int K = t.joint_count();
  std::vector<Vec3> torque(K, Vec3::Zero());
  PoseGradient g;
  for (int i = 0; i < t.vertex_count(); ++i) {
    const Vec3& gi = grad_vertices[i];
    if (gi.isZero(0.0)) continue;
    g.trans += gi;
    for (SparseRows::InnerIterator it(t.skinning_weights, i); it; ++it) {
      const int k = static_cast<int>(it.col());
      const Vec3 x = joint_carry(s, k, s.shaped_vertices[i]);
      for (int j : t.ancestors[k]) torque[j] += it.value() * (x - s.world_position[j]).cross(gi);
    }
  }
  g.theta_body = Eigen::VectorXd::Zero(t.body_pose_size());
  g.theta_hands = Eigen::VectorXd::Zero(t.hand_pose_size());
  for (int j = 0; j < K; ++j) {
    const Vec3 w = p.joint_rotation(t, j);
    const Vec3 gj = so3::right_jacobian(w).transpose() * (s.world_rotation[j].transpose() * torque[j]);
    if (j <= t.body_joint_count)
      g.theta_body.segment<3>(3 * j) = gj;
    else
      g.theta_hands.segment<3>(3 * (j - t.body_joint_count - 1)) = gj;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Parts.

inline PartSelection resolve_parts(const BodyTemplate& t, const std::vector<std::string>& labels) {
  PartSelection sel;
  std::set<int> verts;
  for (const auto& l : labels) {
    auto it = t.part_labels.find(l);
    if (it == t.part_labels.end()) {
      std::string valid;
      for (const auto& [name, _] : t.part_labels) valid += (valid.empty() ? "" : ", ") + name;
      fail(ErrorKind::data, "unknown body part label '" + l + "'; valid labels: " + valid);
    }
    verts.insert(it->second.begin(), it->second.end());
    sel.labels.push_back(l);
  }
  sel.vertices.assign(verts.begin(), verts.end());
  return sel;
}

// ---------------------------------------------------------------------------
// Per-joint box limits on axis-angle components.

struct JointLimits {
  std::vector<Vec3> lower;
  std::vector<Vec3> upper;
};

inline JointLimits default_joint_limits(const BodyTemplate& t, double body = 2.5,
                                        double fingers = 1.6) {
  JointLimits lim;
  for (int j = 0; j < t.joint_count(); ++j) {
    // The root carries global orientation and is left unbounded.
    const double b = j == 0 ? kInf : (t.is_hand_joint(j) ? fingers : body);
    lim.lower.push_back(Vec3::Constant(-b));
    lim.upper.push_back(Vec3::Constant(b));
  }
  return lim;
}

// Sum of squared violations; writes the gradient when requested.
inline double joint_limit_penalty(const BodyTemplate& t, const BodyParams& p,
                                  const JointLimits& lim, PoseGradient* grad = nullptr) {
  require(static_cast<int>(lim.lower.size()) == t.joint_count() &&
              static_cast<int>(lim.upper.size()) == t.joint_count(),
          "joint_limit_penalty: limits must cover all joints");
  if (grad) {
    grad->theta_body = Eigen::VectorXd::Zero(t.body_pose_size());
    grad->theta_hands = Eigen::VectorXd::Zero(t.hand_pose_size());
    grad->trans.setZero();
  }
  double total = 0.0;
  for (int j = 0; j < t.joint_count(); ++j) {
    const Vec3 w = p.joint_rotation(t, j);
    Vec3 g = Vec3::Zero();
    for (int a = 0; a < 3; ++a) {
      double v = 0.0;
      if (w[a] > lim.upper[j][a]) v = w[a] - lim.upper[j][a];
      if (w[a] < lim.lower[j][a]) v = w[a] - lim.lower[j][a];
      total += v * v;
      g[a] = 2.0 * v;
    }
    if (grad) {
      if (j <= t.body_joint_count)
        grad->theta_body.segment<3>(3 * j) = g;
      else
        grad->theta_hands.segment<3>(3 * (j - t.body_joint_count - 1)) = g;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Template file (JSON). Field names:
//   format: "afford-body-template", version: 1
//   vertices: [[x,y,z],...]            faces: [[a,b,c],...]
//   weights:   {"rows":V,"cols":K,"triplets":[[vertex,joint,w],...]}
//   regressor: {"rows":K,"cols":V,"triplets":[[joint,vertex,w],...]}
//   parents: [-1, ...]                 joint_names: [...]
//   shape_dirs: {"num_betas":B,"data":[...]}  data is row-major 3V x B
//   body_joint_count, hand_joint_count
//   part_labels: {"name":[vertex,...],...}

namespace detail {

inline SparseRows sparse_from_json(const nlohmann::json& j, const char* field) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("triplets"))
    fail(ErrorKind::data, std::string(field) + ": expected {rows, cols, triplets}");
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  std::vector<Eigen::Triplet<double>> trips;
  std::size_t n = 0;
  for (const auto& t : j.at("triplets")) {
    if (!t.is_array() || t.size() != 3)
      fail(ErrorKind::data, std::string(field) + ": triplet " + std::to_string(n) +
                                " must be [row, col, value]");
    const int r = t[0].get<int>(), c = t[1].get<int>();
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      fail(ErrorKind::data, std::string(field) + ": triplet " + std::to_string(n) +
                                " index out of range");
    trips.emplace_back(r, c, t[2].get<double>());
    ++n;
  }
  SparseRows m(rows, cols);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

inline nlohmann::json sparse_to_json(const SparseRows& m) {
  nlohmann::json trips = nlohmann::json::array();
  for (int r = 0; r < m.outerSize(); ++r)
    for (SparseRows::InnerIterator it(m, r); it; ++it)
      trips.push_back({static_cast<int>(it.row()), static_cast<int>(it.col()), it.value()});
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"triplets", trips}};
}

}  // namespace detail

inline nlohmann::json template_to_json(const BodyTemplate& t) {
  nlohmann::json j;
  j["format"] = "afford-body-template";
  j["version"] = 1;
  nlohmann::json verts = nlohmann::json::array();
  for (const auto& v : t.template_vertices) verts.push_back({v.x(), v.y(), v.z()});
  j["vertices"] = verts;
  j["faces"] = t.faces;
  j["weights"] = detail::sparse_to_json(t.skinning_weights);
  j["regressor"] = detail::sparse_to_json(t.joint_regressor);
  j["parents"] = t.kinematic_parents;
  j["joint_names"] = t.joint_names;
  std::vector<double> data;
  data.reserve(t.shape_dirs.size());
  for (int r = 0; r < t.shape_dirs.rows(); ++r)
    for (int c = 0; c < t.shape_dirs.cols(); ++c) data.push_back(t.shape_dirs(r, c));
  j["shape_dirs"] = {{"num_betas", t.shape_dirs.cols()}, {"data", data}};
  j["body_joint_count"] = t.body_joint_count;
  j["hand_joint_count"] = t.hand_joint_count;
  j["part_labels"] = t.part_labels;
  return j;
}

inline BodyTemplate template_from_json(const nlohmann::json& j) {
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) fail(ErrorKind::data, std::string("body template: missing field '") + key + "'");
    return j.at(key);
  };
  BodyTemplate t;
  try {
    for (const auto& v : need("vertices")) {
      if (!v.is_array() || v.size() != 3) fail(ErrorKind::data, "vertices: each entry must be [x,y,z]");
      t.template_vertices.emplace_back(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
    }
    for (const auto& f : need("faces")) {
      if (!f.is_array() || f.size() != 3) fail(ErrorKind::data, "faces: each entry must be [a,b,c]");
      t.faces.push_back({f[0].get<int>(), f[1].get<int>(), f[2].get<int>()});
    }
    t.skinning_weights = detail::sparse_from_json(need("weights"), "weights");
    t.joint_regressor = detail::sparse_from_json(need("regressor"), "regressor");
    t.kinematic_parents = need("parents").get<std::vector<int>>();
    if (j.contains("joint_names")) t.joint_names = j.at("joint_names").get<std::vector<std::string>>();
    const auto& sd = need("shape_dirs");
    const int B = sd.at("num_betas").get<int>();
    const auto data = sd.at("data").get<std::vector<double>>();
    const std::size_t rows = 3 * t.template_vertices.size();
    if (data.size() != rows * static_cast<std::size_t>(B))
      fail(ErrorKind::data, "shape_dirs: expected " + std::to_string(rows * B) + " values, got " +
                                std::to_string(data.size()));
    t.shape_dirs.resize(static_cast<Eigen::Index>(rows), B);
    for (std::size_t r = 0; r < rows; ++r)
      for (int c = 0; c < B; ++c) t.shape_dirs(r, c) = data[r * B + c];
    t.body_joint_count = need("body_joint_count").get<int>();
    t.hand_joint_count = need("hand_joint_count").get<int>();
    t.part_labels = need("part_labels").get<std::map<std::string, std::vector<int>>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("body template: ") + e.what());
  }
  validate_template(t);
  return t;
}

inline BodyTemplate load_template(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot open body template " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, path.string() + ": " + e.what());
  }
  return template_from_json(j);
}

inline void save_template(const BodyTemplate& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << template_to_json(t).dump();
}

// Pose files: {"beta":[...], "theta_body":[...], "theta_hands":[...], "trans":[x,y,z]}
inline nlohmann::json params_to_json(const BodyParams& p) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"beta", vec(p.beta)},
          {"theta_body", vec(p.theta_body)},
          {"theta_hands", vec(p.theta_hands)},
          {"trans", {p.trans.x(), p.trans.y(), p.trans.z()}}};
}

inline BodyParams params_from_json(const nlohmann::json& j, const BodyTemplate& t) {
  BodyParams p = BodyParams::zeros(t);
  auto read = [&](const char* key, Eigen::VectorXd& dst) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != dst.size())
      fail(ErrorKind::data, std::string("pose: '") + key + "' has " + std::to_string(v.size()) +
                                " values, expected " + std::to_string(dst.size()));
    dst = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  };
  try {
    read("beta", p.beta);
    read("theta_body", p.theta_body);
    read("theta_hands", p.theta_hands);
    if (j.contains("trans")) {
      const auto v = j.at("trans").get<std::vector<double>>();
      if (v.size() != 3) fail(ErrorKind::data, "pose: 'trans' must have 3 values");
      p.trans = Vec3(v[0], v[1], v[2]);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("pose: ") + e.what());
  }
  if (!p.finite()) fail(ErrorKind::data, "pose: non-finite values");
  return p;
}

}  // namespace afford
