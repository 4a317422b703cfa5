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

// Triangle meshes and the point-set / surface queries built on them:
// area-uniform sampling, nearest neighbours, chamfer distance, winding-number
// inside tests, closest-point distances and the penetration energy.

#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "afford/core.hpp"

namespace afford {

inline constexpr double kDegenerateFaceArea = 1e-12;

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec3> vertex_normals;
  std::vector<Vec3> face_normals;

  bool empty() const { return vertices.empty() || faces.empty(); }
  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }

  // Area-weighted vertex normals; isolated vertices and degenerate faces get
  // +y so every stored normal stays unit length.
  void update_normals() {
    face_normals.assign(faces.size(), Vec3::UnitY());
    vertex_normals.assign(vertices.size(), Vec3::Zero());
    for (std::size_t f = 0; f < faces.size(); ++f) {
      const auto& [a, b, c] = faces[f];
      const Vec3 m = (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]);
      const double len = m.norm();
      if (len > 0.0) face_normals[f] = m / len;
      vertex_normals[a] += m;
      vertex_normals[b] += m;
      vertex_normals[c] += m;
    }
    for (auto& n : vertex_normals) {
      const double len = n.norm();
      n = len > 0.0 ? Vec3(n / len) : Vec3::UnitY();
    }
  }

  double face_area(std::size_t f) const {
    const auto& [a, b, c] = faces[f];
    return 0.5 * (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]).norm();
  }

  double surface_area() const {
    double s = 0.0;
    for (std::size_t f = 0; f < faces.size(); ++f) s += face_area(f);
    return s;
  }
};

// Builds a mesh, validating indices and deriving normals.
inline TriMesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces) {
  for (std::size_t f = 0; f < faces.size(); ++f)
    for (int idx : faces[f])
      if (idx < 0 || static_cast<std::size_t>(idx) >= vertices.size())
        fail(ErrorKind::data, "face " + std::to_string(f) + " index " +
                                  std::to_string(idx) + " out of range (" +
                                  std::to_string(vertices.size()) + " vertices)");
  TriMesh m;
  m.vertices = std::move(vertices);
  m.faces = std::move(faces);
  m.update_normals();
  return m;
}

inline TriMesh transformed(const TriMesh& mesh, const RigidScaledTransform& tf) {
  TriMesh out = mesh;
  const Mat3 R = tf.rotation_matrix();
  const double s = tf.scale();
  for (auto& v : out.vertices) v = s * (R * v) + tf.translation;
  for (auto& n : out.vertex_normals) n = R * n;
  for (auto& n : out.face_normals) n = R * n;
  return out;
}

inline TriMesh merge(const std::vector<TriMesh>& parts) {
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  for (const auto& p : parts) {
    const int base = static_cast<int>(verts.size());
    verts.insert(verts.end(), p.vertices.begin(), p.vertices.end());
    for (const auto& f : p.faces) faces.push_back({f[0] + base, f[1] + base, f[2] + base});
  }
  return make_mesh(std::move(verts), std::move(faces));
}

// Every directed edge appears once and its reverse appears once.
inline bool is_watertight(const TriMesh& mesh) {
  if (mesh.empty()) return false;
  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(mesh.faces.size() * 3);
  auto key = [](int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  };
  for (const auto& f : mesh.faces)
    for (int e = 0; e < 3; ++e) ++directed[key(f[e], f[(e + 1) % 3])];
  for (const auto& [k, count] : directed) {
    if (count != 1) return false;
    const int a = static_cast<int>(k >> 32);
    const int b = static_cast<int>(k & 0xffffffffu);
    auto it = directed.find(key(b, a));
    if (it == directed.end() || it->second != 1) return false;
  }
  return true;
}

struct Aabb {
  Vec3 lo = Vec3::Constant(kInf);
  Vec3 hi = Vec3::Constant(-kInf);
  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void expand(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool valid() const { return (lo.array() <= hi.array()).all(); }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  double squared_distance_to(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(Vec3::Zero());
    return d.squaredNorm();
  }
};

inline Aabb bounds(std::span<const Vec3> pts) {
  Aabb b;
  for (const auto& p : pts) b.expand(p);
  return b;
}

// ---------------------------------------------------------------------------
// Surface sampling.

struct PointSample {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitY();
  int source_face = -1;
  std::array<double, 3> barycentric{1.0, 0.0, 0.0};
};

inline std::vector<Vec3> positions(std::span<const PointSample> samples) {
  std::vector<Vec3> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.position);
  return out;
}

// Area-weighted uniform samples, deterministic for a fixed seed.
inline std::vector<PointSample> sample_surface(const TriMesh& mesh, int count,
                                               std::uint64_t seed) {
  require(count >= 1, "sample_surface: count must be >= 1");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.face_area(f);
    cumulative[f] = total;
  }
  if (!(total > 0.0)) fail(ErrorKind::data, "sample_surface: mesh has zero surface area");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<PointSample> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    const double pick = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    std::size_t f = std::min<std::size_t>(it - cumulative.begin(), mesh.faces.size() - 1);
    while (mesh.face_area(f) <= 0.0) f = (f + 1) % mesh.faces.size();
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    PointSample s;
    s.barycentric = {1.0 - r1, r1 * (1.0 - r2), r1 * r2};
    const auto& [a, b, c] = mesh.faces[f];
    s.position = s.barycentric[0] * mesh.vertices[a] + s.barycentric[1] * mesh.vertices[b] +
                 s.barycentric[2] * mesh.vertices[c];
    s.normal = mesh.face_normals[f];
    s.source_face = static_cast<int>(f);
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nearest neighbours over a static point set. Ties resolve to the lowest
// index so results match a linear scan exactly.

class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    index_.resize(points_.size());
    std::iota(index_.begin(), index_.end(), 0);
    if (!points_.empty()) root_ = build(0, static_cast<int>(points_.size()), 0);
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Vec3>& points() const { return points_; }

  struct Hit {
    int index = -1;
    double squared_distance = kInf;
  };

  Hit nearest(const Vec3& q) const {
    Hit best;
    if (root_ >= 0) search(root_, q, best);
    return best;
  }

  // Indices within radius (inclusive), ascending.
  std::vector<int> within(const Vec3& q, double radius) const {
    std::vector<int> out;
    if (root_ >= 0) collect(root_, q, radius * radius, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  struct Node {
    int begin, end;
    int axis = -1;
    double split = 0.0;
    int left = -1, right = -1;
  };
  static constexpr int kLeafSize = 8;

  int build(int begin, int end, int depth) {
    Node node{begin, end};
    if (end - begin > kLeafSize) {
      Aabb box;
      for (int i = begin; i < end; ++i) box.expand(points_[index_[i]]);
      int axis;
      box.extent().maxCoeff(&axis);
      const int mid = (begin + end) / 2;
      std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                       [&](int a, int b) {
                         return points_[a][axis] < points_[b][axis] ||
                                (points_[a][axis] == points_[b][axis] && a < b);
                       });
      node.axis = axis;
      node.split = points_[index_[mid]][axis];
      const int id = static_cast<int>(nodes_.size());
      nodes_.push_back(node);
      const int l = build(begin, mid, depth + 1);
      const int r = build(mid, end, depth + 1);
      nodes_[id].left = l;
      nodes_[id].right = r;
      return id;
    }
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }

  void search(int id, const Vec3& q, Hit& best) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = index_[i];
        const double d = squared_distance(q, points_[idx]);
        if (d < best.squared_distance || (d == best.squared_distance && idx < best.index)) {
          best.squared_distance = d;
          best.index = idx;
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const int first = diff < 0.0 ? n.left : n.right;
    const int second = diff < 0.0 ? n.right : n.left;
    search(first, q, best);
    // <= keeps equal-distance candidates with a lower index reachable.
    if (diff * diff <= best.squared_distance) search(second, q, best);
  }

  void collect(int id, const Vec3& q, double r2, std::vector<int>& out) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i)
        if (squared_distance(q, points_[index_[i]]) <= r2) out.push_back(index_[i]);
      return;
    }
    const double diff = q[n.axis] - n.split;
    if (diff <= 0.0 || diff * diff <= r2) collect(n.left, q, r2, out);
    if (diff >= 0.0 || diff * diff <= r2) collect(n.right, q, r2, out);
  }

  std::vector<Vec3> points_;
  std::vector<int> index_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Symmetric chamfer: mean squared nearest distance a->b plus b->a.
inline double chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
  require(!a.empty() && !b.empty(), "chamfer: point sets must be non-empty");
  const KdTree ta(std::vector<Vec3>(a.begin(), a.end()));
  const KdTree tb(std::vector<Vec3>(b.begin(), b.end()));
  double sa = 0.0;
  for (const auto& p : a) sa += tb.nearest(p).squared_distance;
  double sb = 0.0;
  for (const auto& p : b) sb += ta.nearest(p).squared_distance;
  return sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size());
}

// ---------------------------------------------------------------------------
// Closest point on a triangle (Ericson, Real-Time Collision Detection 5.1.5).

inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                      const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

// Bounding-volume hierarchy over triangles for closest-point queries.
class SurfaceDistance {
 public:
  explicit SurfaceDistance(const TriMesh& mesh) : mesh_(&mesh) {
    order_.resize(mesh.faces.size());
    std::iota(order_.begin(), order_.end(), 0);
    boxes_.resize(mesh.faces.size());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f)
      for (int v : mesh.faces[f]) boxes_[f].expand(mesh.vertices[v]);
    if (!order_.empty()) build(0, static_cast<int>(order_.size()));
  }

  struct Hit {
    Vec3 point = Vec3::Zero();
    int face = -1;
    double squared_distance = kInf;
  };

  Hit closest(const Vec3& p) const {
    Hit best;
    if (!nodes_.empty()) search(0, p, best);
    return best;
  }

 private:
  struct Node {
    Aabb box;
    int begin, end;
    int left = -1, right = -1;
  };

  int build(int begin, int end) {
    Node node;
    node.begin = begin;
    node.end = end;
    for (int i = begin; i < end; ++i) node.box.expand(boxes_[order_[i]]);
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin > 4) {
      Aabb centers;
      for (int i = begin; i < end; ++i) centers.expand(boxes_[order_[i]].center());
      int axis;
      centers.extent().maxCoeff(&axis);
      const int mid = (begin + end) / 2;
      std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                       [&](int a, int b) {
                         return boxes_[a].center()[axis] < boxes_[b].center()[axis];
                       });
      const int l = build(begin, mid);
      const int r = build(mid, end);
      nodes_[id].left = l;
      nodes_[id].right = r;
    }
    return id;
  }

  void search(int id, const Vec3& p, Hit& best) const {
    const Node& n = nodes_[id];
    if (n.box.squared_distance_to(p) > best.squared_distance) return;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int f = order_[i];
        const auto& [a, b, c] = mesh_->faces[f];
        const Vec3 q = closest_point_on_triangle(p, mesh_->vertices[a], mesh_->vertices[b],
                                                 mesh_->vertices[c]);
        const double d = squared_distance(p, q);
        if (d < best.squared_distance) best = {q, f, d};
      }
      return;
    }
    const double dl = nodes_[n.left].box.squared_distance_to(p);
    const double dr = nodes_[n.right].box.squared_distance_to(p);
    if (dl <= dr) {
      search(n.left, p, best);
      search(n.right, p, best);
    } else {
      search(n.right, p, best);
      search(n.left, p, best);
    }
  }

  const TriMesh* mesh_;
  std::vector<int> order_;
  std::vector<Aabb> boxes_;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Generalized winding number (sum of signed solid angles / 4 pi).

inline double winding_number(const TriMesh& mesh, const Vec3& p) {
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3 a = mesh.vertices[f[0]] - p;
    const Vec3 b = mesh.vertices[f[1]] - p;
    const Vec3 c = mesh.vertices[f[2]] - p;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double num = a.dot(b.cross(c));
    const double den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * kPi);
}

// Inside/outside classification against a closed surface.
class InsideTester {
 public:
  explicit InsideTester(const TriMesh& mesh) : mesh_(&mesh) {
    if (!is_watertight(mesh))
      fail(ErrorKind::precondition, "inside_test: mesh is not watertight");
    box_ = bounds(mesh.vertices);
  }
  bool inside(const Vec3& p) const {
    if (!box_.contains(p)) return false;
    return winding_number(*mesh_, p) >= 0.5;
  }

 private:
  const TriMesh* mesh_;
  Aabb box_;
};

inline std::vector<bool> inside_test(const TriMesh& mesh, std::span<const Vec3> points) {
  const InsideTester tester(mesh);
  std::vector<bool> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = tester.inside(points[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Penetration: sum over interior points of squared distance to the surface.

struct PenetrationTerm {
  double energy = 0.0;
  std::vector<int> inside_points;
  std::vector<Vec3> closest;  // surface point per entry of inside_points
};

class PenetrationQuery {
 public:
  explicit PenetrationQuery(const TriMesh& mesh) : tester_(mesh), distance_(mesh) {}

  // Points are visited in order; indices refer to the given span.
  PenetrationTerm evaluate(std::span<const Vec3> points) const {
    PenetrationTerm out;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!tester_.inside(points[i])) continue;
      const auto hit = distance_.closest(points[i]);
      out.energy += hit.squared_distance;
      out.inside_points.push_back(static_cast<int>(i));
      out.closest.push_back(hit.point);
    }
    return out;
  }

  bool inside(const Vec3& p) const { return tester_.inside(p); }
  SurfaceDistance::Hit closest(const Vec3& p) const { return distance_.closest(p); }

 private:
  InsideTester tester_;
  SurfaceDistance distance_;
};

inline double penetration_energy(std::span<const Vec3> body_points, const TriMesh& obj) {
  return PenetrationQuery(obj).evaluate(body_points).energy;
}

// ---------------------------------------------------------------------------
// Gradient of a loss through area-weighted vertex normals.

inline std::vector<Vec3> vertex_normals_vjp(const TriMesh& mesh,
                                            std::span<const Vec3> grad_normals) {
  std::vector<Vec3> accum(mesh.vertices.size(), Vec3::Zero());
  for (const auto& f : mesh.faces) {
    const auto& [a, b, c] = f;
    const Vec3 m = (mesh.vertices[b] - mesh.vertices[a]).cross(mesh.vertices[c] - mesh.vertices[a]);
    accum[a] += m;
    accum[b] += m;
    accum[c] += m;
  }
  // dL/dm_i for each vertex accumulator.
  std::vector<Vec3> gm(mesh.vertices.size(), Vec3::Zero());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const double len = accum[i].norm();
    if (len <= 0.0) continue;
    const Vec3 n = accum[i] / len;
    gm[i] = (grad_normals[i] - n * n.dot(grad_normals[i])) / len;
  }
  std::vector<Vec3> gv(mesh.vertices.size(), Vec3::Zero());
  for (const auto& f : mesh.faces) {
    const auto& [a, b, c] = f;
    const Vec3 G = gm[a] + gm[b] + gm[c];
    if (G.isZero(0.0)) continue;
    const Vec3 u = mesh.vertices[b] - mesh.vertices[a];
    const Vec3 w = mesh.vertices[c] - mesh.vertices[a];
    const Vec3 gu = w.cross(G);
    const Vec3 gw = G.cross(u);
    gv[b] += gu;
    gv[c] += gw;
    gv[a] -= gu + gw;
  }
  return gv;
}

// ---------------------------------------------------------------------------
// Watertighting by marching tetrahedra over a winding-number grid.

struct WatertightResult {
  TriMesh mesh;
  bool remeshed = false;
  double voxel_size = 0.0;
  // Sampled one-sided Hausdorff distance from the input surface to the output.
  double hausdorff = 0.0;
};

inline double directed_hausdorff_sampled(const TriMesh& from, const TriMesh& to, int samples,
                                         std::uint64_t seed) {
  const SurfaceDistance dt(to);
  double h = 0.0;
  for (const auto& s : sample_surface(from, samples, seed))
    h = std::max(h, std::sqrt(dt.closest(s.position).squared_distance));
  for (const auto& v : from.vertices) h = std::max(h, std::sqrt(dt.closest(v).squared_distance));
  return h;
}

inline double hausdorff_sampled(const TriMesh& a, const TriMesh& b, int samples,
                                std::uint64_t seed) {
  return std::max(directed_hausdorff_sampled(a, b, samples, seed),
                  directed_hausdorff_sampled(b, a, samples, seed + 1));
}

inline WatertightResult ensure_watertight(const TriMesh& mesh, int resolution = 128,
                                          int hausdorff_samples = 4000) {
  require(!mesh.empty(), "ensure_watertight: mesh is empty");
  require(resolution >= 4, "ensure_watertight: resolution must be >= 4");
  WatertightResult result;
  if (is_watertight(mesh)) {
    result.mesh = mesh;
    return result;
  }

  const Aabb box = bounds(mesh.vertices);
  const double h = box.extent().maxCoeff() / resolution;
  require(h > 0.0, "ensure_watertight: degenerate bounding box");
  const int pad = 2;
  const Vec3 origin = box.lo - Vec3::Constant(pad * h);
  std::array<int, 3> n{};
  for (int a = 0; a < 3; ++a)
    n[a] = static_cast<int>(std::ceil(box.extent()[a] / h)) + 2 * pad + 1;
  auto grid_index = [&](int i, int j, int k) {
    return (static_cast<std::int64_t>(k) * n[1] + j) * n[0] + i;
  };
  auto grid_point = [&](int i, int j, int k) -> Vec3 { return origin + h * Vec3(i, j, k); };

  // Field > 0 inside. Values near the iso level are pushed away so every
  // interpolated vertex lies strictly inside its grid edge.
  std::vector<double> field(static_cast<std::size_t>(n[0]) * n[1] * n[2]);
  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i) {
        double f = winding_number(mesh, grid_point(i, j, k)) - 0.5;
        if (std::abs(f) < 1e-3) f = f < 0.0 ? -1e-3 : 1e-3;
        field[grid_index(i, j, k)] = f;
      }

  std::vector<Vec3> verts;
  std::vector<Face> faces;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  // One shared vertex per crossed grid edge, keyed by (low id, high id).
  auto edge_vertex_id_ordered = [&](std::int64_t ga, std::int64_t gb, const Vec3& pa,
                                    const Vec3& pb) {
    const std::uint64_t key =
        static_cast<std::uint64_t>(ga) * field.size() + static_cast<std::uint64_t>(gb);
    auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<int>(verts.size()));
    if (inserted) {
      const double fa = field[ga], fb = field[gb];
      const double t = fa / (fa - fb);
      verts.push_back(pa + t * (pb - pa));
    }
    return it->second;
  };
  auto edge_vertex_id = [&](std::int64_t ga, std::int64_t gb, const Vec3& pa, const Vec3& pb) {
    if (ga > gb) return edge_vertex_id_ordered(gb, ga, pb, pa);
    return edge_vertex_id_ordered(ga, gb, pa, pb);
  };

  // Kuhn decomposition: six tetrahedra per cell sharing the main diagonal.
  static constexpr std::array<std::array<int, 3>, 6> kAxisOrders{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  for (int k = 0; k + 1 < n[2]; ++k)
    for (int j = 0; j + 1 < n[1]; ++j)
      for (int i = 0; i + 1 < n[0]; ++i)
        for (const auto& order : kAxisOrders) {
          std::array<std::array<int, 3>, 4> corner;
          corner[0] = {i, j, k};
          for (int s = 0; s < 3; ++s) {
            corner[s + 1] = corner[s];
            corner[s + 1][order[s]] += 1;
          }
          std::array<std::int64_t, 4> gid;
          std::array<Vec3, 4> pos;
          std::array<bool, 4> in;
          int inside_count = 0;
          for (int c = 0; c < 4; ++c) {
            gid[c] = grid_index(corner[c][0], corner[c][1], corner[c][2]);
            pos[c] = grid_point(corner[c][0], corner[c][1], corner[c][2]);
            in[c] = field[gid[c]] > 0.0;
            inside_count += in[c];
          }
          if (inside_count == 0 || inside_count == 4) continue;
          std::vector<int> ins, outs;
          for (int c = 0; c < 4; ++c) (in[c] ? ins : outs).push_back(c);
          auto vert = [&](int a, int b) {
            return edge_vertex_id(gid[a], gid[b], pos[a], pos[b]);
          };
          Vec3 in_c = Vec3::Zero(), out_c = Vec3::Zero();
          for (int c : ins) in_c += pos[c];
          for (int c : outs) out_c += pos[c];
          const Vec3 outward = out_c / outs.size() - in_c / ins.size();
          auto emit = [&](int a, int b, int c) {
            const Vec3 m = (verts[b] - verts[a]).cross(verts[c] - verts[a]);
            if (m.dot(outward) < 0.0) std::swap(b, c);
            faces.push_back({a, b, c});
          };
          if (ins.size() == 1 || outs.size() == 1) {
            const int lone = ins.size() == 1 ? ins[0] : outs[0];
            const auto& others = ins.size() == 1 ? outs : ins;
            emit(vert(lone, others[0]), vert(lone, others[1]), vert(lone, others[2]));
          } else {
            const int a = ins[0], b = ins[1], c = outs[0], d = outs[1];
            const int ac = vert(a, c), ad = vert(a, d), bd = vert(b, d), bc = vert(b, c);
            emit(ac, ad, bd);
            emit(ac, bd, bc);
          }
        }

  result.mesh = make_mesh(std::move(verts), std::move(faces));
  result.remeshed = true;
  result.voxel_size = h;
  if (result.mesh.empty()) fail(ErrorKind::data, "ensure_watertight: remesh produced no surface");
  result.hausdorff = directed_hausdorff_sampled(mesh, result.mesh, hausdorff_samples, 7);
  if (result.hausdorff > 2.0 * h) {
    std::ostringstream os;
    os << "ensure_watertight: resolution " << resolution
       << " may not preserve topology; Hausdorff distance " << result.hausdorff << " m";
    diag::warn(os.str());
  }
  return result;
}

}  // namespace afford
