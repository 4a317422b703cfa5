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

// Procedural closed meshes used as fixtures and by the synthetic body.
// All are outward oriented and watertight.

#pragma once

#include "afford/geometry.hpp"

namespace afford::shapes {

inline TriMesh box(const Vec3& lo, const Vec3& hi) {
  std::vector<Vec3> v{{lo.x(), lo.y(), lo.z()}, {hi.x(), lo.y(), lo.z()},
                      {hi.x(), hi.y(), lo.z()}, {lo.x(), hi.y(), lo.z()},
                      {lo.x(), lo.y(), hi.z()}, {hi.x(), lo.y(), hi.z()},
                      {hi.x(), hi.y(), hi.z()}, {lo.x(), hi.y(), hi.z()}};
  std::vector<Face> f{{0, 2, 1}, {0, 3, 2},   // -z
                      {4, 5, 6}, {4, 6, 7},   // +z
                      {0, 1, 5}, {0, 5, 4},   // -y
                      {3, 7, 6}, {3, 6, 2},   // +y
                      {0, 4, 7}, {0, 7, 3},   // -x
                      {1, 2, 6}, {1, 6, 5}};  // +x
  return make_mesh(std::move(v), std::move(f));
}

// Axis-aligned cube centred at the origin.
inline TriMesh cube(double edge = 1.0) {
  const double h = 0.5 * edge;
  return box(Vec3::Constant(-h), Vec3::Constant(h));
}

inline TriMesh icosphere(double radius = 1.0, int subdivisions = 2) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v{{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
                      {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  std::vector<Face> f{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& p : v) p.normalize();
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    for (const auto& [a, b, c] : f) {
      const int ab = midpoint(a, b), bc = midpoint(b, c), ca = midpoint(c, a);
      next.push_back({a, ab, ca});
      next.push_back({b, bc, ab});
      next.push_back({c, ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  for (auto& p : v) p *= radius;
  return make_mesh(std::move(v), std::move(f));
}

// Torus around the y axis.
inline TriMesh torus(double major = 1.0, double minor = 0.35, int nu = 32, int nv = 16) {
  std::vector<Vec3> v;
  std::vector<Face> f;
  for (int i = 0; i < nu; ++i) {
    const double u = 2.0 * kPi * i / nu;
    for (int j = 0; j < nv; ++j) {
      const double w = 2.0 * kPi * j / nv;
      const double r = major + minor * std::cos(w);
      v.emplace_back(r * std::cos(u), minor * std::sin(w), r * std::sin(u));
    }
  }
  auto id = [&](int i, int j) { return ((i + nu) % nu) * nv + (j + nv) % nv; };
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      f.push_back({a, c, b});
      f.push_back({a, d, c});
    }
  return make_mesh(std::move(v), std::move(f));
}

// Closed capped tube from a to b: `rings` circles of `segments` vertices
// spread uniformly from a to b, plus one pole beyond each end. The first ring
// is centred exactly at a. Vertex layout: rings in order, then the two poles.
struct Tube {
  TriMesh mesh;
  std::vector<double> ring_param;  // t in [0,1] per vertex (poles: 0 / 1)
  int segments = 0;
  int rings = 0;
};

inline Tube tube(const Vec3& a, const Vec3& b, double radius, int segments, int rings,
                 double pole_offset = 0.5) {
  require(segments >= 3 && rings >= 1, "tube: needs >= 3 segments and >= 1 ring");
  const Vec3 axis = (b - a).normalized();
  Vec3 helper = std::abs(axis.y()) < 0.9 ? Vec3::UnitY() : Vec3::UnitX();
  const Vec3 e1 = axis.cross(helper).normalized();
  const Vec3 e2 = axis.cross(e1);
  Tube t;
  t.segments = segments;
  t.rings = rings;
  std::vector<Vec3> v;
  for (int r = 0; r < rings; ++r) {
    const double s = rings == 1 ? 0.5 : static_cast<double>(r) / (rings - 1);
    const Vec3 c = a + s * (b - a);
    for (int k = 0; k < segments; ++k) {
      const double ang = 2.0 * kPi * k / segments;
      v.push_back(c + radius * (std::cos(ang) * e1 + std::sin(ang) * e2));
      t.ring_param.push_back(s);
    }
  }
  const int south = static_cast<int>(v.size());
  v.push_back(a - pole_offset * radius * axis);
  t.ring_param.push_back(0.0);
  const int north = static_cast<int>(v.size());
  v.push_back(b + pole_offset * radius * axis);
  t.ring_param.push_back(1.0);

  std::vector<Face> f;
  auto id = [&](int r, int k) { return r * segments + (k % segments); };
  // Ring winding: (e1, e2, axis) is right-handed, so increasing k turns
  // counter-clockwise when viewed from the north pole.
  for (int k = 0; k < segments; ++k) f.push_back({south, id(0, k + 1), id(0, k)});
  for (int r = 0; r + 1 < rings; ++r)
    for (int k = 0; k < segments; ++k) {
      f.push_back({id(r, k), id(r, k + 1), id(r + 1, k + 1)});
      f.push_back({id(r, k), id(r + 1, k + 1), id(r + 1, k)});
    }
  for (int k = 0; k < segments; ++k) f.push_back({north, id(rings - 1, k), id(rings - 1, k + 1)});
  t.mesh = make_mesh(std::move(v), std::move(f));
  return t;
}

// Chair in canonical orientation (y up, front facing +x): a seat slab, a back
// rest along the rear edge and four legs. Components are disjoint closed boxes.
struct ChairParts {
  TriMesh mesh;
  Aabb seat, back;
};

inline ChairParts chair() {
  const double half = 0.22;
  const Aabb seat{Vec3(-half, 0.42, -half), Vec3(half, 0.47, half)};
  const Aabb back{Vec3(-half, 0.48, -half), Vec3(-half + 0.04, 0.95, half)};
  std::vector<TriMesh> parts{box(seat.lo, seat.hi), box(back.lo, back.hi)};
  const double leg = 0.04;
  for (double sx : {-1.0, 1.0})
    for (double sz : {-1.0, 1.0}) {
      const Vec3 c(sx * (half - leg), 0.0, sz * (half - leg));
      parts.push_back(box(Vec3(c.x() - 0.5 * leg, 0.0, c.z() - 0.5 * leg),
                          Vec3(c.x() + 0.5 * leg, 0.41, c.z() + 0.5 * leg)));
    }
  return {merge(parts), seat, back};
}

}  // namespace afford::shapes
