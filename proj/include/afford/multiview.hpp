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

// Pinhole cameras on rings around an object, projection to pixels, a
// z-buffer triangle rasterizer and depth-tested visibility.
//
// Pixel convention: continuous coordinates with (0,0) at the top-left corner
// of the image; pixel (i,j) covers [i,i+1) x [j,j+1) and its centre is
// (i+0.5, j+0.5). The image v axis points down. Depth is the camera-space
// distance along the viewing direction.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "afford/geometry.hpp"

namespace afford {

struct Camera {
  Vec3 position = Vec3(0, 0, 1);
  Vec3 look_at = Vec3::Zero();
  Vec3 up = Vec3::UnitY();
  double vertical_fov = kPi / 4;
  int width = 512;
  int height = 512;

  void validate() const {
    if (!(vertical_fov > 0.0 && vertical_fov < kPi))
      fail(ErrorKind::precondition, "camera: vertical_fov must lie in (0, pi)");
    if (width < 16 || height < 16) fail(ErrorKind::precondition, "camera: image must be >= 16x16");
    if ((position - look_at).norm() <= 0.0)
      fail(ErrorKind::precondition, "camera: position equals look_at");
    if (forward().cross(up).norm() < 1e-9)
      fail(ErrorKind::precondition, "camera: up is parallel to the viewing direction");
  }

  Vec3 forward() const { return (look_at - position).normalized(); }
  Vec3 right() const { return forward().cross(up).normalized(); }
  Vec3 true_up() const { return right().cross(forward()); }
  double focal() const { return 0.5 * height / std::tan(0.5 * vertical_fov); }
  Vec2 center() const { return Vec2(0.5 * width, 0.5 * height); }
  double diagonal() const { return std::hypot(double(width), double(height)); }

  // World to camera coordinates (x right, y up, z forward).
  Vec3 to_camera(const Vec3& p) const {
    const Vec3 d = p - position;
    return Vec3(d.dot(right()), d.dot(true_up()), d.dot(forward()));
  }
};

struct Projection {
  Vec2 pixel = Vec2::Zero();
  double depth = 0.0;
  bool valid = false;
};

inline constexpr double kNearPlane = 1e-6;

inline Projection project(const Camera& cam, const Vec3& p) {
  const Vec3 c = cam.to_camera(p);
  Projection out;
  out.depth = c.z();
  if (!(c.z() > kNearPlane)) return out;
  const double f = cam.focal();
  out.pixel = Vec2(0.5 * cam.width + f * c.x() / c.z(), 0.5 * cam.height - f * c.y() / c.z());
  out.valid = true;
  return out;
}

inline std::vector<Projection> project(const Camera& cam, std::span<const Vec3> points) {
  std::vector<Projection> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(project(cam, p));
  return out;
}

inline Vec3 unproject(const Camera& cam, const Vec2& pixel, double depth) {
  const double f = cam.focal();
  const double x = (pixel.x() - 0.5 * cam.width) * depth / f;
  const double y = (0.5 * cam.height - pixel.y()) * depth / f;
  return cam.position + x * cam.right() + y * cam.true_up() + depth * cam.forward();
}

// ---------------------------------------------------------------------------
// Images.

struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  MaskImage() = default;
  MaskImage(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool set(int x, int y) const { return at(x, y) > 0.5; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double v) { return v > 0.5; }));
  }
  // Mean pixel-centre position of set pixels.
  Vec2 centroid() const {
    Vec2 sum = Vec2::Zero();
    std::size_t n = 0;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (set(x, y)) sum += Vec2(x + 0.5, y + 0.5), ++n;
    return n ? Vec2(sum / double(n)) : Vec2(kInf, kInf);
  }
};

// Nearest depth per pixel plus the front triangle's camera-space plane, so
// depth can be evaluated at any sub-pixel position.
struct DepthBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> depth;  // +inf where nothing was drawn
  std::vector<int> face;      // front face per pixel, -1 where empty
  std::vector<Eigen::Vector4d> planes;  // per mesh face: n.x = d in camera coordinates

  DepthBuffer() = default;
  DepthBuffer(int w, int h)
      : width(w), height(h), depth(static_cast<std::size_t>(w) * h, kInf),
        face(static_cast<std::size_t>(w) * h, -1) {}
  double& at(int x, int y) { return depth[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
  int face_at(int x, int y) const { return face[static_cast<std::size_t>(y) * width + x]; }
};

struct Raster {
  MaskImage mask;
  DepthBuffer depth;
};

namespace detail {

inline double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

}  // namespace detail

// Fills pixels whose centres fall inside each triangle (both windings),
// keeping the nearest perspective-correct depth. Triangles with a vertex
// behind the near plane are skipped.
inline Raster rasterize_mask(const Camera& cam, const TriMesh& mesh) {
  cam.validate();
  Raster r{MaskImage(cam.width, cam.height), DepthBuffer(cam.width, cam.height)};
  if (mesh.empty()) return r;
  const auto proj = project(cam, mesh.vertices);
  r.depth.planes.assign(mesh.faces.size(), Eigen::Vector4d::Zero());
  for (std::size_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const auto& f = mesh.faces[fi];
    const Projection& pa = proj[f[0]];
    const Projection& pb = proj[f[1]];
    const Projection& pc = proj[f[2]];
    if (!pa.valid || !pb.valid || !pc.valid) continue;
    const double area = detail::edge(pa.pixel, pb.pixel, pc.pixel);
    if (area == 0.0) continue;
    {
      const Vec3 a = cam.to_camera(mesh.vertices[f[0]]);
      const Vec3 n = (cam.to_camera(mesh.vertices[f[1]]) - a).cross(cam.to_camera(mesh.vertices[f[2]]) - a);
      r.depth.planes[fi] << n, n.dot(a);
    }
    const double lo_x = std::min({pa.pixel.x(), pb.pixel.x(), pc.pixel.x()});
    const double hi_x = std::max({pa.pixel.x(), pb.pixel.x(), pc.pixel.x()});
    const double lo_y = std::min({pa.pixel.y(), pb.pixel.y(), pc.pixel.y()});
    const double hi_y = std::max({pa.pixel.y(), pb.pixel.y(), pc.pixel.y()});
    const int x0 = std::max(0, static_cast<int>(std::floor(lo_x - 0.5)));
    const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(hi_x - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(lo_y - 0.5)));
    const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(hi_y - 0.5)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p(x + 0.5, y + 0.5);
        double w0 = detail::edge(pb.pixel, pc.pixel, p) / area;
        double w1 = detail::edge(pc.pixel, pa.pixel, p) / area;
        double w2 = detail::edge(pa.pixel, pb.pixel, p) / area;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double inv_z = w0 / pa.depth + w1 / pb.depth + w2 / pc.depth;
        const double z = 1.0 / inv_z;
        r.mask.at(x, y) = 1.0;
        if (z < r.depth.at(x, y)) {
          r.depth.at(x, y) = z;
          r.depth.face[static_cast<std::size_t>(y) * cam.width + x] = static_cast<int>(fi);
        }
      }
  }
  return r;
}

// Depth of the front surface at a sub-pixel position: the plane of the
// pixel's front triangle intersected with the viewing ray.
inline double surface_depth(const Camera& cam, const DepthBuffer& depth, const Vec2& pixel) {
  const int x = static_cast<int>(std::floor(pixel.x()));
  const int y = static_cast<int>(std::floor(pixel.y()));
  if (x < 0 || y < 0 || x >= depth.width || y >= depth.height) return kInf;
  const int f = depth.face_at(x, y);
  if (f < 0) return kInf;
  const Eigen::Vector4d& pl = depth.planes[f];
  const double fl = cam.focal();
  const Vec3 ray((pixel.x() - 0.5 * cam.width) / fl, (0.5 * cam.height - pixel.y()) / fl, 1.0);
  const double denom = pl.head<3>().dot(ray);
  if (std::abs(denom) < 1e-300) return depth.at(x, y);
  const double z = pl[3] / denom;
  return z > 0.0 ? z : depth.at(x, y);
}

// A point is visible when its depth does not exceed the front-surface depth
// at its projected position by more than epsilon. Points off-image or behind
// the camera are not visible; pixels with no surface never occlude.
inline std::vector<bool> visibility(const Camera& cam, const DepthBuffer& depth,
                                    std::span<const Vec3> points, double epsilon) {
  require(depth.width == cam.width && depth.height == cam.height,
          "visibility: depth buffer does not match the camera");
  std::vector<bool> out(points.size(), false);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Projection p = project(cam, points[i]);
    if (!p.valid) continue;
    const int x = static_cast<int>(std::floor(p.pixel.x()));
    const int y = static_cast<int>(std::floor(p.pixel.y()));
    if (x < 0 || y < 0 || x >= cam.width || y >= cam.height) continue;
    out[i] = p.depth <= surface_depth(cam, depth, p.pixel) + epsilon;
  }
  return out;
}

// ---------------------------------------------------------------------------
// View rig.

struct ViewRig {
  std::vector<Camera> cameras;
  Vec3 object_center = Vec3::Zero();
  double ring_radius = 0.0;

  std::size_t size() const { return cameras.size(); }
  double depth_epsilon() const { return 1e-3 * ring_radius; }
};

struct RigSettings {
  int n_p = 8;
  std::vector<double> elevations{0.0, kPi / 6};
  int resolution = 512;
  double vertical_fov = kPi / 4;
  double ring_factor = 2.2;  // ring radius / bounding-sphere radius
};

// Cameras evenly spaced in azimuth on each elevation ring, azimuth 0 on +x,
// all looking at the bounding-box centre. n_p is split across rings, earlier
// rings taking any remainder.
inline ViewRig build_rig(const TriMesh& obj, const RigSettings& s) {
  if (obj.vertices.empty()) fail(ErrorKind::precondition, "build_rig: mesh is empty");
  if (s.n_p < 2) fail(ErrorKind::precondition, "build_rig: n_p must be >= 2");
  if (s.elevations.empty()) fail(ErrorKind::precondition, "build_rig: no elevation rings");
  const int rings = static_cast<int>(s.elevations.size());
  if (s.n_p < rings) fail(ErrorKind::precondition, "build_rig: fewer views than elevation rings");
  for (double e : s.elevations)
    if (!(std::abs(e) < 0.5 * kPi - 1e-6))
      fail(ErrorKind::precondition, "build_rig: elevations must lie strictly inside (-pi/2, pi/2)");

  ViewRig rig;
  rig.object_center = bounds(obj.vertices).center();
  double radius = 0.0;
  for (const auto& v : obj.vertices) radius = std::max(radius, (v - rig.object_center).norm());
  if (!(radius > 0.0)) fail(ErrorKind::precondition, "build_rig: degenerate object extent");
  rig.ring_radius = s.ring_factor * radius;
  for (int r = 0; r < rings; ++r) {
    const int count = s.n_p / rings + (r < s.n_p % rings ? 1 : 0);
    const double el = s.elevations[r];
    for (int k = 0; k < count; ++k) {
      const double az = 2.0 * kPi * k / count;
      Camera c;
      const Vec3 dir(std::cos(el) * std::cos(az), std::sin(el), std::cos(el) * std::sin(az));
      c.position = rig.object_center + rig.ring_radius * dir;
      c.look_at = rig.object_center;
      c.up = Vec3::UnitY();
      c.vertical_fov = s.vertical_fov;
      c.width = c.height = s.resolution;
      c.validate();
      rig.cameras.push_back(c);
    }
  }
  return rig;
}

inline ViewRig build_rig(const TriMesh& obj, int n_p, const std::vector<double>& elevations,
                         int resolution) {
  RigSettings s;
  s.n_p = n_p;
  s.elevations = elevations;
  s.resolution = resolution;
  return build_rig(obj, s);
}

// ---------------------------------------------------------------------------
// 2D polygons for mask generation.

// Monotone-chain convex hull, counter-clockwise in image coordinates
// (x right, y down), without collinear points.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

// Distance from p to a convex polygon (0 inside).
inline double convex_polygon_distance(const Vec2& p, const std::vector<Vec2>& poly) {
  if (poly.empty()) return kInf;
  if (poly.size() == 1) return (p - poly[0]).norm();
  bool inside = poly.size() >= 3;
  double best = kInf;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    best = std::min(best, point_segment_distance(p, a, b));
    const double side = (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
    if (side < 0.0) inside = false;
  }
  return inside ? 0.0 : best;
}

// Sets every pixel whose centre lies within `radius` of the convex polygon.
inline void fill_dilated_polygon(MaskImage& mask, const std::vector<Vec2>& poly, double radius) {
  if (poly.empty()) return;
  double lo_x = kInf, hi_x = -kInf, lo_y = kInf, hi_y = -kInf;
  for (const auto& p : poly) {
    lo_x = std::min(lo_x, p.x());
    hi_x = std::max(hi_x, p.x());
    lo_y = std::min(lo_y, p.y());
    hi_y = std::max(hi_y, p.y());
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(lo_x - radius - 1)));
  const int x1 = std::min(mask.width - 1, static_cast<int>(std::ceil(hi_x + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(lo_y - radius - 1)));
  const int y1 = std::min(mask.height - 1, static_cast<int>(std::ceil(hi_y + radius)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (convex_polygon_distance(Vec2(x + 0.5, y + 0.5), poly) <= radius) mask.at(x, y) = 1.0;
}

// ---------------------------------------------------------------------------
// PGM export: 8-bit masks, 16-bit depth scaled so max_depth maps to 65535
// (empty pixels written as 0).

inline void write_mask_pgm(const MaskImage& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  for (double v : mask.values)
    out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
}

inline void write_depth_pgm(const DepthBuffer& depth, const std::filesystem::path& path,
                            double max_depth) {
  require(max_depth > 0.0, "write_depth_pgm: max_depth must be positive");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << "P5\n" << depth.width << ' ' << depth.height << "\n65535\n";
  for (double d : depth.depth) {
    const std::uint16_t v =
        std::isfinite(d) ? static_cast<std::uint16_t>(std::lround(std::clamp(d / max_depth, 0.0, 1.0) * 65535.0)) : 0;
    out.put(static_cast<char>(v >> 8));
    out.put(static_cast<char>(v & 0xff));
  }
}

inline MaskImage read_mask_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  if (magic != "P5" || maxval != 255 || w <= 0 || h <= 0)
    fail(ErrorKind::data, path.string() + ": not an 8-bit binary PGM");
  MaskImage m(w, h);
  for (auto& v : m.values) v = static_cast<std::uint8_t>(in.get()) / 255.0;
  if (!in) fail(ErrorKind::data, path.string() + ": truncated PGM");
  return m;
}

}  // namespace afford
