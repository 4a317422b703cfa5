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

// Contact affordance on an object: inpainting masks placed from the relation
// feedback, keypoint evidence per view, the per-view distance field, its
// aggregation over the rig and extraction of the weighted contact region.
//
// Everything here works in the object's own (canonical) frame, the frame the
// view rig is built in. World-space human geometry enters through the inverse
// of the placement transform.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "afford/bodymodel.hpp"
#include "afford/geometry.hpp"
#include "afford/mesh_io.hpp"
#include "afford/multiview.hpp"
#include "afford/relations.hpp"

namespace afford {

// ---------------------------------------------------------------------------
// Inpainting masks.

struct MaskGenParams {
  double full_body_size = 1.7;   // s_f, meters
  double part_size = 0.2;        // s_p, meters
  double noise_sigma_full = 4.0;  // pixels
  double noise_sigma_part = 2.0;  // pixels
  double dilation = 8.0;          // pixels

  void validate() const {
    require(full_body_size > 0.0 && part_size > 0.0, "mask params: sizes must be positive");
    require(noise_sigma_full >= 0.0 && noise_sigma_part >= 0.0,
            "mask params: noise sigmas must be non-negative");
    require(dilation >= 0.0, "mask params: dilation must be non-negative");
  }
};

namespace detail {

// Rescales the points about their centroid to the given size (largest box
// extent), maps them into the object frame and rasterizes the dilated,
// jittered convex hull of their projections.
inline MaskImage hull_mask(const Camera& cam, const PlacementInit& placement,
                           std::span<const Vec3> world, double size, double sigma,
                           double dilation, std::uint64_t seed, const std::string& what) {
  cam.validate();
  MaskImage mask(cam.width, cam.height);
  if (world.empty()) fail(ErrorKind::precondition, what + ": no proxy vertices");
  Vec3 c = Vec3::Zero();
  for (const auto& p : world) c += p;
  c /= static_cast<double>(world.size());
  const double extent = bounds(world).extent().maxCoeff();
  const double k = extent > 0.0 ? size / extent : 1.0;

  std::vector<Vec2> pixels;
  for (const auto& p : world) {
    const Vec3 q = placement.object_transform.apply_inverse(c + k * (p - c));
    const Projection pr = project(cam, q);
    if (pr.valid) pixels.push_back(pr.pixel);
  }
  if (pixels.empty()) {
    diag::warn(what + ": proxy projects behind the camera; mask is empty");
    return mask;
  }
  std::vector<Vec2> hull = convex_hull(std::move(pixels));
  if (sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    const double dx = noise(rng);
    const double dy = noise(rng);
    for (auto& h : hull) h += Vec2(dx, dy);
  }
  fill_dilated_polygon(mask, hull, dilation);
  if (mask.count() == 0) diag::warn(what + ": proxy projects off-screen; mask is empty");
  return mask;
}

}  // namespace detail

inline MaskImage gen_full_mask(const Camera& view, const PlacementInit& placement,
                               const TriMesh& human_proxy, const MaskGenParams& params,
                               std::uint64_t seed) {
  params.validate();
  return detail::hull_mask(view, placement, human_proxy.vertices, params.full_body_size,
                           params.noise_sigma_full, params.dilation, seed, "full-body mask");
}

inline MaskImage gen_part_mask(const Camera& view, const PlacementInit& placement,
                               const PartSelection& parts, const TriMesh& human_proxy,
                               const MaskGenParams& params, std::uint64_t seed) {
  params.validate();
  require(!parts.vertices.empty(), "part mask: part selection has no vertices");
  std::vector<Vec3> pts;
  pts.reserve(parts.vertices.size());
  for (int i : parts.vertices) {
    require(i >= 0 && i < static_cast<int>(human_proxy.vertices.size()),
            "part mask: part vertex index out of range");
    pts.push_back(human_proxy.vertices[i]);
  }
  return detail::hull_mask(view, placement, pts, params.part_size, params.noise_sigma_part,
                           params.dilation, seed, "part mask");
}

// ---------------------------------------------------------------------------
// Keypoint evidence.

struct Keypoint {
  std::string part;
  Vec2 pixel = Vec2::Zero();
  double confidence = 1.0;
};

struct KeypointObservation {
  int view_index = 0;
  std::vector<Keypoint> keypoints;

  void validate(const ViewRig& rig) const {
    if (view_index < 0 || view_index >= static_cast<int>(rig.size()))
      fail(ErrorKind::data, "keypoints: view_index " + std::to_string(view_index) +
                                " outside [0, " + std::to_string(rig.size()) + ")");
    const Camera& cam = rig.cameras[view_index];
    for (std::size_t k = 0; k < keypoints.size(); ++k) {
      const auto& kp = keypoints[k];
      const std::string where = "keypoints: view " + std::to_string(view_index) + " keypoint " +
                                std::to_string(k);
      if (kp.part.empty()) fail(ErrorKind::data, where + ": empty part name");
      if (!(kp.pixel.x() >= 0.0 && kp.pixel.x() <= cam.width && kp.pixel.y() >= 0.0 &&
            kp.pixel.y() <= cam.height))
        fail(ErrorKind::data, where + ": pixel outside the image");
      if (!(kp.confidence >= 0.0 && kp.confidence <= 1.0))
        fail(ErrorKind::data, where + ": confidence outside [0, 1]");
    }
  }
};

inline nlohmann::json to_json(const KeypointObservation& o) {
  nlohmann::json kps = nlohmann::json::array();
  for (const auto& k : o.keypoints)
    kps.push_back({{"part", k.part}, {"x", k.pixel.x()}, {"y", k.pixel.y()}, {"confidence", k.confidence}});
  return {{"view_index", o.view_index}, {"keypoints", kps}};
}

// Accepts either an array of observations or {"observations": [...]}.
inline std::vector<KeypointObservation> observations_from_json(const nlohmann::json& doc) {
  const nlohmann::json* arr = &doc;
  if (doc.is_object() && doc.contains("observations")) arr = &doc.at("observations");
  if (!arr->is_array()) fail(ErrorKind::data, "keypoints: expected an array of observations");
  std::vector<KeypointObservation> out;
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const auto& j = (*arr)[i];
    const std::string at = "keypoints[" + std::to_string(i) + "]";
    if (!j.is_object()) fail(ErrorKind::data, at + ": expected an object");
    if (!j.contains("view_index") || !j.at("view_index").is_number_integer())
      fail(ErrorKind::data, at + ".view_index: missing or not an integer");
    if (!j.contains("keypoints") || !j.at("keypoints").is_array())
      fail(ErrorKind::data, at + ".keypoints: missing or not an array");
    KeypointObservation o;
    o.view_index = j.at("view_index").get<int>();
    const auto& kps = j.at("keypoints");
    for (std::size_t k = 0; k < kps.size(); ++k) {
      const auto& e = kps[k];
      const std::string kat = at + ".keypoints[" + std::to_string(k) + "]";
      if (!e.is_object()) fail(ErrorKind::data, kat + ": expected an object");
      Keypoint kp;
      if (!e.contains("part") || !e.at("part").is_string())
        fail(ErrorKind::data, kat + ".part: missing or not a string");
      kp.part = e.at("part").get<std::string>();
      for (const char* f : {"x", "y"})
        if (!e.contains(f) || !e.at(f).is_number())
          fail(ErrorKind::data, kat + "." + f + ": missing or not a number");
      kp.pixel = Vec2(e.at("x").get<double>(), e.at("y").get<double>());
      if (e.contains("confidence")) {
        if (!e.at("confidence").is_number())
          fail(ErrorKind::data, kat + ".confidence: not a number");
        kp.confidence = e.at("confidence").get<double>();
      }
      o.keypoints.push_back(std::move(kp));
    }
    out.push_back(std::move(o));
  }
  return out;
}

inline std::vector<KeypointObservation> load_keypoints(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot open keypoints file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, path.string() + ": " + e.what());
  }
  return observations_from_json(j);
}

inline void save_keypoints(std::span<const KeypointObservation> obs, const std::filesystem::path& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& o : obs) arr.push_back(to_json(o));
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << arr.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Per-view distance field and aggregation.

enum class AggregationMode { visible_views, all_views };
enum class Normalization { sum, max };

struct AffordanceOptions {
  double lambda = 20.0;
  bool relevant_parts_only = true;
  AggregationMode mode = AggregationMode::visible_views;
  Normalization normalization = Normalization::sum;
  double min_confidence = 0.0;  // keypoints at or below are ignored
};

struct ViewAffordance {
  std::vector<double> values;
  std::vector<bool> visible;
};

// Keypoints used for one view: confident ones, restricted to `relevant`
// parts unless that filter is off or the list is empty.
inline std::vector<Vec2> active_keypoints(const KeypointObservation& obs,
                                          const std::vector<std::string>& relevant,
                                          const AffordanceOptions& opt) {
  std::vector<Vec2> out;
  for (const auto& kp : obs.keypoints) {
    if (!(kp.confidence > opt.min_confidence)) continue;
    if (opt.relevant_parts_only && !relevant.empty() &&
        std::find(relevant.begin(), relevant.end(), kp.part) == relevant.end())
      continue;
    out.push_back(kp.pixel);
  }
  return out;
}

// exp(-lambda d) where d is the pixel distance from the point's projection
// to the nearest active keypoint over the image diagonal. Hidden points get
// 0 and are flagged.
inline ViewAffordance per_view_afford(const Camera& view, std::span<const Vec3> points,
                                      const KeypointObservation& obs, const DepthBuffer& depth,
                                      double depth_epsilon,
                                      const std::vector<std::string>& relevant = {},
                                      const AffordanceOptions& opt = {}) {
  require(opt.lambda > 0.0, "per_view_afford: lambda must be positive");
  ViewAffordance out{std::vector<double>(points.size(), 0.0), visibility(view, depth, points, depth_epsilon)};
  const std::vector<Vec2> kps = active_keypoints(obs, relevant, opt);
  if (kps.empty()) {
    diag::warn("view " + std::to_string(obs.view_index) + ": no usable keypoints; field is zero");
    return out;
  }
  const double diag = view.diagonal();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!out.visible[i]) continue;
    const Projection p = project(view, points[i]);
    double best = kInf;
    for (const auto& k : kps) best = std::min(best, (p.pixel - k).norm());
    out.values[i] = std::exp(-opt.lambda * best / diag);
  }
  return out;
}

// Mean over contributing views (all views in all_views mode), then
// normalized. An all-zero field falls back to uniform with a warning.
inline std::vector<double> aggregate(const std::vector<std::vector<double>>& per_view,
                                     const std::vector<std::vector<bool>>& contributing,
                                     const AffordanceOptions& opt = {}) {
  require(!per_view.empty(), "aggregate: no views");
  require(contributing.size() == per_view.size(), "aggregate: visibility count does not match views");
  const std::size_t D = per_view.front().size();
  require(D > 0, "aggregate: no points");
  for (std::size_t v = 0; v < per_view.size(); ++v)
    require(per_view[v].size() == D && contributing[v].size() == D,
            "aggregate: inconsistent point counts across views");

  // Values are summed in sorted order so the result does not depend on the
  // order of the views, bit for bit.
  std::vector<double> p(D, 0.0);
  std::vector<double> terms;
  for (std::size_t j = 0; j < D; ++j) {
    terms.clear();
    for (std::size_t v = 0; v < per_view.size(); ++v) {
      if (opt.mode == AggregationMode::visible_views && !contributing[v][j]) continue;
      terms.push_back(per_view[v][j]);
    }
    std::sort(terms.begin(), terms.end());
    double sum = 0.0;
    for (double t : terms) sum += t;
    p[j] = terms.empty() ? 0.0 : sum / static_cast<double>(terms.size());
  }
  double norm = 0.0;
  for (double x : p) norm = opt.normalization == Normalization::sum ? norm + x : std::max(norm, x);
  if (!(norm > 0.0)) {
    diag::warn("aggregate: affordance is zero everywhere; using a uniform map");
    std::fill(p.begin(), p.end(), opt.normalization == Normalization::sum ? 1.0 / D : 1.0);
    return p;
  }
  for (double& x : p) x /= norm;
  return p;
}

struct AffordanceMap {
  std::vector<PointSample> points;
  std::vector<double> probability;
  std::vector<std::vector<double>> per_view;
  std::vector<std::vector<bool>> contributing;

  std::size_t size() const { return points.size(); }
  std::vector<Vec3> positions() const { return afford::positions(points); }

  void validate() const {
    if (probability.size() != points.size())
      fail(ErrorKind::data, "affordance map: probability length does not match point count");
    for (double x : probability)
      if (!(x >= 0.0) || !std::isfinite(x)) fail(ErrorKind::data, "affordance map: invalid probability");
  }
};

// Renders each view and runs the per-view field and aggregation over the
// given object points. Views without an observation contribute nothing.
inline AffordanceMap parse_affordance_at(const TriMesh& obj, const ViewRig& rig,
                                         std::vector<PointSample> points,
                                         std::span<const KeypointObservation> observations,
                                         const std::vector<std::string>& relevant,
                                         const AffordanceOptions& opt = {}) {
  require(rig.size() > 0, "parse_affordance: empty rig");
  require(!points.empty(), "parse_affordance: no object points");
  std::map<int, const KeypointObservation*> by_view;
  for (const auto& o : observations) {
    o.validate(rig);
    if (!by_view.emplace(o.view_index, &o).second)
      fail(ErrorKind::data, "keypoints: duplicate observation for view " + std::to_string(o.view_index));
  }
  AffordanceMap map;
  map.points = std::move(points);
  const std::vector<Vec3> pts = map.positions();
  const std::size_t D = pts.size();
  for (std::size_t v = 0; v < rig.size(); ++v) {
    auto it = by_view.find(static_cast<int>(v));
    if (it == by_view.end()) {
      diag::warn("view " + std::to_string(v) + " has no keypoint observation");
      map.per_view.emplace_back(D, 0.0);
      map.contributing.emplace_back(D, false);
      continue;
    }
    const Raster r = rasterize_mask(rig.cameras[v], obj);
    ViewAffordance va = per_view_afford(rig.cameras[v], pts, *it->second, r.depth,
                                        rig.depth_epsilon(), relevant, opt);
    if (active_keypoints(*it->second, relevant, opt).empty())
      std::fill(va.visible.begin(), va.visible.end(), false);
    map.per_view.push_back(std::move(va.values));
    map.contributing.push_back(std::move(va.visible));
  }
  // In all_views mode views without evidence still count towards the mean.
  map.probability = aggregate(map.per_view, map.contributing, opt);
  return map;
}

// As above over D area-weighted samples of the object.
inline AffordanceMap parse_affordance(const TriMesh& obj, const ViewRig& rig,
                                      std::span<const KeypointObservation> observations,
                                      const std::vector<std::string>& relevant,
                                      const AffordanceOptions& opt = {}, int point_count = 2048,
                                      std::uint64_t seed = 0) {
  return parse_affordance_at(obj, rig, sample_surface(obj, point_count, seed), observations,
                             relevant, opt);
}

// ---------------------------------------------------------------------------
// Contact region.

struct ContactRegion {
  std::vector<int> indices;
  std::vector<double> weights;

  bool empty() const { return indices.empty(); }
  std::size_t size() const { return indices.size(); }

  void validate(std::size_t point_count) const {
    if (indices.size() != weights.size())
      fail(ErrorKind::data, "contact region: indices and weights differ in length");
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] < 0 || indices[k] >= static_cast<int>(point_count))
        fail(ErrorKind::data, "contact region: index out of range");
      if (!(weights[k] >= 0.0)) fail(ErrorKind::data, "contact region: negative weight");
    }
  }
};

// Smallest prefix of points in descending probability (ties by index) whose
// mass reaches the fraction of the total.
inline ContactRegion extract_region(const AffordanceMap& map, double mass_fraction = 0.8) {
  require(mass_fraction > 0.0 && mass_fraction <= 1.0, "extract_region: mass fraction must be in (0, 1]");
  map.validate();
  const auto& p = map.probability;
  std::vector<int> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] > p[b]; });
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  const double target = mass_fraction * total * (1.0 - 1e-12);
  ContactRegion r;
  double mass = 0.0;
  for (int i : order) {
    r.indices.push_back(i);
    r.weights.push_back(p[i]);
    mass += p[i];
    if (mass >= target) break;
  }
  return r;
}

inline double region_mass(const AffordanceMap& map, const std::function<bool(const Vec3&)>& inside) {
  double m = 0.0;
  for (std::size_t j = 0; j < map.size(); ++j)
    if (inside(map.points[j].position)) m += map.probability[j];
  return m;
}

// Weighted centroid and normalized mean normal of the region, object frame.
inline std::pair<Vec3, Vec3> region_frame(const AffordanceMap& map, const ContactRegion& region) {
  require(!region.empty(), "region_frame: empty region");
  Vec3 c = Vec3::Zero(), n = Vec3::Zero();
  double w = 0.0;
  for (std::size_t k = 0; k < region.size(); ++k) {
    const auto& s = map.points[region.indices[k]];
    const double wk = region.weights[k] > 0.0 ? region.weights[k] : 0.0;
    c += wk * s.position;
    n += wk * s.normal;
    w += wk;
  }
  if (!(w > 0.0)) {
    for (int j : region.indices) {
      c += map.points[j].position;
      n += map.points[j].normal;
    }
    w = static_cast<double>(region.size());
  }
  c /= w;
  const double len = n.norm();
  return {c, len > 0.0 ? Vec3(n / len) : Vec3::UnitY()};
}

// ---------------------------------------------------------------------------
// Export.

// Blue (0) through green to red (1), relative to the map maximum.
inline Rgb heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const auto u8 = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(x, 0.0, 1.0))); };
  return {u8(2.0 * t - 1.0), u8(1.0 - std::abs(2.0 * t - 1.0)), u8(1.0 - 2.0 * t)};
}

inline void write_affordance_ply(const AffordanceMap& map, const std::filesystem::path& path) {
  const double mx = map.probability.empty()
                        ? 0.0
                        : *std::max_element(map.probability.begin(), map.probability.end());
  std::vector<Rgb> colors;
  colors.reserve(map.size());
  for (double p : map.probability) colors.push_back(heat_color(mx > 0.0 ? p / mx : 0.0));
  const auto pts = map.positions();
  write_point_ply(pts, colors, path);
}

inline nlohmann::json to_json(const AffordanceMap& map) {
  nlohmann::json pts = nlohmann::json::array(), nrm = nlohmann::json::array();
  for (const auto& s : map.points) {
    pts.push_back({s.position.x(), s.position.y(), s.position.z()});
    nrm.push_back({s.normal.x(), s.normal.y(), s.normal.z()});
  }
  nlohmann::json contributing = nlohmann::json::array();
  for (const auto& c : map.contributing) {
    std::vector<int> v(c.begin(), c.end());
    contributing.push_back(v);
  }
  return {{"points", pts},
          {"normals", nrm},
          {"probability", map.probability},
          {"per_view", map.per_view},
          {"contributing", contributing}};
}

inline AffordanceMap affordance_from_json(const nlohmann::json& j) {
  AffordanceMap m;
  try {
    const auto& pts = j.at("points");
    const auto& nrm = j.at("normals");
    if (pts.size() != nrm.size()) fail(ErrorKind::data, "affordance: points and normals differ in length");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      PointSample s;
      s.position = Vec3(pts[i].at(0).get<double>(), pts[i].at(1).get<double>(), pts[i].at(2).get<double>());
      s.normal = Vec3(nrm[i].at(0).get<double>(), nrm[i].at(1).get<double>(), nrm[i].at(2).get<double>());
      m.points.push_back(s);
    }
    m.probability = j.at("probability").get<std::vector<double>>();
    if (j.contains("per_view")) m.per_view = j.at("per_view").get<std::vector<std::vector<double>>>();
    if (j.contains("contributing"))
      for (const auto& c : j.at("contributing")) {
        std::vector<bool> v;
        for (const auto& x : c) v.push_back(x.get<int>() != 0);
        m.contributing.push_back(std::move(v));
      }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("affordance: ") + e.what());
  }
  m.validate();
  return m;
}

inline nlohmann::json to_json(const ContactRegion& r) {
  return {{"indices", r.indices}, {"weights", r.weights}};
}

inline ContactRegion region_from_json(const nlohmann::json& j) {
  ContactRegion r;
  try {
    r.indices = j.at("indices").get<std::vector<int>>();
    r.weights = j.at("weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("contact region: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Synthetic keypoints. A proxy body is moved (in the object frame) so the
// centroid of its contact parts sits just off a target surface point, and
// the centroid of every labelled part is projected into each view.

struct SyntheticTarget {
  Vec3 anchor = Vec3::Zero();  // object frame
  Vec3 normal = Vec3::UnitY();
  double standoff = 0.02;      // meters, along the normal
};

// Target at the object surface point closest to the centre of one bounding
// box face. Sides follow the object frame: front +x, top +y, right +z.
inline SyntheticTarget target_from_side(const TriMesh& obj, const std::string& side) {
  static const std::map<std::string, Vec3> dirs{
      {"front", Vec3::UnitX()}, {"back", -Vec3::UnitX()}, {"top", Vec3::UnitY()},
      {"bottom", -Vec3::UnitY()}, {"right", Vec3::UnitZ()}, {"left", -Vec3::UnitZ()}};
  const auto it = dirs.find(side);
  if (it == dirs.end()) fail(ErrorKind::data, "synthetic keypoints: unknown side '" + side + "'");
  if (obj.empty()) fail(ErrorKind::precondition, "synthetic keypoints: empty object");
  const Aabb b = bounds(obj.vertices);
  const Vec3 d = it->second;
  const Vec3 face_centre = b.center() + 0.5 * b.extent().cwiseProduct(d);
  SyntheticTarget t;
  t.anchor = SurfaceDistance(obj).closest(face_centre).point;
  t.normal = d;
  return t;
}

inline std::vector<KeypointObservation> synthesize_keypoints(
    const ViewRig& rig, const PlacementInit& placement, const BodyTemplate& body,
    const TriMesh& body_world, const std::vector<std::string>& contact_parts,
    const SyntheticTarget& target) {
  require(body_world.vertices.size() == body.template_vertices.size(),
          "synthetic keypoints: body mesh does not match its template");
  const PartSelection contact = resolve_parts(body, contact_parts);
  require(!contact.vertices.empty(), "synthetic keypoints: contact parts have no vertices");
  const auto& tf = placement.object_transform;
  std::vector<Vec3> local;
  local.reserve(body_world.vertices.size());
  for (const auto& v : body_world.vertices) local.push_back(tf.apply_inverse(v));

  auto centroid = [&](const std::vector<int>& ids) {
    Vec3 c = Vec3::Zero();
    for (int i : ids) c += local[i];
    return Vec3(c / static_cast<double>(ids.size()));
  };
  const Vec3 shift = target.anchor + (target.standoff / tf.scale()) * target.normal.normalized() -
                     centroid(contact.vertices);

  std::vector<KeypointObservation> out;
  for (std::size_t v = 0; v < rig.size(); ++v) {
    const Camera& cam = rig.cameras[v];
    KeypointObservation o;
    o.view_index = static_cast<int>(v);
    for (const auto& [name, ids] : body.part_labels) {
      if (ids.empty()) continue;
      const Projection p = project(cam, centroid(ids) + shift);
      if (!p.valid || p.pixel.x() < 0.0 || p.pixel.y() < 0.0 || p.pixel.x() > cam.width ||
          p.pixel.y() > cam.height)
        continue;
      o.keypoints.push_back({name, p.pixel, 1.0});
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace afford
