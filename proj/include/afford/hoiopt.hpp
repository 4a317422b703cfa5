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

// Interaction optimization. The global phase moves, turns and scales the
// object against a fixed body; the two fine phases pose the body, then the
// hands, against the fixed object. Every loss term returns its value and,
// on request, its analytic gradient.

#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "afford/affordance.hpp"
#include "afford/bodymodel.hpp"
#include "afford/geometry.hpp"

namespace afford {

// ---------------------------------------------------------------------------
// Configuration.

struct LossWeights {
  double phi_i = 1.0;
  double phi_n = 0.1;
  double phi_s = 0.01;
  double phi_p = 10.0;
  double ground_weight = 1e4;
  double delta_fc = 1.0;       // force closure weight in the hand phase
  double delta_fc_body = 0.0;  // force closure weight in the body phase
  double joint_limit_weight = 0.1;
  double hinge_weight = 0.01;

  void validate() const {
    for (double w : {phi_i, phi_n, phi_s, phi_p, ground_weight, delta_fc, delta_fc_body,
                     joint_limit_weight, hinge_weight})
      require(w >= 0.0 && std::isfinite(w), "loss weights must be finite and non-negative");
  }
  bool all_zero() const {
    return phi_i == 0 && phi_n == 0 && phi_s == 0 && phi_p == 0 && ground_weight == 0 &&
           delta_fc == 0 && delta_fc_body == 0 && joint_limit_weight == 0 && hinge_weight == 0;
  }
};

struct ContactSettings {
  int k_contacts = 32;
  double pair_radius = 0.02;  // meters
  double sigma_c = 0.01;      // force-closure proximity scale, meters
  std::uint64_t seed = 0;
};

struct Schedule {
  int max_iters = 500;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  int window = 10;       // convergence window, iterations
  double rel_tol = 1e-5;  // relative loss change over the window
  int max_backtracks = 12;
};

enum class Phase { global, fine_body, fine_hand };

inline std::string to_string(Phase p) {
  switch (p) {
    case Phase::global: return "global";
    case Phase::fine_body: return "fine_body";
    case Phase::fine_hand: return "fine_hand";
  }
  return "?";
}

struct OptState {
  RigidScaledTransform object_transform;
  BodyParams body_params;
  Phase phase = Phase::global;
  int iteration = 0;
};

// ---------------------------------------------------------------------------
// Loss report.

struct LossReport {
  double total = 0.0;
  std::map<std::string, double> per_term;  // unweighted values
  std::map<std::string, double> weights;
  double grad_norm = 0.0;
  double contact_distance = kInf;
  double penetration_volume_proxy = 0.0;

  void add(const std::string& name, double weight, double value) {
    per_term[name] = value;
    weights[name] = weight;
    total += weight * value;
  }
  double resum() const {
    double s = 0.0;
    for (const auto& [name, v] : per_term) s += weights.at(name) * v;
    return s;
  }
  bool sum_invariant(double tol = 1e-9) const {
    return std::abs(total - resum()) <= tol * std::max(1.0, std::abs(total));
  }
};

inline nlohmann::json to_json(const LossReport& r) {
  nlohmann::json terms = nlohmann::json::object(), weights = nlohmann::json::object();
  for (const auto& [k, v] : r.per_term) terms[k] = v;
  for (const auto& [k, v] : r.weights) weights[k] = v;
  return {{"total", r.total},
          {"per_term", terms},
          {"weights", weights},
          {"grad_norm", r.grad_norm},
          {"contact_distance", r.contact_distance},
          {"penetration_volume_proxy", r.penetration_volume_proxy}};
}

inline LossReport report_from_json(const nlohmann::json& j) {
  LossReport r;
  r.total = j.at("total").get<double>();
  for (const auto& [k, v] : j.at("per_term").items()) r.per_term[k] = v.get<double>();
  for (const auto& [k, v] : j.at("weights").items()) r.weights[k] = v.get<double>();
  r.grad_norm = j.at("grad_norm").get<double>();
  r.contact_distance = j.at("contact_distance").is_number() ? j.at("contact_distance").get<double>() : kInf;
  r.penetration_volume_proxy = j.at("penetration_volume_proxy").get<double>();
  return r;
}

// ---------------------------------------------------------------------------
// Loss terms.

// Weighted chamfer between human points h and region points o, where w[j]
// weights region point j: mean over o of w_j * min_i |o_j - h_i|^2 plus mean
// over h of w_{nn(i)} * min_j |h_i - o_j|^2.
//
// human_w, when given, replaces the human-side weights w_{nn(i)} with fixed
// per-vertex values, which keeps the term continuous while the nearest
// region point of a vertex changes.
inline double loss_inter(std::span<const Vec3> h, std::span<const Vec3> o, std::span<const double> w,
                         std::vector<Vec3>* grad_h = nullptr, std::vector<Vec3>* grad_o = nullptr,
                         std::span<const double> human_w = {}) {
  require(!h.empty(), "loss_inter: no interacting body vertices");
  require(!o.empty(), "loss_inter: contact region is empty");
  require(w.size() == o.size(), "loss_inter: weight count does not match region");
  require(human_w.empty() || human_w.size() == h.size(), "loss_inter: human weight count does not match");
  if (grad_h) grad_h->assign(h.size(), Vec3::Zero());
  if (grad_o) grad_o->assign(o.size(), Vec3::Zero());
  const KdTree th(std::vector<Vec3>(h.begin(), h.end()));
  const KdTree to(std::vector<Vec3>(o.begin(), o.end()));
  const double no = static_cast<double>(o.size()), nh = static_cast<double>(h.size());
  double obj_side = 0.0, hum_side = 0.0;
  for (std::size_t j = 0; j < o.size(); ++j) {
    const auto hit = th.nearest(o[j]);
    obj_side += w[j] * hit.squared_distance;
    const Vec3 g = 2.0 * w[j] * (o[j] - h[hit.index]) / no;
    if (grad_o) (*grad_o)[j] += g;
    if (grad_h) (*grad_h)[hit.index] -= g;
  }
  for (std::size_t i = 0; i < h.size(); ++i) {
    const auto hit = to.nearest(h[i]);
    const double wi = human_w.empty() ? w[hit.index] : human_w[i];
    hum_side += wi * hit.squared_distance;
    const Vec3 g = 2.0 * wi * (h[i] - o[hit.index]) / nh;
    if (grad_h) (*grad_h)[i] += g;
    if (grad_o) (*grad_o)[hit.index] -= g;
  }
  return obj_side / no + hum_side / nh;
}

// Weight of the nearest region point for each human point.
inline std::vector<double> nearest_weights(std::span<const Vec3> h, std::span<const Vec3> o,
                                           std::span<const double> w) {
  const KdTree to(std::vector<Vec3>(o.begin(), o.end()));
  std::vector<double> out;
  out.reserve(h.size());
  for (const auto& p : h) out.push_back(w[to.nearest(p).index]);
  return out;
}

inline double loss_scale(const RigidScaledTransform& tf, double init_log_scale, double* grad = nullptr) {
  const double d = tf.log_scale - init_log_scale;
  if (grad) *grad = 2.0 * d;
  return d * d;
}

// (min_y)^2 over the given points; reports the arg-min index.
inline double loss_ground(std::span<const Vec3> world, int* argmin = nullptr, double* min_y = nullptr) {
  require(!world.empty(), "loss_ground: no vertices");
  int best = 0;
  for (std::size_t i = 1; i < world.size(); ++i)
    if (world[i].y() < world[best].y()) best = static_cast<int>(i);
  if (argmin) *argmin = best;
  if (min_y) *min_y = world[best].y();
  return world[best].y() * world[best].y();
}

inline double loss_ground(const TriMesh& obj_world) { return loss_ground(obj_world.vertices); }

// Penetration of points into a fixed mesh: sum of squared distances to the
// surface over interior points. Gradient with respect to the points.
inline double penetration_loss(const PenetrationQuery& q, std::span<const Vec3> pts,
                               std::vector<Vec3>* grad = nullptr) {
  const PenetrationTerm t = q.evaluate(pts);
  if (grad) {
    grad->assign(pts.size(), Vec3::Zero());
    for (std::size_t k = 0; k < t.inside_points.size(); ++k) {
      const int i = t.inside_points[k];
      (*grad)[i] = 2.0 * (pts[i] - t.closest[k]);
    }
  }
  return t.energy;
}

// ---------------------------------------------------------------------------
// Contact pairs.

struct ContactPair {
  int contact = 0;       // slot in human_indices
  int object_index = 0;  // affordance point index
  double weight = 0.0;
  int region_slot = 0;   // entry in the contact region
};

struct ContactPairSet {
  std::vector<int> human_indices;  // body vertex per contact
  std::vector<Vec3> human_points, human_normals;
  std::vector<double> contact_weights;  // weight of each contact's nearest region point
  std::vector<ContactPair> pairs;
  std::vector<Vec3> object_points, object_normals;  // per pair

  bool empty() const { return pairs.empty(); }
};

// Uniform subsample of k part vertices (all of them when k >= |P_h|),
// returned in ascending order.
inline std::vector<int> sample_contacts(const PartSelection& parts, int k, std::uint64_t seed) {
  require(k >= 1, "build_contact_pairs: k_contacts must be >= 1");
  require(!parts.vertices.empty(), "build_contact_pairs: no interacting body vertices");
  std::vector<int> v = parts.vertices;
  if (k < static_cast<int>(v.size())) {
    std::mt19937_64 rng(seed);
    for (int i = 0; i < k; ++i) {
      std::uniform_int_distribution<int> pick(i, static_cast<int>(v.size()) - 1);
      std::swap(v[i], v[pick(rng)]);
    }
    v.resize(k);
    std::sort(v.begin(), v.end());
  }
  return v;
}

// Part vertices whose normal points toward their nearest region point; the
// whole part when none does.
inline PartSelection facing_subset(std::span<const Vec3> body_points, std::span<const Vec3> body_normals,
                                   const PartSelection& parts, std::span<const Vec3> region_points) {
  require(!region_points.empty(), "build_contact_pairs: contact region is empty");
  const KdTree tree(std::vector<Vec3>(region_points.begin(), region_points.end()));
  PartSelection out;
  out.labels = parts.labels;
  for (int i : parts.vertices) {
    const Vec3 d = region_points[tree.nearest(body_points[i]).index] - body_points[i];
    if (body_normals[i].dot(d) > 0.0) out.vertices.push_back(i);
  }
  if (out.vertices.empty()) return parts;
  return out;
}

// Correspondences between contacts and region entries, kept apart from the
// geometry so a phase can hold them fixed while the points move.
struct PairMatch {
  std::vector<std::array<int, 2>> pairs;  // (contact slot, region entry)
  std::vector<int> nearest;               // nearest region entry per contact
};

// Pairs each contact with the region points within radius, or with its
// nearest region point when none is that close.
inline PairMatch match_pairs(std::span<const Vec3> body_points, const std::vector<int>& contacts,
                             std::span<const Vec3> region_points, double radius) {
  require(!region_points.empty(), "build_contact_pairs: contact region is empty");
  const KdTree tree(std::vector<Vec3>(region_points.begin(), region_points.end()));
  PairMatch m;
  for (std::size_t a = 0; a < contacts.size(); ++a) {
    const Vec3& h = body_points[contacts[a]];
    const auto nn = tree.nearest(h);
    m.nearest.push_back(nn.index);
    std::vector<int> near;
    if (std::isfinite(radius)) near = tree.within(h, radius);
    if (near.empty()) near.push_back(nn.index);
    std::sort(near.begin(), near.end());
    for (int r : near) m.pairs.push_back({static_cast<int>(a), r});
  }
  return m;
}

// region_points and region_normals are indexed like region.indices.
inline ContactPairSet assemble_pairs(std::span<const Vec3> body_points, std::span<const Vec3> body_normals,
                                     const std::vector<int>& contacts, const ContactRegion& region,
                                     std::span<const Vec3> region_points,
                                     std::span<const Vec3> region_normals, const PairMatch& match) {
  ContactPairSet set;
  for (std::size_t a = 0; a < contacts.size(); ++a) {
    const int i = contacts[a];
    set.human_indices.push_back(i);
    set.human_points.push_back(body_points[i]);
    set.human_normals.push_back(body_normals[i]);
    set.contact_weights.push_back(region.weights[match.nearest[a]]);
  }
  for (const auto& [a, r] : match.pairs) {
    set.pairs.push_back({a, region.indices[r], region.weights[r], r});
    set.object_points.push_back(region_points[r]);
    set.object_normals.push_back(region_normals[r]);
  }
  return set;
}

inline ContactPairSet pair_contacts(std::span<const Vec3> body_points, std::span<const Vec3> body_normals,
                                    const std::vector<int>& contacts, const ContactRegion& region,
                                    std::span<const Vec3> region_points,
                                    std::span<const Vec3> region_normals, double radius) {
  require(!region.empty(), "build_contact_pairs: contact region is empty");
  require(region_points.size() == region.size() && region_normals.size() == region.size(),
          "build_contact_pairs: region geometry does not match the region");
  return assemble_pairs(body_points, body_normals, contacts, region, region_points, region_normals,
                        match_pairs(body_points, contacts, region_points, radius));
}

inline ContactPairSet build_contact_pairs(const TriMesh& body, const PartSelection& parts,
                                          const ContactRegion& region, std::span<const Vec3> region_points,
                                          std::span<const Vec3> region_normals, int k_contacts,
                                          double radius, std::uint64_t seed) {
  return pair_contacts(body.vertices, body.vertex_normals, sample_contacts(parts, k_contacts, seed),
                       region, region_points, region_normals, radius);
}

// Gradients of the pair-based terms, per contact and per pair.
struct PairGradient {
  std::vector<Vec3> human_points, human_normals;    // per contact
  std::vector<Vec3> object_points, object_normals;  // per pair

  void reset(const ContactPairSet& s) {
    human_points.assign(s.human_points.size(), Vec3::Zero());
    human_normals.assign(s.human_points.size(), Vec3::Zero());
    object_points.assign(s.pairs.size(), Vec3::Zero());
    object_normals.assign(s.pairs.size(), Vec3::Zero());
  }
};

// Sum over pairs of (n_h . n_o + 1)^2.
inline double loss_normal(const ContactPairSet& s, PairGradient* grad = nullptr) {
  if (grad) grad->reset(s);
  double total = 0.0;
  for (std::size_t p = 0; p < s.pairs.size(); ++p) {
    const Vec3& nh = s.human_normals[s.pairs[p].contact];
    const Vec3& no = s.object_normals[p];
    const double d = nh.dot(no) + 1.0;
    total += d * d;
    if (grad) {
      grad->human_normals[s.pairs[p].contact] += 2.0 * d * no;
      grad->object_normals[p] += 2.0 * d * nh;
    }
  }
  return total;
}

// Sum over distinct paired object points j of (sum over contacts i of
// w_i fv(i, j) . n(j))^2, with fv(i, j) = -n_h(i) exp(-|p_j - h_i|^2 / 2 sigma^2).
inline double loss_fc(const ContactPairSet& s, double sigma, PairGradient* grad = nullptr) {
  require(!s.empty(), "loss_fc: no contact pairs");
  require(sigma > 0.0, "loss_fc: sigma must be positive");
  if (grad) grad->reset(s);
  std::vector<int> first;  // first pair carrying each distinct object point
  {
    std::set<int> seen;
    for (std::size_t p = 0; p < s.pairs.size(); ++p)
      if (seen.insert(s.pairs[p].object_index).second) first.push_back(static_cast<int>(p));
  }
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double total = 0.0;
  for (int p : first) {
    const Vec3& pj = s.object_points[p];
    const Vec3& nj = s.object_normals[p];
    double F = 0.0;
    for (std::size_t a = 0; a < s.human_points.size(); ++a) {
      const Vec3 d = pj - s.human_points[a];
      F += s.contact_weights[a] * std::exp(-d.squaredNorm() * inv2s2) * -s.human_normals[a].dot(nj);
    }
    total += F * F;
    if (!grad) continue;
    Vec3 g_nj = Vec3::Zero(), g_pj = Vec3::Zero();
    for (std::size_t a = 0; a < s.human_points.size(); ++a) {
      const Vec3 d = pj - s.human_points[a];
      const double e = s.contact_weights[a] * std::exp(-d.squaredNorm() * inv2s2);
      const double c = -s.human_normals[a].dot(nj);
      // d/dh of exp(-|p-h|^2/2s^2) = exp(.) (p-h)/s^2
      grad->human_points[a] += 2.0 * F * e * c * d * (2.0 * inv2s2);
      grad->human_normals[a] += 2.0 * F * -e * nj;
      g_pj -= 2.0 * F * e * c * d * (2.0 * inv2s2);
      g_nj += 2.0 * F * -e * s.human_normals[a];
    }
    grad->object_points[p] += g_pj;
    grad->object_normals[p] += g_nj;
  }
  return total;
}

// Sum over pairs of w * max(0, -n_h . (p_j - h_i) / |p_j - h_i|)^2: the
// paired object point should lie on the outer side of the body surface.
inline double loss_hinge(const ContactPairSet& s, PairGradient* grad = nullptr) {
  if (grad) grad->reset(s);
  double total = 0.0;
  for (std::size_t p = 0; p < s.pairs.size(); ++p) {
    const int a = s.pairs[p].contact;
    const Vec3 d = s.object_points[p] - s.human_points[a];
    const double r = d.norm();
    if (r < 1e-12) continue;
    const Vec3 u = d / r;
    const Vec3& n = s.human_normals[a];
    const double v = -n.dot(u);
    if (v <= 0.0) continue;
    const double w = s.pairs[p].weight;
    total += w * v * v;
    if (grad) {
      const Vec3 dv_du = -n;
      const Vec3 dv_dd = (dv_du - u * u.dot(dv_du)) / r;  // through u = d / |d|
      grad->human_points[a] -= 2.0 * w * v * dv_dd;
      grad->object_points[p] += 2.0 * w * v * dv_dd;
      grad->human_normals[a] += 2.0 * w * v * -u;
    }
  }
  return total;
}

// Minimum distance between two point sets.
inline double min_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) return kInf;
  const KdTree tree(std::vector<Vec3>(b.begin(), b.end()));
  double best = kInf;
  for (const auto& p : a) best = std::min(best, tree.nearest(p).squared_distance);
  return std::sqrt(best);
}

// ---------------------------------------------------------------------------
// Problems.

// Region geometry in the object frame, gathered from the affordance map.
struct RegionGeometry {
  ContactRegion region;
  std::vector<Vec3> points, normals;  // object frame, per region entry

  static RegionGeometry from(const AffordanceMap& map, const ContactRegion& region) {
    region.validate(map.size());
    RegionGeometry g;
    g.region = region;
    for (int j : region.indices) {
      g.points.push_back(map.points[j].position);
      g.normals.push_back(map.points[j].normal);
    }
    return g;
  }
};

// Region weights rescaled to a maximum of 1 so loss magnitudes do not depend
// on the number of affordance samples.
inline ContactRegion relative_weights(ContactRegion r) {
  double mx = 0.0;
  for (double w : r.weights) mx = std::max(mx, w);
  if (mx > 0.0)
    for (double& w : r.weights) w /= mx;
  return r;
}

struct GlobalProblem {
  std::shared_ptr<const TriMesh> object;            // object frame, watertight
  std::shared_ptr<const PenetrationQuery> object_query;
  TriMesh body;                                    // world, fixed
  PartSelection parts;
  RegionGeometry region;
  std::vector<int> contacts;
  bool ground_flag = true;
  bool invert_ground_flag = false;
  double init_log_scale = 0.0;
  ContactSettings contact;
  LossWeights weights;
  // Correspondences held fixed during the phase; rebuilt every evaluation
  // when unset.
  std::optional<PairMatch> frozen_pairs;
  std::vector<double> frozen_human_weights;  // per part vertex

  static GlobalProblem make(const TriMesh& object, TriMesh body, PartSelection parts,
                            RegionGeometry region, bool ground_flag, double init_log_scale,
                            const ContactSettings& contact, const LossWeights& weights) {
    GlobalProblem g;
    auto obj = std::make_shared<const TriMesh>(object);
    g.object_query = std::make_shared<const PenetrationQuery>(*obj);
    g.object = std::move(obj);
    g.body = std::move(body);
    g.parts = std::move(parts);
    g.region = std::move(region);
    g.contacts = sample_contacts(g.parts, contact.k_contacts, contact.seed);
    g.ground_flag = ground_flag;
    g.init_log_scale = init_log_scale;
    g.contact = contact;
    g.weights = weights;
    return g;
  }
  bool ground_active() const { return ground_flag != invert_ground_flag; }
};

// Global loss over the object transform; the gradient is with respect to
// the packed transform.
inline LossReport loss_global(const OptState& state, const GlobalProblem& pb,
                              TransformGradient* grad = nullptr) {
  require(state.phase == Phase::global, "loss_global: state is not in the global phase");
  const auto& W = pb.weights;
  const RigidScaledTransform& tf = state.object_transform;
  const Mat3 R = tf.rotation_matrix();
  const double s = tf.scale();
  if (grad) *grad = TransformGradient{};
  LossReport rep;

  // Region in world.
  const std::size_t nr = pb.region.points.size();
  std::vector<Vec3> rp(nr), rn(nr);
  for (std::size_t k = 0; k < nr; ++k) {
    rp[k] = s * (R * pb.region.points[k]) + tf.translation;
    rn[k] = R * pb.region.normals[k];
  }
  std::vector<Vec3> hp;
  hp.reserve(pb.parts.vertices.size());
  for (int i : pb.parts.vertices) hp.push_back(pb.body.vertices[i]);

  std::vector<Vec3> g_o;
  const double inter =
      loss_inter(hp, rp, pb.region.region.weights, nullptr, grad ? &g_o : nullptr, pb.frozen_human_weights);
  rep.add("inter", W.phi_i, inter);
  if (grad && W.phi_i != 0.0)
    for (std::size_t k = 0; k < nr; ++k) grad->add_point(tf, R, pb.region.points[k], W.phi_i * g_o[k]);

  const PairMatch match = pb.frozen_pairs ? *pb.frozen_pairs
                                          : match_pairs(pb.body.vertices, pb.contacts, rp, pb.contact.pair_radius);
  const ContactPairSet pairs = assemble_pairs(pb.body.vertices, pb.body.vertex_normals, pb.contacts,
                                              pb.region.region, rp, rn, match);
  PairGradient pg;
  const double normal = loss_normal(pairs, grad ? &pg : nullptr);
  rep.add("normal", W.phi_n, normal);
  if (grad && W.phi_n != 0.0) {
    for (std::size_t p = 0; p < pairs.pairs.size(); ++p)
      grad->add_normal(tf, R, pb.region.normals[pairs.pairs[p].region_slot], W.phi_n * pg.object_normals[p]);
  }

  double gls = 0.0;
  rep.add("scale", W.phi_s, loss_scale(tf, pb.init_log_scale, &gls));
  if (grad) grad->log_scale += W.phi_s * gls;

  // Penetration of body vertices into the object, evaluated in the object
  // frame; closest points carried back to world.
  std::vector<Vec3> local(pb.body.vertices.size());
  for (std::size_t i = 0; i < local.size(); ++i) local[i] = tf.apply_inverse(pb.body.vertices[i]);
  const PenetrationTerm pen = pb.object_query->evaluate(local);
  double pene = 0.0;
  for (std::size_t k = 0; k < pen.inside_points.size(); ++k) {
    const Vec3& b = pb.body.vertices[pen.inside_points[k]];
    const Vec3 c = s * (R * pen.closest[k]) + tf.translation;
    pene += squared_distance(b, c);
    if (grad && W.phi_p != 0.0) grad->add_point(tf, R, pen.closest[k], W.phi_p * -2.0 * (b - c));
  }
  rep.add("pene", W.phi_p, pene);

  const double gw = pb.ground_active() ? W.ground_weight : 0.0;
  std::vector<Vec3> ow(pb.object->vertices.size());
  for (std::size_t i = 0; i < ow.size(); ++i) ow[i] = s * (R * pb.object->vertices[i]) + tf.translation;
  int arg = 0;
  double min_y = 0.0;
  rep.add("ground", gw, loss_ground(ow, &arg, &min_y));
  if (grad && gw != 0.0) grad->add_point(tf, R, pb.object->vertices[arg], gw * Vec3(0, 2.0 * min_y, 0));

  rep.contact_distance = min_distance(hp, rp);
  rep.penetration_volume_proxy = pene;
  if (grad) {
    const auto g = grad->packed();
    double n2 = 0.0;
    for (double x : g) n2 += x * x;
    rep.grad_norm = std::sqrt(n2);
  }
  return rep;
}

// True when two region normals point against each other (dot below
// threshold). Without such a pair every contact force points the same way
// and the force-closure term only pushes the body off the surface.
inline bool admits_closure(std::span<const Vec3> normals, double threshold = -0.5) {
  for (std::size_t a = 0; a < normals.size(); ++a)
    for (std::size_t b = a + 1; b < normals.size(); ++b)
      if (normals[a].dot(normals[b]) < threshold) return true;
  return false;
}

struct FineProblem {
  const BodyTemplate* body = nullptr;
  PartSelection parts;
  std::vector<char> is_part;  // per body vertex
  std::shared_ptr<const TriMesh> object;  // world, fixed
  std::shared_ptr<const PenetrationQuery> object_query;
  ContactRegion region;
  std::vector<Vec3> region_points, region_normals;  // world
  std::vector<int> contacts;
  ContactSettings contact;
  JointLimits limits;
  LossWeights weights;
  std::optional<PairMatch> frozen_pairs;
  std::vector<double> frozen_human_weights;

  static FineProblem make(const BodyTemplate& body, PartSelection parts, const TriMesh& object_world,
                          const RegionGeometry& region, const RigidScaledTransform& object_transform,
                          const ContactSettings& contact, const LossWeights& weights) {
    FineProblem f;
    f.body = &body;
    f.parts = std::move(parts);
    f.is_part.assign(body.vertex_count(), 0);
    for (int i : f.parts.vertices) f.is_part[i] = 1;
    auto obj = std::make_shared<const TriMesh>(object_world);
    f.object_query = std::make_shared<const PenetrationQuery>(*obj);
    f.object = std::move(obj);
    f.region = region.region;
    for (std::size_t k = 0; k < region.points.size(); ++k) {
      f.region_points.push_back(object_transform.apply(region.points[k]));
      f.region_normals.push_back(object_transform.rotate(region.normals[k]));
    }
    f.contacts = sample_contacts(f.parts, contact.k_contacts, contact.seed);
    f.contact = contact;
    f.limits = default_joint_limits(body);
    f.weights = weights;
    return f;
  }

  // Force closure stays off when the region cannot oppose contacts; see
  // admits_closure.
  bool closure_possible = true;

  double fc_weight(Phase p) const {
    if (!closure_possible) return 0.0;
    return p == Phase::fine_hand ? weights.delta_fc : weights.delta_fc_body;
  }
};

// Fine loss over the body parameters. The gradient covers pose and
// translation; which of them move is up to the phase.
inline LossReport loss_fine(const OptState& state, const FineProblem& pb, PoseGradient* grad = nullptr) {
  require(state.phase == Phase::fine_body || state.phase == Phase::fine_hand,
          "loss_fine: state is not in a fine phase");
  require(pb.body != nullptr, "loss_fine: problem has no body template");
  const BodyTemplate& T = *pb.body;
  const auto& W = pb.weights;
  const BodyParams& bp = state.body_params;
  const PosedSkeleton sk = pose_skeleton(T, bp);
  TriMesh mesh;
  mesh.vertices = skin_vertices(T, bp, sk);
  mesh.faces = T.faces;
  mesh.update_normals();
  const std::size_t V = mesh.vertices.size();
  std::vector<Vec3> gv(V, Vec3::Zero()), gn(V, Vec3::Zero());
  LossReport rep;

  // Interaction.
  std::vector<Vec3> hp;
  hp.reserve(pb.parts.vertices.size());
  for (int i : pb.parts.vertices) hp.push_back(mesh.vertices[i]);
  std::vector<Vec3> g_h;
  rep.add("inter", W.phi_i, loss_inter(hp, pb.region_points, pb.region.weights, grad ? &g_h : nullptr,
                                       nullptr, pb.frozen_human_weights));
  if (grad)
    for (std::size_t k = 0; k < hp.size(); ++k) gv[pb.parts.vertices[k]] += W.phi_i * g_h[k];

  // Penetration, split between interacted and other vertices.
  {
    const PenetrationTerm t = pb.object_query->evaluate(mesh.vertices);
    double on_part = 0.0, other = 0.0;
    for (std::size_t k = 0; k < t.inside_points.size(); ++k) {
      const int i = t.inside_points[k];
      const double e = squared_distance(mesh.vertices[i], t.closest[k]);
      (pb.is_part[i] ? on_part : other) += e;
      if (grad) gv[i] += W.phi_p * 2.0 * (mesh.vertices[i] - t.closest[k]);
    }
    rep.add("pene_interacted", W.phi_p, on_part);
    rep.add("pene_other", W.phi_p, other);
    rep.penetration_volume_proxy = on_part + other;
  }

  // Contact terms on the interacted part.
  const PairMatch match = pb.frozen_pairs
                               ? *pb.frozen_pairs
                               : match_pairs(mesh.vertices, pb.contacts, pb.region_points, pb.contact.pair_radius);
  const ContactPairSet pairs = assemble_pairs(mesh.vertices, mesh.vertex_normals, pb.contacts, pb.region,
                                              pb.region_points, pb.region_normals, match);
  const double dfc = pb.fc_weight(state.phase);
  PairGradient pg;
  rep.add("fc", dfc, loss_fc(pairs, pb.contact.sigma_c, grad ? &pg : nullptr));
  if (grad)
    for (std::size_t a = 0; a < pairs.human_indices.size(); ++a) {
      gv[pairs.human_indices[a]] += dfc * pg.human_points[a];
      gn[pairs.human_indices[a]] += dfc * pg.human_normals[a];
    }
  rep.add("hinge", W.hinge_weight, loss_hinge(pairs, grad ? &pg : nullptr));
  if (grad)
    for (std::size_t a = 0; a < pairs.human_indices.size(); ++a) {
      gv[pairs.human_indices[a]] += W.hinge_weight * pg.human_points[a];
      gn[pairs.human_indices[a]] += W.hinge_weight * pg.human_normals[a];
    }

  PoseGradient gl;
  rep.add("joint_limit", W.joint_limit_weight, joint_limit_penalty(T, bp, pb.limits, grad ? &gl : nullptr));

  rep.contact_distance = min_distance(hp, pb.region_points);
  if (grad) {
    const std::vector<Vec3> from_normals = vertex_normals_vjp(mesh, gn);
    for (std::size_t i = 0; i < V; ++i) gv[i] += from_normals[i];
    *grad = skin_vjp(T, bp, sk, gv);
    grad->theta_body += W.joint_limit_weight * gl.theta_body;
    grad->theta_hands += W.joint_limit_weight * gl.theta_hands;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Optimizer.

struct Evaluation {
  LossReport report;
  std::vector<double> grad;  // empty: no analytic gradient
};

using Objective = std::function<Evaluation(std::span<const double>)>;

struct MinimizeResult {
  std::vector<double> x;
  std::vector<LossReport> trace;  // trace[0] is the starting point
  std::vector<std::vector<double>> iterates;  // x per trace entry
  bool aborted = false;
  std::string message;
};

inline std::vector<double> central_differences(const Objective& f, std::span<const double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  std::vector<double> xp(x.begin(), x.end());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x0 = xp[k];
    xp[k] = x0 + h;
    const double fp = f(xp).report.total;
    xp[k] = x0 - h;
    const double fm = f(xp).report.total;
    xp[k] = x0;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Adam-scaled steps with backtracking: a trial step is halved until the loss
// does not increase, so accepted iterates never go uphill. Stops at
// max_iters, when the loss changes by less than rel_tol over `window`
// iterations, or when no step size decreases the loss.
inline MinimizeResult minimize(std::vector<double> x, const Objective& f, const Schedule& sc) {
  require(sc.max_iters >= 0 && sc.learning_rate > 0.0 && sc.window >= 1,
          "schedule: invalid iteration count, learning rate or window");
  MinimizeResult out;
  auto evaluate = [&](std::span<const double> at) {
    Evaluation e = f(at);
    if (e.grad.empty()) e.grad = central_differences(f, at);
    double n2 = 0.0;
    for (double g : e.grad) n2 += g * g;
    e.report.grad_norm = std::sqrt(n2);
    return e;
  };
  auto finite = [](const Evaluation& e) {
    if (!std::isfinite(e.report.total)) return false;
    for (double g : e.grad)
      if (!std::isfinite(g)) return false;
    return true;
  };

  Evaluation cur = evaluate(x);
  if (!finite(cur)) {
    out.x = x;
    out.aborted = true;
    out.message = "non-finite loss at the starting point";
    return out;
  }
  out.trace.push_back(cur.report);
  out.iterates.push_back(x);
  const std::size_t n = x.size();
  std::vector<double> m(n, 0.0), v(n, 0.0), step(n), trial(n);
  double b1t = 1.0, b2t = 1.0;
  bool restarted = false;
  Evaluation next;
  // Backtracking along -step; false when no fraction of it decreases the
  // loss, or when the loss turns non-finite (aborted is then set).
  auto line_search = [&](const std::vector<double>& dir, int it) {
    double scale = 1.0;
    for (int b = 0; b <= sc.max_backtracks; ++b, scale *= 0.5) {
      for (std::size_t k = 0; k < n; ++k) trial[k] = x[k] - scale * dir[k];
      next = evaluate(trial);
      if (!finite(next)) {
        out.aborted = true;
        out.message = "non-finite loss at iteration " + std::to_string(it);
        return false;
      }
      if (next.report.total <= cur.report.total) return true;
    }
    return false;
  };
  std::vector<double> plain(n);
  for (int it = 1; it <= sc.max_iters; ++it) {
    b1t *= sc.beta1;
    b2t *= sc.beta2;
    double slope = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = sc.beta1 * m[k] + (1.0 - sc.beta1) * cur.grad[k];
      v[k] = sc.beta2 * v[k] + (1.0 - sc.beta2) * cur.grad[k] * cur.grad[k];
      const double mh = m[k] / (1.0 - b1t);
      const double vh = v[k] / (1.0 - b2t);
      step[k] = sc.learning_rate * mh / (std::sqrt(vh) + sc.epsilon);
      plain[k] = sc.learning_rate * cur.grad[k] / (std::sqrt(vh) + sc.epsilon);
      slope += step[k] * cur.grad[k];
    }
    // Momentum can point uphill after the gradient turns; the scaled
    // gradient without momentum is always a descent direction.
    bool accepted = slope > 0.0 && line_search(step, it);
    if (!accepted && !out.aborted) accepted = line_search(plain, it);
    if (out.aborted) {
      out.x = x;
      return out;
    }
    if (!accepted && !restarted) {
      // No descent along the scaled direction: restart the moments once
      // from the current point.
      restarted = true;
      std::fill(m.begin(), m.end(), 0.0);
      std::fill(v.begin(), v.end(), 0.0);
      b1t = b2t = 1.0;
      continue;
    }
    if (!accepted) {
      // Still stuck, typically on a kink of a piecewise term: try single
      // coordinate moves and keep the best one that decreases the loss.
      double best = cur.report.total;
      for (double h = sc.learning_rate; h >= sc.learning_rate / 512.0 && !accepted; h /= 8.0) {
        for (std::size_t k = 0; k < n; ++k)
          for (double sign : {-1.0, 1.0}) {
            std::vector<double> probe = x;
            probe[k] += sign * h;
            Evaluation e = evaluate(probe);
            if (finite(e) && e.report.total < best) {
              best = e.report.total;
              trial = probe;
              next = std::move(e);
              accepted = true;
            }
          }
      }
      if (!accepted) break;
      std::fill(m.begin(), m.end(), 0.0);
      std::fill(v.begin(), v.end(), 0.0);
      b1t = b2t = 1.0;
    }
    restarted = false;
    x = trial;
    cur = std::move(next);
    out.trace.push_back(cur.report);
    out.iterates.push_back(x);
    const std::size_t T = out.trace.size();
    if (T > static_cast<std::size_t>(sc.window)) {
      const double before = out.trace[T - 1 - sc.window].total;
      const double now = cur.report.total;
      if (std::abs(before - now) <= sc.rel_tol * std::abs(before) + 1e-14) break;
    }
  }
  out.x = std::move(x);
  return out;
}

// ---------------------------------------------------------------------------
// Phases.

inline std::vector<double> pack_variables(const OptState& s) {
  if (s.phase == Phase::global) {
    const auto p = s.object_transform.packed();
    return {p.begin(), p.end()};
  }
  if (s.phase == Phase::fine_body) {
    std::vector<double> x(s.body_params.theta_body.data(),
                          s.body_params.theta_body.data() + s.body_params.theta_body.size());
    x.insert(x.end(), {s.body_params.trans.x(), s.body_params.trans.y(), s.body_params.trans.z()});
    return x;
  }
  return {s.body_params.theta_hands.data(), s.body_params.theta_hands.data() + s.body_params.theta_hands.size()};
}

inline OptState unpack_variables(OptState s, std::span<const double> x) {
  if (s.phase == Phase::global) {
    s.object_transform = RigidScaledTransform::unpacked(x);
  } else if (s.phase == Phase::fine_body) {
    const auto nb = s.body_params.theta_body.size();
    for (Eigen::Index k = 0; k < nb; ++k) s.body_params.theta_body[k] = x[k];
    s.body_params.trans = Vec3(x[nb], x[nb + 1], x[nb + 2]);
  } else {
    for (Eigen::Index k = 0; k < s.body_params.theta_hands.size(); ++k) s.body_params.theta_hands[k] = x[k];
  }
  return s;
}

struct TraceEntry {
  Phase phase = Phase::global;
  int iteration = 0;
  LossReport report;
  RigidScaledTransform object_transform;
  std::uint64_t body_digest = 0;
};

inline nlohmann::json to_json(const TraceEntry& e) {
  std::ostringstream digest;
  digest << std::hex << e.body_digest;
  const auto t = e.object_transform.packed();
  return {{"phase", to_string(e.phase)},
          {"iteration", e.iteration},
          {"report", to_json(e.report)},
          {"object_transform", std::vector<double>(t.begin(), t.end())},
          {"body_digest", digest.str()}};
}

struct PhaseResult {
  OptState state;
  std::vector<TraceEntry> trace;
  bool aborted = false;
  std::string message;
};

inline PhaseResult finish_phase(const OptState& start, const MinimizeResult& r) {
  PhaseResult out;
  out.aborted = r.aborted;
  out.message = r.message;
  for (std::size_t k = 0; k < r.trace.size(); ++k) {
    const OptState s = unpack_variables(start, r.iterates[k]);
    out.trace.push_back({start.phase, static_cast<int>(k), r.trace[k], s.object_transform,
                         s.body_params.digest()});
  }
  out.state = unpack_variables(start, r.x);
  out.state.iteration = r.trace.empty() ? 0 : static_cast<int>(r.trace.size()) - 1;
  return out;
}

inline PhaseResult run_phase(const OptState& start, const GlobalProblem& pb, const Schedule& sc) {
  require(start.phase == Phase::global, "run_phase: global problem needs a global-phase state");
  const Objective f = [&](std::span<const double> x) {
    const OptState s = unpack_variables(start, x);
    TransformGradient g;
    Evaluation e;
    e.report = loss_global(s, pb, &g);
    const auto p = g.packed();
    e.grad.assign(p.begin(), p.end());
    return e;
  };
  return finish_phase(start, minimize(pack_variables(start), f, sc));
}

inline PhaseResult run_phase(const OptState& start, const FineProblem& pb, const Schedule& sc) {
  require(start.phase != Phase::global, "run_phase: fine problem needs a fine-phase state");
  const Objective f = [&](std::span<const double> x) {
    const OptState s = unpack_variables(start, x);
    PoseGradient g;
    Evaluation e;
    e.report = loss_fine(s, pb, &g);
    if (start.phase == Phase::fine_body) {
      e.grad.assign(g.theta_body.data(), g.theta_body.data() + g.theta_body.size());
      e.grad.insert(e.grad.end(), {g.trans.x(), g.trans.y(), g.trans.z()});
    } else {
      e.grad.assign(g.theta_hands.data(), g.theta_hands.data() + g.theta_hands.size());
    }
    return e;
  };
  return finish_phase(start, minimize(pack_variables(start), f, sc));
}

// Generic objective over a flat vector, for tests and custom terms.
inline MinimizeResult run_phase(std::vector<double> x0, const Objective& f, const Schedule& sc) {
  return minimize(std::move(x0), f, sc);
}

// ---------------------------------------------------------------------------
// Full optimization.

struct PipelineOptions {
  LossWeights weights;
  ContactSettings contact;
  Schedule global_schedule{500, 0.01};
  Schedule fine_schedule{300, 0.02};
  double mass_fraction = 0.8;
  bool run_global = true;
  bool run_fine = true;
  bool reextract_region = true;
  double reextract_radius = 0.1;  // meters, proximity scale around the part
  double init_offset = 0.03;      // meters along the mean region normal
  bool invert_ground_flag = false;
  bool freeze_pairs = true;     // hold contact correspondences fixed per phase
  bool facing_contacts = true;  // sample contacts among part vertices facing the region
  bool gate_force_closure = true;  // skip force closure on regions without opposing normals
};

struct PipelineResult {
  OptState state;
  std::vector<TraceEntry> trace;
  std::vector<PhaseResult> phases;
  ContactRegion global_region, fine_region;
  bool aborted = false;
  std::string message;
  // Final metrics, against the global contact region.
  double contact_distance = kInf;
  double penetration_energy = 0.0;
  double object_min_y = 0.0;
  double final_total = 0.0;  // sum of the last total of every phase
};

// Region re-weighted by proximity to the part centroid after the global
// phase, then extracted again.
inline ContactRegion reextract_near(const AffordanceMap& map, const RigidScaledTransform& tf,
                                    const Vec3& part_centroid, double radius, double mass_fraction) {
  AffordanceMap m;
  m.points = map.points;
  m.probability.resize(map.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < map.size(); ++j) {
    const double d2 = squared_distance(tf.apply(map.points[j].position), part_centroid);
    m.probability[j] = map.probability[j] * std::exp(-d2 / (2.0 * radius * radius));
    sum += m.probability[j];
  }
  if (!(sum > 0.0)) {
    diag::warn("region re-extraction: no affordance mass near the body part; keeping the global region");
    return extract_region(map, mass_fraction);
  }
  for (double& p : m.probability) p /= sum;
  return extract_region(m, mass_fraction);
}

inline PipelineResult run_pipeline_opt(const TriMesh& object, const PlacementInit& placement,
                                       const BodyTemplate& body, const BodyParams& init_pose,
                                       const std::vector<std::string>& part_labels,
                                       const AffordanceMap& map, const PipelineOptions& opt = {}) {
  opt.weights.validate();
  map.validate();
  check_dimensions(body, init_pose);
  PipelineResult out;
  const PartSelection parts = resolve_parts(body, part_labels);
  require(!parts.vertices.empty(), "run_pipeline_opt: interacting parts have no vertices");
  out.global_region = extract_region(map, opt.mass_fraction);
  const RegionGeometry global_geo = RegionGeometry::from(map, relative_weights(out.global_region));

  OptState state;
  state.object_transform = placement.object_transform;
  state.body_params = init_pose;
  const bool idle = opt.weights.all_zero();

  auto absorb = [&](PhaseResult&& r) {
    out.trace.insert(out.trace.end(), r.trace.begin(), r.trace.end());
    state = r.state;
    const bool aborted = r.aborted;
    if (aborted) {
      out.aborted = true;
      out.message = to_string(r.state.phase) + ": " + r.message;
    }
    out.phases.push_back(std::move(r));
    return !aborted;
  };

  bool ok = true;
  if (opt.run_global) {
    GlobalProblem gp = GlobalProblem::make(object, skin(body, state.body_params), parts, global_geo,
                                           placement.ground_flag, placement.object_transform.log_scale,
                                           opt.contact, opt.weights);
    gp.invert_ground_flag = opt.invert_ground_flag;
    std::vector<Vec3> rp;
    for (const auto& q : global_geo.points) rp.push_back(state.object_transform.apply(q));
    if (opt.facing_contacts)
      gp.contacts = sample_contacts(facing_subset(gp.body.vertices, gp.body.vertex_normals, parts, rp),
                                    opt.contact.k_contacts, opt.contact.seed);
    if (opt.freeze_pairs) {
      gp.frozen_pairs = match_pairs(gp.body.vertices, gp.contacts, rp, opt.contact.pair_radius);
      std::vector<Vec3> hp;
      for (int i : parts.vertices) hp.push_back(gp.body.vertices[i]);
      gp.frozen_human_weights = nearest_weights(hp, rp, global_geo.region.weights);
    }
    state.phase = Phase::global;
    ok = absorb(run_phase(state, gp, opt.global_schedule));
  }

  out.fine_region = out.global_region;
  if (ok && opt.run_fine) {
    const TriMesh posed = skin(body, state.body_params);
    Vec3 centroid = Vec3::Zero();
    for (int i : parts.vertices) centroid += posed.vertices[i];
    centroid /= static_cast<double>(parts.vertices.size());
    if (opt.reextract_region)
      out.fine_region = reextract_near(map, state.object_transform, centroid, opt.reextract_radius,
                                       opt.mass_fraction);
    const RegionGeometry fine_geo = RegionGeometry::from(map, relative_weights(out.fine_region));
    if (!idle) {
      // Start the part just off the region.
      const auto [c_local, n_local] = region_frame(map, out.fine_region);
      const Vec3 target = state.object_transform.apply(c_local) +
                          opt.init_offset * state.object_transform.rotate(n_local);
      state.body_params.trans += target - centroid;
    }
    FineProblem fp = FineProblem::make(body, parts, transformed(object, state.object_transform),
                                       fine_geo, state.object_transform, opt.contact, opt.weights);
    if (opt.gate_force_closure) fp.closure_possible = admits_closure(fine_geo.normals);
    for (Phase ph : {Phase::fine_body, Phase::fine_hand}) {
      state.phase = ph;
      state.iteration = 0;
      const TriMesh now = skin(body, state.body_params);
      if (opt.facing_contacts)
        fp.contacts = sample_contacts(facing_subset(now.vertices, now.vertex_normals, parts, fp.region_points),
                                      opt.contact.k_contacts, opt.contact.seed);
      if (opt.freeze_pairs) {
        fp.frozen_pairs = match_pairs(now.vertices, fp.contacts, fp.region_points, opt.contact.pair_radius);
        std::vector<Vec3> hp;
        for (int i : parts.vertices) hp.push_back(now.vertices[i]);
        fp.frozen_human_weights = nearest_weights(hp, fp.region_points, fp.region.weights);
      }
      if (!absorb(run_phase(state, fp, opt.fine_schedule))) break;
    }
  }

  // Final metrics.
  const TriMesh final_body = skin(body, state.body_params);
  const TriMesh final_obj = transformed(object, state.object_transform);
  std::vector<Vec3> hp, rp;
  for (int i : parts.vertices) hp.push_back(final_body.vertices[i]);
  for (const auto& p : global_geo.points) rp.push_back(state.object_transform.apply(p));
  out.contact_distance = min_distance(hp, rp);
  out.penetration_energy = penetration_energy(final_body.vertices, final_obj);
  out.object_min_y = bounds(final_obj.vertices).lo.y();
  for (const auto& ph : out.phases)
    if (!ph.trace.empty()) out.final_total += ph.trace.back().report.total;
  out.state = state;
  return out;
}

}  // namespace afford
