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

// Shared scenario builders for unit and acceptance tests.

#pragma once

#include "afford/affordance.hpp"
#include "afford/hoiopt.hpp"
#include "afford/relations.hpp"
#include "afford/shapes.hpp"
#include "afford/stick_body.hpp"

namespace afford::fixture {

// Chair seen by the default rig with synthetic keypoints aimed either at the
// seat (pelvis on the seat top) or at the back rest (back against its front).
struct ChairAffordance {
  shapes::ChairParts chair;
  AffordanceMap map;
  double seat_mass = 0.0;
  double back_mass = 0.0;
};

inline bool in_box(const Aabb& b, const Vec3& p, double pad = 1e-6) {
  return (p.array() >= b.lo.array() - pad).all() && (p.array() <= b.hi.array() + pad).all();
}

inline ChairAffordance chair_affordance(bool seat_directed, int points = 2048) {
  ChairAffordance out;
  out.chair = shapes::chair();
  const TriMesh& obj = out.chair.mesh;
  const BodyTemplate body = stick_body::make_template();
  const TriMesh human = skin(body, stick_body::a_pose(body));
  const RelationFeedback rel{RelativePosition::front, FacingSide::front,
                             ScaleOption::human_comparable, ObjectState::on_ground, {"pelvis", "back"}};
  const PlacementInit placement = init_placement(rel, obj, stick_body::kHeight);
  const ViewRig rig = build_rig(obj, RigSettings{});

  SyntheticTarget target;
  std::vector<std::string> parts;
  if (seat_directed) {
    target.anchor = Vec3(0.0, out.chair.seat.hi.y(), 0.0);
    target.normal = Vec3::UnitY();
    parts = {"pelvis"};
  } else {
    target.anchor = Vec3(out.chair.back.hi.x(), 0.5 * (out.chair.back.lo.y() + out.chair.back.hi.y()), 0.0);
    target.normal = Vec3::UnitX();
    parts = {"back"};
  }
  const auto obs = synthesize_keypoints(rig, placement, body, human, parts, target);
  out.map = parse_affordance(obj, rig, obs, parts, {}, points, 7);
  out.seat_mass = region_mass(out.map, [&](const Vec3& p) { return in_box(out.chair.seat, p); });
  out.back_mass = region_mass(out.map, [&](const Vec3& p) { return in_box(out.chair.back, p); });
  return out;
}

// The cube desk scenario: a 0.4 m cube placed by the mock relations for
// "a person touches the top of the box", keypoints from the reaching body
// aimed at the top face. The reaching pose is also the optimization start.
// With random_seed set, the placement comes from random relations instead.
struct CubeScenario {
  TriMesh object;
  BodyTemplate body;
  BodyParams init_pose;
  RelationFeedback relations;
  PlacementInit placement;
  AffordanceMap map;
};

inline CubeScenario cube_touch_scenario(std::optional<std::uint64_t> random_seed = std::nullopt) {
  CubeScenario s;
  s.object = shapes::cube(0.4);
  s.body = stick_body::make_template();
  s.init_pose = stick_body::reach_pose(s.body);
  MockProvider mock;
  s.relations = query_relations(PromptSpec::from_text("a person touches the top of the box"), mock);
  const PlacementInit mock_placement = init_placement(s.relations, s.object, stick_body::kHeight);
  const ViewRig rig = build_rig(s.object, RigSettings{});
  const auto obs = synthesize_keypoints(rig, mock_placement, s.body, skin(s.body, s.init_pose),
                                        s.relations.part_labels, target_from_side(s.object, "top"));
  s.map = parse_affordance(s.object, rig, obs, s.relations.part_labels, {}, 2048);
  s.placement = random_seed ? init_placement(random_relations(s.relations, *random_seed), s.object,
                                             stick_body::kHeight)
                            : mock_placement;
  return s;
}

inline PipelineResult run_cube(const CubeScenario& s, const PipelineOptions& opt = {}) {
  return run_pipeline_opt(s.object, s.placement, s.body, s.init_pose, s.relations.part_labels, s.map, opt);
}

}  // namespace afford::fixture
