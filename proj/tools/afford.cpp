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

// Command line front end. Subcommands map onto the pipeline stages; every
// configuration key can also be set with --set section.key=value.

#include <iostream>

#include <CLI11.hpp>

#include "afford/afford.hpp"

namespace {

using namespace afford;

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> prompt, object, body, relations, keypoints, init_pose, output_dir, provider;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("-c,--config", f.config_path, "Run configuration JSON");
  app->add_option("--set", f.overrides, "Override a configuration key, e.g. weights.phi_i=2");
  app->add_option("-p,--prompt", f.prompt, "Interaction prompt");
  app->add_option("--object", f.object, "Object mesh (OBJ or PLY)");
  app->add_option("--body", f.body, "Body template JSON (default: built-in stick body)");
  app->add_option("--relations", f.relations, "Use this relations JSON instead of querying a provider");
  app->add_option("--keypoints", f.keypoints, "Keypoint observations JSON");
  app->add_option("--init-pose", f.init_pose, "Initial body parameters JSON");
  app->add_option("-o,--out", f.output_dir, "Output directory");
  app->add_option("--provider", f.provider, "Relation provider: mock or http");
}

RunConfig resolve(const CommonFlags& f) {
  json doc = to_json(f.config_path.empty() ? RunConfig{} : load_config(f.config_path));
  auto set = [&](const char* section, const char* key, const std::optional<std::string>& v) {
    if (!v) return;
    if (section[0] == '\0') doc[key] = *v;
    else doc[section][key] = *v;
  };
  set("", "prompt", f.prompt);
  set("paths", "object", f.object);
  set("paths", "body", f.body);
  set("paths", "relations", f.relations);
  set("paths", "keypoints", f.keypoints);
  set("paths", "init_pose", f.init_pose);
  set("paths", "output_dir", f.output_dir);
  set("provider", "kind", f.provider);
  for (const auto& o : f.overrides) apply_override(doc, o);
  return config_from_json(doc);
}

void print_result(const PipelineResult& r) {
  std::cout << "contact_distance " << r.contact_distance << "\npenetration_energy " << r.penetration_energy
            << "\nobject_min_y " << r.object_min_y << "\nfinal_total " << r.final_total << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot 3D human-object interaction synthesis"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* relations = app.add_subcommand("relations", "Query spatial relations for the prompt");
  auto* afford_cmd = app.add_subcommand("afford", "Render masks, collect keypoints and parse the affordance map");
  auto* optimize = app.add_subcommand("optimize", "Optimize the object and body");
  auto* run = app.add_subcommand("run", "Run all stages");
  for (auto* s : {relations, afford_cmd, optimize, run}) add_common(s, flags);

  auto* config_cmd = app.add_subcommand("config", "Print the resolved configuration");
  add_common(config_cmd, flags);

  std::vector<std::string> manifests;
  auto* report = app.add_subcommand("report", "Summarize one manifest, or compare several");
  report->add_option("manifests", manifests, "manifest.json files")->required();

  std::string shape = "cube", shape_out;
  double size = 1.0;
  auto* make_shape = app.add_subcommand("make-shape", "Write a procedural object mesh");
  make_shape->add_option("kind", shape, "cube, icosphere, torus or chair")->required();
  make_shape->add_option("output", shape_out, "Output .obj or .ply")->required();
  make_shape->add_option("--size", size, "Edge length, radius or major radius");

  std::string body_out;
  auto* make_body = app.add_subcommand("make-body", "Write the built-in body template");
  make_body->add_option("output", body_out, "Output JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*report) return cmd_report({manifests.begin(), manifests.end()}, std::cout) ? kExitOk : kExitData;
    if (*make_shape) {
      TriMesh mesh;
      if (shape == "cube") mesh = shapes::cube(size);
      else if (shape == "icosphere") mesh = shapes::icosphere(size);
      else if (shape == "torus") mesh = shapes::torus(size, 0.35 * size);
      else if (shape == "chair") mesh = shapes::chair().mesh;
      else fail(ErrorKind::precondition, "unknown shape '" + shape + "'");
      if (shape_out.ends_with(".obj")) write_obj(mesh, shape_out);
      else write_ply(mesh, shape_out);
      return kExitOk;
    }
    if (*make_body) {
      save_template(stick_body::make_template(), body_out);
      return kExitOk;
    }

    const RunConfig cfg = resolve(flags);
    if (*config_cmd) {
      std::cout << to_json(cfg).dump(2) << '\n';
    } else if (*relations) {
      std::cout << to_json(cmd_relations(cfg)).dump(2) << '\n';
    } else if (*afford_cmd) {
      cmd_afford(cfg);
      std::cout << "wrote " << cfg.out("affordance.json").string() << '\n';
    } else if (*optimize) {
      print_result(cmd_optimize(cfg));
    } else if (*run) {
      print_result(cmd_run(cfg, std::cout));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}
