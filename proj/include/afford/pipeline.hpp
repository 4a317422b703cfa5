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

// End-to-end driver: run configuration, the file-checkpointed stages
// (relations, afford, optimize, report), the run manifest and trace audits.
//
// Every stage reads its inputs from the output directory (or from paths in
// the configuration) and writes its artifacts back there, so any stage can
// be rerun on its own.

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "afford/affordance.hpp"
#include "afford/bodymodel.hpp"
#include "afford/hoiopt.hpp"
#include "afford/http_provider.hpp"
#include "afford/mesh_io.hpp"
#include "afford/relations.hpp"
#include "afford/stick_body.hpp"

namespace afford {

namespace fs = std::filesystem;
using nlohmann::json;

// Exit codes of the command line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 64, kExitProvider = 2, kExitData = 3, kExitOptimization = 4 };

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::precondition: return kExitUsage;
    case ErrorKind::provider: return kExitProvider;
    case ErrorKind::data: return kExitData;
    case ErrorKind::optimization: return kExitOptimization;
  }
  return kExitData;
}

// ---------------------------------------------------------------------------
// Run configuration.

struct RunConfig {
  std::string prompt;

  // Paths; empty means "use the stage default".
  std::string object_path;
  std::string body_path;        // body template JSON; empty selects the built-in stick body
  std::string relations_path;   // skip the relations query, validate this file instead
  std::string keypoints_path;   // skip synthetic keypoints
  std::string init_pose_path;
  std::string output_dir = "afford_out";

  std::string provider = "mock";  // mock | http
  bool provider_strict = true;
  HttpProviderConfig http;

  RigSettings rig;
  MaskGenParams masks;
  AffordanceOptions affordance;
  int affordance_points = 2048;
  double mass_fraction = 0.8;

  // Synthetic keypoints, used when keypoints_path is empty.
  std::string target_side;          // empty: a side word in the prompt, else "front"
  std::string synthetic_pose = "reach";  // reach | a_pose | zero
  double standoff = 0.02;

  LossWeights weights;
  ContactSettings contacts;
  Schedule global_schedule{500, 0.01};
  Schedule fine_schedule{300, 0.02};
  std::string phases = "all";  // all | global | fine
  bool reextract_region = true;
  double reextract_radius = 0.1;
  double init_offset = 0.03;
  bool invert_ground_flag = false;
  bool freeze_pairs = true;
  bool facing_contacts = true;
  bool gate_force_closure = true;
  std::optional<std::uint64_t> random_init_seed;  // replace the relation placement by a random one

  std::uint64_t surface_seed = 0;
  std::uint64_t mask_seed = 1;

  PipelineOptions pipeline_options() const {
    require(phases == "all" || phases == "global" || phases == "fine",
            "config: optimize.phases must be all, global or fine");
    PipelineOptions o;
    o.weights = weights;
    o.contact = contacts;
    o.global_schedule = global_schedule;
    o.fine_schedule = fine_schedule;
    o.mass_fraction = mass_fraction;
    o.run_global = phases != "fine";
    o.run_fine = phases != "global";
    o.reextract_region = reextract_region;
    o.reextract_radius = reextract_radius;
    o.init_offset = init_offset;
    o.invert_ground_flag = invert_ground_flag;
    o.freeze_pairs = freeze_pairs;
    o.facing_contacts = facing_contacts;
    o.gate_force_closure = gate_force_closure;
    return o;
  }

  fs::path out(const std::string& name) const { return fs::path(output_dir) / name; }
};

namespace config_detail {

inline double deg(double r) { return r * 180.0 / kPi; }
inline double rad(double d) { return d * kPi / 180.0; }

inline json schedule_json(const Schedule& s) {
  return {{"max_iters", s.max_iters}, {"learning_rate", s.learning_rate}, {"beta1", s.beta1},
          {"beta2", s.beta2},         {"epsilon", s.epsilon},             {"window", s.window},
          {"rel_tol", s.rel_tol},     {"max_backtracks", s.max_backtracks}};
}

// Reads the keys of one section, rejecting unknown ones and wrong types.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) fail(ErrorKind::precondition, "config: '" + name_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) {
        std::string keys;
        for (const auto& s : seen_) keys += (keys.empty() ? "" : ", ") + s;
        fail(ErrorKind::precondition, "config: unknown key '" + qualified(k) + "' (valid: " + keys + ")");
      }
  }
  template <class T>
  void get(const std::string& key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::precondition, "config: '" + qualified(key) + "' has the wrong type");
    }
  }
  void get_degrees(const std::string& key, double& dst) {
    double d = deg(dst);
    get(key, d);
    dst = rad(d);
  }
  const json& child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return j_.contains(key) ? j_.at(key) : empty;
  }
  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

inline void read_schedule(Section&& s, Schedule& d) {
  s.get("max_iters", d.max_iters);
  s.get("learning_rate", d.learning_rate);
  s.get("beta1", d.beta1);
  s.get("beta2", d.beta2);
  s.get("epsilon", d.epsilon);
  s.get("window", d.window);
  s.get("rel_tol", d.rel_tol);
  s.get("max_backtracks", d.max_backtracks);
}

}  // namespace config_detail

inline json to_json(const RunConfig& c) {
  using namespace config_detail;
  std::vector<double> elev;
  for (double e : c.rig.elevations) elev.push_back(deg(e));
  const auto& w = c.weights;
  const auto mode = c.affordance.mode == AggregationMode::visible_views ? "visible_views" : "all_views";
  const auto norm = c.affordance.normalization == Normalization::sum ? "sum" : "max";
  return {
      {"prompt", c.prompt},
      {"paths",
       {{"object", c.object_path},
        {"body", c.body_path},
        {"relations", c.relations_path},
        {"keypoints", c.keypoints_path},
        {"init_pose", c.init_pose_path},
        {"output_dir", c.output_dir}}},
      {"provider",
       {{"kind", c.provider},
        {"strict", c.provider_strict},
        {"url", c.http.url},
        {"model", c.http.model},
        {"api_key_env", c.http.api_key_env},
        {"timeout_seconds", c.http.timeout_seconds}}},
      {"rig",
       {{"n_p", c.rig.n_p},
        {"elevations_deg", elev},
        {"resolution", c.rig.resolution},
        {"vertical_fov_deg", deg(c.rig.vertical_fov)},
        {"ring_factor", c.rig.ring_factor}}},
      {"masks",
       {{"full_body_size", c.masks.full_body_size},
        {"part_size", c.masks.part_size},
        {"noise_sigma_full", c.masks.noise_sigma_full},
        {"noise_sigma_part", c.masks.noise_sigma_part},
        {"dilation", c.masks.dilation}}},
      {"affordance",
       {{"lambda", c.affordance.lambda},
        {"points", c.affordance_points},
        {"mass_fraction", c.mass_fraction},
        {"relevant_parts_only", c.affordance.relevant_parts_only},
        {"aggregation", mode},
        {"normalization", norm},
        {"min_confidence", c.affordance.min_confidence}}},
      {"synthetic_keypoints", {{"side", c.target_side}, {"pose", c.synthetic_pose}, {"standoff", c.standoff}}},
      {"weights",
       {{"phi_i", w.phi_i},
        {"phi_n", w.phi_n},
        {"phi_s", w.phi_s},
        {"phi_p", w.phi_p},
        {"ground_weight", w.ground_weight},
        {"delta_fc", w.delta_fc},
        {"delta_fc_body", w.delta_fc_body},
        {"joint_limit_weight", w.joint_limit_weight},
        {"hinge_weight", w.hinge_weight}}},
      {"contacts",
       {{"k_contacts", c.contacts.k_contacts},
        {"pair_radius", c.contacts.pair_radius},
        {"sigma_c", c.contacts.sigma_c}}},
      {"global_schedule", schedule_json(c.global_schedule)},
      {"fine_schedule", schedule_json(c.fine_schedule)},
      {"optimize",
       {{"phases", c.phases},
        {"reextract_region", c.reextract_region},
        {"reextract_radius", c.reextract_radius},
        {"init_offset", c.init_offset},
        {"invert_ground_flag", c.invert_ground_flag},
        {"freeze_pairs", c.freeze_pairs},
        {"facing_contacts", c.facing_contacts},
        {"gate_force_closure", c.gate_force_closure},
        {"random_init_seed", c.random_init_seed ? json(*c.random_init_seed) : json(nullptr)}}},
      {"seeds", {{"surface_sampling", c.surface_seed}, {"masks", c.mask_seed}, {"contacts", c.contacts.seed}}},
  };
}

inline RunConfig config_from_json(const json& j) {
  using namespace config_detail;
  RunConfig c;
  Section root(j, "");
  root.get("prompt", c.prompt);
  {
    Section s(root.child("paths"), "paths");
    s.get("object", c.object_path);
    s.get("body", c.body_path);
    s.get("relations", c.relations_path);
    s.get("keypoints", c.keypoints_path);
    s.get("init_pose", c.init_pose_path);
    s.get("output_dir", c.output_dir);
  }
  {
    Section s(root.child("provider"), "provider");
    s.get("kind", c.provider);
    s.get("strict", c.provider_strict);
    s.get("url", c.http.url);
    s.get("model", c.http.model);
    s.get("api_key_env", c.http.api_key_env);
    s.get("timeout_seconds", c.http.timeout_seconds);
  }
  {
    Section s(root.child("rig"), "rig");
    s.get("n_p", c.rig.n_p);
    std::vector<double> elev;
    for (double e : c.rig.elevations) elev.push_back(deg(e));
    s.get("elevations_deg", elev);
    c.rig.elevations.clear();
    for (double e : elev) c.rig.elevations.push_back(rad(e));
    s.get("resolution", c.rig.resolution);
    s.get_degrees("vertical_fov_deg", c.rig.vertical_fov);
    s.get("ring_factor", c.rig.ring_factor);
  }
  {
    Section s(root.child("masks"), "masks");
    s.get("full_body_size", c.masks.full_body_size);
    s.get("part_size", c.masks.part_size);
    s.get("noise_sigma_full", c.masks.noise_sigma_full);
    s.get("noise_sigma_part", c.masks.noise_sigma_part);
    s.get("dilation", c.masks.dilation);
  }
  {
    Section s(root.child("affordance"), "affordance");
    s.get("lambda", c.affordance.lambda);
    s.get("points", c.affordance_points);
    s.get("mass_fraction", c.mass_fraction);
    s.get("relevant_parts_only", c.affordance.relevant_parts_only);
    std::string mode = "visible_views", norm = "sum";
    s.get("aggregation", mode);
    s.get("normalization", norm);
    require(mode == "visible_views" || mode == "all_views",
            "config: affordance.aggregation must be visible_views or all_views");
    require(norm == "sum" || norm == "max", "config: affordance.normalization must be sum or max");
    c.affordance.mode = mode == "visible_views" ? AggregationMode::visible_views : AggregationMode::all_views;
    c.affordance.normalization = norm == "sum" ? Normalization::sum : Normalization::max;
    s.get("min_confidence", c.affordance.min_confidence);
  }
  {
    Section s(root.child("synthetic_keypoints"), "synthetic_keypoints");
    s.get("side", c.target_side);
    s.get("pose", c.synthetic_pose);
    s.get("standoff", c.standoff);
  }
  {
    Section s(root.child("weights"), "weights");
    auto& w = c.weights;
    s.get("phi_i", w.phi_i);
    s.get("phi_n", w.phi_n);
    s.get("phi_s", w.phi_s);
    s.get("phi_p", w.phi_p);
    s.get("ground_weight", w.ground_weight);
    s.get("delta_fc", w.delta_fc);
    s.get("delta_fc_body", w.delta_fc_body);
    s.get("joint_limit_weight", w.joint_limit_weight);
    s.get("hinge_weight", w.hinge_weight);
  }
  {
    Section s(root.child("contacts"), "contacts");
    s.get("k_contacts", c.contacts.k_contacts);
    s.get("pair_radius", c.contacts.pair_radius);
    s.get("sigma_c", c.contacts.sigma_c);
  }
  read_schedule(Section(root.child("global_schedule"), "global_schedule"), c.global_schedule);
  read_schedule(Section(root.child("fine_schedule"), "fine_schedule"), c.fine_schedule);
  {
    Section s(root.child("optimize"), "optimize");
    s.get("phases", c.phases);
    s.get("reextract_region", c.reextract_region);
    s.get("reextract_radius", c.reextract_radius);
    s.get("init_offset", c.init_offset);
    s.get("invert_ground_flag", c.invert_ground_flag);
    s.get("freeze_pairs", c.freeze_pairs);
    s.get("facing_contacts", c.facing_contacts);
    s.get("gate_force_closure", c.gate_force_closure);
    json seed = nullptr;
    s.get("random_init_seed", seed);
    if (!seed.is_null()) {
      require(seed.is_number_unsigned(), "config: optimize.random_init_seed must be a non-negative integer or null");
      c.random_init_seed = seed.get<std::uint64_t>();
    }
  }
  {
    Section s(root.child("seeds"), "seeds");
    s.get("surface_sampling", c.surface_seed);
    s.get("masks", c.mask_seed);
    s.get("contacts", c.contacts.seed);
  }
  c.weights.validate();
  c.masks.validate();
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::precondition, "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::precondition, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// "weights.phi_i=2" style override applied to the JSON form. The value is
// parsed as JSON when possible, else taken as a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &doc;
  std::stringstream ks(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ks, part, '.')) parts.push_back(part);
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    require(node->contains(parts[k]) && node->at(parts[k]).is_object(),
            "override: unknown section '" + parts[k] + "' in '" + key + "'");
    node = &node->at(parts[k]);
  }
  require(node->contains(parts.back()), "override: unknown key '" + key + "'");
  (*node)[parts.back()] = value;
}

inline std::string config_hash(const RunConfig& c) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << fnv1a(to_json(c).dump());
  return s.str();
}

// ---------------------------------------------------------------------------
// Manifest.

struct RunManifest {
  std::string config_hash;
  json config;
  std::map<std::string, double> timings;  // seconds per stage
  std::vector<std::string> artifacts;     // relative to the output directory
  std::map<std::string, double> metrics;
  bool aborted = false;
  std::string message;

  void add_artifact(const std::string& name) {
    if (std::find(artifacts.begin(), artifacts.end(), name) == artifacts.end()) artifacts.push_back(name);
  }
};

inline json to_json(const RunManifest& m) {
  return {{"config_hash", m.config_hash}, {"config", m.config}, {"timings", m.timings},
          {"artifacts", m.artifacts},     {"metrics", m.metrics}, {"aborted", m.aborted},
          {"message", m.message}};
}

inline RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  try {
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config = j.value("config", json::object());
    m.timings = j.value("timings", std::map<std::string, double>{});
    m.artifacts = j.value("artifacts", std::vector<std::string>{});
    const json metrics = j.value("metrics", json::object());
    for (const auto& [k, v] : metrics.items())
      m.metrics[k] = v.is_number() ? v.get<double>() : kInf;
    m.aborted = j.value("aborted", false);
    m.message = j.value("message", std::string());
  } catch (const json::exception& e) {
    fail(ErrorKind::data, std::string("manifest: ") + e.what());
  }
  return m;
}

inline RunManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::data, path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

// Writes the manifest after checking every listed artifact exists.
inline void save_manifest(const RunManifest& m, const fs::path& dir) {
  for (const auto& a : m.artifacts)
    if (!fs::exists(dir / a)) fail(ErrorKind::data, "manifest: listed artifact " + a + " is missing");
  std::ofstream out(dir / "manifest.json");
  if (!out) fail(ErrorKind::data, "cannot write " + (dir / "manifest.json").string());
  out << to_json(m).dump(2) << '\n';
}

// The manifest of the output directory, started afresh when the config
// changed.
inline RunManifest open_manifest(const RunConfig& c) {
  const fs::path p = c.out("manifest.json");
  RunManifest m;
  if (fs::exists(p)) {
    m = load_manifest(p);
    if (m.config_hash != config_hash(c)) m = RunManifest{};
  }
  m.config_hash = config_hash(c);
  m.config = to_json(c);
  return m;
}

// ---------------------------------------------------------------------------
// Trace files.

inline TraceEntry trace_entry_from_json(const json& j) {
  TraceEntry e;
  try {
    const auto ph = j.at("phase").get<std::string>();
    if (ph == "global") e.phase = Phase::global;
    else if (ph == "fine_body") e.phase = Phase::fine_body;
    else if (ph == "fine_hand") e.phase = Phase::fine_hand;
    else fail(ErrorKind::data, "trace: unknown phase '" + ph + "'");
    e.iteration = j.at("iteration").get<int>();
    e.report = report_from_json(j.at("report"));
    e.object_transform = RigidScaledTransform::unpacked(j.at("object_transform").get<std::vector<double>>());
    e.body_digest = std::stoull(j.at("body_digest").get<std::string>(), nullptr, 16);
  } catch (const json::exception& ex) {
    fail(ErrorKind::data, std::string("trace: ") + ex.what());
  }
  return e;
}

inline void write_trace(const std::vector<TraceEntry>& trace, const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  for (const auto& e : trace) out << to_json(e).dump() << '\n';
}

inline std::vector<TraceEntry> load_trace(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot open trace " + path.string());
  std::vector<TraceEntry> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(trace_entry_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorKind::data, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// Post-hoc checks of a trace: the sum invariant on every entry, the body
// fixed throughout the global phase and the object fixed throughout the fine
// phases.
struct TraceAudit {
  std::size_t entries = 0;
  std::size_t sum_violations = 0;
  std::size_t freeze_violations = 0;
  bool ok() const { return entries > 0 && sum_violations == 0 && freeze_violations == 0; }
};

inline TraceAudit audit_trace(const std::vector<TraceEntry>& trace) {
  TraceAudit a;
  std::optional<std::uint64_t> body;
  std::optional<RigidScaledTransform> object;
  for (const auto& e : trace) {
    ++a.entries;
    if (!e.report.sum_invariant()) ++a.sum_violations;
    if (e.phase == Phase::global) {
      if (!body) body = e.body_digest;
      if (e.body_digest != *body) ++a.freeze_violations;
    } else {
      if (!object) object = e.object_transform;
      if (!(e.object_transform == *object)) ++a.freeze_violations;
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Stage helpers.

namespace stage_detail {

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    fail(ErrorKind::data, path.string() + ": " + e.what());
  }
}

inline void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline BodyTemplate load_body(const RunConfig& c) {
  return c.body_path.empty() ? stick_body::make_template() : load_template(c.body_path);
}

inline double body_height(const BodyTemplate& t) {
  const Aabb b = bounds(t.template_vertices);
  return b.hi.y() - b.lo.y();
}

inline BodyParams named_pose(const RunConfig& c, const BodyTemplate& t, const std::string& name) {
  if (name == "zero") return BodyParams::zeros(t);
  require(c.body_path.empty(), "pose '" + name + "' is defined for the built-in body only; use 'zero' or a pose file");
  if (name == "reach") return stick_body::reach_pose(t);
  if (name == "a_pose") return stick_body::a_pose(t);
  fail(ErrorKind::precondition, "unknown pose '" + name + "' (reach, a_pose, zero)");
}

inline TriMesh load_object(const RunConfig& c) {
  require(!c.object_path.empty(), "no object mesh given (paths.object / --object)");
  return load_mesh(c.object_path);
}

// A side word in the prompt, else the front.
inline std::string target_side(const RunConfig& c) {
  if (!c.target_side.empty()) return c.target_side;
  std::string word;
  std::stringstream ss(c.prompt);
  while (ss >> word) {
    std::string w;
    for (char ch : word)
      if (std::isalpha(static_cast<unsigned char>(ch))) w += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    for (const char* side : {"top", "bottom", "front", "back", "left", "right"})
      if (w == side) return side;
  }
  return "front";
}

inline RelationFeedback stage_relations(const RunConfig& c) {
  const fs::path p = c.out("relations.json");
  if (!fs::exists(p)) fail(ErrorKind::data, "relations.json missing in " + c.output_dir + "; run the relations stage first");
  return load_relations(p);
}

}  // namespace stage_detail

// ---------------------------------------------------------------------------
// Stages.

inline RelationFeedback cmd_relations(const RunConfig& c) {
  using namespace stage_detail;
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(c.output_dir);
  RunManifest m = open_manifest(c);
  RelationFeedback rel;
  if (!c.relations_path.empty()) {
    rel = load_relations(c.relations_path);
  } else {
    require(!c.prompt.empty(), "no prompt given (prompt / --prompt)");
    const PromptSpec prompt = PromptSpec::from_text(c.prompt);
    if (c.provider == "mock") {
      MockProvider mock(c.provider_strict);
      rel = query_relations(prompt, mock);
    } else if (c.provider == "http") {
      HttpChatProvider http(c.http);
      rel = query_relations(prompt, http);
    } else {
      fail(ErrorKind::precondition, "unknown provider '" + c.provider + "' (mock, http)");
    }
  }
  save_relations(rel, c.out("relations.json"));
  m.add_artifact("relations.json");
  m.timings["relations"] = seconds_since(t0);
  save_manifest(m, c.output_dir);
  return rel;
}

inline AffordanceMap cmd_afford(const RunConfig& c) {
  using namespace stage_detail;
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(c.out("masks"));
  RunManifest m = open_manifest(c);
  const RelationFeedback rel = stage_relations(c);
  const TriMesh obj = load_object(c);
  const BodyTemplate body = load_body(c);
  const PlacementInit placement = init_placement(rel, obj, body_height(body));
  write_json(to_json(placement), c.out("placement.json"));
  m.add_artifact("placement.json");

  const ViewRig rig = build_rig(obj, c.rig);
  const BodyParams pose = named_pose(c, body, c.synthetic_pose);
  const TriMesh proxy = skin(body, pose);
  const PartSelection parts = resolve_parts(body, rel.part_labels);
  for (std::size_t v = 0; v < rig.size(); ++v) {
    std::ostringstream name;
    name << "masks/view_" << std::setw(2) << std::setfill('0') << v;
    const std::uint64_t seed = c.mask_seed + 2 * v;
    write_mask_pgm(gen_full_mask(rig.cameras[v], placement, proxy, c.masks, seed), c.out(name.str() + "_full.pgm"));
    write_mask_pgm(gen_part_mask(rig.cameras[v], placement, parts, proxy, c.masks, seed + 1),
                   c.out(name.str() + "_part.pgm"));
    m.add_artifact(name.str() + "_full.pgm");
    m.add_artifact(name.str() + "_part.pgm");
  }

  std::vector<KeypointObservation> obs;
  if (!c.keypoints_path.empty()) {
    obs = load_keypoints(c.keypoints_path);
  } else {
    SyntheticTarget target = target_from_side(obj, target_side(c));
    target.standoff = c.standoff;
    obs = synthesize_keypoints(rig, placement, body, proxy, rel.part_labels, target);
  }
  save_keypoints(obs, c.out("keypoints.json"));
  m.add_artifact("keypoints.json");

  const AffordanceMap map =
      parse_affordance(obj, rig, obs, rel.part_labels, c.affordance, c.affordance_points, c.surface_seed);
  const ContactRegion region = extract_region(map, c.mass_fraction);
  write_json(to_json(map), c.out("affordance.json"));
  write_affordance_ply(map, c.out("affordance.ply"));
  write_json(to_json(region), c.out("region.json"));
  for (const char* a : {"affordance.json", "affordance.ply", "region.json"}) m.add_artifact(a);
  double sum = 0.0;
  for (double p : map.probability) sum += p;
  m.metrics["affordance_sum"] = sum;
  m.metrics["region_size"] = static_cast<double>(region.size());
  m.timings["afford"] = seconds_since(t0);
  save_manifest(m, c.output_dir);
  return map;
}

inline PipelineResult cmd_optimize(const RunConfig& c) {
  using namespace stage_detail;
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest m = open_manifest(c);
  const RelationFeedback rel = stage_relations(c);
  const TriMesh obj = load_object(c);
  const BodyTemplate body = load_body(c);
  for (const char* f : {"placement.json", "affordance.json"})
    if (!fs::exists(c.out(f))) fail(ErrorKind::data, std::string(f) + " missing; run the afford stage first");
  PlacementInit placement = placement_from_json(read_json(c.out("placement.json")));
  if (c.random_init_seed)
    placement = init_placement(random_relations(rel, *c.random_init_seed), obj, body_height(body));
  const AffordanceMap map = affordance_from_json(read_json(c.out("affordance.json")));

  // Without a pose file the fine phases start from the pose that produced
  // synthetic keypoints, or from the A-pose when keypoints were supplied.
  BodyParams init;
  if (!c.init_pose_path.empty())
    init = params_from_json(read_json(c.init_pose_path), body);
  else
    init = named_pose(c, body, c.keypoints_path.empty() ? c.synthetic_pose
                                                        : (c.body_path.empty() ? "a_pose" : "zero"));

  const PipelineResult r = run_pipeline_opt(obj, placement, body, init, rel.part_labels, map, c.pipeline_options());

  write_trace(r.trace, c.out("trace.jsonl"));
  const TriMesh human = skin(body, r.state.body_params);
  const TriMesh object = transformed(obj, r.state.object_transform);
  write_ply(human, c.out("human.ply"));
  write_ply(object, c.out("object.ply"));
  std::vector<Rgb> colors(human.vertices.size(), Rgb{200, 200, 200});
  colors.resize(human.vertices.size() + object.vertices.size(), Rgb{230, 120, 40});
  write_ply(merge({human, object}), c.out("scene.ply"), colors);
  const auto tf = r.state.object_transform.packed();
  write_json({{"object_transform", std::vector<double>(tf.begin(), tf.end())},
              {"body_params", params_to_json(r.state.body_params)}},
             c.out("final_state.json"));
  for (const char* a : {"trace.jsonl", "human.ply", "object.ply", "scene.ply", "final_state.json"})
    m.add_artifact(a);
  m.metrics["contact_distance"] = r.contact_distance;
  m.metrics["penetration_energy"] = r.penetration_energy;
  m.metrics["object_min_y"] = r.object_min_y;
  m.metrics["final_total"] = r.final_total;
  m.metrics["iterations"] = static_cast<double>(r.trace.size());
  m.aborted = r.aborted;
  m.message = r.message;
  m.timings["optimize"] = seconds_since(t0);
  save_manifest(m, c.output_dir);
  if (r.aborted) fail(ErrorKind::optimization, "optimization aborted: " + r.message);
  return r;
}

// ---------------------------------------------------------------------------
// Reports.

// Per-iteration, per-term CSV of a trace.
inline void write_loss_csv(const std::vector<TraceEntry>& trace, std::ostream& out) {
  std::set<std::string> terms;
  for (const auto& e : trace)
    for (const auto& [k, v] : e.report.per_term) terms.insert(k);
  out << "phase,iteration,total";
  for (const auto& t : terms) out << ',' << t;
  out << ",contact_distance,penetration,grad_norm\n";
  out << std::setprecision(12);
  for (const auto& e : trace) {
    out << to_string(e.phase) << ',' << e.iteration << ',' << e.report.total;
    for (const auto& t : terms) {
      out << ',';
      if (auto it = e.report.per_term.find(t); it != e.report.per_term.end()) out << it->second;
    }
    out << ',' << e.report.contact_distance << ',' << e.report.penetration_volume_proxy << ','
        << e.report.grad_norm << '\n';
  }
}

inline std::string format_metric(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

// Summary of one or more manifests. With one, the loss curve CSV is written
// next to the trace; with two or more the metrics are shown side by side.
// Returns false when artifacts listed by a manifest are missing.
inline bool cmd_report(const std::vector<fs::path>& manifests, std::ostream& out) {
  require(!manifests.empty(), "report: no manifest given");
  bool complete = true;
  std::vector<RunManifest> ms;
  for (const auto& p : manifests) {
    ms.push_back(load_manifest(p));
    const fs::path dir = p.parent_path();
    for (const auto& a : ms.back().artifacts)
      if (!fs::exists(dir / a)) {
        diag::warn("report: " + (dir / a).string() + " is missing");
        complete = false;
      }
  }
  std::set<std::string> keys;
  for (const auto& m : ms) {
    for (const auto& [k, v] : m.metrics) keys.insert(k);
  }
  std::set<std::string> stages;
  for (const auto& m : ms)
    for (const auto& [k, v] : m.timings) stages.insert(k);

  const int w0 = 22, w = 16;
  out << std::left << std::setw(w0) << "metric";
  for (std::size_t i = 0; i < ms.size(); ++i) out << std::setw(w) << ("run " + std::to_string(i + 1));
  if (ms.size() == 2) out << std::setw(w) << "ratio 2/1";
  out << '\n';
  auto row = [&](const std::string& name, auto get) {
    out << std::setw(w0) << name;
    std::vector<std::optional<double>> vals;
    for (const auto& m : ms) {
      vals.push_back(get(m));
      out << std::setw(w) << (vals.back() ? format_metric(*vals.back()) : "-");
    }
    if (ms.size() == 2 && vals[0] && vals[1] && *vals[0] != 0.0) out << std::setw(w) << format_metric(*vals[1] / *vals[0]);
    out << '\n';
  };
  for (const auto& k : keys)
    row(k, [&](const RunManifest& m) -> std::optional<double> {
      auto it = m.metrics.find(k);
      return it == m.metrics.end() ? std::nullopt : std::optional<double>(it->second);
    });
  for (const auto& s : stages)
    row("time_" + s + "_s", [&](const RunManifest& m) -> std::optional<double> {
      auto it = m.timings.find(s);
      return it == m.timings.end() ? std::nullopt : std::optional<double>(it->second);
    });
  for (std::size_t i = 0; i < ms.size(); ++i)
    if (ms[i].aborted) out << "run " << i + 1 << " aborted: " << ms[i].message << '\n';

  if (ms.size() == 1) {
    const fs::path dir = manifests[0].parent_path();
    const fs::path trace = dir / "trace.jsonl";
    if (!fs::exists(trace)) {
      diag::warn("report: no trace.jsonl in " + dir.string() + "; loss curve skipped");
      return false;
    }
    const auto entries = load_trace(trace);
    std::ofstream csv(dir / "loss_curve.csv");
    if (!csv) fail(ErrorKind::data, "cannot write " + (dir / "loss_curve.csv").string());
    write_loss_csv(entries, csv);
    const TraceAudit a = audit_trace(entries);
    out << "trace: " << a.entries << " entries, " << a.sum_violations << " sum violations, "
        << a.freeze_violations << " freeze violations\n";
    out << "loss curve: " << (dir / "loss_curve.csv").string() << '\n';
  }
  return complete;
}

inline PipelineResult cmd_run(const RunConfig& c, std::ostream& out) {
  cmd_relations(c);
  cmd_afford(c);
  PipelineResult r = cmd_optimize(c);
  cmd_report({c.out("manifest.json")}, out);
  return r;
}

}  // namespace afford
