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

// Human-object relation feedback: a constrained-choice question protocol,
// a deterministic table-driven provider, an HTTP chat-completion client,
// and the mapping from feedback to the initial object placement.

#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>

#include <json.hpp>

#include "afford/bodymodel.hpp"
#include "afford/geometry.hpp"

namespace afford {

enum class RelativePosition { front, behind, left, right, above, below, astride };
enum class FacingSide { front, back, left, right, top };
enum class ScaleOption { tiny, small, human_comparable, large };
enum class ObjectState { on_ground, held };

namespace detail {

template <class E>
struct EnumNames;
template <>
struct EnumNames<RelativePosition> {
  static constexpr std::array<const char*, 7> names{"front", "behind", "left", "right",
                                                     "above", "below", "astride"};
  static constexpr const char* field = "relative_position";
};
template <>
struct EnumNames<FacingSide> {
  static constexpr std::array<const char*, 5> names{"front", "back", "left", "right", "top"};
  static constexpr const char* field = "facing_side";
};
template <>
struct EnumNames<ScaleOption> {
  static constexpr std::array<const char*, 4> names{"tiny", "small", "human_comparable", "large"};
  static constexpr const char* field = "scale_option";
};
template <>
struct EnumNames<ObjectState> {
  static constexpr std::array<const char*, 2> names{"on_ground", "held"};
  static constexpr const char* field = "state";
};

}  // namespace detail

template <class E>
std::string to_string(E e) {
  return detail::EnumNames<E>::names[static_cast<std::size_t>(e)];
}

template <class E>
std::vector<std::string> option_names() {
  const auto& n = detail::EnumNames<E>::names;
  return {n.begin(), n.end()};
}

template <class E>
std::optional<E> parse_option(std::string_view s) {
  const auto& n = detail::EnumNames<E>::names;
  for (std::size_t i = 0; i < n.size(); ++i)
    if (s == n[i]) return static_cast<E>(i);
  return std::nullopt;
}

inline double scale_multiplier(ScaleOption s) {
  switch (s) {
    case ScaleOption::tiny: return 0.15;
    case ScaleOption::small: return 0.5;
    case ScaleOption::human_comparable: return 1.0;
    case ScaleOption::large: return 2.0;
  }
  return 1.0;
}

// ---------------------------------------------------------------------------

struct PromptSpec {
  std::string text;
  std::string action;
  std::string object_name;

  void validate() const {
    if (text.empty()) fail(ErrorKind::precondition, "prompt: text is empty");
    if (action.empty()) fail(ErrorKind::precondition, "prompt: action is empty");
  }

  // "a person grasps the chair" -> action "grasps", object "chair". The
  // action is the first word after the subject; the object is the last noun.
  static PromptSpec from_text(const std::string& text) {
    static const std::set<std::string> subject{"a", "an", "the", "person", "human", "man",
                                               "woman", "someone", "somebody", "people", "child"};
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
        cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      } else if (!cur.empty()) {
        words.push_back(cur);
        cur.clear();
      }
    }
    if (!cur.empty()) words.push_back(cur);
    PromptSpec p;
    p.text = text;
    std::size_t i = 0;
    while (i < words.size() && subject.count(words[i])) ++i;
    if (i < words.size()) p.action = words[i];
    if (i + 1 < words.size()) p.object_name = words.back();
    return p;
  }
};

struct RelationFeedback {
  RelativePosition relative_position = RelativePosition::front;
  FacingSide facing_side = FacingSide::front;
  ScaleOption scale_option = ScaleOption::human_comparable;
  ObjectState state = ObjectState::on_ground;
  std::vector<std::string> part_labels;

  void validate() const {
    if (part_labels.empty()) fail(ErrorKind::data, "relations: part_labels is empty");
  }
  bool operator==(const RelationFeedback&) const = default;
};

inline nlohmann::json to_json(const RelationFeedback& f) {
  return {{"relative_position", to_string(f.relative_position)},
          {"facing_side", to_string(f.facing_side)},
          {"scale_option", to_string(f.scale_option)},
          {"state", to_string(f.state)},
          {"part_labels", f.part_labels}};
}

namespace detail {

template <class E>
E enum_field(const nlohmann::json& j) {
  const char* field = EnumNames<E>::field;
  if (!j.contains(field)) fail(ErrorKind::data, std::string("relations: missing field '") + field + "'");
  if (!j.at(field).is_string()) fail(ErrorKind::data, std::string("relations: '") + field + "' must be a string");
  const auto s = j.at(field).get<std::string>();
  const auto v = parse_option<E>(s);
  if (!v) {
    std::string opts;
    for (const auto& o : option_names<E>()) opts += (opts.empty() ? "" : ", ") + o;
    fail(ErrorKind::data, std::string("relations: '") + field + "' has invalid value '" + s +
                              "' (options: " + opts + ")");
  }
  return *v;
}

}  // namespace detail

inline RelationFeedback relations_from_json(const nlohmann::json& j,
                                            const std::vector<std::string>& vocabulary = part_vocabulary()) {
  if (!j.is_object()) fail(ErrorKind::data, "relations: document must be an object");
  RelationFeedback f;
  f.relative_position = detail::enum_field<RelativePosition>(j);
  f.facing_side = detail::enum_field<FacingSide>(j);
  f.scale_option = detail::enum_field<ScaleOption>(j);
  f.state = detail::enum_field<ObjectState>(j);
  if (!j.contains("part_labels") || !j.at("part_labels").is_array())
    fail(ErrorKind::data, "relations: 'part_labels' must be an array of part names");
  for (const auto& l : j.at("part_labels")) {
    if (!l.is_string()) fail(ErrorKind::data, "relations: 'part_labels' entries must be strings");
    const auto s = l.get<std::string>();
    if (std::find(vocabulary.begin(), vocabulary.end(), s) == vocabulary.end())
      fail(ErrorKind::data, "relations: 'part_labels' has unknown part '" + s + "'");
    f.part_labels.push_back(s);
  }
  f.validate();
  return f;
}

inline RelationFeedback load_relations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot open relations file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, path.string() + ": " + e.what());
  }
  return relations_from_json(j);
}

inline void save_relations(const RelationFeedback& f, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << to_json(f).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Question protocol. Each question carries its option list; the provider
// returns free text which must normalise to one option (or, for multi-select
// questions, a comma-separated list of options).

struct Question {
  std::string id;  // relative_position, facing_side, scale_option, state, part_labels
  std::string text;
  std::vector<std::string> options;
  bool multi_select = false;
  PromptSpec prompt;
  int attempt = 0;  // 0 on first ask, incremented on each re-ask
};

class RelationProvider {
 public:
  virtual ~RelationProvider() = default;
  virtual std::string ask(const Question& q) = 0;
};

inline std::string normalize_answer(std::string_view raw) {
  std::string s;
  for (char c : raw) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) s += static_cast<char>(std::tolower(u));
    else if (c == ' ' || c == '-' || c == '_') s += '_';
  }
  while (!s.empty() && s.front() == '_') s.erase(s.begin());
  while (!s.empty() && s.back() == '_') s.pop_back();
  std::string collapsed;
  for (char c : s)
    if (!(c == '_' && !collapsed.empty() && collapsed.back() == '_')) collapsed += c;
  return collapsed;
}

// Options chosen by an answer, or nullopt if any part is not an option.
inline std::optional<std::vector<std::string>> match_options(const Question& q,
                                                             std::string_view answer) {
  std::vector<std::string> pieces;
  if (q.multi_select) {
    std::string cur;
    for (char c : answer) {
      if (c == ',' || c == ';' || c == '\n') {
        pieces.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    pieces.push_back(cur);
  } else {
    pieces.emplace_back(answer);
  }
  std::vector<std::string> chosen;
  for (const auto& p : pieces) {
    const std::string n = normalize_answer(p);
    if (n.empty()) continue;
    if (std::find(q.options.begin(), q.options.end(), n) == q.options.end()) return std::nullopt;
    if (std::find(chosen.begin(), chosen.end(), n) == chosen.end()) chosen.push_back(n);
  }
  if (chosen.empty()) return std::nullopt;
  return chosen;
}

inline constexpr int kMaxReasks = 3;

inline std::vector<std::string> ask_until_valid(RelationProvider& provider, Question q) {
  std::string last;
  for (q.attempt = 0; q.attempt <= kMaxReasks; ++q.attempt) {
    last = provider.ask(q);
    if (auto m = match_options(q, last)) return *m;
  }
  fail(ErrorKind::provider, "relations: question '" + q.id + "' got no valid option after " +
                                std::to_string(kMaxReasks) + " re-asks (last answer: '" + last + "')");
}

inline std::vector<Question> relation_questions(const PromptSpec& p,
                                                const std::vector<std::string>& vocabulary) {
  const std::string obj = p.object_name.empty() ? "object" : p.object_name;
  const std::string ctx = "Interaction: \"" + p.text + "\". ";
  return {
      {"relative_position", ctx + "Where is the person relative to the " + obj + "?",
       option_names<RelativePosition>(), false, p},
      {"facing_side", ctx + "Which side of the " + obj + " faces the person?",
       option_names<FacingSide>(), false, p},
      {"scale_option", ctx + "How large is the " + obj + " compared with a person?",
       option_names<ScaleOption>(), false, p},
      {"state", ctx + "Does the " + obj + " stay on the ground or is it held?",
       option_names<ObjectState>(), false, p},
      {"part_labels", ctx + "Which body parts touch the " + obj + "? List one or more, comma separated.",
       vocabulary, true, p},
  };
}

inline RelationFeedback query_relations(const PromptSpec& prompt, RelationProvider& provider,
                                        const std::vector<std::string>& vocabulary = part_vocabulary()) {
  prompt.validate();
  RelationFeedback f;
  for (const auto& q : relation_questions(prompt, vocabulary)) {
    const auto a = ask_until_valid(provider, q);
    if (q.id == "relative_position") f.relative_position = *parse_option<RelativePosition>(a[0]);
    if (q.id == "facing_side") f.facing_side = *parse_option<FacingSide>(a[0]);
    if (q.id == "scale_option") f.scale_option = *parse_option<ScaleOption>(a[0]);
    if (q.id == "state") f.state = *parse_option<ObjectState>(a[0]);
    if (q.id == "part_labels") f.part_labels = a;
  }
  f.validate();
  return f;
}

// Uninformed placement: every constrained choice drawn uniformly, the
// interacted parts kept from `base`.
inline RelationFeedback random_relations(const RelationFeedback& base, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) {
    return static_cast<int>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  };
  RelationFeedback f = base;
  f.relative_position = static_cast<RelativePosition>(pick(option_names<RelativePosition>().size()));
  f.facing_side = static_cast<FacingSide>(pick(option_names<FacingSide>().size()));
  f.scale_option = static_cast<ScaleOption>(pick(option_names<ScaleOption>().size()));
  f.state = static_cast<ObjectState>(pick(option_names<ObjectState>().size()));
  return f;
}

// ---------------------------------------------------------------------------
// Table-driven provider keyed by (action, object name).

class MockProvider : public RelationProvider {
 public:
  explicit MockProvider(bool strict = true) : strict_(strict), table_(default_table()) {}

  static std::map<std::pair<std::string, std::string>, RelationFeedback> default_table() {
    using RP = RelativePosition;
    using FS = FacingSide;
    using SO = ScaleOption;
    using ST = ObjectState;
    return {
        {{"grasps", "chair"}, {RP::front, FS::front, SO::human_comparable, ST::on_ground, {"left_hand", "right_hand"}}},
        {{"sits", "chair"}, {RP::front, FS::front, SO::human_comparable, ST::on_ground, {"pelvis", "back"}}},
        {{"touches", "box"}, {RP::front, FS::front, SO::small, ST::on_ground, {"right_hand"}}},
        {{"holds", "box"}, {RP::front, FS::front, SO::small, ST::held, {"left_hand", "right_hand"}}},
        {{"holds", "cup"}, {RP::front, FS::front, SO::tiny, ST::held, {"right_hand"}}},
        {{"kicks", "ball"}, {RP::front, FS::front, SO::tiny, ST::on_ground, {"right_foot"}}},
        {{"rides", "motorcycle"}, {RP::astride, FS::left, SO::human_comparable, ST::on_ground, {"pelvis", "left_hand", "right_hand"}}},
    };
  }

  void add(const std::string& action, const std::string& object, RelationFeedback f) {
    table_[{action, object}] = std::move(f);
  }

  std::string ask(const Question& q) override {
    const auto it = table_.find({q.prompt.action, q.prompt.object_name});
    RelationFeedback f;
    if (it != table_.end()) {
      f = it->second;
    } else if (strict_) {
      fail(ErrorKind::provider, "mock relations: no entry for action '" + q.prompt.action +
                                    "' and object '" + q.prompt.object_name + "'");
    } else {
      f = {RelativePosition::front, FacingSide::front, ScaleOption::human_comparable,
           ObjectState::on_ground, {"right_hand"}};
    }
    if (q.id == "relative_position") return to_string(f.relative_position);
    if (q.id == "facing_side") return to_string(f.facing_side);
    if (q.id == "scale_option") return to_string(f.scale_option);
    if (q.id == "state") return to_string(f.state);
    if (q.id == "part_labels") {
      std::string s;
      for (const auto& l : f.part_labels) s += (s.empty() ? "" : ", ") + l;
      return s;
    }
    fail(ErrorKind::provider, "mock relations: unknown question '" + q.id + "'");
  }

 private:
  bool strict_;
  std::map<std::pair<std::string, std::string>, RelationFeedback> table_;
};

// ---------------------------------------------------------------------------
// Placement.

struct PlacementInit {
  RigidScaledTransform object_transform;
  bool ground_flag = true;
  Vec3 human_anchor = Vec3::Zero();
};

inline nlohmann::json to_json(const PlacementInit& p) {
  const auto& t = p.object_transform;
  return {{"rotation", {t.rotation.x(), t.rotation.y(), t.rotation.z()}},
          {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}},
          {"log_scale", t.log_scale},
          {"ground_flag", p.ground_flag},
          {"human_anchor", {p.human_anchor.x(), p.human_anchor.y(), p.human_anchor.z()}}};
}

inline PlacementInit placement_from_json(const nlohmann::json& j) {
  auto vec = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_array() || j.at(key).size() != 3)
      fail(ErrorKind::data, std::string("placement: '") + key + "' must be a 3-vector");
    const auto v = j.at(key).get<std::vector<double>>();
    return Vec3(v[0], v[1], v[2]);
  };
  PlacementInit p;
  try {
    p.object_transform.rotation = vec("rotation");
    p.object_transform.translation = vec("translation");
    p.object_transform.log_scale = j.at("log_scale").get<double>();
    p.ground_flag = j.at("ground_flag").get<bool>();
    p.human_anchor = vec("human_anchor");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("placement: ") + e.what());
  }
  return p;
}

struct PlacementConventions {
  double halfwidth_ratio = 0.12;   // human half-width / height
  double held_height_ratio = 0.75;  // held object centre height / human height
  double offset_factor = 0.6;
};

// Rotation taking the object's chosen side (object frame: x front, y up,
// z right) to +x, where the human stands.
inline Vec3 facing_rotation(FacingSide side) {
  switch (side) {
    case FacingSide::front: return Vec3::Zero();
    case FacingSide::back: return Vec3(0, kPi, 0);
    case FacingSide::left: return Vec3(0, -0.5 * kPi, 0);
    case FacingSide::right: return Vec3(0, 0.5 * kPi, 0);
    case FacingSide::top: return Vec3(0, 0, -0.5 * kPi);
  }
  return Vec3::Zero();
}

// Unit direction from the human to the object centre, and the axis along
// which the object half-width is measured (-1 for astride).
inline std::pair<Vec3, int> placement_direction(RelativePosition r) {
  switch (r) {
    case RelativePosition::front: return {-Vec3::UnitX(), 0};
    case RelativePosition::behind: return {Vec3::UnitX(), 0};
    case RelativePosition::left: return {Vec3::UnitZ(), 2};
    case RelativePosition::right: return {-Vec3::UnitZ(), 2};
    case RelativePosition::above: return {-Vec3::UnitY(), 1};
    case RelativePosition::below: return {Vec3::UnitY(), 1};
    case RelativePosition::astride: return {Vec3::Zero(), -1};
  }
  return {Vec3::Zero(), -1};
}

inline PlacementInit init_placement(const RelationFeedback& f, const TriMesh& obj,
                                    double human_height, const Vec3& human_anchor = Vec3::Zero(),
                                    const PlacementConventions& conv = {}) {
  if (obj.vertices.empty()) fail(ErrorKind::precondition, "init_placement: object mesh is empty");
  require(human_height > 0.0, "init_placement: human height must be positive");
  PlacementInit out;
  out.human_anchor = human_anchor;
  out.ground_flag = f.state == ObjectState::on_ground;
  RigidScaledTransform& tf = out.object_transform;
  tf.rotation = facing_rotation(f.facing_side);
  const Mat3 R = tf.rotation_matrix();

  Aabb rotated;
  for (const auto& v : obj.vertices) rotated.expand(R * v);
  const Vec3 ext = rotated.extent();
  if (!(ext.minCoeff() >= 0.0) || !(ext.y() > 0.0) || !(ext.maxCoeff() > 0.0))
    fail(ErrorKind::data, "init_placement: degenerate object bounding box");
  const double s = scale_multiplier(f.scale_option) * human_height / ext.y();
  tf.log_scale = std::log(s);

  const auto [dir, axis] = placement_direction(f.relative_position);
  const double human_half = conv.halfwidth_ratio * human_height;
  const double object_half = axis >= 0 ? 0.5 * s * ext[axis] : 0.0;
  const double distance = axis >= 0 ? conv.offset_factor * (human_half + object_half) : 0.0;
  Vec3 centre = human_anchor + distance * dir;
  const Vec3 half = 0.5 * s * ext;
  if (out.ground_flag)
    centre.y() = half.y();
  else
    centre.y() = human_anchor.y() + conv.held_height_ratio * human_height;
  tf.translation = centre - s * rotated.center();
  if (out.ground_flag) {
    // Exact min-y = 0 against the transformed vertices.
    double lo = kInf;
    for (const auto& v : obj.vertices) lo = std::min(lo, tf.apply(v).y());
    tf.translation.y() -= lo;
  }
  return out;
}

}  // namespace afford
