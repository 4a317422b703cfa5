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

// Wavefront OBJ (v/f records) and ASCII PLY readers and writers.

#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>

#include "afford/geometry.hpp"

namespace afford {

using Rgb = std::array<std::uint8_t, 3>;

namespace detail {

inline std::string lowercase(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Resolves a 1-based (or negative, relative) OBJ index to 0-based.
inline int obj_index(const std::string& token, std::size_t vertex_count, int line) {
  const std::string head = token.substr(0, token.find('/'));
  int idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stoi(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    fail(ErrorKind::data, "obj line " + std::to_string(line) + ": bad face index '" + token + "'");
  }
  if (idx < 0) return static_cast<int>(vertex_count) + idx;
  return idx - 1;
}

// Drops faces below the degenerate-area threshold, reporting their indices.
inline TriMesh finish_loaded(std::vector<Vec3> verts, std::vector<Face> faces,
                             const std::string& path) {
  if (verts.empty() || faces.empty()) fail(ErrorKind::data, path + ": mesh is empty");
  TriMesh mesh = make_mesh(std::move(verts), std::move(faces));
  std::vector<Face> kept;
  std::vector<std::size_t> dropped;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    if (mesh.face_area(f) < kDegenerateFaceArea)
      dropped.push_back(f);
    else
      kept.push_back(mesh.faces[f]);
  }
  if (!dropped.empty()) {
    std::ostringstream os;
    os << path << ": dropped " << dropped.size() << " degenerate face(s):";
    for (std::size_t i = 0; i < dropped.size() && i < 32; ++i) os << ' ' << dropped[i];
    if (dropped.size() > 32) os << " ...";
    diag::warn(os.str());
    if (kept.empty()) fail(ErrorKind::data, path + ": every face is degenerate");
    mesh.faces = std::move(kept);
    mesh.update_normals();
  }
  return mesh;
}

inline TriMesh read_obj(std::istream& in, const std::string& path) {
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  std::vector<std::vector<std::string>> raw_faces;
  std::vector<int> raw_lines;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z()))
        fail(ErrorKind::data, path + ":" + std::to_string(lineno) + ": bad vertex record");
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<std::string> tokens;
      for (std::string t; ls >> t;) tokens.push_back(t);
      if (tokens.size() < 3)
        fail(ErrorKind::data, path + ":" + std::to_string(lineno) + ": face needs 3 indices");
      raw_faces.push_back(std::move(tokens));
      raw_lines.push_back(lineno);
    }
  }
  // Indices resolve after all vertices are known (relative indices use the
  // running count, which matches the common writer behaviour for files with
  // all vertices first).
  for (std::size_t f = 0; f < raw_faces.size(); ++f) {
    std::vector<int> idx;
    for (const auto& t : raw_faces[f]) idx.push_back(obj_index(t, verts.size(), raw_lines[f]));
    for (std::size_t k = 1; k + 1 < idx.size(); ++k) faces.push_back({idx[0], idx[k], idx[k + 1]});
  }
  return finish_loaded(std::move(verts), std::move(faces), path);
}

inline TriMesh read_ply(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0)
    fail(ErrorKind::data, path + ": missing ply magic");
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> properties;  // "list" entries recorded as "list:<name>"
  };
  std::vector<Element> elements;
  bool ascii = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (tag == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (tag == "property") {
      if (elements.empty()) fail(ErrorKind::data, path + ": property before element");
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type, name;
        ls >> count_type >> item_type >> name;
        elements.back().properties.push_back("list:" + name);
      } else {
        std::string name;
        ls >> name;
        elements.back().properties.push_back(name);
      }
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!ascii) fail(ErrorKind::data, path + ": only ASCII PLY is supported");

  std::vector<Vec3> verts;
  std::vector<Face> faces;
  for (const auto& e : elements) {
    for (std::size_t r = 0; r < e.count; ++r) {
      if (!std::getline(in, line))
        fail(ErrorKind::data, path + ": truncated " + e.name + " element");
      std::istringstream ls(line);
      if (e.name == "vertex") {
        Vec3 p = Vec3::Zero();
        for (const auto& prop : e.properties) {
          double value;
          if (prop.rfind("list:", 0) == 0) {
            std::size_t n;
            ls >> n;
            for (std::size_t k = 0; k < n; ++k) ls >> value;
            continue;
          }
          if (!(ls >> value))
            fail(ErrorKind::data, path + ": bad vertex " + std::to_string(r));
          if (prop == "x") p.x() = value;
          if (prop == "y") p.y() = value;
          if (prop == "z") p.z() = value;
        }
        verts.push_back(p);
      } else if (e.name == "face") {
        for (const auto& prop : e.properties) {
          if (prop == "list:vertex_indices" || prop == "list:vertex_index") {
            std::size_t n = 0;
            ls >> n;
            std::vector<int> idx(n);
            for (auto& v : idx)
              if (!(ls >> v)) fail(ErrorKind::data, path + ": bad face " + std::to_string(r));
            if (n < 3) fail(ErrorKind::data, path + ": face " + std::to_string(r) + " has < 3 indices");
            for (std::size_t k = 1; k + 1 < idx.size(); ++k)
              faces.push_back({idx[0], idx[k], idx[k + 1]});
          } else if (prop.rfind("list:", 0) == 0) {
            std::size_t n;
            double skip;
            ls >> n;
            for (std::size_t k = 0; k < n; ++k) ls >> skip;
          } else {
            double skip;
            ls >> skip;
          }
        }
      }
    }
  }
  return finish_loaded(std::move(verts), std::move(faces), path);
}

}  // namespace detail

inline TriMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot open mesh file " + path.string());
  const std::string ext = detail::lowercase(path.extension().string());
  if (ext == ".obj") return detail::read_obj(in, path.string());
  if (ext == ".ply") return detail::read_ply(in, path.string());
  fail(ErrorKind::data, path.string() + ": unsupported mesh extension '" + ext + "'");
}

inline void write_obj(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

// ASCII PLY; colors, when given, must have one entry per vertex.
inline void write_ply(const TriMesh& mesh, const std::filesystem::path& path,
                      std::span<const Rgb> colors = {}) {
  require(colors.empty() || colors.size() == mesh.vertices.size(),
          "write_ply: color count must match vertex count");
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (!colors.empty()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << mesh.faces.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& v = mesh.vertices[i];
    out << v.x() << ' ' << v.y() << ' ' << v.z();
    if (!colors.empty())
      out << ' ' << int(colors[i][0]) << ' ' << int(colors[i][1]) << ' ' << int(colors[i][2]);
    out << '\n';
  }
  for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

// Point cloud PLY (vertices only), used for affordance heat maps.
inline void write_point_ply(std::span<const Vec3> points, std::span<const Rgb> colors,
                            const std::filesystem::path& path) {
  require(colors.size() == points.size(), "write_point_ply: color count must match point count");
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << points.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < points.size(); ++i)
    out << points[i].x() << ' ' << points[i].y() << ' ' << points[i].z() << ' '
        << int(colors[i][0]) << ' ' << int(colors[i][1]) << ' ' << int(colors[i][2]) << '\n';
}

}  // namespace afford
