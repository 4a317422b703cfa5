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

// Shared vocabulary: vector types, the error type, the warning sink, SO(3)
// helpers and the similarity transform used for object placement.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace afford {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Face = std::array<int, 3>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Error categories map onto CLI exit codes (see pipeline.hpp).
enum class ErrorKind { precondition, data, provider, optimization };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::precondition, what);
}

// ---------------------------------------------------------------------------
// Warnings. Library code reports recoverable problems through warn(); the
// default sink writes to stderr. CaptureWarnings redirects the calling
// thread's sink for its lifetime.

namespace diag {

using Sink = std::function<void(const std::string&)>;

inline Sink& thread_sink() {
  thread_local Sink sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(const std::string& msg) {
  if (thread_sink()) thread_sink()(msg);
}

class CaptureWarnings {
 public:
  CaptureWarnings() : previous_(std::move(thread_sink())) {
    thread_sink() = [this](const std::string& msg) { messages_.push_back(msg); };
  }
  ~CaptureWarnings() { thread_sink() = std::move(previous_); }
  CaptureWarnings(const CaptureWarnings&) = delete;
  CaptureWarnings& operator=(const CaptureWarnings&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool any_contains(std::string_view needle) const {
    for (const auto& m : messages_)
      if (m.find(needle) != std::string::npos) return true;
    return false;
  }

 private:
  Sink previous_;
  std::vector<std::string> messages_;
};

}  // namespace diag

// ---------------------------------------------------------------------------
// Small numeric helpers.

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

// FNV-1a over raw bytes; used for config hashes and state digests.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s,
                           std::uint64_t h = 1469598103934665603ull) {
  return fnv1a(s.data(), s.size(), h);
}

inline std::uint64_t fnv1a(std::span<const double> v,
                           std::uint64_t h = 1469598103934665603ull) {
  return fnv1a(v.data(), v.size() * sizeof(double), h);
}

// ---------------------------------------------------------------------------
// SO(3) via the exponential map of axis-angle vectors.

namespace so3 {

inline Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

inline Mat3 exp(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 K = hat(w);
  if (theta2 < 1e-16) return Mat3::Identity() + K + 0.5 * K * K;
  const double theta = std::sqrt(theta2);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * K + b * K * K;
}

// Right Jacobian: exp(w + d) ~= exp(w) exp(J_r(w) d) for small d.
inline Mat3 right_jacobian(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 K = hat(w);
  if (theta2 < 1e-12) return Mat3::Identity() - 0.5 * K + K * K / 6.0;
  const double theta = std::sqrt(theta2);
  const double a = (1.0 - std::cos(theta)) / theta2;
  const double b = (theta - std::sin(theta)) / (theta2 * theta);
  return Mat3::Identity() - a * K + b * K * K;
}

// Gradient of g . (exp(w) v) with respect to w.
inline Vec3 rotate_vjp(const Vec3& w, const Mat3& R, const Vec3& v,
                       const Vec3& g) {
  return right_jacobian(w).transpose() * v.cross(R.transpose() * g);
}

// Same rotation, magnitude folded into [0, pi].
inline Vec3 canonicalize(const Vec3& w) {
  const double theta = w.norm();
  if (theta <= kPi) return w;
  const Vec3 axis = w / theta;
  double reduced = std::fmod(theta, 2.0 * kPi);
  if (reduced > kPi) reduced -= 2.0 * kPi;
  return axis * reduced;
}

// Axis-angle vector of a rotation matrix.
inline Vec3 log(const Mat3& R) {
  const Eigen::AngleAxisd aa(R);
  return aa.axis() * aa.angle();
}

}  // namespace so3

// ---------------------------------------------------------------------------
// Similarity transform x -> exp(log_scale) * R(rotation) * x + translation.

struct RigidScaledTransform {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();
  double log_scale = 0.0;

  double scale() const { return std::exp(log_scale); }
  Mat3 rotation_matrix() const { return so3::exp(rotation); }

  Vec3 apply(const Vec3& p) const {
    return scale() * (rotation_matrix() * p) + translation;
  }
  Vec3 apply_inverse(const Vec3& p) const {
    return rotation_matrix().transpose() * (p - translation) / scale();
  }
  Vec3 rotate(const Vec3& n) const { return rotation_matrix() * n; }

  RigidScaledTransform canonical() const {
    RigidScaledTransform t = *this;
    t.rotation = so3::canonicalize(rotation);
    return t;
  }

  std::array<double, 7> packed() const {
    return {rotation.x(),    rotation.y(),    rotation.z(), translation.x(),
            translation.y(), translation.z(), log_scale};
  }
  static RigidScaledTransform unpacked(std::span<const double> x) {
    RigidScaledTransform t;
    t.rotation = Vec3(x[0], x[1], x[2]);
    t.translation = Vec3(x[3], x[4], x[5]);
    t.log_scale = x[6];
    return t;
  }

  bool operator==(const RigidScaledTransform&) const = default;
};

// Gradient of a scalar with respect to the packed transform, accumulated
// from per-point world-space gradients of transformed points and normals.
struct TransformGradient {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();
  double log_scale = 0.0;

  // g is dL/dp for p = s R q + t.
  void add_point(const RigidScaledTransform& tf, const Mat3& R, const Vec3& q,
                 const Vec3& g) {
    const double s = tf.scale();
    translation += g;
    log_scale += g.dot(s * (R * q));
    rotation += s * so3::rotate_vjp(tf.rotation, R, q, g);
  }
  // g is dL/dn for n = R m.
  void add_normal(const RigidScaledTransform& tf, const Mat3& R, const Vec3& m,
                  const Vec3& g) {
    rotation += so3::rotate_vjp(tf.rotation, R, m, g);
  }

  std::array<double, 7> packed() const {
    return {rotation.x(),    rotation.y(),    rotation.z(), translation.x(),
            translation.y(), translation.z(), log_scale};
  }
};

}  // namespace afford
