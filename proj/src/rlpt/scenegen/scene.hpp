// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rlpt/common.hpp"

namespace rlpt::scenegen {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator*(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator*=(const Vec3& o) {
    x *= o.x;
    y *= o.y;
    z *= o.z;
    return *this;
  }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    return n > 0 ? *this / n : Vec3{};
  }
  double max_component() const { return std::max(x, std::max(y, z)); }
};

// Polynomial of the frame index: c0 + c1*t + c2*t^2 + ...
struct Poly {
  std::vector<double> coef;
  double eval(double t) const {
    double acc = 0, p = 1;
    for (double c : coef) {
      acc += c * p;
      p *= t;
    }
    return acc;
  }
};

struct Poly3 {
  Poly x, y, z;
  Vec3 eval(double t) const { return {x.eval(t), y.eval(t), z.eval(t)}; }
  static Poly3 constant(Vec3 v) { return {{{v.x}}, {{v.y}}, {{v.z}}}; }
};

// Procedural checkerboard albedo in the world xz plane.
struct Checker {
  Vec3 albedo2;
  double scale = 1.0;
};

struct Material {
  Vec3 albedo;                     // components must stay < 1
  Vec3 emission;                   // >= 0
  double specularity = 0.0;        // probability of a mirror bounce
  std::optional<Checker> checker;  // replaces albedo by parity when set
};

struct SceneObject {
  enum class Kind { kSphere, kBox };
  Kind kind = Kind::kSphere;
  Poly3 center;        // animated center
  double radius = 1;   // spheres
  Vec3 half_extent;    // boxes
  Material material;
  Poly emission_scale;  // optional animated brightness; empty means 1

  Vec3 emission_at(double frame) const {
    if (emission_scale.coef.empty()) return material.emission;
    const double s = std::max(0.0, emission_scale.eval(frame));
    return material.emission * s;
  }

  Vec3 albedo_at(const Vec3& p) const {
    if (!material.checker) return material.albedo;
    const double s = material.checker->scale;
    const long long px = (long long)std::floor(p.x / s);
    const long long pz = (long long)std::floor(p.z / s);
    return ((px + pz) & 1) ? material.checker->albedo2 : material.albedo;
  }
};

struct CameraDesc {
  Poly3 position;
  Poly3 look_at;
  Vec3 up{0, 1, 0};
  double vfov_deg = 45.0;
};

struct Scene {
  std::string name;
  std::vector<SceneObject> objects;
  Vec3 env_radiance;
  CameraDesc camera;

  // Parses the JSON scene document; validates material invariants.
  static Scene from_json_text(const std::string& text);
  std::string to_json_text() const;

  // The four built-in procedural animated scenes plus test fixtures
  // ("furnace", "emitter"). Throws ConfigError on unknown names.
  static Scene builtin(const std::string& name);
  static std::vector<std::string> builtin_names();  // the four dataset scenes
};

// Pinhole camera at one frame.
struct CameraFrame {
  Vec3 origin;
  Vec3 forward, right, up;
  double tan_half_vfov = 0, tan_half_hfov = 0;
  int h = 0, w = 0;

  // Ray through pixel-space point (x right, y down), units of pixels.
  void ray(double px, double py, Vec3& ro, Vec3& rd) const {
    const double ndc_x = 2.0 * px / w - 1.0;
    const double ndc_y = 1.0 - 2.0 * py / h;
    ro = origin;
    rd = (forward + right * (ndc_x * tan_half_hfov) + up * (ndc_y * tan_half_vfov))
             .normalized();
  }

  // Projects a world point to pixel-space coordinates. Returns false for
  // points behind the camera.
  bool project(const Vec3& p, double& px, double& py) const {
    const Vec3 d = p - origin;
    const double z = d.dot(forward);
    if (z <= 1e-9) return false;
    const double ndc_x = d.dot(right) / (z * tan_half_hfov);
    const double ndc_y = d.dot(up) / (z * tan_half_vfov);
    px = (ndc_x + 1.0) * 0.5 * w;
    py = (1.0 - ndc_y) * 0.5 * h;
    return true;
  }
};

CameraFrame make_camera(const Scene& scene, double frame, int h, int w);

// Farthest scene point from the camera at this frame; environment depth
// normalizes to 1 against it.
double scene_far_distance(const Scene& scene, double frame, const Vec3& cam_pos);

}  // namespace rlpt::scenegen
